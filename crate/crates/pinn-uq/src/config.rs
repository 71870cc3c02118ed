//! Experiment configuration: a single JSON document whose unspecified
//! fields fall back to the built-in problem presets.

use crate::error::{Error, Result};
use crate::hmc::{HmcConfig, LambdaPrior};
use crate::mlp::NetworkSpec;
use crate::oracles::ExactField;
use crate::pde::PdeProblem;
use crate::stats::EvalGrid;
use crate::training::{LambdaInit, TrainConfig};
use crate::Method;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Problem family. The Navier-Stokes problems use the Taylor-Green vortex
/// as built-in ground truth; external data loads through the CSV paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemPreset {
    #[serde(rename = "burgers-forward")]
    BurgersForward,
    #[serde(rename = "ns-forward")]
    NsForward,
    #[serde(rename = "ns-inverse")]
    NsInverse,
}

impl std::fmt::Display for ProblemPreset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProblemPreset::BurgersForward => "burgers-forward",
            ProblemPreset::NsForward => "ns-forward",
            ProblemPreset::NsInverse => "ns-inverse",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub hidden_layers: Option<usize>,
    pub hidden_width: Option<usize>,
    pub dropout_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub n_state: Option<usize>,
    pub n_residual: Option<usize>,
    pub sigma_u: Option<f64>,
    pub sigma_f: Option<f64>,
    /// Load state observations from this CSV instead of generating them.
    pub csv_state: Option<PathBuf>,
    /// Residual collocation points CSV (optional with `csv_state`).
    pub csv_residual: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub iterations: Option<usize>,
    pub learning_rate: Option<f64>,
    pub w_u: Option<f64>,
    pub w_f: Option<f64>,
    pub n_members: Option<usize>,
    pub mcd_passes: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HmcSection {
    pub leapfrog_steps: Option<usize>,
    pub initial_step_size: Option<f64>,
    pub burn_in_steps: Option<usize>,
    pub n_samples: Option<usize>,
    pub prior_sigma: Option<f64>,
    /// Adam iterations used to warm-start the chain (0 = cold start).
    pub warm_start_iterations: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub nx: Option<usize>,
    /// t-resolution for 1-D problems, y-resolution for 2-D slices.
    pub n_second: Option<usize>,
    /// Representative time instant for 2-D slices.
    pub eval_time: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaSection {
    pub init_l1: Option<f64>,
    pub init_l2: Option<f64>,
    pub l1_jitter: Option<f64>,
    pub raw2_jitter: Option<f64>,
}

/// Config-driven experiment description. Serialization round-trips; every
/// unset field resolves to the problem's paper preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemPreset,
    pub method: Method,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub hmc: HmcSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub lambda: LambdaSection,
    /// Time horizon of the Navier-Stokes domain.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// All knobs resolved against the presets.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub problem: PdeProblem,
    pub preset: ProblemPreset,
    pub method: Method,
    pub spec: NetworkSpec,
    pub exact: ExactField,
    pub n_state: usize,
    pub n_residual: usize,
    pub sigma_u: f64,
    pub sigma_f: f64,
    pub csv_state: Option<PathBuf>,
    pub csv_residual: Option<PathBuf>,
    pub train: TrainConfig,
    pub n_members: usize,
    pub mcd_passes: usize,
    pub hmc: HmcConfig,
    pub warm_start_iterations: usize,
    pub grid: EvalGrid,
    pub lambda_init: Option<LambdaInit>,
    pub lambda_prior: Option<LambdaPrior>,
    pub seed: u64,
}

const TG_NU: f64 = 0.01;

impl ExperimentConfig {
    /// A minimal config for one problem/method pair at paper scale.
    pub fn new(problem: ProblemPreset, method: Method) -> Self {
        ExperimentConfig {
            problem,
            method,
            network: NetworkSection::default(),
            dataset: DatasetSection::default(),
            train: TrainSection::default(),
            hmc: HmcSection::default(),
            grid: GridSection::default(),
            lambda: LambdaSection::default(),
            horizon: None,
            seed: 0,
            output_dir: None,
        }
    }

    /// Named presets: `burgers-forward`, `ns-forward`, `ns-inverse` at
    /// paper scale, plus `-desk` variants sized for workstation runs.
    pub fn preset(name: &str, method: Method) -> Result<Self> {
        let mut cfg = match name {
            "burgers-forward" => ExperimentConfig::new(ProblemPreset::BurgersForward, method),
            "ns-forward" => ExperimentConfig::new(ProblemPreset::NsForward, method),
            "ns-inverse" => ExperimentConfig::new(ProblemPreset::NsInverse, method),
            "burgers-forward-desk" => {
                let mut c = ExperimentConfig::new(ProblemPreset::BurgersForward, method);
                c.network.hidden_layers = Some(4);
                c.dataset.n_state = Some(500);
                c.dataset.n_residual = Some(500);
                c.train.n_members = Some(5);
                c.hmc.burn_in_steps = Some(500);
                c
            }
            "ns-forward-desk" => {
                let mut c = ExperimentConfig::new(ProblemPreset::NsForward, method);
                c.network.hidden_layers = Some(4);
                c.dataset.n_state = Some(1000);
                c.dataset.n_residual = Some(500);
                c.train.iterations = Some(3000);
                c.train.n_members = Some(5);
                c.train.mcd_passes = Some(100);
                c.hmc.burn_in_steps = Some(300);
                c.hmc.n_samples = Some(50);
                c
            }
            "ns-inverse-desk" => {
                let mut c = ExperimentConfig::new(ProblemPreset::NsInverse, method);
                c.network.hidden_layers = Some(6);
                c.dataset.n_state = Some(1000);
                c.dataset.n_residual = Some(500);
                c.dataset.sigma_u = Some(0.05);
                c.dataset.sigma_f = Some(0.05);
                c.train.iterations = Some(4000);
                c.train.n_members = Some(5);
                c.train.mcd_passes = Some(100);
                c.hmc.burn_in_steps = Some(300);
                c.hmc.n_samples = Some(50);
                c
            }
            other => {
                return Err(Error::Usage(format!(
                    "unknown preset {other:?} (burgers-forward[-desk], ns-forward[-desk], \
                     ns-inverse[-desk])"
                )))
            }
        };
        if name.ends_with("-desk") {
            cfg.hmc.warm_start_iterations = Some(2000);
        }
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Usage(format!("bad config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Resolves every unset field against the paper presets.
    pub fn resolve(&self) -> Result<Resolved> {
        let horizon = self.horizon.unwrap_or(2.0);
        let inverse = self.problem == ProblemPreset::NsInverse;
        let (problem, exact, base_spec, n_state_d, n_members_d, passes_d, hmc_d) =
            match self.problem {
                ProblemPreset::BurgersForward => (
                    PdeProblem::burgers(),
                    ExactField::ColeHopf,
                    NetworkSpec::burgers_forward(),
                    2000,
                    100,
                    100,
                    HmcConfig::burgers(),
                ),
                ProblemPreset::NsForward => (
                    PdeProblem::navier_stokes(horizon),
                    ExactField::TaylorGreen { nu: TG_NU },
                    NetworkSpec::ns_forward(horizon),
                    5000,
                    200,
                    200,
                    HmcConfig::navier_stokes(),
                ),
                ProblemPreset::NsInverse => (
                    PdeProblem::navier_stokes(horizon),
                    ExactField::TaylorGreen { nu: TG_NU },
                    NetworkSpec::ns_inverse(horizon),
                    5000,
                    200,
                    200,
                    HmcConfig::navier_stokes(),
                ),
            };
        let mut spec = base_spec;
        if let Some(l) = self.network.hidden_layers {
            spec.hidden_layers = l;
        }
        if let Some(w) = self.network.hidden_width {
            spec.hidden_width = w;
        }
        spec.dropout_rate = match (self.method, self.network.dropout_rate) {
            (_, Some(r)) => r,
            (Method::McDropout, None) => 0.01,
            _ => 0.0,
        };
        spec.validate()?;
        if self.method == Method::McDropout && spec.dropout_rate == 0.0 {
            return Err(Error::Usage(
                "MC dropout needs a positive dropout rate".into(),
            ));
        }
        let train = TrainConfig {
            iterations: self.train.iterations.unwrap_or(5000),
            learning_rate: self.train.learning_rate.unwrap_or(1e-3),
            w_u: self.train.w_u.unwrap_or(1.0),
            w_f: self.train.w_f.unwrap_or(1.0),
            seed: self.seed,
            ..TrainConfig::default()
        };
        train.validate()?;
        let mut hmc = hmc_d;
        if let Some(v) = self.hmc.leapfrog_steps {
            hmc.leapfrog_steps = v;
        }
        if let Some(v) = self.hmc.initial_step_size {
            hmc.initial_step_size = v;
        }
        if let Some(v) = self.hmc.burn_in_steps {
            hmc.burn_in_steps = v;
        }
        if let Some(v) = self.hmc.n_samples {
            hmc.n_samples = v;
        }
        if let Some(v) = self.hmc.prior_sigma {
            hmc.prior_sigma = v;
        }
        hmc.seed = self.seed;
        hmc.validate()?;
        let n_state = self.dataset.n_state.unwrap_or(n_state_d);
        let grid = match self.problem {
            ProblemPreset::BurgersForward => {
                let nx = self.grid.nx.unwrap_or(256);
                let nt = self.grid.n_second.unwrap_or(100);
                EvalGrid::SpaceTime1D {
                    xs: crate::stats::linspace(-1.0, 1.0, nx),
                    ts: crate::stats::linspace(0.0, 1.0, nt),
                }
            }
            _ => {
                let nx = self.grid.nx.unwrap_or(100);
                let ny = self.grid.n_second.unwrap_or(50);
                let t = self.grid.eval_time.unwrap_or(0.5 * horizon);
                EvalGrid::SpaceAtTime2D {
                    xs: crate::stats::linspace(problem.lo[0], problem.hi[0], nx),
                    ys: crate::stats::linspace(problem.lo[1], problem.hi[1], ny),
                    t,
                }
            }
        };
        let lambda_init = inverse.then(|| LambdaInit {
            l1: self.lambda.init_l1.unwrap_or(1.0),
            l2: self.lambda.init_l2.unwrap_or(0.05),
            l1_jitter: self.lambda.l1_jitter.unwrap_or(0.05),
            raw2_jitter: self.lambda.raw2_jitter.unwrap_or(0.25),
        });
        Ok(Resolved {
            problem,
            preset: self.problem,
            method: self.method,
            spec,
            exact,
            n_state,
            n_residual: self.dataset.n_residual.unwrap_or(n_state),
            sigma_u: self.dataset.sigma_u.unwrap_or(0.1),
            sigma_f: self.dataset.sigma_f.unwrap_or(0.1),
            csv_state: self.dataset.csv_state.clone(),
            csv_residual: self.dataset.csv_residual.clone(),
            train,
            n_members: self.train.n_members.unwrap_or(n_members_d),
            mcd_passes: self.train.mcd_passes.unwrap_or(passes_d),
            hmc,
            warm_start_iterations: self.hmc.warm_start_iterations.unwrap_or(0),
            grid,
            lambda_init,
            lambda_prior: inverse.then(LambdaPrior::default),
            seed: self.seed,
        })
    }
}
