//! Training backends: full-batch Adam on the PINN loss, deep-ensemble
//! construction, and Monte-Carlo-dropout prediction.

pub mod loss;

pub use loss::{pinn_loss, LambdaMode, MisfitEvaluator, TapedLoss, CHUNK};

use crate::error::{Error, Result};
use crate::mlp::{forward, init_params, DropoutMask, NetworkSpec, ParameterVector};
use crate::oracles::SensorDataset;
use crate::pde::PdeProblem;
use crate::rng::{rng, Stream};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Full-batch Adam settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Loss weights (w_u, w_f).
    pub w_u: f64,
    pub w_f: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 5000,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            w_u: 1.0,
            w_f: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Usage("iterations must be positive".into()));
        }
        if self.w_u <= 0.0 || self.w_f < 0.0 {
            return Err(Error::Usage("loss weights must be positive".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Usage("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the training loss trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss_total: f64,
    pub loss_u: f64,
    pub loss_f: f64,
}

/// Loss-trace CSV: `iteration,loss_total,loss_u,loss_f`.
pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("iteration,loss_total,loss_u,loss_f\n");
    for r in trace {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.iteration, r.loss_total, r.loss_u, r.loss_f
        ));
    }
    out
}

/// Trained parameters plus the per-iteration loss trace.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: ParameterVector,
    pub trace: Vec<TraceRow>,
}

/// First-moment/second-moment Adam state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    pub fn new(dim: usize, config: &TrainConfig) -> Self {
        Adam {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
        }
    }

    /// One bias-corrected update in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Full-batch Adam on the PINN loss. When `init` is absent the network is
/// Glorot-initialized from `rng`; an extended init vector (+2 slots) turns
/// on joint PDE-parameter training. Networks with a positive dropout rate
/// draw a fresh mask from `rng` every iteration.
pub fn train_adam(
    spec: &NetworkSpec,
    dataset: &SensorDataset,
    problem: &PdeProblem,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    init: Option<ParameterVector>,
) -> Result<TrainResult> {
    config.validate()?;
    spec.validate()?;
    let mut params = match init {
        Some(p) => p,
        None => init_params(spec, rng),
    };
    let lambda_mode = LambdaMode::of(spec, params.len())?;
    let n_u = (dataset.state_obs.len() * problem.observed_dim()) as f64;
    let n_f = (dataset.residual_points.len().max(1) * problem.residual_dim()) as f64;
    let evaluator = MisfitEvaluator::new(
        spec,
        problem,
        dataset,
        config.w_u / n_u,
        config.w_f / n_f,
        lambda_mode,
    )?;
    let mut adam = Adam::new(params.len(), config);
    let mut grad = vec![0.0; params.len()];
    let mut trace = Vec::with_capacity(config.iterations);
    let use_dropout = spec.dropout_rate > 0.0;
    for it in 0..config.iterations {
        let mask = if use_dropout {
            Some(DropoutMask::generate(spec, rng.random::<u64>()))
        } else {
            None
        };
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (loss_u, loss_f) = evaluator.eval_grad(&params.0, mask.as_ref(), &mut grad)?;
        let total = loss_u + loss_f;
        if !total.is_finite() {
            return Err(Error::Numeric {
                stage: "train_adam".into(),
                detail: format!("non-finite loss {total} at iteration {it}"),
            });
        }
        trace.push(TraceRow {
            iteration: it,
            loss_total: total,
            loss_u,
            loss_f,
        });
        adam.step(&mut params.0, &grad);
    }
    Ok(TrainResult { params, trace })
}

/// Per-member PDE-parameter initialization for inverse training: member k
/// starts at (l1 + l1_jitter * z1, softplus^-1(l2) + raw2_jitter * z2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaInit {
    pub l1: f64,
    pub l2: f64,
    pub l1_jitter: f64,
    pub raw2_jitter: f64,
}

impl LambdaInit {
    pub fn exact(l1: f64, l2: f64) -> Self {
        LambdaInit {
            l1,
            l2,
            l1_jitter: 0.0,
            raw2_jitter: 0.0,
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let raw2 = crate::inverse::softplus_inv(self.l2) + self.raw2_jitter * z2;
        (self.l1 + self.l1_jitter * z1, crate::inverse::softplus(raw2))
    }
}

/// Independently initialized and trained networks; the spread across
/// members carries the predictive uncertainty.
#[derive(Debug, Clone)]
pub struct EnsembleModel {
    pub spec: NetworkSpec,
    pub members: Vec<ParameterVector>,
    pub member_seeds: Vec<u64>,
    pub traces: Vec<Vec<TraceRow>>,
}

/// Trains `n_members` networks with identical config but distinct
/// initialization streams (members run concurrently). `lambda_init`
/// switches on joint PDE-parameter training.
pub fn train_deep_ensemble(
    spec: &NetworkSpec,
    dataset: &SensorDataset,
    problem: &PdeProblem,
    config: &TrainConfig,
    n_members: usize,
    lambda_init: Option<LambdaInit>,
) -> Result<EnsembleModel> {
    if n_members == 0 {
        return Err(Error::Usage("ensemble needs at least one member".into()));
    }
    let member_seeds: Vec<u64> = (0..n_members as u32)
        .map(|k| config.seed.wrapping_add(u64::from(k)))
        .collect();
    let results: Vec<Result<TrainResult>> = (0..n_members)
        .into_par_iter()
        .map(|k| {
            let mut member_rng = rng(config.seed, Stream::Member(k as u32));
            let init = match lambda_init {
                None => None,
                Some(li) => {
                    let theta = init_params(spec, &mut member_rng);
                    let lambda = li.draw(&mut member_rng);
                    Some(crate::inverse::extend_parameters(&theta, lambda))
                }
            };
            train_adam(spec, dataset, problem, config, &mut member_rng, init)
        })
        .collect();
    let mut members = Vec::with_capacity(n_members);
    let mut traces = Vec::with_capacity(n_members);
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(tr) => {
                members.push(tr.params);
                traces.push(tr.trace);
            }
            Err(e) => {
                return Err(Error::Numeric {
                    stage: format!("ensemble member {k}"),
                    detail: e.to_string(),
                })
            }
        }
    }
    Ok(EnsembleModel {
        spec: spec.clone(),
        members,
        member_seeds,
        traces,
    })
}

/// A dropout-trained network predicting with dropout still active.
#[derive(Debug, Clone)]
pub struct McdModel {
    pub spec: NetworkSpec,
    pub params: ParameterVector,
    pub dropout_rate: f64,
    pub trace: Vec<TraceRow>,
}

impl McdModel {
    pub fn train(
        spec: &NetworkSpec,
        dataset: &SensorDataset,
        problem: &PdeProblem,
        config: &TrainConfig,
        lambda_init: Option<LambdaInit>,
    ) -> Result<McdModel> {
        let mut r = rng(config.seed, Stream::DropoutTrain);
        let init = match lambda_init {
            None => None,
            Some(li) => {
                let theta = init_params(spec, &mut r);
                let lambda = li.draw(&mut r);
                Some(crate::inverse::extend_parameters(&theta, lambda))
            }
        };
        let tr = train_adam(spec, dataset, problem, config, &mut r, init)?;
        Ok(McdModel {
            spec: spec.clone(),
            params: tr.params,
            dropout_rate: spec.dropout_rate,
            trace: tr.trace,
        })
    }
}

/// Stochastic predictions as a dense array: `values[(r * n_points + p) *
/// n_out + o]` is realization r at point p, output o.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleArray {
    pub values: Vec<f64>,
    pub n_real: usize,
    pub n_points: usize,
    pub n_out: usize,
}

impl SampleArray {
    pub fn zeros(n_real: usize, n_points: usize, n_out: usize) -> Self {
        SampleArray {
            values: vec![0.0; n_real * n_points * n_out],
            n_real,
            n_points,
            n_out,
        }
    }

    #[inline]
    pub fn at(&self, real: usize, point: usize, out: usize) -> f64 {
        self.values[(real * self.n_points + point) * self.n_out + out]
    }

    #[inline]
    pub fn set(&mut self, real: usize, point: usize, out: usize, v: f64) {
        self.values[(real * self.n_points + point) * self.n_out + out] = v;
    }
}

/// `n_passes` stochastic forward passes over `coords`, one fresh mask per
/// pass (the mask is shared by all points within a pass).
pub fn mcd_predict_samples(
    model: &McdModel,
    coords: &[Vec<f64>],
    n_passes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SampleArray> {
    if n_passes == 0 {
        return Err(Error::Usage("n_passes must be positive".into()));
    }
    let n_out = model.spec.output_dim;
    let mut arr = SampleArray::zeros(n_passes, coords.len(), n_out);
    for pass in 0..n_passes {
        let mask = DropoutMask::generate(&model.spec, rng.random::<u64>());
        let rows: Vec<Result<Vec<f64>>> = coords
            .par_iter()
            .map(|c| forward(&model.spec, &model.params.0, c, Some(&mask)))
            .collect();
        for (p, row) in rows.into_iter().enumerate() {
            for (o, v) in row?.into_iter().enumerate() {
                arr.set(pass, p, o, v);
            }
        }
    }
    Ok(arr)
}
