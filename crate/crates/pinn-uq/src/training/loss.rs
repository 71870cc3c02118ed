//! PINN loss assembly on the tape, plus a chunk-parallel evaluator used by
//! the optimizer and the sampler.
//!
//! Chunks are a fixed size and reduced in chunk order, so gradients do not
//! depend on how many worker threads run.

use crate::autodiff::{forward_jet_taped_masked, forward_taped, NodeId, Tape};
use crate::error::{Error, Result};
use crate::mlp::{DropoutMask, NetworkSpec};
use crate::oracles::{Observation, SensorDataset};
use crate::pde::{
    burgers_residual_taped, navier_stokes_residual_taped, LambdaNodes, PdeKind, PdeProblem,
};
use rayon::prelude::*;

/// Fixed data-chunk size of the parallel evaluator. Changing it changes
/// floating-point summation order, so it is part of the numeric contract.
pub const CHUNK: usize = 16;

/// Whether the PDE parameters live on the tape (two trailing leaves) or are
/// fixed problem constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaMode {
    Fixed,
    Free,
}

impl LambdaMode {
    /// Derives the mode from the parameter vector length.
    pub fn of(spec: &NetworkSpec, n_params: usize) -> Result<LambdaMode> {
        let base = spec.param_count();
        if n_params == base {
            Ok(LambdaMode::Fixed)
        } else if n_params == base + 2 {
            Ok(LambdaMode::Free)
        } else {
            Err(Error::Dimension(format!(
                "parameter vector length {n_params} matches neither {base} nor {}",
                base + 2
            )))
        }
    }

    fn nodes(self, tape: &mut Tape, problem: &PdeProblem, base: usize) -> LambdaNodes {
        match self {
            LambdaMode::Fixed => LambdaNodes::Fixed(problem.lambda.0, problem.lambda.1),
            LambdaMode::Free => {
                let l1 = base as NodeId;
                let l2 = tape.softplus((base + 1) as NodeId);
                LambdaNodes::Nodes(l1, l2)
            }
        }
    }
}

/// Records the sum of squared state misfits for a slice of observations.
pub(crate) fn record_state_misfit(
    tape: &mut Tape,
    spec: &NetworkSpec,
    obs: &[Observation],
    mask: Option<&DropoutMask>,
) -> Result<NodeId> {
    let mut diffs = Vec::with_capacity(obs.len() * obs.first().map_or(1, |o| o.values.len()));
    for o in obs {
        let pred = forward_taped(tape, spec, &o.coords, mask)?;
        for (k, target) in o.values.iter().enumerate() {
            let t = tape.constant(*target);
            diffs.push(tape.sub(pred[k], t));
        }
    }
    Ok(tape.sum_of_squares(&diffs))
}

/// Records the sum of squared PDE residuals for a slice of collocation
/// points. Residual targets are zero.
pub(crate) fn record_residual_misfit(
    tape: &mut Tape,
    spec: &NetworkSpec,
    problem: &PdeProblem,
    points: &[Vec<f64>],
    lambda_mode: LambdaMode,
    mask: Option<&DropoutMask>,
) -> Result<NodeId> {
    let second = problem.second_indices();
    let lambda = lambda_mode.nodes(tape, problem, spec.param_count());
    let mut comps = Vec::with_capacity(points.len() * problem.residual_dim());
    for p in points {
        let jet = forward_jet_taped_masked(tape, spec, p, &second, mask)?;
        let r = match problem.kind {
            PdeKind::Burgers1D => burgers_residual_taped(tape, &jet)?,
            PdeKind::NavierStokes2D => navier_stokes_residual_taped(tape, &jet, lambda)?,
        };
        comps.extend(r);
    }
    Ok(tape.sum_of_squares(&comps))
}

/// A scalar loss recorded on its own tape.
pub struct TapedLoss {
    pub tape: Tape,
    pub node: NodeId,
    pub loss_u: f64,
    pub loss_f: f64,
}

impl TapedLoss {
    pub fn value(&self) -> f64 {
        self.tape.value(self.node)
    }

    pub fn grad(&self) -> Result<Vec<f64>> {
        self.tape.backward(self.node)
    }
}

/// L = w_u * MSE(state predictions vs observations)
///   + w_f * MSE(residuals vs 0), recorded on one tape.
///
/// In inverse mode `params` carries the two PDE-parameter slots and the
/// residual picks its lambda off the tape.
pub fn pinn_loss(
    spec: &NetworkSpec,
    params: &[f64],
    dataset: &SensorDataset,
    problem: &PdeProblem,
    weights: (f64, f64),
    mask: Option<&DropoutMask>,
) -> Result<TapedLoss> {
    dataset.validate(problem)?;
    let lambda_mode = LambdaMode::of(spec, params.len())?;
    let (w_u, w_f) = weights;
    let mut tape = Tape::with_leaves(params);
    let n_u = (dataset.state_obs.len() * problem.observed_dim()) as f64;
    let su = record_state_misfit(&mut tape, spec, &dataset.state_obs, mask)?;
    let loss_u = tape.scale(su, w_u / n_u);
    let node = if dataset.residual_points.is_empty() || w_f == 0.0 {
        loss_u
    } else {
        let n_f = (dataset.residual_points.len() * problem.residual_dim()) as f64;
        let sf = record_residual_misfit(
            &mut tape,
            spec,
            problem,
            &dataset.residual_points,
            lambda_mode,
            mask,
        )?;
        let loss_f = tape.scale(sf, w_f / n_f);
        tape.add(loss_u, loss_f)
    };
    let loss_u_val = tape.value(loss_u);
    let total = tape.value(node);
    Ok(TapedLoss {
        tape,
        node,
        loss_u: loss_u_val,
        loss_f: total - loss_u_val,
    })
}

enum Work {
    Obs(usize, usize),
    Res(usize, usize),
}

/// Data-parallel evaluator of
/// `data_coeff * sum(state misfit^2) + res_coeff * sum(residual^2)` and its
/// parameter gradient. Both the training loss and the log-likelihood are
/// instances (they differ only in the two coefficients).
pub struct MisfitEvaluator<'a> {
    pub spec: &'a NetworkSpec,
    pub problem: &'a PdeProblem,
    pub dataset: &'a SensorDataset,
    pub data_coeff: f64,
    pub res_coeff: f64,
    pub lambda_mode: LambdaMode,
}

impl<'a> MisfitEvaluator<'a> {
    pub fn new(
        spec: &'a NetworkSpec,
        problem: &'a PdeProblem,
        dataset: &'a SensorDataset,
        data_coeff: f64,
        res_coeff: f64,
        lambda_mode: LambdaMode,
    ) -> Result<Self> {
        dataset.validate(problem)?;
        if lambda_mode == LambdaMode::Free && problem.kind == PdeKind::Burgers1D {
            return Err(Error::Usage(
                "joint PDE-parameter inference is only defined for Navier-Stokes".into(),
            ));
        }
        Ok(MisfitEvaluator {
            spec,
            problem,
            dataset,
            data_coeff,
            res_coeff,
            lambda_mode,
        })
    }

    pub fn n_params(&self) -> usize {
        match self.lambda_mode {
            LambdaMode::Fixed => self.spec.param_count(),
            LambdaMode::Free => self.spec.param_count() + 2,
        }
    }

    /// Evaluates (data part, residual part) at `params`, accumulating the
    /// gradient of their sum into `grad` (which the caller zeroes).
    pub fn eval_grad(
        &self,
        params: &[f64],
        mask: Option<&DropoutMask>,
        grad: &mut [f64],
    ) -> Result<(f64, f64)> {
        if params.len() != self.n_params() || grad.len() != params.len() {
            return Err(Error::Dimension(format!(
                "evaluator expects {} parameters, got {} (grad {})",
                self.n_params(),
                params.len(),
                grad.len()
            )));
        }
        let mut work = Vec::new();
        let n_obs = self.dataset.state_obs.len();
        for start in (0..n_obs).step_by(CHUNK) {
            work.push(Work::Obs(start, (start + CHUNK).min(n_obs)));
        }
        if self.res_coeff != 0.0 {
            let n_res = self.dataset.residual_points.len();
            for start in (0..n_res).step_by(CHUNK) {
                work.push(Work::Res(start, (start + CHUNK).min(n_res)));
            }
        }
        thread_local! {
            static SCRATCH: std::cell::RefCell<(Tape, Vec<f64>)> =
                std::cell::RefCell::new((Tape::new(), Vec::new()));
        }
        let results: Vec<Result<(f64, f64, Vec<f64>)>> = work
            .par_iter()
            .map(|w| {
                SCRATCH.with(|cell| {
                    let (tape, adjoint) = &mut *cell.borrow_mut();
                    tape.reset(params);
                    let (data, res, node) = match *w {
                        Work::Obs(a, b) => {
                            let s = record_state_misfit(
                                tape,
                                self.spec,
                                &self.dataset.state_obs[a..b],
                                mask,
                            )?;
                            let scaled = tape.scale(s, self.data_coeff);
                            (tape.value(scaled), 0.0, scaled)
                        }
                        Work::Res(a, b) => {
                            let s = record_residual_misfit(
                                tape,
                                self.spec,
                                self.problem,
                                &self.dataset.residual_points[a..b],
                                self.lambda_mode,
                                mask,
                            )?;
                            let scaled = tape.scale(s, self.res_coeff);
                            (0.0, tape.value(scaled), scaled)
                        }
                    };
                    let mut g = vec![0.0; params.len()];
                    tape.backward_into(node, adjoint, &mut g)?;
                    Ok((data, res, g))
                })
            })
            .collect();
        let mut data_part = 0.0;
        let mut res_part = 0.0;
        for r in results {
            let (d, rp, g) = r?;
            data_part += d;
            res_part += rp;
            for (acc, gi) in grad.iter_mut().zip(&g) {
                *acc += gi;
            }
        }
        Ok((data_part, res_part))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::central_diff_grad;
    use crate::inverse::softplus;
    use crate::mlp::init_params;
    use crate::oracles::{generate_sensor_dataset, ExactField};
    use crate::rng::{rng, Stream};

    fn small_burgers_setup() -> (NetworkSpec, PdeProblem, SensorDataset) {
        let spec = NetworkSpec::new(2, 1, 2, 5).with_input_window(&[-1.0, 0.0], &[1.0, 1.0]);
        let problem = PdeProblem::burgers();
        let dataset = generate_sensor_dataset(
            &problem,
            &ExactField::ColeHopf,
            8,
            6,
            0.1,
            0.1,
            42,
        )
        .unwrap();
        (spec, problem, dataset)
    }

    #[test]
    fn weight_doubling_doubles_data_term() {
        let (spec, problem, ds) = small_burgers_setup();
        let p = init_params(&spec, &mut rng(1, Stream::Init));
        let l1 = pinn_loss(&spec, &p.0, &ds, &problem, (1.0, 1.0), None).unwrap();
        let l2 = pinn_loss(&spec, &p.0, &ds, &problem, (2.0, 1.0), None).unwrap();
        let mse_u = l1.loss_u;
        assert!((l2.value() - l1.value() - mse_u).abs() < 1e-12);
        assert!((l2.loss_u - 2.0 * l1.loss_u).abs() < 1e-12);
        assert!((l2.loss_f - l1.loss_f).abs() < 1e-12);
    }

    #[test]
    fn zero_residual_weight_reduces_to_regression() {
        let (spec, problem, ds) = small_burgers_setup();
        let p = init_params(&spec, &mut rng(2, Stream::Init));
        let l = pinn_loss(&spec, &p.0, &ds, &problem, (1.0, 0.0), None).unwrap();
        assert_eq!(l.loss_f, 0.0);
        // matches a direct MSE computation
        let mut mse = 0.0;
        for o in &ds.state_obs {
            let pred = crate::mlp::forward(&spec, &p.0, &o.coords, None).unwrap();
            mse += (pred[0] - o.values[0]).powi(2);
        }
        mse /= ds.state_obs.len() as f64;
        assert!((l.value() - mse).abs() < 1e-12);
    }

    #[test]
    fn perfect_params_on_noiseless_data_give_zero_loss() {
        // constant-zero network reproduces the u == 0 "solution" exactly
        let spec = NetworkSpec::new(2, 1, 2, 4);
        let problem = PdeProblem::burgers();
        let params = vec![0.0; spec.param_count()];
        let dataset = SensorDataset {
            state_obs: vec![
                Observation {
                    coords: vec![0.3, 0.2],
                    values: vec![0.0],
                },
                Observation {
                    coords: vec![-0.5, 0.8],
                    values: vec![0.0],
                },
            ],
            residual_points: vec![vec![0.1, 0.5], vec![-0.7, 0.9]],
            noise_sigma_u: 0.0,
            noise_sigma_f: 0.0,
            seed: 0,
        };
        let l = pinn_loss(&spec, &params, &dataset, &problem, (1.0, 1.0), None).unwrap();
        assert_eq!(l.value(), 0.0);
    }

    #[test]
    fn empty_dataset_is_error() {
        let spec = NetworkSpec::new(2, 1, 1, 2);
        let problem = PdeProblem::burgers();
        let dataset = SensorDataset {
            state_obs: vec![],
            residual_points: vec![],
            noise_sigma_u: 0.1,
            noise_sigma_f: 0.1,
            seed: 0,
        };
        let params = vec![0.0; spec.param_count()];
        assert!(pinn_loss(&spec, &params, &dataset, &problem, (1.0, 1.0), None).is_err());
    }

    #[test]
    fn taped_loss_gradient_passes_fd() {
        let (spec, problem, ds) = small_burgers_setup();
        let p = init_params(&spec, &mut rng(3, Stream::Init));
        let l = pinn_loss(&spec, &p.0, &ds, &problem, (1.0, 1.0), None).unwrap();
        let grad = l.grad().unwrap();
        let numeric = central_diff_grad(
            |theta: &[f64]| {
                pinn_loss(&spec, theta, &ds, &problem, (1.0, 1.0), None)
                    .unwrap()
                    .value()
            },
            &p.0,
            1e-4,
        );
        for (g, n) in grad.iter().zip(&numeric) {
            assert!((g - n).abs() / (g.abs() + 1e-8) < 1e-5, "{g} vs {n}");
        }
    }

    #[test]
    fn evaluator_matches_single_tape_loss() {
        let (spec, problem, ds) = small_burgers_setup();
        let p = init_params(&spec, &mut rng(4, Stream::Init));
        let n_u = (ds.state_obs.len() * problem.observed_dim()) as f64;
        let n_f = (ds.residual_points.len() * problem.residual_dim()) as f64;
        let ev = MisfitEvaluator::new(&spec, &problem, &ds, 1.0 / n_u, 1.0 / n_f, LambdaMode::Fixed)
            .unwrap();
        let mut grad = vec![0.0; ev.n_params()];
        let (d, r) = ev.eval_grad(&p.0, None, &mut grad).unwrap();
        let l = pinn_loss(&spec, &p.0, &ds, &problem, (1.0, 1.0), None).unwrap();
        assert!((d + r - l.value()).abs() < 1e-12);
        let g2 = l.grad().unwrap();
        for (a, b) in grad.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn inverse_mode_lambda_slots_receive_gradient() {
        let spec = NetworkSpec::new(3, 3, 2, 5);
        let problem = PdeProblem::navier_stokes(1.0);
        let ds = generate_sensor_dataset(
            &problem,
            &ExactField::TaylorGreen { nu: 0.01 },
            6,
            6,
            0.05,
            0.05,
            7,
        )
        .unwrap();
        let theta = init_params(&spec, &mut rng(5, Stream::Init));
        let ext = crate::inverse::extend_parameters(&theta, (0.8, 0.02));
        let l = pinn_loss(&spec, &ext.0, &ds, &problem, (1.0, 1.0), None).unwrap();
        let grad = l.grad().unwrap();
        let n = spec.param_count();
        assert!(grad[n].abs() > 0.0, "lambda1 slot gradient is zero");
        assert!(grad[n + 1].abs() > 0.0, "lambda2 slot gradient is zero");
        // finite-difference check on the two lambda slots
        let numeric = central_diff_grad(
            |theta: &[f64]| {
                pinn_loss(&spec, theta, &ds, &problem, (1.0, 1.0), None)
                    .unwrap()
                    .value()
            },
            &ext.0,
            1e-5,
        );
        for k in [n, n + 1] {
            assert!(
                (grad[k] - numeric[k]).abs() / (grad[k].abs() + 1e-8) < 1e-5,
                "slot {k}: {} vs {}",
                grad[k],
                numeric[k]
            );
        }
        // softplus keeps lambda2 positive whatever the raw slot holds
        assert!(softplus(ext.0[n + 1]) > 0.0);
    }

    #[test]
    fn masked_loss_gradient_passes_fd() {
        let (spec, problem, ds) = small_burgers_setup();
        let spec = NetworkSpec {
            dropout_rate: 0.2,
            ..spec
        };
        let p = init_params(&spec, &mut rng(6, Stream::Init));
        let mask = DropoutMask::generate(&spec, 55);
        let l = pinn_loss(&spec, &p.0, &ds, &problem, (1.0, 1.0), Some(&mask)).unwrap();
        let grad = l.grad().unwrap();
        let numeric = central_diff_grad(
            |theta: &[f64]| {
                pinn_loss(&spec, theta, &ds, &problem, (1.0, 1.0), Some(&mask))
                    .unwrap()
                    .value()
            },
            &p.0,
            1e-4,
        );
        for (g, n) in grad.iter().zip(&numeric) {
            assert!((g - n).abs() / (g.abs() + 1e-6) < 1e-4, "{g} vs {n}");
        }
    }
}
