//! Hamiltonian Monte Carlo over flat parameter vectors: leapfrog
//! integration with a unit mass matrix, Metropolis correction, and
//! multiplicative step-size adaptation during burn-in.

use crate::error::{Error, Result};
use crate::inverse::{lambda_of, softplus_inv};
use crate::mlp::{NetworkSpec, ParameterVector};
use crate::oracles::SensorDataset;
use crate::pde::PdeProblem;
use crate::training::loss::{
    record_residual_misfit, record_state_misfit, LambdaMode, MisfitEvaluator,
};
use crate::Method;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Sampler settings. `initial_step_size` adapts multiplicatively during
/// burn-in (x1.1 when the running acceptance sits above the target range,
/// x0.9 below it) and freezes afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmcConfig {
    pub leapfrog_steps: usize,
    pub initial_step_size: f64,
    pub burn_in_steps: usize,
    pub n_samples: usize,
    pub target_accept_range: (f64, f64),
    pub prior_sigma: f64,
    pub seed: u64,
}

impl HmcConfig {
    /// Burgers preset: leapfrog 50, step 0.1, burn-in 1000, 100 samples.
    pub fn burgers() -> Self {
        HmcConfig {
            leapfrog_steps: 50,
            initial_step_size: 0.1,
            burn_in_steps: 1000,
            n_samples: 100,
            target_accept_range: (0.6, 0.9),
            prior_sigma: 1.0,
            seed: 0,
        }
    }

    /// Navier-Stokes preset: leapfrog 50, step 0.01, burn-in 5000,
    /// 100 samples.
    pub fn navier_stokes() -> Self {
        HmcConfig {
            leapfrog_steps: 50,
            initial_step_size: 0.01,
            burn_in_steps: 5000,
            n_samples: 100,
            target_accept_range: (0.6, 0.9),
            prior_sigma: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.leapfrog_steps == 0 || self.n_samples == 0 {
            return Err(Error::Usage(
                "leapfrog_steps and n_samples must be positive".into(),
            ));
        }
        if self.initial_step_size <= 0.0 || self.prior_sigma <= 0.0 {
            return Err(Error::Usage(
                "step size and prior sigma must be positive".into(),
            ));
        }
        let (lo, hi) = self.target_accept_range;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::Usage("bad target acceptance range".into()));
        }
        Ok(())
    }
}

/// Ordered post-burn-in draws plus chain diagnostics.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    pub samples: Vec<ParameterVector>,
    pub acceptance_rate: f64,
    pub burn_in_acceptance_rate: f64,
    pub final_step_size: f64,
    pub divergences: usize,
    pub method: Method,
    /// (l1, l2) per sample in inverse mode.
    pub lambda_samples: Option<Vec<(f64, f64)>>,
}

/// Chain diagnostics serialized next to the sample file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainStats {
    pub n_samples: usize,
    pub acceptance_rate: f64,
    pub burn_in_acceptance_rate: f64,
    pub final_step_size: f64,
    pub divergences: usize,
}

impl PosteriorSamples {
    pub fn stats(&self) -> ChainStats {
        ChainStats {
            n_samples: self.samples.len(),
            acceptance_rate: self.acceptance_rate,
            burn_in_acceptance_rate: self.burn_in_acceptance_rate,
            final_step_size: self.final_step_size,
            divergences: self.divergences,
        }
    }
}

/// An unnormalized log density with gradient. Non-finite values signal
/// divergence to the sampler.
pub trait LogDensity {
    fn dim(&self) -> usize;
    /// Writes the gradient into `grad` and returns the log density.
    fn log_density_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// Standard half-kick / full-drift / half-kick sequence repeated `n_steps`
/// times with unit mass matrix. `grad_logp` fills the gradient of the log
/// density. Errors signal a divergent (non-finite) trajectory.
pub fn leapfrog(
    theta: &[f64],
    momentum: &[f64],
    step_size: f64,
    n_steps: usize,
    mut grad_logp: impl FnMut(&[f64], &mut [f64]),
) -> Result<(Vec<f64>, Vec<f64>)> {
    if step_size <= 0.0 {
        return Err(Error::Usage("leapfrog step size must be positive".into()));
    }
    let mut q = theta.to_vec();
    let mut p = momentum.to_vec();
    let mut grad = vec![0.0; q.len()];
    grad_logp(&q, &mut grad);
    for _ in 0..n_steps {
        for (pi, gi) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * step_size * gi;
        }
        for (qi, pi) in q.iter_mut().zip(&p) {
            *qi += step_size * pi;
        }
        grad_logp(&q, &mut grad);
        for (pi, gi) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * step_size * gi;
        }
        if !q.iter().all(|v| v.is_finite()) || !p.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric {
                stage: "leapfrog".into(),
                detail: "non-finite state (divergent trajectory)".into(),
            });
        }
    }
    Ok((q, p))
}

struct Trajectory {
    q: Vec<f64>,
    logp: f64,
    kinetic: f64,
}

/// Integrates one proposal; returns None on divergence.
fn integrate<T: LogDensity>(
    target: &mut T,
    q0: &[f64],
    p0: &[f64],
    step: f64,
    n_steps: usize,
    grad: &mut Vec<f64>,
) -> Option<Trajectory> {
    let mut q = q0.to_vec();
    let mut p = p0.to_vec();
    grad.resize(q.len(), 0.0);
    let mut logp = target.log_density_grad(&q, grad);
    if !logp.is_finite() {
        return None;
    }
    for _ in 0..n_steps {
        for (pi, gi) in p.iter_mut().zip(grad.iter()) {
            *pi += 0.5 * step * gi;
        }
        for (qi, pi) in q.iter_mut().zip(&p) {
            *qi += step * pi;
        }
        if !q.iter().all(|v| v.is_finite()) {
            return None;
        }
        logp = target.log_density_grad(&q, grad);
        if !logp.is_finite() {
            return None;
        }
        for (pi, gi) in p.iter_mut().zip(grad.iter()) {
            *pi += 0.5 * step * gi;
        }
        if !p.iter().all(|v| v.is_finite()) {
            return None;
        }
    }
    let kinetic = 0.5 * p.iter().map(|v| v * v).sum::<f64>();
    Some(Trajectory { q, logp, kinetic })
}

/// Result of running a chain over a generic target.
#[derive(Debug, Clone)]
pub struct ChainResult {
    pub samples: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
    pub burn_in_acceptance_rate: f64,
    pub final_step_size: f64,
    pub divergences: usize,
}

/// Burn-in with step-size adaptation, then `n_samples` iterations keeping
/// the accepted state. Metropolis acceptance is min(1, exp(H_old - H_new));
/// divergent trajectories auto-reject.
pub fn hmc_chain<T: LogDensity>(
    target: &mut T,
    config: &HmcConfig,
    init: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<ChainResult> {
    config.validate()?;
    if init.len() != target.dim() {
        return Err(Error::Dimension(format!(
            "init length {} != target dimension {}",
            init.len(),
            target.dim()
        )));
    }
    if !init.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric {
            stage: "hmc".into(),
            detail: "non-finite initial state".into(),
        });
    }
    let dim = init.len();
    let mut q = init.to_vec();
    let mut grad = vec![0.0; dim];
    let mut logp = target.log_density_grad(&q, &mut grad);
    if !logp.is_finite() {
        return Err(Error::Numeric {
            stage: "hmc".into(),
            detail: "non-finite log posterior at the initial state".into(),
        });
    }
    let mut step = config.initial_step_size;
    let (lo, hi) = config.target_accept_range;
    let mut accept_ema = 0.5 * (lo + hi);
    let mut divergences = 0usize;
    let mut burn_accepts = 0usize;
    let mut sample_accepts = 0usize;
    let mut samples = Vec::with_capacity(config.n_samples);
    let total = config.burn_in_steps + config.n_samples;
    let mut p0 = vec![0.0; dim];
    for it in 0..total {
        let burn_in = it < config.burn_in_steps;
        for v in p0.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let h_old = -logp + 0.5 * p0.iter().map(|v| v * v).sum::<f64>();
        let accepted = match integrate(
            target,
            &q,
            &p0,
            step,
            config.leapfrog_steps,
            &mut grad,
        ) {
            None => {
                divergences += 1;
                false
            }
            Some(tr) => {
                let h_new = -tr.logp + tr.kinetic;
                let accept_prob = (h_old - h_new).exp().min(1.0);
                let u: f64 = rng.random();
                if u < accept_prob {
                    q = tr.q;
                    logp = tr.logp;
                    true
                } else {
                    false
                }
            }
        };
        if burn_in {
            if accepted {
                burn_accepts += 1;
            }
            accept_ema = 0.9 * accept_ema + 0.1 * f64::from(u8::from(accepted));
            if accept_ema > hi {
                step *= 1.1;
            } else if accept_ema < lo {
                step *= 0.9;
            }
            if it + 1 == config.burn_in_steps {
                let rate = burn_accepts as f64 / config.burn_in_steps as f64;
                if rate < 0.01 {
                    return Err(Error::Numeric {
                        stage: "hmc burn-in".into(),
                        detail: format!(
                            "acceptance rate {rate:.4} < 1% over {} burn-in steps \
                             (step size reached {step:.3e})",
                            config.burn_in_steps
                        ),
                    });
                }
            }
        } else {
            if accepted {
                sample_accepts += 1;
            }
            samples.push(q.clone());
        }
    }
    Ok(ChainResult {
        samples,
        acceptance_rate: sample_accepts as f64 / config.n_samples as f64,
        burn_in_acceptance_rate: if config.burn_in_steps == 0 {
            f64::NAN
        } else {
            burn_accepts as f64 / config.burn_in_steps as f64
        },
        final_step_size: step,
        divergences,
    })
}

/// Gaussian priors over the two extra PDE-parameter slots (l1 and the
/// softplus pre-image of l2) in inverse mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaPrior {
    pub l1_mean: f64,
    pub l1_sigma: f64,
    pub raw2_mean: f64,
    pub raw2_sigma: f64,
}

impl Default for LambdaPrior {
    fn default() -> Self {
        LambdaPrior {
            l1_mean: 1.0,
            l1_sigma: 1.0,
            raw2_mean: softplus_inv(0.01),
            raw2_sigma: 1.0,
        }
    }
}

/// log P = -sum(state misfit^2)/(2 s_u^2) - sum(residual^2)/(2 s_f^2)
///         - |theta|^2/(2 prior_sigma^2) [- lambda-slot penalties],
/// constants omitted, recorded on one tape.
pub fn log_posterior(
    spec: &NetworkSpec,
    params: &[f64],
    dataset: &SensorDataset,
    problem: &PdeProblem,
    prior_sigma: f64,
    lambda_prior: Option<&LambdaPrior>,
) -> Result<crate::training::TapedLoss> {
    dataset.validate(problem)?;
    let (sigma_u, sigma_f) = (dataset.noise_sigma_u, dataset.noise_sigma_f);
    if sigma_u <= 0.0 || sigma_f <= 0.0 {
        return Err(Error::Usage(
            "the posterior needs positive noise scales on the dataset".into(),
        ));
    }
    let lambda_mode = LambdaMode::of(spec, params.len())?;
    let n_base = spec.param_count();
    let mut tape = crate::autodiff::Tape::with_leaves(params);
    let su = record_state_misfit(&mut tape, spec, &dataset.state_obs, None)?;
    let data_term = tape.scale(su, -0.5 / (sigma_u * sigma_u));
    let mut node = data_term;
    if !dataset.residual_points.is_empty() {
        let sf = record_residual_misfit(
            &mut tape,
            spec,
            problem,
            &dataset.residual_points,
            lambda_mode,
            None,
        )?;
        let res_term = tape.scale(sf, -0.5 / (sigma_f * sigma_f));
        node = tape.add(node, res_term);
    }
    let theta_leaves: Vec<crate::autodiff::NodeId> = (0..n_base as u32).collect();
    let prior_sq = tape.sum_of_squares(&theta_leaves);
    let prior_term = tape.scale(prior_sq, -0.5 / (prior_sigma * prior_sigma));
    node = tape.add(node, prior_term);
    if lambda_mode == LambdaMode::Free {
        let lp = lambda_prior.copied().unwrap_or_default();
        let mu1 = tape.constant(lp.l1_mean);
        let d1 = tape.sub(n_base as u32, mu1);
        let d1sq = tape.square(d1);
        let t1 = tape.scale(d1sq, -0.5 / (lp.l1_sigma * lp.l1_sigma));
        node = tape.add(node, t1);
        let mu2 = tape.constant(lp.raw2_mean);
        let d2 = tape.sub((n_base + 1) as u32, mu2);
        let d2sq = tape.square(d2);
        let t2 = tape.scale(d2sq, -0.5 / (lp.raw2_sigma * lp.raw2_sigma));
        node = tape.add(node, t2);
    }
    let value = tape.value(node);
    Ok(crate::training::TapedLoss {
        tape,
        node,
        loss_u: value,
        loss_f: 0.0,
    })
}

/// The PINN posterior as a [`LogDensity`]: chunk-parallel misfit terms plus
/// analytic prior contributions.
pub struct PinnPosterior<'a> {
    evaluator: MisfitEvaluator<'a>,
    prior_sigma: f64,
    lambda_prior: Option<LambdaPrior>,
    n_base: usize,
}

impl<'a> PinnPosterior<'a> {
    pub fn new(
        spec: &'a NetworkSpec,
        dataset: &'a SensorDataset,
        problem: &'a PdeProblem,
        prior_sigma: f64,
        lambda_mode: LambdaMode,
        lambda_prior: Option<LambdaPrior>,
    ) -> Result<Self> {
        let (sigma_u, sigma_f) = (dataset.noise_sigma_u, dataset.noise_sigma_f);
        if sigma_u <= 0.0 || sigma_f <= 0.0 {
            return Err(Error::Usage(
                "the posterior needs positive noise scales on the dataset".into(),
            ));
        }
        let evaluator = MisfitEvaluator::new(
            spec,
            problem,
            dataset,
            -0.5 / (sigma_u * sigma_u),
            -0.5 / (sigma_f * sigma_f),
            lambda_mode,
        )?;
        Ok(PinnPosterior {
            evaluator,
            prior_sigma,
            lambda_prior: if lambda_mode == LambdaMode::Free {
                Some(lambda_prior.unwrap_or_default())
            } else {
                None
            },
            n_base: spec.param_count(),
        })
    }
}

impl LogDensity for PinnPosterior<'_> {
    fn dim(&self) -> usize {
        self.evaluator.n_params()
    }

    fn log_density_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut logp = match self.evaluator.eval_grad(x, None, grad) {
            Ok((d, r)) => d + r,
            Err(_) => return f64::NAN,
        };
        let inv_var = 1.0 / (self.prior_sigma * self.prior_sigma);
        for i in 0..self.n_base {
            logp -= 0.5 * x[i] * x[i] * inv_var;
            grad[i] -= x[i] * inv_var;
        }
        if let Some(lp) = self.lambda_prior {
            let d1 = x[self.n_base] - lp.l1_mean;
            let iv1 = 1.0 / (lp.l1_sigma * lp.l1_sigma);
            logp -= 0.5 * d1 * d1 * iv1;
            grad[self.n_base] -= d1 * iv1;
            let d2 = x[self.n_base + 1] - lp.raw2_mean;
            let iv2 = 1.0 / (lp.raw2_sigma * lp.raw2_sigma);
            logp -= 0.5 * d2 * d2 * iv2;
            grad[self.n_base + 1] -= d2 * iv2;
        }
        logp
    }
}

/// Runs the preset chain over the PINN posterior. An extended `init`
/// (+2 slots) switches on joint (theta, lambda) sampling.
pub fn hmc_sample(
    spec: &NetworkSpec,
    dataset: &SensorDataset,
    problem: &PdeProblem,
    config: &HmcConfig,
    init: &ParameterVector,
    rng: &mut ChaCha8Rng,
) -> Result<PosteriorSamples> {
    let lambda_mode = LambdaMode::of(spec, init.len())?;
    let mut target = PinnPosterior::new(
        spec,
        dataset,
        problem,
        config.prior_sigma,
        lambda_mode,
        None,
    )?;
    let chain = hmc_chain(&mut target, config, &init.0, rng)?;
    let n_base = spec.param_count();
    let lambda_samples = (lambda_mode == LambdaMode::Free).then(|| {
        chain
            .samples
            .iter()
            .map(|s| lambda_of(s, n_base))
            .collect()
    });
    Ok(PosteriorSamples {
        samples: chain.samples.into_iter().map(ParameterVector).collect(),
        acceptance_rate: chain.acceptance_rate,
        burn_in_acceptance_rate: chain.burn_in_acceptance_rate,
        final_step_size: chain.final_step_size,
        divergences: chain.divergences,
        method: Method::Hmc,
        lambda_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::central_diff_grad;
    use crate::mlp::init_params;
    use crate::oracles::{generate_sensor_dataset, ExactField, Observation};
    use crate::rng::{rng, Stream};

    /// Correlated Gaussian: logp = -0.5 (x-mu)' P (x-mu).
    struct Gaussian {
        mean: Vec<f64>,
        prec: Vec<Vec<f64>>,
    }

    impl LogDensity for Gaussian {
        fn dim(&self) -> usize {
            self.mean.len()
        }

        fn log_density_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
            let d: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
            let mut logp = 0.0;
            for i in 0..d.len() {
                let mut pi = 0.0;
                for j in 0..d.len() {
                    pi += self.prec[i][j] * d[j];
                }
                grad[i] = -pi;
                logp -= 0.5 * d[i] * pi;
            }
            logp
        }
    }

    #[test]
    fn free_particle_drifts_exactly() {
        let theta = [1.0, -2.0];
        let momentum = [0.5, 0.25];
        let (q, p) = leapfrog(&theta, &momentum, 0.125, 8, |_, g| {
            g.iter_mut().for_each(|v| *v = 0.0)
        })
        .unwrap();
        // theta' = theta + step * n * momentum, momentum unchanged
        assert_eq!(q, vec![1.0 + 0.5, -2.0 + 0.25]);
        assert_eq!(p, momentum.to_vec());
    }

    #[test]
    fn leapfrog_is_reversible() {
        let mut target = Gaussian {
            mean: vec![0.0, 0.0],
            prec: vec![vec![2.0, -0.5], vec![-0.5, 1.0]],
        };
        let grad = |q: &[f64], g: &mut [f64]| {
            target.log_density_grad(q, g);
        };
        let theta = [0.7, -0.4];
        let momentum = [0.3, 0.9];
        let (q1, p1) = leapfrog(&theta, &momentum, 0.05, 30, grad).unwrap();
        let neg_p1: Vec<f64> = p1.iter().map(|v| -v).collect();
        let mut target2 = Gaussian {
            mean: vec![0.0, 0.0],
            prec: vec![vec![2.0, -0.5], vec![-0.5, 1.0]],
        };
        let (q2, p2) = leapfrog(&q1, &neg_p1, 0.05, 30, |q, g| {
            target2.log_density_grad(q, g);
        })
        .unwrap();
        for i in 0..2 {
            assert!((q2[i] - theta[i]).abs() < 1e-8);
            assert!((-p2[i] - momentum[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn hamiltonian_error_scales_quadratically_in_step() {
        // 1-D standard Gaussian, fixed trajectory length
        let mut g = Gaussian {
            mean: vec![0.0],
            prec: vec![vec![1.0]],
        };
        let h = |q: &[f64], p: &[f64], t: &mut Gaussian| -> f64 {
            let mut grad = vec![0.0];
            -t.log_density_grad(q, &mut grad) + 0.5 * p[0] * p[0]
        };
        let mut ratios = Vec::new();
        for (q0, p0) in [(1.2, 0.7), (0.3, -1.1), (-0.8, 0.9), (1.7, 0.2)] {
            let h0 = h(&[q0], &[p0], &mut g);
            let run = |eps: f64, n: usize, g: &mut Gaussian| -> f64 {
                let (q, p) = leapfrog(&[q0], &[p0], eps, n, |q, gr| {
                    g.log_density_grad(q, gr);
                })
                .unwrap();
                (h(&q, &p, g) - h0).abs()
            };
            let coarse = run(0.2, 10, &mut g);
            let fine = run(0.1, 20, &mut g);
            ratios.push(coarse / fine);
        }
        let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!(
            (3.5..=4.5).contains(&mean_ratio),
            "|dH| halving ratio {mean_ratio} (per-start {ratios:?})"
        );
    }

    #[test]
    fn chain_recovers_correlated_gaussian() {
        let mut target = Gaussian {
            mean: vec![0.5, -0.3],
            // covariance [[1.0, 0.6], [0.6, 1.2]] => precision = inv
            prec: {
                let det: f64 = 1.0 * 1.2 - 0.36;
                vec![
                    vec![1.2 / det, -0.6 / det],
                    vec![-0.6 / det, 1.0 / det],
                ]
            },
        };
        let config = HmcConfig {
            leapfrog_steps: 15,
            initial_step_size: 0.3,
            burn_in_steps: 500,
            n_samples: 2000,
            target_accept_range: (0.6, 0.9),
            prior_sigma: 1.0,
            seed: 0,
        };
        let mut r = rng(12, Stream::HmcMomentum);
        let chain = hmc_chain(&mut target, &config, &[0.0, 0.0], &mut r).unwrap();
        assert_eq!(chain.samples.len(), 2000);
        let n = chain.samples.len() as f64;
        let mean: Vec<f64> = (0..2)
            .map(|k| chain.samples.iter().map(|s| s[k]).sum::<f64>() / n)
            .collect();
        assert!((mean[0] - 0.5).abs() < 0.1, "mean {mean:?}");
        assert!((mean[1] + 0.3).abs() < 0.1, "mean {mean:?}");
        let mut cov = [[0.0f64; 2]; 2];
        for s in &chain.samples {
            for i in 0..2 {
                for j in 0..2 {
                    cov[i][j] += (s[i] - mean[i]) * (s[j] - mean[j]);
                }
            }
        }
        let truth = [[1.0, 0.6], [0.6, 1.2]];
        let mut frob = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                cov[i][j] /= n - 1.0;
                frob += (cov[i][j] - truth[i][j]).powi(2);
            }
        }
        assert!(frob.sqrt() < 0.15, "covariance {cov:?}");
        // adapted acceptance lands in the configured band
        assert!(
            (0.6..=0.95).contains(&chain.acceptance_rate),
            "acceptance {}",
            chain.acceptance_rate
        );
    }

    #[test]
    fn vanishing_step_accepts_everything_and_barely_moves() {
        let mut target = Gaussian {
            mean: vec![0.0],
            prec: vec![vec![1.0]],
        };
        let config = HmcConfig {
            leapfrog_steps: 5,
            initial_step_size: 1e-7,
            burn_in_steps: 0,
            n_samples: 50,
            target_accept_range: (0.6, 0.9),
            prior_sigma: 1.0,
            seed: 0,
        };
        let start = [1.5];
        let mut r = rng(3, Stream::HmcMomentum);
        let chain = hmc_chain(&mut target, &config, &start, &mut r).unwrap();
        assert_eq!(chain.acceptance_rate, 1.0);
        for s in &chain.samples {
            assert!((s[0] - start[0]).abs() < 1e-4);
        }
    }

    #[test]
    fn fixed_seed_reproduces_chain() {
        let make = || Gaussian {
            mean: vec![0.0, 0.0],
            prec: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        let config = HmcConfig {
            leapfrog_steps: 10,
            initial_step_size: 0.2,
            burn_in_steps: 50,
            n_samples: 50,
            target_accept_range: (0.6, 0.9),
            prior_sigma: 1.0,
            seed: 0,
        };
        let run = |_| {
            let mut t = make();
            let mut r = rng(99, Stream::HmcMomentum);
            hmc_chain(&mut t, &config, &[0.3, -0.2], &mut r).unwrap()
        };
        let a = run(0);
        let b = run(1);
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.final_step_size, b.final_step_size);
    }

    #[test]
    fn log_posterior_zero_data_zero_params_is_zero() {
        let spec = NetworkSpec::new(2, 1, 1, 3);
        let problem = PdeProblem::burgers();
        let dataset = SensorDataset {
            state_obs: vec![Observation {
                coords: vec![0.2, 0.4],
                values: vec![0.0],
            }],
            residual_points: vec![vec![0.1, 0.2]],
            noise_sigma_u: 0.1,
            noise_sigma_f: 0.1,
            seed: 0,
        };
        let params = vec![0.0; spec.param_count()];
        let lp = log_posterior(&spec, &params, &dataset, &problem, 1.0, None).unwrap();
        assert_eq!(lp.value(), 0.0);
    }

    #[test]
    fn widening_prior_raises_log_posterior_for_nonzero_params() {
        let spec = NetworkSpec::new(2, 1, 1, 3);
        let problem = PdeProblem::burgers();
        let dataset = generate_sensor_dataset(&problem, &ExactField::ColeHopf, 5, 3, 0.1, 0.1, 8)
            .unwrap();
        let p = init_params(&spec, &mut rng(2, Stream::Init));
        let narrow = log_posterior(&spec, &p.0, &dataset, &problem, 1.0, None)
            .unwrap()
            .value();
        let wide = log_posterior(&spec, &p.0, &dataset, &problem, 2.0, None)
            .unwrap()
            .value();
        assert!(wide > narrow);
    }

    #[test]
    fn log_posterior_gradient_passes_fd() {
        let spec = NetworkSpec::new(2, 1, 2, 4);
        let problem = PdeProblem::burgers();
        let dataset = generate_sensor_dataset(&problem, &ExactField::ColeHopf, 6, 4, 0.1, 0.1, 5)
            .unwrap();
        let p = init_params(&spec, &mut rng(4, Stream::Init));
        let lp = log_posterior(&spec, &p.0, &dataset, &problem, 1.0, None).unwrap();
        let grad = lp.grad().unwrap();
        let numeric = central_diff_grad(
            |theta: &[f64]| {
                log_posterior(&spec, theta, &dataset, &problem, 1.0, None)
                    .unwrap()
                    .value()
            },
            &p.0,
            1e-4,
        );
        for (g, n) in grad.iter().zip(&numeric) {
            assert!((g - n).abs() / (g.abs() + 1e-6) < 1e-5, "{g} vs {n}");
        }
    }

    #[test]
    fn chunked_posterior_matches_taped_log_posterior() {
        let spec = NetworkSpec::new(3, 3, 2, 4);
        let problem = PdeProblem::navier_stokes(1.0);
        let dataset = generate_sensor_dataset(
            &problem,
            &ExactField::TaylorGreen { nu: 0.01 },
            150,
            130,
            0.05,
            0.05,
            6,
        )
        .unwrap();
        let theta = init_params(&spec, &mut rng(7, Stream::Init));
        let ext = crate::inverse::extend_parameters(&theta, (1.1, 0.02));
        let mut target = PinnPosterior::new(
            &spec,
            &dataset,
            &problem,
            1.0,
            LambdaMode::Free,
            None,
        )
        .unwrap();
        let mut grad = vec![0.0; ext.len()];
        let fast = target.log_density_grad(&ext.0, &mut grad);
        let taped = log_posterior(&spec, &ext.0, &dataset, &problem, 1.0, None).unwrap();
        assert!(
            (fast - taped.value()).abs() < 1e-9 * (1.0 + taped.value().abs()),
            "{fast} vs {}",
            taped.value()
        );
        let tg = taped.grad().unwrap();
        for (a, b) in grad.iter().zip(&tg) {
            assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn burn_in_collapse_aborts_with_diagnostic() {
        // a target that rejects everything: -inf off the initial point
        struct Wall;
        impl LogDensity for Wall {
            fn dim(&self) -> usize {
                1
            }
            fn log_density_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
                grad[0] = 0.0;
                if x[0] == 0.0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
        let config = HmcConfig {
            leapfrog_steps: 2,
            initial_step_size: 0.5,
            burn_in_steps: 200,
            n_samples: 10,
            target_accept_range: (0.6, 0.9),
            prior_sigma: 1.0,
            seed: 0,
        };
        let mut r = rng(1, Stream::HmcMomentum);
        match hmc_chain(&mut Wall, &config, &[0.0], &mut r) {
            Err(Error::Numeric { stage, .. }) => assert!(stage.contains("burn-in")),
            other => panic!("expected burn-in abort, got {other:?}"),
        }
    }
}
