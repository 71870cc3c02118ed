//! Predictive summaries over evaluation grids: pointwise mean and std over
//! realizations, error fields against an exact reference, and coverage.

use crate::error::{Error, Result};
use crate::hmc::PosteriorSamples;
use crate::mlp::{forward, NetworkSpec};
use crate::oracles::ExactField;
use crate::training::{mcd_predict_samples, EnsembleModel, McdModel, SampleArray};
use crate::Method;
use rayon::prelude::*;
use std::fmt::Write as _;

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Regular lattice over the problem domain. Points are ordered row-major
/// with the first axis fastest: index = slow * n_fast + fast, where the
/// fast axis is x and the slow axis is t (1-D problems) or y (2-D slices).
#[derive(Debug, Clone, PartialEq)]
pub enum EvalGrid {
    /// (x, t) lattice for 1-D space-time problems.
    SpaceTime1D { xs: Vec<f64>, ts: Vec<f64> },
    /// (x, y) lattice at one representative time.
    SpaceAtTime2D { xs: Vec<f64>, ys: Vec<f64>, t: f64 },
}

impl EvalGrid {
    /// Burgers default: 256 x-points by 100 t-points.
    pub fn burgers_default() -> Self {
        EvalGrid::SpaceTime1D {
            xs: linspace(-1.0, 1.0, 256),
            ts: linspace(0.0, 1.0, 100),
        }
    }

    /// NS default: 100 x 50 spatial lattice at a fixed time instant.
    pub fn ns_default(lo: &[f64], hi: &[f64], t: f64) -> Self {
        EvalGrid::SpaceAtTime2D {
            xs: linspace(lo[0], hi[0], 100),
            ys: linspace(lo[1], hi[1], 50),
            t,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            EvalGrid::SpaceTime1D { xs, ts } => xs.len() * ts.len(),
            EvalGrid::SpaceAtTime2D { xs, ys, .. } => xs.len() * ys.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        match self {
            EvalGrid::SpaceTime1D { xs, ts } => {
                let i = idx % xs.len();
                let j = idx / xs.len();
                vec![xs[i], ts[j]]
            }
            EvalGrid::SpaceAtTime2D { xs, ys, t } => {
                let i = idx % xs.len();
                let j = idx / xs.len();
                vec![xs[i], ys[j], *t]
            }
        }
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

/// Pointwise predictive mean and unbiased std per output, over one grid.
#[derive(Debug, Clone)]
pub struct PredictiveSummary {
    pub grid: EvalGrid,
    pub method: Method,
    pub n_realizations: usize,
    pub n_out: usize,
    /// `mean[point * n_out + o]`.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// The realizations a summary averages over.
pub enum Realizations<'a> {
    /// Posterior draws evaluated through the network.
    Hmc(&'a PosteriorSamples, &'a NetworkSpec),
    /// One deterministic prediction per ensemble member.
    Ensemble(&'a EnsembleModel),
    /// Stochastic dropout passes of a single model.
    Mcd {
        model: &'a McdModel,
        n_passes: usize,
        seed: u64,
    },
}

/// Reduces a dense realization array to pointwise mean / unbiased std.
pub fn summarize_samples(
    arr: &SampleArray,
    grid: EvalGrid,
    method: Method,
) -> Result<PredictiveSummary> {
    if arr.n_real == 0 {
        return Err(Error::Empty("summary needs at least one realization".into()));
    }
    if arr.n_points != grid.len() {
        return Err(Error::Dimension(format!(
            "sample array has {} points, grid has {}",
            arr.n_points,
            grid.len()
        )));
    }
    let n = arr.n_real;
    let mut mean = vec![0.0; arr.n_points * arr.n_out];
    let mut std = vec![0.0; arr.n_points * arr.n_out];
    for p in 0..arr.n_points {
        for o in 0..arr.n_out {
            let mut m = 0.0;
            for r in 0..n {
                m += arr.at(r, p, o);
            }
            m /= n as f64;
            mean[p * arr.n_out + o] = m;
            if n > 1 {
                let mut ss = 0.0;
                for r in 0..n {
                    let d = arr.at(r, p, o) - m;
                    ss += d * d;
                }
                std[p * arr.n_out + o] = (ss / (n as f64 - 1.0)).sqrt();
            }
        }
    }
    Ok(PredictiveSummary {
        grid,
        method,
        n_realizations: n,
        n_out: arr.n_out,
        mean,
        std,
    })
}

/// Evaluates every realization on the grid and reduces to mean/std.
pub fn predictive_summary(real: &Realizations, grid: &EvalGrid) -> Result<PredictiveSummary> {
    let points = grid.points();
    match real {
        Realizations::Mcd {
            model,
            n_passes,
            seed,
        } => {
            let mut r = crate::rng::rng(*seed, crate::rng::Stream::DropoutPredict);
            let arr = mcd_predict_samples(model, &points, *n_passes, &mut r)?;
            summarize_samples(&arr, grid.clone(), Method::McDropout)
        }
        Realizations::Hmc(samples, spec) => {
            let sets: Vec<&[f64]> = samples.samples.iter().map(|s| s.as_slice()).collect();
            let arr = forward_all(spec, &sets, &points)?;
            summarize_samples(&arr, grid.clone(), Method::Hmc)
        }
        Realizations::Ensemble(model) => {
            let sets: Vec<&[f64]> = model.members.iter().map(|m| m.as_slice()).collect();
            let arr = forward_all(&model.spec, &sets, &points)?;
            summarize_samples(&arr, grid.clone(), Method::DeepEnsemble)
        }
    }
}

fn forward_all(
    spec: &NetworkSpec,
    parameter_sets: &[&[f64]],
    points: &[Vec<f64>],
) -> Result<SampleArray> {
    if parameter_sets.is_empty() {
        return Err(Error::Empty("no realizations".into()));
    }
    let n_out = spec.output_dim;
    let rows: Vec<Result<Vec<f64>>> = points
        .par_iter()
        .map(|c| {
            let mut row = Vec::with_capacity(parameter_sets.len() * n_out);
            for params in parameter_sets {
                row.extend(forward(spec, params, c, None)?);
            }
            Ok(row)
        })
        .collect();
    let mut arr = SampleArray::zeros(parameter_sets.len(), points.len(), n_out);
    for (p, row) in rows.into_iter().enumerate() {
        let row = row?;
        for r in 0..parameter_sets.len() {
            for o in 0..n_out {
                arr.set(r, p, o, row[r * n_out + o]);
            }
        }
    }
    Ok(arr)
}

/// Error fields of a predictive mean against exact values.
#[derive(Debug, Clone)]
pub struct ErrorFields {
    /// |mean - exact| per (point, output).
    pub abs_error: Vec<f64>,
    /// mean - exact per (point, output).
    pub signed_error: Vec<f64>,
    /// ||mean - exact||_2 / ||exact||_2 per output, over the grid.
    pub relative_l2: Vec<f64>,
}

/// Exact field values flattened on the grid (`point * n_out + o`).
pub fn exact_on_grid(exact: &ExactField, grid: &EvalGrid) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..grid.len() {
        out.extend(exact.eval(&grid.point(i))?);
    }
    Ok(out)
}

/// Pointwise absolute/signed error and per-output relative L2 from
/// precomputed exact values.
pub fn error_fields_from_values(
    summary: &PredictiveSummary,
    exact: &[f64],
) -> Result<ErrorFields> {
    if exact.len() != summary.mean.len() {
        return Err(Error::Dimension(format!(
            "exact field length {} != summary length {}",
            exact.len(),
            summary.mean.len()
        )));
    }
    let n_out = summary.n_out;
    let signed: Vec<f64> = summary
        .mean
        .iter()
        .zip(exact)
        .map(|(m, e)| m - e)
        .collect();
    let abs: Vec<f64> = signed.iter().map(|d| d.abs()).collect();
    let mut relative_l2 = Vec::with_capacity(n_out);
    for o in 0..n_out {
        let mut num = 0.0;
        let mut den = 0.0;
        for p in 0..summary.mean.len() / n_out {
            let d = signed[p * n_out + o];
            num += d * d;
            den += exact[p * n_out + o] * exact[p * n_out + o];
        }
        relative_l2.push((num / den.max(f64::MIN_POSITIVE)).sqrt());
    }
    Ok(ErrorFields {
        abs_error: abs,
        signed_error: signed,
        relative_l2,
    })
}

/// Error fields against an exact reference field.
pub fn error_fields(summary: &PredictiveSummary, exact: &ExactField) -> Result<ErrorFields> {
    let vals = exact_on_grid(exact, &summary.grid)?;
    error_fields_from_values(summary, &vals)
}

/// Fraction of (point, output) entries with |mean - exact| <= k * std,
/// from precomputed exact values. `outputs` restricts which outputs count
/// (empty means all).
pub fn coverage_from_values(
    summary: &PredictiveSummary,
    exact: &[f64],
    k: f64,
    outputs: &[usize],
) -> Result<f64> {
    if k <= 0.0 {
        return Err(Error::Usage("coverage factor k must be positive".into()));
    }
    if exact.len() != summary.mean.len() {
        return Err(Error::Dimension("exact field length mismatch".into()));
    }
    let n_out = summary.n_out;
    let keep = |o: usize| outputs.is_empty() || outputs.contains(&o);
    let mut total = 0usize;
    let mut covered = 0usize;
    for p in 0..summary.mean.len() / n_out {
        for o in 0..n_out {
            if !keep(o) {
                continue;
            }
            let idx = p * n_out + o;
            total += 1;
            if (summary.mean[idx] - exact[idx]).abs() <= k * summary.std[idx] {
                covered += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::Empty("no outputs selected for coverage".into()));
    }
    Ok(covered as f64 / total as f64)
}

/// Coverage against an exact reference field over all outputs.
pub fn coverage_fraction(
    summary: &PredictiveSummary,
    exact: &ExactField,
    k: f64,
) -> Result<f64> {
    let vals = exact_on_grid(exact, &summary.grid)?;
    coverage_from_values(summary, &vals, k, &[])
}

fn output_names(n_out: usize) -> &'static [&'static str] {
    match n_out {
        1 => &["u"],
        3 => &["u", "v", "p"],
        _ => &["o0", "o1", "o2", "o3"],
    }
}

/// Field CSV: `x[,y],t,mean_u[,mean_v,mean_p],std_u[,...]`.
pub fn summary_csv(summary: &PredictiveSummary) -> String {
    let names = output_names(summary.n_out);
    let mut head: Vec<String> = match &summary.grid {
        EvalGrid::SpaceTime1D { .. } => vec!["x".into(), "t".into()],
        EvalGrid::SpaceAtTime2D { .. } => vec!["x".into(), "y".into(), "t".into()],
    };
    for n in &names[..summary.n_out] {
        head.push(format!("mean_{n}"));
    }
    for n in &names[..summary.n_out] {
        head.push(format!("std_{n}"));
    }
    let mut out = head.join(",");
    out.push('\n');
    for p in 0..summary.grid.len() {
        let coords = summary.grid.point(p);
        let mut first = true;
        for c in coords {
            if !first {
                out.push(',');
            }
            let _ = write!(out, "{c}");
            first = false;
        }
        for o in 0..summary.n_out {
            let _ = write!(out, ",{}", summary.mean[p * summary.n_out + o]);
        }
        for o in 0..summary.n_out {
            let _ = write!(out, ",{}", summary.std[p * summary.n_out + o]);
        }
        out.push('\n');
    }
    out
}

/// Error-field CSV: `x[,y],t,err_u[,err_v,err_p]` (absolute errors).
pub fn error_csv(summary: &PredictiveSummary, errors: &ErrorFields) -> String {
    let names = output_names(summary.n_out);
    let mut head: Vec<String> = match &summary.grid {
        EvalGrid::SpaceTime1D { .. } => vec!["x".into(), "t".into()],
        EvalGrid::SpaceAtTime2D { .. } => vec!["x".into(), "y".into(), "t".into()],
    };
    for n in &names[..summary.n_out] {
        head.push(format!("err_{n}"));
    }
    let mut out = head.join(",");
    out.push('\n');
    for p in 0..summary.grid.len() {
        let coords = summary.grid.point(p);
        let mut first = true;
        for c in coords {
            if !first {
                out.push(',');
            }
            let _ = write!(out, "{c}");
            first = false;
        }
        for o in 0..summary.n_out {
            let _ = write!(out, ",{}", errors.abs_error[p * summary.n_out + o]);
        }
        out.push('\n');
    }
    out
}
