//! Joint inference of PDE parameters lambda = (l1, l2) alongside network
//! parameters: the flat vector gains two trailing slots holding l1 and the
//! softplus pre-image of l2, so l2 stays positive under any optimizer or
//! sampler move.

use crate::error::{Error, Result};
use crate::mlp::{NetworkSpec, ParameterVector};
use crate::Method;
use serde::Serialize;

/// ln(1 + e^x), stable for large |x|.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`]: ln(e^y - 1) for y > 0.
pub fn softplus_inv(y: f64) -> f64 {
    assert!(y > 0.0, "softplus is positive");
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// Appends (l1, softplus^-1(l2)) to a network parameter vector.
pub fn extend_parameters(params: &ParameterVector, lambda_init: (f64, f64)) -> ParameterVector {
    let mut v = params.0.clone();
    v.push(lambda_init.0);
    v.push(softplus_inv(lambda_init.1));
    ParameterVector(v)
}

/// Splits an extended vector into the network part and (l1, l2).
pub fn strip_parameters(
    extended: &[f64],
    spec: &NetworkSpec,
) -> Result<(ParameterVector, (f64, f64))> {
    let n = spec.param_count();
    if extended.len() != n + 2 {
        return Err(Error::Dimension(format!(
            "extended vector length {} != {} + 2",
            extended.len(),
            n
        )));
    }
    let theta = ParameterVector(extended[..n].to_vec());
    Ok((theta, lambda_of(extended, n)))
}

/// Reads (l1, l2) from the trailing slots of an extended vector.
#[inline]
pub fn lambda_of(extended: &[f64], base_count: usize) -> (f64, f64) {
    (extended[base_count], softplus(extended[base_count + 1]))
}

/// Mean and spread of recovered PDE parameters under one UQ method.
#[derive(Debug, Clone, Serialize)]
pub struct LambdaEstimate {
    pub method: Method,
    pub mean: (f64, f64),
    pub std: (f64, f64),
    /// One (l1, l2) pair per sample/member/pass.
    pub raw: Vec<(f64, f64)>,
    /// True when only a single realization was available (std is 0 by
    /// convention then).
    pub degenerate: bool,
}

/// Per-component sample mean and unbiased sample std over the realizations
/// of one method.
pub fn estimate_lambda(method: Method, raw: &[(f64, f64)]) -> Result<LambdaEstimate> {
    if raw.is_empty() {
        return Err(Error::Empty("lambda estimate needs at least one value".into()));
    }
    let n = raw.len() as f64;
    let mean = (
        raw.iter().map(|r| r.0).sum::<f64>() / n,
        raw.iter().map(|r| r.1).sum::<f64>() / n,
    );
    let std = if raw.len() == 1 {
        (0.0, 0.0)
    } else {
        let var1 = raw.iter().map(|r| (r.0 - mean.0).powi(2)).sum::<f64>() / (n - 1.0);
        let var2 = raw.iter().map(|r| (r.1 - mean.1).powi(2)).sum::<f64>() / (n - 1.0);
        (var1.sqrt(), var2.sqrt())
    };
    Ok(LambdaEstimate {
        method,
        mean,
        std,
        raw: raw.to_vec(),
        degenerate: raw.len() == 1,
    })
}

/// Writes the lambda-estimate CSV:
/// `method,lambda1_mean,lambda1_std,lambda2_mean,lambda2_std`.
pub fn lambda_csv(estimates: &[LambdaEstimate]) -> String {
    let mut out = String::from("method,lambda1_mean,lambda1_std,lambda2_mean,lambda2_std\n");
    for e in estimates {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.method, e.mean.0, e.std.0, e.mean.1, e.std.1
        ));
    }
    out
}
