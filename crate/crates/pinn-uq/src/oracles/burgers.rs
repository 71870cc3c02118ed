//! Exact Burgers reference solution.
//!
//! The Cole-Hopf transform turns Burgers' equation with u(x,0) = -sin(pi x)
//! into a heat equation whose solution is a Gaussian integral of
//! phi0(y) = exp((1 - cos(pi y)) / (2 nu pi)). Substituting
//! y = x - 2 sqrt(nu t) z puts both the numerator and denominator in
//! Gauss-Hermite form:
//!
//!   u(x,t) = 2 sqrt(nu/t) * sum_i w_i z_i phi0(y_i) / sum_i w_i phi0(y_i)
//!
//! which this module evaluates with a >= 100-node rule. phi0 exponents are
//! shifted by their maximum before exponentiation so the ratio stays well
//! scaled for all (x, t) in the domain.

use crate::error::{Error, Result};
use crate::pde::BURGERS_NU;
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Gauss-Hermite quadrature rule for weight e^{-z^2}.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Orthonormal Hermite value p_n(x) and the sum of squares
/// sum_{k<n} p_k(x)^2 (the reciprocal Christoffel weight).
fn hermite_eval(n: usize, x: f64) -> (f64, f64, f64) {
    // orthonormal recurrence for weight e^{-x^2}:
    // p_0 = pi^{-1/4}, p_{k+1} = x sqrt(2/(k+1)) p_k - sqrt(k/(k+1)) p_{k-1}
    let mut pm = 0.0f64;
    let mut p = PI.powf(-0.25);
    let mut sumsq = 0.0;
    for k in 0..n {
        sumsq += p * p;
        let pn = x * (2.0 / (k as f64 + 1.0)).sqrt() * p
            - (k as f64 / (k as f64 + 1.0)).sqrt() * pm;
        pm = p;
        p = pn;
    }
    // derivative: p_n'(x) = sqrt(2n) p_{n-1}(x)
    let dp = (2.0 * n as f64).sqrt() * pm;
    (p, dp, sumsq)
}

impl GaussHermite {
    /// Computes the n-point rule: positive roots of the orthonormal Hermite
    /// polynomial are bracketed by a sign scan, polished by bisection plus
    /// Newton, and mirrored so nodes come out exactly symmetric about zero.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let m = n / 2;
        let bound = (2.0 * n as f64 + 1.0).sqrt();
        // roots are at least ~pi/sqrt(2n+1) apart near the center
        let step = std::f64::consts::PI / (4.0 * bound);
        let mut pos = Vec::with_capacity(m);
        // for odd n zero is itself a root; start clear of it
        let start = if n % 2 == 1 { 0.5 * step } else { 0.0 };
        let mut a = start;
        let mut fa = hermite_eval(n, a).0;
        while pos.len() < m {
            let b = a + step;
            let fb = hermite_eval(n, b).0;
            if fa == 0.0 {
                pos.push(a);
            } else if fa * fb < 0.0 {
                // bisect, then polish with Newton
                let (mut lo, mut hi, mut flo) = (a, b, fa);
                for _ in 0..40 {
                    let mid = 0.5 * (lo + hi);
                    let fm = hermite_eval(n, mid).0;
                    if flo * fm <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                        flo = fm;
                    }
                }
                let mut z = 0.5 * (lo + hi);
                for _ in 0..8 {
                    let (p, dp, _) = hermite_eval(n, z);
                    let dz = p / dp;
                    z -= dz;
                    if dz.abs() < 1e-15 * (1.0 + z.abs()) {
                        break;
                    }
                }
                pos.push(z);
            }
            a = b;
            fa = fb;
            assert!(a < bound + 1.0, "Hermite root scan ran past the bound");
        }
        pos.sort_by(|x, y| y.partial_cmp(x).unwrap());
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for (i, &z) in pos.iter().enumerate() {
            let (_, _, sumsq) = hermite_eval(n, z);
            let w = 1.0 / sumsq; // Christoffel number
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            let (_, _, sumsq) = hermite_eval(n, 0.0);
            nodes[m] = 0.0;
            weights[m] = 1.0 / sumsq;
        }
        GaussHermite { nodes, weights }
    }
}

/// Cole-Hopf evaluator with a fixed quadrature resolution.
#[derive(Debug, Clone)]
pub struct BurgersExact {
    rule: GaussHermite,
}

impl BurgersExact {
    pub fn new(n_nodes: usize) -> Self {
        assert!(n_nodes >= 100, "the quadrature needs at least 100 nodes");
        BurgersExact {
            rule: GaussHermite::new(n_nodes),
        }
    }

    /// phi0 exponent: (1 - cos(pi y)) / (2 nu pi), in [0, 1/(nu pi)].
    #[inline]
    fn log_phi0(y: f64) -> f64 {
        (1.0 - (PI * y).cos()) / (2.0 * BURGERS_NU * PI)
    }

    /// u(x, t) for x in [-1, 1], t in [0, 1].
    pub fn eval(&self, x: f64, t: f64) -> Result<f64> {
        const EDGE: f64 = 1e-12;
        if !(-1.0 - EDGE..=1.0 + EDGE).contains(&x) || !(-EDGE..=1.0 + EDGE).contains(&t) {
            return Err(Error::Domain(format!(
                "Burgers oracle evaluated outside [-1,1]x[0,1]: ({x}, {t})"
            )));
        }
        if t <= 1e-13 {
            return Ok(-(PI * x).sin());
        }
        let s = 2.0 * (BURGERS_NU * t).sqrt();
        let n = self.rule.nodes.len();
        let mut exps = Vec::with_capacity(n);
        let mut emax = f64::NEG_INFINITY;
        for &z in &self.rule.nodes {
            let e = Self::log_phi0(x - s * z);
            emax = emax.max(e);
            exps.push(e);
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for ((&z, &w), &e) in self.rule.nodes.iter().zip(&self.rule.weights).zip(&exps) {
            let phi = (e - emax).exp();
            num += w * z * phi;
            den += w * phi;
        }
        Ok(2.0 * (BURGERS_NU / t).sqrt() * num / den)
    }
}

fn default_rule() -> &'static BurgersExact {
    static RULE: OnceLock<BurgersExact> = OnceLock::new();
    RULE.get_or_init(|| BurgersExact::new(128))
}

/// u(x, t) under the default 128-node rule.
pub fn burgers_exact(x: f64, t: f64) -> Result<f64> {
    default_rule().eval(x, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_rule_matches_known_small_rules() {
        // n = 2: nodes +-1/sqrt(2), weights sqrt(pi)/2
        let r = GaussHermite::new(2);
        assert!((r.nodes[0] - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((r.weights[0] - PI.sqrt() / 2.0).abs() < 1e-14);
        // n = 3: nodes +-sqrt(3/2), 0; weights sqrt(pi)/6, 2 sqrt(pi)/3
        let r = GaussHermite::new(3);
        assert!((r.nodes[0] - (1.5f64).sqrt()).abs() < 1e-13);
        assert_eq!(r.nodes[1], 0.0);
        assert!((r.weights[0] - PI.sqrt() / 6.0).abs() < 1e-13);
        assert!((r.weights[1] - 2.0 * PI.sqrt() / 3.0).abs() < 1e-13);
    }

    #[test]
    fn quadrature_moments_are_exact() {
        for n in [100usize, 128, 200] {
            let r = GaussHermite::new(n);
            let m0: f64 = r.weights.iter().sum();
            let m2: f64 = r
                .nodes
                .iter()
                .zip(&r.weights)
                .map(|(z, w)| w * z * z)
                .sum();
            let m4: f64 = r
                .nodes
                .iter()
                .zip(&r.weights)
                .map(|(z, w)| w * z.powi(4))
                .sum();
            assert!((m0 - PI.sqrt()).abs() < 1e-12, "n={n} m0");
            assert!((m2 - PI.sqrt() / 2.0).abs() < 1e-12, "n={n} m2");
            assert!((m4 - 0.75 * PI.sqrt()).abs() < 1e-11, "n={n} m4");
        }
    }

    #[test]
    fn initial_condition_recovered() {
        for i in 0..=20 {
            let x = -1.0 + 0.1 * i as f64;
            let u = burgers_exact(x, 0.0).unwrap();
            assert!((u + (PI * x).sin()).abs() < 1e-10, "x={x}");
        }
        // and continuously for small positive t
        let u = burgers_exact(0.3, 1e-9).unwrap();
        assert!((u + (PI * 0.3).sin()).abs() < 1e-4);
    }

    #[test]
    fn boundary_values_vanish() {
        for i in 0..=10 {
            let t = 0.1 * i as f64;
            assert!(burgers_exact(-1.0, t).unwrap().abs() < 1e-8);
            assert!(burgers_exact(1.0, t).unwrap().abs() < 1e-8);
        }
    }

    #[test]
    fn solution_is_antisymmetric_in_x() {
        for &(x, t) in &[(0.3, 0.2), (0.7, 0.5), (0.05, 0.9), (0.5, 1.0)] {
            let up = burgers_exact(x, t).unwrap();
            let um = burgers_exact(-x, t).unwrap();
            assert!((up + um).abs() < 1e-10, "({x},{t}): {up} vs {um}");
        }
    }

    #[test]
    fn node_count_convergence_away_from_shock() {
        let coarse = BurgersExact::new(100);
        let fine = BurgersExact::new(200);
        for &(x, t) in &[
            (0.5, 0.2),
            (-0.7, 0.9),
            (0.2, 0.3),
            (0.051, 1.0),
            (0.9, 0.6),
        ] {
            let a = coarse.eval(x, t).unwrap();
            let b = fine.eval(x, t).unwrap();
            assert!((a - b).abs() < 1e-8, "({x},{t}): {a} vs {b}");
        }
    }

    #[test]
    fn out_of_domain_rejected() {
        assert!(burgers_exact(1.2, 0.5).is_err());
        assert!(burgers_exact(0.0, -0.1).is_err());
        assert!(burgers_exact(0.0, 1.5).is_err());
    }

    /// Independent coarse finite-difference cross-check (conservative flux
    /// form, forward Euler). The acceptance suite runs the fine version.
    #[test]
    fn finite_difference_cross_check_coarse() {
        let n = 1024usize; // intervals over [-1, 1]
        let dx = 2.0 / n as f64;
        let dt = 2e-5f64;
        let mut u: Vec<f64> = (0..=n)
            .map(|i| {
                let x = -1.0 + i as f64 * dx;
                -(PI * x).sin()
            })
            .collect();
        let steps = (0.5 / dt).round() as usize;
        let mut next = u.clone();
        for _ in 0..steps {
            for i in 1..n {
                let flux = (u[i + 1] * u[i + 1] - u[i - 1] * u[i - 1]) / (4.0 * dx);
                let visc = BURGERS_NU * (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (dx * dx);
                next[i] = u[i] + dt * (visc - flux);
            }
            std::mem::swap(&mut u, &mut next);
        }
        for &x in &[-0.75, -0.5, -0.25, 0.25, 0.5, 0.75] {
            let i = ((x + 1.0) / dx).round() as usize;
            let exact = burgers_exact(x, 0.5).unwrap();
            assert!(
                (u[i] - exact).abs() < 1e-3,
                "x={x}: fd {} vs quadrature {exact}",
                u[i]
            );
        }
    }
}
