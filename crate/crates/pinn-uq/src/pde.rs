//! PDE residual operators mapping jets to residual values.

use crate::autodiff::{Jet, JetNodes, NodeId, Tape};
use crate::error::{Error, Result};

/// Kinematic viscosity of the 1-D Burgers benchmark.
pub const BURGERS_NU: f64 = 0.01 / std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PdeKind {
    Burgers1D,
    NavierStokes2D,
}

/// Problem statement: equation kind, PDE parameters, and the space-time box
/// (`lo`/`hi` list the spatial coordinates followed by time).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PdeProblem {
    pub kind: PdeKind,
    /// (lambda_1, lambda_2) for Navier-Stokes; ignored by Burgers.
    pub lambda: (f64, f64),
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl PdeProblem {
    /// Burgers on x in [-1, 1], t in [0, 1] with nu = 0.01/pi.
    pub fn burgers() -> Self {
        PdeProblem {
            kind: PdeKind::Burgers1D,
            lambda: (1.0, BURGERS_NU),
            lo: vec![-1.0, 0.0],
            hi: vec![1.0, 1.0],
        }
    }

    /// Navier-Stokes on [0, 2pi]^2 x [0, horizon] with lambda = (1, 0.01).
    pub fn navier_stokes(horizon: f64) -> Self {
        let two_pi = 2.0 * std::f64::consts::PI;
        PdeProblem {
            kind: PdeKind::NavierStokes2D,
            lambda: (1.0, 1e-2),
            lo: vec![0.0, 0.0, 0.0],
            hi: vec![two_pi, two_pi, horizon],
        }
    }

    /// Space-time coordinate dimension (network input dimension).
    pub fn coord_dim(&self) -> usize {
        self.lo.len()
    }

    /// Number of network outputs: u for Burgers, (u, v, p) for NS.
    pub fn output_dim(&self) -> usize {
        match self.kind {
            PdeKind::Burgers1D => 1,
            PdeKind::NavierStokes2D => 3,
        }
    }

    /// Number of state components observed by sensors (pressure is never
    /// observed).
    pub fn observed_dim(&self) -> usize {
        match self.kind {
            PdeKind::Burgers1D => 1,
            PdeKind::NavierStokes2D => 2,
        }
    }

    /// Input indices whose pure second derivatives the residual needs.
    pub fn second_indices(&self) -> Vec<usize> {
        match self.kind {
            PdeKind::Burgers1D => vec![0],
            PdeKind::NavierStokes2D => vec![0, 1],
        }
    }

    pub fn residual_dim(&self) -> usize {
        match self.kind {
            PdeKind::Burgers1D => 1,
            PdeKind::NavierStokes2D => 3,
        }
    }

    pub fn contains(&self, coords: &[f64]) -> bool {
        coords.len() == self.lo.len()
            && coords
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(c, (l, h))| *c >= *l && *c <= *h)
    }
}

/// Per-equation residual values at one collocation point.
pub type ResidualVector = Vec<f64>;

fn second_slot(jet_seconds: &[usize], want: usize) -> Result<usize> {
    jet_seconds
        .iter()
        .position(|&s| s == want)
        .ok_or_else(|| {
            Error::Dimension(format!(
                "jet is missing the second-derivative column for input {want}"
            ))
        })
}

/// r = u_t + u u_x - (0.01/pi) u_xx.
pub fn burgers_residual(jet: &Jet) -> Result<ResidualVector> {
    if jet.d1.len() < 1 || jet.d1[0].len() < 2 {
        return Err(Error::Dimension(
            "Burgers residual needs u with derivatives in (x, t)".into(),
        ));
    }
    let sx = second_slot(&jet.second_indices, 0)?;
    let u = jet.value[0];
    let u_x = jet.d1[0][0];
    let u_t = jet.d1[0][1];
    let u_xx = jet.d2[0][sx];
    Ok(vec![u_t + u * u_x - BURGERS_NU * u_xx])
}

/// Momentum and continuity residuals of 2-D incompressible flow:
/// r1 = u_t + l1 (u u_x + v u_y) + p_x - l2 (u_xx + u_yy),
/// r2 = v_t + l1 (u v_x + v v_y) + p_y - l2 (v_xx + v_yy),
/// r3 = u_x + v_y.
pub fn navier_stokes_residual(jet: &Jet, lambda: (f64, f64)) -> Result<ResidualVector> {
    if jet.value.len() < 3 || jet.d1.len() < 3 || jet.d1[0].len() < 3 {
        return Err(Error::Dimension(
            "NS residual needs (u, v, p) with derivatives in (x, y, t)".into(),
        ));
    }
    let sx = second_slot(&jet.second_indices, 0)?;
    let sy = second_slot(&jet.second_indices, 1)?;
    let (l1, l2) = lambda;
    let (u, v) = (jet.value[0], jet.value[1]);
    let (u_x, u_y, u_t) = (jet.d1[0][0], jet.d1[0][1], jet.d1[0][2]);
    let (v_x, v_y, v_t) = (jet.d1[1][0], jet.d1[1][1], jet.d1[1][2]);
    let (p_x, p_y) = (jet.d1[2][0], jet.d1[2][1]);
    let (u_xx, u_yy) = (jet.d2[0][sx], jet.d2[0][sy]);
    let (v_xx, v_yy) = (jet.d2[1][sx], jet.d2[1][sy]);
    let r1 = u_t + l1 * (u * u_x + v * u_y) + p_x - l2 * (u_xx + u_yy);
    let r2 = v_t + l1 * (u * v_x + v * v_y) + p_y - l2 * (v_xx + v_yy);
    let r3 = u_x + v_y;
    Ok(vec![r1, r2, r3])
}

/// PDE parameters as they appear on a tape: fixed constants in forward
/// mode, leaf-derived nodes in inverse mode.
#[derive(Debug, Clone, Copy)]
pub enum LambdaNodes {
    Fixed(f64, f64),
    Nodes(NodeId, NodeId),
}

impl LambdaNodes {
    #[inline]
    fn mul_1(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        match self {
            LambdaNodes::Fixed(l1, _) => tape.scale(x, *l1),
            LambdaNodes::Nodes(l1, _) => tape.mul(*l1, x),
        }
    }

    #[inline]
    fn mul_2(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        match self {
            LambdaNodes::Fixed(_, l2) => tape.scale(x, *l2),
            LambdaNodes::Nodes(_, l2) => tape.mul(*l2, x),
        }
    }
}

/// Taped Burgers residual over a recorded jet.
pub fn burgers_residual_taped(tape: &mut Tape, jet: &JetNodes) -> Result<Vec<NodeId>> {
    let sx = second_slot(&jet.second_indices, 0)?;
    let u = jet.value[0];
    let u_x = jet.d1[0][0];
    let u_t = jet.d1[0][1];
    let u_xx = jet.d2[0][sx];
    let adv = tape.mul(u, u_x);
    let lhs = tape.add(u_t, adv);
    let diff = tape.scale(u_xx, BURGERS_NU);
    Ok(vec![tape.sub(lhs, diff)])
}

/// Taped Navier-Stokes residual over a recorded jet.
pub fn navier_stokes_residual_taped(
    tape: &mut Tape,
    jet: &JetNodes,
    lambda: LambdaNodes,
) -> Result<Vec<NodeId>> {
    let sx = second_slot(&jet.second_indices, 0)?;
    let sy = second_slot(&jet.second_indices, 1)?;
    let (u, v) = (jet.value[0], jet.value[1]);
    let momentum = |tape: &mut Tape, w: usize| -> NodeId {
        let w_x = jet.d1[w][0];
        let w_y = jet.d1[w][1];
        let w_t = jet.d1[w][2];
        let w_xx = jet.d2[w][sx];
        let w_yy = jet.d2[w][sy];
        let p_grad = jet.d1[2][w]; // p_x for u-momentum, p_y for v-momentum
        let a1 = tape.mul(u, w_x);
        let a2 = tape.mul(v, w_y);
        let adv = tape.add(a1, a2);
        let adv = lambda.mul_1(tape, adv);
        let lap = tape.add(w_xx, w_yy);
        let diff = lambda.mul_2(tape, lap);
        let s = tape.add(w_t, adv);
        let s = tape.add(s, p_grad);
        tape.sub(s, diff)
    };
    let r1 = momentum(tape, 0);
    let r2 = momentum(tape, 1);
    let r3 = tape.add(jet.d1[0][0], jet.d1[1][1]);
    Ok(vec![r1, r2, r3])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{forward_jet, forward_jet_taped};
    use crate::mlp::{init_params, NetworkSpec};
    use crate::oracles::taylor_green::taylor_green_analytic_jet;
    use crate::rng::{rng, Stream};

    fn zero_jet(outputs: usize, inputs: usize, seconds: &[usize]) -> Jet {
        Jet {
            value: vec![0.0; outputs],
            d1: vec![vec![0.0; inputs]; outputs],
            d2: vec![vec![0.0; seconds.len()]; outputs],
            second_indices: seconds.to_vec(),
        }
    }

    #[test]
    fn zero_and_constant_fields_solve_burgers() {
        let jet = zero_jet(1, 2, &[0]);
        assert_eq!(burgers_residual(&jet).unwrap(), vec![0.0]);
        let mut c = zero_jet(1, 2, &[0]);
        c.value[0] = 1.0;
        assert_eq!(burgers_residual(&c).unwrap(), vec![0.0]);
    }

    #[test]
    fn missing_second_column_is_error() {
        let jet = zero_jet(1, 2, &[1]);
        assert!(burgers_residual(&jet).is_err());
    }

    #[test]
    fn zero_velocity_constant_pressure_solves_ns() {
        let mut jet = zero_jet(3, 3, &[0, 1]);
        jet.value[2] = 3.5; // constant pressure, zero gradient
        assert_eq!(
            navier_stokes_residual(&jet, (1.0, 0.01)).unwrap(),
            vec![0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn taylor_green_analytic_jets_give_zero_residual() {
        let nu = 0.01;
        for &(x, y, t) in &[
            (0.4, 1.1, 0.0),
            (2.0, 5.0, 0.5),
            (3.9, 0.2, 1.0),
            (6.0, 6.0, 2.0),
        ] {
            let jet = taylor_green_analytic_jet(x, y, t, nu);
            let r = navier_stokes_residual(&jet, (1.0, nu)).unwrap();
            for c in &r {
                assert!(c.abs() < 1e-12, "residual {c} at ({x},{y},{t})");
            }
        }
    }

    #[test]
    fn perturbed_lambda2_breaks_momentum_not_continuity() {
        let nu = 0.01;
        let jet = taylor_green_analytic_jet(1.3, 2.2, 0.7, nu);
        let r = navier_stokes_residual(&jet, (1.0, 2.0 * nu)).unwrap();
        assert!(r[0].abs() > 1e-6 || r[1].abs() > 1e-6);
        assert!(r[2].abs() < 1e-12);
    }

    #[test]
    fn residual_is_affine_in_lambda() {
        // collinearity in lambda2 at fixed jet: r(l2) is affine, so the
        // second difference over three equispaced values vanishes
        let jet = taylor_green_analytic_jet(0.9, 4.0, 0.3, 0.01);
        let r0 = navier_stokes_residual(&jet, (0.7, 0.01)).unwrap();
        let r1 = navier_stokes_residual(&jet, (0.7, 0.02)).unwrap();
        let r2 = navier_stokes_residual(&jet, (0.7, 0.03)).unwrap();
        for k in 0..3 {
            let second_diff = r2[k] - 2.0 * r1[k] + r0[k];
            assert!(second_diff.abs() < 1e-14);
        }
        // and affine in lambda1
        let s0 = navier_stokes_residual(&jet, (0.5, 0.02)).unwrap();
        let s1 = navier_stokes_residual(&jet, (1.0, 0.02)).unwrap();
        let s2 = navier_stokes_residual(&jet, (1.5, 0.02)).unwrap();
        for k in 0..3 {
            assert!((s2[k] - 2.0 * s1[k] + s0[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn continuity_independent_of_lambda_and_pressure() {
        let mut jet = taylor_green_analytic_jet(2.5, 1.5, 0.2, 0.01);
        let r_a = navier_stokes_residual(&jet, (0.3, 0.5)).unwrap();
        // rescale the pressure entries
        jet.value[2] *= 7.0;
        for v in jet.d1[2].iter_mut() {
            *v *= 7.0;
        }
        for v in jet.d2[2].iter_mut() {
            *v *= 7.0;
        }
        let r_b = navier_stokes_residual(&jet, (2.0, 0.01)).unwrap();
        assert_eq!(r_a[2], r_b[2]);
    }

    #[test]
    fn taped_residual_matches_plain_for_burgers_and_ns() {
        let spec = NetworkSpec::new(2, 1, 2, 5);
        let p = init_params(&spec, &mut rng(17, Stream::Init));
        let input = [0.2, 0.6];
        let jet = forward_jet(&spec, &p.0, &input, &[0]).unwrap();
        let plain = burgers_residual(&jet).unwrap();
        let mut tape = Tape::with_leaves(&p.0);
        let nodes = forward_jet_taped(&mut tape, &spec, &input, &[0]).unwrap();
        let taped = burgers_residual_taped(&mut tape, &nodes).unwrap();
        assert_eq!(plain[0].to_bits(), tape.value(taped[0]).to_bits());

        let spec = NetworkSpec::new(3, 3, 2, 6);
        let p = init_params(&spec, &mut rng(18, Stream::Init));
        let input = [1.0, 2.0, 0.4];
        let jet = forward_jet(&spec, &p.0, &input, &[0, 1]).unwrap();
        let lambda = (1.0, 0.01);
        let plain = navier_stokes_residual(&jet, lambda).unwrap();
        let mut tape = Tape::with_leaves(&p.0);
        let nodes = forward_jet_taped(&mut tape, &spec, &input, &[0, 1]).unwrap();
        let taped =
            navier_stokes_residual_taped(&mut tape, &nodes, LambdaNodes::Fixed(1.0, 0.01))
                .unwrap();
        for (a, b) in plain.iter().zip(&taped) {
            assert!((a - tape.value(*b)).abs() < 1e-14);
        }
    }

    #[test]
    fn residual_parameter_gradient_passes_fd() {
        let spec = NetworkSpec::new(2, 1, 2, 4);
        let p = init_params(&spec, &mut rng(23, Stream::Init));
        let input = [0.5, 0.25];
        let mut tape = Tape::with_leaves(&p.0);
        let nodes = forward_jet_taped(&mut tape, &spec, &input, &[0]).unwrap();
        let r = burgers_residual_taped(&mut tape, &nodes).unwrap()[0];
        let grad = tape.backward(r).unwrap();
        let numeric = crate::autodiff::central_diff_grad(
            |theta: &[f64]| {
                let jet = forward_jet(&spec, theta, &input, &[0]).unwrap();
                burgers_residual(&jet).unwrap()[0]
            },
            &p.0,
            1e-4,
        );
        for (g, n) in grad.iter().zip(&numeric) {
            assert!((g - n).abs() / (g.abs() + 1e-8) < 1e-5, "{g} vs {n}");
        }
    }

    #[test]
    fn domain_membership() {
        let b = PdeProblem::burgers();
        assert!(b.contains(&[0.0, 0.5]));
        assert!(!b.contains(&[1.5, 0.5]));
        assert!(!b.contains(&[0.0, -0.1]));
    }
}
