//! Jet propagation: network output values together with first and diagonal
//! second input-derivatives, computed layer by layer.
//!
//! The same propagation code runs in two modes: a plain f64 evaluation, and
//! a taped evaluation where every scalar step is recorded so that one
//! reverse sweep differentiates any jet component with respect to the
//! parameters. Both modes execute the identical arithmetic sequence, so
//! their values agree bit for bit.

use super::tape::{NodeId, OpKind, Tape};
use crate::error::{Error, Result};
use crate::mlp::{DropoutMask, NetworkSpec};

/// Network output at one input point with input-derivatives:
/// `d1[k][i]` = d(output_k)/d(input_i), `d2[k][s]` = the pure second
/// derivative of output_k with respect to input `second_indices[s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: Vec<f64>,
    pub d1: Vec<Vec<f64>>,
    pub d2: Vec<Vec<f64>>,
    pub second_indices: Vec<usize>,
}

/// Node ids of a jet recorded on a tape; same layout as [`Jet`].
#[derive(Debug, Clone)]
pub struct JetNodes {
    pub value: Vec<NodeId>,
    pub d1: Vec<Vec<NodeId>>,
    pub d2: Vec<Vec<NodeId>>,
    pub second_indices: Vec<usize>,
}

impl JetNodes {
    /// Reads the numeric jet back off the tape.
    pub fn values(&self, tape: &Tape) -> Jet {
        Jet {
            value: self.value.iter().map(|&n| tape.value(n)).collect(),
            d1: self
                .d1
                .iter()
                .map(|row| row.iter().map(|&n| tape.value(n)).collect())
                .collect(),
            d2: self
                .d2
                .iter()
                .map(|row| row.iter().map(|&n| tape.value(n)).collect())
                .collect(),
            second_indices: self.second_indices.clone(),
        }
    }
}

#[inline]
fn tanh_d1_val(a: f64, zx: f64) -> f64 {
    (1.0 - a * a) * zx
}

#[inline]
fn tanh_d2_val(a: f64, zx: f64, zxx: Option<f64>) -> f64 {
    let s = 1.0 - a * a;
    let curv = -2.0 * a * s * (zx * zx);
    match zxx {
        Some(w) => s * w + curv,
        None => curv,
    }
}

/// Scalar evaluation backend for jet propagation.
pub(crate) trait Engine {
    type V: Copy;
    /// k * parameter(idx), one scalar.
    fn scale_param(&mut self, idx: usize, k: f64) -> Self::V;
    /// params[bias] + sum_k params[w_start+k] * xs[k] over constant inputs.
    fn affine_const(&mut self, w_start: usize, xs: &[f64], bias: usize) -> Self::V;
    /// optional bias + sum_k params[w_start+k] * acts[k].
    fn affine(&mut self, w_start: usize, acts: &[Self::V], bias: Option<usize>) -> Self::V;
    fn scale(&mut self, a: Self::V, k: f64) -> Self::V;
    fn tanh(&mut self, z: Self::V) -> Self::V;
    /// (1 - a^2) * zx where a = tanh(z).
    fn tanh_d1(&mut self, z: Self::V, a: Self::V, zx: Self::V) -> Self::V;
    /// (1 - a^2) * zxx - 2 a (1 - a^2) zx^2; `zxx` of None means exactly 0.
    fn tanh_d2(&mut self, z: Self::V, a: Self::V, zx: Self::V, zxx: Option<Self::V>) -> Self::V;
}

/// Pure f64 evaluation over a parameter slice.
pub(crate) struct PlainEngine<'a> {
    pub params: &'a [f64],
}

impl Engine for PlainEngine<'_> {
    type V = f64;

    #[inline]
    fn scale_param(&mut self, idx: usize, k: f64) -> f64 {
        k * self.params[idx]
    }

    #[inline]
    fn affine_const(&mut self, w_start: usize, xs: &[f64], bias: usize) -> f64 {
        let mut acc = self.params[bias];
        for (k, x) in xs.iter().enumerate() {
            acc += self.params[w_start + k] * x;
        }
        acc
    }

    #[inline]
    fn affine(&mut self, w_start: usize, acts: &[f64], bias: Option<usize>) -> f64 {
        let mut acc = bias.map_or(0.0, |b| self.params[b]);
        for (k, a) in acts.iter().enumerate() {
            acc += self.params[w_start + k] * a;
        }
        acc
    }

    #[inline]
    fn scale(&mut self, a: f64, k: f64) -> f64 {
        k * a
    }

    #[inline]
    fn tanh(&mut self, z: f64) -> f64 {
        z.tanh()
    }

    #[inline]
    fn tanh_d1(&mut self, _z: f64, a: f64, zx: f64) -> f64 {
        tanh_d1_val(a, zx)
    }

    #[inline]
    fn tanh_d2(&mut self, _z: f64, a: f64, zx: f64, zxx: Option<f64>) -> f64 {
        tanh_d2_val(a, zx, zxx)
    }
}

/// Recording evaluation: every step lands on the tape. Parameter values are
/// read from the tape's leaves, which must hold the current parameters.
pub(crate) struct TapeEngine<'a> {
    pub tape: &'a mut Tape,
}

impl Engine for TapeEngine<'_> {
    type V = NodeId;

    fn scale_param(&mut self, idx: usize, k: f64) -> NodeId {
        let v = k * self.tape.value(idx as NodeId);
        let id = self.tape.push_node(OpKind::Scale, v);
        self.tape.push_edge(idx as NodeId, k);
        id
    }

    fn affine_const(&mut self, w_start: usize, xs: &[f64], bias: usize) -> NodeId {
        self.tape.affine_const_node(w_start, xs, bias)
    }

    fn affine(&mut self, w_start: usize, acts: &[NodeId], bias: Option<usize>) -> NodeId {
        self.tape.affine_node(w_start, acts, bias)
    }

    fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        self.tape.scale(a, k)
    }

    fn tanh(&mut self, z: NodeId) -> NodeId {
        self.tape.tanh(z)
    }

    fn tanh_d1(&mut self, z: NodeId, a: NodeId, zx: NodeId) -> NodeId {
        let av = self.tape.value(a);
        let zxv = self.tape.value(zx);
        let s = 1.0 - av * av;
        let id = self
            .tape
            .push_node(OpKind::TanhD1, tanh_d1_val(av, zxv));
        self.tape.push_edge(z, -2.0 * av * s * zxv);
        self.tape.push_edge(zx, s);
        id
    }

    fn tanh_d2(&mut self, z: NodeId, a: NodeId, zx: NodeId, zxx: Option<NodeId>) -> NodeId {
        let av = self.tape.value(a);
        let zxv = self.tape.value(zx);
        let zxxv = zxx.map(|n| self.tape.value(n));
        let s = 1.0 - av * av;
        let value = tanh_d2_val(av, zxv, zxxv);
        let id = self.tape.push_node(OpKind::TanhD2, value);
        let dz = -2.0 * av * s * zxxv.unwrap_or(0.0)
            - 2.0 * s * (1.0 - 3.0 * av * av) * (zxv * zxv);
        self.tape.push_edge(z, dz);
        self.tape.push_edge(zx, -4.0 * av * s * zxv);
        if let Some(w) = zxx {
            self.tape.push_edge(w, s);
        }
        id
    }
}

fn validate_jet_request(spec: &NetworkSpec, input: &[f64], second: &[usize]) -> Result<()> {
    if input.len() != spec.input_dim {
        return Err(Error::Dimension(format!(
            "input dimension {} != spec input_dim {}",
            input.len(),
            spec.input_dim
        )));
    }
    for &s in second {
        if s >= spec.input_dim {
            return Err(Error::Dimension(format!(
                "second-derivative index {s} out of range for input_dim {}",
                spec.input_dim
            )));
        }
    }
    Ok(())
}

/// Layer-by-layer propagation of (value, d1, d2) streams. The d2 streams
/// stay `None` while they are structurally zero (before the first
/// nonlinearity).
pub(crate) fn propagate<E: Engine>(
    eng: &mut E,
    spec: &NetworkSpec,
    input: &[f64],
    second: &[usize],
    mask: Option<&DropoutMask>,
) -> (Vec<E::V>, Vec<Vec<E::V>>, Vec<Vec<E::V>>) {
    let dims = spec.layer_dims();
    let layout = spec.layout();
    let n_layers = dims.len();
    let n_in = spec.input_dim;
    let n_sec = second.len();
    let xs = spec.transform_input(input);

    // first affine layer from constant inputs
    let (fi, fo) = dims[0];
    let (w0, b0) = layout[0];
    let mut z: Vec<E::V> = (0..fo)
        .map(|r| eng.affine_const(w0 + r * fi, &xs, b0 + r))
        .collect();
    let mut zd1: Vec<Vec<E::V>> = (0..n_in)
        .map(|j| {
            (0..fo)
                .map(|r| eng.scale_param(w0 + r * fi + j, spec.input_scale[j]))
                .collect()
        })
        .collect();
    let mut zd2: Vec<Option<Vec<E::V>>> = vec![None; n_sec];

    for l in 1..n_layers {
        // nonlinearity + dropout of hidden layer l-1
        let width = z.len();
        let a: Vec<E::V> = z.iter().map(|&zi| eng.tanh(zi)).collect();
        let mut ad1: Vec<Vec<E::V>> = (0..n_in)
            .map(|j| {
                (0..width)
                    .map(|r| eng.tanh_d1(z[r], a[r], zd1[j][r]))
                    .collect()
            })
            .collect();
        let mut ad2: Vec<Vec<E::V>> = (0..n_sec)
            .map(|s| {
                let jx = second[s];
                (0..width)
                    .map(|r| {
                        let zxx = zd2[s].as_ref().map(|v| v[r]);
                        eng.tanh_d2(z[r], a[r], zd1[jx][r], zxx)
                    })
                    .collect()
            })
            .collect();
        let mut a = a;
        if let Some(m) = mask {
            for r in 0..width {
                let f = m.factor(l - 1, r, spec.hidden_width);
                if f != 1.0 {
                    a[r] = eng.scale(a[r], f);
                    for j in 0..n_in {
                        ad1[j][r] = eng.scale(ad1[j][r], f);
                    }
                    for s in 0..n_sec {
                        ad2[s][r] = eng.scale(ad2[s][r], f);
                    }
                }
            }
        }

        // affine layer l
        let (fi, fo) = dims[l];
        let (w0, b0) = layout[l];
        debug_assert_eq!(fi, width);
        z = (0..fo)
            .map(|r| eng.affine(w0 + r * fi, &a, Some(b0 + r)))
            .collect();
        zd1 = (0..n_in)
            .map(|j| {
                (0..fo)
                    .map(|r| eng.affine(w0 + r * fi, &ad1[j], None))
                    .collect()
            })
            .collect();
        zd2 = (0..n_sec)
            .map(|s| {
                Some(
                    (0..fo)
                        .map(|r| eng.affine(w0 + r * fi, &ad2[s], None))
                        .collect(),
                )
            })
            .collect();
    }

    // transpose derivative streams into per-output rows
    let n_out = spec.output_dim;
    let d1 = (0..n_out)
        .map(|k| (0..n_in).map(|j| zd1[j][k]).collect())
        .collect();
    let d2 = (0..n_out)
        .map(|k| {
            (0..n_sec)
                .map(|s| zd2[s].as_ref().expect("materialized after layer 1")[k])
                .collect()
        })
        .collect();
    (z, d1, d2)
}

/// Plain jet: value, first derivatives with respect to every input, and
/// pure second derivatives for the requested input indices.
pub fn forward_jet(
    spec: &NetworkSpec,
    params: &[f64],
    input: &[f64],
    second_order_indices: &[usize],
) -> Result<Jet> {
    forward_jet_masked(spec, params, input, second_order_indices, None)
}

pub fn forward_jet_masked(
    spec: &NetworkSpec,
    params: &[f64],
    input: &[f64],
    second_order_indices: &[usize],
    mask: Option<&DropoutMask>,
) -> Result<Jet> {
    validate_jet_request(spec, input, second_order_indices)?;
    if params.len() < spec.param_count() {
        return Err(Error::Dimension(format!(
            "parameter vector length {} < required {}",
            params.len(),
            spec.param_count()
        )));
    }
    let mut eng = PlainEngine { params };
    let (value, d1, d2) = propagate(&mut eng, spec, input, second_order_indices, mask);
    Ok(Jet {
        value,
        d1,
        d2,
        second_indices: second_order_indices.to_vec(),
    })
}

/// Taped jet: records the whole computation on `tape`, whose leaves must
/// hold the current parameter vector, so `backward` can differentiate any
/// jet component with respect to the parameters.
pub fn forward_jet_taped(
    tape: &mut Tape,
    spec: &NetworkSpec,
    input: &[f64],
    second_order_indices: &[usize],
) -> Result<JetNodes> {
    forward_jet_taped_masked(tape, spec, input, second_order_indices, None)
}

pub fn forward_jet_taped_masked(
    tape: &mut Tape,
    spec: &NetworkSpec,
    input: &[f64],
    second_order_indices: &[usize],
    mask: Option<&DropoutMask>,
) -> Result<JetNodes> {
    validate_jet_request(spec, input, second_order_indices)?;
    if tape.leaf_count() < spec.param_count() {
        return Err(Error::Dimension(format!(
            "tape has {} leaves, network needs {}",
            tape.leaf_count(),
            spec.param_count()
        )));
    }
    let mut eng = TapeEngine { tape };
    let (value, d1, d2) = propagate(&mut eng, spec, input, second_order_indices, mask);
    Ok(JetNodes {
        value,
        d1,
        d2,
        second_indices: second_order_indices.to_vec(),
    })
}

/// Taped plain forward (values only, no derivative streams): used for data
/// misfit terms where input-derivatives are not needed.
pub fn forward_taped(
    tape: &mut Tape,
    spec: &NetworkSpec,
    input: &[f64],
    mask: Option<&DropoutMask>,
) -> Result<Vec<NodeId>> {
    if input.len() != spec.input_dim {
        return Err(Error::Dimension(format!(
            "input dimension {} != spec input_dim {}",
            input.len(),
            spec.input_dim
        )));
    }
    let dims = spec.layer_dims();
    let layout = spec.layout();
    let xs = spec.transform_input(input);
    let mut eng = TapeEngine { tape };
    let (fi, fo) = dims[0];
    let (w0, b0) = layout[0];
    let mut z: Vec<NodeId> = (0..fo)
        .map(|r| eng.affine_const(w0 + r * fi, &xs, b0 + r))
        .collect();
    for l in 1..dims.len() {
        let mut a: Vec<NodeId> = z.iter().map(|&zi| eng.tanh(zi)).collect();
        if let Some(m) = mask {
            for (r, ai) in a.iter_mut().enumerate() {
                let f = m.factor(l - 1, r, spec.hidden_width);
                if f != 1.0 {
                    *ai = eng.scale(*ai, f);
                }
            }
        }
        let (fi, fo) = dims[l];
        let (w0, b0) = layout[l];
        z = (0..fo)
            .map(|r| eng.affine(w0 + r * fi, &a, Some(b0 + r)))
            .collect();
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::fd::central_diff_grad;
    use crate::mlp::{forward, init_params};
    use crate::rng::{rng, Stream};

    /// Network with one hidden unit: u = w_out * tanh(w1*x + w2*t).
    fn one_unit_params(w1: f64, w2: f64, w_out: f64) -> Vec<f64> {
        // layout: [w1, w2, b_hidden, w_out, b_out]
        vec![w1, w2, 0.0, w_out, 0.0]
    }

    #[test]
    fn identity_like_net_has_unit_slope_at_origin() {
        // u(x,t) = 2*tanh(0.5*x): at x=0 value 0, d1 = (1, 0), d2 = (0, 0)
        let spec = NetworkSpec::new(2, 1, 1, 1);
        let params = one_unit_params(0.5, 0.0, 2.0);
        let jet = forward_jet(&spec, &params, &[0.0, 0.7], &[0, 1]).unwrap();
        assert_eq!(jet.value[0], 0.0);
        assert!((jet.d1[0][0] - 1.0).abs() < 1e-15);
        assert_eq!(jet.d1[0][1], 0.0);
        assert_eq!(jet.d2[0][0], 0.0);
        assert_eq!(jet.d2[0][1], 0.0);
    }

    #[test]
    fn single_tanh_unit_matches_finite_differences() {
        // u = tanh(x) at x = 0.3
        let spec = NetworkSpec::new(2, 1, 1, 1);
        let params = one_unit_params(1.0, 0.0, 1.0);
        let x = 0.3;
        let jet = forward_jet(&spec, &params, &[x, 0.5], &[0]).unwrap();
        assert!((jet.value[0] - x.tanh()).abs() < 1e-15);
        let h = 1e-5;
        let u = |x: f64| forward(&spec, &params, &[x, 0.5], None).unwrap()[0];
        let d1_fd = (u(x + h) - u(x - h)) / (2.0 * h);
        let d2_fd = (u(x + h) - 2.0 * u(x) + u(x - h)) / (h * h);
        assert!((jet.d1[0][0] - d1_fd).abs() < 1e-6);
        assert!((jet.d2[0][0] - d2_fd).abs() < 1e-4);
    }

    #[test]
    fn constant_network_has_zero_derivatives() {
        // zero final layer -> constant output -> d1 = d2 = 0 exactly
        let spec = NetworkSpec::new(2, 1, 2, 6);
        let mut params = init_params(&spec, &mut rng(13, Stream::Init)).0;
        let layout = spec.layout();
        let (w_last, _) = layout[layout.len() - 1];
        for v in params.iter_mut().skip(w_last) {
            *v = 0.0;
        }
        let jet = forward_jet(&spec, &params, &[0.4, 0.2], &[0, 1]).unwrap();
        assert_eq!(jet.d1, vec![vec![0.0, 0.0]]);
        assert_eq!(jet.d2, vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn jet_value_matches_plain_forward_bitwise() {
        let spec = NetworkSpec::new(3, 2, 3, 9).with_input_window(
            &[0.0, 0.0, 0.0],
            &[6.0, 6.0, 2.0],
        );
        let p = init_params(&spec, &mut rng(77, Stream::Init));
        let input = [1.5, 4.0, 0.3];
        let jet = forward_jet(&spec, &p.0, &input, &[0, 1]).unwrap();
        let out = forward(&spec, &p.0, &input, None).unwrap();
        for (a, b) in jet.value.iter().zip(&out) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn jet_derivatives_match_finite_differences_of_forward() {
        let spec = NetworkSpec::new(2, 1, 4, 8).with_input_window(&[-1.0, 0.0], &[1.0, 1.0]);
        let p = init_params(&spec, &mut rng(5, Stream::Init));
        let point = [0.37, 0.61];
        let jet = forward_jet(&spec, &p.0, &point, &[0, 1]).unwrap();
        let h1 = 1e-6;
        let h2 = 1e-4;
        for j in 0..2 {
            let mut xp = point;
            let mut xm = point;
            xp[j] += h1;
            xm[j] -= h1;
            let fp = forward(&spec, &p.0, &xp, None).unwrap()[0];
            let fm = forward(&spec, &p.0, &xm, None).unwrap()[0];
            let d1_fd = (fp - fm) / (2.0 * h1);
            assert!(
                (jet.d1[0][j] - d1_fd).abs() < 1e-6,
                "d1[{j}] {} vs {}",
                jet.d1[0][j],
                d1_fd
            );
            let mut xp = point;
            let mut xm = point;
            xp[j] += h2;
            xm[j] -= h2;
            let fp = forward(&spec, &p.0, &xp, None).unwrap()[0];
            let fm = forward(&spec, &p.0, &xm, None).unwrap()[0];
            let f0 = forward(&spec, &p.0, &point, None).unwrap()[0];
            let d2_fd = (fp - 2.0 * f0 + fm) / (h2 * h2);
            assert!(
                (jet.d2[0][j] - d2_fd).abs() < 1e-4,
                "d2[{j}] {} vs {}",
                jet.d2[0][j],
                d2_fd
            );
        }
    }

    #[test]
    fn plain_and_taped_jets_agree_bitwise() {
        let spec = NetworkSpec::new(2, 2, 3, 7).with_input_window(&[-1.0, 0.0], &[1.0, 1.0]);
        let p = init_params(&spec, &mut rng(21, Stream::Init));
        let input = [0.3, 0.6];
        let jet = forward_jet(&spec, &p.0, &input, &[0, 1]).unwrap();
        let mut tape = Tape::with_leaves(&p.0);
        let nodes = forward_jet_taped(&mut tape, &spec, &input, &[0, 1]).unwrap();
        let taped = nodes.values(&tape);
        for (a, b) in jet.value.iter().zip(&taped.value) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (ra, rb) in jet.d1.iter().zip(&taped.d1) {
            for (a, b) in ra.iter().zip(rb) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        for (ra, rb) in jet.d2.iter().zip(&taped.d2) {
            for (a, b) in ra.iter().zip(rb) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn parameter_gradient_of_jet_components_passes_fd() {
        // differentiate u, u_x and u_xx with respect to every parameter
        let spec = NetworkSpec::new(2, 1, 2, 4);
        let p = init_params(&spec, &mut rng(9, Stream::Init));
        let input = [0.25, 0.75];
        let mut tape = Tape::with_leaves(&p.0);
        let nodes = forward_jet_taped(&mut tape, &spec, &input, &[0]).unwrap();
        for (component, pick) in [
            ("u", nodes.value[0]),
            ("u_x", nodes.d1[0][0]),
            ("u_xx", nodes.d2[0][0]),
        ] {
            let grad = tape.backward(pick).unwrap();
            let idx = match component {
                "u" => 0,
                "u_x" => 1,
                _ => 2,
            };
            let numeric = central_diff_grad(
                |theta: &[f64]| {
                    let jet = forward_jet(&spec, theta, &input, &[0]).unwrap();
                    match idx {
                        0 => jet.value[0],
                        1 => jet.d1[0][0],
                        _ => jet.d2[0][0],
                    }
                },
                &p.0,
                1e-4,
            );
            for (g, n) in grad.iter().zip(&numeric) {
                assert!(
                    (g - n).abs() / (g.abs() + 1e-8) < 1e-5,
                    "{component}: {g} vs {n}"
                );
            }
        }
    }

    #[test]
    fn masked_jet_matches_masked_forward() {
        let spec = NetworkSpec::new(2, 1, 3, 10).with_dropout(0.3);
        let p = init_params(&spec, &mut rng(31, Stream::Init));
        let mask = DropoutMask::generate(&spec, 4242);
        let input = [0.1, 0.9];
        let jet = forward_jet_masked(&spec, &p.0, &input, &[0], Some(&mask)).unwrap();
        let out = forward(&spec, &p.0, &input, Some(&mask)).unwrap();
        assert_eq!(jet.value[0].to_bits(), out[0].to_bits());
    }

    #[test]
    fn bad_second_index_is_rejected() {
        let spec = NetworkSpec::new(2, 1, 1, 2);
        let params = vec![0.0; spec.param_count()];
        assert!(forward_jet(&spec, &params, &[0.0, 0.0], &[2]).is_err());
        assert!(forward_jet(&spec, &params, &[0.0], &[0]).is_err());
    }
}
