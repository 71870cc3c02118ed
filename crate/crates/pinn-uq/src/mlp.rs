//! Multilayer perceptron: architecture, flat parameter packing,
//! initialization, deterministic and dropout forward passes, and the flat
//! binary parameter-record format.

use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Fully-connected tanh network description.
///
/// Inputs may carry a fixed affine window transform mapping the problem
/// domain onto `[-1, 1]` per coordinate; the transform is part of the
/// architecture, not of the trainable state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// Probability of dropping a hidden unit; 0 disables dropout.
    pub dropout_rate: f64,
    /// Per-input shift applied before scaling: xi = (x - shift) * scale.
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
}

impl NetworkSpec {
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        hidden_layers: usize,
        hidden_width: usize,
    ) -> Self {
        NetworkSpec {
            input_dim,
            output_dim,
            hidden_layers,
            hidden_width,
            dropout_rate: 0.0,
            input_shift: vec![0.0; input_dim],
            input_scale: vec![1.0; input_dim],
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    /// Sets the input transform to map `[lo_i, hi_i]` onto `[-1, 1]`.
    pub fn with_input_window(mut self, lo: &[f64], hi: &[f64]) -> Self {
        assert_eq!(lo.len(), self.input_dim);
        assert_eq!(hi.len(), self.input_dim);
        self.input_shift = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
        self.input_scale = lo.iter().zip(hi).map(|(a, b)| 2.0 / (b - a)).collect();
        self
    }

    /// 1-D Burgers forward architecture: (x, t) -> u, 8 hidden layers of 20.
    pub fn burgers_forward() -> Self {
        NetworkSpec::new(2, 1, 8, 20).with_input_window(&[-1.0, 0.0], &[1.0, 1.0])
    }

    /// 2-D Navier-Stokes forward architecture: (x, y, t) -> (u, v, p),
    /// 10 hidden layers of 20, over `[0, 2pi]^2 x [0, horizon]`.
    pub fn ns_forward(horizon: f64) -> Self {
        let two_pi = 2.0 * std::f64::consts::PI;
        NetworkSpec::new(3, 3, 10, 20)
            .with_input_window(&[0.0, 0.0, 0.0], &[two_pi, two_pi, horizon])
    }

    /// Navier-Stokes inverse architecture: 10 hidden layers of 40.
    pub fn ns_inverse(horizon: f64) -> Self {
        let two_pi = 2.0 * std::f64::consts::PI;
        NetworkSpec::new(3, 3, 10, 40)
            .with_input_window(&[0.0, 0.0, 0.0], &[two_pi, two_pi, horizon])
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers < 1 || self.hidden_width < 1 {
            return Err(Error::Usage(format!(
                "network needs at least one hidden layer and unit, got {}x{}",
                self.hidden_layers, self.hidden_width
            )));
        }
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Usage("zero network input or output dimension".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Usage(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.input_shift.len() != self.input_dim || self.input_scale.len() != self.input_dim {
            return Err(Error::Dimension(
                "input transform length != input_dim".into(),
            ));
        }
        Ok(())
    }

    /// (fan_in, fan_out) per affine layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers + 1);
        dims.push((self.input_dim, self.hidden_width));
        for _ in 1..self.hidden_layers {
            dims.push((self.hidden_width, self.hidden_width));
        }
        dims.push((self.hidden_width, self.output_dim));
        dims
    }

    /// Total flat parameter count: sum of fan_in*fan_out + fan_out.
    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|(i, o)| i * o + o)
            .sum()
    }

    pub fn hidden_unit_count(&self) -> usize {
        self.hidden_layers * self.hidden_width
    }

    /// Flat offsets (weights_start, bias_start) per layer. Weights are
    /// row-major `(fan_out, fan_in)`: row r of layer l starts at
    /// `w_start + r * fan_in`.
    pub fn layout(&self) -> Vec<(usize, usize)> {
        let mut offs = Vec::with_capacity(self.hidden_layers + 1);
        let mut at = 0usize;
        for (fi, fo) in self.layer_dims() {
            offs.push((at, at + fi * fo));
            at += fi * fo + fo;
        }
        offs
    }

    /// xi = (x - shift) * scale, applied before the first layer.
    pub fn transform_input(&self, input: &[f64]) -> Vec<f64> {
        input
            .iter()
            .zip(&self.input_shift)
            .zip(&self.input_scale)
            .map(|((x, s), k)| (x - s) * k)
            .collect()
    }
}

/// Flat array of all trainable values: weights then biases, layer by layer.
/// In inverse mode two PDE-parameter slots are appended (see `inverse`).
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(pub Vec<f64>);

impl ParameterVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// One affine layer in structured form.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// Row-major (fan_out, fan_in).
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Glorot-normal weights (variance 2/(fan_in+fan_out)), zero biases.
pub fn init_params<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> ParameterVector {
    let mut values = Vec::with_capacity(spec.param_count());
    for (fi, fo) in spec.layer_dims() {
        let std = (2.0 / (fi + fo) as f64).sqrt();
        for _ in 0..fi * fo {
            let z: f64 = rng.sample(StandardNormal);
            values.push(std * z);
        }
        values.extend(std::iter::repeat(0.0).take(fo));
    }
    ParameterVector(values)
}

/// Per-hidden-unit keep flags, reproducible from the stored seed.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub keep: Vec<bool>,
    pub rate: f64,
    pub seed: u64,
}

impl DropoutMask {
    /// Draws keep flags for every hidden unit of `spec`.
    pub fn generate(spec: &NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rate = spec.dropout_rate;
        let keep = (0..spec.hidden_unit_count())
            .map(|_| rng.random::<f64>() >= rate)
            .collect();
        DropoutMask { keep, rate, seed }
    }

    /// Inverted-dropout factor for hidden unit `(layer, unit)`: 0 when the
    /// unit is dropped, 1/(1-rate) when kept. Exactly 1.0 at rate 0.
    #[inline]
    pub fn factor(&self, layer: usize, unit: usize, width: usize) -> f64 {
        if self.keep[layer * width + unit] {
            if self.rate == 0.0 {
                1.0
            } else {
                1.0 / (1.0 - self.rate)
            }
        } else {
            0.0
        }
    }
}

/// Deterministic (or masked) forward pass. Network parameters beyond
/// `spec.param_count()` (the inverse-mode PDE slots) are ignored.
pub fn forward(
    spec: &NetworkSpec,
    params: &[f64],
    input: &[f64],
    mask: Option<&DropoutMask>,
) -> Result<Vec<f64>> {
    if input.len() != spec.input_dim {
        return Err(Error::Dimension(format!(
            "input dimension {} != spec input_dim {}",
            input.len(),
            spec.input_dim
        )));
    }
    if params.len() < spec.param_count() {
        return Err(Error::Dimension(format!(
            "parameter vector length {} < required {}",
            params.len(),
            spec.param_count()
        )));
    }
    let dims = spec.layer_dims();
    let layout = spec.layout();
    let mut act = spec.transform_input(input);
    for (l, ((fi, fo), (w0, b0))) in dims.iter().zip(&layout).enumerate() {
        let mut next = Vec::with_capacity(*fo);
        for r in 0..*fo {
            let mut z = params[b0 + r];
            let row = &params[w0 + r * fi..w0 + (r + 1) * fi];
            for (w, a) in row.iter().zip(&act) {
                z += w * a;
            }
            next.push(z);
        }
        if l + 1 < dims.len() {
            for z in next.iter_mut() {
                *z = z.tanh();
            }
            if let Some(m) = mask {
                for (u, z) in next.iter_mut().enumerate() {
                    let f = m.factor(l, u, spec.hidden_width);
                    if f != 1.0 {
                        *z *= f;
                    }
                }
            }
        }
        act = next;
    }
    Ok(act)
}

/// Structured layers -> flat vector. Layout: per layer, weights row-major
/// then biases.
pub fn pack(layers: &[LayerParams], spec: &NetworkSpec) -> Result<ParameterVector> {
    let dims = spec.layer_dims();
    if layers.len() != dims.len() {
        return Err(Error::Dimension(format!(
            "expected {} layers, got {}",
            dims.len(),
            layers.len()
        )));
    }
    let mut values = Vec::with_capacity(spec.param_count());
    for (layer, (fi, fo)) in layers.iter().zip(&dims) {
        if layer.weights.len() != fi * fo || layer.biases.len() != *fo {
            return Err(Error::Dimension(format!(
                "layer shape mismatch: weights {} biases {} for ({fi}, {fo})",
                layer.weights.len(),
                layer.biases.len()
            )));
        }
        values.extend_from_slice(&layer.weights);
        values.extend_from_slice(&layer.biases);
    }
    Ok(ParameterVector(values))
}

/// Flat vector -> structured layers; exact inverse of [`pack`].
pub fn unpack(vector: &[f64], spec: &NetworkSpec) -> Result<Vec<LayerParams>> {
    if vector.len() != spec.param_count() {
        return Err(Error::Dimension(format!(
            "vector length {} != parameter count {}",
            vector.len(),
            spec.param_count()
        )));
    }
    let mut layers = Vec::new();
    let mut at = 0usize;
    for (fi, fo) in spec.layer_dims() {
        let weights = vector[at..at + fi * fo].to_vec();
        at += fi * fo;
        let biases = vector[at..at + fo].to_vec();
        at += fo;
        layers.push(LayerParams { weights, biases });
    }
    Ok(layers)
}

// -- flat binary parameter records ----------------------------------------
//
// Header: 6 little-endian i32 fields
//   [input_dim, output_dim, hidden_layers, hidden_width, record_len, n_records]
// followed by n_records * record_len little-endian f64 values. record_len is
// param_count(spec) or param_count(spec) + 2 in inverse mode.

pub fn write_param_records(
    path: &Path,
    spec: &NetworkSpec,
    records: &[Vec<f64>],
) -> Result<()> {
    let record_len = records.first().map_or(spec.param_count(), Vec::len);
    for r in records {
        if r.len() != record_len {
            return Err(Error::Dimension("ragged parameter records".into()));
        }
    }
    let mut buf = Vec::with_capacity(24 + records.len() * record_len * 8);
    for field in [
        spec.input_dim,
        spec.output_dim,
        spec.hidden_layers,
        spec.hidden_width,
        record_len,
        records.len(),
    ] {
        buf.extend_from_slice(&(field as i32).to_le_bytes());
    }
    for r in records {
        for v in r {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub struct ParamRecordFile {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub records: Vec<Vec<f64>>,
}

pub fn read_param_records(path: &Path) -> Result<ParamRecordFile> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 24 {
        return Err(Error::Structure(format!(
            "{}: truncated parameter file",
            path.display()
        )));
    }
    let mut ints = [0i32; 6];
    for (i, v) in ints.iter_mut().enumerate() {
        *v = i32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    }
    let [input_dim, output_dim, hidden_layers, hidden_width, record_len, n_records] =
        ints.map(|v| v as usize);
    let expect = 24 + n_records * record_len * 8;
    if bytes.len() != expect {
        return Err(Error::Structure(format!(
            "{}: expected {} bytes, found {}",
            path.display(),
            expect,
            bytes.len()
        )));
    }
    let mut records = Vec::with_capacity(n_records);
    let mut at = 24usize;
    for _ in 0..n_records {
        let mut rec = Vec::with_capacity(record_len);
        for _ in 0..record_len {
            rec.push(f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()));
            at += 8;
        }
        records.push(rec);
    }
    Ok(ParamRecordFile {
        input_dim,
        output_dim,
        hidden_layers,
        hidden_width,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng, Stream};

    #[test]
    fn burgers_preset_param_count_is_3021() {
        // 2*20+20 + 7*(20*20+20) + 20*1+1
        let spec = NetworkSpec::burgers_forward();
        assert_eq!(spec.param_count(), 3021);
    }

    #[test]
    fn ns_presets_shapes() {
        let f = NetworkSpec::ns_forward(1.0);
        assert_eq!((f.input_dim, f.output_dim), (3, 3));
        assert_eq!((f.hidden_layers, f.hidden_width), (10, 20));
        let i = NetworkSpec::ns_inverse(1.0);
        assert_eq!((i.hidden_layers, i.hidden_width), (10, 40));
    }

    #[test]
    fn init_zero_biases_and_small_mean() {
        let spec = NetworkSpec::new(2, 1, 2, 10);
        let mut r = rng(11, Stream::Init);
        // empirical weight mean over many draws
        let mut sum = 0.0;
        let mut count = 0usize;
        for _ in 0..100 {
            let p = init_params(&spec, &mut r);
            let layers = unpack(&p.0, &spec).unwrap();
            for l in &layers {
                assert!(l.biases.iter().all(|&b| b == 0.0));
                sum += l.weights.iter().sum::<f64>();
                count += l.weights.len();
            }
        }
        assert!(count > 10_000);
        assert!((sum / count as f64).abs() < 0.01);
    }

    #[test]
    fn init_variance_matches_glorot() {
        let spec = NetworkSpec::new(4, 4, 1, 64);
        let mut r = rng(3, Stream::Init);
        let mut sq = 0.0;
        let mut n = 0usize;
        for _ in 0..100 {
            let p = init_params(&spec, &mut r);
            let layers = unpack(&p.0, &spec).unwrap();
            for w in &layers[0].weights {
                sq += w * w;
                n += 1;
            }
        }
        let var = sq / n as f64;
        let expect = 2.0 / (4.0 + 64.0);
        assert!((var - expect).abs() < 0.1 * expect, "var {var} vs {expect}");
    }

    #[test]
    fn all_zero_params_give_zero_output() {
        let spec = NetworkSpec::new(2, 3, 2, 5);
        let params = vec![0.0; spec.param_count()];
        let out = forward(&spec, &params, &[0.4, -0.7], None).unwrap();
        assert_eq!(out, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn rate_zero_mask_is_bitwise_identical_to_maskless() {
        let spec = NetworkSpec::new(2, 2, 3, 8);
        let p = init_params(&spec, &mut rng(5, Stream::Init));
        let mask = DropoutMask::generate(&spec, 99);
        let a = forward(&spec, &p.0, &[0.3, 0.9], None).unwrap();
        let b = forward(&spec, &p.0, &[0.3, 0.9], Some(&mask)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn masked_forward_reproducible_from_seed() {
        let spec = NetworkSpec::new(2, 1, 3, 16).with_dropout(0.25);
        let p = init_params(&spec, &mut rng(5, Stream::Init));
        let m1 = DropoutMask::generate(&spec, 1234);
        let m2 = DropoutMask::generate(&spec, 1234);
        assert_eq!(m1, m2);
        let a = forward(&spec, &p.0, &[0.1, 0.2], Some(&m1)).unwrap();
        let b = forward(&spec, &p.0, &[0.1, 0.2], Some(&m2)).unwrap();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }

    #[test]
    fn mask_keep_fraction_near_expected() {
        let spec = NetworkSpec::new(2, 1, 5, 20).with_dropout(0.1);
        let mut kept = 0usize;
        let mut total = 0usize;
        for seed in 0..1000u64 {
            let m = DropoutMask::generate(&spec, seed);
            kept += m.keep.iter().filter(|&&k| k).count();
            total += m.keep.len();
        }
        let frac = kept as f64 / total as f64;
        let se = (0.1f64 * 0.9 / total as f64).sqrt();
        assert!(
            (frac - 0.9).abs() < 3.0 * se,
            "keep fraction {frac} vs 0.9 +- {}",
            3.0 * se
        );
    }

    #[test]
    fn hidden_activations_bounded_by_tanh() {
        let spec = NetworkSpec::new(2, 1, 4, 10);
        let p = init_params(&spec, &mut rng(8, Stream::Init));
        // probe by truncating the network to each hidden depth
        let dims = spec.layer_dims();
        let layout = spec.layout();
        let mut act = spec.transform_input(&[0.9, -0.4]);
        for (l, ((fi, fo), (w0, b0))) in dims.iter().zip(&layout).enumerate() {
            if l + 1 == dims.len() {
                break;
            }
            let mut next = vec![0.0; *fo];
            for r in 0..*fo {
                let mut z = p.0[b0 + r];
                for k in 0..*fi {
                    z += p.0[w0 + r * fi + k] * act[k];
                }
                next[r] = z.tanh();
                assert!(next[r] > -1.0 && next[r] < 1.0);
            }
            act = next;
        }
    }

    #[test]
    fn unpack_wrong_length_errors() {
        let spec = NetworkSpec::new(2, 1, 1, 4);
        assert!(unpack(&[0.0; 3], &spec).is_err());
    }

    #[test]
    fn pack_perturbation_maps_to_single_weight() {
        let spec = NetworkSpec::new(3, 2, 2, 4);
        let p = init_params(&spec, &mut rng(2, Stream::Init));
        let n = spec.param_count();
        for k in [0usize, 5, 12, n - 1] {
            let mut v = p.0.clone();
            v[k] += 1.0;
            let before = unpack(&p.0, &spec).unwrap();
            let after = unpack(&v, &spec).unwrap();
            let mut changed = 0usize;
            for (a, b) in before.iter().zip(&after) {
                changed += a
                    .weights
                    .iter()
                    .chain(&a.biases)
                    .zip(b.weights.iter().chain(&b.biases))
                    .filter(|(x, y)| x != y)
                    .count();
            }
            assert_eq!(changed, 1);
        }
    }

    #[test]
    fn param_records_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.bin");
        let spec = NetworkSpec::new(2, 1, 2, 6);
        let mut r = rng(4, Stream::Init);
        let records: Vec<Vec<f64>> = (0..3).map(|_| init_params(&spec, &mut r).0).collect();
        write_param_records(&path, &spec, &records).unwrap();
        let file = read_param_records(&path).unwrap();
        assert_eq!(file.hidden_width, 6);
        assert_eq!(file.records, records);
    }
}
