//! Append-only scalar tape for reverse-mode differentiation.
//!
//! Nodes are recorded in topological order together with their operand ids
//! and local partial derivatives, so a single reverse sweep yields the
//! gradient of any recorded scalar with respect to every parameter leaf.

use crate::error::{Error, Result};

/// Index of a node on a [`Tape`].
pub type NodeId = u32;

/// Kind label of a recorded operation. Partials are stored numerically at
/// record time, so the kind is structural metadata, not dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum OpKind {
    Leaf,
    Const,
    Add,
    Sub,
    Mul,
    Neg,
    Square,
    Scale,
    Tanh,
    TanhD1,
    TanhD2,
    Softplus,
    Affine,
    LinComb,
    SumSq,
    Fused,
}

/// Scalar computation record. `leaf_count` initial nodes are parameter
/// leaves; all later nodes reference only earlier nodes.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    kinds: Vec<OpKind>,
    values: Vec<f64>,
    arg_start: Vec<u32>,
    edge_src: Vec<u32>,
    edge_partial: Vec<f64>,
    leaf_count: usize,
}

impl Tape {
    /// Empty tape with no leaves.
    pub fn new() -> Self {
        Tape::default()
    }

    /// Tape seeded with one leaf per parameter value.
    pub fn with_leaves(leaf_values: &[f64]) -> Self {
        let mut t = Tape::new();
        t.reset(leaf_values);
        t
    }

    /// Clears all nodes (keeping capacity) and re-seeds the parameter leaves.
    pub fn reset(&mut self, leaf_values: &[f64]) {
        self.kinds.clear();
        self.values.clear();
        self.arg_start.clear();
        self.edge_src.clear();
        self.edge_partial.clear();
        self.leaf_count = leaf_values.len();
        for &v in leaf_values {
            self.kinds.push(OpKind::Leaf);
            self.values.push(v);
            self.arg_start.push(0);
        }
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn value(&self, id: NodeId) -> f64 {
        self.values[id as usize]
    }

    pub fn kind(&self, id: NodeId) -> OpKind {
        self.kinds[id as usize]
    }

    #[inline]
    fn edge_range(&self, i: usize) -> std::ops::Range<usize> {
        let lo = self.arg_start[i] as usize;
        let hi = if i + 1 < self.arg_start.len() {
            self.arg_start[i + 1] as usize
        } else {
            self.edge_src.len()
        };
        lo..hi
    }

    /// Records one primitive operation: its numeric result plus, for each
    /// operand, the local partial derivative of the result with respect to
    /// that operand. Returns the id of the new node.
    pub fn record_scalar(
        &mut self,
        kind: OpKind,
        value: f64,
        operands: &[NodeId],
        local_partials: &[f64],
    ) -> Result<NodeId> {
        if operands.len() != local_partials.len() {
            return Err(Error::Structure(format!(
                "operand/partial length mismatch: {} vs {}",
                operands.len(),
                local_partials.len()
            )));
        }
        let n = self.len() as u32;
        for &op in operands {
            if op >= n {
                return Err(Error::Structure(format!(
                    "operand id {op} out of range (tape has {n} nodes)"
                )));
            }
        }
        Ok(self.push_node_with_edges(kind, value, operands, local_partials))
    }

    #[inline]
    pub(crate) fn push_node(&mut self, kind: OpKind, value: f64) -> NodeId {
        let id = self.kinds.len() as u32;
        self.kinds.push(kind);
        self.values.push(value);
        self.arg_start.push(self.edge_src.len() as u32);
        id
    }

    #[inline]
    pub(crate) fn push_edge(&mut self, src: NodeId, partial: f64) {
        self.edge_src.push(src);
        self.edge_partial.push(partial);
    }

    #[inline]
    fn push_node_with_edges(
        &mut self,
        kind: OpKind,
        value: f64,
        operands: &[NodeId],
        partials: &[f64],
    ) -> NodeId {
        let id = self.push_node(kind, value);
        self.edge_src.extend_from_slice(operands);
        self.edge_partial.extend_from_slice(partials);
        id
    }

    /// Fused affine record: bias + sum_k w[w_start+k] * acts[k], where the
    /// weights are leaves addressed by flat index. One pass computes the
    /// value and lays down both the weight and activation edges.
    pub(crate) fn affine_node(
        &mut self,
        w_start: usize,
        acts: &[NodeId],
        bias: Option<usize>,
    ) -> NodeId {
        let n = acts.len();
        self.edge_src.reserve(2 * n + 1);
        self.edge_partial.reserve(2 * n + 1);
        let mut acc = match bias {
            Some(b) => {
                self.edge_src.push(b as NodeId);
                self.edge_partial.push(1.0);
                self.values[b]
            }
            None => 0.0,
        };
        for (k, &a) in acts.iter().enumerate() {
            let w = (w_start + k) as NodeId;
            let wv = self.values[w as usize];
            let av = self.values[a as usize];
            acc += wv * av;
            self.edge_src.push(w);
            self.edge_partial.push(av);
            self.edge_src.push(a);
            self.edge_partial.push(wv);
        }
        // edges were laid down first; arg_start must point at them
        let id = self.kinds.len() as u32;
        self.kinds.push(OpKind::Affine);
        self.values.push(acc);
        self.arg_start
            .push((self.edge_src.len() - (2 * n + usize::from(bias.is_some()))) as u32);
        id
    }

    /// Fused affine over constant inputs: only the weights and bias get
    /// edges.
    pub(crate) fn affine_const_node(&mut self, w_start: usize, xs: &[f64], bias: usize) -> NodeId {
        let n = xs.len();
        self.edge_src.reserve(n + 1);
        self.edge_partial.reserve(n + 1);
        self.edge_src.push(bias as NodeId);
        self.edge_partial.push(1.0);
        let mut acc = self.values[bias];
        for (k, &x) in xs.iter().enumerate() {
            let w = (w_start + k) as NodeId;
            acc += self.values[w as usize] * x;
            self.edge_src.push(w);
            self.edge_partial.push(x);
        }
        let id = self.kinds.len() as u32;
        self.kinds.push(OpKind::Affine);
        self.values.push(acc);
        self.arg_start
            .push((self.edge_src.len() - (n + 1)) as u32);
        id
    }

    // -- convenience primitives -------------------------------------------

    pub fn constant(&mut self, c: f64) -> NodeId {
        self.push_node(OpKind::Const, c)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) + self.value(b);
        self.push_node_with_edges(OpKind::Add, v, &[a, b], &[1.0, 1.0])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) - self.value(b);
        self.push_node_with_edges(OpKind::Sub, v, &[a, b], &[1.0, -1.0])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        self.push_node_with_edges(OpKind::Mul, va * vb, &[a, b], &[vb, va])
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = -self.value(a);
        self.push_node_with_edges(OpKind::Neg, v, &[a], &[-1.0])
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        self.push_node_with_edges(OpKind::Square, va * va, &[a], &[2.0 * va])
    }

    /// k·a for a constant k.
    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let v = k * self.value(a);
        self.push_node_with_edges(OpKind::Scale, v, &[a], &[k])
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a).tanh();
        self.push_node_with_edges(OpKind::Tanh, t, &[a], &[1.0 - t * t])
    }

    /// ln(1+e^a), numerically stable for large |a|.
    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let v = crate::inverse::softplus(x);
        let sig = 1.0 / (1.0 + (-x).exp());
        self.push_node_with_edges(OpKind::Softplus, v, &[a], &[sig])
    }

    /// Σ nodes[i]², recorded as one fused node.
    pub fn sum_of_squares(&mut self, nodes: &[NodeId]) -> NodeId {
        let mut v = 0.0;
        for &n in nodes {
            let x = self.value(n);
            v += x * x;
        }
        let id = self.push_node(OpKind::SumSq, v);
        for &n in nodes {
            let p = 2.0 * self.values[n as usize];
            self.edge_src.push(n);
            self.edge_partial.push(p);
        }
        id
    }

    /// Reverse sweep from `seed`: returns ∂seed/∂leaf for every parameter
    /// leaf. The tape itself is unchanged.
    pub fn backward(&self, seed: NodeId) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.leaf_count];
        let mut adjoint = Vec::new();
        self.backward_into(seed, &mut adjoint, &mut grad)?;
        Ok(grad)
    }

    /// As [`Tape::backward`] but reusing caller-owned buffers. `grad` must
    /// have length `leaf_count`; the gradient is *accumulated* into it.
    pub fn backward_into(
        &self,
        seed: NodeId,
        adjoint: &mut Vec<f64>,
        grad: &mut [f64],
    ) -> Result<()> {
        let n = self.len();
        if (seed as usize) >= n {
            return Err(Error::Structure(format!(
                "seed node {seed} not on tape (len {n})"
            )));
        }
        if grad.len() != self.leaf_count {
            return Err(Error::Dimension(format!(
                "gradient buffer length {} != leaf count {}",
                grad.len(),
                self.leaf_count
            )));
        }
        adjoint.clear();
        adjoint.resize(n, 0.0);
        adjoint[seed as usize] = 1.0;
        let adj = adjoint.as_mut_slice();
        let mut end = self.edge_src.len();
        for i in (self.leaf_count..n).rev() {
            let start = self.arg_start[i] as usize;
            let a = adj[i];
            if a != 0.0 {
                for (src, partial) in self.edge_src[start..end]
                    .iter()
                    .zip(&self.edge_partial[start..end])
                {
                    adj[*src as usize] += partial * a;
                }
            }
            end = start;
        }
        for (g, a) in grad.iter_mut().zip(&adjoint[..self.leaf_count]) {
            *g += *a;
        }
        Ok(())
    }
}
