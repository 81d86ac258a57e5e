//! A small reverse-mode automatic differentiation engine over dense vectors.
//!
//! The tape is append-only and every node is evaluated as soon as it is
//! pushed. Values and adjoints live in two flat arenas; a node only ever
//! reads nodes that were pushed before it, so forward and backward sweeps
//! can split the arena at the node's offset and borrow both halves.
//!
//! Graphs are built once and re-evaluated: after changing leaf values with
//! [`Tape::set_value`], call [`Tape::forward`] to recompute every derived
//! node in place.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::index::sample;
use rand::Rng;
use thiserror::Error;

/// Probabilities are clamped to this value before taking a logarithm.
pub const LOG_CLAMP: f64 = 1e-30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("node {node} holds a non-finite value")]
    NonFinite { node: usize },
    #[error("loss node {node} has length {len}, expected a scalar")]
    NotScalar { node: usize, len: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("empty input vector")]
    Empty,
    #[error("node {node} is not a leaf")]
    NotLeaf { node: usize },
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{}", self.0)
    }
}

/// One term of a weighted sum: `weight[index] * value`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixTerm {
    pub weight: NodeId,
    pub index: u32,
    pub value: NodeId,
}

impl MixTerm {
    pub fn new(weight: NodeId, index: usize, value: NodeId) -> Self {
        MixTerm {
            weight,
            index: index as u32,
            value,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Comparison {
    Eq,
    Gt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Logic {
    And,
    Or,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    /// A parameter (`trainable`) or a constant input.
    Leaf { trainable: bool },
    /// Elementwise sum of equally sized vectors.
    Add(Vec<NodeId>),
    /// `scale * x + shift`, elementwise.
    Affine { x: NodeId, scale: f64, shift: f64 },
    /// Elementwise product.
    Mul(NodeId, NodeId),
    /// `sum_j weight_j[index_j] * value_j`.
    Mix(Vec<MixTerm>),
    Softmax(NodeId),
    /// Natural log with the argument clamped to [`LOG_CLAMP`].
    Log(NodeId),
    Dot(NodeId, NodeId),
    Sum(NodeId),
    /// `out[j] = x[indices[j]]`.
    Select { x: NodeId, indices: Vec<u32> },
    /// Distribution of `(a + b) mod n` for independent `a`, `b` over `[0, n)`.
    AddMod(NodeId, NodeId),
    /// `out[(i + by) mod n] = x[i]`.
    Rotate { x: NodeId, by: u32 },
    /// Probability of the comparison in `out[1]`, its complement in `out[0]`.
    Compare {
        a: NodeId,
        b: NodeId,
        kind: Comparison,
    },
    /// Boolean connective on truthiness (`value != 0`), result laid out
    /// like [`Op::Compare`].
    Logic { a: NodeId, b: NodeId, kind: Logic },
    Concat(Vec<NodeId>),
}

#[derive(Clone, Debug)]
pub struct Node {
    pub op: Op,
    offset: usize,
    len: usize,
}

impl Node {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }

    pub fn inputs(&self) -> Vec<NodeId> {
        match &self.op {
            Op::Leaf { .. } => vec![],
            Op::Add(xs) | Op::Concat(xs) => xs.clone(),
            Op::Affine { x, .. }
            | Op::Softmax(x)
            | Op::Log(x)
            | Op::Sum(x)
            | Op::Select { x, .. }
            | Op::Rotate { x, .. } => vec![*x],
            Op::Mul(a, b)
            | Op::Dot(a, b)
            | Op::AddMod(a, b)
            | Op::Compare { a, b, .. }
            | Op::Logic { a, b, .. } => vec![*a, *b],
            Op::Mix(terms) => terms.iter().flat_map(|t| [t.weight, t.value]).collect(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    values: Vec<f64>,
    adjoints: Vec<f64>,
    params: Vec<NodeId>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Trainable leaves in creation order.
    pub fn params(&self) -> &[NodeId] {
        &self.params
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.values[self.nodes[id.index()].range()]
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id)[0]
    }

    pub fn adjoint(&self, id: NodeId) -> &[f64] {
        &self.adjoints[self.nodes[id.index()].range()]
    }

    pub fn len_of(&self, id: NodeId) -> usize {
        self.nodes[id.index()].len
    }

    /// Total number of scalars stored in the value arena.
    pub fn arena_size(&self) -> usize {
        self.values.len()
    }

    fn push(&mut self, op: Op, len: usize) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        let offset = self.values.len();
        self.values.resize(offset + len, 0.0);
        self.adjoints.resize(offset + len, 0.0);
        self.nodes.push(Node { op, offset, len });
        if !matches!(self.nodes[id.index()].op, Op::Leaf { .. }) {
            let (lo, hi) = self.values.split_at_mut(offset);
            eval(&self.nodes, id.index(), lo, &mut hi[..len]);
        }
        id
    }

    pub fn param(&mut self, value: &[f64]) -> NodeId {
        let id = self.push(Op::Leaf { trainable: true }, value.len());
        self.values[self.nodes[id.index()].range()].copy_from_slice(value);
        self.params.push(id);
        id
    }

    pub fn constant(&mut self, value: &[f64]) -> NodeId {
        let id = self.push(Op::Leaf { trainable: false }, value.len());
        self.values[self.nodes[id.index()].range()].copy_from_slice(value);
        id
    }

    /// Overwrite the value of a leaf. Derived nodes are stale until the next
    /// [`Tape::forward`].
    pub fn set_value(&mut self, id: NodeId, value: &[f64]) -> Result<()> {
        let node = &self.nodes[id.index()];
        if !matches!(node.op, Op::Leaf { .. }) {
            return Err(AutodiffError::NotLeaf { node: id.index() });
        }
        if node.len != value.len() {
            return Err(AutodiffError::LengthMismatch {
                expected: node.len,
                got: value.len(),
            });
        }
        let range = node.range();
        self.values[range].copy_from_slice(value);
        Ok(())
    }

    fn check_len(&self, id: NodeId, expected: usize) -> Result<()> {
        let got = self.len_of(id);
        if got != expected {
            return Err(AutodiffError::LengthMismatch { expected, got });
        }
        Ok(())
    }

    pub fn add(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let first = *xs.first().ok_or(AutodiffError::Empty)?;
        let len = self.len_of(first);
        for &x in xs {
            self.check_len(x, len)?;
        }
        Ok(self.push(Op::Add(xs.to_vec()), len))
    }

    pub fn scale(&mut self, x: NodeId, scale: f64) -> NodeId {
        self.affine(x, scale, 0.0)
    }

    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> NodeId {
        let len = self.len_of(x);
        self.push(Op::Affine { x, scale, shift }, len)
    }

    /// `1 - x`.
    pub fn complement(&mut self, x: NodeId) -> NodeId {
        self.affine(x, -1.0, 1.0)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let len = self.len_of(a);
        self.check_len(b, len)?;
        Ok(self.push(Op::Mul(a, b), len))
    }

    pub fn mix(&mut self, terms: Vec<MixTerm>) -> Result<NodeId> {
        let first = terms.first().ok_or(AutodiffError::Empty)?;
        let len = self.len_of(first.value);
        for t in &terms {
            self.check_len(t.value, len)?;
            let wlen = self.len_of(t.weight);
            if t.index as usize >= wlen {
                return Err(AutodiffError::LengthMismatch {
                    expected: t.index as usize + 1,
                    got: wlen,
                });
            }
        }
        Ok(self.push(Op::Mix(terms), len))
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let len = self.len_of(x);
        if len == 0 {
            return Err(AutodiffError::Empty);
        }
        if self.value(x).iter().any(|v| !v.is_finite()) {
            return Err(AutodiffError::NonFinite { node: x.index() });
        }
        Ok(self.push(Op::Softmax(x), len))
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        let len = self.len_of(x);
        self.push(Op::Log(x), len)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let len = self.len_of(a);
        self.check_len(b, len)?;
        Ok(self.push(Op::Dot(a, b), 1))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sum(x), 1)
    }

    pub fn select(&mut self, x: NodeId, indices: &[usize]) -> Result<NodeId> {
        let len = self.len_of(x);
        if let Some(&bad) = indices.iter().find(|&&i| i >= len) {
            return Err(AutodiffError::LengthMismatch {
                expected: bad + 1,
                got: len,
            });
        }
        let indices = indices.iter().map(|&i| i as u32).collect::<Vec<_>>();
        let n = indices.len();
        Ok(self.push(Op::Select { x, indices }, n))
    }

    pub fn add_mod(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let len = self.len_of(a);
        self.check_len(b, len)?;
        Ok(self.push(Op::AddMod(a, b), len))
    }

    pub fn rotate(&mut self, x: NodeId, by: usize) -> NodeId {
        let len = self.len_of(x);
        let by = (by % len.max(1)) as u32;
        self.push(Op::Rotate { x, by }, len)
    }

    /// The result has length `out_len >= 2`; entries past index 1 are zero.
    pub fn compare(
        &mut self,
        a: NodeId,
        b: NodeId,
        kind: Comparison,
        out_len: usize,
    ) -> Result<NodeId> {
        let len = self.len_of(a);
        self.check_len(b, len)?;
        if out_len < 2 {
            return Err(AutodiffError::LengthMismatch {
                expected: 2,
                got: out_len,
            });
        }
        Ok(self.push(Op::Compare { a, b, kind }, out_len))
    }

    pub fn logic(&mut self, a: NodeId, b: NodeId, kind: Logic, out_len: usize) -> Result<NodeId> {
        if out_len < 2 {
            return Err(AutodiffError::LengthMismatch {
                expected: 2,
                got: out_len,
            });
        }
        Ok(self.push(Op::Logic { a, b, kind }, out_len))
    }

    pub fn concat(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        if xs.is_empty() {
            return Err(AutodiffError::Empty);
        }
        let len = xs.iter().map(|&x| self.len_of(x)).sum();
        Ok(self.push(Op::Concat(xs.to_vec()), len))
    }

    /// Re-evaluate every derived node from the current leaf values.
    pub fn forward(&mut self) {
        for i in 0..self.nodes.len() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf { .. }) {
                continue;
            }
            let (lo, hi) = self.values.split_at_mut(node.offset);
            eval(&self.nodes, i, lo, &mut hi[..node.len]);
        }
    }

    /// Check that every value on the tape is finite.
    pub fn check_finite(&self) -> Result<()> {
        for (i, node) in self.nodes.iter().enumerate() {
            if self.values[node.range()].iter().any(|v| !v.is_finite()) {
                return Err(AutodiffError::NonFinite { node: i });
            }
        }
        Ok(())
    }

    /// Accumulate d loss / d node into every node's adjoint.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        let loss_node = &self.nodes[loss.index()];
        if loss_node.len != 1 {
            return Err(AutodiffError::NotScalar {
                node: loss.index(),
                len: loss_node.len,
            });
        }
        self.adjoints.iter_mut().for_each(|a| *a = 0.0);
        self.adjoints[loss_node.offset] = 1.0;
        for i in (0..=loss.index()).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf { .. }) {
                continue;
            }
            let (adj_lo, adj_hi) = self.adjoints.split_at_mut(node.offset);
            let out_adj = &adj_hi[..node.len];
            if out_adj.iter().all(|&a| a == 0.0) {
                continue;
            }
            propagate(&self.nodes, i, &self.values, adj_lo, out_adj);
        }
        Ok(())
    }

    /// Gradient of `loss` with respect to every trainable leaf.
    pub fn gradients(&mut self, loss: NodeId) -> Result<BTreeMap<NodeId, Vec<f64>>> {
        self.backward(loss)?;
        Ok(self
            .params
            .iter()
            .map(|&p| (p, self.adjoint(p).to_vec()))
            .collect())
    }
}

fn eval(nodes: &[Node], i: usize, lo: &[f64], out: &mut [f64]) {
    let v = |id: NodeId| -> &[f64] { &lo[nodes[id.index()].range()] };
    match &nodes[i].op {
        Op::Leaf { .. } => {}
        Op::Add(xs) => {
            out.copy_from_slice(v(xs[0]));
            for &x in &xs[1..] {
                for (o, a) in out.iter_mut().zip(v(x)) {
                    *o += a;
                }
            }
        }
        Op::Affine { x, scale, shift } => {
            for (o, a) in out.iter_mut().zip(v(*x)) {
                *o = scale * a + shift;
            }
        }
        Op::Mul(a, b) => {
            for ((o, x), y) in out.iter_mut().zip(v(*a)).zip(v(*b)) {
                *o = x * y;
            }
        }
        Op::Mix(terms) => {
            out.iter_mut().for_each(|o| *o = 0.0);
            for t in terms {
                let w = v(t.weight)[t.index as usize];
                if w == 0.0 {
                    continue;
                }
                for (o, a) in out.iter_mut().zip(v(t.value)) {
                    *o += w * a;
                }
            }
        }
        Op::Softmax(x) => {
            let x = v(*x);
            let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (o, a) in out.iter_mut().zip(x) {
                *o = (a - max).exp();
                total += *o;
            }
            out.iter_mut().for_each(|o| *o /= total);
        }
        Op::Log(x) => {
            for (o, a) in out.iter_mut().zip(v(*x)) {
                *o = a.max(LOG_CLAMP).ln();
            }
        }
        Op::Dot(a, b) => {
            out[0] = v(*a).iter().zip(v(*b)).map(|(x, y)| x * y).sum();
        }
        Op::Sum(x) => out[0] = v(*x).iter().sum(),
        Op::Select { x, indices } => {
            let x = v(*x);
            for (o, &j) in out.iter_mut().zip(indices) {
                *o = x[j as usize];
            }
        }
        Op::AddMod(a, b) => {
            let (a, b) = (v(*a), v(*b));
            let n = a.len();
            out.iter_mut().for_each(|o| *o = 0.0);
            for (i, &x) in a.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                for (j, &y) in b.iter().enumerate() {
                    let k = if i + j >= n { i + j - n } else { i + j };
                    out[k] += x * y;
                }
            }
        }
        Op::Rotate { x, by } => {
            let x = v(*x);
            let n = x.len();
            for (i, &a) in x.iter().enumerate() {
                out[(i + *by as usize) % n] = a;
            }
        }
        Op::Compare { a, b, kind } => {
            let p = compare_prob(v(*a), v(*b), *kind);
            out.iter_mut().for_each(|o| *o = 0.0);
            out[0] = 1.0 - p;
            out[1] = p;
        }
        Op::Logic { a, b, kind } => {
            let p = logic_prob(v(*a)[0], v(*b)[0], *kind);
            out.iter_mut().for_each(|o| *o = 0.0);
            out[0] = 1.0 - p;
            out[1] = p;
        }
        Op::Concat(xs) => {
            let mut at = 0;
            for &x in xs {
                let x = v(x);
                out[at..at + x.len()].copy_from_slice(x);
                at += x.len();
            }
        }
    }
}

fn compare_prob(a: &[f64], b: &[f64], kind: Comparison) -> f64 {
    match kind {
        Comparison::Eq => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        Comparison::Gt => {
            // P(a > b) = sum_x a[x] * P(b < x)
            let mut below = 0.0;
            let mut p = 0.0;
            for (x, y) in a.iter().zip(b) {
                p += x * below;
                below += y;
            }
            p
        }
    }
}

/// `a0`, `b0` are the probabilities that each operand is falsy (zero).
fn logic_prob(a0: f64, b0: f64, kind: Logic) -> f64 {
    match kind {
        Logic::And => (1.0 - a0) * (1.0 - b0),
        Logic::Or => 1.0 - a0 * b0,
    }
}

fn propagate(nodes: &[Node], i: usize, values: &[f64], adj: &mut [f64], g: &[f64]) {
    let v = |id: NodeId| -> &[f64] { &values[nodes[id.index()].range()] };
    let r = |id: NodeId| nodes[id.index()].range();
    match &nodes[i].op {
        Op::Leaf { .. } => {}
        Op::Add(xs) => {
            for &x in xs {
                for (a, gi) in adj[r(x)].iter_mut().zip(g) {
                    *a += gi;
                }
            }
        }
        Op::Affine { x, scale, .. } => {
            for (a, gi) in adj[r(*x)].iter_mut().zip(g) {
                *a += scale * gi;
            }
        }
        Op::Mul(a, b) => {
            for ((d, gi), y) in adj[r(*a)].iter_mut().zip(g).zip(v(*b)) {
                *d += gi * y;
            }
            for ((d, gi), x) in adj[r(*b)].iter_mut().zip(g).zip(v(*a)) {
                *d += gi * x;
            }
        }
        Op::Mix(terms) => {
            for t in terms {
                let w = v(t.weight)[t.index as usize];
                let value = v(t.value);
                let dw: f64 = value.iter().zip(g).map(|(a, b)| a * b).sum();
                adj[r(t.weight).start + t.index as usize] += dw;
                if w != 0.0 {
                    for (d, gi) in adj[r(t.value)].iter_mut().zip(g) {
                        *d += w * gi;
                    }
                }
            }
        }
        Op::Softmax(x) => {
            let y = &values[nodes[i].range()];
            let inner: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
            for ((d, yi), gi) in adj[r(*x)].iter_mut().zip(y).zip(g) {
                *d += yi * (gi - inner);
            }
        }
        Op::Log(x) => {
            for ((d, xi), gi) in adj[r(*x)].iter_mut().zip(v(*x)).zip(g) {
                if *xi > LOG_CLAMP {
                    *d += gi / xi;
                }
            }
        }
        Op::Dot(a, b) => {
            let g0 = g[0];
            for (d, y) in adj[r(*a)].iter_mut().zip(v(*b)) {
                *d += g0 * y;
            }
            for (d, x) in adj[r(*b)].iter_mut().zip(v(*a)) {
                *d += g0 * x;
            }
        }
        Op::Sum(x) => {
            let g0 = g[0];
            adj[r(*x)].iter_mut().for_each(|d| *d += g0);
        }
        Op::Select { x, indices } => {
            let start = r(*x).start;
            for (&j, gi) in indices.iter().zip(g) {
                adj[start + j as usize] += gi;
            }
        }
        Op::AddMod(a, b) => {
            let (av, bv) = (v(*a), v(*b));
            let n = av.len();
            let wrap = |k: usize| if k >= n { k - n } else { k };
            let ra = r(*a);
            for (i, d) in adj[ra].iter_mut().enumerate() {
                let mut s = 0.0;
                for (j, y) in bv.iter().enumerate() {
                    s += g[wrap(i + j)] * y;
                }
                *d += s;
            }
            let rb = r(*b);
            for (j, d) in adj[rb].iter_mut().enumerate() {
                let mut s = 0.0;
                for (i, x) in av.iter().enumerate() {
                    s += g[wrap(i + j)] * x;
                }
                *d += s;
            }
        }
        Op::Rotate { x, by } => {
            let rx = r(*x);
            let n = rx.len();
            for (i, d) in adj[rx].iter_mut().enumerate() {
                *d += g[(i + *by as usize) % n];
            }
        }
        Op::Compare { a, b, kind } => {
            let dp = g[1] - g[0];
            let (av, bv) = (v(*a), v(*b));
            match kind {
                Comparison::Eq => {
                    for (d, y) in adj[r(*a)].iter_mut().zip(bv) {
                        *d += dp * y;
                    }
                    for (d, x) in adj[r(*b)].iter_mut().zip(av) {
                        *d += dp * x;
                    }
                }
                Comparison::Gt => {
                    let mut below = 0.0;
                    for (d, y) in adj[r(*a)].iter_mut().zip(bv) {
                        *d += dp * below;
                        below += y;
                    }
                    let mut above = 0.0;
                    let rb = r(*b);
                    for (d, x) in adj[rb].iter_mut().zip(av).rev() {
                        *d += dp * above;
                        above += x;
                    }
                }
            }
        }
        Op::Logic { a, b, kind } => {
            let dp = g[1] - g[0];
            let (a0, b0) = (v(*a)[0], v(*b)[0]);
            let (da0, db0) = match kind {
                Logic::And => (-(1.0 - b0), -(1.0 - a0)),
                Logic::Or => (-b0, -a0),
            };
            adj[r(*a).start] += dp * da0;
            adj[r(*b).start] += dp * db0;
        }
        Op::Concat(xs) => {
            let mut at = 0;
            for &x in xs {
                let rx = r(x);
                let n = rx.len();
                for (d, gi) in adj[rx].iter_mut().zip(&g[at..at + n]) {
                    *d += gi;
                }
                at += n;
            }
        }
    }
}

/// Softmax of a plain vector, outside any tape.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(AutodiffError::Empty);
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(AutodiffError::NonFinite { node: 0 });
    }
    let mut tape = Tape::new();
    let x = tape.constant(logits);
    let y = tape.softmax(x)?;
    Ok(tape.value(y).to_vec())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeafCheck {
    pub leaf: NodeId,
    pub coordinates: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientReport {
    pub leaves: Vec<LeafCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    /// Leaves whose error exceeded the tolerance.
    pub failures: Vec<NodeId>,
}

impl GradientReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Denominator floor used by the relative error of gradient checks, so that
/// coordinates with vanishing gradients are compared in absolute terms.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compare backward() against central differences on every coordinate of
/// every trainable leaf.
pub fn check_gradients(tape: &mut Tape, loss: NodeId, h: f64, tol: f64) -> Result<GradientReport> {
    let coords: Vec<(NodeId, usize)> = tape
        .params
        .clone()
        .into_iter()
        .flat_map(|p| (0..tape.len_of(p)).map(move |j| (p, j)))
        .collect();
    check_coordinates(tape, loss, h, tol, &coords)
}

/// Like [`check_gradients`] but on `samples` coordinates drawn uniformly
/// without replacement.
pub fn check_gradients_sampled<R: Rng>(
    tape: &mut Tape,
    loss: NodeId,
    h: f64,
    tol: f64,
    samples: usize,
    rng: &mut R,
) -> Result<GradientReport> {
    let all: Vec<(NodeId, usize)> = tape
        .params
        .clone()
        .into_iter()
        .flat_map(|p| (0..tape.len_of(p)).map(move |j| (p, j)))
        .collect();
    let n = samples.min(all.len());
    let mut picked: Vec<(NodeId, usize)> =
        sample(rng, all.len(), n).into_iter().map(|i| all[i]).collect();
    picked.sort();
    check_coordinates(tape, loss, h, tol, &picked)
}

fn check_coordinates(
    tape: &mut Tape,
    loss: NodeId,
    h: f64,
    tol: f64,
    coords: &[(NodeId, usize)],
) -> Result<GradientReport> {
    tape.forward();
    tape.backward(loss)?;
    let analytic: Vec<f64> = coords.iter().map(|&(p, j)| tape.adjoint(p)[j]).collect();
    let mut per_leaf: BTreeMap<NodeId, (usize, f64)> = BTreeMap::new();
    for (&(p, j), a) in coords.iter().zip(analytic) {
        let original = tape.value(p).to_vec();
        let mut bumped = original.clone();
        bumped[j] = original[j] + h;
        tape.set_value(p, &bumped)?;
        tape.forward();
        let up = tape.scalar(loss);
        bumped[j] = original[j] - h;
        tape.set_value(p, &bumped)?;
        tape.forward();
        let down = tape.scalar(loss);
        tape.set_value(p, &original)?;
        let numeric = (up - down) / (2.0 * h);
        let err = relative_error(a, numeric);
        let entry = per_leaf.entry(p).or_insert((0, 0.0));
        entry.0 += 1;
        entry.1 = entry.1.max(err);
    }
    tape.forward();
    let leaves: Vec<LeafCheck> = per_leaf
        .into_iter()
        .map(|(leaf, (coordinates, max_rel_error))| LeafCheck {
            leaf,
            coordinates,
            max_rel_error,
        })
        .collect();
    let max_rel_error = leaves.iter().map(|l| l.max_rel_error).fold(0.0, f64::max);
    let failures = leaves
        .iter()
        .filter(|l| l.max_rel_error > tol)
        .map(|l| l.leaf)
        .collect();
    Ok(GradientReport {
        leaves,
        max_rel_error,
        tolerance: tol,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_softmax(xs: &[f64]) -> Vec<f64> {
        let total: f64 = xs.iter().map(|x| x.exp()).sum();
        xs.iter().map(|x| x.exp() / total).collect()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(softmax(&[42.5]).unwrap(), vec![1.0]);
        let got = softmax(&[1f64.ln(), 3f64.ln()]).unwrap();
        let want = brute_softmax(&[1f64.ln(), 3f64.ln()]);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-15);
        }
        assert!((got[0] - 0.25).abs() < 1e-15 && (got[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(softmax(&[0.0, f64::NAN]).is_err());
        assert!(softmax(&[f64::INFINITY]).is_err());
        assert!(softmax(&[]).is_err());
        let mut tape = Tape::new();
        let x = tape.constant(&[1.0, f64::NEG_INFINITY]);
        assert!(tape.softmax(x).is_err());
    }

    #[test]
    fn linear_loss_gradient_is_the_constant() {
        let mut tape = Tape::new();
        let p = tape.param(&[0.3, -1.2, 2.0]);
        let c = tape.constant(&[1.5, -2.0, 0.25]);
        let loss = tape.dot(p, c).unwrap();
        let grads = tape.gradients(loss).unwrap();
        assert_eq!(grads[&p], vec![1.5, -2.0, 0.25]);
        let report = check_gradients(&mut tape, loss, 1e-6, 1e-9).unwrap();
        assert!(report.max_rel_error <= 1e-9, "{report:?}");
    }

    #[test]
    fn log_softmax_gradient_is_onehot_minus_probs() {
        let mut tape = Tape::new();
        let z = tape.param(&[0.2, -0.7, 1.1, 0.0]);
        let s = tape.softmax(z).unwrap();
        let pick = tape.select(s, &[2]).unwrap();
        let loss = tape.log(pick);
        let probs = tape.value(s).to_vec();
        tape.backward(loss).unwrap();
        for (j, (g, p)) in tape.adjoint(z).iter().zip(&probs).enumerate() {
            let want = if j == 2 { 1.0 } else { 0.0 } - p;
            assert!((g - want).abs() < 1e-12);
        }
        let report = check_gradients(&mut tape, loss, 1e-6, 1e-6).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn backward_rejects_vector_loss() {
        let mut tape = Tape::new();
        let p = tape.param(&[1.0, 2.0]);
        assert!(matches!(
            tape.backward(p),
            Err(AutodiffError::NotScalar { len: 2, .. })
        ));
    }

    #[test]
    fn log_is_clamped() {
        let mut tape = Tape::new();
        let p = tape.param(&[0.0]);
        let l = tape.log(p);
        assert_eq!(tape.scalar(l), LOG_CLAMP.ln());
        tape.backward(l).unwrap();
        assert_eq!(tape.adjoint(p), &[0.0]);
    }

    #[test]
    fn add_mod_is_circular_convolution() {
        let mut tape = Tape::new();
        let mut a = vec![0.0; 20];
        let mut b = vec![0.0; 20];
        a[15] = 1.0;
        b[9] = 1.0;
        let a = tape.constant(&a);
        let b = tape.constant(&b);
        let c = tape.add_mod(a, b).unwrap();
        assert_eq!(tape.value(c)[4], 1.0);
        assert_eq!(tape.value(c).iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn compare_matches_enumeration() {
        let a = [0.1, 0.2, 0.3, 0.4];
        let b = [0.25, 0.25, 0.4, 0.1];
        let mut eq = 0.0;
        let mut gt = 0.0;
        for x in 0..4 {
            for y in 0..4 {
                if x == y {
                    eq += a[x] * b[y];
                }
                if x > y {
                    gt += a[x] * b[y];
                }
            }
        }
        let mut tape = Tape::new();
        let an = tape.constant(&a);
        let bn = tape.constant(&b);
        let e = tape.compare(an, bn, Comparison::Eq, 4).unwrap();
        let g = tape.compare(an, bn, Comparison::Gt, 2).unwrap();
        assert!((tape.value(e)[1] - eq).abs() < 1e-15);
        assert_eq!(tape.value(e)[2..], [0.0, 0.0]);
        assert!((tape.value(g)[1] - gt).abs() < 1e-15);
    }

    #[test]
    fn forward_is_deterministic() {
        let mut tape = Tape::new();
        let z = tape.param(&[0.3, 0.1, -0.4]);
        let s = tape.softmax(z).unwrap();
        let t = tape.add_mod(s, s).unwrap();
        let l = tape.log(t);
        let loss = tape.sum(l);
        tape.forward();
        let first = tape.scalar(loss).to_bits();
        tape.forward();
        assert_eq!(first, tape.scalar(loss).to_bits());
    }

    /// Builds a random graph exercising every op kind from the given leaves.
    fn random_graph(seed: u64, n: usize) -> (Tape, NodeId) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new();
        let mut leaves = vec![];
        for _ in 0..3 {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            leaves.push(tape.param(&v));
        }
        let p = tape.softmax(leaves[0]).unwrap();
        let q = tape.softmax(leaves[1]).unwrap();
        let w = tape.softmax(leaves[2]).unwrap();
        let sum = tape.add_mod(p, q).unwrap();
        let rot = tape.rotate(sum, 1);
        let eq = tape.compare(p, q, Comparison::Eq, n).unwrap();
        let gt = tape.compare(q, rot, Comparison::Gt, n).unwrap();
        let and = tape.logic(eq, gt, Logic::And, n).unwrap();
        let or = tape.logic(gt, p, Logic::Or, n).unwrap();
        let prod = tape.mul(and, or).unwrap();
        let mix = tape
            .mix(vec![
                MixTerm::new(w, 0, rot),
                MixTerm::new(w, 1, eq),
                MixTerm::new(w, n - 1, prod),
            ])
            .unwrap();
        let aff = tape.affine(mix, 0.5, 0.25);
        let both = tape.add(&[aff, q, mix]).unwrap();
        let joined = tape.concat(&[both, w]).unwrap();
        let sel = tape.select(joined, &[0, n - 1, n + 1]).unwrap();
        let lg = tape.log(sel);
        let s = tape.sum(lg);
        let d = tape.dot(p, w).unwrap();
        let total = tape.add(&[s, d]).unwrap();
        (tape, total)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn backward_matches_finite_differences(seed in 0u64..10_000, n in 2usize..6) {
            let (mut tape, loss) = random_graph(seed, n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let report = check_gradients_sampled(&mut tape, loss, 1e-6, 1e-4, 20, &mut rng).unwrap();
            prop_assert!(report.passed(), "{:?}", report);
        }

        #[test]
        fn softmax_is_a_distribution(xs in proptest::collection::vec(-50.0f64..50.0, 1..40)) {
            let p = softmax(&xs).unwrap();
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}
