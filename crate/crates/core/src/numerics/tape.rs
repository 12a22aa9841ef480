//! Reverse-mode autodiff over a flat op tape. Node ids are indices into
//! the tape; every op's inputs precede it, so the creation order is a
//! topological order and backward is a single reverse sweep that visits
//! each node once.

use super::conv::{
    conv3d_bwd_input, conv3d_bwd_weight, conv3d_fwd, convt3d_bwd_input, convt3d_bwd_weight,
    convt3d_fwd,
};
use super::tensor::Tensor;
use crate::real::Real;
use rayon::prelude::*;

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Affine(NodeId, f64),
    Exp(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Clamp(NodeId, f64, f64),
    Matmul(NodeId, NodeId),
    Conv3d {
        x: NodeId,
        w: NodeId,
        stride: usize,
        pad: usize,
    },
    ConvT3d {
        x: NodeId,
        w: NodeId,
        stride: usize,
        pad: usize,
    },
    BiasRows(NodeId, NodeId),
    LogSoftmaxCols(NodeId),
    GatherCols(NodeId, Vec<usize>),
    SliceRows(NodeId, usize, usize),
    ConcatRows(NodeId, NodeId),
    Reshape(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
    needs_grad: bool,
}

/// Per-node gradients produced by a backward sweep.
pub struct Grads<T> {
    by_node: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Grads<T> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.by_node.get(id).and_then(|g| g.as_ref())
    }
}

#[derive(Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op, needs_grad: bool) -> NodeId {
        value.assert_finite("tape node");
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        self.nodes.len() - 1
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id].needs_grad
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient (inputs, targets, noise).
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.zip(a, b, |x, y| x + y);
        let needs = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), needs)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.zip(a, b, |x, y| x - y);
        let needs = self.needs(a) || self.needs(b);
        self.push(v, Op::Sub(a, b), needs)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.zip(a, b, |x, y| x * y);
        let needs = self.needs(a) || self.needs(b);
        self.push(v, Op::Mul(a, b), needs)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.zip(a, b, |x, y| x / y);
        let needs = self.needs(a) || self.needs(b);
        self.push(v, Op::Div(a, b), needs)
    }

    /// scale * x + shift, with compile-time constants.
    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> NodeId {
        let (s, c) = (T::of(scale), T::of(shift));
        let v = self.map(x, |t| s * t + c);
        let needs = self.needs(x);
        self.push(v, Op::Affine(x, scale), needs)
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        self.affine(x, -1.0, 0.0)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let v = self.map(x, |t| t.exp());
        let needs = self.needs(x);
        self.push(v, Op::Exp(x), needs)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.map(x, |t| if t > T::zero() { t } else { T::zero() });
        let needs = self.needs(x);
        self.push(v, Op::Relu(x), needs)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let one = T::one();
        let v = self.map(x, |t| one / (one + (-t).exp()));
        let needs = self.needs(x);
        self.push(v, Op::Sigmoid(x), needs)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.map(x, |t| t.tanh());
        let needs = self.needs(x);
        self.push(v, Op::Tanh(x), needs)
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let (l, h) = (T::of(lo), T::of(hi));
        let v = self.map(x, |t| t.max(l).min(h));
        let needs = self.needs(x);
        self.push(v, Op::Clamp(x, lo, hi), needs)
    }

    /// [m, k] x [k, n] -> [m, n], f64 inner products.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matmul_val(&self.nodes[a].value, &self.nodes[b].value);
        let needs = self.needs(a) || self.needs(b);
        self.push(v, Op::Matmul(a, b), needs)
    }

    pub fn conv3d(&mut self, x: NodeId, w: NodeId, stride: usize, pad: usize) -> NodeId {
        let v = conv3d_fwd(&self.nodes[x].value, &self.nodes[w].value, stride, pad);
        let needs = self.needs(x) || self.needs(w);
        self.push(v, Op::Conv3d { x, w, stride, pad }, needs)
    }

    pub fn convt3d(
        &mut self,
        x: NodeId,
        w: NodeId,
        stride: usize,
        pad: usize,
        out_pad: usize,
    ) -> NodeId {
        let v = convt3d_fwd(
            &self.nodes[x].value,
            &self.nodes[w].value,
            stride,
            pad,
            out_pad,
        );
        let needs = self.needs(x) || self.needs(w);
        self.push(
            v,
            Op::ConvT3d { x, w, stride, pad },
            needs,
        )
    }

    /// Add a per-row bias: x [R, ...cols...] + b [R].
    pub fn bias_rows(&mut self, x: NodeId, b: NodeId) -> NodeId {
        let xv = &self.nodes[x].value;
        let bv = &self.nodes[b].value;
        let rows = xv.shape[0];
        assert_eq!(bv.numel(), rows, "bias length mismatch");
        let cols = xv.numel() / rows;
        let mut out = xv.clone();
        for r in 0..rows {
            let add = bv.data[r];
            for c in 0..cols {
                out.data[r * cols + c] = out.data[r * cols + c] + add;
            }
        }
        let needs = self.needs(x) || self.needs(b);
        self.push(out, Op::BiasRows(x, b), needs)
    }

    /// Column-wise log-softmax over rows for a [C, M] tensor.
    pub fn log_softmax_cols(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x].value;
        let (c, m) = (xv.shape[0], xv.numel() / xv.shape[0]);
        let mut out = xv.clone();
        for col in 0..m {
            let mut mx = f64::NEG_INFINITY;
            for r in 0..c {
                mx = mx.max(xv.data[r * m + col].to_f64_lossy());
            }
            let mut sum = 0.0f64;
            for r in 0..c {
                sum += (xv.data[r * m + col].to_f64_lossy() - mx).exp();
            }
            let lse = mx + sum.ln();
            for r in 0..c {
                out.data[r * m + col] = T::of(xv.data[r * m + col].to_f64_lossy() - lse);
            }
        }
        let needs = self.needs(x);
        self.push(out, Op::LogSoftmaxCols(x), needs)
    }

    /// Select columns of a [C, M] tensor -> [C, K]; indices may repeat.
    pub fn gather_cols(&mut self, x: NodeId, idx: Vec<usize>) -> NodeId {
        let xv = &self.nodes[x].value;
        let (c, m) = (xv.shape[0], xv.numel() / xv.shape[0]);
        let k = idx.len();
        let mut out = Tensor::zeros(&[c, k]);
        for r in 0..c {
            for (j, &src) in idx.iter().enumerate() {
                assert!(src < m, "gather index out of range");
                out.data[r * k + j] = xv.data[r * m + src];
            }
        }
        let needs = self.needs(x);
        self.push(out, Op::GatherCols(x, idx), needs)
    }

    /// Rows lo..hi of a [R, ...] tensor.
    pub fn slice_rows(&mut self, x: NodeId, lo: usize, hi: usize) -> NodeId {
        let xv = &self.nodes[x].value;
        let rows = xv.shape[0];
        assert!(lo < hi && hi <= rows, "bad row slice");
        let cols = xv.numel() / rows;
        let mut shape = xv.shape.clone();
        shape[0] = hi - lo;
        let out = Tensor::from_vec(&shape, xv.data[lo * cols..hi * cols].to_vec());
        let needs = self.needs(x);
        self.push(out, Op::SliceRows(x, lo, hi), needs)
    }

    /// Stack two tensors along dim 0; trailing dims must agree.
    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let av = &self.nodes[a].value;
        let bv = &self.nodes[b].value;
        assert_eq!(av.shape[1..], bv.shape[1..], "concat trailing dims differ");
        let mut shape = av.shape.clone();
        shape[0] += bv.shape[0];
        let mut data = av.data.clone();
        data.extend_from_slice(&bv.data);
        let needs = self.needs(a) || self.needs(b);
        self.push(Tensor::from_vec(&shape, data), Op::ConcatRows(a, b), needs)
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> NodeId {
        let xv = &self.nodes[x].value;
        assert_eq!(
            xv.numel(),
            shape.iter().product::<usize>(),
            "reshape numel mismatch"
        );
        let out = Tensor::from_vec(shape, xv.data.clone());
        let needs = self.needs(x);
        self.push(out, Op::Reshape(x), needs)
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.nodes[x]
            .value
            .data
            .iter()
            .map(|v| v.to_f64_lossy())
            .sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(T::of(s)), Op::SumAll(x), needs)
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let n = self.nodes[x].value.numel();
        let s: f64 = self.nodes[x]
            .value
            .data
            .iter()
            .map(|v| v.to_f64_lossy())
            .sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(T::of(s / n as f64)), Op::MeanAll(x), needs)
    }

    fn map(&self, x: NodeId, f: impl Fn(T) -> T) -> Tensor<T> {
        let xv = &self.nodes[x].value;
        Tensor {
            shape: xv.shape.clone(),
            data: xv.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip(&self, a: NodeId, b: NodeId, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let av = &self.nodes[a].value;
        let bv = &self.nodes[b].value;
        assert_eq!(av.shape, bv.shape, "elementwise shape mismatch");
        Tensor {
            shape: av.shape.clone(),
            data: av.data.iter().zip(&bv.data).map(|(&x, &y)| f(x, y)).collect(),
        }
    }

    /// Backward from a scalar root with seed gradient 1.
    pub fn backward(&self, root: NodeId) -> Grads<T> {
        assert_eq!(self.nodes[root].value.numel(), 1, "root must be scalar");
        self.backward_seeded(&[(root, Tensor::scalar(T::one()))])
    }

    /// Backward from explicit (node, cotangent) seeds; useful both for
    /// scalar losses and for splicing externally computed gradients into
    /// the graph. Seeds accumulate if they name the same node twice.
    pub fn backward_seeded(&self, seeds: &[(NodeId, Tensor<T>)]) -> Grads<T> {
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        for (id, seed) in seeds {
            assert_eq!(
                seed.shape, self.nodes[*id].value.shape,
                "seed shape mismatch"
            );
            accumulate(&mut grads[*id], seed);
        }
        let max_seed = seeds.iter().map(|(id, _)| *id).max().unwrap_or(0);
        for id in (0..=max_seed).rev() {
            if grads[id].is_none() || !self.nodes[id].needs_grad {
                continue;
            }
            let g = grads[id].take().unwrap();
            self.step_backward(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Grads { by_node: grads }
    }

    fn step_backward(&self, id: NodeId, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.needs(*a) {
                    accumulate(&mut grads[*a], g);
                }
                if self.needs(*b) {
                    accumulate(&mut grads[*b], g);
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    accumulate(&mut grads[*a], g);
                }
                if self.needs(*b) {
                    let neg = scale_tensor(g, -1.0);
                    accumulate(&mut grads[*b], &neg);
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let t = hadamard(g, &self.nodes[*b].value);
                    accumulate(&mut grads[*a], &t);
                }
                if self.needs(*b) {
                    let t = hadamard(g, &self.nodes[*a].value);
                    accumulate(&mut grads[*b], &t);
                }
            }
            Op::Div(a, b) => {
                let bv = &self.nodes[*b].value;
                if self.needs(*a) {
                    let t = zip_tensors(g, bv, |gi, bi| gi / bi);
                    accumulate(&mut grads[*a], &t);
                }
                if self.needs(*b) {
                    let av = &self.nodes[*a].value;
                    let mut t = g.clone();
                    for i in 0..t.numel() {
                        t.data[i] = -g.data[i] * av.data[i] / (bv.data[i] * bv.data[i]);
                    }
                    accumulate(&mut grads[*b], &t);
                }
            }
            Op::Affine(a, s) => {
                if self.needs(*a) {
                    let t = scale_tensor(g, *s);
                    accumulate(&mut grads[*a], &t);
                }
            }
            Op::Exp(a) => {
                if self.needs(*a) {
                    let t = hadamard(g, &node.value);
                    accumulate(&mut grads[*a], &t);
                }
            }
            Op::Relu(a) => {
                if self.needs(*a) {
                    let xv = &self.nodes[*a].value;
                    let t = zip_tensors(g, xv, |gi, xi| {
                        if xi > T::zero() {
                            gi
                        } else {
                            T::zero()
                        }
                    });
                    accumulate(&mut grads[*a], &t);
                }
            }
            Op::Sigmoid(a) => {
                if self.needs(*a) {
                    let one = T::one();
                    let t = zip_tensors(g, &node.value, |gi, yi| gi * yi * (one - yi));
                    accumulate(&mut grads[*a], &t);
                }
            }
            Op::Tanh(a) => {
                if self.needs(*a) {
                    let one = T::one();
                    let t = zip_tensors(g, &node.value, |gi, yi| gi * (one - yi * yi));
                    accumulate(&mut grads[*a], &t);
                }
            }
            Op::Clamp(a, lo, hi) => {
                if self.needs(*a) {
                    let (l, h) = (T::of(*lo), T::of(*hi));
                    let xv = &self.nodes[*a].value;
                    let t = zip_tensors(g, xv, |gi, xi| {
                        if xi > l && xi < h {
                            gi
                        } else {
                            T::zero()
                        }
                    });
                    accumulate(&mut grads[*a], &t);
                }
            }
            Op::Matmul(a, b) => {
                let av = &self.nodes[*a].value;
                let bv = &self.nodes[*b].value;
                if self.needs(*a) {
                    let t = matmul_nt(g, bv);
                    accumulate(&mut grads[*a], &t);
                }
                if self.needs(*b) {
                    let t = matmul_tn(av, g);
                    accumulate(&mut grads[*b], &t);
                }
            }
            Op::Conv3d { x, w, stride, pad } => {
                let xv = &self.nodes[*x].value;
                let wv = &self.nodes[*w].value;
                if self.needs(*x) {
                    let t = conv3d_bwd_input(g, wv, *stride, *pad, &xv.shape);
                    accumulate(&mut grads[*x], &t);
                }
                if self.needs(*w) {
                    let t = conv3d_bwd_weight(g, xv, *stride, *pad, &wv.shape);
                    accumulate(&mut grads[*w], &t);
                }
            }
            Op::ConvT3d { x, w, stride, pad } => {
                let xv = &self.nodes[*x].value;
                let wv = &self.nodes[*w].value;
                if self.needs(*x) {
                    let t = convt3d_bwd_input(g, wv, *stride, *pad, &xv.shape);
                    accumulate(&mut grads[*x], &t);
                }
                if self.needs(*w) {
                    let t = convt3d_bwd_weight(g, xv, *stride, *pad, &wv.shape);
                    accumulate(&mut grads[*w], &t);
                }
            }
            Op::BiasRows(x, b) => {
                if self.needs(*x) {
                    accumulate(&mut grads[*x], g);
                }
                if self.needs(*b) {
                    let rows = self.nodes[*b].value.numel();
                    let cols = g.numel() / rows;
                    let mut gb = Tensor::zeros(&self.nodes[*b].value.shape);
                    for r in 0..rows {
                        let mut acc = 0.0f64;
                        for c in 0..cols {
                            acc += g.data[r * cols + c].to_f64_lossy();
                        }
                        gb.data[r] = T::of(acc);
                    }
                    accumulate(&mut grads[*b], &gb);
                }
            }
            Op::LogSoftmaxCols(x) => {
                if self.needs(*x) {
                    let (c, m) = (node.value.shape[0], node.value.numel() / node.value.shape[0]);
                    let mut t = g.clone();
                    for col in 0..m {
                        let mut gsum = 0.0f64;
                        for r in 0..c {
                            gsum += g.data[r * m + col].to_f64_lossy();
                        }
                        for r in 0..c {
                            let soft = node.value.data[r * m + col].to_f64_lossy().exp();
                            t.data[r * m + col] = T::of(
                                g.data[r * m + col].to_f64_lossy() - soft * gsum,
                            );
                        }
                    }
                    accumulate(&mut grads[*x], &t);
                }
            }
            Op::GatherCols(x, idx) => {
                if self.needs(*x) {
                    let xv = &self.nodes[*x].value;
                    let (c, m) = (xv.shape[0], xv.numel() / xv.shape[0]);
                    let k = idx.len();
                    let mut gx = Tensor::zeros(&xv.shape);
                    for r in 0..c {
                        for (j, &dst) in idx.iter().enumerate() {
                            gx.data[r * m + dst] = gx.data[r * m + dst] + g.data[r * k + j];
                        }
                    }
                    accumulate(&mut grads[*x], &gx);
                }
            }
            Op::SliceRows(x, lo, _hi) => {
                if self.needs(*x) {
                    let xv = &self.nodes[*x].value;
                    let cols = xv.numel() / xv.shape[0];
                    let mut gx = Tensor::zeros(&xv.shape);
                    gx.data[lo * cols..lo * cols + g.numel()].copy_from_slice(&g.data);
                    accumulate(&mut grads[*x], &gx);
                }
            }
            Op::ConcatRows(a, b) => {
                let an = self.nodes[*a].value.numel();
                if self.needs(*a) {
                    let t = Tensor::from_vec(&self.nodes[*a].value.shape, g.data[..an].to_vec());
                    accumulate(&mut grads[*a], &t);
                }
                if self.needs(*b) {
                    let t = Tensor::from_vec(&self.nodes[*b].value.shape, g.data[an..].to_vec());
                    accumulate(&mut grads[*b], &t);
                }
            }
            Op::Reshape(x) => {
                if self.needs(*x) {
                    let t = Tensor::from_vec(&self.nodes[*x].value.shape, g.data.clone());
                    accumulate(&mut grads[*x], &t);
                }
            }
            Op::SumAll(x) => {
                if self.needs(*x) {
                    let s = g.item();
                    let xv = &self.nodes[*x].value;
                    let t = Tensor::from_vec(&xv.shape, vec![s; xv.numel()]);
                    accumulate(&mut grads[*x], &t);
                }
            }
            Op::MeanAll(x) => {
                if self.needs(*x) {
                    let xv = &self.nodes[*x].value;
                    let s = g.item() / T::of(xv.numel() as f64);
                    let t = Tensor::from_vec(&xv.shape, vec![s; xv.numel()]);
                    accumulate(&mut grads[*x], &t);
                }
            }
        }
    }
}

fn accumulate<T: Real>(slot: &mut Option<Tensor<T>>, g: &Tensor<T>) {
    match slot {
        None => *slot = Some(g.clone()),
        Some(acc) => {
            assert_eq!(acc.shape, g.shape, "gradient shape mismatch");
            for (a, b) in acc.data.iter_mut().zip(&g.data) {
                *a = *a + *b;
            }
        }
    }
}

fn scale_tensor<T: Real>(t: &Tensor<T>, s: f64) -> Tensor<T> {
    let sv = T::of(s);
    Tensor {
        shape: t.shape.clone(),
        data: t.data.iter().map(|&v| v * sv).collect(),
    }
}

fn hadamard<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    zip_tensors(a, b, |x, y| x * y)
}

fn zip_tensors<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    assert_eq!(a.shape, b.shape, "elementwise shape mismatch");
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

fn matmul_val<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    assert_eq!(a.shape.len(), 2, "matmul lhs must be 2-d");
    assert_eq!(b.shape.len(), 2, "matmul rhs must be 2-d");
    let (m, ka) = (a.shape[0], a.shape[1]);
    let (kb, n) = (b.shape[0], b.shape[1]);
    assert_eq!(ka, kb, "matmul inner dims differ");
    let mut out = Tensor::zeros(&[m, n]);
    out.data
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| {
            for (j, cell) in row.iter_mut().enumerate() {
                let mut acc = 0.0f64;
                for k in 0..ka {
                    acc += a.data[i * ka + k].to_f64_lossy() * b.data[k * n + j].to_f64_lossy();
                }
                *cell = T::of(acc);
            }
        });
    out
}

/// g [m, n] x b [k, n] -> [m, k]  (g . b^T)
fn matmul_nt<T: Real>(g: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (m, n) = (g.shape[0], g.shape[1]);
    let k = b.shape[0];
    assert_eq!(b.shape[1], n);
    let mut out = Tensor::zeros(&[m, k]);
    out.data
        .par_chunks_mut(k)
        .enumerate()
        .for_each(|(i, row)| {
            for (j, cell) in row.iter_mut().enumerate() {
                let mut acc = 0.0f64;
                for c in 0..n {
                    acc += g.data[i * n + c].to_f64_lossy() * b.data[j * n + c].to_f64_lossy();
                }
                *cell = T::of(acc);
            }
        });
    out
}

/// a [m, k] x g [m, n] -> [k, n]  (a^T . g)
fn matmul_tn<T: Real>(a: &Tensor<T>, g: &Tensor<T>) -> Tensor<T> {
    let (m, k) = (a.shape[0], a.shape[1]);
    let n = g.shape[1];
    assert_eq!(g.shape[0], m);
    let mut out = Tensor::zeros(&[k, n]);
    out.data
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| {
            for (j, cell) in row.iter_mut().enumerate() {
                let mut acc = 0.0f64;
                for r in 0..m {
                    acc += a.data[r * k + i].to_f64_lossy() * g.data[r * n + j].to_f64_lossy();
                }
                *cell = T::of(acc);
            }
        });
    out
}
