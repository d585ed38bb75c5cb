use std::cell::{Cell, RefCell};
use std::fmt::{self, Write as _};
use std::ops::Range;
use std::sync::atomic::{AtomicU32, Ordering};

use super::kernels::{gemm_nn, gemm_nt, gemm_tn, transpose_last2};
use super::{Result, Shape, Tensor, TensorError};

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

thread_local! {
    static FAULT: Cell<Option<OpKind>> = const { Cell::new(None) };
}

/// Handle to a node on a [`Tape`]. Only meaningful on the tape that made it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u32,
    idx: u32,
}

impl Var {
    pub fn index(&self) -> usize {
        self.idx as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    Scale,
    Sigmoid,
    Tanh,
    Relu,
    Softmax,
    LayerNorm,
    Sum,
    Mean,
    Reshape,
    Concat,
    Slice,
}

impl OpKind {
    pub const ALL: [OpKind; 17] = [
        OpKind::Leaf,
        OpKind::MatMul,
        OpKind::Transpose,
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Scale,
        OpKind::Sigmoid,
        OpKind::Tanh,
        OpKind::Relu,
        OpKind::Softmax,
        OpKind::LayerNorm,
        OpKind::Sum,
        OpKind::Mean,
        OpKind::Reshape,
        OpKind::Concat,
        OpKind::Slice,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::MatMul => "matmul",
            OpKind::Transpose => "transpose",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Tanh => "tanh",
            OpKind::Relu => "relu",
            OpKind::Softmax => "softmax",
            OpKind::LayerNorm => "layer_norm",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::Reshape => "reshape",
            OpKind::Concat => "concat",
            OpKind::Slice => "slice",
        }
    }

    pub fn from_name(name: &str) -> Option<OpKind> {
        OpKind::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Flips the sign of one op's backward rule on the current thread while alive.
///
/// This is a verification hook: it lets the gradient-check harness prove it
/// can detect a broken backward rule.
pub struct FaultGuard {
    previous: Option<OpKind>,
}

impl FaultGuard {
    pub fn inject(kind: OpKind) -> FaultGuard {
        let previous = FAULT.with(|f| f.replace(Some(kind)));
        FaultGuard { previous }
    }
}

impl Drop for FaultGuard {
    fn drop(&mut self) {
        FAULT.with(|f| f.set(self.previous));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ewise {
    Add,
    Sub,
    Mul,
}

/// How the right-hand operand of an elementwise op maps onto the output.
#[derive(Debug)]
enum Broadcast {
    Same,
    /// `b` repeats every `n` output elements (it matches a trailing block).
    Cyclic(usize),
    /// Explicit output-index -> b-index map for interior stretching.
    Map(Vec<usize>),
}

impl Broadcast {
    fn plan(a: &Shape, b: &Shape) -> Result<Broadcast> {
        if a == b {
            return Ok(Broadcast::Same);
        }
        let (ad, bd) = (a.dims(), b.dims());
        let err = || TensorError::Shape(format!("cannot broadcast {b} onto {a}"));
        if bd.len() > ad.len() {
            // Leading unit dims on b are harmless.
            let extra = bd.len() - ad.len();
            if bd[..extra].iter().any(|&d| d != 1) {
                return Err(err());
            }
            let trimmed = Shape::from_dims_unchecked(bd[extra..].to_vec());
            return Broadcast::plan(a, &trimmed);
        }
        let offset = ad.len() - bd.len();
        for (i, &d) in bd.iter().enumerate() {
            if d != 1 && d != ad[offset + i] {
                return Err(err());
            }
        }
        let first_real = bd.iter().position(|&d| d != 1).unwrap_or(bd.len());
        if bd[first_real..] == ad[offset + first_real..] {
            return Ok(Broadcast::Cyclic(b.numel()));
        }
        // General case: strides of b in output index space, 0 where stretched.
        let mut strides = vec![0usize; ad.len()];
        let mut s = 1;
        for i in (0..bd.len()).rev() {
            if bd[i] != 1 {
                strides[offset + i] = s;
            }
            s *= bd[i];
        }
        let n = a.numel();
        let mut map = Vec::with_capacity(n);
        let mut counter = vec![0usize; ad.len()];
        let mut idx = 0usize;
        for _ in 0..n {
            map.push(idx);
            for axis in (0..ad.len()).rev() {
                counter[axis] += 1;
                idx += strides[axis];
                if counter[axis] < ad[axis] {
                    break;
                }
                idx -= strides[axis] * ad[axis];
                counter[axis] = 0;
            }
        }
        Ok(Broadcast::Map(map))
    }

    #[inline]
    fn b_index(&self, i: usize) -> usize {
        match self {
            Broadcast::Same => i,
            Broadcast::Cyclic(n) => i % n,
            Broadcast::Map(m) => m[i],
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: usize, b: usize, batch: usize, m: usize, k: usize, n: usize },
    Transpose { x: usize, batch: usize, rows: usize, cols: usize },
    Ewise { kind: Ewise, a: usize, b: usize, bcast: Broadcast },
    Scale { x: usize, c: f64 },
    Act { x: usize, kind: Activation },
    Softmax { x: usize, outer: usize, len: usize, inner: usize },
    LayerNorm { x: usize, gain: usize, bias: usize, cols: usize, xhat: Vec<f64>, inv_std: Vec<f64> },
    Reduce { x: usize, kind: Reduction, outer: usize, len: usize, inner: usize },
    Reshape { x: usize },
    Concat { parts: Vec<(usize, usize)>, outer: usize, inner: usize },
    Slice { x: usize, outer: usize, len: usize, inner: usize, start: usize, end: usize },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::MatMul { .. } => OpKind::MatMul,
            Op::Transpose { .. } => OpKind::Transpose,
            Op::Ewise { kind: Ewise::Add, .. } => OpKind::Add,
            Op::Ewise { kind: Ewise::Sub, .. } => OpKind::Sub,
            Op::Ewise { kind: Ewise::Mul, .. } => OpKind::Mul,
            Op::Scale { .. } => OpKind::Scale,
            Op::Act { kind: Activation::Sigmoid, .. } => OpKind::Sigmoid,
            Op::Act { kind: Activation::Tanh, .. } => OpKind::Tanh,
            Op::Act { kind: Activation::Relu, .. } => OpKind::Relu,
            Op::Softmax { .. } => OpKind::Softmax,
            Op::LayerNorm { .. } => OpKind::LayerNorm,
            Op::Reduce { kind: Reduction::Sum, .. } => OpKind::Sum,
            Op::Reduce { kind: Reduction::Mean, .. } => OpKind::Mean,
            Op::Reshape { .. } => OpKind::Reshape,
            Op::Concat { .. } => OpKind::Concat,
            Op::Slice { .. } => OpKind::Slice,
        }
    }

    fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul { a, b, .. } | Op::Ewise { a, b, .. } => vec![*a, *b],
            Op::LayerNorm { x, gain, bias, .. } => vec![*x, *gain, *bias],
            Op::Concat { parts, .. } => parts.iter().map(|p| p.0).collect(),
            Op::Transpose { x, .. }
            | Op::Scale { x, .. }
            | Op::Act { x, .. }
            | Op::Softmax { x, .. }
            | Op::Reduce { x, .. }
            | Op::Reshape { x }
            | Op::Slice { x, .. } => vec![*x],
        }
    }
}

struct Node {
    op: Op,
    shape: Shape,
    value: Vec<f64>,
    needs_grad: bool,
}

/// Append-only record of a forward computation.
///
/// Nodes are only ever appended, so every node's inputs precede it and the
/// backward sweep is the exact reverse of append order. A tape is confined to
/// one thread.
pub struct Tape {
    id: u32,
    nodes: RefCell<Vec<Node>>,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, v: Var) -> usize {
        assert_eq!(v.tape, self.id, "Var used on a tape that did not create it");
        v.idx as usize
    }

    fn push(&self, op: Op, shape: Shape, value: Vec<f64>) -> Var {
        debug_assert_eq!(shape.numel(), value.len());
        let mut nodes = self.nodes.borrow_mut();
        let needs_grad = op.inputs().iter().any(|&i| nodes[i].needs_grad);
        let idx = nodes.len();
        nodes.push(Node { op, shape, value, needs_grad });
        Var { tape: self.id, idx: idx as u32 }
    }

    fn push_leaf(&self, t: &Tensor, needs_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len();
        nodes.push(Node { op: Op::Leaf, shape: t.shape().clone(), value: t.data().to_vec(), needs_grad });
        Var { tape: self.id, idx: idx as u32 }
    }

    /// Leaf that tracks gradients iff `t.requires_grad()`.
    pub fn leaf(&self, t: &Tensor) -> Var {
        self.push_leaf(t, t.requires_grad())
    }

    /// Leaf that always tracks gradients.
    pub fn param(&self, t: &Tensor) -> Var {
        self.push_leaf(t, true)
    }

    /// Leaf that never tracks gradients.
    pub fn constant(&self, t: &Tensor) -> Var {
        self.push_leaf(t, false)
    }

    pub fn shape(&self, v: Var) -> Shape {
        let i = self.check(v);
        self.nodes.borrow()[i].shape.clone()
    }

    pub fn value(&self, v: Var) -> Tensor {
        let i = self.check(v);
        let nodes = self.nodes.borrow();
        Tensor::from_shape(nodes[i].shape.clone(), nodes[i].value.clone())
            .expect("node value length matches its shape")
    }

    pub fn with_value<R>(&self, v: Var, f: impl FnOnce(&[f64]) -> R) -> R {
        let i = self.check(v);
        f(&self.nodes.borrow()[i].value)
    }

    /// Line-oriented listing: `id kind [inputs] shape`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, n) in self.nodes.borrow().iter().enumerate() {
            let _ = writeln!(out, "{i} {} {:?} {}", n.op.kind(), n.op.inputs(), n.shape);
        }
        out
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.check(a), self.check(b));
        let nodes = self.nodes.borrow();
        let (sa, sb) = (&nodes[ai].shape, &nodes[bi].shape);
        let mismatch = || TensorError::Shape(format!("matmul {sa} x {sb}"));
        let (batch, m, k, n, out_dims) = match (sa.dims(), sb.dims()) {
            ([m, k], [k2, n]) if k == k2 => (1, *m, *k, *n, vec![*m, *n]),
            ([bt, m, k], [k2, n]) if k == k2 => (1, bt * m, *k, *n, vec![*bt, *m, *n]),
            ([bt, m, k], [bt2, k2, n]) if bt == bt2 && k == k2 => (*bt, *m, *k, *n, vec![*bt, *m, *n]),
            _ => return Err(mismatch()),
        };
        let (av, bv) = (&nodes[ai].value, &nodes[bi].value);
        let mut out = vec![0.0; batch * m * n];
        let b_stride = if batch == 1 { 0 } else { k * n };
        for bt in 0..batch {
            gemm_nn(
                &av[bt * m * k..(bt + 1) * m * k],
                &bv[bt * b_stride..bt * b_stride + k * n],
                &mut out[bt * m * n..(bt + 1) * m * n],
                m,
                k,
                n,
            );
        }
        drop(nodes);
        Ok(self.push(Op::MatMul { a: ai, b: bi, batch, m, k, n }, Shape::from_dims_unchecked(out_dims), out))
    }

    /// Swaps the last two axes.
    pub fn transpose(&self, x: Var) -> Result<Var> {
        let xi = self.check(x);
        let nodes = self.nodes.borrow();
        let dims = nodes[xi].shape.dims();
        if dims.len() < 2 {
            return Err(TensorError::Shape(format!("transpose needs rank >= 2, got {}", nodes[xi].shape)));
        }
        let r = dims.len();
        let (rows, cols) = (dims[r - 2], dims[r - 1]);
        let batch = nodes[xi].value.len() / (rows * cols);
        let mut out_dims = dims.to_vec();
        out_dims.swap(r - 2, r - 1);
        let out = transpose_last2(&nodes[xi].value, batch, rows, cols);
        drop(nodes);
        Ok(self.push(Op::Transpose { x: xi, batch, rows, cols }, Shape::from_dims_unchecked(out_dims), out))
    }

    fn ewise(&self, kind: Ewise, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.check(a), self.check(b));
        let nodes = self.nodes.borrow();
        let bcast = Broadcast::plan(&nodes[ai].shape, &nodes[bi].shape)?;
        let (av, bv) = (&nodes[ai].value, &nodes[bi].value);
        let f = match kind {
            Ewise::Add => |x: f64, y: f64| x + y,
            Ewise::Sub => |x: f64, y: f64| x - y,
            Ewise::Mul => |x: f64, y: f64| x * y,
        };
        let out: Vec<f64> = match &bcast {
            Broadcast::Same => av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect(),
            Broadcast::Cyclic(n) => av
                .chunks(*n)
                .flat_map(|chunk| chunk.iter().zip(bv.iter()).map(|(&x, &y)| f(x, y)))
                .collect(),
            Broadcast::Map(m) => av.iter().zip(m).map(|(&x, &j)| f(x, bv[j])).collect(),
        };
        let shape = nodes[ai].shape.clone();
        drop(nodes);
        Ok(self.push(Op::Ewise { kind, a: ai, b: bi, bcast }, shape, out))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.ewise(Ewise::Add, a, b)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.ewise(Ewise::Sub, a, b)
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.ewise(Ewise::Mul, a, b)
    }

    pub fn scale(&self, x: Var, c: f64) -> Var {
        let xi = self.check(x);
        let nodes = self.nodes.borrow();
        let out = nodes[xi].value.iter().map(|v| v * c).collect();
        let shape = nodes[xi].shape.clone();
        drop(nodes);
        self.push(Op::Scale { x: xi, c }, shape, out)
    }

    pub fn activation(&self, kind: Activation, x: Var) -> Var {
        let xi = self.check(x);
        let nodes = self.nodes.borrow();
        let f = match kind {
            Activation::Sigmoid => sigmoid,
            Activation::Tanh => f64::tanh,
            Activation::Relu => |v: f64| if v > 0.0 { v } else { 0.0 },
        };
        let out = nodes[xi].value.iter().map(|&v| f(v)).collect();
        let shape = nodes[xi].shape.clone();
        drop(nodes);
        self.push(Op::Act { x: xi, kind }, shape, out)
    }

    pub fn sigmoid(&self, x: Var) -> Var {
        self.activation(Activation::Sigmoid, x)
    }

    pub fn tanh(&self, x: Var) -> Var {
        self.activation(Activation::Tanh, x)
    }

    pub fn relu(&self, x: Var) -> Var {
        self.activation(Activation::Relu, x)
    }

    /// Numerically stable softmax along `axis` (max-subtracted).
    pub fn softmax(&self, x: Var, axis: usize) -> Result<Var> {
        let xi = self.check(x);
        let nodes = self.nodes.borrow();
        let shape = nodes[xi].shape.clone();
        shape.check_axis(axis)?;
        let (outer, len, inner) = shape.split_at_axis(axis);
        let xv = &nodes[xi].value;
        let mut out = vec![0.0; xv.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |l: usize| (o * len + l) * inner + i;
                let max = (0..len).map(|l| xv[at(l)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for l in 0..len {
                    let e = (xv[at(l)] - max).exp();
                    out[at(l)] = e;
                    total += e;
                }
                for l in 0..len {
                    out[at(l)] /= total;
                }
            }
        }
        drop(nodes);
        Ok(self.push(Op::Softmax { x: xi, outer, len, inner }, shape, out))
    }

    /// Normalizes over the last dimension: `(x - mean) / sqrt(var + eps) * gain + bias`,
    /// with the population variance.
    pub fn layer_norm(&self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        if !(eps > 0.0) {
            return Err(TensorError::Param(format!("layer_norm eps must be > 0, got {eps}")));
        }
        let (xi, gi, bi) = (self.check(x), self.check(gain), self.check(bias));
        let nodes = self.nodes.borrow();
        let shape = nodes[xi].shape.clone();
        let cols = *shape.dims().last().expect("rank >= 1");
        for (name, idx) in [("gain", gi), ("bias", bi)] {
            if nodes[idx].value.len() != cols {
                return Err(TensorError::Shape(format!(
                    "layer_norm {name} has {} elements, last dim is {cols}",
                    nodes[idx].value.len()
                )));
            }
        }
        let (xv, gv, bv) = (&nodes[xi].value, &nodes[gi].value, &nodes[bi].value);
        let rows = xv.len() / cols;
        let mut out = vec![0.0; xv.len()];
        let mut xhat = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = &xv[r * cols..(r + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[r] = inv;
            for c in 0..cols {
                let h = (row[c] - mean) * inv;
                xhat[r * cols + c] = h;
                out[r * cols + c] = h * gv[c] + bv[c];
            }
        }
        drop(nodes);
        Ok(self.push(Op::LayerNorm { x: xi, gain: gi, bias: bi, cols, xhat, inv_std }, shape, out))
    }

    /// Sum or mean over one axis (removed from the shape), or over everything
    /// when `axis` is `None`. A fully reduced result has shape `[1]`.
    pub fn reduce(&self, kind: Reduction, x: Var, axis: Option<usize>) -> Result<Var> {
        let xi = self.check(x);
        let nodes = self.nodes.borrow();
        let shape = &nodes[xi].shape;
        let (outer, len, inner, out_dims) = match axis {
            None => (1, shape.numel(), 1, vec![1]),
            Some(ax) => {
                shape.check_axis(ax)?;
                let (o, l, i) = shape.split_at_axis(ax);
                let mut d = shape.dims().to_vec();
                d.remove(ax);
                if d.is_empty() {
                    d.push(1);
                }
                (o, l, i, d)
            }
        };
        let xv = &nodes[xi].value;
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let src = &xv[(o * len + l) * inner..(o * len + l + 1) * inner];
                for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        if kind == Reduction::Mean {
            let inv = 1.0 / len as f64;
            out.iter_mut().for_each(|v| *v *= inv);
        }
        drop(nodes);
        Ok(self.push(Op::Reduce { x: xi, kind, outer, len, inner }, Shape::from_dims_unchecked(out_dims), out))
    }

    pub fn sum(&self, x: Var) -> Var {
        self.reduce(Reduction::Sum, x, None).expect("full reduction cannot fail")
    }

    pub fn mean(&self, x: Var) -> Var {
        self.reduce(Reduction::Mean, x, None).expect("full reduction cannot fail")
    }

    pub fn reshape(&self, x: Var, dims: &[usize]) -> Result<Var> {
        let xi = self.check(x);
        let shape = Shape::new(dims.to_vec())?;
        let nodes = self.nodes.borrow();
        if shape.numel() != nodes[xi].value.len() {
            return Err(TensorError::Shape(format!("cannot reshape {} into {shape}", nodes[xi].shape)));
        }
        let out = nodes[xi].value.clone();
        drop(nodes);
        Ok(self.push(Op::Reshape { x: xi }, shape, out))
    }

    pub fn concat(&self, parts: &[Var], axis: usize) -> Result<Var> {
        let idxs: Vec<usize> = parts.iter().map(|&v| self.check(v)).collect();
        let Some(&first) = idxs.first() else {
            return Err(TensorError::Shape("concat of zero tensors".into()));
        };
        let nodes = self.nodes.borrow();
        let base = nodes[first].shape.clone();
        base.check_axis(axis)?;
        let mut total = 0;
        let mut lens = Vec::with_capacity(idxs.len());
        for &i in &idxs {
            let s = &nodes[i].shape;
            let compatible = s.rank() == base.rank()
                && s.dims().iter().zip(base.dims()).enumerate().all(|(ax, (a, b))| ax == axis || a == b);
            if !compatible {
                return Err(TensorError::Shape(format!("concat along {axis}: {s} vs {base}")));
            }
            lens.push(s.dim(axis));
            total += s.dim(axis);
        }
        let (outer, _, inner) = base.split_at_axis(axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&i, &l) in idxs.iter().zip(&lens) {
                out.extend_from_slice(&nodes[i].value[o * l * inner..(o + 1) * l * inner]);
            }
        }
        let mut dims = base.dims().to_vec();
        dims[axis] = total;
        drop(nodes);
        let parts = idxs.into_iter().zip(lens).collect();
        Ok(self.push(Op::Concat { parts, outer, inner }, Shape::from_dims_unchecked(dims), out))
    }

    pub fn slice(&self, x: Var, axis: usize, range: Range<usize>) -> Result<Var> {
        let xi = self.check(x);
        let nodes = self.nodes.borrow();
        let shape = &nodes[xi].shape;
        shape.check_axis(axis)?;
        let (outer, len, inner) = shape.split_at_axis(axis);
        if range.start >= range.end || range.end > len {
            return Err(TensorError::Shape(format!("slice {range:?} out of bounds for axis {axis} of {shape}")));
        }
        let width = range.end - range.start;
        let mut out = Vec::with_capacity(outer * width * inner);
        for o in 0..outer {
            out.extend_from_slice(&nodes[xi].value[(o * len + range.start) * inner..(o * len + range.end) * inner]);
        }
        let mut dims = shape.dims().to_vec();
        dims[axis] = width;
        drop(nodes);
        Ok(self.push(
            Op::Slice { x: xi, outer, len, inner, start: range.start, end: range.end },
            Shape::from_dims_unchecked(dims),
            out,
        ))
    }

    /// Reverse sweep from a scalar `loss`. Consumes the tape; the returned
    /// gradients cover every leaf that tracks gradients.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let li = self.check(loss);
        let nodes = self.nodes.into_inner();
        if nodes[li].value.len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {}",
                nodes[li].shape
            )));
        }
        let fault = FAULT.with(|f| f.get());
        let mut grads: Vec<Option<Vec<f64>>> = (0..nodes.len()).map(|_| None).collect();
        grads[li] = Some(vec![1.0]);

        for i in (0..=li).rev() {
            let node = &nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            let sign = if fault == Some(node.op.kind()) { -1.0 } else { 1.0 };
            backprop(&nodes, node, &g, sign, &mut grads);
        }

        let grads = grads
            .into_iter()
            .zip(&nodes)
            .map(|(g, n)| if matches!(n.op, Op::Leaf) && n.needs_grad { g } else { None })
            .collect();
        Ok(Gradients { tape: self.id, grads })
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], i: usize) -> Option<&'a mut Vec<f64>> {
    if !nodes[i].needs_grad {
        return None;
    }
    Some(grads[i].get_or_insert_with(|| vec![0.0; nodes[i].value.len()]))
}

fn backprop(nodes: &[Node], node: &Node, g: &[f64], sign: f64, grads: &mut [Option<Vec<f64>>]) {
    let g_signed;
    let g = if sign < 0.0 {
        g_signed = g.iter().map(|v| -v).collect::<Vec<_>>();
        &g_signed[..]
    } else {
        g
    };
    match &node.op {
        Op::Leaf => {}
        &Op::MatMul { a, b, batch, m, k, n } => {
            let b_stride = if batch == 1 { 0 } else { k * n };
            if let Some(ga) = slot(grads, nodes, a) {
                let bv = &nodes[b].value;
                for bt in 0..batch {
                    gemm_nt(
                        &g[bt * m * n..(bt + 1) * m * n],
                        &bv[bt * b_stride..bt * b_stride + k * n],
                        &mut ga[bt * m * k..(bt + 1) * m * k],
                        m,
                        n,
                        k,
                    );
                }
            }
            if let Some(gb) = slot(grads, nodes, b) {
                let av = &nodes[a].value;
                for bt in 0..batch {
                    gemm_tn(
                        &av[bt * m * k..(bt + 1) * m * k],
                        &g[bt * m * n..(bt + 1) * m * n],
                        &mut gb[bt * b_stride..bt * b_stride + k * n],
                        m,
                        k,
                        n,
                    );
                }
            }
        }
        &Op::Transpose { x, batch, rows, cols } => {
            if let Some(gx) = slot(grads, nodes, x) {
                let back = transpose_last2(g, batch, cols, rows);
                gx.iter_mut().zip(back).for_each(|(d, s)| *d += s);
            }
        }
        Op::Ewise { kind, a, b, bcast } => {
            let (a, b) = (*a, *b);
            match kind {
                Ewise::Add | Ewise::Sub => {
                    if let Some(ga) = slot(grads, nodes, a) {
                        ga.iter_mut().zip(g).for_each(|(d, s)| *d += s);
                    }
                    let s = if *kind == Ewise::Sub { -1.0 } else { 1.0 };
                    if let Some(gb) = slot(grads, nodes, b) {
                        for (i, gi) in g.iter().enumerate() {
                            gb[bcast.b_index(i)] += s * gi;
                        }
                    }
                }
                Ewise::Mul => {
                    if let Some(ga) = slot(grads, nodes, a) {
                        let bv = &nodes[b].value;
                        for (i, (d, gi)) in ga.iter_mut().zip(g).enumerate() {
                            *d += gi * bv[bcast.b_index(i)];
                        }
                    }
                    if let Some(gb) = slot(grads, nodes, b) {
                        let av = &nodes[a].value;
                        for (i, gi) in g.iter().enumerate() {
                            gb[bcast.b_index(i)] += gi * av[i];
                        }
                    }
                }
            }
        }
        &Op::Scale { x, c } => {
            if let Some(gx) = slot(grads, nodes, x) {
                gx.iter_mut().zip(g).for_each(|(d, s)| *d += c * s);
            }
        }
        &Op::Act { x, kind } => {
            let y = &node.value;
            if let Some(gx) = slot(grads, nodes, x) {
                match kind {
                    Activation::Sigmoid => {
                        for ((d, gi), yi) in gx.iter_mut().zip(g).zip(y) {
                            *d += gi * yi * (1.0 - yi);
                        }
                    }
                    Activation::Tanh => {
                        for ((d, gi), yi) in gx.iter_mut().zip(g).zip(y) {
                            *d += gi * (1.0 - yi * yi);
                        }
                    }
                    Activation::Relu => {
                        for ((d, gi), yi) in gx.iter_mut().zip(g).zip(y) {
                            if *yi > 0.0 {
                                *d += gi;
                            }
                        }
                    }
                }
            }
        }
        &Op::Softmax { x, outer, len, inner } => {
            let y = &node.value;
            if let Some(gx) = slot(grads, nodes, x) {
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |l: usize| (o * len + l) * inner + i;
                        let dot: f64 = (0..len).map(|l| g[at(l)] * y[at(l)]).sum();
                        for l in 0..len {
                            gx[at(l)] += y[at(l)] * (g[at(l)] - dot);
                        }
                    }
                }
            }
        }
        Op::LayerNorm { x, gain, bias, cols, xhat, inv_std } => {
            let (x, gain, bias, cols) = (*x, *gain, *bias, *cols);
            let rows = inv_std.len();
            let gv = &nodes[gain].value;
            if let Some(gx) = slot(grads, nodes, x) {
                let nf = cols as f64;
                let mut dxhat = vec![0.0; cols];
                for r in 0..rows {
                    let gr = &g[r * cols..(r + 1) * cols];
                    let hr = &xhat[r * cols..(r + 1) * cols];
                    for c in 0..cols {
                        dxhat[c] = gr[c] * gv[c];
                    }
                    let sum_d: f64 = dxhat.iter().sum();
                    let sum_dh: f64 = dxhat.iter().zip(hr).map(|(d, h)| d * h).sum();
                    let scale = inv_std[r] / nf;
                    for c in 0..cols {
                        gx[r * cols + c] += scale * (nf * dxhat[c] - sum_d - hr[c] * sum_dh);
                    }
                }
            }
            if let Some(gg) = slot(grads, nodes, gain) {
                for r in 0..rows {
                    for c in 0..cols {
                        gg[c] += g[r * cols + c] * xhat[r * cols + c];
                    }
                }
            }
            if let Some(gb) = slot(grads, nodes, bias) {
                for r in 0..rows {
                    for c in 0..cols {
                        gb[c] += g[r * cols + c];
                    }
                }
            }
        }
        &Op::Reduce { x, kind, outer, len, inner } => {
            if let Some(gx) = slot(grads, nodes, x) {
                let f = if kind == Reduction::Mean { 1.0 / len as f64 } else { 1.0 };
                for o in 0..outer {
                    let go = &g[o * inner..(o + 1) * inner];
                    for l in 0..len {
                        let dst = &mut gx[(o * len + l) * inner..(o * len + l + 1) * inner];
                        for (d, s) in dst.iter_mut().zip(go) {
                            *d += f * s;
                        }
                    }
                }
            }
        }
        &Op::Reshape { x } => {
            if let Some(gx) = slot(grads, nodes, x) {
                gx.iter_mut().zip(g).for_each(|(d, s)| *d += s);
            }
        }
        Op::Concat { parts, outer, inner } => {
            let total: usize = parts.iter().map(|p| p.1).sum();
            let mut offset = 0;
            for &(p, l) in parts {
                if let Some(gp) = slot(grads, nodes, p) {
                    for o in 0..*outer {
                        let src = &g[(o * total + offset) * inner..(o * total + offset + l) * inner];
                        let dst = &mut gp[o * l * inner..(o + 1) * l * inner];
                        dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
                    }
                }
                offset += l;
            }
        }
        &Op::Slice { x, outer, len, inner, start, end } => {
            if let Some(gx) = slot(grads, nodes, x) {
                let w = end - start;
                for o in 0..outer {
                    let src = &g[o * w * inner..(o + 1) * w * inner];
                    let dst = &mut gx[(o * len + start) * inner..(o * len + end) * inner];
                    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
                }
            }
        }
    }
}

/// Gradients produced by one backward sweep, keyed by leaf [`Var`].
pub struct Gradients {
    tape: u32,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        assert_eq!(v.tape, self.tape, "Var from a different tape");
        self.grads.get(v.idx as usize).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of `v` into `t`'s gradient buffer; leaves with no
    /// recorded gradient contribute zero.
    pub fn accumulate_into(&self, v: Var, t: &mut Tensor) -> Result<()> {
        match self.get(v) {
            Some(g) => t.accumulate_grad(g),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(dims: &[usize], data: &[f64]) -> Tensor {
        Tensor::from_vec(dims, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_dot() {
        let tape = Tape::new();
        let i2 = tape.constant(&t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let m = tape.constant(&t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let p = tape.matmul(i2, m).unwrap();
        assert_eq!(tape.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);

        let r = tape.constant(&t(&[1, 2], &[1.0, 2.0]));
        let c = tape.constant(&t(&[2, 1], &[3.0, 4.0]));
        assert_eq!(tape.value(tape.matmul(r, c).unwrap()).data(), &[11.0]);

        let bad = tape.constant(&t(&[3, 1], &[1.0, 2.0, 3.0]));
        assert!(matches!(tape.matmul(m, bad), Err(TensorError::Shape(_))));
    }

    #[test]
    fn ewise_basics_and_broadcast_errors() {
        let tape = Tape::new();
        let a = tape.constant(&t(&[2], &[1.0, 2.0]));
        let b = tape.constant(&t(&[2], &[3.0, 4.0]));
        assert_eq!(tape.value(tape.add(a, b).unwrap()).data(), &[4.0, 6.0]);
        let ones = tape.constant(&t(&[2], &[1.0, 1.0]));
        assert_eq!(tape.value(tape.mul(a, ones).unwrap()).data(), &[1.0, 2.0]);

        let m = tape.constant(&t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let col = tape.constant(&t(&[2, 1], &[10.0, 20.0]));
        assert_eq!(tape.value(tape.add(m, col).unwrap()).data(), &[11.0, 12.0, 13.0, 24.0, 25.0, 26.0]);
        let bad = tape.constant(&t(&[2], &[1.0, 1.0]));
        assert!(matches!(tape.add(m, bad), Err(TensorError::Shape(_))));
        // Only the right operand stretches.
        assert!(tape.add(col, m).is_err());
    }

    #[test]
    fn activations_at_reference_points() {
        let tape = Tape::new();
        let z = tape.constant(&t(&[1], &[0.0]));
        assert_eq!(tape.value(tape.sigmoid(z)).data(), &[0.5]);
        assert_eq!(tape.value(tape.tanh(z)).data(), &[0.0]);
        let neg = tape.constant(&t(&[1], &[-3.0]));
        assert_eq!(tape.value(tape.relu(neg)).data(), &[0.0]);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let tape = Tape::new();
        let x = tape.param(&t(&[3], &[-1.0, 0.0, 2.0]));
        let loss = tape.sum(tape.relu(x));
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn softmax_reference_values() {
        let tape = Tape::new();
        let two = tape.constant(&t(&[2], &[0.0, 0.0]));
        assert_eq!(tape.value(tape.softmax(two, 0).unwrap()).data(), &[0.5, 0.5]);
        let three = tape.constant(&t(&[3], &[1.0, 1.0, 1.0]));
        for v in tape.value(tape.softmax(three, 0).unwrap()).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn layer_norm_reference_values() {
        let tape = Tape::new();
        let g = tape.constant(&t(&[3], &[1.0; 3]));
        let b = tape.constant(&t(&[3], &[0.0; 3]));
        let x = tape.constant(&t(&[3], &[5.0, 5.0, 5.0]));
        assert_eq!(tape.value(tape.layer_norm(x, g, b, 1e-5).unwrap()).data(), &[0.0, 0.0, 0.0]);

        let g2 = tape.constant(&t(&[2], &[1.0; 2]));
        let b2 = tape.constant(&t(&[2], &[0.0; 2]));
        let x2 = tape.constant(&t(&[2], &[1.0, -1.0]));
        let y = tape.value(tape.layer_norm(x2, g2, b2, 1e-5).unwrap());
        assert!((y.data()[0] - 1.0).abs() < 1e-5 && (y.data()[1] + 1.0).abs() < 1e-5);
    }

    #[test]
    fn reductions() {
        let tape = Tape::new();
        let x = tape.constant(&t(&[3], &[1.0, 2.0, 3.0]));
        assert_eq!(tape.value(tape.sum(x)).data(), &[6.0]);
        let c = tape.constant(&t(&[2, 2], &[4.5; 4]));
        assert_eq!(tape.value(tape.mean(c)).data(), &[4.5]);
        let m = tape.constant(&t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        assert_eq!(tape.value(tape.reduce(Reduction::Sum, m, Some(0)).unwrap()).data(), &[5.0, 7.0, 9.0]);
        assert_eq!(tape.value(tape.reduce(Reduction::Mean, m, Some(1)).unwrap()).data(), &[2.0, 5.0]);
        assert!(tape.reduce(Reduction::Sum, m, Some(2)).is_err());
    }

    #[test]
    fn data_movement_round_trips() {
        let tape = Tape::new();
        let x = tape.constant(&t(&[4], &[1.0, 2.0, 3.0, 4.0]));
        let r = tape.reshape(x, &[2, 2]).unwrap();
        let back = tape.reshape(r, &[4]).unwrap();
        assert_eq!(tape.value(back).data(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(tape.reshape(x, &[3]).is_err());

        let a = tape.constant(&t(&[2], &[1.0, 2.0]));
        let b = tape.constant(&t(&[1], &[3.0]));
        let c = tape.concat(&[a, b], 0).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0]);
        assert_eq!(tape.value(tape.slice(c, 0, 0..2).unwrap()).data(), &[1.0, 2.0]);
        assert!(tape.slice(c, 0, 2..4).is_err());
    }

    #[test]
    fn concat_then_sum_gradient_is_ones() {
        let tape = Tape::new();
        let a = tape.param(&t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = tape.param(&t(&[2, 1], &[5.0, 6.0]));
        let c = tape.concat(&[a, b], 1).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let loss = tape.sum(c);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(a).unwrap(), &[1.0; 4]);
        assert_eq!(g.get(b).unwrap(), &[1.0; 2]);
    }

    #[test]
    fn analytic_gradients() {
        let xs = t(&[3], &[0.5, -1.5, 2.0]);
        let tape = Tape::new();
        let x = tape.param(&xs);
        let loss = tape.sum(x);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap(), &[1.0; 3]);

        let tape = Tape::new();
        let x = tape.param(&xs);
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap(), &[1.0, -3.0, 4.0]);
    }

    #[test]
    fn non_scalar_loss_is_a_contract_error() {
        let tape = Tape::new();
        let x = tape.param(&t(&[2], &[1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(TensorError::Contract(_))));
    }

    #[test]
    fn grads_accumulate_across_backward_calls_until_zeroed() {
        let mut w = t(&[2], &[1.0, 2.0]).with_grad();
        for _ in 0..2 {
            let tape = Tape::new();
            let x = tape.leaf(&w);
            let loss = tape.sum(tape.mul(x, x).unwrap());
            tape.backward(loss).unwrap().accumulate_into(x, &mut w).unwrap();
        }
        assert_eq!(w.grad().unwrap(), &[4.0, 8.0]);
        w.zero_grad();
        assert_eq!(w.grad().unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let tape = Tape::new();
        let x = tape.param(&t(&[2], &[1.0, 2.0]));
        let c = tape.constant(&t(&[2], &[3.0, 4.0]));
        let loss = tape.sum(tape.mul(x, c).unwrap());
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap(), &[3.0, 4.0]);
        assert!(g.get(c).is_none());
    }

    #[test]
    fn dump_lists_nodes_in_append_order() {
        let tape = Tape::new();
        let x = tape.param(&t(&[2], &[1.0, 2.0]));
        let y = tape.tanh(x);
        let _ = tape.sum(y);
        let dump = tape.dump();
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines, vec!["0 leaf [] [2]", "1 tanh [0] [2]", "2 sum [1] [1]"]);
    }

    #[test]
    fn fault_guard_flips_one_rule_and_restores() {
        let run = || {
            let tape = Tape::new();
            let x = tape.param(&t(&[1], &[0.3]));
            let loss = tape.sum(tape.tanh(x));
            tape.backward(loss).unwrap().get(x).unwrap()[0]
        };
        let clean = run();
        {
            let _guard = FaultGuard::inject(OpKind::Tanh);
            assert_eq!(run(), -clean);
        }
        assert_eq!(run(), clean);
    }

    #[test]
    fn op_names_round_trip() {
        for k in OpKind::ALL {
            assert_eq!(OpKind::from_name(k.name()), Some(k));
        }
    }
}
