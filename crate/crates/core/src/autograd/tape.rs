//! The recording tape: eager forward evaluation plus reverse-mode backward.

use std::sync::Arc;

use crate::autograd::kernels;
use crate::autograd::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// Broadcast-add a `[C]` vector to every row of `[R x C]`.
    AddRowVec(usize, usize),
    Dense { x: usize, w: usize, b: Option<usize> },
    Conv1d { x: usize, w: usize, dilation: usize },
    Relu(usize),
    Sigmoid(usize),
    Exp(usize),
    Ln(usize),
    Abs(usize),
    Affine { x: usize, mul: f64, add: f64 },
    Softmax1d(usize),
    /// Per-row inner product of two `[T x D]` tensors -> `[T]`.
    RowDot(usize, usize),
    /// Weighted sum of rows: `[T x D]` with weights `[T]` -> `[D]`.
    WeightedRowSum { e: usize, alpha: usize },
    MaxRows(usize),
    MeanRows(usize),
    TakeRow { x: usize, row: usize },
    Reshape { x: usize },
    /// Select one row of a `[N x C]` table (one-hot matvec); `None` row
    /// stands for the all-zero one-hot and yields zeros.
    EmbedRow { table: usize, row: Option<usize> },
    Cosine(usize, usize),
    Dot(usize, usize),
    MeanAll(usize),
    SumMany(Vec<usize>),
    BceWithLogits { logit: usize, target: f64 },
}

struct Node {
    op: Op,
    shape: Vec<usize>,
    data: Arc<Vec<f32>>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Records operations eagerly; values live on the tape until it is dropped.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, data: Vec<f32>, requires_grad: bool) -> Var {
        self.nodes.push(Node { op, shape, data: Arc::new(data), requires_grad, grad: None });
        Var(self.nodes.len() - 1)
    }

    /// Insert a tensor as a leaf, sharing its buffer.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            shape: t.shape().to_vec(),
            data: t.data_arc(),
            requires_grad: t.requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf_data(&mut self, shape: Vec<usize>, data: Vec<f32>, requires_grad: bool) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(Error::Shape(format!("leaf data length {} != shape {:?}", data.len(), shape)));
        }
        Ok(self.push(Op::Leaf, shape, data, requires_grad))
    }

    pub fn value(&self, v: Var) -> &[f32] {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn numel(&self, v: Var) -> usize {
        self.nodes[v.0].data.len()
    }

    /// Accumulated gradient for a node. Gradients in flight are float64
    /// accumulators; exported parameter gradients are cast to f32.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn clear_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn rg2(&self, a: Var, b: Var) -> bool {
        self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad
    }

    // ── elementwise ──────────────────────────────────────────────────

    fn check_same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b, "add")?;
        let data = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        Ok(self.push(Op::Add(a.0, b.0), self.shape(a).to_vec(), data, self.rg2(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b, "sub")?;
        let data = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        Ok(self.push(Op::Sub(a.0, b.0), self.shape(a).to_vec(), data, self.rg2(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b, "mul")?;
        let data = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        Ok(self.push(Op::Mul(a.0, b.0), self.shape(a).to_vec(), data, self.rg2(a, b)))
    }

    pub fn add_row_vec(&mut self, x: Var, v: Var) -> Result<Var> {
        let (rows, cols) = self.as_2d(x)?;
        if self.shape(v) != [cols] {
            return Err(Error::Shape(format!(
                "add_row_vec: vector {:?} does not match row width {cols}",
                self.shape(v)
            )));
        }
        let xd = self.value(x);
        let vd = self.value(v);
        let mut data = vec![0.0f32; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                data[r * cols + c] = xd[r * cols + c] + vd[c];
            }
        }
        Ok(self.push(Op::AddRowVec(x.0, v.0), self.shape(x).to_vec(), data, self.rg2(x, v)))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let data = kernels::relu(self.value(x));
        Ok(self.push(Op::Relu(x.0), self.shape(x).to_vec(), data, self.requires_grad(x)))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let data = kernels::sigmoid(self.value(x));
        Ok(self.push(Op::Sigmoid(x.0), self.shape(x).to_vec(), data, self.requires_grad(x)))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let data = kernels::exp(self.value(x));
        Ok(self.push(Op::Exp(x.0), self.shape(x).to_vec(), data, self.requires_grad(x)))
    }

    pub fn ln(&mut self, x: Var) -> Result<Var> {
        let data = kernels::ln(self.value(x));
        Ok(self.push(Op::Ln(x.0), self.shape(x).to_vec(), data, self.requires_grad(x)))
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        let data = kernels::abs(self.value(x));
        Ok(self.push(Op::Abs(x.0), self.shape(x).to_vec(), data, self.requires_grad(x)))
    }

    /// y = mul * x + add, elementwise with scalar coefficients.
    pub fn affine(&mut self, x: Var, mul: f64, add: f64) -> Result<Var> {
        let data = kernels::affine(self.value(x), mul, add);
        Ok(self.push(Op::Affine { x: x.0, mul, add }, self.shape(x).to_vec(), data, self.requires_grad(x)))
    }

    // ── layers ───────────────────────────────────────────────────────

    /// Interpret a var as `[rows, cols]`; 1-D tensors count as one row.
    fn as_2d(&self, v: Var) -> Result<(usize, usize)> {
        match self.shape(v) {
            [c] => Ok((1, *c)),
            [r, c] => Ok((*r, *c)),
            s => Err(Error::Shape(format!("expected 1-D or 2-D tensor, got {s:?}"))),
        }
    }

    /// x @ w + b where x is `[R x Ci]` (or `[Ci]`), w is `[Ci x Co]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (rows, ci) = self.as_2d(x)?;
        let wshape = self.shape(w).to_vec();
        let (wci, co) = match wshape[..] {
            [a, b] => (a, b),
            _ => return Err(Error::Shape(format!("dense weight must be 2-D, got {wshape:?}"))),
        };
        if wci != ci {
            return Err(Error::Shape(format!("dense: input width {ci} != weight rows {wci}")));
        }
        if let Some(bv) = b {
            if self.shape(bv) != [co] {
                return Err(Error::Shape(format!("dense bias {:?} != [{co}]", self.shape(bv))));
            }
        }
        let bdata = b.map(|bv| self.nodes[bv.0].data.clone());
        let data = kernels::dense(self.value(x), rows, ci, self.value(w), co, bdata.as_ref().map(|a| a.as_slice()));
        let out_shape = if self.shape(x).len() == 1 { vec![co] } else { vec![rows, co] };
        let rg = self.requires_grad(x)
            || self.requires_grad(w)
            || b.map(|bv| self.requires_grad(bv)).unwrap_or(false);
        Ok(self.push(Op::Dense { x: x.0, w: w.0, b: b.map(|v| v.0) }, out_shape, data, rg))
    }

    /// Dilated causal convolution: x `[T x Ci]`, w `[k x Ci x Co]`, zero
    /// left-padding so the output keeps length T and y_t never reads t' > t.
    pub fn conv1d_causal(&mut self, x: Var, w: Var, dilation: usize) -> Result<Var> {
        if dilation == 0 {
            return Err(Error::Config("conv1d_causal: dilation must be >= 1".into()));
        }
        let (t_len, ci) = match self.shape(x) {
            [t, c] => (*t, *c),
            s => return Err(Error::Shape(format!("conv input must be [T x C], got {s:?}"))),
        };
        let (k, wci, co) = match self.shape(w) {
            [k, a, b] => (*k, *a, *b),
            s => return Err(Error::Shape(format!("conv weight must be [k x Ci x Co], got {s:?}"))),
        };
        if wci != ci {
            return Err(Error::Shape(format!(
                "conv1d_causal: input has {ci} channels but weight expects {wci}"
            )));
        }
        let data = kernels::conv1d_causal(self.value(x), t_len, ci, self.value(w), k, co, dilation);
        Ok(self.push(
            Op::Conv1d { x: x.0, w: w.0, dilation },
            vec![t_len, co],
            data,
            self.rg2(x, w),
        ))
    }

    pub fn softmax_1d(&mut self, x: Var) -> Result<Var> {
        if self.shape(x).len() != 1 {
            return Err(Error::Shape(format!("softmax_1d expects 1-D, got {:?}", self.shape(x))));
        }
        let data = kernels::softmax_1d(self.value(x));
        Ok(self.push(Op::Softmax1d(x.0), self.shape(x).to_vec(), data, self.requires_grad(x)))
    }

    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b, "row_dot")?;
        let (rows, cols) = self.as_2d(a)?;
        let data = kernels::row_dot(self.value(a), self.value(b), rows, cols);
        Ok(self.push(Op::RowDot(a.0, b.0), vec![rows], data, self.rg2(a, b)))
    }

    pub fn weighted_row_sum(&mut self, e: Var, alpha: Var) -> Result<Var> {
        let (rows, cols) = self.as_2d(e)?;
        if self.shape(alpha) != [rows] {
            return Err(Error::Shape(format!(
                "weighted_row_sum: weights {:?} != [{rows}]",
                self.shape(alpha)
            )));
        }
        let data = kernels::weighted_row_sum(self.value(e), self.value(alpha), rows, cols);
        Ok(self.push(Op::WeightedRowSum { e: e.0, alpha: alpha.0 }, vec![cols], data, self.rg2(e, alpha)))
    }

    pub fn max_rows(&mut self, e: Var) -> Result<Var> {
        let (rows, cols) = self.as_2d(e)?;
        let (data, _) = kernels::max_rows(self.value(e), rows, cols);
        Ok(self.push(Op::MaxRows(e.0), vec![cols], data, self.requires_grad(e)))
    }

    pub fn mean_rows(&mut self, e: Var) -> Result<Var> {
        let (rows, cols) = self.as_2d(e)?;
        let data = kernels::mean_rows(self.value(e), rows, cols);
        Ok(self.push(Op::MeanRows(e.0), vec![cols], data, self.requires_grad(e)))
    }

    pub fn take_row(&mut self, x: Var, row: usize) -> Result<Var> {
        let (rows, cols) = self.as_2d(x)?;
        if row >= rows {
            return Err(Error::Shape(format!("take_row: row {row} out of {rows}")));
        }
        let data = self.value(x)[row * cols..(row + 1) * cols].to_vec();
        Ok(self.push(Op::TakeRow { x: x.0, row }, vec![cols], data, self.requires_grad(x)))
    }

    /// Reinterpret the buffer with a new shape (zero-copy).
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.numel(x) {
            return Err(Error::Shape(format!(
                "reshape: {:?} incompatible with {:?}",
                self.shape(x),
                shape
            )));
        }
        let node = Node {
            op: Op::Reshape { x: x.0 },
            shape,
            data: Arc::clone(&self.nodes[x.0].data),
            requires_grad: self.requires_grad(x),
            grad: None,
        };
        self.nodes.push(node);
        Ok(Var(self.nodes.len() - 1))
    }

    /// table^T . onehot(row): selects a row of `[N x C]`, or zeros for `None`
    /// (the all-zero one-hot used for unseen identities).
    pub fn embed_row(&mut self, table: Var, row: Option<usize>) -> Result<Var> {
        let (n, c) = self.as_2d(table)?;
        let data = match row {
            Some(r) => {
                if r >= n {
                    return Err(Error::Shape(format!("embed_row: row {r} out of {n}")));
                }
                self.value(table)[r * c..(r + 1) * c].to_vec()
            }
            None => vec![0.0; c],
        };
        Ok(self.push(Op::EmbedRow { table: table.0, row }, vec![c], data, self.requires_grad(table)))
    }

    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b, "cosine")?;
        if self.shape(a).len() != 1 {
            return Err(Error::Shape("cosine expects 1-D vectors".into()));
        }
        let d = kernels::cosine(self.value(a), self.value(b)) as f32;
        Ok(self.push(Op::Cosine(a.0, b.0), vec![1], vec![d], self.rg2(a, b)))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b, "dot")?;
        let d = kernels::dot(self.value(a), self.value(b)) as f32;
        Ok(self.push(Op::Dot(a.0, b.0), vec![1], vec![d], self.rg2(a, b)))
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let m = kernels::mean_all(self.value(x)) as f32;
        Ok(self.push(Op::MeanAll(x.0), vec![1], vec![m], self.requires_grad(x)))
    }

    /// Sum of scalar vars with a float64 accumulator.
    pub fn sum_many(&mut self, vs: &[Var]) -> Result<Var> {
        if vs.is_empty() {
            return Err(Error::Contract("sum_many: empty input".into()));
        }
        let mut acc = 0.0f64;
        let mut rg = false;
        for &v in vs {
            if self.numel(v) != 1 {
                return Err(Error::Shape("sum_many expects scalar inputs".into()));
            }
            acc += self.value(v)[0] as f64;
            rg |= self.requires_grad(v);
        }
        let ids: Vec<usize> = vs.iter().map(|v| v.0).collect();
        Ok(self.push(Op::SumMany(ids), vec![1], vec![acc as f32], rg))
    }

    /// Numerically stable binary cross-entropy on a scalar logit.
    pub fn bce_with_logits(&mut self, logit: Var, target: f64) -> Result<Var> {
        if self.numel(logit) != 1 {
            return Err(Error::Shape("bce_with_logits expects a scalar logit".into()));
        }
        let v = kernels::bce_with_logits(self.value(logit)[0] as f64, target) as f32;
        Ok(self.push(
            Op::BceWithLogits { logit: logit.0, target },
            vec![1],
            vec![v],
            self.requires_grad(logit),
        ))
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Seed d(loss)/d(loss) = 1 and accumulate gradients into every
    /// reachable `requires_grad` node. Repeated calls accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.numel(loss) != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.backward_from(loss, &[1.0])
    }

    /// Seed an arbitrary output with an upstream gradient and propagate.
    /// Composes computations that span several tapes. Leaf gradients
    /// accumulate across calls; intermediate gradients are per-call scratch.
    pub fn backward_from(&mut self, out: Var, seed: &[f32]) -> Result<()> {
        if seed.len() != self.numel(out) {
            return Err(Error::Shape(format!(
                "backward seed length {} != output numel {}",
                seed.len(),
                self.numel(out)
            )));
        }
        if !self.nodes[out.0].requires_grad {
            return Err(Error::Contract(
                "backward: output does not depend on any requires_grad leaf".into(),
            ));
        }
        // reset intermediate gradients so a repeated call re-derives them
        // from the fresh seed instead of re-propagating stale ones
        for idx in 0..=out.0 {
            if !matches!(self.nodes[idx].op, Op::Leaf) {
                self.nodes[idx].grad = None;
            }
        }
        {
            let g = self.grad_buf(out.0);
            for (gv, &sv) in g.iter_mut().zip(seed) {
                *gv += sv as f64;
            }
        }
        for idx in (0..=out.0).rev() {
            if self.nodes[idx].grad.is_none() || matches!(self.nodes[idx].op, Op::Leaf) {
                continue;
            }
            let g = self.nodes[idx].grad.take().expect("checked above");
            self.propagate_node(idx, &g);
            self.nodes[idx].grad = Some(g);
        }
        Ok(())
    }

    fn grad_buf(&mut self, idx: usize) -> &mut Vec<f64> {
        let n = self.nodes[idx].data.len();
        self.nodes[idx].grad.get_or_insert_with(|| vec![0.0; n])
    }

    fn data_of(&self, idx: usize) -> Arc<Vec<f32>> {
        Arc::clone(&self.nodes[idx].data)
    }

    fn wants_grad(&self, idx: usize) -> bool {
        self.nodes[idx].requires_grad
    }

    fn dims2(&self, idx: usize) -> (usize, usize) {
        match self.nodes[idx].shape[..] {
            [c] => (1, c),
            [r, c] => (r, c),
            _ => unreachable!("validated at record time"),
        }
    }

    fn propagate_node(&mut self, idx: usize, g: &[f64]) {
        let op = self.nodes[idx].op.clone();
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.wants_grad(a) {
                    let ga = self.grad_buf(a);
                    for (gv, &gg) in ga.iter_mut().zip(g) {
                        *gv += gg;
                    }
                }
                if self.wants_grad(b) {
                    let gb = self.grad_buf(b);
                    for (gv, &gg) in gb.iter_mut().zip(g) {
                        *gv += gg;
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.wants_grad(a) {
                    let ga = self.grad_buf(a);
                    for (gv, &gg) in ga.iter_mut().zip(g) {
                        *gv += gg;
                    }
                }
                if self.wants_grad(b) {
                    let gb = self.grad_buf(b);
                    for (gv, &gg) in gb.iter_mut().zip(g) {
                        *gv -= gg;
                    }
                }
            }
            Op::Mul(a, b) => {
                if self.wants_grad(a) {
                    let bd = self.data_of(b);
                    let ga = self.grad_buf(a);
                    for i in 0..g.len() {
                        ga[i] += g[i] * bd[i] as f64;
                    }
                }
                if self.wants_grad(b) {
                    let ad = self.data_of(a);
                    let gb = self.grad_buf(b);
                    for i in 0..g.len() {
                        gb[i] += g[i] * ad[i] as f64;
                    }
                }
            }
            Op::AddRowVec(x, v) => {
                let (rows, cols) = self.dims2(x);
                if self.wants_grad(x) {
                    let gx = self.grad_buf(x);
                    for (gv, &gg) in gx.iter_mut().zip(g) {
                        *gv += gg;
                    }
                }
                if self.wants_grad(v) {
                    let gv = self.grad_buf(v);
                    for r in 0..rows {
                        for c in 0..cols {
                            gv[c] += g[r * cols + c];
                        }
                    }
                }
            }
            Op::Dense { x, w, b } => {
                let (rows, ci) = self.dims2(x);
                let co = self.nodes[w].shape[1];
                if self.wants_grad(x) {
                    let wd = self.data_of(w);
                    let gx = self.grad_buf(x);
                    for r in 0..rows {
                        let grow = &g[r * co..(r + 1) * co];
                        for i in 0..ci {
                            let wrow = &wd[i * co..(i + 1) * co];
                            let mut acc = 0.0f64;
                            for j in 0..co {
                                acc += grow[j] * wrow[j] as f64;
                            }
                            gx[r * ci + i] += acc;
                        }
                    }
                }
                if self.wants_grad(w) {
                    let xd = self.data_of(x);
                    let gw = self.grad_buf(w);
                    for r in 0..rows {
                        let grow = &g[r * co..(r + 1) * co];
                        for i in 0..ci {
                            let a = xd[r * ci + i] as f64;
                            let gwrow = &mut gw[i * co..(i + 1) * co];
                            for j in 0..co {
                                gwrow[j] += a * grow[j];
                            }
                        }
                    }
                }
                if let Some(b) = b {
                    if self.wants_grad(b) {
                        let gb = self.grad_buf(b);
                        for r in 0..rows {
                            let grow = &g[r * co..(r + 1) * co];
                            for j in 0..co {
                                gb[j] += grow[j];
                            }
                        }
                    }
                }
            }
            Op::Conv1d { x, w, dilation } => {
                let (t_len, ci) = self.dims2(x);
                let k = self.nodes[w].shape[0];
                let co = self.nodes[w].shape[2];
                if self.wants_grad(x) {
                    let wd = self.data_of(w);
                    let gx = self.grad_buf(x);
                    for t in 0..t_len {
                        let grow = &g[t * co..(t + 1) * co];
                        for tap in 0..k {
                            let offset = (k - 1 - tap) * dilation;
                            if offset > t {
                                continue;
                            }
                            let src = t - offset;
                            let wslab = &wd[tap * ci * co..(tap + 1) * ci * co];
                            let gxrow = &mut gx[src * ci..(src + 1) * ci];
                            for i in 0..ci {
                                let wrow = &wslab[i * co..(i + 1) * co];
                                let mut acc = 0.0f64;
                                for j in 0..co {
                                    acc += grow[j] * wrow[j] as f64;
                                }
                                gxrow[i] += acc;
                            }
                        }
                    }
                }
                if self.wants_grad(w) {
                    let xd = self.data_of(x);
                    let gw = self.grad_buf(w);
                    for t in 0..t_len {
                        let grow = &g[t * co..(t + 1) * co];
                        for tap in 0..k {
                            let offset = (k - 1 - tap) * dilation;
                            if offset > t {
                                continue;
                            }
                            let src = t - offset;
                            let xrow = &xd[src * ci..(src + 1) * ci];
                            let gwslab = &mut gw[tap * ci * co..(tap + 1) * ci * co];
                            for i in 0..ci {
                                let a = xrow[i] as f64;
                                let gwrow = &mut gwslab[i * co..(i + 1) * co];
                                for j in 0..co {
                                    gwrow[j] += a * grow[j];
                                }
                            }
                        }
                    }
                }
            }
            Op::Relu(x) => {
                if self.wants_grad(x) {
                    // subgradient at 0 is 0
                    let xd = self.data_of(x);
                    let gx = self.grad_buf(x);
                    for i in 0..g.len() {
                        if xd[i] > 0.0 {
                            gx[i] += g[i];
                        }
                    }
                }
            }
            Op::Sigmoid(x) => {
                if self.wants_grad(x) {
                    let yd = self.data_of(idx);
                    let gx = self.grad_buf(x);
                    for i in 0..g.len() {
                        let y = yd[i] as f64;
                        gx[i] += g[i] * y * (1.0 - y);
                    }
                }
            }
            Op::Exp(x) => {
                if self.wants_grad(x) {
                    let yd = self.data_of(idx);
                    let gx = self.grad_buf(x);
                    for i in 0..g.len() {
                        gx[i] += g[i] * yd[i] as f64;
                    }
                }
            }
            Op::Ln(x) => {
                if self.wants_grad(x) {
                    let xd = self.data_of(x);
                    let gx = self.grad_buf(x);
                    for i in 0..g.len() {
                        gx[i] += g[i] / xd[i] as f64;
                    }
                }
            }
            Op::Abs(x) => {
                if self.wants_grad(x) {
                    let xd = self.data_of(x);
                    let gx = self.grad_buf(x);
                    for i in 0..g.len() {
                        if xd[i] > 0.0 {
                            gx[i] += g[i];
                        } else if xd[i] < 0.0 {
                            gx[i] -= g[i];
                        }
                    }
                }
            }
            Op::Affine { x, mul, .. } => {
                if self.wants_grad(x) {
                    let gx = self.grad_buf(x);
                    for i in 0..g.len() {
                        gx[i] += g[i] * mul;
                    }
                }
            }
            Op::Softmax1d(x) => {
                if self.wants_grad(x) {
                    let yd = self.data_of(idx);
                    let mut inner = 0.0f64;
                    for i in 0..g.len() {
                        inner += g[i] * yd[i] as f64;
                    }
                    let gx = self.grad_buf(x);
                    for i in 0..g.len() {
                        gx[i] += yd[i] as f64 * (g[i] - inner);
                    }
                }
            }
            Op::RowDot(a, b) => {
                let (rows, cols) = self.dims2(a);
                if self.wants_grad(a) {
                    let bd = self.data_of(b);
                    let ga = self.grad_buf(a);
                    for t in 0..rows {
                        let gt = g[t];
                        for d in 0..cols {
                            ga[t * cols + d] += gt * bd[t * cols + d] as f64;
                        }
                    }
                }
                if self.wants_grad(b) {
                    let ad = self.data_of(a);
                    let gb = self.grad_buf(b);
                    for t in 0..rows {
                        let gt = g[t];
                        for d in 0..cols {
                            gb[t * cols + d] += gt * ad[t * cols + d] as f64;
                        }
                    }
                }
            }
            Op::WeightedRowSum { e, alpha } => {
                let (rows, cols) = self.dims2(e);
                if self.wants_grad(e) {
                    let al = self.data_of(alpha);
                    let ge = self.grad_buf(e);
                    for t in 0..rows {
                        let at = al[t] as f64;
                        for d in 0..cols {
                            ge[t * cols + d] += at * g[d];
                        }
                    }
                }
                if self.wants_grad(alpha) {
                    let ed = self.data_of(e);
                    let galpha = self.grad_buf(alpha);
                    for t in 0..rows {
                        let mut acc = 0.0f64;
                        for d in 0..cols {
                            acc += g[d] * ed[t * cols + d] as f64;
                        }
                        galpha[t] += acc;
                    }
                }
            }
            Op::MaxRows(e) => {
                if self.wants_grad(e) {
                    let (rows, cols) = self.dims2(e);
                    let ed = self.data_of(e);
                    let (_, arg) = kernels::max_rows(ed.as_slice(), rows, cols);
                    let ge = self.grad_buf(e);
                    for d in 0..cols {
                        ge[arg[d] * cols + d] += g[d];
                    }
                }
            }
            Op::MeanRows(e) => {
                if self.wants_grad(e) {
                    let (rows, cols) = self.dims2(e);
                    let inv = 1.0 / rows as f64;
                    let ge = self.grad_buf(e);
                    for t in 0..rows {
                        for d in 0..cols {
                            ge[t * cols + d] += g[d] * inv;
                        }
                    }
                }
            }
            Op::TakeRow { x, row } => {
                if self.wants_grad(x) {
                    let cols = g.len();
                    let gx = self.grad_buf(x);
                    for d in 0..cols {
                        gx[row * cols + d] += g[d];
                    }
                }
            }
            Op::Reshape { x } => {
                if self.wants_grad(x) {
                    let gx = self.grad_buf(x);
                    for (gv, &gg) in gx.iter_mut().zip(g) {
                        *gv += gg;
                    }
                }
            }
            Op::EmbedRow { table, row } => {
                if let Some(r) = row {
                    if self.wants_grad(table) {
                        let cols = g.len();
                        let gt = self.grad_buf(table);
                        for d in 0..cols {
                            gt[r * cols + d] += g[d];
                        }
                    }
                }
            }
            Op::Cosine(a, b) => {
                let ad = self.data_of(a);
                let bd = self.data_of(b);
                let na = kernels::norm2(ad.as_slice());
                let nb = kernels::norm2(bd.as_slice());
                if na < kernels::COSINE_NORM_EPS || nb < kernels::COSINE_NORM_EPS {
                    return; // defined as constant 0: zero gradient
                }
                let d = kernels::dot(ad.as_slice(), bd.as_slice()) / (na * nb);
                let gs = g[0];
                if self.wants_grad(a) {
                    let ga = self.grad_buf(a);
                    for i in 0..ga.len() {
                        let da = bd[i] as f64 / (na * nb) - d * ad[i] as f64 / (na * na);
                        ga[i] += gs * da;
                    }
                }
                if self.wants_grad(b) {
                    let gb = self.grad_buf(b);
                    for i in 0..gb.len() {
                        let db = ad[i] as f64 / (na * nb) - d * bd[i] as f64 / (nb * nb);
                        gb[i] += gs * db;
                    }
                }
            }
            Op::Dot(a, b) => {
                let gs = g[0];
                if self.wants_grad(a) {
                    let bd = self.data_of(b);
                    let ga = self.grad_buf(a);
                    for i in 0..ga.len() {
                        ga[i] += gs * bd[i] as f64;
                    }
                }
                if self.wants_grad(b) {
                    let ad = self.data_of(a);
                    let gb = self.grad_buf(b);
                    for i in 0..gb.len() {
                        gb[i] += gs * ad[i] as f64;
                    }
                }
            }
            Op::MeanAll(x) => {
                if self.wants_grad(x) {
                    let n = self.nodes[x].data.len();
                    let gs = g[0] / n as f64;
                    let gx = self.grad_buf(x);
                    for gv in gx.iter_mut() {
                        *gv += gs;
                    }
                }
            }
            Op::SumMany(ids) => {
                let gs = g[0];
                for id in ids {
                    if self.wants_grad(id) {
                        self.grad_buf(id)[0] += gs;
                    }
                }
            }
            Op::BceWithLogits { logit, target } => {
                if self.wants_grad(logit) {
                    let x = self.nodes[logit].data[0] as f64;
                    let s = 1.0 / (1.0 + (-x).exp());
                    let gl = self.grad_buf(logit);
                    gl[0] += g[0] * (s - target);
                }
            }
        }
    }

    // ── float64 replay (finite-difference oracle support) ───────────

    /// Recompute the value of `out` in float64, optionally perturbing one
    /// element of one leaf. The graph structure is reused; all arithmetic
    /// runs in f64, which makes central differences accurate enough to check
    /// f32 analytic gradients at 1e-4.
    ///
    /// Branch decisions at non-smooth ops (relu masks, abs signs, max-row
    /// argmaxes) are frozen to what the recorded forward pass took, so the
    /// replay differentiates the same smooth branch the backward rules
    /// differentiate instead of jumping branches mid finite-difference.
    pub fn replay_f64(&self, out: Var, perturb: Option<(Var, usize, f64)>) -> f64 {
        let mut vals: Vec<Vec<f64>> = Vec::with_capacity(out.0 + 1);
        for idx in 0..=out.0 {
            let node = &self.nodes[idx];
            let v: Vec<f64> = match &node.op {
                Op::Leaf => {
                    let mut v: Vec<f64> = node.data.iter().map(|&x| x as f64).collect();
                    if let Some((lv, elem, delta)) = perturb {
                        if lv.0 == idx {
                            v[elem] += delta;
                        }
                    }
                    v
                }
                Op::Add(a, b) => vals[*a].iter().zip(&vals[*b]).map(|(x, y)| x + y).collect(),
                Op::Sub(a, b) => vals[*a].iter().zip(&vals[*b]).map(|(x, y)| x - y).collect(),
                Op::Mul(a, b) => vals[*a].iter().zip(&vals[*b]).map(|(x, y)| x * y).collect(),
                Op::AddRowVec(x, rv) => {
                    let (rows, cols) = self.dims2(*x);
                    let mut out = vec![0.0f64; rows * cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            out[r * cols + c] = vals[*x][r * cols + c] + vals[*rv][c];
                        }
                    }
                    out
                }
                Op::Dense { x, w, b } => {
                    let (rows, ci) = self.dims2(*x);
                    let co = self.nodes[*w].shape[1];
                    kernels::dense(
                        &vals[*x],
                        rows,
                        ci,
                        &vals[*w],
                        co,
                        b.map(|bi| vals[bi].as_slice()),
                    )
                }
                Op::Conv1d { x, w, dilation } => {
                    let (t_len, ci) = self.dims2(*x);
                    let k = self.nodes[*w].shape[0];
                    let co = self.nodes[*w].shape[2];
                    kernels::conv1d_causal(&vals[*x], t_len, ci, &vals[*w], k, co, *dilation)
                }
                Op::Relu(x) => {
                    let mask = &self.nodes[*x].data;
                    vals[*x]
                        .iter()
                        .zip(mask.iter())
                        .map(|(&v, &m)| if m > 0.0 { v } else { 0.0 })
                        .collect()
                }
                Op::Sigmoid(x) => kernels::sigmoid(&vals[*x]),
                Op::Exp(x) => kernels::exp(&vals[*x]),
                Op::Ln(x) => kernels::ln(&vals[*x]),
                Op::Abs(x) => {
                    let signs = &self.nodes[*x].data;
                    vals[*x]
                        .iter()
                        .zip(signs.iter())
                        .map(|(&v, &s)| {
                            if s > 0.0 {
                                v
                            } else if s < 0.0 {
                                -v
                            } else {
                                0.0
                            }
                        })
                        .collect()
                }
                Op::Affine { x, mul, add } => kernels::affine(&vals[*x], *mul, *add),
                Op::Softmax1d(x) => kernels::softmax_1d(&vals[*x]),
                Op::RowDot(a, b) => {
                    let (rows, cols) = self.dims2(*a);
                    kernels::row_dot(&vals[*a], &vals[*b], rows, cols)
                }
                Op::WeightedRowSum { e, alpha } => {
                    let (rows, cols) = self.dims2(*e);
                    kernels::weighted_row_sum(&vals[*e], &vals[*alpha], rows, cols)
                }
                Op::MaxRows(e) => {
                    let (rows, cols) = self.dims2(*e);
                    let (_, arg) = kernels::max_rows(self.nodes[*e].data.as_slice(), rows, cols);
                    (0..cols).map(|d| vals[*e][arg[d] * cols + d]).collect()
                }
                Op::MeanRows(e) => {
                    let (rows, cols) = self.dims2(*e);
                    kernels::mean_rows(&vals[*e], rows, cols)
                }
                Op::TakeRow { x, row } => {
                    let cols = node.data.len();
                    vals[*x][*row * cols..(*row + 1) * cols].to_vec()
                }
                Op::Reshape { x } => vals[*x].clone(),
                Op::EmbedRow { table, row } => {
                    let cols = node.data.len();
                    match row {
                        Some(r) => vals[*table][*r * cols..(*r + 1) * cols].to_vec(),
                        None => vec![0.0; cols],
                    }
                }
                Op::Cosine(a, b) => vec![kernels::cosine(&vals[*a], &vals[*b])],
                Op::Dot(a, b) => vec![kernels::dot(&vals[*a], &vals[*b])],
                Op::MeanAll(x) => vec![kernels::mean_all(&vals[*x])],
                Op::SumMany(ids) => {
                    let mut acc = 0.0f64;
                    for &id in ids {
                        acc += vals[id][0];
                    }
                    vec![acc]
                }
                Op::BceWithLogits { logit, target } => {
                    vec![kernels::bce_with_logits(vals[*logit][0], *target)]
                }
            };
            vals.push(v);
        }
        vals[out.0][0]
    }
}
