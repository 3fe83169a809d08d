use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use super::kernels;
use super::{ParamId, ParamStore, Tensor};
use crate::error::{contract, shape_err, Error, Result};

/// Epsilon inside layer normalization.
pub const LN_EPS: f64 = 1e-6;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, transpose_b: bool },
    Add { a: Var, b: Var, broadcast: bool },
    Mul { a: Var, b: Var, scalar_b: bool },
    Gelu { x: Var },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Softmax { x: Var, axis: usize },
    Embedding { table: Var, ids: Vec<usize> },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<f64> },
    Concat { parts: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Reshape { x: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
    param: Option<ParamId>,
}

/// Records primitive applications in execution order so that a single
/// reverse sweep computes every gradient.
///
/// The primitive set is `matmul, add, mul, gelu, layer_norm, softmax,
/// embedding, cross_entropy, concat, slice` plus the shape-only `reshape`.
/// Everything else (`sum`, `scale`, `mean`) is composed from these.
#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    grad_enabled: bool,
    dropout: Option<(f64, ChaCha8Rng)>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grad_enabled: true,
            dropout: None,
        }
    }

    /// A training tape on which [`Tape::dropout`] zeroes each element with
    /// probability `rate`, drawing masks from a generator seeded by `seed`.
    pub fn with_dropout(rate: f64, seed: u64) -> Self {
        let mut t = Self::new();
        if rate > 0.0 && rate < 1.0 {
            t.dropout = Some((rate, ChaCha8Rng::seed_from_u64(seed)));
        }
        t
    }

    /// A tape whose leaves never require gradients.
    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            grad_enabled: false,
            dropout: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Records a tensor as a leaf; it is differentiable iff it requires grad.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        let needs = self.grad_enabled && t.requires_grad();
        let mut value = t.clone();
        value.set_requires_grad(false);
        self.push(value, Op::Leaf, needs)
    }

    /// Records a non-differentiable value.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let mut t = t;
        t.set_requires_grad(false);
        self.push(t, Op::Leaf, false)
    }

    /// Records a parameter from `store`; gradients flow back to it through
    /// [`Gradients::accumulate_into`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.leaf(store.get(id));
        self.nodes[v.0].param = Some(id);
        v
    }

    fn rank2(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            s => Err(shape_err(op, format!("expected a matrix, got shape {s:?}"))),
        }
    }

    fn check_finite(&self, v: Var, op: &'static str) -> Result<()> {
        if self.value(v).is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric(op.to_string()))
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` without materializing the transpose.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var> {
        let (m, k) = self.rank2(a, "matmul")?;
        let (br, bc) = self.rank2(b, "matmul")?;
        let (kb, n) = if transpose_b { (bc, br) } else { (br, bc) };
        if k != kb {
            return Err(shape_err(
                "matmul",
                format!("inner dimensions differ: [{m}x{k}] x [{br}x{bc}]{}", if transpose_b { "^T" } else { "" }),
            ));
        }
        let mut out = vec![0.0; m * n];
        if transpose_b {
            kernels::matmul_bt_acc(self.data(a), self.data(b), m, k, n, &mut out);
        } else {
            kernels::matmul_acc(self.data(a), self.data(b), m, k, n, &mut out);
        }
        let needs = self.needs(a) || self.needs(b);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, Op::MatMul { a, b, transpose_b }, needs))
    }

    /// Elementwise sum. `b` may also be a bias vector (`[n]` or `[1×n]`)
    /// broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let broadcast = if sa == sb {
            false
        } else {
            let n = *sa.last().unwrap_or(&1);
            let is_row = (sb.len() == 1 && sb[0] == n) || (sb.len() == 2 && sb[0] == 1 && sb[1] == n);
            if !is_row || sa.len() < 2 {
                return Err(shape_err("add", format!("{sa:?} + {sb:?}")));
            }
            true
        };
        let av = self.data(a);
        let bv = self.data(b);
        let out: Vec<f64> = if broadcast {
            let n = bv.len();
            av.iter().enumerate().map(|(i, x)| x + bv[i % n]).collect()
        } else {
            av.iter().zip(bv).map(|(x, y)| x + y).collect()
        };
        let needs = self.needs(a) || self.needs(b);
        let t = Tensor::new(sa, out)?;
        Ok(self.push(t, Op::Add { a, b, broadcast }, needs))
    }

    /// Elementwise product; `b` may be a one-element tensor.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let scalar_b = self.shape(b) != sa.as_slice() && self.value(b).numel() == 1;
        if !scalar_b && self.shape(b) != sa.as_slice() {
            return Err(shape_err("mul", format!("{sa:?} * {:?}", self.shape(b))));
        }
        let av = self.data(a);
        let bv = self.data(b);
        let out: Vec<f64> = if scalar_b {
            av.iter().map(|x| x * bv[0]).collect()
        } else {
            av.iter().zip(bv).map(|(x, y)| x * y).collect()
        };
        let needs = self.needs(a) || self.needs(b);
        let t = Tensor::new(sa, out)?;
        Ok(self.push(t, Op::Mul { a, b, scalar_b }, needs))
    }

    /// Inverted dropout: a mask of `0` and `1/(1-rate)` multiplied in. The
    /// identity (and not recorded) unless the tape was built with a rate.
    pub fn dropout(&mut self, x: Var) -> Result<Var> {
        let shape = self.nodes[x.0].value.shape().to_vec();
        let n = self.nodes[x.0].value.numel();
        let Some((rate, rng)) = self.dropout.as_mut() else {
            return Ok(x);
        };
        let (rate, keep) = (*rate, 1.0 / (1.0 - *rate));
        let mask: Vec<f64> = (0..n).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect();
        let m = self.constant(Tensor::new(shape, mask)?);
        self.mul(x, m)
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let out: Vec<f64> = self.data(x).iter().map(|&v| kernels::gelu(v)).collect();
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::Gelu { x }, needs))
    }

    /// Normalizes every row of `x` over its last axis, then applies the
    /// per-feature `gamma` and `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        self.check_finite(x, "layer_norm")?;
        let n = self.value(x).cols();
        if self.value(gamma).numel() != n || self.value(beta).numel() != n {
            return Err(shape_err("layer_norm", format!("feature width {n} vs gamma/beta")));
        }
        let rows = self.value(x).rows();
        let xv = self.data(x);
        let g = self.data(gamma);
        let b = self.data(beta);
        let mut out = vec![0.0; xv.len()];
        let mut xhat = vec![0.0; xv.len()];
        let mut rstd = vec![0.0; rows];
        for r in 0..rows {
            let row = &xv[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd[r] = rs;
            for j in 0..n {
                let h = (row[j] - mean) * rs;
                xhat[r * n + j] = h;
                out[r * n + j] = h * g[j] + b[j];
            }
        }
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            needs,
        ))
    }

    /// Max-stabilized softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len().max(1) {
            return Err(shape_err("softmax", format!("axis {axis} for shape {shape:?}")));
        }
        if self.data(x).iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric("softmax input".into()));
        }
        let (outer, len, inner) = lanes(&shape, axis);
        let xv = self.data(x);
        let mut out = vec![0.0; xv.len()];
        for o in 0..outer {
            for i in 0..inner {
                kernels::softmax_lane(xv, &mut out, o * len * inner + i, len, inner);
            }
        }
        let needs = self.needs(x);
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::Softmax { x, axis }, needs))
    }

    /// Gathers rows of a `[V×h]` table.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, h) = self.rank2(table, "embedding")?;
        let tv = self.data(table);
        let mut out = Vec::with_capacity(ids.len() * h);
        for &id in ids {
            if id >= v {
                return Err(Error::Index {
                    op: "embedding",
                    index: id,
                    len: v,
                });
            }
            out.extend_from_slice(&tv[id * h..(id + 1) * h]);
        }
        let needs = self.needs(table);
        let t = Tensor::new(vec![ids.len(), h], out)?;
        Ok(self.push(
            t,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            needs,
        ))
    }

    /// Per-row `-log softmax(logits)[target]`. A `[n]` input with one target
    /// yields a scalar; an `[m×n]` input yields `[m]`.
    pub fn cross_entropy_rows(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        let (m, n) = match shape.as_slice() {
            [n] => (1, *n),
            [m, n] => (*m, *n),
            s => return Err(shape_err("cross_entropy", format!("logits shape {s:?}"))),
        };
        if targets.len() != m {
            return Err(shape_err("cross_entropy", format!("{m} rows, {} targets", targets.len())));
        }
        self.check_finite(logits, "cross_entropy")?;
        let lv = self.data(logits);
        let mut probs = vec![0.0; m * n];
        let mut out = Vec::with_capacity(m);
        for (r, &t) in targets.iter().enumerate() {
            if t >= n {
                return Err(Error::Index {
                    op: "cross_entropy",
                    index: t,
                    len: n,
                });
            }
            let row = &lv[r * n..(r + 1) * n];
            let lse = kernels::log_sum_exp(row);
            for j in 0..n {
                probs[r * n + j] = (row[j] - lse).exp();
            }
            out.push(lse - row[t]);
        }
        let out_shape = if shape.len() == 1 { vec![] } else { vec![m] };
        let needs = self.needs(logits);
        let t = Tensor::new(out_shape, out)?;
        Ok(self.push(
            t,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            needs,
        ))
    }

    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let v = if self.shape(logits).len() == 2 {
            let n = self.value(logits).numel();
            self.reshape(logits, &[n])?
        } else {
            logits
        };
        self.cross_entropy_rows(v, &[target])
    }

    /// Concatenates matrices along axis 0 (rows) or 1 (columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() || axis > 1 {
            return Err(shape_err("concat", format!("{} parts on axis {axis}", parts.len())));
        }
        let dims: Vec<(usize, usize)> = parts
            .iter()
            .map(|&p| self.rank2(p, "concat"))
            .collect::<Result<_>>()?;
        let (r0, c0) = dims[0];
        let out = if axis == 0 {
            if dims.iter().any(|&(_, c)| c != c0) {
                return Err(shape_err("concat", "column counts differ"));
            }
            let rows: usize = dims.iter().map(|d| d.0).sum();
            let mut data = Vec::with_capacity(rows * c0);
            for &p in parts {
                data.extend_from_slice(self.data(p));
            }
            Tensor::new(vec![rows, c0], data)?
        } else {
            if dims.iter().any(|&(r, _)| r != r0) {
                return Err(shape_err("concat", "row counts differ"));
            }
            let cols: usize = dims.iter().map(|d| d.1).sum();
            let mut data = Vec::with_capacity(r0 * cols);
            for r in 0..r0 {
                for (&p, &(_, c)) in parts.iter().zip(&dims) {
                    data.extend_from_slice(&self.data(p)[r * c..(r + 1) * c]);
                }
            }
            Tensor::new(vec![r0, cols], data)?
        };
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            out,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            needs,
        ))
    }

    /// Contiguous slice `[start, start+len)` of a matrix along axis 0 or 1.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.rank2(x, "slice")?;
        let extent = if axis == 0 { r } else { c };
        if axis > 1 || start + len > extent {
            return Err(shape_err("slice", format!("[{start}, {}) of axis {axis} (size {extent})", start + len)));
        }
        let xv = self.data(x);
        let out = if axis == 0 {
            Tensor::new(vec![len, c], xv[start * c..(start + len) * c].to_vec())?
        } else {
            let mut data = Vec::with_capacity(r * len);
            for i in 0..r {
                data.extend_from_slice(&xv[i * c + start..i * c + start + len]);
            }
            Tensor::new(vec![r, len], data)?
        };
        let needs = self.needs(x);
        Ok(self.push(out, Op::Slice { x, axis, start }, needs))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.value(x).numel() {
            return Err(shape_err("reshape", format!("{:?} -> {shape:?}", self.shape(x))));
        }
        let t = Tensor::new(shape.to_vec(), self.data(x).to_vec())?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::Reshape { x }, needs))
    }

    // ---- composites ----

    /// Multiplies by a constant.
    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let k = self.constant(Tensor::scalar(c));
        self.mul(x, k)
    }

    /// Sum of all elements as a scalar (composed as `1ᵀ · x`).
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).numel();
        let row = self.reshape(x, &[1, n])?;
        let ones = self.constant(Tensor::full(&[n, 1], 1.0));
        let s = self.matmul(row, ones)?;
        self.reshape(s, &[])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).numel();
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n as f64)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let nb = self.scale(b, -1.0)?;
        self.add(a, nb)
    }

    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        if !lv.is_finite() {
            return Err(Error::Numeric("loss".into()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        let n = self.nodes[v.0].value.numel();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, transpose_b } => {
                let (m, k) = dims2(self.shape(*a));
                let n = node.value.cols();
                let av = self.data(*a);
                let bv = self.data(*b);
                if let Some(ga) = self.acc(grads, *a) {
                    if *transpose_b {
                        // C = A Bᵀ, B is [n×k]: dA = dC · B
                        kernels::matmul_acc(g, bv, m, n, k, ga);
                    } else {
                        // dA = dC · Bᵀ, B is [k×n]
                        kernels::matmul_bt_acc(g, bv, m, n, k, ga);
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    if *transpose_b {
                        // dB = dCᵀ · A  -> [n×k]
                        kernels::matmul_at_acc(g, av, m, n, k, gb);
                    } else {
                        // dB = Aᵀ · dC  -> [k×n]
                        kernels::matmul_at_acc(av, g, m, k, n, gb);
                    }
                }
            }
            Op::Add { a, b, broadcast } => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    if *broadcast {
                        let n = gb.len();
                        for (i, y) in g.iter().enumerate() {
                            gb[i % n] += y;
                        }
                    } else {
                        gb.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::Mul { a, b, scalar_b } => {
                let av = self.data(*a);
                let bv = self.data(*b);
                if let Some(ga) = self.acc(grads, *a) {
                    if *scalar_b {
                        ga.iter_mut().zip(g).for_each(|(x, y)| *x += y * bv[0]);
                    } else {
                        for i in 0..g.len() {
                            ga[i] += g[i] * bv[i];
                        }
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    if *scalar_b {
                        gb[0] += g.iter().zip(av).map(|(y, x)| y * x).sum::<f64>();
                    } else {
                        for i in 0..g.len() {
                            gb[i] += g[i] * av[i];
                        }
                    }
                }
            }
            Op::Gelu { x } => {
                let xv = self.data(*x);
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..g.len() {
                        gx[i] += g[i] * kernels::gelu_grad(xv[i]);
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let n = node.value.cols();
                let rows = node.value.rows();
                let gv = self.data(*gamma);
                if let Some(gg) = self.acc(grads, *gamma) {
                    for r in 0..rows {
                        for j in 0..n {
                            gg[j] += g[r * n + j] * xhat[r * n + j];
                        }
                    }
                }
                if let Some(gb) = self.acc(grads, *beta) {
                    for r in 0..rows {
                        for j in 0..n {
                            gb[j] += g[r * n + j];
                        }
                    }
                }
                if let Some(gx) = self.acc(grads, *x) {
                    let nf = n as f64;
                    let mut dxhat = vec![0.0; n];
                    for r in 0..rows {
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for j in 0..n {
                            let d = g[r * n + j] * gv[j];
                            dxhat[j] = d;
                            s1 += d;
                            s2 += d * xhat[r * n + j];
                        }
                        for j in 0..n {
                            gx[r * n + j] += rstd[r] / nf * (nf * dxhat[j] - s1 - xhat[r * n + j] * s2);
                        }
                    }
                }
            }
            Op::Softmax { x, axis } => {
                let y = node.value.data();
                let (outer, len, inner) = lanes(node.value.shape(), *axis);
                if let Some(gx) = self.acc(grads, *x) {
                    for o in 0..outer {
                        for i in 0..inner {
                            let base = o * len * inner + i;
                            let mut dot = 0.0;
                            for t in 0..len {
                                let p = base + t * inner;
                                dot += g[p] * y[p];
                            }
                            for t in 0..len {
                                let p = base + t * inner;
                                gx[p] += y[p] * (g[p] - dot);
                            }
                        }
                    }
                }
            }
            Op::Embedding { table, ids } => {
                let h = node.value.cols();
                if let Some(gt) = self.acc(grads, *table) {
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..h {
                            gt[id * h + j] += g[r * h + j];
                        }
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let n = self.value(*logits).cols();
                if let Some(gl) = self.acc(grads, *logits) {
                    for (r, &t) in targets.iter().enumerate() {
                        for j in 0..n {
                            let one = if j == t { 1.0 } else { 0.0 };
                            gl[r * n + j] += g[r] * (probs[r * n + j] - one);
                        }
                    }
                }
            }
            Op::Concat { parts, axis } => {
                if *axis == 0 {
                    let mut off = 0;
                    for &p in parts {
                        let len = self.value(p).numel();
                        if let Some(gp) = self.acc(grads, p) {
                            gp.iter_mut().zip(&g[off..off + len]).for_each(|(x, y)| *x += y);
                        }
                        off += len;
                    }
                } else {
                    let rows = node.value.rows();
                    let total = node.value.cols();
                    let mut col = 0;
                    for &p in parts {
                        let c = self.value(p).cols();
                        if let Some(gp) = self.acc(grads, p) {
                            for r in 0..rows {
                                for j in 0..c {
                                    gp[r * c + j] += g[r * total + col + j];
                                }
                            }
                        }
                        col += c;
                    }
                }
            }
            Op::Slice { x, axis, start } => {
                let cols_in = self.value(*x).cols();
                let rows = node.value.rows();
                let c = node.value.cols();
                if let Some(gx) = self.acc(grads, *x) {
                    if *axis == 0 {
                        let off = start * cols_in;
                        gx[off..off + g.len()].iter_mut().zip(g).for_each(|(a, b)| *a += b);
                    } else {
                        for r in 0..rows {
                            for j in 0..c {
                                gx[r * cols_in + start + j] += g[r * c + j];
                            }
                        }
                    }
                }
            }
            Op::Reshape { x } => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
            }
        }
    }
}

fn dims2(s: &[usize]) -> (usize, usize) {
    (s[0], s[1])
}

fn lanes(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    if shape.is_empty() {
        return (1, 1, 1);
    }
    let outer = shape[..axis].iter().product();
    let len = shape[axis];
    let inner = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

/// Result of [`Tape::backward`]: one optional gradient per recorded node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if `v` is differentiable
    /// and reachable.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds `scale * ∂loss/∂param` into the gradient buffers of every
    /// parameter recorded on `tape`. Repeated uses of one parameter add up.
    pub fn accumulate_into(&self, tape: &Tape, store: &mut ParamStore, scale: f64) {
        for (i, node) in tape.nodes.iter().enumerate().take(self.grads.len()) {
            let (Some(id), Some(g)) = (node.param, self.grads[i].as_ref()) else {
                continue;
            };
            if let Some(dst) = store.get_mut(id).grad_mut() {
                for (d, s) in dst.iter_mut().zip(g) {
                    *d += scale * s;
                }
            }
        }
    }
}
