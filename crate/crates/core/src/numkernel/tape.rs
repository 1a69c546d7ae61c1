//! Reverse-mode gradient tape over [`Tensor`] values.
//!
//! A [`Tape`] owns an append-only list of nodes. Each primitive records
//! its operands and whatever it needs for the backward pass; replaying
//! the list in reverse accumulates `∂loss/∂node` for every node that
//! depends on a parameter. Nodes that only depend on constants are never
//! visited on the way back, so frozen network weights cost nothing.
//!
//! ```
//! use bdas::numkernel::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Tensor::scalar(3.0).unwrap());
//! let y = tape.mul(x, x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.get(x).unwrap().item(), 6.0);
//! ```

use crate::error::{Error, Result};
use crate::numkernel::linalg::Lu;
use crate::numkernel::tensor::{gemm, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    AddScalar(Var, Var),
    DivScalar(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softplus(Var),
    ClampMax(Var, f64),
    Sum(Var),
    CumSumCols(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    Transpose(Var),
    Solve { b: Var, c: Var, lu: Lu },
    SkewFromUpper(Var),
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<f64> },
    GatherRows(Var, Vec<usize>),
    ScatterRows { base: Var, idx: Vec<usize>, rows: Var },
    LayerNorm { x: Var, rstd: Vec<f64> },
    CausalAttention { q: Var, k: Var, v: Var, batch: usize, seq: usize, heads: usize, probs: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Append-only operation record. Single-threaded by design; build one
/// tape per forward/backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when `v` does not reach the loss
    /// through any parameter path.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Like [`get`](Self::get) but substitutes zeros of the given shape.
    pub fn get_or_zeros(&self, v: Var, rows: usize, cols: usize) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(rows, cols))
    }
}

fn dim_err(op: &str, a: [usize; 2], b: [usize; 2]) -> Error {
    Error::Dimension(format!("{op}: {a:?} vs {b:?}"))
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push_raw(t, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_raw(t, Op::Leaf, false)
    }

    fn push_raw(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &str, rows: usize, cols: usize, data: Vec<f64>, op: Op, deps: &[Var]) -> Result<Var> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(name.to_string()));
        }
        let needs_grad = deps.iter().any(|d| self.nodes[d.0].needs_grad);
        Ok(self.push_raw(Tensor::from_raw(rows, cols, data), op, needs_grad))
    }

    fn same_shape(&self, name: &str, a: Var, b: Var) -> Result<[usize; 2]> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(dim_err(name, sa, sb));
        }
        Ok(sa)
    }

    fn is_row_of(&self, name: &str, a: Var, row: Var) -> Result<[usize; 2]> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr[0] != 1 || sr[1] != sa[1] {
            return Err(dim_err(name, sa, sr));
        }
        Ok(sa)
    }

    fn is_scalar(&self, name: &str, s: Var) -> Result<()> {
        let ss = self.shape(s);
        if ss != [1, 1] {
            return Err(dim_err(name, ss, [1, 1]));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa[1] != sb[0] {
            return Err(dim_err("matmul", sa, sb));
        }
        let data = gemm(self.value(a).data(), self.value(b).data(), sa[0], sa[1], sb[1], false, false);
        self.push("matmul", sa[0], sb[1], data, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let s = self.same_shape("add", a, b)?;
        let data = zip(self.value(a), self.value(b), |x, y| x + y);
        self.push("add", s[0], s[1], data, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let s = self.same_shape("sub", a, b)?;
        let data = zip(self.value(a), self.value(b), |x, y| x - y);
        self.push("sub", s[0], s[1], data, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let s = self.same_shape("mul", a, b)?;
        let data = zip(self.value(a), self.value(b), |x, y| x * y);
        self.push("mul", s[0], s[1], data, Op::Mul(a, b), &[a, b])
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let s = self.is_row_of("add_row", a, row)?;
        let data = broadcast_row(self.value(a), self.value(row), |x, r| x + r);
        self.push("add_row", s[0], s[1], data, Op::AddRow(a, row), &[a, row])
    }

    /// Multiplies every row of `a` elementwise by a `1 × n` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let s = self.is_row_of("mul_row", a, row)?;
        let data = broadcast_row(self.value(a), self.value(row), |x, r| x * r);
        self.push("mul_row", s[0], s[1], data, Op::MulRow(a, row), &[a, row])
    }

    /// Adds a `1 × 1` scalar node to every entry.
    pub fn add_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        self.is_scalar("add_scalar", s)?;
        let sv = self.value(s).item();
        let t = self.value(a).map(|x| x + sv);
        let [r, c] = t.shape();
        self.push("add_scalar", r, c, t.to_vec(), Op::AddScalar(a, s), &[a, s])
    }

    /// Divides every entry by a `1 × 1` scalar node.
    pub fn div_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        self.is_scalar("div_scalar", s)?;
        let sv = self.value(s).item();
        if sv == 0.0 {
            return Err(Error::NonFinite("div_scalar by zero".into()));
        }
        let t = self.value(a).map(|x| x / sv);
        let [r, c] = t.shape();
        self.push("div_scalar", r, c, t.to_vec(), Op::DivScalar(a, s), &[a, s])
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let t = self.value(a).map(|x| x * k);
        let [r, c] = t.shape();
        self.push("scale", r, c, t.to_vec(), Op::Scale(a, k), &[a])
    }

    /// Adds a constant to every entry.
    pub fn offset(&mut self, a: Var, k: f64) -> Result<Var> {
        let t = self.value(a).map(|x| x + k);
        let [r, c] = t.shape();
        self.push("offset", r, c, t.to_vec(), Op::Offset(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(sigmoid);
        let [r, c] = t.shape();
        self.push("sigmoid", r, c, t.to_vec(), Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(f64::tanh);
        let [r, c] = t.shape();
        self.push("tanh", r, c, t.to_vec(), Op::Tanh(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(|x| x.max(0.0));
        let [r, c] = t.shape();
        self.push("relu", r, c, t.to_vec(), Op::Relu(a), &[a])
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(softplus);
        let [r, c] = t.shape();
        self.push("softplus", r, c, t.to_vec(), Op::Softplus(a), &[a])
    }

    /// `min(a, k)` elementwise; the gradient is cut where the clamp is active.
    pub fn clamp_max(&mut self, a: Var, k: f64) -> Result<Var> {
        let t = self.value(a).map(|x| x.min(k));
        let [r, c] = t.shape();
        self.push("clamp_max", r, c, t.to_vec(), Op::ClampMax(a, k), &[a])
    }

    /// Sum of all entries as a `1 × 1` node.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.value(a).data().iter().sum();
        self.push("sum", 1, 1, vec![s], Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Running sum along each row.
    pub fn cumsum_cols(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let [r, c] = t.shape();
        let mut data = t.to_vec();
        for row in data.chunks_mut(c.max(1)) {
            for j in 1..row.len() {
                row[j] += row[j - 1];
            }
        }
        self.push("cumsum_cols", r, c, data, Op::CumSumCols(a), &[a])
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        let [r, c] = t.shape();
        if start + len > c {
            return Err(Error::Dimension(format!("slice_cols {start}+{len} of {c}")));
        }
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&t.row_slice(i)[start..start + len]);
        }
        self.push("slice_cols", r, len, data, Op::SliceCols(a, start), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let r = parts.first().map(|&p| self.shape(p)[0]).unwrap_or(0);
        if parts.iter().any(|&p| self.shape(p)[0] != r) {
            return Err(Error::Dimension("concat_cols row mismatch".into()));
        }
        let total: usize = parts.iter().map(|&p| self.shape(p)[1]).sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        self.push("concat_cols", r, total, data, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).transpose();
        let [r, c] = t.shape();
        self.push("transpose", r, c, t.to_vec(), Op::Transpose(a), &[a])
    }

    /// `B⁻¹ C` through an LU factorisation of `B`.
    pub fn solve(&mut self, b: Var, c: Var) -> Result<Var> {
        let (sb, sc) = (self.shape(b), self.shape(c));
        if sb[0] != sb[1] || sc[0] != sb[0] {
            return Err(dim_err("solve", sb, sc));
        }
        let lu = Lu::factor(self.value(b))?;
        let x = lu.solve(self.value(c))?;
        self.push("solve", sc[0], sc[1], x.to_vec(), Op::Solve { b, c, lu }, &[b, c])
    }

    /// Expands a `1 × n(n−1)/2` row of strict-upper-triangle entries into
    /// the skew-symmetric `n × n` matrix `A` with `A[i][j] = u`, `A[j][i] = −u`.
    pub fn skew_from_upper(&mut self, u: Var, n: usize) -> Result<Var> {
        let su = self.shape(u);
        if su != [1, n * n.saturating_sub(1) / 2] {
            return Err(dim_err("skew_from_upper", su, [1, n * n.saturating_sub(1) / 2]));
        }
        let vals = self.value(u).data();
        let mut data = vec![0.0; n * n];
        let mut t = 0;
        for i in 0..n {
            for j in i + 1..n {
                data[i * n + j] = vals[t];
                data[j * n + i] = -vals[t];
                t += 1;
            }
        }
        self.push("skew_from_upper", n, n, data, Op::SkewFromUpper(u), &[u])
    }

    /// Mean over rows of `−log softmax(logits[r])[targets[r]]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let [r, c] = self.shape(logits);
        if targets.len() != r {
            return Err(Error::Dimension(format!("cross_entropy: {r} rows, {} targets", targets.len())));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::Label { target: bad, classes: c });
        }
        let lv = self.value(logits);
        let mut probs = vec![0.0; r * c];
        let mut loss = 0.0;
        for i in 0..r {
            let row = lv.row_slice(i);
            // log-sum-exp as ln_1p over the non-maximal terms keeps
            // confident rows accurate down to tiny losses
            let arg = (0..c).fold(0, |b, j| if row[j] > row[b] { j } else { b });
            let m = row[arg];
            let rest: f64 = (0..c).filter(|&j| j != arg).map(|j| (row[j] - m).exp()).sum();
            let shift = rest.ln_1p();
            for j in 0..c {
                probs[i * c + j] = (row[j] - m - shift).exp();
            }
            loss += (m - row[targets[i]]) + shift;
        }
        loss /= r.max(1) as f64;
        self.push(
            "cross_entropy",
            1,
            1,
            vec![loss],
            Op::CrossEntropy { logits, targets: targets.to_vec(), probs },
            &[logits],
        )
    }

    /// Rows of `a` picked by index (duplicates allowed).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(a).select_rows(idx)?;
        let [r, c] = t.shape();
        self.push("gather_rows", r, c, t.to_vec(), Op::GatherRows(a, idx.to_vec()), &[a])
    }

    /// Copy of `base` with row `idx[i]` replaced by row `i` of `rows`.
    pub fn scatter_rows(&mut self, base: Var, idx: &[usize], rows: Var) -> Result<Var> {
        let (sb, sr) = (self.shape(base), self.shape(rows));
        if sr[0] != idx.len() || sr[1] != sb[1] {
            return Err(dim_err("scatter_rows", sb, sr));
        }
        let mut seen = vec![false; sb[0]];
        for &i in idx {
            if i >= sb[0] || seen[i] {
                return Err(Error::Dimension(format!("scatter_rows index {i} invalid or repeated")));
            }
            seen[i] = true;
        }
        let mut data = self.value(base).to_vec();
        let c = sb[1];
        for (k, &i) in idx.iter().enumerate() {
            data[i * c..(i + 1) * c].copy_from_slice(self.value(rows).row_slice(k));
        }
        self.push(
            "scatter_rows",
            sb[0],
            c,
            data,
            Op::ScatterRows { base, idx: idx.to_vec(), rows },
            &[base, rows],
        )
    }

    /// Normalises each row to zero mean and unit variance (no affine part).
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Result<Var> {
        let t = self.value(x);
        let [r, c] = t.shape();
        let mut data = vec![0.0; r * c];
        let mut rstd = vec![0.0; r];
        for i in 0..r {
            let row = t.row_slice(i);
            let mu = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / c as f64;
            let s = 1.0 / (var + eps).sqrt();
            rstd[i] = s;
            for j in 0..c {
                data[i * c + j] = (row[j] - mu) * s;
            }
        }
        self.push("layer_norm", r, c, data, Op::LayerNorm { x, rstd }, &[x])
    }

    /// Multi-head causal self-attention over `batch` sequences of length
    /// `seq`, with rows laid out as `b * seq + t`. `q`, `k`, `v` are
    /// already projected; heads split the columns evenly.
    pub fn causal_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        batch: usize,
        seq: usize,
        heads: usize,
    ) -> Result<Var> {
        let s = self.same_shape("attention", q, k)?;
        self.same_shape("attention", q, v)?;
        let [rows, d] = s;
        if rows != batch * seq || heads == 0 || d % heads != 0 {
            return Err(Error::Dimension(format!(
                "attention: {rows}x{d} with batch {batch}, seq {seq}, heads {heads}"
            )));
        }
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qv, kv, vv) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut out = vec![0.0; rows * d];
        let mut probs = vec![0.0; batch * heads * seq * seq];
        for b in 0..batch {
            for h in 0..heads {
                let off = h * dh;
                for i in 0..seq {
                    let qi = &qv[(b * seq + i) * d + off..(b * seq + i) * d + off + dh];
                    let p = &mut probs[((b * heads + h) * seq + i) * seq..((b * heads + h) * seq + i + 1) * seq];
                    let mut m = f64::NEG_INFINITY;
                    for j in 0..=i {
                        let kj = &kv[(b * seq + j) * d + off..(b * seq + j) * d + off + dh];
                        let sc = dot(qi, kj) * scale;
                        p[j] = sc;
                        m = m.max(sc);
                    }
                    let mut z = 0.0;
                    for pj in p.iter_mut().take(i + 1) {
                        *pj = (*pj - m).exp();
                        z += *pj;
                    }
                    let o = &mut out[(b * seq + i) * d + off..(b * seq + i) * d + off + dh];
                    for j in 0..=i {
                        p[j] /= z;
                        let vj = &vv[(b * seq + j) * d + off..(b * seq + j) * d + off + dh];
                        for t in 0..dh {
                            o[t] += p[j] * vj[t];
                        }
                    }
                }
            }
        }
        self.push(
            "causal_attention",
            rows,
            d,
            out,
            Op::CausalAttention { q, k, v, batch, seq, heads, probs },
            &[q, k, v],
        )
    }

    /// Accumulates gradients of the `1 × 1` node `loss` into every
    /// parameter-dependent node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != [1, 1] {
            return Err(Error::Dimension(format!("backward from non-scalar {:?}", self.shape(loss))));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.backprop_node(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("gradient of node {i}")));
                }
            }
        }
        Ok(Gradients {
            grads: grads
                .into_iter()
                .enumerate()
                .map(|(i, g)| {
                    g.filter(|_| self.nodes[i].needs_grad).map(|g| {
                        let [r, c] = self.nodes[i].value.shape();
                        Tensor::from_raw(r, c, g)
                    })
                })
                .collect(),
        })
    }

    fn backprop_node(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let y = node.value.data();
        let [rows, cols] = node.value.shape();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let [m, k] = va.shape();
                let n = vb.cols();
                if self.wants(*a) {
                    acc(grads, *a, &gemm(g, vb.data(), m, n, k, false, true));
                }
                if self.wants(*b) {
                    acc(grads, *b, &gemm(va.data(), g, k, m, n, true, false));
                }
            }
            Op::Add(a, b) => {
                self.acc_if(grads, *a, g);
                self.acc_if(grads, *b, g);
            }
            Op::Sub(a, b) => {
                self.acc_if(grads, *a, g);
                if self.wants(*b) {
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    acc(grads, *b, &neg);
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    let gb: Vec<f64> = g.iter().zip(self.value(*b).data()).map(|(g, b)| g * b).collect();
                    acc(grads, *a, &gb);
                }
                if self.wants(*b) {
                    let ga: Vec<f64> = g.iter().zip(self.value(*a).data()).map(|(g, a)| g * a).collect();
                    acc(grads, *b, &ga);
                }
            }
            Op::AddRow(a, row) => {
                self.acc_if(grads, *a, g);
                if self.wants(*row) {
                    acc(grads, *row, &col_sums(g, rows, cols));
                }
            }
            Op::MulRow(a, row) => {
                let rv = self.value(*row).data();
                if self.wants(*a) {
                    let ga: Vec<f64> = g.iter().enumerate().map(|(i, g)| g * rv[i % cols]).collect();
                    acc(grads, *a, &ga);
                }
                if self.wants(*row) {
                    let av = self.value(*a).data();
                    let prod: Vec<f64> = g.iter().zip(av).map(|(g, a)| g * a).collect();
                    acc(grads, *row, &col_sums(&prod, rows, cols));
                }
            }
            Op::AddScalar(a, s) => {
                self.acc_if(grads, *a, g);
                if self.wants(*s) {
                    acc(grads, *s, &[g.iter().sum()]);
                }
            }
            Op::DivScalar(a, s) => {
                let sv = self.value(*s).item();
                if self.wants(*a) {
                    let ga: Vec<f64> = g.iter().map(|g| g / sv).collect();
                    acc(grads, *a, &ga);
                }
                if self.wants(*s) {
                    let gs: f64 = g.iter().zip(y).map(|(g, y)| -g * y / sv).sum();
                    acc(grads, *s, &[gs]);
                }
            }
            Op::Scale(a, k) => {
                if self.wants(*a) {
                    let ga: Vec<f64> = g.iter().map(|g| g * k).collect();
                    acc(grads, *a, &ga);
                }
            }
            Op::Offset(a) => self.acc_if(grads, *a, g),
            Op::Sigmoid(a) => self.unary(grads, *a, g, |i, _| y[i] * (1.0 - y[i])),
            Op::Tanh(a) => self.unary(grads, *a, g, |i, _| 1.0 - y[i] * y[i]),
            Op::Relu(a) => self.unary(grads, *a, g, |_, x| if x > 0.0 { 1.0 } else { 0.0 }),
            Op::Softplus(a) => self.unary(grads, *a, g, |_, x| sigmoid(x)),
            Op::ClampMax(a, k) => self.unary(grads, *a, g, |_, x| if x < *k { 1.0 } else { 0.0 }),
            Op::Sum(a) => {
                if self.wants(*a) {
                    let n = self.value(*a).len();
                    acc(grads, *a, &vec![g[0]; n]);
                }
            }
            Op::CumSumCols(a) => {
                if self.wants(*a) {
                    let mut ga = g.to_vec();
                    for row in ga.chunks_mut(cols.max(1)) {
                        for j in (0..row.len().saturating_sub(1)).rev() {
                            row[j] += row[j + 1];
                        }
                    }
                    acc(grads, *a, &ga);
                }
            }
            Op::SliceCols(a, start) => {
                if self.wants(*a) {
                    let full = self.value(*a).cols();
                    let mut ga = vec![0.0; rows * full];
                    for i in 0..rows {
                        ga[i * full + start..i * full + start + cols].copy_from_slice(&g[i * cols..(i + 1) * cols]);
                    }
                    acc(grads, *a, &ga);
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    if self.wants(p) {
                        let mut gp = Vec::with_capacity(rows * pc);
                        for i in 0..rows {
                            gp.extend_from_slice(&g[i * cols + off..i * cols + off + pc]);
                        }
                        acc(grads, p, &gp);
                    }
                    off += pc;
                }
            }
            Op::Transpose(a) => {
                if self.wants(*a) {
                    let gt = Tensor::from_raw(rows, cols, g.to_vec()).transpose();
                    acc(grads, *a, gt.data());
                }
            }
            Op::Solve { b, c, lu } => {
                // X = B⁻¹C: gC = B⁻ᵀ gX, gB = −gC Xᵀ
                let gx = Tensor::from_raw(rows, cols, g.to_vec());
                let gc = lu.solve_transposed(&gx).expect("factored system");
                if self.wants(*b) {
                    let n = rows;
                    let gb: Vec<f64> = gemm(gc.data(), y, n, cols, n, false, true).into_iter().map(|v| -v).collect();
                    acc(grads, *b, &gb);
                }
                if self.wants(*c) {
                    acc(grads, *c, gc.data());
                }
            }
            Op::SkewFromUpper(u) => {
                if self.wants(*u) {
                    let n = rows;
                    let mut gu = Vec::with_capacity(n * (n - 1) / 2);
                    for i in 0..n {
                        for j in i + 1..n {
                            gu.push(g[i * n + j] - g[j * n + i]);
                        }
                    }
                    acc(grads, *u, &gu);
                }
            }
            Op::CrossEntropy { logits, targets, probs } => {
                if self.wants(*logits) {
                    let [r, c] = self.shape(*logits);
                    let scale = g[0] / r.max(1) as f64;
                    let mut gl = probs.clone();
                    for (i, &t) in targets.iter().enumerate() {
                        gl[i * c + t] -= 1.0;
                    }
                    gl.iter_mut().for_each(|v| *v *= scale);
                    acc(grads, *logits, &gl);
                }
            }
            Op::GatherRows(a, idx) => {
                if self.wants(*a) {
                    let src_rows = self.value(*a).rows();
                    let mut ga = vec![0.0; src_rows * cols];
                    for (k, &i) in idx.iter().enumerate() {
                        for j in 0..cols {
                            ga[i * cols + j] += g[k * cols + j];
                        }
                    }
                    acc(grads, *a, &ga);
                }
            }
            Op::ScatterRows { base, idx, rows: src } => {
                if self.wants(*base) {
                    let mut gb = g.to_vec();
                    for &i in idx {
                        gb[i * cols..(i + 1) * cols].iter_mut().for_each(|v| *v = 0.0);
                    }
                    acc(grads, *base, &gb);
                }
                if self.wants(*src) {
                    let mut gs = Vec::with_capacity(idx.len() * cols);
                    for &i in idx {
                        gs.extend_from_slice(&g[i * cols..(i + 1) * cols]);
                    }
                    acc(grads, *src, &gs);
                }
            }
            Op::LayerNorm { x, rstd } => {
                if self.wants(*x) {
                    let mut gx = vec![0.0; rows * cols];
                    for i in 0..rows {
                        let gr = &g[i * cols..(i + 1) * cols];
                        let yr = &y[i * cols..(i + 1) * cols];
                        let mg = gr.iter().sum::<f64>() / cols as f64;
                        let mgy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / cols as f64;
                        for j in 0..cols {
                            gx[i * cols + j] = rstd[i] * (gr[j] - mg - yr[j] * mgy);
                        }
                    }
                    acc(grads, *x, &gx);
                }
            }
            Op::CausalAttention { q, k, v, batch, seq, heads, probs } => {
                self.attention_backward(g, *q, *k, *v, *batch, *seq, *heads, probs, grads);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        g: &[f64],
        q: Var,
        k: Var,
        v: Var,
        batch: usize,
        seq: usize,
        heads: usize,
        probs: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let [rows, d] = self.shape(q);
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qv, kv, vv) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut gq = vec![0.0; rows * d];
        let mut gk = vec![0.0; rows * d];
        let mut gv = vec![0.0; rows * d];
        let mut gp = vec![0.0; seq];
        for b in 0..batch {
            for h in 0..heads {
                let off = h * dh;
                for i in 0..seq {
                    let p = &probs[((b * heads + h) * seq + i) * seq..((b * heads + h) * seq + i + 1) * seq];
                    let go = &g[(b * seq + i) * d + off..(b * seq + i) * d + off + dh];
                    let mut pg = 0.0;
                    for j in 0..=i {
                        let vj = &vv[(b * seq + j) * d + off..(b * seq + j) * d + off + dh];
                        gp[j] = dot(go, vj);
                        pg += p[j] * gp[j];
                        let gvj = &mut gv[(b * seq + j) * d + off..(b * seq + j) * d + off + dh];
                        for t in 0..dh {
                            gvj[t] += p[j] * go[t];
                        }
                    }
                    for j in 0..=i {
                        let gs = p[j] * (gp[j] - pg) * scale;
                        if gs == 0.0 {
                            continue;
                        }
                        let (ri, rj) = ((b * seq + i) * d + off, (b * seq + j) * d + off);
                        for t in 0..dh {
                            gq[ri + t] += gs * kv[rj + t];
                            gk[rj + t] += gs * qv[ri + t];
                        }
                    }
                }
            }
        }
        if self.wants(q) {
            acc(grads, q, &gq);
        }
        if self.wants(k) {
            acc(grads, k, &gk);
        }
        if self.wants(v) {
            acc(grads, v, &gv);
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn acc_if(&self, grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
        if self.wants(v) {
            acc(grads, v, g);
        }
    }

    fn unary(&self, grads: &mut [Option<Vec<f64>>], a: Var, g: &[f64], deriv: impl Fn(usize, f64) -> f64) {
        if self.wants(a) {
            let x = self.value(a).data();
            let ga: Vec<f64> = g.iter().enumerate().map(|(i, g)| g * deriv(i, x[i])).collect();
            acc(grads, a, &ga);
        }
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
    match &mut grads[v.0] {
        Some(existing) => existing.iter_mut().zip(g).for_each(|(e, g)| *e += g),
        slot @ None => *slot = Some(g.to_vec()),
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect()
}

fn broadcast_row(a: &Tensor, row: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let c = a.cols();
    let r = row.data();
    a.data().iter().enumerate().map(|(i, &x)| f(x, r[i % c])).collect()
}

fn col_sums(g: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j] += g[i * cols + j];
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}
