//! Reverse-mode differentiation tape.
//!
//! Operations append nodes to a Wengert list during the forward pass; a
//! single reverse sweep over that list accumulates gradients into every
//! leaf that was created with `requires_grad`. Fused operations with
//! hand-written backward rules (the splat renderer, D-SSIM) plug in through
//! the [`CustomOp`] trait as one opaque node each.

use super::{NumError, Tensor};

/// Handle to a node on a [`Tape`]. Only valid for the tape that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Fused operation with a hand-derived backward rule.
pub trait CustomOp {
    fn name(&self) -> &'static str;

    /// Accumulate input gradients. `inputs` are the forward values of the
    /// node's inputs, `out_grad` the upstream gradient of the node's output,
    /// and `input_grads` zero-initialized buffers (one per input, same
    /// length as the corresponding input) the rule adds into.
    fn backward(&self, inputs: &[&[f64]], out_grad: &[f64], input_grads: &mut [Vec<f64>]);
}

enum Op {
    Leaf,
    Add(Var, Var),
    /// matrix [r, c] + row vector [c], broadcast over rows
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    Matmul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    Transpose {
        x: Var,
        rows: usize,
        cols: usize,
    },
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Sqrt(Var),
    Abs(Var),
    /// elementwise max(x, floor); zero gradient at or below the floor
    MaxConst(Var, f64),
    Sum(Var),
    Mean(Var),
    /// rowwise softmax over a [rows, cols] matrix
    Softmax {
        x: Var,
        rows: usize,
        cols: usize,
    },
    ConcatCols {
        parts: Vec<Var>,
        rows: usize,
        widths: Vec<usize>,
    },
    SliceRows {
        x: Var,
        start: usize,
        cols: usize,
    },
    /// repeat a [c] / [1, c] row n times into [n, c]
    RepeatRow(Var, usize),
    GatherRows {
        x: Var,
        idx: Vec<usize>,
        cols: usize,
    },
    /// out[r] = M_r · x[r] with a constant matrix per row
    RowTransform {
        x: Var,
        mats: Vec<f64>,
        dim_in: usize,
        dim_out: usize,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        rows: usize,
        cols: usize,
        eps: f64,
    },
    Custom {
        inputs: Vec<Var>,
        rule: Box<dyn CustomOp>,
    },
}

struct Node {
    data: Vec<f64>,
    shape: Vec<usize>,
    requires_grad: bool,
    op: Op,
}

/// Gradients produced by one backward sweep, indexed by [`Var`].
pub struct Grads {
    by_var: Vec<Option<Vec<f64>>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.by_var.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of a leaf, zeros if it never received one.
    pub fn get_or_zeros(&self, v: Var, numel: usize) -> Vec<f64> {
        match self.get(v) {
            Some(g) => g.to_vec(),
            None => vec![0.0; numel],
        }
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].data[0]
    }

    fn numel(&self, v: Var) -> usize {
        self.nodes[v.0].data.len()
    }

    fn rows_cols(&self, v: Var) -> (usize, usize) {
        let s = &self.nodes[v.0].shape;
        match s.len() {
            0 => (1, 1),
            1 => (1, s[0]),
            _ => (s[0], s[1..].iter().product()),
        }
    }

    fn push(&mut self, data: Vec<f64>, shape: Vec<usize>, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            data,
            shape,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Leaf node carrying the tensor's values; participates in gradients
    /// iff the tensor requires them.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(
            t.data().to_vec(),
            t.shape().to_vec(),
            t.requires_grad,
            Op::Leaf,
        )
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, data: Vec<f64>, shape: Vec<usize>) -> Var {
        self.push(data, shape, false, Op::Leaf)
    }

    pub fn constant_scalar(&mut self, v: f64) -> Var {
        self.constant(vec![v], vec![1])
    }

    // ── elementwise ─────────────────────────────────────────────────

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.check_same_numel("add", a, b)?;
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(data, shape, rg, Op::Add(a, b)))
    }

    /// matrix [r, c] plus row vector [c] broadcast over rows.
    pub fn add_row(&mut self, m: Var, row: Var) -> Result<Var, NumError> {
        let (r, c) = self.rows_cols(m);
        if self.numel(row) != c {
            return Err(NumError::ShapeMismatch {
                op: "add_row",
                lhs: self.nodes[m.0].shape.clone(),
                rhs: self.nodes[row.0].shape.clone(),
            });
        }
        let mut data = self.nodes[m.0].data.clone();
        for i in 0..r {
            for j in 0..c {
                data[i * c + j] += self.nodes[row.0].data[j];
            }
        }
        let shape = self.nodes[m.0].shape.clone();
        let rg = self.needs_grad(&[m, row]);
        Ok(self.push(data, shape, rg, Op::AddRow(m, row)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.check_same_numel("sub", a, b)?;
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x - y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(data, shape, rg, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.check_same_numel("mul", a, b)?;
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(data, shape, rg, Op::Mul(a, b)))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        let data: Vec<f64> = self.nodes[x.0].data.iter().map(|v| -v).collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.needs_grad(&[x]);
        self.push(data, shape, rg, Op::Neg(x))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let data: Vec<f64> = self.nodes[x.0].data.iter().map(|v| v * k).collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.needs_grad(&[x]);
        self.push(data, shape, rg, Op::Scale(x, k))
    }

    // ── linear algebra ──────────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (m, k) = self.rows_cols(a);
        let (k2, n) = self.rows_cols(b);
        if k != k2 {
            return Err(NumError::ShapeMismatch {
                op: "matmul",
                lhs: self.nodes[a.0].shape.clone(),
                rhs: self.nodes[b.0].shape.clone(),
            });
        }
        let data = matmul_raw(&self.nodes[a.0].data, &self.nodes[b.0].data, m, k, n);
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(data, vec![m, n], rg, Op::Matmul { a, b, m, k, n }))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let (r, c) = self.rows_cols(x);
        let src = &self.nodes[x.0].data;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        let rg = self.needs_grad(&[x]);
        self.push(
            data,
            vec![c, r],
            rg,
            Op::Transpose {
                x,
                rows: r,
                cols: c,
            },
        )
    }

    // ── nonlinearities ──────────────────────────────────────────────

    pub fn relu(&mut self, x: Var) -> Var {
        let data: Vec<f64> = self.nodes[x.0].data.iter().map(|v| v.max(0.0)).collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.needs_grad(&[x]);
        self.push(data, shape, rg, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let data: Vec<f64> = self.nodes[x.0]
            .data
            .iter()
            .map(|v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.needs_grad(&[x]);
        self.push(data, shape, rg, Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let data: Vec<f64> = self.nodes[x.0].data.iter().map(|v| v.exp()).collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.needs_grad(&[x]);
        self.push(data, shape, rg, Op::Exp(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        let data: Vec<f64> = self.nodes[x.0].data.iter().map(|v| v.sqrt()).collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.needs_grad(&[x]);
        self.push(data, shape, rg, Op::Sqrt(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let data: Vec<f64> = self.nodes[x.0].data.iter().map(|v| v.abs()).collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.needs_grad(&[x]);
        self.push(data, shape, rg, Op::Abs(x))
    }

    pub fn max_const(&mut self, x: Var, floor: f64) -> Var {
        let data: Vec<f64> = self.nodes[x.0].data.iter().map(|v| v.max(floor)).collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.needs_grad(&[x]);
        self.push(data, shape, rg, Op::MaxConst(x, floor))
    }

    // ── reductions ──────────────────────────────────────────────────

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.nodes[x.0].data.iter().sum();
        let rg = self.needs_grad(&[x]);
        self.push(vec![s], vec![1], rg, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.numel(x) as f64;
        let s: f64 = self.nodes[x.0].data.iter().sum::<f64>() / n;
        let rg = self.needs_grad(&[x]);
        self.push(vec![s], vec![1], rg, Op::Mean(x))
    }

    // ── structured ops ──────────────────────────────────────────────

    /// Same data, new shape. Gradient passes through unchanged.
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, NumError> {
        let numel: usize = shape.iter().product();
        if numel != self.numel(x) {
            return Err(NumError::BadShape {
                what: "reshape must preserve element count",
                shape,
            });
        }
        let data = self.nodes[x.0].data.clone();
        let rg = self.needs_grad(&[x]);
        // identity gradient: reuse the slice-rows machinery at offset zero
        Ok(self.push(
            data,
            shape,
            rg,
            Op::SliceRows {
                x,
                start: 0,
                cols: 1,
            },
        ))
    }

    /// Rowwise softmax with max-subtraction for stability.
    pub fn softmax(&mut self, x: Var) -> Var {
        let (rows, cols) = self.rows_cols(x);
        let src = &self.nodes[x.0].data;
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..cols {
                let e = (row[j] - m).exp();
                data[r * cols + j] = e;
                z += e;
            }
            for j in 0..cols {
                data[r * cols + j] /= z;
            }
        }
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.needs_grad(&[x]);
        self.push(data, shape, rg, Op::Softmax { x, rows, cols })
    }

    /// Concatenate 2-D blocks along the column axis; all must share a row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumError> {
        let rows = self.rows_cols(parts[0]).0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.rows_cols(p);
            if r != rows {
                return Err(NumError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.nodes[parts[0].0].shape.clone(),
                    rhs: self.nodes[p.0].shape.clone(),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * total];
        let mut off = 0;
        for (i, &p) in parts.iter().enumerate() {
            let c = widths[i];
            let src = &self.nodes[p.0].data;
            for r in 0..rows {
                data[r * total + off..r * total + off + c]
                    .copy_from_slice(&src[r * c..(r + 1) * c]);
            }
            off += c;
        }
        let rg = self.needs_grad(parts);
        Ok(self.push(
            data,
            vec![rows, total],
            rg,
            Op::ConcatCols {
                parts: parts.to_vec(),
                rows,
                widths,
            },
        ))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NumError> {
        let (rows, cols) = self.rows_cols(x);
        if start + len > rows {
            return Err(NumError::Contract {
                what: "slice_rows range exceeds row count".into(),
            });
        }
        let data = self.nodes[x.0].data[start * cols..(start + len) * cols].to_vec();
        let rg = self.needs_grad(&[x]);
        Ok(self.push(data, vec![len, cols], rg, Op::SliceRows { x, start, cols }))
    }

    pub fn repeat_row(&mut self, x: Var, n: usize) -> Var {
        let c = self.numel(x);
        let mut data = Vec::with_capacity(n * c);
        for _ in 0..n {
            data.extend_from_slice(&self.nodes[x.0].data);
        }
        let rg = self.needs_grad(&[x]);
        self.push(data, vec![n, c], rg, Op::RepeatRow(x, n))
    }

    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var, NumError> {
        let (rows, cols) = self.rows_cols(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(NumError::Contract {
                what: format!("gather_rows index {bad} out of range for {rows} rows"),
            });
        }
        let src = &self.nodes[x.0].data;
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            data.extend_from_slice(&src[i * cols..(i + 1) * cols]);
        }
        let rg = self.needs_grad(&[x]);
        Ok(self.push(
            data,
            vec![idx.len(), cols],
            rg,
            Op::GatherRows {
                x,
                idx: idx.to_vec(),
                cols,
            },
        ))
    }

    /// Apply a constant `dim_out × dim_in` matrix to each row of `x`.
    /// `mats` is row-major, one matrix per row of `x`, concatenated.
    pub fn row_transform(
        &mut self,
        x: Var,
        mats: Vec<f64>,
        dim_out: usize,
    ) -> Result<Var, NumError> {
        let (rows, dim_in) = self.rows_cols(x);
        if mats.len() != rows * dim_out * dim_in {
            return Err(NumError::Contract {
                what: format!(
                    "row_transform expects {} matrix entries, got {}",
                    rows * dim_out * dim_in,
                    mats.len()
                ),
            });
        }
        let src = &self.nodes[x.0].data;
        let mut data = vec![0.0; rows * dim_out];
        for r in 0..rows {
            let m = &mats[r * dim_out * dim_in..(r + 1) * dim_out * dim_in];
            for i in 0..dim_out {
                let mut acc = 0.0;
                for j in 0..dim_in {
                    acc += m[i * dim_in + j] * src[r * dim_in + j];
                }
                data[r * dim_out + i] = acc;
            }
        }
        let rg = self.needs_grad(&[x]);
        Ok(self.push(
            data,
            vec![rows, dim_out],
            rg,
            Op::RowTransform {
                x,
                mats,
                dim_in,
                dim_out,
            },
        ))
    }

    /// Rowwise layer normalization with learnable gain/bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var, NumError> {
        let (rows, cols) = self.rows_cols(x);
        if self.numel(gamma) != cols || self.numel(beta) != cols {
            return Err(NumError::ShapeMismatch {
                op: "layer_norm",
                lhs: self.nodes[x.0].shape.clone(),
                rhs: self.nodes[gamma.0].shape.clone(),
            });
        }
        let eps = 1e-5;
        let src = &self.nodes[x.0].data;
        let g = &self.nodes[gamma.0].data;
        let b = &self.nodes[beta.0].data;
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            let mu = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / cols as f64;
            let inv_sigma = 1.0 / (var + eps).sqrt();
            for j in 0..cols {
                data[r * cols + j] = (row[j] - mu) * inv_sigma * g[j] + b[j];
            }
        }
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.needs_grad(&[x, gamma, beta]);
        Ok(self.push(
            data,
            shape,
            rg,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                rows,
                cols,
                eps,
            },
        ))
    }

    /// Record a fused operation. The rule's `forward` has already been run by
    /// the caller, which supplies the output values here.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        out_data: Vec<f64>,
        out_shape: Vec<usize>,
        rule: Box<dyn CustomOp>,
    ) -> Var {
        let rg = self.needs_grad(inputs);
        self.push(
            out_data,
            out_shape,
            rg,
            Op::Custom {
                inputs: inputs.to_vec(),
                rule,
            },
        )
    }

    // ── backward ────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Visits each node at most once, in
    /// reverse topological (= construction) order.
    pub fn backward(&self, loss: Var) -> Result<Grads, NumError> {
        if self.numel(loss) != 1 {
            return Err(NumError::Contract {
                what: format!(
                    "backward requires a scalar loss, got shape {:?}",
                    self.nodes[loss.0].shape
                ),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            // Leaf gradients are the product of the sweep; keep them.
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        Ok(Grads { by_var: grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, add: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.numel(v)]);
        add(slot);
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |s| axpy(s, g, 1.0));
                self.accumulate(grads, *b, |s| axpy(s, g, 1.0));
            }
            Op::AddRow(m, row) => {
                self.accumulate(grads, *m, |s| axpy(s, g, 1.0));
                let c = self.numel(*row);
                self.accumulate(grads, *row, |s| {
                    for (i, gv) in g.iter().enumerate() {
                        s[i % c] += gv;
                    }
                });
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |s| axpy(s, g, 1.0));
                self.accumulate(grads, *b, |s| axpy(s, g, -1.0));
            }
            Op::Mul(a, b) => {
                let bd = &self.nodes[b.0].data;
                self.accumulate(grads, *a, |s| {
                    for k in 0..s.len() {
                        s[k] += g[k] * bd[k];
                    }
                });
                let ad = &self.nodes[a.0].data;
                self.accumulate(grads, *b, |s| {
                    for k in 0..s.len() {
                        s[k] += g[k] * ad[k];
                    }
                });
            }
            Op::Neg(x) => self.accumulate(grads, *x, |s| axpy(s, g, -1.0)),
            Op::Scale(x, k) => {
                let k = *k;
                self.accumulate(grads, *x, |s| axpy(s, g, k));
            }
            Op::Matmul { a, b, m, k, n } => {
                let (m, kk, n) = (*m, *k, *n);
                let bd = &self.nodes[b.0].data;
                // dA = G · Bᵀ
                self.accumulate(grads, *a, |s| {
                    for i in 0..m {
                        for j in 0..kk {
                            let mut acc = 0.0;
                            for t in 0..n {
                                acc += g[i * n + t] * bd[j * n + t];
                            }
                            s[i * kk + j] += acc;
                        }
                    }
                });
                let ad = &self.nodes[a.0].data;
                // dB = Aᵀ · G
                self.accumulate(grads, *b, |s| {
                    for i in 0..kk {
                        for j in 0..n {
                            let mut acc = 0.0;
                            for t in 0..m {
                                acc += ad[t * kk + i] * g[t * n + j];
                            }
                            s[i * n + j] += acc;
                        }
                    }
                });
            }
            Op::Transpose { x, rows, cols } => {
                let (r, c) = (*rows, *cols);
                self.accumulate(grads, *x, |s| {
                    for i in 0..r {
                        for j in 0..c {
                            s[i * c + j] += g[j * r + i];
                        }
                    }
                });
            }
            Op::Relu(x) => {
                let xd = &self.nodes[x.0].data;
                self.accumulate(grads, *x, |s| {
                    for k in 0..s.len() {
                        if xd[k] > 0.0 {
                            s[k] += g[k];
                        }
                    }
                });
            }
            Op::Sigmoid(x) => {
                let yd = &self.nodes[i].data;
                self.accumulate(grads, *x, |s| {
                    for k in 0..s.len() {
                        s[k] += g[k] * yd[k] * (1.0 - yd[k]);
                    }
                });
            }
            Op::Exp(x) => {
                let yd = &self.nodes[i].data;
                self.accumulate(grads, *x, |s| {
                    for k in 0..s.len() {
                        s[k] += g[k] * yd[k];
                    }
                });
            }
            Op::Sqrt(x) => {
                let yd = &self.nodes[i].data;
                self.accumulate(grads, *x, |s| {
                    for k in 0..s.len() {
                        // subgradient 0 at the origin keeps losses at their
                        // exact minimum from poisoning the sweep with infs
                        if yd[k] > 0.0 {
                            s[k] += g[k] * 0.5 / yd[k];
                        }
                    }
                });
            }
            Op::Abs(x) => {
                let xd = &self.nodes[x.0].data;
                self.accumulate(grads, *x, |s| {
                    for k in 0..s.len() {
                        s[k] += g[k] * xd[k].signum() * if xd[k] == 0.0 { 0.0 } else { 1.0 };
                    }
                });
            }
            Op::MaxConst(x, floor) => {
                let xd = &self.nodes[x.0].data;
                let floor = *floor;
                self.accumulate(grads, *x, |s| {
                    for k in 0..s.len() {
                        if xd[k] > floor {
                            s[k] += g[k];
                        }
                    }
                });
            }
            Op::Sum(x) => {
                let gv = g[0];
                self.accumulate(grads, *x, |s| {
                    for v in s.iter_mut() {
                        *v += gv;
                    }
                });
            }
            Op::Mean(x) => {
                let gv = g[0] / self.numel(*x) as f64;
                self.accumulate(grads, *x, |s| {
                    for v in s.iter_mut() {
                        *v += gv;
                    }
                });
            }
            Op::Softmax { x, rows, cols } => {
                let yd = &self.nodes[i].data;
                let (rows, cols) = (*rows, *cols);
                self.accumulate(grads, *x, |s| {
                    for r in 0..rows {
                        let y = &yd[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let dot: f64 = y.iter().zip(gr).map(|(yv, gv)| yv * gv).sum();
                        for j in 0..cols {
                            s[r * cols + j] += y[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::ConcatCols {
                parts,
                rows,
                widths,
            } => {
                let total: usize = widths.iter().sum();
                let mut off = 0;
                for (pi, &p) in parts.iter().enumerate() {
                    let c = widths[pi];
                    self.accumulate(grads, p, |s| {
                        for r in 0..*rows {
                            for j in 0..c {
                                s[r * c + j] += g[r * total + off + j];
                            }
                        }
                    });
                    off += c;
                }
            }
            Op::SliceRows { x, start, cols } => {
                let offset = start * cols;
                self.accumulate(grads, *x, |s| {
                    for (k, gv) in g.iter().enumerate() {
                        s[offset + k] += gv;
                    }
                });
            }
            Op::RepeatRow(x, n) => {
                let c = self.numel(*x);
                let n = *n;
                self.accumulate(grads, *x, |s| {
                    for r in 0..n {
                        for j in 0..c {
                            s[j] += g[r * c + j];
                        }
                    }
                });
            }
            Op::GatherRows { x, idx, cols } => {
                self.accumulate(grads, *x, |s| {
                    for (r, &i) in idx.iter().enumerate() {
                        for j in 0..*cols {
                            s[i * cols + j] += g[r * cols + j];
                        }
                    }
                });
            }
            Op::RowTransform {
                x,
                mats,
                dim_in,
                dim_out,
            } => {
                let (din, dout) = (*dim_in, *dim_out);
                let rows = self.numel(*x) / din;
                self.accumulate(grads, *x, |s| {
                    for r in 0..rows {
                        let m = &mats[r * dout * din..(r + 1) * dout * din];
                        for j in 0..din {
                            let mut acc = 0.0;
                            for i in 0..dout {
                                acc += m[i * din + j] * g[r * dout + i];
                            }
                            s[r * din + j] += acc;
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                rows,
                cols,
                eps,
            } => {
                let (rows, cols) = (*rows, *cols);
                let xd = &self.nodes[x.0].data;
                let gd = &self.nodes[gamma.0].data;
                // recompute per-row stats; cheaper than caching for desk sizes
                let mut xhat = vec![0.0; rows * cols];
                let mut inv_sigma = vec![0.0; rows];
                for r in 0..rows {
                    let row = &xd[r * cols..(r + 1) * cols];
                    let mu = row.iter().sum::<f64>() / cols as f64;
                    let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / cols as f64;
                    inv_sigma[r] = 1.0 / (var + eps).sqrt();
                    for j in 0..cols {
                        xhat[r * cols + j] = (row[j] - mu) * inv_sigma[r];
                    }
                }
                self.accumulate(grads, *x, |s| {
                    for r in 0..rows {
                        let gr = &g[r * cols..(r + 1) * cols];
                        let xh = &xhat[r * cols..(r + 1) * cols];
                        let mut mean_gy = 0.0;
                        let mut mean_gyx = 0.0;
                        for j in 0..cols {
                            let gy = gr[j] * gd[j];
                            mean_gy += gy;
                            mean_gyx += gy * xh[j];
                        }
                        mean_gy /= cols as f64;
                        mean_gyx /= cols as f64;
                        for j in 0..cols {
                            let gy = gr[j] * gd[j];
                            s[r * cols + j] += (gy - mean_gy - xh[j] * mean_gyx) * inv_sigma[r];
                        }
                    }
                });
                self.accumulate(grads, *gamma, |s| {
                    for r in 0..rows {
                        for j in 0..cols {
                            s[j] += g[r * cols + j] * xhat[r * cols + j];
                        }
                    }
                });
                self.accumulate(grads, *beta, |s| {
                    for r in 0..rows {
                        for j in 0..cols {
                            s[j] += g[r * cols + j];
                        }
                    }
                });
            }
            Op::Custom { inputs, rule } => {
                let in_values: Vec<&[f64]> = inputs.iter().map(|v| self.value(*v)).collect();
                let mut buffers: Vec<Vec<f64>> =
                    inputs.iter().map(|v| vec![0.0; self.numel(*v)]).collect();
                rule.backward(&in_values, g, &mut buffers);
                for (v, buf) in inputs.iter().zip(buffers) {
                    self.accumulate(grads, *v, |s| axpy(s, &buf, 1.0));
                }
            }
        }
    }

    fn check_same_numel(&self, op: &'static str, a: Var, b: Var) -> Result<(), NumError> {
        if self.numel(a) != self.numel(b) {
            return Err(NumError::ShapeMismatch {
                op,
                lhs: self.nodes[a.0].shape.clone(),
                rhs: self.nodes[b.0].shape.clone(),
            });
        }
        Ok(())
    }
}

fn axpy(dst: &mut [f64], src: &[f64], k: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += k * s;
    }
}

pub fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += av * b[p * n + j];
            }
        }
    }
    out
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;

    fn leaf_grad(t: &Tensor, build: impl Fn(&mut Tape, Var) -> Var) -> (f64, Vec<f64>) {
        let mut tape = Tape::new();
        let x = tape.leaf(t);
        let loss = build(&mut tape, x);
        let val = tape.scalar_value(loss);
        let grads = tape.backward(loss).unwrap();
        (val, grads.get_or_zeros(x, t.numel()))
    }

    #[test]
    fn identity_matmul() {
        let mut tape = Tape::new();
        let eye = tape.constant(
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            vec![3, 3],
        );
        let a = tape.constant((1..=9).map(f64::from).collect(), vec![3, 3]);
        let out = tape.matmul(eye, a).unwrap();
        assert_eq!(tape.value(out), tape.value(a));
    }

    #[test]
    fn hand_matmul() {
        let mut tape = Tape::new();
        let a = tape.constant(vec![1.0, 2.0, 3.0, 4.0], vec![2, 2]);
        let b = tape.constant(vec![0.0, 1.0], vec![2, 1]);
        let out = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(out), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(vec![0.0; 6], vec![2, 3]);
        let b = tape.constant(vec![0.0; 8], vec![4, 2]);
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn backward_of_leaf_is_one() {
        let t = Tensor::scalar(3.5).with_grad();
        let (v, g) = leaf_grad(&t, |_tape, x| x);
        assert_eq!(v, 3.5);
        assert_eq!(g, vec![1.0]);
    }

    #[test]
    fn backward_sum_of_squares() {
        let t = Tensor::new(vec![3], vec![1.0, -2.0, 0.5])
            .unwrap()
            .with_grad();
        let (_, g) = leaf_grad(&t, |tape, x| {
            let sq = tape.mul(x, x).unwrap();
            tape.sum(sq)
        });
        assert_eq!(g, vec![2.0, -4.0, 1.0]);
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut tape = Tape::new();
        let t = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap().with_grad();
        let x = tape.leaf(&t);
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![1000.0, 0.0, -5.0, 3.0, 3.0, 3.0], vec![2, 3]);
        let y = tape.softmax(x);
        let v = tape.value(y);
        for r in 0..2 {
            let s: f64 = v[r * 3..(r + 1) * 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        // large-input stability: no overflow, winner takes all
        assert!((v[0] - 1.0).abs() < 1e-12);
        assert!(v[1] >= 0.0 && v[1] < 1e-300);
        for j in 3..6 {
            assert!((v[j] - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_single_element_axis() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![42.0, -3.0], vec![2, 1]);
        let y = tape.softmax(x);
        assert_eq!(tape.value(y), &[1.0, 1.0]);
    }

    #[test]
    fn layer_norm_matches_finite_difference() {
        let mut rng = crate::numcore::Rng::seed_from(9);
        let x = Tensor::new(vec![3, 4], rng.normal_vec(12, 1.0))
            .unwrap()
            .with_grad();
        let gamma = Tensor::new(vec![4], rng.normal_vec(4, 1.0))
            .unwrap()
            .with_grad();
        let beta = Tensor::new(vec![4], rng.normal_vec(4, 1.0))
            .unwrap()
            .with_grad();
        let diff =
            crate::numcore::finite_diff_check_multi(&[x, gamma, beta], 1e-5, |tape, vars| {
                let y = tape.layer_norm(vars[0], vars[1], vars[2]).unwrap();
                let sq = tape.mul(y, y).unwrap();
                tape.sum(sq)
            })
            .unwrap();
        assert!(diff < 1e-7, "layer_norm grad mismatch {diff}");
    }

    #[test]
    fn structured_ops_match_finite_difference() {
        let mut rng = crate::numcore::Rng::seed_from(17);
        let x = Tensor::new(vec![4, 3], rng.normal_vec(12, 1.0))
            .unwrap()
            .with_grad();
        let mats: Vec<f64> = rng.normal_vec(4 * 2 * 3, 1.0);
        let mats2 = mats.clone();
        let diff = crate::numcore::finite_diff_check_multi(&[x], 1e-5, move |tape, vars| {
            let g = tape.gather_rows(vars[0], &[2, 0, 1, 3]).unwrap();
            let t = tape.row_transform(g, mats2.clone(), 2).unwrap();
            let s = tape.slice_rows(t, 1, 3).unwrap();
            let sm = tape.softmax(s);
            let a = tape.abs(sm);
            let m = tape.max_const(a, 0.2);
            tape.sum(m)
        })
        .unwrap();
        assert!(diff < 1e-7, "structured op grad mismatch {diff}");
    }
}
