#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;


use crate::error::{shape_err, Error, Result};
use crate::linalg::{self, Mat};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    id: usize,
    rows: usize,
    cols: usize,
}

impl Var {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Average,
    Max,
}

/// Pooling geometry for activations stored as `(batch·h·w) × c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pool2d {
    pub kind: PoolKind,
    pub batch: usize,
    pub h: usize,
    pub w: usize,
    pub window: (usize, usize),
    pub stride: (usize, usize),
}

impl Pool2d {
    pub fn out_size(&self) -> (usize, usize) {
        ((self.h - self.window.0) / self.stride.0 + 1, (self.w - self.window.1) / self.stride.1 + 1)
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Const,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Hadamard(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    AddRow(usize, usize),
    RowScale(usize, usize),
    ColScale(usize, usize),
    Transpose(usize),
    Block(usize, usize, usize),
    Assemble(Vec<(usize, usize, usize)>),
    Reshape(usize),
    Gather(usize, Vec<u32>),
    DiagFromVec(usize),
    VecFromDiag(usize),
    Exp(usize),
    Tanh(usize),
    Relu(usize),
    Abs(usize),
    Square(usize),
    Sqrt(usize),
    Recip(usize),
    Sum(usize),
    Inverse(usize),
    Solve(usize, usize, Mat),
    SolvePsd(usize, usize, Mat),
    InversePsd(usize),
    Cholesky(usize),
    Pool(usize, Pool2d, Vec<u32>),
    SoftmaxCe(usize, Mat, Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

/// Sentinel gather index producing a structural zero.
pub const ZERO: u32 = u32::MAX;

/// Append-only record of a matrix computation.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, a: Var, b: Var) -> Error {
    shape_err(op, format!("{}x{} vs {}x{}", a.rows, a.cols, b.rows, b.cols))
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

    fn push(&mut self, value: Mat, op: Op, needs_grad: bool) -> Var {
        let (rows, cols) = value.shape();
        let id = self.nodes.len();
        self.nodes.push(Node { value, op, needs_grad });
        Var { id, rows, cols }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.id].needs_grad
    }

    /// Trainable input.
    pub fn leaf(&mut self, m: Mat) -> Var {
        self.push(m, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, m: Mat) -> Var {
        self.push(m, Op::Const, false)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.id].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.id].value.data()[0]
    }

    fn unary(&mut self, a: Var, value: Mat, op: Op) -> Var {
        let n = self.needs(a);
        self.push(value, op, n)
    }

    fn binary(&mut self, a: Var, b: Var, value: Mat, op: Op) -> Var {
        let n = self.needs(a) || self.needs(b);
        self.push(value, op, n)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        if a.cols != b.rows {
            return Err(mismatch("matmul", a, b));
        }
        let v = self.value(a).mul_unchecked(self.value(b));
        Ok(self.binary(a, b, v, Op::MatMul(a.id, b.id)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.binary(a, b, v, Op::Add(a.id, b.id)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.binary(a, b, v, Op::Sub(a.id, b.id)))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).hadamard(self.value(b))?;
        Ok(self.binary(a, b, v, Op::Hadamard(a.id, b.id)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.unary(a, v, Op::Scale(a.id, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.unary(a, v, Op::AddScalar(a.id))
    }

    /// Adds the `1 × cols` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        if b.rows != 1 || b.cols != a.cols {
            return Err(mismatch("add_row", a, b));
        }
        let mut v = self.value(a).clone();
        let bv = self.value(b).data().to_vec();
        for row in v.data_mut().chunks_mut(a.cols.max(1)) {
            for (x, y) in row.iter_mut().zip(&bv) {
                *x += y;
            }
        }
        Ok(self.binary(a, b, v, Op::AddRow(a.id, b.id)))
    }

    /// `diag(d) · m` for a column vector `d`.
    pub fn row_scale(&mut self, d: Var, m: Var) -> Result<Var> {
        if d.cols != 1 || d.rows != m.rows {
            return Err(mismatch("row_scale", d, m));
        }
        let dv = self.value(d).data().to_vec();
        let mut v = self.value(m).clone();
        if m.cols > 0 {
            for (row, s) in v.data_mut().chunks_mut(m.cols).zip(&dv) {
                row.iter_mut().for_each(|x| *x *= s);
            }
        }
        Ok(self.binary(d, m, v, Op::RowScale(d.id, m.id)))
    }

    /// `m · diag(d)` for a column vector `d`.
    pub fn col_scale(&mut self, m: Var, d: Var) -> Result<Var> {
        if d.cols != 1 || d.rows != m.cols {
            return Err(mismatch("col_scale", m, d));
        }
        let dv = self.value(d).data().to_vec();
        let mut v = self.value(m).clone();
        if m.cols > 0 {
            for row in v.data_mut().chunks_mut(m.cols) {
                row.iter_mut().zip(&dv).for_each(|(x, s)| *x *= s);
            }
        }
        Ok(self.binary(m, d, v, Op::ColScale(m.id, d.id)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.unary(a, v, Op::Transpose(a.id))
    }

    pub fn block(&mut self, a: Var, r0: usize, c0: usize, rows: usize, cols: usize) -> Result<Var> {
        if r0 + rows > a.rows || c0 + cols > a.cols {
            return Err(shape_err(
                "block",
                format!("{rows}x{cols} at ({r0},{c0}) outside {}x{}", a.rows, a.cols),
            ));
        }
        let v = self.value(a).block(r0, c0, rows, cols);
        Ok(self.unary(a, v, Op::Block(a.id, r0, c0)))
    }

    /// Places each `(row, col, var)` into a zero matrix of the given size.
    ///
    /// Overlapping parts are summed.
    pub fn assemble(&mut self, rows: usize, cols: usize, parts: &[(usize, usize, Var)]) -> Result<Var> {
        let mut v = Mat::zeros(rows, cols);
        let mut needs = false;
        for &(r0, c0, p) in parts {
            if r0 + p.rows > rows || c0 + p.cols > cols {
                return Err(shape_err(
                    "assemble",
                    format!("{}x{} at ({r0},{c0}) outside {rows}x{cols}", p.rows, p.cols),
                ));
            }
            let pv = &self.nodes[p.id].value;
            for i in 0..p.rows {
                for j in 0..p.cols {
                    v[(r0 + i, c0 + j)] += pv[(i, j)];
                }
            }
            needs |= self.needs(p);
        }
        let list = parts.iter().map(|&(r, c, p)| (r, c, p.id)).collect();
        Ok(self.push(v, Op::Assemble(list), needs))
    }

    pub fn hstack(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |p| p.rows);
        let mut list = Vec::with_capacity(parts.len());
        let mut c0 = 0;
        for &p in parts {
            if p.rows != rows {
                return Err(mismatch("hstack", parts[0], p));
            }
            list.push((0, c0, p));
            c0 += p.cols;
        }
        self.assemble(rows, c0, &list)
    }

    pub fn vstack(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts.first().map_or(0, |p| p.cols);
        let mut list = Vec::with_capacity(parts.len());
        let mut r0 = 0;
        for &p in parts {
            if p.cols != cols {
                return Err(mismatch("vstack", parts[0], p));
            }
            list.push((r0, 0, p));
            r0 += p.rows;
        }
        self.assemble(r0, cols, &list)
    }

    /// Reinterprets the row-major data with a new shape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        if rows * cols != a.rows * a.cols {
            return Err(shape_err("reshape", format!("{}x{} to {rows}x{cols}", a.rows, a.cols)));
        }
        let v = self.value(a).clone().reshaped(rows, cols);
        Ok(self.unary(a, v, Op::Reshape(a.id)))
    }

    /// `out.data[k] = a.data[idx[k]]`, with [`ZERO`] giving a zero entry.
    pub fn gather(&mut self, a: Var, idx: Vec<u32>, rows: usize, cols: usize) -> Result<Var> {
        if idx.len() != rows * cols {
            return Err(shape_err("gather", format!("{} indices for {rows}x{cols}", idx.len())));
        }
        let src = self.value(a).data();
        let n = src.len();
        let mut out = Vec::with_capacity(idx.len());
        for &k in &idx {
            if k == ZERO {
                out.push(0.0);
            } else if (k as usize) < n {
                out.push(src[k as usize]);
            } else {
                return Err(shape_err("gather", format!("index {k} outside {n} entries")));
            }
        }
        let v = Mat::from_vec(rows, cols, out);
        Ok(self.unary(a, v, Op::Gather(a.id, idx)))
    }

    /// Diagonal matrix from a vector of either orientation.
    pub fn diag(&mut self, v: Var) -> Result<Var> {
        if v.rows != 1 && v.cols != 1 {
            return Err(shape_err("diag", format!("{}x{} is not a vector", v.rows, v.cols)));
        }
        let m = Mat::from_diag(self.value(v).data());
        Ok(self.unary(v, m, Op::DiagFromVec(v.id)))
    }

    /// Column vector holding the diagonal of a square matrix.
    pub fn diag_vec(&mut self, a: Var) -> Result<Var> {
        if a.rows != a.cols {
            return Err(shape_err("diag_vec", format!("{}x{} not square", a.rows, a.cols)));
        }
        let m = Mat::column(&self.value(a).diag());
        Ok(self.unary(a, m, Op::VecFromDiag(a.id)))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.unary(a, v, Op::Exp(a.id))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.unary(a, v, Op::Tanh(a.id))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.unary(a, v, Op::Relu(a.id))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::abs);
        self.unary(a, v, Op::Abs(a.id))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.unary(a, v, Op::Square(a.id))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::sqrt);
        self.unary(a, v, Op::Sqrt(a.id))
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| 1.0 / x);
        self.unary(a, v, Op::Recip(a.id))
    }

    /// Sum of all entries as a 1x1 value.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = Mat::from_vec(1, 1, vec![self.value(a).sum()]);
        self.unary(a, v, Op::Sum(a.id))
    }

    /// General inverse through an LU factorization.
    pub fn inverse(&mut self, a: Var) -> Result<Var> {
        let v = linalg::inverse(self.value(a))?;
        Ok(self.unary(a, v, Op::Inverse(a.id)))
    }

    /// `a⁻¹ b` for a general nonsingular `a`.
    pub fn solve(&mut self, a: Var, b: Var) -> Result<Var> {
        if a.rows != a.cols || a.rows != b.rows {
            return Err(mismatch("solve", a, b));
        }
        let inv = linalg::inverse(self.value(a))?;
        let x = inv.mul_unchecked(self.value(b));
        Ok(self.binary(a, b, x, Op::Solve(a.id, b.id, inv)))
    }

    /// `sym(a)⁻¹ b` through the Cholesky factor of the symmetric part of `a`.
    pub fn solve_psd(&mut self, a: Var, b: Var) -> Result<Var> {
        if a.rows != a.cols || a.rows != b.rows {
            return Err(mismatch("solve_psd", a, b));
        }
        let inv = linalg::inverse_psd(self.value(a))?;
        let x = inv.mul_unchecked(self.value(b));
        Ok(self.binary(a, b, x, Op::SolvePsd(a.id, b.id, inv)))
    }

    pub fn inverse_psd(&mut self, a: Var) -> Result<Var> {
        let v = linalg::inverse_psd(self.value(a))?;
        Ok(self.unary(a, v, Op::InversePsd(a.id)))
    }

    /// Upper-triangular `L` with `sym(a) = LᵀL`.
    pub fn cholesky(&mut self, a: Var) -> Result<Var> {
        let v = linalg::cholesky(self.value(a))?;
        Ok(self.unary(a, v, Op::Cholesky(a.id)))
    }

    /// Average or max pooling over activations laid out as `(batch·h·w) × c`.
    pub fn pool(&mut self, a: Var, geom: Pool2d) -> Result<Var> {
        let Pool2d { batch, h, w, window: (k1, k2), stride: (s1, s2), kind } = geom;
        if a.rows != batch * h * w || k1 == 0 || k2 == 0 || s1 == 0 || s2 == 0 || k1 > h || k2 > w {
            return Err(shape_err("pool", format!("{}x{} with {geom:?}", a.rows, a.cols)));
        }
        let (ho, wo) = geom.out_size();
        let c = a.cols;
        let x = self.value(a);
        let mut out = Mat::zeros(batch * ho * wo, c);
        let mut arg = Vec::new();
        if kind == PoolKind::Max {
            arg = vec![0u32; batch * ho * wo * c];
        }
        let inv = 1.0 / (k1 * k2) as f64;
        for b in 0..batch {
            for i in 0..ho {
                for j in 0..wo {
                    let orow = (b * ho + i) * wo + j;
                    for ch in 0..c {
                        let mut acc = if kind == PoolKind::Max { f64::NEG_INFINITY } else { 0.0 };
                        let mut best = 0u32;
                        for di in 0..k1 {
                            for dj in 0..k2 {
                                let r = (b * h + i * s1 + di) * w + j * s2 + dj;
                                let val = x[(r, ch)];
                                match kind {
                                    PoolKind::Average => acc += val,
                                    PoolKind::Max => {
                                        if val > acc {
                                            acc = val;
                                            best = (r * c + ch) as u32;
                                        }
                                    }
                                }
                            }
                        }
                        if kind == PoolKind::Max {
                            arg[orow * c + ch] = best;
                            out[(orow, ch)] = acc;
                        } else {
                            out[(orow, ch)] = acc * inv;
                        }
                    }
                }
            }
        }
        Ok(self.unary(a, out, Op::Pool(a.id, geom, arg)))
    }

    /// Mean softmax cross-entropy of row-wise logits against class labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        if labels.len() != logits.rows {
            return Err(shape_err(
                "softmax_cross_entropy",
                format!("{} labels for {} rows", labels.len(), logits.rows),
            ));
        }
        let z = self.value(logits);
        let k = logits.cols;
        let mut probs = Mat::zeros(logits.rows, k);
        let mut loss = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            if y >= k {
                return Err(shape_err("softmax_cross_entropy", format!("label {y} with {k} classes")));
            }
            let row = z.row_slice(i);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = row.iter().map(|&v| (v - m).exp()).sum();
            for j in 0..k {
                probs[(i, j)] = (row[j] - m).exp() / s;
            }
            loss += s.ln() + m - row[y];
        }
        let n = logits.rows.max(1) as f64;
        let v = Mat::from_vec(1, 1, vec![loss / n]);
        Ok(self.unary(logits, v, Op::SoftmaxCe(logits.id, probs, labels.to_vec())))
    }

    /// Reverse accumulation from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if loss.rows != 1 || loss.cols != 1 {
            return Err(Error::NotScalarLoss { rows: loss.rows, cols: loss.cols });
        }
        let mut grads: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        grads[loss.id] = Some(Mat::filled(1, 1, 1.0));
        for id in (0..=loss.id).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            self.propagate(id, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn acc(&self, grads: &mut [Option<Mat>], id: usize, g: Mat) {
        if !self.nodes[id].needs_grad {
            return;
        }
        match &mut grads[id] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn wants(&self, id: usize) -> bool {
        self.nodes[id].needs_grad
    }

    fn propagate(&self, id: usize, g: &Mat, grads: &mut [Option<Mat>]) {
        let out = &self.nodes[id].value;
        let val = |i: usize| &self.nodes[i].value;
        match &self.nodes[id].op {
            Op::Leaf | Op::Const => {}
            &Op::MatMul(a, b) => {
                if self.wants(a) {
                    self.acc(grads, a, g.mult(val(b)));
                }
                if self.wants(b) {
                    self.acc(grads, b, val(a).tmul(g));
                }
            }
            &Op::Add(a, b) => {
                self.acc(grads, a, g.clone());
                self.acc(grads, b, g.clone());
            }
            &Op::Sub(a, b) => {
                self.acc(grads, a, g.clone());
                self.acc(grads, b, g.scale(-1.0));
            }
            &Op::Hadamard(a, b) => {
                if self.wants(a) {
                    self.acc(grads, a, g.hadamard(val(b)).unwrap());
                }
                if self.wants(b) {
                    self.acc(grads, b, g.hadamard(val(a)).unwrap());
                }
            }
            &Op::Scale(a, s) => self.acc(grads, a, g.scale(s)),
            &Op::AddScalar(a) => self.acc(grads, a, g.clone()),
            &Op::AddRow(a, b) => {
                self.acc(grads, a, g.clone());
                if self.wants(b) {
                    let mut s = Mat::zeros(1, g.cols());
                    if g.cols() > 0 {
                        for row in g.data().chunks(g.cols()) {
                            for (x, y) in s.data_mut().iter_mut().zip(row) {
                                *x += y;
                            }
                        }
                    }
                    self.acc(grads, b, s);
                }
            }
            &Op::RowScale(d, m) => {
                let (dv, mv) = (val(d), val(m));
                if self.wants(d) {
                    let gd: Vec<f64> = (0..mv.rows())
                        .map(|i| linalg::dot(g.row_slice(i), mv.row_slice(i)))
                        .collect();
                    self.acc(grads, d, Mat::column(&gd));
                }
                if self.wants(m) {
                    let mut gm = g.clone();
                    if gm.cols() > 0 {
                        for (row, s) in gm.data_mut().chunks_mut(mv.cols()).zip(dv.data()) {
                            row.iter_mut().for_each(|x| *x *= s);
                        }
                    }
                    self.acc(grads, m, gm);
                }
            }
            &Op::ColScale(m, d) => {
                let (dv, mv) = (val(d), val(m));
                if self.wants(d) {
                    let mut gd = vec![0.0; mv.cols()];
                    for i in 0..mv.rows() {
                        for ((o, x), y) in gd.iter_mut().zip(g.row_slice(i)).zip(mv.row_slice(i)) {
                            *o += x * y;
                        }
                    }
                    self.acc(grads, d, Mat::column(&gd));
                }
                if self.wants(m) {
                    let mut gm = g.clone();
                    if gm.cols() > 0 {
                        for row in gm.data_mut().chunks_mut(mv.cols()) {
                            row.iter_mut().zip(dv.data()).for_each(|(x, s)| *x *= s);
                        }
                    }
                    self.acc(grads, m, gm);
                }
            }
            &Op::Transpose(a) => self.acc(grads, a, g.transpose()),
            &Op::Block(a, r0, c0) => {
                let (r, c) = val(a).shape();
                let mut ga = Mat::zeros(r, c);
                ga.set_block(r0, c0, g);
                self.acc(grads, a, ga);
            }
            Op::Assemble(parts) => {
                for &(r0, c0, p) in parts {
                    if self.wants(p) {
                        let (r, c) = val(p).shape();
                        self.acc(grads, p, g.block(r0, c0, r, c));
                    }
                }
            }
            &Op::Reshape(a) => {
                let (r, c) = val(a).shape();
                self.acc(grads, a, g.clone().reshaped(r, c));
            }
            Op::Gather(a, idx) => {
                let (r, c) = val(*a).shape();
                let mut ga = Mat::zeros(r, c);
                let d = ga.data_mut();
                for (&k, &gv) in idx.iter().zip(g.data()) {
                    if k != ZERO {
                        d[k as usize] += gv;
                    }
                }
                self.acc(grads, *a, ga);
            }
            &Op::DiagFromVec(v) => {
                let (r, c) = val(v).shape();
                self.acc(grads, v, Mat::from_vec(r, c, g.diag()));
            }
            &Op::VecFromDiag(a) => self.acc(grads, a, Mat::from_diag(g.data())),
            &Op::Exp(a) => self.acc(grads, a, g.hadamard(out).unwrap()),
            &Op::Tanh(a) => {
                let d = out.map(|t| 1.0 - t * t);
                self.acc(grads, a, g.hadamard(&d).unwrap());
            }
            &Op::Relu(a) => {
                let d = val(a).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                self.acc(grads, a, g.hadamard(&d).unwrap());
            }
            &Op::Abs(a) => {
                let d = val(a).map(|x| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 });
                self.acc(grads, a, g.hadamard(&d).unwrap());
            }
            &Op::Square(a) => self.acc(grads, a, g.hadamard(&val(a).scale(2.0)).unwrap()),
            &Op::Sqrt(a) => {
                let d = out.map(|s| 0.5 / s);
                self.acc(grads, a, g.hadamard(&d).unwrap());
            }
            &Op::Recip(a) => {
                let d = out.map(|r| -r * r);
                self.acc(grads, a, g.hadamard(&d).unwrap());
            }
            &Op::Sum(a) => {
                let (r, c) = val(a).shape();
                self.acc(grads, a, Mat::filled(r, c, g.data()[0]));
            }
            &Op::Inverse(a) => {
                // d(A⁻¹) = -A⁻¹ dA A⁻¹
                let t = out.tmul(g);
                self.acc(grads, a, t.mult(out).scale(-1.0));
            }
            Op::Solve(a, b, inv) => {
                let gb = inv.tmul(g);
                if self.wants(*a) {
                    self.acc(grads, *a, gb.mult(out).scale(-1.0));
                }
                self.acc(grads, *b, gb);
            }
            Op::SolvePsd(a, b, inv) => {
                let gb = inv.mul_unchecked(g);
                if self.wants(*a) {
                    self.acc(grads, *a, gb.mult(out).scale(-1.0).symmetrized());
                }
                self.acc(grads, *b, gb);
            }
            &Op::InversePsd(a) => {
                let ga = out.mul_unchecked(g).mul_unchecked(out).scale(-1.0).symmetrized();
                self.acc(grads, a, ga);
            }
            &Op::Cholesky(a) => self.acc(grads, a, cholesky_adjoint(out, g)),
            Op::Pool(a, geom, arg) => {
                let (r, c) = val(*a).shape();
                let mut ga = Mat::zeros(r, c);
                match geom.kind {
                    PoolKind::Max => {
                        let d = ga.data_mut();
                        for (&k, &gv) in arg.iter().zip(g.data()) {
                            d[k as usize] += gv;
                        }
                    }
                    PoolKind::Average => {
                        let (ho, wo) = geom.out_size();
                        let (k1, k2) = geom.window;
                        let (s1, s2) = geom.stride;
                        let inv = 1.0 / (k1 * k2) as f64;
                        for b in 0..geom.batch {
                            for i in 0..ho {
                                for j in 0..wo {
                                    let orow = (b * ho + i) * wo + j;
                                    for di in 0..k1 {
                                        for dj in 0..k2 {
                                            let rr = (b * geom.h + i * s1 + di) * geom.w + j * s2 + dj;
                                            for ch in 0..c {
                                                ga[(rr, ch)] += inv * g[(orow, ch)];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::SoftmaxCe(a, probs, labels) => {
                let n = labels.len().max(1) as f64;
                let mut ga = probs.clone();
                for (i, &y) in labels.iter().enumerate() {
                    ga[(i, y)] -= 1.0;
                }
                self.acc(grads, *a, ga.scale(g.data()[0] / n));
            }
        }
    }
}

/// Adjoint of `a ↦ chol(sym(a))` for the upper factor `l` and output adjoint `lbar`.
fn cholesky_adjoint(l: &Mat, lbar: &Mat) -> Mat {
    // with the lower factor M = Lᵀ: Ā = sym(M⁻ᵀ Φ(Mᵀ M̄) M⁻¹), Φ = lower triangle with halved diagonal
    let n = l.rows();
    let mut p = l.mul_unchecked(&lbar.transpose());
    for i in 0..n {
        for j in 0..n {
            if j > i {
                p[(i, j)] = 0.0;
            } else if i == j {
                p[(i, j)] *= 0.5;
            }
        }
    }
    // M⁻ᵀ = L⁻¹ and M⁻¹ = L⁻ᵀ
    let left = linalg::solve_upper(l, &p);
    let s = linalg::solve_upper(l, &left.transpose()).transpose();
    s.symmetrized()
}

/// Gradients indexed by the variables of the tape that produced them.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, zero when unreachable.
    pub fn get(&self, v: Var) -> Mat {
        match self.grads.get(v.id).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => Mat::zeros(v.rows, v.cols),
        }
    }

    pub fn get_ref(&self, v: Var) -> Option<&Mat> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }
}
