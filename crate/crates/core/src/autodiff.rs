//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] owns every value computed in a forward pass. Operations
//! return [`Var`] handles; [`Tape::backward`] walks the record in reverse
//! and accumulates `∂loss/∂leaf` into each leaf that requires a gradient.
//! Intermediate gradients are not kept, so calling `backward` twice without
//! [`Tape::zero_grad`] simply doubles the leaf gradients.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::SeededRng;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    Relu(Var),
    Scale(Var, f64),
    ConcatRows(Vec<Var>),
    SliceRows { src: Var, start: usize },
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    Abs(Var),
    AddBias(Var, Var),
    RowContract { field: Var, control: Var },
    SymNormalize(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    grad: Option<Matrix>,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, lhs: &Matrix, rhs: &Matrix) -> Error {
    Error::Shape { op, lhs: lhs.shape(), rhs: rhs.shape() }
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

    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> Var {
        let grad = requires_grad.then(|| Matrix::zeros(value.rows(), value.cols()));
        self.nodes.push(Node { value, grad, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.as_slice()[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf (zeros if it never received one).
    pub fn grad(&self, v: Var) -> Matrix {
        let n = &self.nodes[v.0];
        n.grad.clone().unwrap_or_else(|| Matrix::zeros(n.value.rows(), n.value.cols()))
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            if let Some(g) = &mut n.grad {
                g.fill(0.0);
            }
        }
    }

    fn push(&mut self, value: Matrix, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node { value, grad: None, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err(op, x, y));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.rows() {
            return Err(shape_err("matmul", x, y));
        }
        let v = x.matmul(y);
        Ok(self.push(v, Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a), &[a])
    }

    /// `max(x, 0)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(v, Op::Relu(a), &[a])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| s * x);
        self.push(v, Op::Scale(a, s), &[a])
    }

    /// Stacks inputs vertically; all must share a column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::arg("concat_rows: no inputs"))?;
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            if m.cols() != cols {
                return Err(shape_err("concat_rows", self.value(*first), m));
            }
            rows += m.rows();
            data.extend_from_slice(m.as_slice());
        }
        let v = Matrix::from_vec(rows, cols, data);
        Ok(self.push(v, Op::ConcatRows(parts.to_vec()), parts))
    }

    /// Rows `[start, start + len)`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let m = self.value(a);
        if start + len > m.rows() {
            return Err(Error::Shape { op: "slice_rows", lhs: m.shape(), rhs: (start + len, m.cols()) });
        }
        let c = m.cols();
        let v = Matrix::from_vec(len, c, m.as_slice()[start * c..(start + len) * c].to_vec());
        Ok(self.push(v, Op::SliceRows { src: a, start }, &[a]))
    }

    /// Row-major reinterpretation with a new shape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let m = self.value(a);
        if m.len() != rows * cols {
            return Err(Error::Shape { op: "reshape", lhs: m.shape(), rhs: (rows, cols) });
        }
        let v = m.clone().reshaped(rows, cols);
        Ok(self.push(v, Op::Reshape(a), &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Matrix::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let v = Matrix::scalar(m.sum() / m.len().max(1) as f64);
        self.push(v, Op::Mean(a), &[a])
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::abs);
        self.push(v, Op::Abs(a), &[a])
    }

    /// `x + 1·bias` for an `R × C` input and a `1 × C` bias.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, b) = (self.value(x), self.value(bias));
        if b.rows() != 1 || b.cols() != m.cols() {
            return Err(shape_err("add_bias", m, b));
        }
        let mut v = m.clone();
        for r in 0..v.rows() {
            for (o, &bb) in v.row_mut(r).iter_mut().zip(b.as_slice()) {
                *o += bb;
            }
        }
        Ok(self.push(v, Op::AddBias(x, bias), &[x, bias]))
    }

    /// Row-wise matrix-vector product.
    ///
    /// `field` is `R × (O·I)`, read per row as an `O × I` matrix in
    /// row-major order; `control` is `R × I`. Returns `R × O` with
    /// `out[r, o] = Σ_c field[r, o·I + c] · control[r, c]`.
    pub fn row_contract(&mut self, field: Var, control: Var) -> Result<Var> {
        let (f, u) = (self.value(field), self.value(control));
        let inner = u.cols();
        if f.rows() != u.rows() || inner == 0 || f.cols() % inner != 0 {
            return Err(shape_err("row_contract", f, u));
        }
        let out_dim = f.cols() / inner;
        let mut v = Matrix::zeros(f.rows(), out_dim);
        for r in 0..f.rows() {
            let fr = f.row(r);
            let ur = u.row(r);
            for (o, out) in v.row_mut(r).iter_mut().enumerate() {
                *out = crate::matrix::dot(&fr[o * inner..(o + 1) * inner], ur);
            }
        }
        Ok(self.push(v, Op::RowContract { field, control }, &[field, control]))
    }

    /// `D^{-1/2} A D^{-1/2}` with `D = diag(row sums of A)`. Row sums must
    /// be positive.
    pub fn sym_normalize(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        if m.rows() != m.cols() {
            return Err(shape_err("sym_normalize", m, m));
        }
        let n = m.rows();
        let inv_sqrt = degree_inv_sqrt(m)?;
        let mut v = m.clone();
        for i in 0..n {
            for j in 0..n {
                v[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
            }
        }
        Ok(self.push(v, Op::SymNormalize(a), &[a]))
    }

    /// Accumulates `∂loss/∂leaf` into every leaf that requires a gradient.
    /// `loss` must be `1 × 1`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::arg(format!("backward: loss must be 1x1, got {shape:?}")));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                if let Some(acc) = &mut self.nodes[id].grad {
                    acc.add_scaled(1.0, &g);
                }
                continue;
            }
            for (input, contribution) in self.local_grads(id, &g) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_scaled(1.0, &contribution),
                    slot @ None => *slot = Some(contribution),
                }
            }
        }
        Ok(())
    }

    fn local_grads(&self, id: usize, g: &Matrix) -> Vec<(Var, Matrix)> {
        let val = |v: Var| &self.nodes[v.0].value;
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        match &self.nodes[id].op {
            Op::Leaf => Vec::new(),
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|x| -x))],
            Op::Mul(a, b) => {
                let mut out = Vec::with_capacity(2);
                if needs(*a) {
                    out.push((*a, g.zip_map(val(*b), |x, y| x * y)));
                }
                if needs(*b) {
                    out.push((*b, g.zip_map(val(*a), |x, y| x * y)));
                }
                out
            }
            Op::MatMul(a, b) => {
                let mut out = Vec::with_capacity(2);
                if needs(*a) {
                    out.push((*a, g.matmul_t(val(*b))));
                }
                if needs(*b) {
                    out.push((*b, val(*a).t_matmul(g)));
                }
                out
            }
            Op::Transpose(a) => vec![(*a, g.transpose())],
            Op::Relu(a) => vec![(*a, g.zip_map(val(*a), |gx, x| if x > 0.0 { gx } else { 0.0 }))],
            Op::Scale(a, s) => vec![(*a, g.map(|x| s * x))],
            Op::ConcatRows(parts) => {
                let c = g.cols();
                let mut offset = 0;
                parts
                    .iter()
                    .map(|&p| {
                        let r = val(p).rows();
                        let piece = Matrix::from_vec(r, c, g.as_slice()[offset * c..(offset + r) * c].to_vec());
                        offset += r;
                        (p, piece)
                    })
                    .collect()
            }
            Op::SliceRows { src, start } => {
                let s = val(*src);
                let mut full = Matrix::zeros(s.rows(), s.cols());
                let c = s.cols();
                full.as_mut_slice()[start * c..start * c + g.len()].copy_from_slice(g.as_slice());
                vec![(*src, full)]
            }
            Op::Reshape(a) => {
                let (r, c) = val(*a).shape();
                vec![(*a, g.clone().reshaped(r, c))]
            }
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                vec![(*a, Matrix::filled(r, c, g.as_slice()[0]))]
            }
            Op::Mean(a) => {
                let (r, c) = val(*a).shape();
                let n = (r * c).max(1) as f64;
                vec![(*a, Matrix::filled(r, c, g.as_slice()[0] / n))]
            }
            Op::Abs(a) => vec![(*a, g.zip_map(val(*a), |gx, x| gx * signum(x)))],
            Op::AddBias(x, b) => {
                let mut gb = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (acc, &v) in gb.as_mut_slice().iter_mut().zip(g.row(r)) {
                        *acc += v;
                    }
                }
                vec![(*x, g.clone()), (*b, gb)]
            }
            Op::RowContract { field, control } => {
                let (f, u) = (val(*field), val(*control));
                let inner = u.cols();
                let mut out = Vec::with_capacity(2);
                if needs(*field) {
                    let mut gf = Matrix::zeros(f.rows(), f.cols());
                    for r in 0..f.rows() {
                        let ur = u.row(r);
                        let gr = g.row(r);
                        let gfr = gf.row_mut(r);
                        for (o, &go) in gr.iter().enumerate() {
                            for (dst, &uc) in gfr[o * inner..(o + 1) * inner].iter_mut().zip(ur) {
                                *dst = go * uc;
                            }
                        }
                    }
                    out.push((*field, gf));
                }
                if needs(*control) {
                    let mut gu = Matrix::zeros(u.rows(), inner);
                    for r in 0..f.rows() {
                        let fr = f.row(r);
                        let gr = g.row(r);
                        let gur = gu.row_mut(r);
                        for (o, &go) in gr.iter().enumerate() {
                            for (dst, &fv) in gur.iter_mut().zip(&fr[o * inner..(o + 1) * inner]) {
                                *dst += go * fv;
                            }
                        }
                    }
                    out.push((*control, gu));
                }
                out
            }
            Op::SymNormalize(a) => {
                let m = val(*a);
                let n = m.rows();
                let s = degree_inv_sqrt(m).expect("checked in forward");
                // out_ij = s_i m_ij s_j, s_k = d_k^{-1/2}, d_k = Σ_l m_kl
                let mut ga = Matrix::zeros(n, n);
                let mut g_s = vec![0.0; n];
                for i in 0..n {
                    for j in 0..n {
                        let gij = g[(i, j)];
                        ga[(i, j)] = gij * s[i] * s[j];
                        g_s[i] += gij * m[(i, j)] * s[j];
                        g_s[j] += gij * s[i] * m[(i, j)];
                    }
                }
                for k in 0..n {
                    // ds_k/dd_k = -1/2 d_k^{-3/2} = -1/2 s_k^3
                    let g_d = g_s[k] * (-0.5 * s[k] * s[k] * s[k]);
                    for l in 0..n {
                        ga[(k, l)] += g_d;
                    }
                }
                vec![(*a, ga)]
            }
        }
    }
}

fn signum(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn degree_inv_sqrt(m: &Matrix) -> Result<Vec<f64>> {
    (0..m.rows())
        .map(|i| {
            let d: f64 = m.row(i).iter().sum();
            if d > 0.0 {
                Ok(1.0 / libm::sqrt(d))
            } else {
                Err(Error::arg("sym_normalize: nonpositive degree"))
            }
        })
        .collect()
}

/// Outcome of a finite-difference gradient comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`
    /// over the compared coordinates.
    pub max_rel_error: f64,
    /// Number of coordinates compared.
    pub checked: usize,
}

/// Compares tape gradients of `f` against central differences.
///
/// `f` builds a scalar loss on the given tape from leaf handles of
/// `params` (in order). Up to `per_param` coordinates are sampled from
/// each parameter (all of them when `per_param >= len`). Coordinates whose
/// analytic and numeric gradients are both below `min_magnitude` in
/// absolute value are skipped.
pub fn grad_check<F>(
    mut f: F,
    params: &[Matrix],
    eps: f64,
    per_param: usize,
    min_magnitude: f64,
    seed: u64,
) -> Result<GradCheck>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Matrix> = vars.iter().map(|&v| tape.grad(v)).collect();
    drop(tape);

    let mut eval = |ps: &[Matrix]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = ps.iter().map(|p| t.constant(p.clone())).collect();
        let l = f(&mut t, &vs)?;
        Ok(t.scalar(l))
    };

    let mut rng = SeededRng::new(seed);
    let mut work: Vec<Matrix> = params.to_vec();
    let mut report = GradCheck { max_rel_error: 0.0, checked: 0 };
    for (p, grad) in analytic.iter().enumerate() {
        let len = work[p].len();
        let coords: Vec<usize> =
            if per_param >= len { (0..len).collect() } else { (0..per_param).map(|_| rng.below(len)).collect() };
        for idx in coords {
            let orig = work[p].as_slice()[idx];
            work[p].as_mut_slice()[idx] = orig + eps;
            let plus = eval(&work)?;
            work[p].as_mut_slice()[idx] = orig - eps;
            let minus = eval(&work)?;
            work[p].as_mut_slice()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad.as_slice()[idx];
            if a.abs() <= min_magnitude && numeric.abs() <= min_magnitude {
                continue;
            }
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}
