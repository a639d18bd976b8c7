//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation eagerly. Parameter leaves borrow their
//! values from a [`ParamStore`]; [`Tape::backward`] walks the tape in reverse
//! and returns the gradient of a scalar loss with respect to every parameter
//! that was read.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{matmul_at_acc, matmul_bt_acc, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    /// `b` is a `1 x c` row or a `1 x 1` scalar broadcast over `a`.
    AddBroadcast(Var, Var),
    Mul(Var, Var),
    /// `col` is `r x 1`, scaling each row of `a`.
    MulCol(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    LnClamped(Var, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    IndexAddCols(Var, Vec<usize>),
    SoftmaxRows(Var),
    Transpose(Var),
    Sum(Var),
    Pick(Var, usize, usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records a computation over parameters from one [`ParamStore`].
pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
    relu_hasher: DefaultHasher,
    relu_at_zero: usize,
    finished: bool,
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            relu_hasher: DefaultHasher::new(),
            relu_at_zero: 0,
            finished: false,
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(id) => self.store.value(id),
            _ => &node.value,
        }
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.value(v).shape()
    }

    /// Hash of the on/off pattern of every ReLU evaluated so far. Two runs
    /// with equal signatures took the same linear piece everywhere.
    pub fn relu_signature(&self) -> u64 {
        self.relu_hasher.finish()
    }

    /// Number of ReLU inputs that were exactly zero.
    pub fn relu_zero_hits(&self) -> usize {
        self.relu_at_zero
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    /// Leaf for a parameter; repeated reads return the same handle.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let v = self.push(Tensor::zeros(0, 0), Op::Param(id));
        self.param_vars.insert(id, v);
        v
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::Shape {
            op,
            lhs: self.shape(a),
            rhs: self.shape(b),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(self.shape_err("add", a, b));
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Adds a `1 x c` row (or a `1 x 1` scalar) to every row of `a`.
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let [r, c] = self.shape(a);
        let bs = self.shape(b);
        let mut out = self.value(a).clone();
        if bs == [1, c] {
            let row = self.value(b).data().to_vec();
            for i in 0..r {
                for (o, x) in out.row_slice_mut(i).iter_mut().zip(&row) {
                    *o += x;
                }
            }
        } else if bs == [1, 1] {
            let s = self.value(b).item();
            out.data_mut().iter_mut().for_each(|o| *o += s);
        } else {
            return Err(self.shape_err("add_broadcast", a, b));
        }
        Ok(self.push(out, Op::AddBroadcast(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(self.shape_err("mul", a, b));
        }
        let bv = self.value(b).data().to_vec();
        let mut out = self.value(a).clone();
        for (o, x) in out.data_mut().iter_mut().zip(&bv) {
            *o *= x;
        }
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Scales row `i` of `a` by `col[i]`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let [r, _] = self.shape(a);
        if self.shape(col) != [r, 1] {
            return Err(self.shape_err("mul_col", a, col));
        }
        let cv = self.value(col).data().to_vec();
        let mut out = self.value(a).clone();
        for (i, s) in cv.iter().enumerate() {
            out.row_slice_mut(i).iter_mut().for_each(|o| *o *= s);
        }
        Ok(self.push(out, Op::MulCol(a, col)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| s * x);
        self.push(out, Op::Affine(a, s))
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| 1.0 - x);
        self.push(out, Op::Affine(a, -1.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        let input = &self.nodes[a.0];
        let input = match input.op {
            Op::Param(id) => self.store.value(id),
            _ => &input.value,
        };
        for &x in input.data() {
            (x > 0.0).hash(&mut self.relu_hasher);
            if x == 0.0 {
                self.relu_at_zero += 1;
            }
        }
        self.push(out, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a))
    }

    /// `ln(max(a, floor))`; the gradient is zero where the floor applies.
    pub fn ln_clamped(&mut self, a: Var, floor: f64) -> Var {
        let out = self.value(a).map(|x| x.max(floor).ln());
        self.push(out, Op::LnClamped(a, floor))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::contract("concat_cols of nothing"));
        };
        let r = self.shape(first)[0];
        let mut total = 0;
        for &p in parts {
            if self.shape(p)[0] != r {
                return Err(self.shape_err("concat_cols", first, p));
            }
            total += self.shape(p)[1];
        }
        let mut out = Tensor::zeros(r, total);
        for i in 0..r {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row_slice(i);
                out.row_slice_mut(i)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::contract("concat_rows of nothing"));
        };
        let c = self.shape(first)[1];
        let mut data = Vec::new();
        for &p in parts {
            if self.shape(p)[1] != c {
                return Err(self.shape_err("concat_rows", first, p));
            }
            data.extend_from_slice(self.value(p).data());
        }
        let rows = data.len() / c.max(1);
        let out = Tensor::from_vec(rows, c, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let [r, c] = self.shape(a);
        if start + len > c {
            return Err(Error::contract(format!(
                "slice_cols {start}..{} out of {c} columns",
                start + len
            )));
        }
        let mut out = Tensor::zeros(r, len);
        for i in 0..r {
            out.row_slice_mut(i)
                .copy_from_slice(&self.value(a).row_slice(i)[start..start + len]);
        }
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    /// Row `i` of the output is row `idx[i]` of `a`.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let [r, c] = self.shape(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(Error::contract(format!("gather_rows index {bad} >= {r}")));
        }
        let mut out = Tensor::zeros(idx.len(), c);
        for (i, &src) in idx.iter().enumerate() {
            out.row_slice_mut(i).copy_from_slice(self.value(a).row_slice(src));
        }
        Ok(self.push(out, Op::GatherRows(a, idx.to_vec())))
    }

    /// Output has `n` rows; row `i` of `a` is added into row `idx[i]`.
    pub fn scatter_add_rows(&mut self, a: Var, idx: &[usize], n: usize) -> Result<Var> {
        let [r, c] = self.shape(a);
        if idx.len() != r {
            return Err(Error::contract(format!(
                "scatter_add_rows: {} indices for {r} rows",
                idx.len()
            )));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::contract(format!("scatter_add_rows index {bad} >= {n}")));
        }
        let mut out = Tensor::zeros(n, c);
        for (i, &dst) in idx.iter().enumerate() {
            let src = self.value(a).row_slice(i).to_vec();
            for (o, x) in out.row_slice_mut(dst).iter_mut().zip(&src) {
                *o += x;
            }
        }
        Ok(self.push(out, Op::ScatterAddRows(a, idx.to_vec())))
    }

    /// Output has `width` columns; column `j` of `a` is added into column
    /// `idx[j]`.
    pub fn index_add_cols(&mut self, a: Var, idx: &[usize], width: usize) -> Result<Var> {
        let [r, c] = self.shape(a);
        if idx.len() != c {
            return Err(Error::contract(format!(
                "index_add_cols: {} indices for {c} columns",
                idx.len()
            )));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= width) {
            return Err(Error::contract(format!("index_add_cols index {bad} >= {width}")));
        }
        let mut out = Tensor::zeros(r, width);
        for i in 0..r {
            let src = self.value(a).row_slice(i).to_vec();
            let dst = out.row_slice_mut(i);
            for (j, &k) in idx.iter().enumerate() {
                dst[k] += src[j];
            }
        }
        Ok(self.push(out, Op::IndexAddCols(a, idx.to_vec())))
    }

    /// Row-wise softmax. Entries of `a` equal to `-inf` get exactly zero
    /// probability.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let [r, _] = self.shape(a);
        let mut out = self.value(a).clone();
        for i in 0..r {
            softmax_in_place(out.row_slice_mut(i))?;
        }
        Ok(self.push(out, Op::SoftmaxRows(a)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn pick(&mut self, a: Var, r: usize, c: usize) -> Result<Var> {
        let [rows, cols] = self.shape(a);
        if r >= rows || c >= cols {
            return Err(Error::contract(format!(
                "pick ({r}, {c}) out of [{rows}, {cols}]"
            )));
        }
        let v = self.value(a).get(r, c);
        Ok(self.push(Tensor::scalar(v), Op::Pick(a, r, c)))
    }

    /// Sums scalars.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let Some((&first, rest)) = terms.split_first() else {
            return Ok(self.constant(Tensor::scalar(0.0)));
        };
        let mut acc = first;
        for &t in rest {
            acc = self.add(acc, t)?;
        }
        Ok(acc)
    }

    /// `x · W + b` for a row batch `x`.
    pub fn linear(&mut self, x: Var, w: ParamId, b: Option<ParamId>) -> Result<Var> {
        let wv = self.param(w);
        let y = self.matmul(x, wv)?;
        match b {
            Some(b) => {
                let bv = self.param(b);
                self.add_broadcast(y, bv)
            }
            None => Ok(y),
        }
    }

    /// Reverse pass from a scalar `loss`. May be called once per tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.finished {
            return Err(Error::contract("backward called twice on the same tape"));
        }
        if self.shape(loss) != [1, 1] {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.finished = true;

        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => out.entries.push((*id, g)),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = slot(&mut grads, *a, av.shape());
                    matmul_bt_acc(&g, bv, ga);
                    let gb = slot(&mut grads, *b, bv.shape());
                    matmul_at_acc(av, &g, gb);
                }
                Op::Add(a, b) => {
                    slot(&mut grads, *a, g.shape()).add_assign(&g);
                    slot(&mut grads, *b, g.shape()).add_assign(&g);
                }
                Op::AddBroadcast(a, b) => {
                    slot(&mut grads, *a, g.shape()).add_assign(&g);
                    let bs = self.shape(*b);
                    let gb = slot(&mut grads, *b, bs);
                    if bs == [1, 1] {
                        gb.data_mut()[0] += g.sum();
                    } else {
                        for i in 0..g.rows() {
                            for (o, x) in gb.data_mut().iter_mut().zip(g.row_slice(i)) {
                                *o += x;
                            }
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = slot(&mut grads, *a, av.shape());
                    for ((o, gx), bx) in ga.data_mut().iter_mut().zip(g.data()).zip(bv.data()) {
                        *o += gx * bx;
                    }
                    let gb = slot(&mut grads, *b, bv.shape());
                    for ((o, gx), ax) in gb.data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                        *o += gx * ax;
                    }
                }
                Op::MulCol(a, col) => {
                    let (av, cv) = (self.value(*a), self.value(*col));
                    let ga = slot(&mut grads, *a, av.shape());
                    for i in 0..g.rows() {
                        let s = cv.data()[i];
                        for (o, gx) in ga.row_slice_mut(i).iter_mut().zip(g.row_slice(i)) {
                            *o += gx * s;
                        }
                    }
                    let gc = slot(&mut grads, *col, cv.shape());
                    for i in 0..g.rows() {
                        let dot: f64 = g.row_slice(i).iter().zip(av.row_slice(i)).map(|(x, y)| x * y).sum();
                        gc.data_mut()[i] += dot;
                    }
                }
                Op::Affine(a, s) => {
                    let ga = slot(&mut grads, *a, g.shape());
                    for (o, gx) in ga.data_mut().iter_mut().zip(g.data()) {
                        *o += s * gx;
                    }
                }
                Op::Sigmoid(a) => unary(&mut grads, *a, &g, &node.value, |y| y * (1.0 - y)),
                Op::Tanh(a) => unary(&mut grads, *a, &g, &node.value, |y| 1.0 - y * y),
                Op::Exp(a) => unary(&mut grads, *a, &g, &node.value, |y| y),
                Op::Relu(a) => {
                    let x = self.value(*a);
                    unary(&mut grads, *a, &g, x, |x| if x > 0.0 { 1.0 } else { 0.0 })
                }
                Op::LnClamped(a, floor) => {
                    let x = self.value(*a);
                    let floor = *floor;
                    unary(&mut grads, *a, &g, x, |x| if x > floor { 1.0 / x } else { 0.0 })
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let ps = self.shape(p);
                        let gp = slot(&mut grads, p, ps);
                        for i in 0..g.rows() {
                            let src = &g.row_slice(i)[off..off + ps[1]];
                            for (o, x) in gp.row_slice_mut(i).iter_mut().zip(src) {
                                *o += x;
                            }
                        }
                        off += ps[1];
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let ps = self.shape(p);
                        let n = ps[0] * ps[1];
                        let gp = slot(&mut grads, p, ps);
                        for (o, x) in gp.data_mut().iter_mut().zip(&g.data()[off..off + n]) {
                            *o += x;
                        }
                        off += n;
                    }
                }
                Op::SliceCols(a, start) => {
                    let gp = slot(&mut grads, *a, self.shape(*a));
                    for i in 0..g.rows() {
                        let dst = &mut gp.row_slice_mut(i)[*start..*start + g.cols()];
                        for (o, x) in dst.iter_mut().zip(g.row_slice(i)) {
                            *o += x;
                        }
                    }
                }
                Op::GatherRows(a, idx) => {
                    let ga = slot(&mut grads, *a, self.shape(*a));
                    for (i, &src) in idx.iter().enumerate() {
                        for (o, x) in ga.row_slice_mut(src).iter_mut().zip(g.row_slice(i)) {
                            *o += x;
                        }
                    }
                }
                Op::ScatterAddRows(a, idx) => {
                    let ga = slot(&mut grads, *a, self.shape(*a));
                    for (i, &dst) in idx.iter().enumerate() {
                        for (o, x) in ga.row_slice_mut(i).iter_mut().zip(g.row_slice(dst)) {
                            *o += x;
                        }
                    }
                }
                Op::IndexAddCols(a, idx) => {
                    let ga = slot(&mut grads, *a, self.shape(*a));
                    for i in 0..g.rows() {
                        let gr = g.row_slice(i).to_vec();
                        let dst = ga.row_slice_mut(i);
                        for (j, &k) in idx.iter().enumerate() {
                            dst[j] += gr[k];
                        }
                    }
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let ga = slot(&mut grads, *a, y.shape());
                    for i in 0..y.rows() {
                        let (yr, gr) = (y.row_slice(i), g.row_slice(i));
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for ((o, p), q) in ga.row_slice_mut(i).iter_mut().zip(yr).zip(gr) {
                            *o += p * (q - dot);
                        }
                    }
                }
                Op::Transpose(a) => {
                    let gt = g.transpose();
                    slot(&mut grads, *a, gt.shape()).add_assign(&gt);
                }
                Op::Sum(a) => {
                    let s = g.item();
                    let ga = slot(&mut grads, *a, self.shape(*a));
                    ga.data_mut().iter_mut().for_each(|o| *o += s);
                }
                Op::Pick(a, r, c) => {
                    let ga = slot(&mut grads, *a, self.shape(*a));
                    let cols = ga.cols();
                    ga.data_mut()[r * cols + c] += g.item();
                }
            }
        }
        out.entries.sort_by_key(|(id, _)| *id);
        Ok(out)
    }
}

fn slot(grads: &mut [Option<Tensor>], v: Var, shape: [usize; 2]) -> &mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape[0], shape[1]))
}

/// Elementwise chain rule; `deriv` maps each entry of `values` (the op's
/// input or output, whichever the derivative is expressed in) to the local
/// slope.
fn unary(
    grads: &mut [Option<Tensor>],
    a: Var,
    g: &Tensor,
    values: &Tensor,
    deriv: impl Fn(f64) -> f64,
) {
    let ga = slot(grads, a, g.shape());
    for ((o, gx), v) in ga.data_mut().iter_mut().zip(g.data()).zip(values.data()) {
        *o += gx * deriv(*v);
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax over a slice. `-inf` entries map to 0; a slice
/// with no finite entry is an error.
pub fn softmax_in_place(row: &mut [f64]) -> Result<()> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::contract("softmax over a row with no finite entry"));
    }
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
    Ok(())
}
