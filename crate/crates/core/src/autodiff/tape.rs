//! Define-by-run tape for reverse-mode differentiation.
//!
//! Every operation appends a node holding its output value and whatever its
//! adjoint rule needs. Nodes are appended after their operands, so walking
//! the tape backwards from the loss is a valid reverse topological order and
//! each node is visited exactly once.

use std::collections::BTreeMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise function paired with its derivative, for custom elementwise ops.
pub type ScalarFn = fn(f64) -> f64;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Square(Var),
    Log(Var),
    Sigmoid(Var),
    Relu(Var),
    Scale(Var, f64),
    Offset(Var),
    Clamp(Var, f64, f64),
    Detach,
    Map(Var, ScalarFn),
    ScaleRows(Var, Var),
    Sum(Var, Option<usize>),
    Mean(Var, Option<usize>),
    Concat(Vec<Var>, usize),
    IndexSelect(Var, usize, Vec<usize>),
    Reshape(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    param: Option<String>,
}

/// Recorded forward computation.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients keyed by parameter id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    by_id: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: &str) -> Option<&Tensor> {
        self.by_id.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.by_id.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

/// Splits `shape` around `axis` into (outer, axis length, inner) extents.
fn axis_extents(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut out: Vec<usize> = shape
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != axis)
        .map(|(_, &d)| d)
        .collect();
    if out.is_empty() {
        out.push(1);
    }
    out
}

/// `out += op(a) · op(b)` for row-major buffers with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    out: &mut [f64],
    beta: f64,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && out.len() >= m * n);
    // SAFETY: the assert above bounds every index dgemm derives from
    // (m, k, n) and the strides, which describe dense row- or column-major
    // layouts of exactly those buffers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            op,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Records a constant input. Constants receive no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Records a trainable input under `id`.
    pub fn param(&mut self, id: &str, value: &Tensor) -> Var {
        let v = self.push(value.clone(), Op::Leaf);
        self.nodes[v.0].param = Some(id.to_owned());
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (&[m, k], &[k2, n]) = (sa, sb) else {
            return Err(Error::shape(
                "matmul",
                format!("operands must be matrices, got {sa:?} and {sb:?}"),
            ));
        };
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("inner dimensions differ: [{m}×{k}] · [{k2}×{n}]"),
            ));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            (k, 1),
            self.value(b).data(),
            (n, 1),
            &mut out,
            0.0,
        );
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b)))
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(
                name,
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        Ok(self.push(value, op))
    }

    /// Elementwise sum. A rank-1 right operand whose length equals the last
    /// dimension of the left operand is added to every row (bias add); no
    /// other broadcasting is accepted.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb && sb.len() == 1 && sa.len() >= 2 && sa[sa.len() - 1] == sb[0] {
            let n = sb[0];
            let bias = self.value(b).data().to_vec();
            let mut out = self.value(a).clone();
            for row in out.data_mut().chunks_mut(n) {
                for (x, b) in row.iter_mut().zip(&bias) {
                    *x += b;
                }
            }
            return Ok(self.push(out, Op::AddBias(a, b)));
        }
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    /// Natural log. Every input must be strictly positive.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if let Some(bad) = t.data().iter().find(|&&x| x.is_nan() || x <= 0.0) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("non-positive input {bad}"),
            });
        }
        let v = t.map(f64::ln);
        Ok(self.push(v, Op::Log(a)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(v, Op::Relu(a))
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::Scale(a, c))
    }

    /// Adds a constant to every element.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::Offset(a))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where the clamp is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi))
    }

    /// Identity in the forward pass; blocks gradient flow to `a`.
    pub fn detach(&mut self, a: Var) -> Var {
        let v = self.value(a).clone();
        self.push(v, Op::Detach)
    }

    /// Custom pointwise op `f` whose adjoint multiplies by `df`.
    pub fn map(&mut self, a: Var, f: ScalarFn, df: ScalarFn) -> Var {
        let v = self.value(a).map(f);
        self.push(v, Op::Map(a, df))
    }

    /// Scales row `i` of `x: [m×n]` by `s[i]`, where `s` is `[m]` or `[m×1]`.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let (m, n) = self.value(x).dims2("scale_rows")?;
        let ts = self.value(s);
        if ts.len() != m || !(ts.rank() == 1 || ts.shape() == [m, 1]) {
            return Err(Error::shape(
                "scale_rows",
                format!("{:?} cannot scale rows of [{m}×{n}]", ts.shape()),
            ));
        }
        let scales = ts.data().to_vec();
        let mut out = self.value(x).clone();
        for (row, c) in out.data_mut().chunks_mut(n).zip(&scales) {
            row.iter_mut().for_each(|v| *v *= c);
        }
        Ok(self.push(out, Op::ScaleRows(x, s)))
    }

    fn check_axis(&self, op: &'static str, a: Var, axis: Option<usize>) -> Result<()> {
        match axis {
            Some(ax) if ax >= self.value(a).rank() => Err(Error::shape(
                op,
                format!("axis {ax} out of bounds for shape {:?}", self.shape(a)),
            )),
            _ => Ok(()),
        }
    }

    fn reduce_sum(t: &Tensor, axis: Option<usize>) -> Tensor {
        match axis {
            None => Tensor::scalar(t.sum()),
            Some(ax) => {
                let (outer, len, inner) = axis_extents(t.shape(), ax);
                let mut out = vec![0.0; outer * inner];
                let src = t.data();
                for o in 0..outer {
                    for l in 0..len {
                        let base = (o * len + l) * inner;
                        let dst = &mut out[o * inner..(o + 1) * inner];
                        for (d, s) in dst.iter_mut().zip(&src[base..base + inner]) {
                            *d += s;
                        }
                    }
                }
                Tensor::from_parts(reduced_shape(t.shape(), ax), out)
            }
        }
    }

    /// Sum of all elements, or along `axis` (which is removed from the shape).
    pub fn sum(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        self.check_axis("sum", a, axis)?;
        let v = Self::reduce_sum(self.value(a), axis);
        Ok(self.push(v, Op::Sum(a, axis)))
    }

    pub fn mean(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        self.check_axis("mean", a, axis)?;
        let t = self.value(a);
        let count = axis.map_or(t.len(), |ax| t.shape()[ax]);
        let v = Self::reduce_sum(t, axis).map(|x| x / count as f64);
        Ok(self.push(v, Op::Mean(a, axis)))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no operands"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", format!("axis {axis} out of bounds for {base:?}")));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let agree = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !agree {
                return Err(Error::shape(
                    "concat",
                    format!("{s:?} does not match {base:?} off axis {axis}"),
                ));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let t = self.value(p);
                let chunk = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        Ok(self.push(Tensor::from_parts(shape, out), Op::Concat(parts.to_vec(), axis)))
    }

    /// Selects slices along `axis`; the adjoint scatter-adds, so repeated
    /// indices accumulate.
    pub fn index_select(&mut self, x: Var, axis: usize, indices: &[usize]) -> Result<Var> {
        self.select_named(x, axis, indices, "index_select")
    }

    fn select_named(&mut self, x: Var, axis: usize, indices: &[usize], what: &str) -> Result<Var> {
        let t = self.value(x);
        if axis >= t.rank() {
            return Err(Error::shape(
                "index_select",
                format!("axis {axis} out of bounds for {:?}", t.shape()),
            ));
        }
        if indices.is_empty() {
            return Err(Error::shape("index_select", "empty index list"));
        }
        let (outer, len, inner) = axis_extents(t.shape(), axis);
        if let Some(&bad) = indices.iter().find(|&&i| i >= len) {
            return Err(Error::Index {
                what: what.to_owned(),
                index: bad,
                size: len,
            });
        }
        let src = t.data();
        let mut out = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &i in indices {
                let start = (o * len + i) * inner;
                out.extend_from_slice(&src[start..start + inner]);
            }
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = indices.len();
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::IndexSelect(x, axis, indices.to_vec()),
        ))
    }

    /// Embedding lookup: rows of `table: [V×d]`. `what` names the table in
    /// out-of-range errors.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize], what: &str) -> Result<Var> {
        self.value(table).dims2("gather_rows")?;
        self.select_named(table, 0, indices, what)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).reshaped(shape)?;
        Ok(self.push(v, Op::Reshape(x)))
    }

    /// Reverse pass from a scalar `loss`. Every parameter recorded on the tape
    /// receives an entry; parameters the loss does not depend on get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", lv.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::ones(lv.shape()));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.param.is_some() {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }

        let by_id = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, node)| {
                let id = node.param.as_ref()?;
                let g = grads
                    .get_mut(i)
                    .and_then(Option::take)
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                Some((id.clone(), g))
            })
            .collect();
        Ok(Gradients { by_id })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let acc = |grads: &mut [Option<Tensor>], v: Var, t: Tensor| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot @ None => *slot = Some(t),
        };
        let val = |v: Var| &self.nodes[v.0].value;
        let gd = g.data();
        let zip_with = |t: &Tensor, f: &dyn Fn(f64, f64) -> f64| {
            Tensor::from_parts(
                t.shape().to_vec(),
                t.data().iter().zip(gd).map(|(&x, &g)| f(x, g)).collect(),
            )
        };

        match &node.op {
            Op::Leaf | Op::Detach => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                // dA = G · Bᵀ
                let mut da = vec![0.0; m * k];
                gemm(m, n, k, gd, (n, 1), tb.data(), (1, n), &mut da, 0.0);
                // dB = Aᵀ · G
                let mut db = vec![0.0; k * n];
                gemm(k, m, n, ta.data(), (1, k), gd, (n, 1), &mut db, 0.0);
                acc(grads, *a, Tensor::from_parts(vec![m, k], da));
                acc(grads, *b, Tensor::from_parts(vec![k, n], db));
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::AddBias(a, b) => {
                let n = val(*b).len();
                let mut db = vec![0.0; n];
                for row in gd.chunks(n) {
                    for (d, x) in db.iter_mut().zip(row) {
                        *d += x;
                    }
                }
                acc(grads, *a, g.clone());
                acc(grads, *b, Tensor::from_parts(vec![n], db));
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                acc(grads, *a, zip_with(tb, &|y, g| y * g));
                acc(grads, *b, zip_with(ta, &|x, g| x * g));
            }
            Op::Square(a) => acc(grads, *a, zip_with(val(*a), &|x, g| 2.0 * x * g)),
            Op::Log(a) => acc(grads, *a, zip_with(val(*a), &|x, g| g / x)),
            Op::Sigmoid(a) => acc(grads, *a, zip_with(&node.value, &|s, g| g * s * (1.0 - s))),
            Op::Relu(a) => acc(
                grads,
                *a,
                zip_with(val(*a), &|x, g| if x > 0.0 { g } else { 0.0 }),
            ),
            Op::Scale(a, c) => acc(grads, *a, g.map(|x| x * c)),
            Op::Offset(a) => acc(grads, *a, g.clone()),
            Op::Clamp(a, lo, hi) => acc(
                grads,
                *a,
                zip_with(val(*a), &|x, g| if x < *lo || x > *hi { 0.0 } else { g }),
            ),
            Op::Map(a, df) => acc(grads, *a, zip_with(val(*a), &|x, g| g * df(x))),
            Op::ScaleRows(x, s) => {
                let (tx, ts) = (val(*x), val(*s));
                let n = tx.shape()[1];
                let mut dx = vec![0.0; tx.len()];
                let mut ds = vec![0.0; ts.len()];
                for (r, ((gr, xr), c)) in gd.chunks(n).zip(tx.data().chunks(n)).zip(ts.data()).enumerate() {
                    let mut dot = 0.0;
                    for ((d, &gv), &xv) in dx[r * n..(r + 1) * n].iter_mut().zip(gr).zip(xr) {
                        *d = gv * c;
                        dot += gv * xv;
                    }
                    ds[r] = dot;
                }
                acc(grads, *x, Tensor::from_parts(tx.shape().to_vec(), dx));
                acc(grads, *s, Tensor::from_parts(ts.shape().to_vec(), ds));
            }
            Op::Sum(a, axis) | Op::Mean(a, axis) => {
                let ta = val(*a);
                let count = axis.map_or(ta.len(), |ax| ta.shape()[ax]);
                let factor = if matches!(node.op, Op::Mean(..)) {
                    1.0 / count as f64
                } else {
                    1.0
                };
                let out = match axis {
                    None => Tensor::full(ta.shape(), gd[0] * factor),
                    Some(ax) => {
                        let (outer, len, inner) = axis_extents(ta.shape(), *ax);
                        let mut d = Vec::with_capacity(ta.len());
                        for o in 0..outer {
                            let src = &gd[o * inner..(o + 1) * inner];
                            for _ in 0..len {
                                d.extend(src.iter().map(|x| x * factor));
                            }
                        }
                        Tensor::from_parts(ta.shape().to_vec(), d)
                    }
                };
                acc(grads, *a, out);
            }
            Op::Concat(parts, axis) => {
                let shape = node.value.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let row = shape[*axis] * inner;
                let mut offset = 0;
                for &p in parts {
                    let tp = val(p);
                    let chunk = tp.shape()[*axis] * inner;
                    let mut d = Vec::with_capacity(tp.len());
                    for o in 0..outer {
                        let start = o * row + offset;
                        d.extend_from_slice(&gd[start..start + chunk]);
                    }
                    offset += chunk;
                    acc(grads, p, Tensor::from_parts(tp.shape().to_vec(), d));
                }
            }
            Op::IndexSelect(x, axis, indices) => {
                let tx = val(*x);
                let (outer, len, inner) = axis_extents(tx.shape(), *axis);
                let mut d = vec![0.0; tx.len()];
                let k = indices.len();
                for o in 0..outer {
                    for (j, &i) in indices.iter().enumerate() {
                        let src = &gd[(o * k + j) * inner..(o * k + j + 1) * inner];
                        let dst = &mut d[(o * len + i) * inner..(o * len + i + 1) * inner];
                        for (a, b) in dst.iter_mut().zip(src) {
                            *a += b;
                        }
                    }
                }
                acc(grads, *x, Tensor::from_parts(tx.shape().to_vec(), d));
            }
            Op::Reshape(x) => {
                let tx = val(*x);
                acc(grads, *x, Tensor::from_parts(tx.shape().to_vec(), gd.to_vec()));
            }
        }
    }
}
