//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass; [`Tape::backward`]
//! walks it in reverse and returns gradients for the parameters that were
//! read through [`Tape::param`].

use std::collections::HashMap;

use ndarray::{s, Array2, Axis, Zip};

use super::params::{Grads, ParamId, ParamSet};

pub type Matrix = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    /// a · bᵀ
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// a + broadcast row vector b (1 × k)
    AddRow(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
    /// Row-wise dot product, n × 1.
    RowDot(Var, Var),
    /// s (n × 1) scaling each row of b (n × k).
    ScaleRows(Var, Var),
    GcnNorm(Var),
    Mean(Vec<Var>),
    Mse(Var, Matrix),
    MaskedCrossEntropy(Var, Vec<Option<usize>>),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Symmetric GCN normalization D̂^{-1/2} (A + I) D̂^{-1/2}, with D̂ the row
/// sums of A + I. Returns the normalized matrix and D̂^{-1/2}.
pub fn gcn_normalize(a: &Matrix) -> (Matrix, Vec<f64>) {
    let n = a.nrows();
    let inv_sqrt: Vec<f64> = a
        .rows()
        .into_iter()
        .map(|r| 1.0 / (r.sum() + 1.0).sqrt())
        .collect();
    let mut out = a.clone();
    for i in 0..n {
        out[[i, i]] += 1.0;
    }
    for ((i, j), v) in out.indexed_iter_mut() {
        *v *= inv_sqrt[i] * inv_sqrt[j];
    }
    (out, inv_sqrt)
}

fn accumulate(slot: &mut Option<Matrix>, g: Matrix) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
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

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(Op::Input, value)
    }

    /// Reads a parameter; repeated reads share one node so gradients accumulate.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        let v = self.push(Op::Param, params.get(id).clone());
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(Op::MatMul(a, b), value)
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&self.value(b).t());
        self.push(Op::MatMulT(a, b), value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(Op::Add(a, b), value)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        self.push(Op::Sub(a, b), value)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        self.push(Op::Mul(a, b), value)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let value = self.value(a) + self.value(row);
        self.push(Op::AddRow(a, row), value)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a) * factor;
        self.push(Op::Scale(a, factor), value)
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|v| 1.0 - v);
        self.push(Op::OneMinus(a), value)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|v| 1.0 / (1.0 + (-v).exp()));
        self.push(Op::Sigmoid(a), value)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        self.push(Op::Tanh(a), value)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|v| v.max(0.0));
        self.push(Op::Relu(a), value)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a));
        self.push(Op::SoftmaxRows(a), value)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        self.push(Op::ConcatCols(parts.to_vec()), value)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(Op::SliceCols(a, start, end), value)
    }

    pub fn row_dot(&mut self, a: Var, b: Var) -> Var {
        let prod = self.value(a) * self.value(b);
        let value = prod.sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(Op::RowDot(a, b), value)
    }

    pub fn scale_rows(&mut self, s: Var, b: Var) -> Var {
        let value = self.value(b) * self.value(s);
        self.push(Op::ScaleRows(s, b), value)
    }

    pub fn gcn_norm(&mut self, a: Var) -> Var {
        let (value, _) = gcn_normalize(self.value(a));
        self.push(Op::GcnNorm(a), value)
    }

    pub fn mean(&mut self, parts: &[Var]) -> Var {
        let mut value = self.value(parts[0]).clone();
        for p in &parts[1..] {
            value += self.value(*p);
        }
        value /= parts.len() as f64;
        self.push(Op::Mean(parts.to_vec()), value)
    }

    /// Mean squared error against a constant target; 1 × 1.
    pub fn mse(&mut self, pred: Var, target: Matrix) -> Var {
        let diff = self.value(pred) - &target;
        let value = Array2::from_elem((1, 1), diff.mapv(|d| d * d).mean().unwrap_or(0.0));
        self.push(Op::Mse(pred, target), value)
    }

    /// Mean softmax cross-entropy over rows that carry a label; 1 × 1.
    pub fn masked_cross_entropy(&mut self, logits: Var, labels: Vec<Option<usize>>) -> Var {
        let probs = softmax_rows(self.value(logits));
        let mut total = 0.0;
        let mut count = 0usize;
        for (i, label) in labels.iter().enumerate() {
            if let Some(c) = label {
                total -= probs[[i, *c]].max(f64::MIN_POSITIVE).ln();
                count += 1;
            }
        }
        let value = Array2::from_elem((1, 1), total / count.max(1) as f64);
        self.push(Op::MaskedCrossEntropy(logits, labels), value)
    }

    /// Gradients of the scalar `loss` with respect to every parameter read.
    pub fn backward(&self, loss: Var, params: &ParamSet) -> Grads {
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::ones(self.value(loss).dim()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param => {
                    grads[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.dot(self.value(*b));
                    let gb = g.t().dot(self.value(*a));
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[b.0], g.clone());
                    accumulate(&mut grads[a.0], g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[b.0], -&g);
                    accumulate(&mut grads[a.0], g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads[row.0], gr);
                    accumulate(&mut grads[a.0], g);
                }
                Op::Scale(a, f) => accumulate(&mut grads[a.0], g * *f),
                Op::OneMinus(a) => accumulate(&mut grads[a.0], -g),
                Op::Sigmoid(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(&node.value)
                        .for_each(|g, y| *g *= y * (1.0 - y));
                    accumulate(&mut grads[a.0], ga);
                }
                Op::Tanh(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(&node.value)
                        .for_each(|g, y| *g *= 1.0 - y * y);
                    accumulate(&mut grads[a.0], ga);
                }
                Op::Relu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(&node.value).for_each(|g, y| {
                        if *y <= 0.0 {
                            *g = 0.0
                        }
                    });
                    accumulate(&mut grads[a.0], ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = g;
                    for (mut grow, yrow) in ga.rows_mut().into_iter().zip(y.rows()) {
                        let dot: f64 = grow.iter().zip(yrow.iter()).map(|(g, y)| g * y).sum();
                        Zip::from(&mut grow)
                            .and(&yrow)
                            .for_each(|g, y| *g = y * (*g - dot));
                    }
                    accumulate(&mut grads[a.0], ga);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        let gp = g.slice(s![.., start..start + w]).to_owned();
                        accumulate(&mut grads[p.0], gp);
                        start += w;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    ga.slice_mut(s![.., *start..*end]).assign(&g);
                    accumulate(&mut grads[a.0], ga);
                }
                Op::RowDot(a, b) => {
                    let ga = self.value(*b) * &g;
                    let gb = self.value(*a) * &g;
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::ScaleRows(sc, b) => {
                    let gs = (&g * self.value(*b)).sum_axis(Axis(1)).insert_axis(Axis(1));
                    let gb = &g * self.value(*sc);
                    accumulate(&mut grads[sc.0], gs);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::GcnNorm(a) => {
                    // N_uv = Â_uv s_u s_v with s = d̂^{-1/2}, d̂_u = 1 + Σ_v A_uv.
                    let y = &node.value;
                    let n = y.nrows();
                    let (_, inv_sqrt) = gcn_normalize(self.value(*a));
                    let gy = &g * y;
                    let rows = gy.sum_axis(Axis(1));
                    let cols = gy.sum_axis(Axis(0));
                    // ∂L/∂d̂_u = -(rows_u + cols_u) / (2 d̂_u), and d̂_u = 1/s_u²
                    let gd: Vec<f64> = (0..n)
                        .map(|u| -0.5 * (rows[u] + cols[u]) * inv_sqrt[u] * inv_sqrt[u])
                        .collect();
                    let mut ga = g;
                    for ((u, v), val) in ga.indexed_iter_mut() {
                        *val = *val * inv_sqrt[u] * inv_sqrt[v] + gd[u];
                    }
                    accumulate(&mut grads[a.0], ga);
                }
                Op::Mean(parts) => {
                    let share = g / parts.len() as f64;
                    for p in parts {
                        accumulate(&mut grads[p.0], share.clone());
                    }
                }
                Op::Mse(pred, target) => {
                    let scale = 2.0 * g[[0, 0]] / target.len() as f64;
                    let gp = (self.value(*pred) - target) * scale;
                    accumulate(&mut grads[pred.0], gp);
                }
                Op::MaskedCrossEntropy(logits, labels) => {
                    let count = labels.iter().filter(|l| l.is_some()).count().max(1) as f64;
                    let mut gl = softmax_rows(self.value(*logits));
                    for (i, label) in labels.iter().enumerate() {
                        let mut row = gl.row_mut(i);
                        match label {
                            Some(c) => {
                                row[*c] -= 1.0;
                                row.mapv_inplace(|v| v * g[[0, 0]] / count);
                            }
                            None => row.fill(0.0),
                        }
                    }
                    accumulate(&mut grads[logits.0], gl);
                }
            }
        }

        let mut out = Grads::zeros_like(params);
        for (id, var) in &self.params {
            if let Some(g) = grads[var.0].take() {
                out.set(*id, g);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Central-difference check of every op against its backward rule.
    fn check_op(build: impl Fn(&mut Tape, &ParamSet) -> Var, params: &ParamSet) {
        let mut tape = Tape::new();
        let loss = build(&mut tape, params);
        let analytic = tape.backward(loss, params);
        let eps = 1e-6;
        for id in params.ids() {
            let shape = params.get(id).dim();
            for r in 0..shape.0 {
                for c in 0..shape.1 {
                    let mut plus = params.clone();
                    plus.get_mut(id)[[r, c]] += eps;
                    let mut minus = params.clone();
                    minus.get_mut(id)[[r, c]] -= eps;
                    let eval = |p: &ParamSet| {
                        let mut t = Tape::new();
                        let l = build(&mut t, p);
                        t.value(l)[[0, 0]]
                    };
                    let numeric = (eval(&plus) - eval(&minus)) / (2.0 * eps);
                    let a = analytic.get(id)[[r, c]];
                    assert!(
                        (a - numeric).abs() < 1e-6 * (1.0 + numeric.abs()),
                        "param {id:?}[{r},{c}]: analytic {a} numeric {numeric}"
                    );
                }
            }
        }
    }

    fn sample_params() -> (ParamSet, ParamId, ParamId, ParamId) {
        let mut p = ParamSet::default();
        let a = p.add("a", array![[0.3, -0.2, 0.5], [0.1, 0.4, -0.6]]);
        let b = p.add("b", array![[0.2, -0.1], [0.7, 0.3], [-0.5, 0.25]]);
        let r = p.add("r", array![[0.05, -0.3, 0.2]]);
        (p, a, b, r)
    }

    #[test]
    fn elementwise_and_matmul_gradients() {
        let (p, a, b, r) = sample_params();
        check_op(
            |t, p| {
                let a = t.param(p, a);
                let b = t.param(p, b);
                let r = t.param(p, r);
                let ab = t.matmul(a, b);
                let abt = t.matmul_t(ab, ab);
                let s = t.sigmoid(abt);
                let th = t.tanh(a);
                let ar = t.add_row(th, r);
                let m = t.mul(ar, th);
                let om = t.one_minus(m);
                let sm = t.softmax_rows(om);
                let sl = t.slice_cols(sm, 0, 2);
                let sum = t.add(sl, s);
                let diff = t.sub(sum, ab);
                let sc = t.scale(diff, 1.7);
                let rl = t.relu(sc);
                t.mse(rl, array![[0.1, 0.2], [0.3, -0.4]])
            },
            &p,
        );
    }

    #[test]
    fn structural_op_gradients() {
        let (p, a, b, _) = sample_params();
        check_op(
            |t, p| {
                let a = t.param(p, a);
                let b = t.param(p, b);
                let bt = t.matmul_t(a, a);
                let pos = t.softmax_rows(bt);
                let norm = t.gcn_norm(pos);
                let ab = t.matmul(a, b);
                let h = t.matmul(norm, ab);
                let cat = t.concat_cols(&[h, ab]);
                let left = t.slice_cols(cat, 0, 2);
                let right = t.slice_cols(cat, 2, 4);
                let dot = t.row_dot(left, right);
                let scaled = t.scale_rows(dot, left);
                let avg = t.mean(&[scaled, right]);
                t.masked_cross_entropy(avg, vec![Some(1), Some(0)])
            },
            &p,
        );
    }

    #[test]
    fn cross_entropy_ignores_unlabeled_rows() {
        let mut p = ParamSet::default();
        let l = p.add("l", array![[1.0, -1.0], [3.0, 0.5], [0.2, 0.1]]);
        let mut t = Tape::new();
        let v = t.param(&p, l);
        let loss = t.masked_cross_entropy(v, vec![Some(0), None, Some(1)]);
        let g = t.backward(loss, &p);
        assert!(g.get(l).row(1).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gcn_normalize_single_node() {
        let (n, _) = gcn_normalize(&array![[0.0]]);
        assert_eq!(n, array![[1.0]]);
    }
}
