//! Reverse-mode differentiation over batched matrix operations.
//!
//! A [`Graph`] records every forward operation as a node on a tape. Node
//! values are `rows × cols` matrices; most models push one mini-batch through
//! the tape with samples on the rows. [`Graph::backward`] walks the tape in
//! reverse and accumulates `∂loss/∂param` into the gradient slots of the
//! [`ParameterStore`] the trainable leaves came from.

use std::collections::HashMap;

use ndarray::{s, Array2, Axis, Zip};

use super::store::{ParamId, ParameterStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    /// `a + bias` with a `1 × cols` bias broadcast over rows
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Tanh(Var),
    Sigmoid(Var),
    Square(Var),
    Concat(Vec<Var>),
    SliceCols(Var, usize, usize),
    SoftmaxRows(Var),
    RowSum(Var),
    Gather(Var, Vec<usize>),
    LogClamp(Var, f64),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Tape of recorded operations.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    store_uid: Option<u64>,
    params: HashMap<ParamId, Var>,
    frozen: HashMap<(u64, ParamId), Var>,
}

impl Graph {
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

    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        debug_assert_eq!(t.dim(), (1, 1));
        t[[0, 0]]
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn dim(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// A constant input: no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A trainable leaf bound to `store`. Repeated calls for the same
    /// parameter return the same node. All trainable leaves of one graph must
    /// come from the same store.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Result<Var> {
        match self.store_uid {
            None => self.store_uid = Some(store.uid()),
            Some(uid) if uid != store.uid() => {
                return Err(Error::contract(
                    "trainable parameters from two different stores in one graph",
                ))
            }
            Some(_) => {}
        }
        if let Some(&v) = self.params.get(&id) {
            return Ok(v);
        }
        let v = self.push(store.value(id).clone(), Op::Param(id));
        self.params.insert(id, v);
        Ok(v)
    }

    /// A parameter read as a constant: its store receives no gradient.
    pub fn frozen_param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        if let Some(&v) = self.frozen.get(&(store.uid(), id)) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Leaf);
        self.frozen.insert((store.uid(), id), v);
        v
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.dim(a) != self.dim(b) {
            return Err(Error::shape(format!("{what}: {:?} vs {:?}", self.dim(a), self.dim(b))));
        }
        Ok(())
    }

    /// `x · wᵀ` for `x: [b × in]`, `w: [out × in]`.
    pub fn matmul_t(&mut self, x: Var, w: Var) -> Result<Var> {
        let (_, xin) = self.dim(x);
        let (_, win) = self.dim(w);
        if xin != win {
            return Err(Error::shape(format!(
                "matmul: input has {xin} columns, weight expects {win}"
            )));
        }
        let value = self.value(x).dot(&self.value(w).t());
        Ok(self.push(value, Op::MatMulT(x, w)))
    }

    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, cols) = self.dim(x);
        if self.dim(bias) != (1, cols) {
            return Err(Error::shape(format!(
                "bias {:?} does not broadcast over {cols} columns",
                self.dim(bias)
            )));
        }
        let value = self.value(x) + self.value(bias);
        Ok(self.push(value, Op::AddRow(x, bias)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let value = self.value(a) + self.value(b);
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let value = self.value(a) - self.value(b);
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let value = self.value(a) * self.value(b);
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        self.push(value, Op::Scale(a, c))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|v| 1.0 - v);
        self.push(value, Op::OneMinus(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|v| v * v);
        self.push(value, Op::Square(a))
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("concat of zero tensors"));
        };
        let rows = self.dim(first).0;
        if parts.iter().any(|&p| self.dim(p).0 != rows) {
            return Err(Error::shape("concat: row counts differ"));
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).map_err(|e| Error::shape(e.to_string()))?;
        Ok(self.push(value, Op::Concat(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, lo: usize, hi: usize) -> Result<Var> {
        let (_, cols) = self.dim(a);
        if lo >= hi || hi > cols {
            return Err(Error::shape(format!("column slice {lo}..{hi} of {cols}")));
        }
        let value = self.value(a).slice(s![.., lo..hi]).to_owned();
        Ok(self.push(value, Op::SliceCols(a, lo, hi)))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for mut r in value.rows_mut() {
            let out = softmax(&r.to_vec()).expect("nonempty row");
            r.iter_mut().zip(out).for_each(|(d, s)| *d = s);
        }
        self.push(value, Op::SoftmaxRows(a))
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(value, Op::RowSum(a))
    }

    /// Picks column `index[r]` of row `r`, giving a `rows × 1` column.
    pub fn gather(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let (rows, cols) = self.dim(a);
        if index.len() != rows || index.iter().any(|&i| i >= cols) {
            return Err(Error::shape(format!(
                "gather: {} indices into {rows}x{cols}",
                index.len()
            )));
        }
        let src = self.value(a);
        let value = Array2::from_shape_fn((rows, 1), |(r, _)| src[[r, index[r]]]);
        Ok(self.push(value, Op::Gather(a, index.to_vec())))
    }

    /// `ln(max(a, floor))`; entries at or below the floor receive no gradient.
    pub fn log_clamp(&mut self, a: Var, floor: f64) -> Var {
        let value = self.value(a).mapv(|v| v.max(floor).ln());
        self.push(value, Op::LogClamp(a, floor))
    }

    /// Mean over every entry, as a `1 × 1` scalar.
    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Array2::from_elem((1, 1), t.sum() / t.len() as f64);
        self.push(value, Op::Mean(a))
    }

    /// Back-propagates from the scalar `loss` and accumulates parameter
    /// gradients into `store`.
    pub fn backward(&self, loss: Var, store: &mut ParameterStore) -> Result<()> {
        if self.dim(loss) != (1, 1) {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got {:?}",
                self.dim(loss)
            )));
        }
        if let Some(uid) = self.store_uid {
            if uid != store.uid() {
                return Err(Error::contract("backward into a store the graph was not built from"));
            }
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::ones((1, 1)));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    let slot = &mut store.get_mut(*id).grad;
                    *slot += &g;
                }
                Op::MatMulT(x, w) => {
                    let gx = g.dot(self.value(*w));
                    let gw = g.t().dot(self.value(*x));
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *w, gw);
                }
                Op::AddRow(x, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *b, gb);
                    accumulate(&mut grads, *x, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, -&g);
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g * *c),
                Op::OneMinus(a) => accumulate(&mut grads, *a, -g),
                Op::Tanh(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(&node.value).for_each(|d, &y| *d *= 1.0 - y * y);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(&node.value)
                        .for_each(|d, &y| *d *= y * (1.0 - y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(self.value(*a)).for_each(|d, &x| *d *= 2.0 * x);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Concat(parts) => {
                    let mut lo = 0;
                    for &p in parts {
                        let w = self.dim(p).1;
                        accumulate(&mut grads, p, g.slice(s![.., lo..lo + w]).to_owned());
                        lo += w;
                    }
                }
                Op::SliceCols(a, lo, hi) => {
                    let mut ga = Array2::zeros(self.dim(*a));
                    ga.slice_mut(s![.., *lo..*hi]).assign(&g);
                    accumulate(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = g;
                    for (mut gr, yr) in ga.rows_mut().into_iter().zip(y.rows()) {
                        let dot: f64 = gr.iter().zip(yr.iter()).map(|(a, b)| a * b).sum();
                        gr.iter_mut().zip(yr.iter()).for_each(|(d, &p)| *d = p * (*d - dot));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::RowSum(a) => {
                    let (rows, cols) = self.dim(*a);
                    let ga = Array2::from_shape_fn((rows, cols), |(r, _)| g[[r, 0]]);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Gather(a, index) => {
                    let mut ga = Array2::zeros(self.dim(*a));
                    for (r, &c) in index.iter().enumerate() {
                        ga[[r, c]] = g[[r, 0]];
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::LogClamp(a, floor) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(self.value(*a)).for_each(|d, &x| {
                        *d = if x > *floor { *d / x } else { 0.0 };
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Mean(a) => {
                    let (rows, cols) = self.dim(*a);
                    let fill = g[[0, 0]] / (rows * cols) as f64;
                    accumulate(&mut grads, *a, Array2::from_elem((rows, cols), fill));
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(acc) => *acc += &g,
        slot @ None => *slot = Some(g),
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

/// Max-shifted softmax of one logit vector.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::shape("softmax of an empty vector"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::row;

    #[test]
    fn quadratic_gradient() {
        let mut store = ParameterStore::new();
        let w = store.insert("w", row(&[1.0, -2.0])).unwrap();
        let mut g = Graph::new();
        let wv = g.param(&store, w).unwrap();
        let sq = g.square(wv);
        let m = g.mean(sq);
        let loss = g.scale(m, 2.0);
        assert_eq!(g.scalar(loss), 5.0);
        g.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(w), &row(&[2.0, -4.0]));
    }

    #[test]
    fn unused_parameter_gets_zero() {
        let mut store = ParameterStore::new();
        let a = store.insert("a", row(&[3.0])).unwrap();
        let b = store.insert("b", row(&[4.0])).unwrap();
        let mut g = Graph::new();
        let av = g.param(&store, a).unwrap();
        let loss = g.square(av);
        g.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(a)[[0, 0]], 6.0);
        assert_eq!(store.grad(b)[[0, 0]], 0.0);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut store = ParameterStore::new();
        let a = store.insert("a", row(&[3.0, 1.0])).unwrap();
        let mut g = Graph::new();
        let av = g.param(&store, a).unwrap();
        assert!(matches!(g.backward(av, &mut store), Err(Error::Contract(_))));
    }

    #[test]
    fn mixing_stores_is_rejected() {
        let mut s1 = ParameterStore::new();
        let mut s2 = ParameterStore::new();
        let a = s1.insert("a", row(&[1.0])).unwrap();
        let b = s2.insert("b", row(&[1.0])).unwrap();
        let mut g = Graph::new();
        g.param(&s1, a).unwrap();
        assert!(g.param(&s2, b).is_err());
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[0.0; 4]).unwrap();
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let p = softmax(&[1.0, 1.0, 0.0, 0.0]).unwrap();
        let e = std::f64::consts::E;
        let hi = e / (2.0 * e + 2.0);
        let lo = 1.0 / (2.0 * e + 2.0);
        assert!((p[0] - hi).abs() < 1e-15 && (p[2] - lo).abs() < 1e-15);
        assert!((p[0] - 0.36552).abs() < 1e-5 && (p[3] - 0.13447).abs() < 1e-5);
        assert!((p[0] + p[1] - sigmoid(1.0)).abs() < 1e-15);
        let c = softmax(&[7.5; 3]).unwrap();
        assert!(c.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn softmax_survives_large_logits() {
        let p = softmax(&[1000.0, 999.0]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[0] - sigmoid(1.0)).abs() < 1e-12);
    }
}
