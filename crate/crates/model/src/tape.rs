//! Reverse-mode automatic differentiation over rank-2 tensors.
//!
//! Every operation records its output value and a closure mapping the output
//! gradient to input gradients. Nodes that depend on no parameter or leaf skip
//! gradient work entirely.

use std::collections::BTreeMap;
use std::sync::Arc;

use sgh_core::filter::{chebyshev_filter, filter_gradient};
use sgh_core::graph::Laplacian;
use sgh_core::sparse::CooMatrix;
use sgh_core::tensor::{matmul_raw, Tensor};

use crate::error::{argument, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// What a backward closure sees: the output gradient, the forward inputs and
/// output, and which inputs actually need a gradient.
pub struct BackwardCtx<'a> {
    pub grad: &'a Tensor,
    pub inputs: &'a [&'a Tensor],
    pub output: &'a Tensor,
    pub needs: &'a [bool],
}

pub type BackwardFn = Box<dyn Fn(&BackwardCtx) -> Vec<Option<Tensor>>>;

enum Kind {
    Constant,
    Leaf,
    Param(String),
    Op(BackwardFn),
}

struct Node {
    label: String,
    value: Tensor,
    parents: Vec<usize>,
    kind: Kind,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, for leaves and named parameters.
#[derive(Debug, Default)]
pub struct Gradients {
    leaves: BTreeMap<usize, Tensor>,
    params: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.leaves.get(&v.0)
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub fn into_params(self) -> BTreeMap<String, Tensor> {
        self.params
    }
}

fn rank2(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    if t.rank() != 2 {
        return Err(argument(format!("{what} must be a matrix, got shape {:?}", t.shape())));
    }
    Ok((t.rows(), t.cols()))
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(argument(format!("{what}: shapes {:?} and {:?} differ", a.shape(), b.shape())));
    }
    Ok(())
}

fn mat(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
    Tensor::new(vec![rows, cols], data).expect("shape computed from operands")
}

/// `a · b`
pub fn mm(a: &Tensor, b: &Tensor) -> Tensor {
    mat(a.rows(), b.cols(), matmul_raw(a.data(), b.data(), a.rows(), a.cols(), b.cols()))
}

/// `a · bᵀ`
pub fn mm_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.rows());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let ar = &a.data()[i * k..(i + 1) * k];
        for j in 0..n {
            let br = &b.data()[j * k..(j + 1) * k];
            out[i * n + j] = ar.iter().zip(br).map(|(x, y)| x * y).sum();
        }
    }
    mat(m, n, out)
}

/// `aᵀ · b`
pub fn mm_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let br = &b.data()[i * n..(i + 1) * n];
        for (p, &av) in a.data()[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in out[p * n..(p + 1) * n].iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    }
    mat(k, n, out)
}

pub fn column_sums(g: &Tensor) -> Tensor {
    let n = g.cols();
    let mut out = vec![0.0; n];
    for row in g.data().chunks_exact(n) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    mat(1, n, out)
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    a.zip_map(b, f).expect("shapes checked in forward")
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

    pub fn label(&self, v: Var) -> &str {
        &self.nodes[v.0].label
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf_node("constant".into(), value, Kind::Constant, false)
    }

    /// Differentiable input whose gradient is reported by [`Gradients::get`].
    pub fn leaf(&mut self, label: &str, value: Tensor) -> Var {
        self.leaf_node(label.into(), value, Kind::Leaf, true)
    }

    /// Named parameter; its gradient appears under the same name.
    pub fn param(&mut self, name: &str, value: Tensor) -> Var {
        self.leaf_node(name.into(), value, Kind::Param(name.into()), true)
    }

    fn leaf_node(&mut self, label: String, value: Tensor, kind: Kind, requires_grad: bool) -> Var {
        self.nodes.push(Node { label, value, parents: Vec::new(), kind, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Records an operation with a caller-supplied backward closure.
    pub fn custom(&mut self, label: &str, parents: &[Var], value: Tensor, backward: BackwardFn) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        let kind = if requires_grad { Kind::Op(backward) } else { Kind::Constant };
        self.nodes.push(Node {
            label: label.into(),
            value,
            parents: parents.iter().map(|p| p.0).collect(),
            kind,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Label of the earliest node holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.nodes.iter().find(|n| !n.value.is_finite()).map(|n| n.label.as_str())
    }

    /// Gradients of the scalar `root` with respect to every leaf and parameter.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let r = &self.nodes[root.0];
        if r.value.len() != 1 {
            return Err(argument(format!("backward needs a scalar root, got shape {:?}", r.value.shape())));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::filled(r.value.shape(), 1.0));
        let mut out = Gradients::default();
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.kind {
                Kind::Op(f) => {
                    let inputs: Vec<&Tensor> = node.parents.iter().map(|&p| &self.nodes[p].value).collect();
                    let needs: Vec<bool> = node.parents.iter().map(|&p| self.nodes[p].requires_grad).collect();
                    let ctx = BackwardCtx { grad: &g, inputs: &inputs, output: &node.value, needs: &needs };
                    for ((&p, gp), &need) in node.parents.iter().zip(f(&ctx)).zip(&needs) {
                        let Some(gp) = gp.filter(|_| need) else { continue };
                        match &mut grads[p] {
                            Some(acc) => acc.data_mut().iter_mut().zip(gp.data()).for_each(|(a, b)| *a += b),
                            slot => *slot = Some(gp),
                        }
                    }
                }
                Kind::Leaf => {
                    out.leaves.insert(i, g);
                }
                Kind::Param(name) => {
                    out.params.insert(name.clone(), g);
                }
                Kind::Constant => {}
            }
        }
        Ok(out)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (_, k) = rank2(self.value(a), "matmul lhs")?;
        let (k2, _) = rank2(self.value(b), "matmul rhs")?;
        if k != k2 {
            return Err(argument(format!("matmul inner dims {k} and {k2} differ")));
        }
        let value = mm(self.value(a), self.value(b));
        Ok(self.custom(
            "matmul",
            &[a, b],
            value,
            Box::new(|c| vec![c.needs[0].then(|| mm_nt(c.grad, c.inputs[1])), c.needs[1].then(|| mm_tn(c.inputs[0], c.grad))]),
        ))
    }

    /// `x · w + 1 bᵀ` with `b` of shape `1 × out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (_, k) = rank2(self.value(x), "linear input")?;
        let (k2, n) = rank2(self.value(w), "linear weight")?;
        if k != k2 || self.shape(b) != [1, n] {
            return Err(argument(format!(
                "linear: input {:?}, weight {:?}, bias {:?} are inconsistent",
                self.shape(x),
                self.shape(w),
                self.shape(b)
            )));
        }
        let mut value = mm(self.value(x), self.value(w));
        let bias = self.value(b).data().to_vec();
        for row in value.data_mut().chunks_exact_mut(n) {
            row.iter_mut().zip(&bias).for_each(|(o, b)| *o += b);
        }
        Ok(self.custom(
            "linear",
            &[x, w, b],
            value,
            Box::new(|c| {
                vec![
                    c.needs[0].then(|| mm_nt(c.grad, c.inputs[1])),
                    c.needs[1].then(|| mm_tn(c.inputs[0], c.grad)),
                    c.needs[2].then(|| column_sums(c.grad)),
                ]
            }),
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "add")?;
        let value = zip(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.custom("add", &[a, b], value, Box::new(|c| vec![Some(c.grad.clone()), Some(c.grad.clone())])))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "sub")?;
        let value = zip(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.custom("sub", &[a, b], value, Box::new(|c| vec![Some(c.grad.clone()), Some(c.grad.scale(-1.0))])))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "mul")?;
        let value = zip(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.custom(
            "mul",
            &[a, b],
            value,
            Box::new(|c| {
                vec![
                    c.needs[0].then(|| zip(c.grad, c.inputs[1], |g, y| g * y)),
                    c.needs[1].then(|| zip(c.grad, c.inputs[0], |g, x| g * x)),
                ]
            }),
        ))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        self.custom("scale", &[a], value, Box::new(move |c| vec![Some(c.grad.scale(s))]))
    }

    /// Adds the `1 × n` row `r` to every row of `a`.
    pub fn add_row(&mut self, a: Var, r: Var) -> Result<Var> {
        let (_, n) = rank2(self.value(a), "add_row input")?;
        if self.shape(r) != [1, n] {
            return Err(argument(format!("add_row: row {:?} vs {n} columns", self.shape(r))));
        }
        let row = self.value(r).data().to_vec();
        let mut value = self.value(a).clone();
        for vr in value.data_mut().chunks_exact_mut(n) {
            vr.iter_mut().zip(&row).for_each(|(o, b)| *o += b);
        }
        Ok(self.custom(
            "add_row",
            &[a, r],
            value,
            Box::new(|c| vec![Some(c.grad.clone()), c.needs[1].then(|| column_sums(c.grad))]),
        ))
    }

    /// Multiplies every row of `a` elementwise by the `1 × n` row `r`.
    pub fn mul_row(&mut self, a: Var, r: Var) -> Result<Var> {
        let (_, n) = rank2(self.value(a), "mul_row input")?;
        if self.shape(r) != [1, n] {
            return Err(argument(format!("mul_row: row {:?} vs {n} columns", self.shape(r))));
        }
        let row = self.value(r).data().to_vec();
        let mut value = self.value(a).clone();
        for vr in value.data_mut().chunks_exact_mut(n) {
            vr.iter_mut().zip(&row).for_each(|(o, b)| *o *= b);
        }
        Ok(self.custom(
            "mul_row",
            &[a, r],
            value,
            Box::new(move |c| {
                let r = c.inputs[1].data();
                let da = c.needs[0].then(|| {
                    let mut g = c.grad.clone();
                    g.data_mut().chunks_exact_mut(n).for_each(|gr| gr.iter_mut().zip(r).for_each(|(x, y)| *x *= y));
                    g
                });
                let dr = c.needs[1].then(|| column_sums(&zip(c.grad, c.inputs[0], |g, x| g * x)));
                vec![da, dr]
            }),
        ))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        self.custom(
            "relu",
            &[a],
            value,
            Box::new(|c| vec![Some(zip(c.grad, c.inputs[0], |g, x| if x > 0.0 { g } else { 0.0 }))]),
        )
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.custom("exp", &[a], value, Box::new(|c| vec![Some(zip(c.grad, c.output, |g, y| g * y))]))
    }

    /// Softmax along each row.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (_, n) = rank2(self.value(a), "softmax input")?;
        let mut value = self.value(a).clone();
        for row in value.data_mut().chunks_exact_mut(n) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        Ok(self.custom(
            "softmax_rows",
            &[a],
            value,
            Box::new(move |c| {
                let mut d = c.grad.clone();
                for (dr, yr) in d.data_mut().chunks_exact_mut(n).zip(c.output.data().chunks_exact(n)) {
                    let dot: f64 = dr.iter().zip(yr).map(|(g, y)| g * y).sum();
                    dr.iter_mut().zip(yr).for_each(|(g, y)| *g = y * (*g - dot));
                }
                vec![Some(d)]
            }),
        ))
    }

    /// Zero-mean, unit-variance rows (biased variance, `eps` added).
    pub fn normalize_rows(&mut self, a: Var, eps: f64) -> Result<Var> {
        let (_, n) = rank2(self.value(a), "normalize input")?;
        let mut value = self.value(a).clone();
        for row in value.data_mut().chunks_exact_mut(n) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|x| *x = (*x - mean) * inv);
        }
        Ok(self.custom(
            "normalize_rows",
            &[a],
            value,
            Box::new(move |c| {
                let mut d = c.grad.clone();
                let rows = d.data_mut().chunks_exact_mut(n);
                for ((dr, xr), yr) in rows.zip(c.inputs[0].data().chunks_exact(n)).zip(c.output.data().chunks_exact(n)) {
                    let mean = xr.iter().sum::<f64>() / n as f64;
                    let var = xr.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
                    let inv = 1.0 / (var + eps).sqrt();
                    let gm = dr.iter().sum::<f64>() / n as f64;
                    let gy = dr.iter().zip(yr).map(|(g, y)| g * y).sum::<f64>() / n as f64;
                    dr.iter_mut().zip(yr).for_each(|(g, y)| *g = inv * (*g - gm - y * gy));
                }
                vec![Some(d)]
            }),
        ))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        rank2(self.value(a), "transpose input")?;
        let value = self.value(a).transpose();
        Ok(self.custom("transpose", &[a], value, Box::new(|c| vec![Some(c.grad.transpose())])))
    }

    /// Concatenates matrices with equal row counts side by side.
    pub fn hcat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = rank2(self.value(parts[0]), "hcat part")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = rank2(self.value(p), "hcat part")?;
            if r != rows {
                return Err(argument(format!("hcat: {r} rows vs {rows}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        Ok(self.custom(
            "hcat",
            parts,
            mat(rows, total, data),
            Box::new(move |c| {
                let mut start = 0;
                widths
                    .iter()
                    .zip(c.needs)
                    .map(|(&w, &need)| {
                        let s = start;
                        start += w;
                        need.then(|| slice_cols(c.grad, s, s + w))
                    })
                    .collect()
            }),
        ))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, n) = rank2(self.value(a), "slice input")?;
        if start >= end || end > n {
            return Err(argument(format!("column slice {start}..{end} of {n}")));
        }
        let value = slice_cols(self.value(a), start, end);
        Ok(self.custom(
            "slice_cols",
            &[a],
            value,
            Box::new(move |c| {
                let mut d = Tensor::zeros(&[rows, n]);
                for i in 0..rows {
                    d.row_mut(i)[start..end].copy_from_slice(c.grad.row(i));
                }
                vec![Some(d)]
            }),
        ))
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn vcat(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = rank2(self.value(parts[0]), "vcat part")?.1;
        let mut heights = Vec::with_capacity(parts.len());
        let mut data = Vec::new();
        for &p in parts {
            let (r, c) = rank2(self.value(p), "vcat part")?;
            if c != cols {
                return Err(argument(format!("vcat: {c} columns vs {cols}")));
            }
            heights.push(r);
            data.extend_from_slice(self.value(p).data());
        }
        let total: usize = heights.iter().sum();
        Ok(self.custom(
            "vcat",
            parts,
            mat(total, cols, data),
            Box::new(move |c| {
                let mut start = 0;
                heights
                    .iter()
                    .zip(c.needs)
                    .map(|(&h, &need)| {
                        let s = start;
                        start += h;
                        need.then(|| mat(h, cols, c.grad.data()[s * cols..(s + h) * cols].to_vec()))
                    })
                    .collect()
            }),
        ))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, n) = rank2(self.value(a), "slice input")?;
        if start >= end || end > rows {
            return Err(argument(format!("row slice {start}..{end} of {rows}")));
        }
        let value = mat(end - start, n, self.value(a).data()[start * n..end * n].to_vec());
        Ok(self.custom(
            "slice_rows",
            &[a],
            value,
            Box::new(move |c| {
                let mut d = Tensor::zeros(&[rows, n]);
                d.data_mut()[start * n..end * n].copy_from_slice(c.grad.data());
                vec![Some(d)]
            }),
        ))
    }

    /// Row `i` of the output is row `index[i]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: Arc<Vec<usize>>) -> Result<Var> {
        let (rows, n) = rank2(self.value(a), "gather input")?;
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(argument(format!("gather index {bad} outside {rows} rows")));
        }
        let mut data = Vec::with_capacity(index.len() * n);
        for &i in index.iter() {
            data.extend_from_slice(self.value(a).row(i));
        }
        let value = mat(index.len(), n, data);
        Ok(self.custom(
            "gather_rows",
            &[a],
            value,
            Box::new(move |c| {
                let mut d = Tensor::zeros(&[rows, n]);
                for (k, &i) in index.iter().enumerate() {
                    d.row_mut(i).iter_mut().zip(c.grad.row(k)).for_each(|(o, g)| *o += g);
                }
                vec![Some(d)]
            }),
        ))
    }

    /// Elementwise maximum over equally shaped inputs; ties go to the earliest input.
    pub fn max_elementwise(&mut self, parts: &[Var]) -> Result<Var> {
        for &p in &parts[1..] {
            same_shape(self.value(parts[0]), self.value(p), "max_elementwise")?;
        }
        let mut value = self.value(parts[0]).clone();
        for &p in &parts[1..] {
            value.data_mut().iter_mut().zip(self.value(p).data()).for_each(|(m, &x)| {
                if x > *m {
                    *m = x
                }
            });
        }
        let k = parts.len();
        Ok(self.custom(
            "max_elementwise",
            parts,
            value,
            Box::new(move |c| {
                let mut grads: Vec<Tensor> = (0..k).map(|_| Tensor::zeros(c.grad.shape())).collect();
                for (e, &g) in c.grad.data().iter().enumerate() {
                    let winner = (0..k).find(|&j| c.inputs[j].data()[e] == c.output.data()[e]).expect("max is attained");
                    grads[winner].data_mut()[e] = g;
                }
                grads.into_iter().zip(c.needs).map(|(g, &n)| n.then_some(g)).collect()
            }),
        ))
    }

    /// `1 × n` row of column means.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (rows, n) = rank2(self.value(a), "mean_rows input")?;
        let value = column_sums(self.value(a)).scale(1.0 / rows as f64);
        Ok(self.custom(
            "mean_rows",
            &[a],
            value,
            Box::new(move |c| {
                let g: Vec<f64> = c.grad.data().iter().map(|v| v / rows as f64).collect();
                let mut d = Tensor::zeros(&[rows, n]);
                d.data_mut().chunks_exact_mut(n).for_each(|r| r.copy_from_slice(&g));
                vec![Some(d)]
            }),
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        let shape = self.shape(a).to_vec();
        self.custom("sum", &[a], value, Box::new(move |c| vec![Some(Tensor::filled(&shape, c.grad.data()[0]))]))
    }

    /// `Σ a ⊙ w` for a fixed weight tensor.
    pub fn dot_const(&mut self, a: Var, w: Tensor) -> Result<Var> {
        same_shape(self.value(a), &w, "dot_const")?;
        let value = Tensor::scalar(self.value(a).data().iter().zip(w.data()).map(|(x, y)| x * y).sum());
        Ok(self.custom("dot_const", &[a], value, Box::new(move |c| vec![Some(w.scale(c.grad.data()[0]))])))
    }

    /// `S · x` for a fixed sparse matrix.
    pub fn sparse_apply(&mut self, s: Arc<CooMatrix>, x: Var) -> Result<Var> {
        let (rows, f) = rank2(self.value(x), "sparse_apply input")?;
        if s.cols() != rows {
            return Err(argument(format!("sparse operator has {} columns, signal {rows} rows", s.cols())));
        }
        let value = s.mul_dense(self.value(x))?;
        Ok(self.custom(
            "sparse_apply",
            &[x],
            value,
            Box::new(move |c| {
                let mut d = Tensor::zeros(&[rows, f]);
                for &(r, col, v) in s.entries() {
                    let g = &c.grad.data()[r * f..(r + 1) * f];
                    d.row_mut(col).iter_mut().zip(g).for_each(|(o, g)| *o += v * g);
                }
                vec![Some(d)]
            }),
        ))
    }

    /// Patches of a `h × w` image with `c` channels stored as `(h·w) × c`
    /// rows, for a 3×3 valid convolution. Output column `(3·dy + dx)·c + ch`.
    pub fn im2col3x3(&mut self, x: Var, h: usize, w: usize) -> Result<Var> {
        let (rows, ch) = rank2(self.value(x), "im2col input")?;
        if rows != h * w || h < 3 || w < 3 {
            return Err(argument(format!("im2col: {rows} rows is not a {h}x{w} image of size >= 3")));
        }
        let (oh, ow) = (h - 2, w - 2);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(oh * ow * 9 * ch);
        for y in 0..oh {
            for xx in 0..ow {
                for dy in 0..3 {
                    for dx in 0..3 {
                        let r = (y + dy) * w + xx + dx;
                        data.extend_from_slice(&src[r * ch..(r + 1) * ch]);
                    }
                }
            }
        }
        Ok(self.custom(
            "im2col3x3",
            &[x],
            mat(oh * ow, 9 * ch, data),
            Box::new(move |c| {
                let mut d = vec![0.0; rows * ch];
                for y in 0..oh {
                    for xx in 0..ow {
                        let g = c.grad.row(y * ow + xx);
                        for o in 0..9 {
                            let r = (y + o / 3) * w + xx + o % 3;
                            d[r * ch..(r + 1) * ch].iter_mut().zip(&g[o * ch..(o + 1) * ch]).for_each(|(a, b)| *a += b);
                        }
                    }
                }
                vec![Some(mat(rows, ch, d))]
            }),
        ))
    }

    /// Chebyshev spectral filter `Σ_k T_k(L̃) x θ_k`.
    pub fn chebyshev(&mut self, scaled_l: Arc<Laplacian>, theta: Var, x: Var) -> Result<Var> {
        let value = chebyshev_filter(&scaled_l, self.value(theta), self.value(x))?;
        Ok(self.custom(
            "chebyshev",
            &[theta, x],
            value,
            Box::new(move |c| {
                let (gt, gx) =
                    filter_gradient(&scaled_l, c.inputs[0], c.inputs[1], c.grad).expect("shapes checked in forward");
                vec![Some(gt), Some(gx)]
            }),
        ))
    }
}

pub fn slice_cols(t: &Tensor, start: usize, end: usize) -> Tensor {
    let mut data = Vec::with_capacity(t.rows() * (end - start));
    for i in 0..t.rows() {
        data.extend_from_slice(&t.row(i)[start..end]);
    }
    mat(t.rows(), end - start, data)
}
