use super::{ParamId, ParamStore, Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Max(Var, Var),
    Concat(Vec<Var>),
    Softmax {
        x: Var,
        cols: usize,
    },
    Row {
        table: Var,
        index: usize,
    },
    CrossEntropy {
        logits: Var,
        target: usize,
        probs: Vec<f64>,
    },
    Sum(Var),
    AddN(Vec<Var>),
    StackRows(Vec<Var>),
    AdditiveScores {
        query: Var,
        keys: Var,
        score: Var,
        hidden: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Ordered record of executed primitives. Nodes are appended as ops run, so
/// every node's inputs precede it and a single reverse sweep is a valid
/// backward order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<Option<Var>>,
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

    pub fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a leaf. It participates in backward iff `requires_grad` is set.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        let needs_grad = tensor.requires_grad;
        self.push(tensor, Op::Leaf, needs_grad)
    }

    pub fn constant(&mut self, tensor: Tensor) -> Var {
        let mut t = tensor;
        t.requires_grad = false;
        self.leaf(t)
    }

    /// Binds a stored parameter as a leaf. Binding the same id twice returns
    /// the same handle.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if self.params.len() <= id.0 {
            self.params.resize(id.0 + 1, None);
        }
        if let Some(v) = self.params[id.0] {
            return v;
        }
        let mut t = store.get(id).clone();
        t.requires_grad = true;
        let v = self.leaf(t);
        self.params[id.0] = Some(v);
        v
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        // Results that nothing differentiable depends on are folded to leaves.
        let op = if needs_grad { op } else { Op::Leaf };
        let mut value = value;
        value.requires_grad = needs_grad;
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn checked(
        &mut self,
        op_name: &'static str,
        shape: Vec<usize>,
        data: Vec<f64>,
        op: Op,
        needs_grad: bool,
    ) -> Result<Var> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t, op, needs_grad))
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> TensorError {
        TensorError::Shape {
            op,
            lhs: self.shape(a).to_vec(),
            rhs: self.shape(b).to_vec(),
        }
    }

    /// Matrix product. Accepts `[m,k]x[k,n]`, `[m,k]x[k]` (matrix-vector)
    /// and `[k]x[k,n]` (row vector times matrix).
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (m, k, n, out_shape) = match (sa.len(), sb.len()) {
            (2, 2) if sa[1] == sb[0] => (sa[0], sa[1], sb[1], vec![sa[0], sb[1]]),
            (2, 1) if sa[1] == sb[0] => (sa[0], sa[1], 1, vec![sa[0]]),
            (1, 2) if sa[0] == sb[0] => (1, sa[0], sb[1], vec![sb[1]]),
            _ => return Err(self.mismatch("matmul", a, b)),
        };
        let (av, bv) = (self.data(a), self.data(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = &av[i * k..(i + 1) * k];
            let orow = &mut out[i * n..(i + 1) * n];
            if n == 1 {
                orow[0] = dot(arow, bv);
            } else {
                for (p, &aip) in arow.iter().enumerate() {
                    let brow = &bv[p * n..(p + 1) * n];
                    for (o, &bpj) in orow.iter_mut().zip(brow) {
                        *o += aip * bpj;
                    }
                }
            }
        }
        let ng = self.ng(a) || self.ng(b);
        self.checked("matmul", out_shape, out, Op::MatMul { a, b, m, k, n }, ng)
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (na, nb) = (self.value(a).numel(), self.value(b).numel());
        let shape = if self.shape(a) == self.shape(b) || nb == 1 {
            self.shape(a).to_vec()
        } else if na == 1 {
            self.shape(b).to_vec()
        } else {
            return Err(self.mismatch(name, a, b));
        };
        let (av, bv) = (self.data(a), self.data(b));
        let n = na.max(nb);
        let out: Vec<f64> = (0..n)
            .map(|i| f(av[if na == 1 { 0 } else { i }], bv[if nb == 1 { 0 } else { i }]))
            .collect();
        let ng = self.ng(a) || self.ng(b);
        self.checked(name, shape, out, op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise maximum; ties send the gradient to `a`.
    pub fn max(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch("max", a, b));
        }
        self.binary("max", a, b, f64::max, Op::Max(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.data(a).iter().map(|x| x * s).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.ng(a);
        self.checked("scale", shape, out, Op::Scale(a, s), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.data(a).iter().map(|&x| sigmoid(x)).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.ng(a);
        self.checked("sigmoid", shape, out, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.data(a).iter().map(|x| x.tanh()).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.ng(a);
        self.checked("tanh", shape, out, Op::Tanh(a), ng)
    }

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(TensorError::Contract("concat of zero tensors".into()));
        }
        let mut out = Vec::new();
        for &p in parts {
            if self.shape(p).len() != 1 {
                return Err(self.mismatch("concat", parts[0], p));
            }
            out.extend_from_slice(self.data(p));
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        let n = out.len();
        self.checked("concat", vec![n], out, Op::Concat(parts.to_vec()), ng)
    }

    /// Softmax over a vector, or over each row of a matrix.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let cols = *shape.last().expect("non-empty shape");
        let mut out = self.data(a).to_vec();
        for row in out.chunks_mut(cols) {
            softmax_in_place(row);
        }
        let ng = self.ng(a);
        self.checked("softmax", shape, out, Op::Softmax { x: a, cols }, ng)
    }

    /// Selects one row of a matrix (embedding lookup).
    pub fn row(&mut self, table: Var, index: usize) -> Result<Var> {
        let shape = self.shape(table).to_vec();
        if shape.len() != 2 || index >= shape[0] {
            return Err(TensorError::Shape {
                op: "row",
                lhs: shape,
                rhs: vec![index],
            });
        }
        let d = shape[1];
        let out = self.data(table)[index * d..(index + 1) * d].to_vec();
        let ng = self.ng(table);
        self.checked("row", vec![d], out, Op::Row { table, index }, ng)
    }

    /// `-log softmax(logits)[target]`, as a scalar.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 1 || target >= shape[0] {
            return Err(TensorError::Shape {
                op: "cross_entropy",
                lhs: shape,
                rhs: vec![target],
            });
        }
        let z = self.data(logits);
        let lse = log_sum_exp(z);
        let loss = lse - z[target];
        let probs: Vec<f64> = z.iter().map(|&x| (x - lse).exp()).collect();
        let ng = self.ng(logits);
        self.checked(
            "cross_entropy",
            vec![1],
            vec![loss],
            Op::CrossEntropy { logits, target, probs },
            ng,
        )
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.data(a).iter().sum();
        let ng = self.ng(a);
        self.checked("sum", vec![1], vec![s], Op::Sum(a), ng)
    }

    /// Elementwise sum of equally shaped tensors.
    pub fn add_n(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| TensorError::Contract("add_n of zero tensors".into()))?;
        let shape = self.shape(first).to_vec();
        let mut out = vec![0.0; self.value(first).numel()];
        for &p in parts {
            if self.shape(p) != shape.as_slice() {
                return Err(self.mismatch("add_n", first, p));
            }
            for (o, x) in out.iter_mut().zip(self.data(p)) {
                *o += x;
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.checked("add_n", shape, out, Op::AddN(parts.to_vec()), ng)
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = *rows
            .first()
            .ok_or_else(|| TensorError::Contract("stack_rows of zero tensors".into()))?;
        let d = self.value(first).numel();
        let mut out = Vec::with_capacity(d * rows.len());
        for &r in rows {
            if self.shape(r) != [d] {
                return Err(self.mismatch("stack_rows", first, r));
            }
            out.extend_from_slice(self.data(r));
        }
        let ng = rows.iter().any(|&r| self.ng(r));
        self.checked("stack_rows", vec![rows.len(), d], out, Op::StackRows(rows.to_vec()), ng)
    }

    /// Additive attention scores: `out[j] = score . tanh(query + keys[j])`
    /// for `query: [a]`, `keys: [n, a]`, `score: [a]`.
    pub fn additive_scores(&mut self, query: Var, keys: Var, score: Var) -> Result<Var> {
        let ks = self.shape(keys).to_vec();
        let a = self.value(query).numel();
        if ks.len() != 2 || ks[1] != a || self.shape(query) != [a] {
            return Err(self.mismatch("additive_scores", query, keys));
        }
        if self.shape(score) != [a] {
            return Err(self.mismatch("additive_scores", query, score));
        }
        let n = ks[0];
        let (q, k, v) = (self.data(query), self.data(keys), self.data(score));
        let mut hidden = vec![0.0; n * a];
        let mut out = vec![0.0; n];
        for j in 0..n {
            let hrow = &mut hidden[j * a..(j + 1) * a];
            for (i, h) in hrow.iter_mut().enumerate() {
                *h = (q[i] + k[j * a + i]).tanh();
            }
            out[j] = dot(hrow, v);
        }
        let ng = self.ng(query) || self.ng(keys) || self.ng(score);
        self.checked(
            "additive_scores",
            vec![n],
            out,
            Op::AdditiveScores {
                query,
                keys,
                score,
                hidden,
            },
            ng,
        )
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            grads,
            params: self.params.clone(),
        })
    }

    fn backprop_node(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.numel()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, b, m, k, n } => {
                let (av, bv) = (self.data(a), self.data(b));
                // out[i,j] = sum_p a[i,p] b[p,j]
                acc(a, &mut |ga| {
                    for i in 0..m {
                        for p in 0..k {
                            ga[i * k + p] += dot(&g[i * n..(i + 1) * n], &bv[p * n..(p + 1) * n]);
                        }
                    }
                });
                acc(b, &mut |gb| {
                    for i in 0..m {
                        let gi = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let aip = av[i * k + p];
                            for (x, &gij) in gb[p * n..(p + 1) * n].iter_mut().zip(gi) {
                                *x += aip * gij;
                            }
                        }
                    }
                });
            }
            &Op::Add(a, b) => {
                acc(a, &mut |ga| reduce_into(ga, g, |_| 1.0));
                acc(b, &mut |gb| reduce_into(gb, g, |_| 1.0));
            }
            &Op::Sub(a, b) => {
                acc(a, &mut |ga| reduce_into(ga, g, |_| 1.0));
                acc(b, &mut |gb| reduce_into(gb, g, |_| -1.0));
            }
            &Op::Mul(a, b) => {
                let (av, bv) = (self.data(a), self.data(b));
                acc(a, &mut |ga| {
                    reduce_into(ga, g, |i| bv[if bv.len() == 1 { 0 } else { i }])
                });
                acc(b, &mut |gb| {
                    reduce_into(gb, g, |i| av[if av.len() == 1 { 0 } else { i }])
                });
            }
            &Op::Scale(a, s) => acc(a, &mut |ga| reduce_into(ga, g, |_| s)),
            &Op::Sigmoid(a) => acc(a, &mut |ga| reduce_into(ga, g, |i| out[i] * (1.0 - out[i]))),
            &Op::Tanh(a) => acc(a, &mut |ga| reduce_into(ga, g, |i| 1.0 - out[i] * out[i])),
            &Op::Max(a, b) => {
                let (av, bv) = (self.data(a), self.data(b));
                acc(a, &mut |ga| {
                    reduce_into(ga, g, |i| if av[i] >= bv[i] { 1.0 } else { 0.0 })
                });
                acc(b, &mut |gb| {
                    reduce_into(gb, g, |i| if av[i] >= bv[i] { 0.0 } else { 1.0 })
                });
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    acc(p, &mut |gp| {
                        for (x, y) in gp.iter_mut().zip(&g[off..off + len]) {
                            *x += y;
                        }
                    });
                    off += len;
                }
            }
            &Op::Softmax { x, cols } => acc(x, &mut |gx| {
                for ((gr, yr), orow) in gx.chunks_mut(cols).zip(out.chunks(cols)).zip(g.chunks(cols)) {
                    let s = dot(yr, orow);
                    for ((gxi, &yi), &gi) in gr.iter_mut().zip(yr).zip(orow) {
                        *gxi += yi * (gi - s);
                    }
                }
            }),
            &Op::Row { table, index } => acc(table, &mut |gt| {
                let d = g.len();
                for (x, y) in gt[index * d..(index + 1) * d].iter_mut().zip(g) {
                    *x += y;
                }
            }),
            Op::CrossEntropy { logits, target, probs } => acc(*logits, &mut |gl| {
                for (i, (x, p)) in gl.iter_mut().zip(probs).enumerate() {
                    let onehot = if i == *target { 1.0 } else { 0.0 };
                    *x += g[0] * (p - onehot);
                }
            }),
            &Op::Sum(a) => acc(a, &mut |ga| ga.iter_mut().for_each(|x| *x += g[0])),
            Op::AddN(parts) => {
                for &p in parts {
                    acc(p, &mut |gp| reduce_into(gp, g, |_| 1.0));
                }
            }
            Op::StackRows(rows) => {
                let d = self.value(rows[0]).numel();
                for (j, &r) in rows.iter().enumerate() {
                    acc(r, &mut |gr| {
                        for (x, y) in gr.iter_mut().zip(&g[j * d..(j + 1) * d]) {
                            *x += y;
                        }
                    });
                }
            }
            Op::AdditiveScores {
                query,
                keys,
                score,
                hidden,
            } => {
                let a = self.value(*query).numel();
                let v = self.data(*score);
                // d out[j] / d pre[j,i] = v[i] (1 - tanh^2)
                let dpre: Vec<f64> = hidden
                    .chunks(a)
                    .zip(g)
                    .flat_map(|(hrow, &gj)| hrow.iter().zip(v).map(move |(h, vi)| gj * vi * (1.0 - h * h)))
                    .collect();
                acc(*query, &mut |gq| {
                    for row in dpre.chunks(a) {
                        for (x, y) in gq.iter_mut().zip(row) {
                            *x += y;
                        }
                    }
                });
                acc(*keys, &mut |gk| {
                    for (x, y) in gk.iter_mut().zip(&dpre) {
                        *x += y;
                    }
                });
                acc(*score, &mut |gs| {
                    for (hrow, &gj) in hidden.chunks(a).zip(g) {
                        for (x, h) in gs.iter_mut().zip(hrow) {
                            *x += gj * h;
                        }
                    }
                });
            }
        }
    }
}

/// Accumulates `g[i] * local(i)` into `dst`, summing everything into a single
/// slot when `dst` was a broadcast scalar.
fn reduce_into(dst: &mut [f64], g: &[f64], local: impl Fn(usize) -> f64) {
    if dst.len() == g.len() {
        for (i, (d, gi)) in dst.iter_mut().zip(g).enumerate() {
            *d += gi * local(i);
        }
    } else {
        dst[0] += g.iter().enumerate().map(|(i, gi)| gi * local(i)).sum::<f64>();
    }
}

/// Result of [`Tape::backward`]: gradients for every node that needs one.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<Option<Var>>,
}

impl Gradients {
    /// Gradient of `v`, or `None` when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn param(&self, id: ParamId) -> Option<&[f64]> {
        self.params.get(id.0).copied().flatten().and_then(|v| self.wrt(v))
    }

    /// One gradient tensor per stored parameter; zeros for parameters that
    /// did not take part in the computation.
    pub fn for_store(&self, store: &ParamStore) -> Vec<Tensor> {
        store
            .iter()
            .map(|(id, _, t)| {
                let mut out = Tensor::zeros(t.shape());
                if let Some(g) = self.param(id) {
                    out.data_mut().copy_from_slice(g);
                }
                out
            })
            .collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in row.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    for x in row.iter_mut() {
        *x /= s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn rand_tensor(shape: &[usize], rng: &mut SplitMix64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(1.0)).collect()).unwrap()
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![0.0]));
        let y = t.sigmoid(x).unwrap();
        assert_eq!(t.data(y), &[0.5]);
    }

    #[test]
    fn softmax_of_equal_values_is_uniform() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![2.5; 3]));
        let y = t.softmax(x).unwrap();
        for v in t.data(y) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = SplitMix64::new(3);
        let mut t = Tape::new();
        let x = t.constant(rand_tensor(&[4, 7], &mut rng));
        let y = t.softmax(x).unwrap();
        for row in t.data(y).chunks(7) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = SplitMix64::new(11);
        let a = rand_tensor(&[2, 3], &mut rng);
        let b = rand_tensor(&[3, 2], &mut rng);
        let mut naive = [0.0; 4];
        for i in 0..2 {
            for j in 0..2 {
                for p in 0..3 {
                    naive[i * 2 + j] += a.data()[i * 3 + p] * b.data()[p * 2 + j];
                }
            }
        }
        let mut t = Tape::new();
        let (va, vb) = (t.constant(a), t.constant(b));
        let c = t.matmul(va, vb).unwrap();
        assert_eq!(t.value(c).shape(), &[2, 2]);
        for (x, y) in t.data(c).iter().zip(naive) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_errors_name_the_primitive() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[2, 3]));
        let b = t.constant(Tensor::zeros(&[2]));
        match t.matmul(a, b) {
            Err(TensorError::Shape { op, .. }) => assert_eq!(op, "matmul"),
            other => panic!("expected shape error, got {other:?}"),
        }
        let c = t.constant(Tensor::zeros(&[3]));
        assert!(matches!(t.add(b, c), Err(TensorError::Shape { op: "add", .. })));
    }

    #[test]
    fn non_finite_results_are_errors() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::vector(vec![f64::MAX]));
        let r = t.scale(a, 10.0);
        assert!(matches!(r, Err(TensorError::NonFinite { op: "scale" })));
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::zeros(&[2, 3]).with_grad());
        let s = t.sum(x).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.wrt(x).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn grad_of_sum_of_squares() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]).with_grad());
        let sq = t.mul(x, x).unwrap();
        let s = t.sum(sq).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.wrt(x).unwrap(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]).with_grad());
        let y = t.tanh(x).unwrap();
        assert!(matches!(t.backward(y), Err(TensorError::Contract(_))));
    }

    #[test]
    fn scalar_broadcast_reduces_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]).with_grad());
        let s = t.leaf(Tensor::scalar(2.0).with_grad());
        let y = t.mul(x, s).unwrap();
        let l = t.sum(y).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.wrt(s).unwrap(), &[6.0]);
        assert_eq!(g.wrt(x).unwrap(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn untouched_param_gets_zero_gradient() {
        let mut store = ParamStore::new();
        let used = store.add("used", Tensor::vector(vec![1.0, 2.0]));
        let unused = store.add("unused", Tensor::vector(vec![5.0]));
        let mut t = Tape::new();
        let u = t.param(&store, used);
        let l = t.sum(u).unwrap();
        let grads = t.backward(l).unwrap().for_store(&store);
        assert_eq!(grads[used.0].data(), &[1.0, 1.0]);
        assert_eq!(grads[unused.0].data(), &[0.0]);
    }

    /// Central differences over every input coordinate of a scalar function
    /// built from tape primitives.
    fn fd_check(inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Var) {
        let eval = |vals: &[Tensor]| {
            let mut t = Tape::new();
            let vars: Vec<Var> = vals.iter().map(|v| t.leaf(v.clone().with_grad())).collect();
            let out = f(&mut t, &vars);
            (t.data(out)[0], t, vars, out)
        };
        let (_, tape, vars, out) = eval(inputs);
        let grads = tape.backward(out).unwrap();
        let eps = 1e-5;
        for (k, input) in inputs.iter().enumerate() {
            for i in 0..input.numel() {
                let mut plus = inputs.to_vec();
                plus[k].data_mut()[i] += eps;
                let mut minus = inputs.to_vec();
                minus[k].data_mut()[i] -= eps;
                let num = (eval(&plus).0 - eval(&minus).0) / (2.0 * eps);
                let ana = grads.wrt(vars[k]).map_or(0.0, |g| g[i]);
                let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(1e-6);
                assert!(rel < 1e-4, "input {k}[{i}]: analytic {ana} vs numeric {num}");
            }
        }
    }

    #[test]
    fn every_primitive_matches_finite_differences() {
        let mut rng = SplitMix64::new(5);
        let m = rand_tensor(&[3, 4], &mut rng);
        let x = rand_tensor(&[4], &mut rng);
        let y = rand_tensor(&[3], &mut rng);
        let emb = rand_tensor(&[5, 3], &mut rng);
        fd_check(&[m.clone(), x.clone(), y.clone(), emb.clone()], |t, v| {
            let mx = t.matmul(v[0], v[1]).unwrap();
            let s = t.sigmoid(mx).unwrap();
            let th = t.tanh(v[2]).unwrap();
            let mu = t.mul(s, th).unwrap();
            let r = t.row(v[3], 2).unwrap();
            let mxp = t.max(mu, r).unwrap();
            let d = t.sub(mxp, v[2]).unwrap();
            let sc = t.scale(d, 0.7).unwrap();
            let cat = t.concat(&[sc, v[1]]).unwrap();
            let sm = t.softmax(cat).unwrap();
            let ce = t.cross_entropy(cat, 1).unwrap();
            let a = t.add_n(&[sm, cat]).unwrap();
            let sa = t.sum(a).unwrap();
            t.add(sa, ce).unwrap()
        });
    }

    #[test]
    fn matrix_products_and_attention_match_finite_differences() {
        let mut rng = SplitMix64::new(8);
        let a = rand_tensor(&[2, 3], &mut rng);
        let b = rand_tensor(&[3, 4], &mut rng);
        let row = rand_tensor(&[2], &mut rng);
        let q = rand_tensor(&[4], &mut rng);
        let v = rand_tensor(&[4], &mut rng);
        fd_check(&[a, b, row, q, v], |t, vs| {
            let ab = t.matmul(vs[0], vs[1]).unwrap(); // [2,4]
            let sm = t.softmax(ab).unwrap();
            let rb = t.matmul(vs[2], sm).unwrap(); // [4]
            let k0 = t.tanh(rb).unwrap();
            let keys = t.stack_rows(&[k0, vs[4], rb]).unwrap();
            let scores = t.additive_scores(vs[3], keys, vs[4]).unwrap();
            let w = t.softmax(scores).unwrap();
            let ctx = t.matmul(w, keys).unwrap();
            let sq = t.mul(ctx, ctx).unwrap();
            t.sum(sq).unwrap()
        });
    }

    #[test]
    fn replay_is_bitwise_deterministic() {
        let run = || {
            let mut rng = SplitMix64::new(21);
            let m = rand_tensor(&[6, 6], &mut rng).with_grad();
            let x = rand_tensor(&[6], &mut rng);
            let mut t = Tape::new();
            let (vm, vx) = (t.leaf(m), t.constant(x));
            let mut h = vx;
            for _ in 0..5 {
                let p = t.matmul(vm, h).unwrap();
                h = t.tanh(p).unwrap();
            }
            let l = t.cross_entropy(h, 2).unwrap();
            t.backward(l).unwrap().wrt(vm).unwrap().to_vec()
        };
        let (a, b) = (run(), run());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
