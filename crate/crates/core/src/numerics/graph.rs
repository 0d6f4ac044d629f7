//! Reverse-mode autodiff tape.
//!
//! A [`Graph`] records one forward computation as a flat list of nodes;
//! parents always precede children, so the reverse insertion order is a
//! valid backward schedule. Parameters enter as named leaves and their
//! gradients are read back into a [`ParamStore`] after [`Graph::backward`].

use crate::error::{Error, Result};
use crate::numerics::params::ParamStore;
use crate::numerics::tensor::Tensor;
use crate::numerics::LOG_EPS;

/// Handle to a node in one specific [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Node(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Node, Node),
    Sub(Node, Node),
    Mul(Node, Node),
    MatMul(Node, Node),
    /// Matrix plus a row vector broadcast over rows.
    AddRow(Node, Node),
    Scale(Node, f64),
    Sigmoid(Node),
    Tanh(Node),
    /// Softmax over the last axis (each row of a matrix, or the vector).
    Softmax(Node),
    /// ln(x + LOG_EPS), elementwise.
    LogEps(Node),
    Abs(Node),
    /// Sum of all elements, producing a scalar.
    Sum(Node),
    /// Vector slice [start, start+len).
    Slice(Node, usize, usize),
    Concat(Node, Node),
    /// One matrix row as a vector (embedding lookup).
    Row(Node, usize),
    /// Stack equal-length vectors into a matrix.
    StackRows(Vec<Node>),
    /// Sum of one matrix column, producing a scalar.
    ColSum(Node, usize),
}

pub struct Graph {
    ops: Vec<Op>,
    values: Vec<Tensor>,
    grads: Vec<Option<Tensor>>,
    params: Vec<(String, Node)>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            ops: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            params: Vec::new(),
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> Node {
        debug_assert!(value.all_finite(), "non-finite value out of {op:?}");
        self.ops.push(op);
        self.values.push(value);
        Node(self.ops.len() - 1)
    }

    /// Constant leaf.
    pub fn leaf(&mut self, value: Tensor) -> Node {
        self.push(Op::Leaf, value)
    }

    pub fn scalar(&mut self, value: f64) -> Node {
        self.leaf(Tensor::scalar(value))
    }

    /// Named parameter leaf; its gradient is read back by
    /// [`Graph::accumulate_param_grads`].
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Node {
        let tensor = store.get(name).clone();
        let node = self.leaf(tensor);
        self.params.push((name.to_string(), node));
        node
    }

    pub fn value(&self, node: Node) -> &Tensor {
        &self.values[node.0]
    }

    pub fn grad(&self, node: Node) -> Option<&Tensor> {
        self.grads.get(node.0).and_then(Option::as_ref)
    }

    fn shapes_equal(&self, op: &'static str, a: Node, b: Node) -> Result<()> {
        if self.values[a.0].shape() != self.values[b.0].shape() {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.values[a.0].shape().to_vec(),
                rhs: self.values[b.0].shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Node, b: Node) -> Result<Node> {
        self.shapes_equal("add", a, b)?;
        let mut out = self.values[a.0].clone();
        out.add_assign(&self.values[b.0]);
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn sub(&mut self, a: Node, b: Node) -> Result<Node> {
        self.shapes_equal("sub", a, b)?;
        let mut out = self.values[a.0].clone();
        for (x, y) in out.data_mut().iter_mut().zip(self.values[b.0].data()) {
            *x -= y;
        }
        Ok(self.push(Op::Sub(a, b), out))
    }

    pub fn mul(&mut self, a: Node, b: Node) -> Result<Node> {
        self.shapes_equal("mul", a, b)?;
        let mut out = self.values[a.0].clone();
        for (x, y) in out.data_mut().iter_mut().zip(self.values[b.0].data()) {
            *x *= y;
        }
        Ok(self.push(Op::Mul(a, b), out))
    }

    pub fn matmul(&mut self, a: Node, b: Node) -> Result<Node> {
        let out = self.values[a.0].matmul(&self.values[b.0])?;
        Ok(self.push(Op::MatMul(a, b), out))
    }

    /// matrix [r x c] + row vector [c], broadcast over rows.
    pub fn add_row(&mut self, matrix: Node, row: Node) -> Result<Node> {
        let (_, cols) = self.values[matrix.0].as_2d();
        if self.values[row.0].rank() != 1 || self.values[row.0].len() != cols {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                lhs: self.values[matrix.0].shape().to_vec(),
                rhs: self.values[row.0].shape().to_vec(),
            });
        }
        let mut out = self.values[matrix.0].clone();
        let (rows, cols) = out.as_2d();
        for r in 0..rows {
            let row_vals = self.values[row.0].data();
            let out_row = &mut out.data_mut()[r * cols..(r + 1) * cols];
            for (o, &v) in out_row.iter_mut().zip(row_vals) {
                *o += v;
            }
        }
        Ok(self.push(Op::AddRow(matrix, row), out))
    }

    pub fn scale(&mut self, a: Node, factor: f64) -> Node {
        let mut out = self.values[a.0].clone();
        out.scale_assign(factor);
        self.push(Op::Scale(a, factor), out)
    }

    pub fn sigmoid(&mut self, a: Node) -> Node {
        let mut out = self.values[a.0].clone();
        for v in out.data_mut() {
            *v = stable_sigmoid(*v);
        }
        self.push(Op::Sigmoid(a), out)
    }

    pub fn tanh(&mut self, a: Node) -> Node {
        let mut out = self.values[a.0].clone();
        for v in out.data_mut() {
            *v = v.tanh();
        }
        self.push(Op::Tanh(a), out)
    }

    /// Max-subtracted softmax over the last axis; rows sum to 1.
    pub fn softmax(&mut self, a: Node) -> Node {
        let mut out = self.values[a.0].clone();
        let (rows, cols) = out.as_2d();
        assert!(cols > 0, "softmax over empty axis");
        for r in 0..rows {
            let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
            softmax_row(row);
        }
        self.push(Op::Softmax(a), out)
    }

    pub fn log_eps(&mut self, a: Node) -> Node {
        let mut out = self.values[a.0].clone();
        for v in out.data_mut() {
            *v = (*v + LOG_EPS).ln();
        }
        self.push(Op::LogEps(a), out)
    }

    pub fn abs(&mut self, a: Node) -> Node {
        let mut out = self.values[a.0].clone();
        for v in out.data_mut() {
            *v = v.abs();
        }
        self.push(Op::Abs(a), out)
    }

    pub fn sum(&mut self, a: Node) -> Node {
        let total: f64 = self.values[a.0].data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(total))
    }

    pub fn slice(&mut self, a: Node, start: usize, len: usize) -> Result<Node> {
        let value = &self.values[a.0];
        if value.rank() != 1 || start + len > value.len() {
            return Err(Error::ShapeMismatch {
                op: "slice",
                lhs: value.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let out = Tensor::vector(value.data()[start..start + len].to_vec());
        Ok(self.push(Op::Slice(a, start, len), out))
    }

    pub fn concat(&mut self, a: Node, b: Node) -> Result<Node> {
        let (va, vb) = (&self.values[a.0], &self.values[b.0]);
        if va.rank() != 1 || vb.rank() != 1 {
            return Err(Error::ShapeMismatch {
                op: "concat",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let mut data = va.data().to_vec();
        data.extend_from_slice(vb.data());
        Ok(self.push(Op::Concat(a, b), Tensor::vector(data)))
    }

    /// One row of a matrix as a vector.
    pub fn row(&mut self, a: Node, index: usize) -> Result<Node> {
        let value = &self.values[a.0];
        if value.rank() != 2 || index >= value.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "row",
                lhs: value.shape().to_vec(),
                rhs: vec![index],
            });
        }
        let out = Tensor::vector(value.row(index).to_vec());
        Ok(self.push(Op::Row(a, index), out))
    }

    /// Stack equal-length vectors into a [n x len] matrix.
    pub fn stack_rows(&mut self, rows: &[Node]) -> Result<Node> {
        assert!(!rows.is_empty(), "stack_rows of nothing");
        let cols = self.values[rows[0].0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            let v = &self.values[r.0];
            if v.rank() != 1 || v.len() != cols {
                return Err(Error::ShapeMismatch {
                    op: "stack_rows",
                    lhs: vec![cols],
                    rhs: v.shape().to_vec(),
                });
            }
            data.extend_from_slice(v.data());
        }
        Ok(self.push(Op::StackRows(rows.to_vec()), Tensor::matrix(rows.len(), cols, data)))
    }

    /// Sum of one matrix column, as a scalar.
    pub fn col_sum(&mut self, a: Node, col: usize) -> Result<Node> {
        let value = &self.values[a.0];
        let (rows, cols) = value.as_2d();
        if col >= cols {
            return Err(Error::ShapeMismatch {
                op: "col_sum",
                lhs: value.shape().to_vec(),
                rhs: vec![col],
            });
        }
        let total: f64 = (0..rows).map(|r| value.data()[r * cols + col]).sum();
        Ok(self.push(Op::ColSum(a, col), Tensor::scalar(total)))
    }

    // ---- composite builders -------------------------------------------

    /// x·W (+ b). `x` may be a vector or a matrix of row vectors; a bias is
    /// broadcast over rows in the matrix case.
    pub fn affine(&mut self, x: Node, w: Node, b: Option<Node>) -> Result<Node> {
        let product = self.matmul(x, w)?;
        match b {
            None => Ok(product),
            Some(b) => {
                if self.values[product.0].rank() == 2 {
                    self.add_row(product, b)
                } else {
                    self.add(product, b)
                }
            }
        }
    }

    /// -sum(onehot * ln(probs + eps_log)). `probs` and `onehot` must share
    /// their shape; rows of `onehot` are expected to be one-hot but any
    /// fixed weighting is accepted.
    pub fn cross_entropy(&mut self, probs: Node, onehot: Node) -> Result<Node> {
        let log_probs = self.log_eps(probs);
        let weighted = self.mul(onehot, log_probs)?;
        let total = self.sum(weighted);
        Ok(self.scale(total, -1.0))
    }

    /// Standard LSTM cell: gates i,f,o sigmoid and g tanh over
    /// x·Wx + h·Wh + b split in i|f|g|o order; c' = f*c + i*g,
    /// h' = o * tanh(c').
    pub fn lstm_step(
        &mut self,
        x: Node,
        h: Node,
        c: Node,
        wx: Node,
        wh: Node,
        b: Node,
    ) -> Result<(Node, Node)> {
        let hidden = self.values[c.0].len();
        let from_x = self.matmul(x, wx)?;
        let from_h = self.matmul(h, wh)?;
        let pre = self.add(from_x, from_h)?;
        let pre = self.add(pre, b)?;

        let i_pre = self.slice(pre, 0, hidden)?;
        let f_pre = self.slice(pre, hidden, hidden)?;
        let g_pre = self.slice(pre, 2 * hidden, hidden)?;
        let o_pre = self.slice(pre, 3 * hidden, hidden)?;

        let i = self.sigmoid(i_pre);
        let f = self.sigmoid(f_pre);
        let g = self.tanh(g_pre);
        let o = self.sigmoid(o_pre);

        let keep = self.mul(f, c)?;
        let write = self.mul(i, g)?;
        let c_next = self.add(keep, write)?;
        let c_act = self.tanh(c_next);
        let h_next = self.mul(o, c_act)?;
        Ok((h_next, c_next))
    }

    // ---- backward ------------------------------------------------------

    /// Reverse-mode gradients of a scalar loss node with respect to every
    /// leaf; gradients of interior nodes are discarded as they are consumed.
    pub fn backward(&mut self, loss: Node) -> Result<()> {
        if self.values[loss.0].len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "backward: loss must be scalar",
                lhs: self.values[loss.0].shape().to_vec(),
                rhs: vec![1],
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.ops.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let op = self.ops[id].clone();
            match op {
                Op::Leaf => {
                    grads[id] = Some(g); // keep for parameter readback
                    continue;
                }
                Op::Add(a, b) => {
                    acc(&mut grads[a.0], &g);
                    acc(&mut grads[b.0], &g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads[a.0], &g);
                    acc_scaled(&mut grads[b.0], &g, -1.0, self.values[b.0].shape());
                }
                Op::Mul(a, b) => {
                    let da = elementwise_product(&g, &self.values[b.0]);
                    let db = elementwise_product(&g, &self.values[a.0]);
                    acc(&mut grads[a.0], &da);
                    acc(&mut grads[b.0], &db);
                }
                Op::MatMul(a, b) => {
                    let (da, db) = matmul_backward(&g, &self.values[a.0], &self.values[b.0]);
                    acc(&mut grads[a.0], &da);
                    acc(&mut grads[b.0], &db);
                }
                Op::AddRow(m, v) => {
                    acc(&mut grads[m.0], &g);
                    let (rows, cols) = g.as_2d();
                    let mut dv = vec![0.0; cols];
                    for r in 0..rows {
                        for (d, &gv) in dv.iter_mut().zip(&g.data()[r * cols..(r + 1) * cols]) {
                            *d += gv;
                        }
                    }
                    acc(&mut grads[v.0], &Tensor::vector(dv));
                }
                Op::Scale(a, factor) => {
                    acc_scaled(&mut grads[a.0], &g, factor, self.values[a.0].shape());
                }
                Op::Sigmoid(a) => {
                    let y = &self.values[id];
                    let mut da = g.clone();
                    for (d, &yv) in da.data_mut().iter_mut().zip(y.data()) {
                        *d *= yv * (1.0 - yv);
                    }
                    acc(&mut grads[a.0], &da);
                }
                Op::Tanh(a) => {
                    let y = &self.values[id];
                    let mut da = g.clone();
                    for (d, &yv) in da.data_mut().iter_mut().zip(y.data()) {
                        *d *= 1.0 - yv * yv;
                    }
                    acc(&mut grads[a.0], &da);
                }
                Op::Softmax(a) => {
                    let y = &self.values[id];
                    let (rows, cols) = y.as_2d();
                    let mut da = Tensor::zeros(y.shape().to_vec());
                    for r in 0..rows {
                        let y_row = &y.data()[r * cols..(r + 1) * cols];
                        let g_row = &g.data()[r * cols..(r + 1) * cols];
                        let dot: f64 = y_row.iter().zip(g_row).map(|(y, g)| y * g).sum();
                        let d_row = &mut da.data_mut()[r * cols..(r + 1) * cols];
                        for ((d, &yv), &gv) in d_row.iter_mut().zip(y_row).zip(g_row) {
                            *d = yv * (gv - dot);
                        }
                    }
                    acc(&mut grads[a.0], &da);
                }
                Op::LogEps(a) => {
                    let x = &self.values[a.0];
                    let mut da = g.clone();
                    for (d, &xv) in da.data_mut().iter_mut().zip(x.data()) {
                        *d /= xv + LOG_EPS;
                    }
                    acc(&mut grads[a.0], &da);
                }
                Op::Abs(a) => {
                    let x = &self.values[a.0];
                    let mut da = g.clone();
                    for (d, &xv) in da.data_mut().iter_mut().zip(x.data()) {
                        *d *= sign(xv);
                    }
                    acc(&mut grads[a.0], &da);
                }
                Op::Sum(a) => {
                    let shape = self.values[a.0].shape().to_vec();
                    let mut da = Tensor::zeros(shape);
                    da.fill(g.item());
                    acc(&mut grads[a.0], &da);
                }
                Op::Slice(a, start, len) => {
                    let mut da = Tensor::zeros(self.values[a.0].shape().to_vec());
                    da.data_mut()[start..start + len].copy_from_slice(g.data());
                    acc(&mut grads[a.0], &da);
                }
                Op::Concat(a, b) => {
                    let na = self.values[a.0].len();
                    let da = Tensor::vector(g.data()[..na].to_vec());
                    let db = Tensor::vector(g.data()[na..].to_vec());
                    acc(&mut grads[a.0], &da);
                    acc(&mut grads[b.0], &db);
                }
                Op::Row(a, index) => {
                    let mut da = Tensor::zeros(self.values[a.0].shape().to_vec());
                    da.row_mut(index).copy_from_slice(g.data());
                    acc(&mut grads[a.0], &da);
                }
                Op::StackRows(rows) => {
                    let cols = self.values[rows[0].0].len();
                    for (r, node) in rows.iter().enumerate() {
                        let dr = Tensor::vector(g.data()[r * cols..(r + 1) * cols].to_vec());
                        acc(&mut grads[node.0], &dr);
                    }
                }
                Op::ColSum(a, col) => {
                    let mut da = Tensor::zeros(self.values[a.0].shape().to_vec());
                    let (rows, cols) = da.as_2d();
                    let gv = g.item();
                    for r in 0..rows {
                        da.data_mut()[r * cols + col] = gv;
                    }
                    acc(&mut grads[a.0], &da);
                }
            }
        }
        self.grads = grads;
        Ok(())
    }

    /// Adds `scale` times each registered parameter gradient into the
    /// store's gradient slots. Parameters used several times accumulate
    /// within the graph already; parameters registered but unused by the
    /// loss contribute nothing.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore, scale: f64) {
        for (name, node) in &self.params {
            if let Some(g) = self.grad(*node) {
                store.accumulate_grad(name, g, scale);
            }
        }
    }

    /// Gradients of all registered parameters, zero-filled when unused.
    pub fn param_grads(&self) -> std::collections::BTreeMap<String, Tensor> {
        let mut out = std::collections::BTreeMap::new();
        for (name, node) in &self.params {
            let g = match self.grad(*node) {
                Some(g) => g.clone(),
                None => Tensor::zeros(self.values[node.0].shape().to_vec()),
            };
            match out.entry(name.clone()) {
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(g);
                }
                std::collections::btree_map::Entry::Occupied(mut e) => {
                    e.get_mut().add_assign(&g);
                }
            }
        }
        out
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_row(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

fn acc(slot: &mut Option<Tensor>, delta: &Tensor) {
    match slot {
        Some(t) => t.add_assign(delta),
        None => *slot = Some(delta.clone()),
    }
}

fn acc_scaled(slot: &mut Option<Tensor>, delta: &Tensor, factor: f64, shape: &[usize]) {
    debug_assert_eq!(shape, delta.shape());
    let mut scaled = delta.clone();
    scaled.scale_assign(factor);
    acc(slot, &scaled);
}

fn elementwise_product(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = a.clone();
    for (x, y) in out.data_mut().iter_mut().zip(b.data()) {
        *x *= y;
    }
    out
}

/// Gradients of c = a·b for the vector-promoted matmul.
fn matmul_backward(g: &Tensor, a: &Tensor, b: &Tensor) -> (Tensor, Tensor) {
    // Normalize all operands to the 2-D views used in the forward pass.
    let (ar, ac) = a.as_2d();
    let (br, bc) = match b.rank() {
        1 => (b.len(), 1),
        _ => b.as_2d(),
    };
    let g2 = reshape_2d(g, ar, bc);
    let a2 = reshape_2d(a, ar, ac);
    let b2 = reshape_2d(b, br, bc);
    let mut da = g2.matmul_nt(&b2);
    let mut db = a2.matmul_tn(&g2);
    da = match a.rank() {
        1 => Tensor::vector(da.data().to_vec()),
        _ => da,
    };
    db = match b.rank() {
        1 => Tensor::vector(db.data().to_vec()),
        _ => db,
    };
    (da, db)
}

fn reshape_2d(t: &Tensor, rows: usize, cols: usize) -> Tensor {
    assert_eq!(t.len(), rows * cols);
    Tensor::matrix(rows, cols, t.data().to_vec())
}
