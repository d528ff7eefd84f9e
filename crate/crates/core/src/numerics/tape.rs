//! Define-by-run computation tape with reverse-mode gradients.
//!
//! The tape is append-only, so insertion order is already a topological
//! order: a node can only reference earlier nodes, which rules out cycles by
//! construction. `backward` walks the tape once in reverse.

use super::{CsrMatrix, NumericsError, Result, Tensor};

/// Handle to a node on a [`Graph`] tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Spmm { mat: usize, x: NodeId },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    MulElem(NodeId, NodeId),
    Scale(NodeId, f64),
    AddRowBias(NodeId, NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Ln(NodeId),
    SoftmaxRows(NodeId),
    Transpose(NodeId),
    Clamp(NodeId, f64, f64),
    ConcatCols(NodeId, NodeId),
    ConcatRows(Vec<NodeId>),
    SumRows(NodeId),
    MeanRows(NodeId),
    SumAll(NodeId),
    SelectRows { x: NodeId, picks: Vec<usize> },
    AggregateRows {
        x: NodeId,
        groups: Vec<Vec<usize>>,
        mean: bool,
    },
}

struct Slot {
    op: Op,
    value: Tensor,
    grad: Option<Tensor>,
    requires_grad: bool,
}

/// A computation tape over dense tensors and constant sparse matrices.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Slot>,
    sparse: Vec<CsrMatrix>,
}

impl Graph {
    pub fn new() -> Graph {
        Graph::default()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` target with respect to `id`.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].grad.as_ref()
    }

    /// Register a constant input (no gradient tracked).
    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf, t, false)
    }

    /// Register a trainable parameter (gradient tracked).
    pub fn param(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf, t, true)
    }

    /// Register a constant sparse matrix for use with [`Graph::spmm`].
    pub fn sparse(&mut self, m: CsrMatrix) -> usize {
        self.sparse.push(m);
        self.sparse.len() - 1
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Slot {
            op,
            value,
            grad: None,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn finish(&mut self, op: Op, value: Tensor, parents: &[NodeId]) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(NumericsError::NonFinite { op: op_name(&op) });
        }
        let requires = parents.iter().any(|&p| self.nodes[p.0].requires_grad);
        Ok(self.push(op, value, requires))
    }

    fn shape_err(op: &'static str, detail: String) -> NumericsError {
        NumericsError::ShapeMismatch { op, detail }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ac != br {
            return Err(Self::shape_err("matmul", format!("{ar}x{ac} · {br}x{bc}")));
        }
        let value = self.value(a).matmul(self.value(b));
        self.finish(Op::MatMul(a, b), value, &[a, b])
    }

    /// Multiply a registered sparse matrix by a dense node.
    pub fn spmm(&mut self, mat: usize, x: NodeId) -> Result<NodeId> {
        let m = &self.sparse[mat];
        if m.cols() != self.value(x).rows() {
            return Err(Self::shape_err(
                "spmm",
                format!(
                    "{}x{} · {}x{}",
                    m.rows(),
                    m.cols(),
                    self.value(x).rows(),
                    self.value(x).cols()
                ),
            ));
        }
        let value = m.mul_dense(self.value(x));
        self.finish(Op::Spmm { mat, x }, value, &[x])
    }

    fn elementwise_pair(
        &mut self,
        op: Op,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Self::shape_err(
                op_name(&op),
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let (r, c) = self.value(a).shape();
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.finish(op, Tensor::from_vec(r, c, data), &[a, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise_pair(Op::Add(a, b), a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise_pair(Op::Sub(a, b), a, b, |x, y| x - y)
    }

    pub fn mul_elem(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise_pair(Op::MulElem(a, b), a, b, |x, y| x * y)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let mut value = self.value(a).clone();
        value.scale_in_place(c);
        self.finish(Op::Scale(a, c), value, &[a])
    }

    /// Add a 1×C bias row to every row of an R×C node.
    pub fn add_row_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (r, c) = self.value(a).shape();
        let (br, bc) = self.value(bias).shape();
        if br != 1 || bc != c {
            return Err(Self::shape_err(
                "add_row_bias",
                format!("{r}x{c} + {br}x{bc}"),
            ));
        }
        let mut value = self.value(a).clone();
        let bias_row: Vec<f64> = self.value(bias).data().to_vec();
        for i in 0..r {
            for (v, b) in value.data_mut()[i * c..(i + 1) * c].iter_mut().zip(&bias_row) {
                *v += b;
            }
        }
        self.finish(Op::AddRowBias(a, bias), value, &[a, bias])
    }

    fn elementwise(
        &mut self,
        op: Op,
        a: NodeId,
        f: impl Fn(f64) -> f64,
    ) -> Result<NodeId> {
        let (r, c) = self.value(a).shape();
        let data = self.value(a).data().iter().map(|&x| f(x)).collect();
        self.finish(op, Tensor::from_vec(r, c, data), &[a])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.elementwise(Op::Sigmoid(a), a, |x| 1.0 / (1.0 + (-x).exp()))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.elementwise(Op::Relu(a), a, |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn ln(&mut self, a: NodeId) -> Result<NodeId> {
        self.elementwise(Op::Ln(a), a, f64::ln)
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        self.elementwise(Op::Clamp(a, lo, hi), a, |x| x.clamp(lo, hi))
    }

    /// Numerically stable row-wise softmax.
    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let (r, c) = self.value(a).shape();
        let mut value = Tensor::zeros(r, c);
        for i in 0..r {
            let row = self.value(a).row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            let out = &mut value.data_mut()[i * c..(i + 1) * c];
            for (o, &x) in out.iter_mut().zip(row) {
                *o = (x - max).exp();
                sum += *o;
            }
            for o in out.iter_mut() {
                *o /= sum;
            }
        }
        self.finish(Op::SoftmaxRows(a), value, &[a])
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).transposed();
        self.finish(Op::Transpose(a), value, &[a])
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ar != br {
            return Err(Self::shape_err(
                "concat_cols",
                format!("{ar}x{ac} || {br}x{bc}"),
            ));
        }
        let mut value = Tensor::zeros(ar, ac + bc);
        for i in 0..ar {
            let out = &mut value.data_mut()[i * (ac + bc)..(i + 1) * (ac + bc)];
            out[..ac].copy_from_slice(self.value(a).row(i));
            out[ac..].copy_from_slice(self.value(b).row(i));
        }
        self.finish(Op::ConcatCols(a, b), value, &[a, b])
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Self::shape_err("concat_rows", "no parts".into()));
        }
        let cols = self.value(parts[0]).cols();
        let mut rows = 0;
        for &p in parts {
            if self.value(p).cols() != cols {
                return Err(Self::shape_err(
                    "concat_rows",
                    format!("{} vs {} columns", self.value(p).cols(), cols),
                ));
            }
            rows += self.value(p).rows();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        self.finish(
            Op::ConcatRows(parts.to_vec()),
            Tensor::from_vec(rows, cols, data),
            parts,
        )
    }

    /// Sum over rows: R×C → 1×C.
    pub fn sum_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let (r, c) = self.value(a).shape();
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, &v) in out.iter_mut().zip(self.value(a).row(i)) {
                *o += v;
            }
        }
        self.finish(Op::SumRows(a), Tensor::from_vec(1, c, out), &[a])
    }

    /// Mean over rows: R×C → 1×C.
    pub fn mean_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let (r, c) = self.value(a).shape();
        if r == 0 {
            return Err(Self::shape_err("mean_rows", "zero rows".into()));
        }
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, &v) in out.iter_mut().zip(self.value(a).row(i)) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= r as f64;
        }
        self.finish(Op::MeanRows(a), Tensor::from_vec(1, c, out), &[a])
    }

    /// Sum of all entries: R×C → 1×1.
    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId> {
        let total: f64 = self.value(a).data().iter().sum();
        self.finish(
            Op::SumAll(a),
            Tensor::from_vec(1, 1, vec![total]),
            &[a],
        )
    }

    /// Gather rows (duplicates allowed): output row k = x[picks[k]].
    pub fn select_rows(&mut self, x: NodeId, picks: &[usize]) -> Result<NodeId> {
        let (r, c) = self.value(x).shape();
        for &p in picks {
            if p >= r {
                return Err(Self::shape_err(
                    "select_rows",
                    format!("row {p} out of {r}"),
                ));
            }
        }
        let mut data = Vec::with_capacity(picks.len() * c);
        for &p in picks {
            data.extend_from_slice(self.value(x).row(p));
        }
        self.finish(
            Op::SelectRows {
                x,
                picks: picks.to_vec(),
            },
            Tensor::from_vec(picks.len(), c, data),
            &[x],
        )
    }

    /// Per-group row reduction: output row k = sum (or mean) of the rows of
    /// `x` listed in `groups[k]`. Empty groups produce zero rows.
    pub fn aggregate_rows(
        &mut self,
        x: NodeId,
        groups: &[Vec<usize>],
        mean: bool,
    ) -> Result<NodeId> {
        let (r, c) = self.value(x).shape();
        let mut value = Tensor::zeros(groups.len(), c);
        for (k, group) in groups.iter().enumerate() {
            for &m in group {
                if m >= r {
                    return Err(Self::shape_err(
                        "aggregate_rows",
                        format!("row {m} out of {r}"),
                    ));
                }
                let out = &mut value.data_mut()[k * c..(k + 1) * c];
                for (o, &v) in out.iter_mut().zip(self.value(x).row(m)) {
                    *o += v;
                }
            }
            if mean && !group.is_empty() {
                let inv = 1.0 / group.len() as f64;
                for o in &mut value.data_mut()[k * c..(k + 1) * c] {
                    *o *= inv;
                }
            }
        }
        self.finish(
            Op::AggregateRows {
                x,
                groups: groups.to_vec(),
                mean,
            },
            value,
            &[x],
        )
    }

    fn accumulate(&mut self, id: NodeId, delta: Tensor) {
        let slot = &mut self.nodes[id.0];
        if !slot.requires_grad {
            return;
        }
        match &mut slot.grad {
            Some(g) => g.add_in_place(&delta),
            None => slot.grad = Some(delta),
        }
    }

    /// Accumulate d(loss)/d(node) for every gradient-tracked node reachable
    /// from `loss`, which must be 1×1. Existing gradients are cleared first.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.value(loss).shape() != (1, 1) {
            return Err(NumericsError::ShapeMismatch {
                op: "backward",
                detail: format!("loss must be 1x1, got {:?}", self.value(loss).shape()),
            });
        }
        for slot in &mut self.nodes {
            slot.grad = None;
        }
        self.nodes[loss.0].grad = Some(Tensor::from_vec(1, 1, vec![1.0]));

        for i in (0..=loss.0).rev() {
            let Some(grad) = self.nodes[i].grad.clone() else {
                continue;
            };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = grad.matmul_nt(self.value(b));
                    let db = self.value(a).matmul_tn(&grad);
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::Spmm { mat, x } => {
                    let dx = self.sparse[mat].transpose_mul_dense(&grad);
                    self.accumulate(x, dx);
                }
                Op::Add(a, b) => {
                    self.accumulate(a, grad.clone());
                    self.accumulate(b, grad);
                }
                Op::Sub(a, b) => {
                    let mut neg = grad.clone();
                    neg.scale_in_place(-1.0);
                    self.accumulate(a, grad);
                    self.accumulate(b, neg);
                }
                Op::MulElem(a, b) => {
                    let mut da = grad.clone();
                    for (d, &bv) in da.data_mut().iter_mut().zip(self.value(b).data()) {
                        *d *= bv;
                    }
                    let mut db = grad;
                    for (d, &av) in db.data_mut().iter_mut().zip(self.value(a).data()) {
                        *d *= av;
                    }
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::Scale(a, c) => {
                    let mut da = grad;
                    da.scale_in_place(c);
                    self.accumulate(a, da);
                }
                Op::AddRowBias(a, bias) => {
                    let (r, c) = grad.shape();
                    let mut db = vec![0.0; c];
                    for row in 0..r {
                        for (o, &g) in db.iter_mut().zip(grad.row(row)) {
                            *o += g;
                        }
                    }
                    self.accumulate(a, grad);
                    self.accumulate(bias, Tensor::from_vec(1, c, db));
                }
                Op::Sigmoid(a) => {
                    let mut da = grad;
                    for (d, &y) in da.data_mut().iter_mut().zip(self.nodes[i].value.data()) {
                        *d *= y * (1.0 - y);
                    }
                    self.accumulate(a, da);
                }
                Op::Relu(a) => {
                    let mut da = grad;
                    for (d, &x) in da.data_mut().iter_mut().zip(self.value(a).data()) {
                        if x <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    self.accumulate(a, da);
                }
                Op::Ln(a) => {
                    let mut da = grad;
                    for (d, &x) in da.data_mut().iter_mut().zip(self.value(a).data()) {
                        *d /= x;
                    }
                    self.accumulate(a, da);
                }
                Op::Clamp(a, lo, hi) => {
                    let mut da = grad;
                    for (d, &x) in da.data_mut().iter_mut().zip(self.value(a).data()) {
                        if x <= lo || x >= hi {
                            *d = 0.0;
                        }
                    }
                    self.accumulate(a, da);
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[i].value;
                    let (r, c) = y.shape();
                    let mut da = Tensor::zeros(r, c);
                    for row in 0..r {
                        let yrow = y.row(row);
                        let grow = grad.row(row);
                        let dot: f64 = yrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                        let out = &mut da.data_mut()[row * c..(row + 1) * c];
                        for ((o, &yv), &gv) in out.iter_mut().zip(yrow).zip(grow) {
                            *o = yv * (gv - dot);
                        }
                    }
                    self.accumulate(a, da);
                }
                Op::Transpose(a) => {
                    self.accumulate(a, grad.transposed());
                }
                Op::ConcatCols(a, b) => {
                    let (r, ac) = self.value(a).shape();
                    let bc = self.value(b).cols();
                    let mut da = Tensor::zeros(r, ac);
                    let mut db = Tensor::zeros(r, bc);
                    for row in 0..r {
                        let g = grad.row(row);
                        da.data_mut()[row * ac..(row + 1) * ac].copy_from_slice(&g[..ac]);
                        db.data_mut()[row * bc..(row + 1) * bc].copy_from_slice(&g[ac..]);
                    }
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let (pr, pc) = self.value(p).shape();
                        let mut dp = Tensor::zeros(pr, pc);
                        dp.data_mut()
                            .copy_from_slice(&grad.data()[offset * pc..(offset + pr) * pc]);
                        offset += pr;
                        self.accumulate(p, dp);
                    }
                }
                Op::SumRows(a) => {
                    let (r, c) = self.value(a).shape();
                    let mut da = Tensor::zeros(r, c);
                    for row in 0..r {
                        da.data_mut()[row * c..(row + 1) * c].copy_from_slice(grad.row(0));
                    }
                    self.accumulate(a, da);
                }
                Op::MeanRows(a) => {
                    let (r, c) = self.value(a).shape();
                    let mut da = Tensor::zeros(r, c);
                    let inv = 1.0 / r as f64;
                    for row in 0..r {
                        for (o, &g) in da.data_mut()[row * c..(row + 1) * c]
                            .iter_mut()
                            .zip(grad.row(0))
                        {
                            *o = g * inv;
                        }
                    }
                    self.accumulate(a, da);
                }
                Op::SumAll(a) => {
                    let (r, c) = self.value(a).shape();
                    let da = Tensor::filled(r, c, grad.scalar());
                    self.accumulate(a, da);
                }
                Op::SelectRows { x, picks } => {
                    let (r, c) = self.value(x).shape();
                    let mut dx = Tensor::zeros(r, c);
                    for (k, &p) in picks.iter().enumerate() {
                        for (o, &g) in dx.data_mut()[p * c..(p + 1) * c]
                            .iter_mut()
                            .zip(grad.row(k))
                        {
                            *o += g;
                        }
                    }
                    self.accumulate(x, dx);
                }
                Op::AggregateRows { x, groups, mean } => {
                    let (r, c) = self.value(x).shape();
                    let mut dx = Tensor::zeros(r, c);
                    for (k, group) in groups.iter().enumerate() {
                        let scale = if mean && !group.is_empty() {
                            1.0 / group.len() as f64
                        } else {
                            1.0
                        };
                        for &m in group {
                            for (o, &g) in dx.data_mut()[m * c..(m + 1) * c]
                                .iter_mut()
                                .zip(grad.row(k))
                            {
                                *o += g * scale;
                            }
                        }
                    }
                    self.accumulate(x, dx);
                }
            }
        }
        Ok(())
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::Spmm { .. } => "spmm",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::MulElem(..) => "mul_elem",
        Op::Scale(..) => "scale",
        Op::AddRowBias(..) => "add_row_bias",
        Op::Sigmoid(..) => "sigmoid",
        Op::Relu(..) => "relu",
        Op::Ln(..) => "ln",
        Op::SoftmaxRows(..) => "softmax_rows",
        Op::Transpose(..) => "transpose",
        Op::Clamp(..) => "clamp",
        Op::ConcatCols(..) => "concat_cols",
        Op::ConcatRows(..) => "concat_rows",
        Op::SumRows(..) => "sum_rows",
        Op::MeanRows(..) => "mean_rows",
        Op::SumAll(..) => "sum_all",
        Op::SelectRows { .. } => "select_rows",
        Op::AggregateRows { .. } => "aggregate_rows",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn sigmoid_of_zero_is_half() {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(1, 1, vec![0.0]));
        let y = g.sigmoid(x).unwrap();
        assert_eq!(g.value(y).scalar(), 0.5);
    }

    #[test]
    fn softmax_constant_row_is_uniform() {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(1, 4, vec![3.0; 4]));
        let y = g.softmax_rows(x).unwrap();
        for &v in g.value(y).data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let sum: f64 = g.value(y).data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn square_gradient_at_three_is_six() {
        let mut g = Graph::new();
        let x = g.param(Tensor::from_vec(1, 1, vec![3.0]));
        let sq = g.mul_elem(x, x).unwrap();
        let loss = g.sum_all(sq).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().scalar(), 6.0);
    }

    #[test]
    fn non_finite_is_caught() {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(1, 1, vec![0.0]));
        assert_eq!(g.ln(x).unwrap_err(), NumericsError::NonFinite { op: "ln" });
    }

    #[test]
    fn shape_mismatch_is_caught() {
        let mut g = Graph::new();
        let a = g.input(Tensor::zeros(2, 3));
        let b = g.input(Tensor::zeros(2, 3));
        assert!(matches!(
            g.matmul(a, b),
            Err(NumericsError::ShapeMismatch { .. })
        ));
    }

    fn rand_tensor(rng: &mut StdRng, r: usize, c: usize) -> Tensor {
        Tensor::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Central-difference gradient check. `build` must register each input
    /// as a param (in order, as the first nodes) and return a scalar loss.
    fn grad_check(
        build: impl Fn(&mut Graph, &[Tensor]) -> NodeId,
        inputs: &[Tensor],
        tol: f64,
    ) {
        let eval = |tensors: &[Tensor]| -> f64 {
            let mut g = Graph::new();
            let loss = build(&mut g, tensors);
            g.value(loss).scalar()
        };
        let mut g = Graph::new();
        let loss = build(&mut g, inputs);
        g.backward(loss).unwrap();

        let eps = 1e-5;
        for (ti, t) in inputs.iter().enumerate() {
            // params are the first nodes pushed by build, in order
            let analytic = g.grad(NodeId(ti)).expect("param should have grad");
            for k in 0..t.data().len() {
                let mut plus = inputs.to_vec();
                plus[ti].data_mut()[k] += eps;
                let mut minus = inputs.to_vec();
                minus[ti].data_mut()[k] -= eps;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * eps);
                let a = analytic.data()[k];
                let denom = a.abs().max(fd.abs()).max(1e-8);
                let rel = (a - fd).abs() / denom;
                assert!(
                    rel < tol,
                    "grad mismatch input {ti} entry {k}: analytic {a} vs fd {fd} (rel {rel})"
                );
            }
        }
    }

    #[test]
    fn gradcheck_matmul_chain() {
        let mut rng = StdRng::seed_from_u64(7);
        let a = rand_tensor(&mut rng, 3, 4);
        let b = rand_tensor(&mut rng, 4, 2);
        let w = rand_tensor(&mut rng, 3, 2);
        grad_check(
            |g, ts| {
                let a = g.param(ts[0].clone());
                let b = g.param(ts[1].clone());
                let w = g.param(ts[2].clone());
                let y = g.matmul(a, b).unwrap();
                let y = g.mul_elem(y, w).unwrap();
                g.sum_all(y).unwrap()
            },
            &[a, b, w],
            1e-4,
        );
    }

    #[test]
    fn gradcheck_activations_and_reductions() {
        let mut rng = StdRng::seed_from_u64(8);
        let x = rand_tensor(&mut rng, 4, 3);
        let w = rand_tensor(&mut rng, 1, 3);
        grad_check(
            |g, ts| {
                let x = g.param(ts[0].clone());
                let w = g.param(ts[1].clone());
                let s = g.sigmoid(x).unwrap();
                let r = g.relu(s).unwrap();
                let m = g.mean_rows(r).unwrap();
                let m = g.mul_elem(m, w).unwrap();
                g.sum_all(m).unwrap()
            },
            &[x, w],
            1e-4,
        );
    }

    #[test]
    fn gradcheck_softmax_attention_block() {
        let mut rng = StdRng::seed_from_u64(9);
        let q = rand_tensor(&mut rng, 4, 4);
        let k = rand_tensor(&mut rng, 4, 4);
        let v = rand_tensor(&mut rng, 4, 4);
        grad_check(
            |g, ts| {
                let q = g.param(ts[0].clone());
                let k = g.param(ts[1].clone());
                let v = g.param(ts[2].clone());
                let kt = g.transpose(k).unwrap();
                let scores = g.matmul(q, kt).unwrap();
                let scores = g.scale(scores, 0.5).unwrap();
                let attn = g.softmax_rows(scores).unwrap();
                let out = g.matmul(attn, v).unwrap();
                let sq = g.mul_elem(out, out).unwrap();
                g.sum_all(sq).unwrap()
            },
            &[q, k, v],
            1e-4,
        );
    }

    #[test]
    fn gradcheck_gather_scatter_ops() {
        let mut rng = StdRng::seed_from_u64(10);
        let x = rand_tensor(&mut rng, 5, 3);
        let bias = rand_tensor(&mut rng, 1, 3);
        grad_check(
            |g, ts| {
                let x = g.param(ts[0].clone());
                let bias = g.param(ts[1].clone());
                let picked = g.select_rows(x, &[0, 2, 2, 4]).unwrap();
                let biased = g.add_row_bias(picked, bias).unwrap();
                let agg = g
                    .aggregate_rows(biased, &[vec![0, 1], vec![2, 3], vec![]], false)
                    .unwrap();
                let agg2 = g
                    .aggregate_rows(biased, &[vec![0, 1, 2], vec![3]], true)
                    .unwrap();
                let both = g.concat_rows(&[agg, agg2]).unwrap();
                let sq = g.mul_elem(both, both).unwrap();
                g.sum_all(sq).unwrap()
            },
            &[x, bias],
            1e-4,
        );
    }

    #[test]
    fn gradcheck_ln_clamp_sub_concat() {
        let mut rng = StdRng::seed_from_u64(11);
        let x = Tensor::from_vec(
            3,
            2,
            (0..6).map(|_| rng.gen_range(0.1..0.9)).collect(),
        );
        let y = rand_tensor(&mut rng, 3, 2);
        grad_check(
            |g, ts| {
                let x = g.param(ts[0].clone());
                let y = g.param(ts[1].clone());
                let c = g.clamp(x, 1e-12, 1.0 - 1e-12).unwrap();
                let l = g.ln(c).unwrap();
                let d = g.sub(l, y).unwrap();
                let cat = g.concat_cols(d, y).unwrap();
                let s = g.sum_rows(cat).unwrap();
                let sq = g.mul_elem(s, s).unwrap();
                g.sum_all(sq).unwrap()
            },
            &[x, y],
            1e-4,
        );
    }

    #[test]
    fn gradcheck_spmm() {
        let mut rng = StdRng::seed_from_u64(12);
        let x = rand_tensor(&mut rng, 4, 3);
        let m = CsrMatrix::from_triplets(
            4,
            4,
            vec![(0, 0, 0.5), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 0.5), (2, 3, 1.0), (3, 2, 1.0)],
        );
        let mcopy = m.clone();
        grad_check(
            move |g, ts| {
                let x = g.param(ts[0].clone());
                let mid = g.sparse(mcopy.clone());
                let y = g.spmm(mid, x).unwrap();
                let sq = g.mul_elem(y, y).unwrap();
                g.sum_all(sq).unwrap()
            },
            &[x],
            1e-4,
        );
        let _ = m;
    }

    #[test]
    fn spmm_matches_dense_matmul() {
        let mut rng = StdRng::seed_from_u64(13);
        let triplets: Vec<(usize, usize, f64)> = (0..40)
            .map(|_| {
                (
                    rng.gen_range(0..10usize),
                    rng.gen_range(0..10usize),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let m = CsrMatrix::from_triplets(10, 10, triplets);
        let x = rand_tensor(&mut rng, 10, 4);
        let sparse = m.mul_dense(&x);
        let dense = m.to_dense().matmul(&x);
        for (a, b) in sparse.data().iter().zip(dense.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(2, 2));
        assert!(g.backward(x).is_err());
    }
}
