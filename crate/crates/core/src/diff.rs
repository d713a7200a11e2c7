//! Reverse-mode differentiation over a recorded operation tape.
//!
//! Every forward primitive appends one entry to the tape; `backward` replays
//! the entries in reverse, accumulating vector-Jacobian products. Values are
//! computed eagerly, so replaying the same inputs reproduces identical node
//! values by construction.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::params::ParamSet;

/// Probability clamp applied by sigmoid heads before any log.
pub const PROB_CLAMP: f64 = 1e-6;

/// Handle to a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: NodeId, b: NodeId },
    Transpose { x: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Div { a: NodeId, b: NodeId },
    AddRow { m: NodeId, row: NodeId },
    AddCol { m: NodeId, col: NodeId },
    Scale { x: NodeId, c: f64 },
    AddScalar { x: NodeId },
    Relu { x: NodeId },
    SigmoidClamped { x: NodeId },
    Exp { x: NodeId },
    Ln { x: NodeId },
    Recip { x: NodeId },
    RowSum { x: NodeId },
    ColSum { x: NodeId },
    Sum { x: NodeId },
    Mean { x: NodeId },
    Gather { x: NodeId, rows: Vec<usize> },
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Operation tape. Create one per loss evaluation.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
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

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Constant input; no gradient is tracked through it.
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Differentiable input (a parameter or any tensor whose gradient is wanted).
    pub fn input(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].value.len(), 1);
        self.nodes[id.0].value.data()[0]
    }

    // ── primitives ──────────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMul { a, b }, needs))
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).transpose();
        let needs = self.needs(x);
        self.push(value, Op::Transpose { x }, needs)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add { a, b }, needs))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Sub { a, b }, needs))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul { a, b }, needs))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x / y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Div { a, b }, needs))
    }

    /// Add a 1 x k row vector to every row of an n x k matrix.
    pub fn add_row(&mut self, m: NodeId, row: NodeId) -> Result<NodeId> {
        let (mr, mc) = self.value(m).shape();
        let (rr, rc) = self.value(row).shape();
        if rr != 1 || rc != mc {
            return Err(Error::Shape(format!(
                "add_row: matrix {mr}x{mc} with row {rr}x{rc}"
            )));
        }
        let mut value = self.value(m).clone();
        let rowv = self.value(row).data().to_vec();
        for i in 0..mr {
            let base = i * mc;
            for (j, r) in rowv.iter().enumerate() {
                value.data_mut()[base + j] += r;
            }
        }
        let needs = self.needs(m) || self.needs(row);
        Ok(self.push(value, Op::AddRow { m, row }, needs))
    }

    /// Add an n x 1 column vector to every column of an n x k matrix.
    pub fn add_col(&mut self, m: NodeId, col: NodeId) -> Result<NodeId> {
        let (mr, mc) = self.value(m).shape();
        let (cr, cc) = self.value(col).shape();
        if cc != 1 || cr != mr {
            return Err(Error::Shape(format!(
                "add_col: matrix {mr}x{mc} with column {cr}x{cc}"
            )));
        }
        let mut value = self.value(m).clone();
        let colv = self.value(col).data().to_vec();
        for i in 0..mr {
            let base = i * mc;
            for j in 0..mc {
                value.data_mut()[base + j] += colv[i];
            }
        }
        let needs = self.needs(m) || self.needs(col);
        Ok(self.push(value, Op::AddCol { m, col }, needs))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = self.value(x).map(|v| v * c);
        let needs = self.needs(x);
        self.push(value, Op::Scale { x, c }, needs)
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = self.value(x).map(|v| v + c);
        let needs = self.needs(x);
        self.push(value, Op::AddScalar { x }, needs)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        let needs = self.needs(x);
        self.push(value, Op::Relu { x }, needs)
    }

    /// Sigmoid clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
    pub fn sigmoid_clamped(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| {
            let s = 1.0 / (1.0 + (-v).exp());
            s.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
        });
        let needs = self.needs(x);
        self.push(value, Op::SigmoidClamped { x }, needs)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(f64::exp);
        let needs = self.needs(x);
        self.push(value, Op::Exp { x }, needs)
    }

    pub fn ln(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(f64::ln);
        let needs = self.needs(x);
        self.push(value, Op::Ln { x }, needs)
    }

    pub fn recip(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| 1.0 / v);
        let needs = self.needs(x);
        self.push(value, Op::Recip { x }, needs)
    }

    /// Sum over columns, n x k -> n x 1.
    pub fn row_sum(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.value(x).shape();
        let mut value = Matrix::zeros(r, 1);
        for i in 0..r {
            value.data_mut()[i] = self.value(x).row(i).iter().sum();
        }
        let _ = c;
        let needs = self.needs(x);
        self.push(value, Op::RowSum { x }, needs)
    }

    /// Sum over rows, n x k -> 1 x k.
    pub fn col_sum(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.value(x).shape();
        let mut value = Matrix::zeros(1, c);
        for i in 0..r {
            for (acc, &v) in value.data_mut().iter_mut().zip(self.value(x).row(i)) {
                *acc += v;
            }
        }
        let needs = self.needs(x);
        self.push(value, Op::ColSum { x }, needs)
    }

    /// Sum of all entries -> 1 x 1.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total: f64 = self.value(x).data().iter().sum();
        let needs = self.needs(x);
        self.push(
            Matrix::from_vec(1, 1, vec![total]).expect("1x1"),
            Op::Sum { x },
            needs,
        )
    }

    /// Mean of all entries -> 1 x 1.
    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).len().max(1) as f64;
        let total: f64 = self.value(x).data().iter().sum();
        let needs = self.needs(x);
        self.push(
            Matrix::from_vec(1, 1, vec![total / n]).expect("1x1"),
            Op::Mean { x },
            needs,
        )
    }

    /// Select rows of `x` by index; backward scatter-adds.
    pub fn gather(&mut self, x: NodeId, rows: Vec<usize>) -> Result<NodeId> {
        let (r, _) = self.value(x).shape();
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(Error::Shape(format!("gather row {bad} out of {r}")));
        }
        let value = self.value(x).select_rows(&rows);
        let needs = self.needs(x);
        Ok(self.push(value, Op::Gather { x, rows }, needs))
    }

    /// Dot product of two equally shaped nodes -> 1 x 1.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let p = self.mul(a, b)?;
        Ok(self.sum(p))
    }

    // ── backward ────────────────────────────────────────────────

    /// Reverse accumulation from a scalar output node. Returns per-node
    /// gradients; entries are `None` where no gradient flowed.
    pub fn backward(&self, output: NodeId) -> Result<Vec<Option<Matrix>>> {
        let out_val = &self.nodes[output.0].value;
        if out_val.len() != 1 {
            return Err(Error::Argument(format!(
                "backward needs a scalar output, got {:?}",
                out_val.shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Matrix::from_vec(1, 1, vec![1.0])?);

        for idx in (0..=output.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let d_out = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.backward_op(idx, &d_out, &mut grads)?;
            grads[idx] = Some(d_out);
        }
        Ok(grads)
    }

    fn accumulate(grads: &mut [Option<Matrix>], id: NodeId, delta: Matrix) {
        match &mut grads[id.0] {
            Some(g) => {
                for (gi, di) in g.data_mut().iter_mut().zip(delta.data()) {
                    *gi += di;
                }
            }
            slot => *slot = Some(delta),
        }
    }

    fn backward_op(
        &self,
        idx: usize,
        d_out: &Matrix,
        grads: &mut [Option<Matrix>],
    ) -> Result<()> {
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                if self.needs(*a) {
                    let bt = self.value(*b).transpose();
                    Self::accumulate(grads, *a, d_out.matmul(&bt)?);
                }
                if self.needs(*b) {
                    let at = self.value(*a).transpose();
                    Self::accumulate(grads, *b, at.matmul(d_out)?);
                }
            }
            Op::Transpose { x } => {
                if self.needs(*x) {
                    Self::accumulate(grads, *x, d_out.transpose());
                }
            }
            Op::Add { a, b } => {
                if self.needs(*a) {
                    Self::accumulate(grads, *a, d_out.clone());
                }
                if self.needs(*b) {
                    Self::accumulate(grads, *b, d_out.clone());
                }
            }
            Op::Sub { a, b } => {
                if self.needs(*a) {
                    Self::accumulate(grads, *a, d_out.clone());
                }
                if self.needs(*b) {
                    Self::accumulate(grads, *b, d_out.map(|v| -v));
                }
            }
            Op::Mul { a, b } => {
                if self.needs(*a) {
                    Self::accumulate(grads, *a, d_out.zip_map(self.value(*b), |d, y| d * y)?);
                }
                if self.needs(*b) {
                    Self::accumulate(grads, *b, d_out.zip_map(self.value(*a), |d, x| d * x)?);
                }
            }
            Op::Div { a, b } => {
                if self.needs(*a) {
                    Self::accumulate(grads, *a, d_out.zip_map(self.value(*b), |d, y| d / y)?);
                }
                if self.needs(*b) {
                    // d/db (a/b) = -a / b^2 = -value / b
                    let val = &self.nodes[idx].value;
                    let tmp = d_out.zip_map(val, |d, z| d * z)?;
                    Self::accumulate(grads, *b, tmp.zip_map(self.value(*b), |t, y| -t / y)?);
                }
            }
            Op::AddRow { m, row } => {
                if self.needs(*m) {
                    Self::accumulate(grads, *m, d_out.clone());
                }
                if self.needs(*row) {
                    let (r, c) = d_out.shape();
                    let mut acc = Matrix::zeros(1, c);
                    for i in 0..r {
                        for (a, &v) in acc.data_mut().iter_mut().zip(d_out.row(i)) {
                            *a += v;
                        }
                    }
                    Self::accumulate(grads, *row, acc);
                }
            }
            Op::AddCol { m, col } => {
                if self.needs(*m) {
                    Self::accumulate(grads, *m, d_out.clone());
                }
                if self.needs(*col) {
                    let (r, _c) = d_out.shape();
                    let mut acc = Matrix::zeros(r, 1);
                    for i in 0..r {
                        acc.data_mut()[i] = d_out.row(i).iter().sum();
                    }
                    Self::accumulate(grads, *col, acc);
                }
            }
            Op::Scale { x, c } => {
                if self.needs(*x) {
                    Self::accumulate(grads, *x, d_out.map(|v| v * c));
                }
            }
            Op::AddScalar { x } => {
                if self.needs(*x) {
                    Self::accumulate(grads, *x, d_out.clone());
                }
            }
            Op::Relu { x } => {
                if self.needs(*x) {
                    Self::accumulate(
                        grads,
                        *x,
                        d_out.zip_map(self.value(*x), |d, v| if v > 0.0 { d } else { 0.0 })?,
                    );
                }
            }
            Op::SigmoidClamped { x } => {
                if self.needs(*x) {
                    // Zero slope in the clamped region, matching the computed value.
                    let y = &self.nodes[idx].value;
                    Self::accumulate(
                        grads,
                        *x,
                        d_out.zip_map(y, |d, s| {
                            if s > PROB_CLAMP && s < 1.0 - PROB_CLAMP {
                                d * s * (1.0 - s)
                            } else {
                                0.0
                            }
                        })?,
                    );
                }
            }
            Op::Exp { x } => {
                if self.needs(*x) {
                    let y = &self.nodes[idx].value;
                    Self::accumulate(grads, *x, d_out.zip_map(y, |d, e| d * e)?);
                }
            }
            Op::Ln { x } => {
                if self.needs(*x) {
                    Self::accumulate(grads, *x, d_out.zip_map(self.value(*x), |d, v| d / v)?);
                }
            }
            Op::Recip { x } => {
                if self.needs(*x) {
                    let y = &self.nodes[idx].value;
                    Self::accumulate(grads, *x, d_out.zip_map(y, |d, r| -d * r * r)?);
                }
            }
            Op::RowSum { x } => {
                if self.needs(*x) {
                    let (r, c) = self.value(*x).shape();
                    let mut g = Matrix::zeros(r, c);
                    for i in 0..r {
                        let d = d_out.data()[i];
                        for j in 0..c {
                            g.set(i, j, d);
                        }
                    }
                    Self::accumulate(grads, *x, g);
                }
            }
            Op::ColSum { x } => {
                if self.needs(*x) {
                    let (r, c) = self.value(*x).shape();
                    let mut g = Matrix::zeros(r, c);
                    for i in 0..r {
                        for j in 0..c {
                            g.set(i, j, d_out.data()[j]);
                        }
                    }
                    Self::accumulate(grads, *x, g);
                }
            }
            Op::Sum { x } => {
                if self.needs(*x) {
                    let d = d_out.data()[0];
                    let (r, c) = self.value(*x).shape();
                    Self::accumulate(grads, *x, Matrix::zeros(r, c).map(|_| d));
                }
            }
            Op::Mean { x } => {
                if self.needs(*x) {
                    let (r, c) = self.value(*x).shape();
                    let d = d_out.data()[0] / self.value(*x).len().max(1) as f64;
                    Self::accumulate(grads, *x, Matrix::zeros(r, c).map(|_| d));
                }
            }
            Op::Gather { x, rows } => {
                if self.needs(*x) {
                    let (r, c) = self.value(*x).shape();
                    let mut g = Matrix::zeros(r, c);
                    for (k, &i) in rows.iter().enumerate() {
                        for j in 0..c {
                            let cur = g.get(i, j);
                            g.set(i, j, cur + d_out.get(k, j));
                        }
                    }
                    Self::accumulate(grads, *x, g);
                }
            }
        }
        Ok(())
    }
}

/// Evaluate a tape-built scalar loss of `params` and return `(value, grads)`.
///
/// The closure receives the tape and one differentiable node per parameter
/// tensor, in `params` order. Gradients come back in a `ParamSet` with the
/// same names and shapes; parameters the loss never touches get zeros.
/// A non-finite loss is reported as a numeric error carrying `stage`.
pub fn value_and_grad<F>(params: &ParamSet, stage: &str, build: F) -> Result<(f64, ParamSet)>
where
    F: FnOnce(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = params
        .iter()
        .map(|p| tape.input(p.value.clone()))
        .collect();
    let loss_id = build(&mut tape, &ids)?;
    let loss = tape.scalar(loss_id);
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            stage: stage.to_string(),
            value: loss,
        });
    }
    let grads = tape.backward(loss_id)?;
    let mut out = params.zeros_like();
    for (slot, id) in out.iter_mut().zip(ids.iter()) {
        if let Some(g) = &grads[id.0] {
            slot.value = g.clone();
        }
    }
    Ok((loss, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Param, ParamKind};

    fn single_param(values: Vec<f64>) -> ParamSet {
        let n = values.len();
        let mut ps = ParamSet::new();
        ps.push(Param {
            name: "w0".into(),
            kind: ParamKind::Weight,
            value: Matrix::from_vec(1, n, values).unwrap(),
        })
        .unwrap();
        ps
    }

    #[test]
    fn quadratic_gradient_equals_params() {
        // loss = 0.5 * sum(p^2)  =>  grad = p
        let params = single_param(vec![1.0, -2.0, 3.0]);
        let (loss, grads) = value_and_grad(&params, "test", |tape, ids| {
            let sq = tape.mul(ids[0], ids[0])?;
            let s = tape.sum(sq);
            Ok(tape.scale(s, 0.5))
        })
        .unwrap();
        assert!((loss - 7.0).abs() < 1e-12);
        assert_eq!(grads.get("w0").unwrap().value.data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn constant_loss_zero_gradient() {
        let params = single_param(vec![1.0, 2.0]);
        let (loss, grads) = value_and_grad(&params, "test", |tape, _ids| {
            Ok(tape.constant(Matrix::from_vec(1, 1, vec![5.0]).unwrap()))
        })
        .unwrap();
        assert_eq!(loss, 5.0);
        assert_eq!(grads.get("w0").unwrap().value.data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_finite_loss_reports_stage() {
        let params = single_param(vec![0.0]);
        let err = value_and_grad(&params, "civ", |tape, ids| tape.ln(ids[0]).pipe_ok())
            .unwrap_err();
        match err {
            Error::NonFinite { stage, .. } => assert_eq!(stage, "civ"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn gather_scatter_adds() {
        let params = single_param(vec![1.0, 2.0, 3.0]);
        // gather row 0 twice from a 3x1 reshape via transpose
        let (_, grads) = value_and_grad(&params, "test", |tape, ids| {
            let col = tape.transpose(ids[0]); // 3x1
            let g = tape.gather(col, vec![0, 0, 2])?;
            Ok(tape.sum(g))
        })
        .unwrap();
        assert_eq!(grads.get("w0").unwrap().value.data(), &[2.0, 0.0, 1.0]);
    }

    trait PipeOk: Sized {
        fn pipe_ok(self) -> Result<Self> {
            Ok(self)
        }
    }
    impl PipeOk for NodeId {}
}
