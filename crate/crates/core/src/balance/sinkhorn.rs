//! Debiased entropic optimal transport in scaling form.
//!
//! `S(a, b) = OT_eps(a, b) - OT_eps(a, a)/2 - OT_eps(b, b)/2`, where each
//! `OT_eps` is the dual value `<f, a> + <g, b>` of the converged Sinkhorn
//! fixed point. Iterations are recorded on the tape, so gradients flow
//! through the unrolled loop rather than an implicit-function shortcut.
//!
//! The argument pair is put into a canonical order before solving, which
//! makes the divergence exactly symmetric under swapping `a` and `b`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::balance::cloud::WeightedCloud;
use crate::diff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Entropic solver settings. The cost is always squared euclidean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    /// Entropic regularization strength.
    pub epsilon: f64,
    /// Iteration cap per transport solve.
    pub max_iter: usize,
    /// Stop once the L1 row-marginal violation falls below this.
    pub stop_tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        SinkhornConfig {
            epsilon: 0.1,
            max_iter: 200,
            stop_tol: 1e-6,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be >= 1".into()));
        }
        if !(self.stop_tol > 0.0) {
            return Err(Error::Config(format!("stop_tol must be > 0, got {}", self.stop_tol)));
        }
        Ok(())
    }
}

/// Pairwise squared-euclidean cost between the rows of `x` and `y`.
fn sq_cost(tape: &mut Tape, x: NodeId, y: NodeId) -> Result<NodeId> {
    let xx = tape.mul(x, x)?;
    let sx = tape.row_sum(xx);
    let sy = if x == y {
        sx
    } else {
        let yy = tape.mul(y, y)?;
        tape.row_sum(yy)
    };
    let yt = tape.transpose(y);
    let gram = tape.matmul(x, yt)?;
    let g2 = tape.scale(gram, -2.0);
    let syt = tape.transpose(sy);
    let partial = tape.add_row(g2, syt)?;
    tape.add_col(partial, sx)
}

/// Drop rows whose weight is exactly zero; they carry no mass and would
/// otherwise poison the scaling iterations through 0 * inf products.
fn positive_support(
    tape: &mut Tape,
    points: NodeId,
    weights: NodeId,
) -> Result<(NodeId, NodeId)> {
    let w = tape.value(weights);
    if w.cols() != 1 {
        return Err(Error::Shape(format!(
            "weights must be a column vector, got {:?}",
            w.shape()
        )));
    }
    let keep: Vec<usize> = w
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(Error::DegenerateGroup("cloud carries no mass".into()));
    }
    if keep.len() == w.rows() {
        return Ok((points, weights));
    }
    let p = tape.gather(points, keep.clone())?;
    let w = tape.gather(weights, keep)?;
    Ok((p, w))
}

/// L1 violation of the row marginal `a` for the pair `(u, K(b*v))`.
fn row_violation(a: &Matrix, u: &Matrix, kbv: &Matrix) -> f64 {
    a.data()
        .iter()
        .zip(u.data())
        .zip(kbv.data())
        .map(|((&ai, &ui), &ki)| ai * (ui * ki - 1.0).abs())
        .sum()
}

/// One entropic transport solve; returns the dual value node.
fn ot_dual(
    tape: &mut Tape,
    k: NodeId,
    kt: NodeId,
    a: NodeId,
    b: NodeId,
    cfg: &SinkhornConfig,
) -> Result<NodeId> {
    let m = tape.value(b).rows();
    let ones_b = tape.constant(Matrix::zeros(m, 1).map(|_| 1.0));

    let mut u_prev: Option<NodeId> = None;
    let mut v = ones_b;
    let mut converged: Option<(NodeId, NodeId)> = None;
    let mut last_viol = f64::INFINITY;

    for it in 0..cfg.max_iter {
        let bv = tape.mul(b, v)?;
        let kbv = tape.matmul(k, bv)?;
        if let Some(up) = u_prev {
            last_viol = row_violation(tape.value(a), tape.value(up), tape.value(kbv));
            if last_viol < cfg.stop_tol {
                converged = Some((up, v));
                break;
            }
        }
        if tape
            .value(kbv)
            .data()
            .iter()
            .any(|&x| x <= 0.0 || !x.is_finite())
        {
            return Err(Error::NonFinite {
                stage: format!("sinkhorn kernel underflow at iteration {it}; increase epsilon"),
                value: 0.0,
            });
        }
        let u = tape.recip(kbv);
        let au = tape.mul(a, u)?;
        let ktau = tape.matmul(kt, au)?;
        if tape
            .value(ktau)
            .data()
            .iter()
            .any(|&x| x <= 0.0 || !x.is_finite())
        {
            return Err(Error::NonFinite {
                stage: format!("sinkhorn kernel underflow at iteration {it}; increase epsilon"),
                value: 0.0,
            });
        }
        v = tape.recip(ktau);
        u_prev = Some(u);
    }

    let (u, v) = converged.ok_or(Error::NoConvergence {
        iterations: cfg.max_iter,
        violation: last_viol,
        tolerance: cfg.stop_tol,
    })?;

    let eps = cfg.epsilon;
    let lu = tape.ln(u);
    let f = tape.scale(lu, eps);
    let lv = tape.ln(v);
    let g = tape.scale(lv, eps);
    let af = tape.dot(a, f)?;
    let bg = tape.dot(b, g)?;
    tape.add(af, bg)
}

fn cloud_order(tape: &Tape, xa: NodeId, wa: NodeId, xb: NodeId, wb: NodeId) -> Ordering {
    let lex = |p: &Matrix, q: &Matrix| -> Ordering {
        p.rows()
            .cmp(&q.rows())
            .then_with(|| p.cols().cmp(&q.cols()))
            .then_with(|| {
                for (x, y) in p.data().iter().zip(q.data()) {
                    let c = x.total_cmp(y);
                    if c != Ordering::Equal {
                        return c;
                    }
                }
                Ordering::Equal
            })
    };
    lex(tape.value(xa), tape.value(xb)).then_with(|| lex(tape.value(wa), tape.value(wb)))
}

/// Debiased divergence between two weighted clouds given as tape nodes.
/// `xa`/`xb` are point matrices, `wa`/`wb` column weight vectors. Gradients
/// w.r.t. any of them are available through the tape.
pub fn sinkhorn_divergence_on_tape(
    tape: &mut Tape,
    xa: NodeId,
    wa: NodeId,
    xb: NodeId,
    wb: NodeId,
    cfg: &SinkhornConfig,
) -> Result<NodeId> {
    cfg.validate()?;
    if tape.value(xa).cols() != tape.value(xb).cols() {
        return Err(Error::Shape(format!(
            "cloud dims differ: {} vs {}",
            tape.value(xa).cols(),
            tape.value(xb).cols()
        )));
    }
    if tape.value(wa).rows() != tape.value(xa).rows()
        || tape.value(wb).rows() != tape.value(xb).rows()
    {
        return Err(Error::Shape("weight length must match point count".into()));
    }

    let (xa, wa) = positive_support(tape, xa, wa)?;
    let (xb, wb) = positive_support(tape, xb, wb)?;

    // Canonical argument order: makes the value independent of which cloud
    // the caller passed first, bit for bit.
    let (xa, wa, xb, wb) = if cloud_order(tape, xb, wb, xa, wa) == Ordering::Less {
        (xb, wb, xa, wa)
    } else {
        (xa, wa, xb, wb)
    };

    let shared = xa == xb;
    let inv_eps = -1.0 / cfg.epsilon;

    let d_ab = sq_cost(tape, xa, xb)?;
    let scaled_ab = tape.scale(d_ab, inv_eps);
    let k_ab = tape.exp(scaled_ab);
    let kt_ab = tape.transpose(k_ab);

    let (k_aa, kt_aa, k_bb, kt_bb) = if shared {
        (k_ab, kt_ab, k_ab, kt_ab)
    } else {
        let d_aa = sq_cost(tape, xa, xa)?;
        let s_aa = tape.scale(d_aa, inv_eps);
        let k_aa = tape.exp(s_aa);
        let kt_aa = tape.transpose(k_aa);
        let d_bb = sq_cost(tape, xb, xb)?;
        let s_bb = tape.scale(d_bb, inv_eps);
        let k_bb = tape.exp(s_bb);
        let kt_bb = tape.transpose(k_bb);
        (k_aa, kt_aa, k_bb, kt_bb)
    };

    let ot_ab = ot_dual(tape, k_ab, kt_ab, wa, wb, cfg)?;
    let ot_aa = ot_dual(tape, k_aa, kt_aa, wa, wa, cfg)?;
    let ot_bb = ot_dual(tape, k_bb, kt_bb, wb, wb, cfg)?;

    let haa = tape.scale(ot_aa, 0.5);
    let hbb = tape.scale(ot_bb, 0.5);
    let bias = tape.add(haa, hbb)?;
    tape.sub(ot_ab, bias)
}

/// Divergence value between two clouds.
pub fn sinkhorn_divergence(
    a: &WeightedCloud,
    b: &WeightedCloud,
    cfg: &SinkhornConfig,
) -> Result<f64> {
    let mut tape = Tape::new();
    let xa = tape.constant(a.points.clone());
    let wa = tape.constant(Matrix::column_vector(&a.weights));
    let xb = tape.constant(b.points.clone());
    let wb = tape.constant(Matrix::column_vector(&b.weights));
    let out = sinkhorn_divergence_on_tape(&mut tape, xa, wa, xb, wb, cfg)?;
    Ok(tape.scalar(out))
}

/// Balance term of a binary grouping: the divergence between the two
/// probability-weighted subgroup measures of `z`. Differentiable w.r.t. `z`
/// (and the weights, when `prob1` carries gradient elsewhere).
pub fn ipm_term(
    tape: &mut Tape,
    z: NodeId,
    prob1: &[f64],
    cfg: &SinkhornConfig,
) -> Result<NodeId> {
    let n = tape.value(z).rows();
    if n != prob1.len() {
        return Err(Error::Shape(format!(
            "{n} representation rows vs {} probabilities",
            prob1.len()
        )));
    }
    let total1: f64 = prob1.iter().sum();
    let total0: f64 = prob1.iter().map(|p| 1.0 - p).sum();
    if total1 < super::cloud::MASS_FLOOR || total0 < super::cloud::MASS_FLOOR {
        return Err(Error::DegenerateGroup(format!(
            "group masses {total1:.3e} / {total0:.3e}"
        )));
    }
    let w1: Vec<f64> = prob1.iter().map(|p| p / total1).collect();
    let w0: Vec<f64> = prob1.iter().map(|p| (1.0 - p) / total0).collect();
    let wa = tape.constant(Matrix::column_vector(&w1));
    let wb = tape.constant(Matrix::column_vector(&w0));
    sinkhorn_divergence_on_tape(tape, z, wa, z, wb, cfg)
}

/// Value-only convenience around [`ipm_term`].
pub fn ipm_term_value(z: &Matrix, prob1: &[f64], cfg: &SinkhornConfig) -> Result<f64> {
    let mut tape = Tape::new();
    let zid = tape.constant(z.clone());
    let out = ipm_term(&mut tape, zid, prob1, cfg)?;
    Ok(tape.scalar(out))
}
