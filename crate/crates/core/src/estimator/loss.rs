//! Loss builders shared by training and by the gradient-check oracles.

use crate::balance::{ipm_term, SinkhornConfig};
use crate::diff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::mlp::{l2_penalty_on_tape, mlp_forward_on_tape, mlp_nodes_from_ids, MlpSpec};

/// Binary cross-entropy of clamped sigmoid predictions against 0/1 targets:
/// `-(1/n) sum(t log p + (1-t) log(1-p))`.
pub fn bce_loss_on_tape(
    tape: &mut Tape,
    spec: &MlpSpec,
    param_ids: &[NodeId],
    x: NodeId,
    targets: &[f64],
) -> Result<NodeId> {
    let n = tape.value(x).rows();
    if targets.len() != n {
        return Err(Error::Shape(format!(
            "{n} inputs vs {} targets",
            targets.len()
        )));
    }
    let nodes = mlp_nodes_from_ids(spec, param_ids)?;
    let p = mlp_forward_on_tape(tape, spec, &nodes, x)?;
    let t = tape.constant(Matrix::column_vector(targets));
    let one_minus_t = tape.constant(Matrix::column_vector(
        &targets.iter().map(|v| 1.0 - v).collect::<Vec<_>>(),
    ));
    let ln_p = tape.ln(p);
    let neg_p = tape.scale(p, -1.0);
    let q = tape.add_scalar(neg_p, 1.0);
    let ln_q = tape.ln(q);
    let pos = tape.mul(t, ln_p)?;
    let neg = tape.mul(one_minus_t, ln_q)?;
    let s = tape.add(pos, neg)?;
    let m = tape.mean(s);
    Ok(tape.scale(m, -1.0))
}

/// Node-id layout of the jointly trained stage-three parameters:
/// representation tensors first, then head one, then head zero, matching the
/// combined `ParamSet` order.
pub struct OutcomeLossParts<'a> {
    pub repr_spec: &'a MlpSpec,
    pub head1_spec: &'a MlpSpec,
    pub head0_spec: &'a MlpSpec,
    pub alpha: f64,
    pub beta: f64,
    pub l2_lambda: f64,
    pub sinkhorn: &'a SinkhornConfig,
}

/// The stage-three objective on a batch:
/// `mean((y - f1(z) pw - f0(z)(1 - pw))^2) + alpha D_W + beta D_S + l2`.
///
/// `pw` is the frozen treatment probability `P(w=1 | s, c)` and `ps` the
/// frozen instrument probability `P(s=1 | c)`. A balance term whose groups
/// are degenerate is dropped and recorded in `warnings`.
pub fn outcome_loss_on_tape(
    tape: &mut Tape,
    parts: &OutcomeLossParts<'_>,
    param_ids: &[NodeId],
    c: NodeId,
    y: &[f64],
    pw: &[f64],
    ps: &[f64],
    warnings: &mut Vec<String>,
) -> Result<NodeId> {
    let n = tape.value(c).rows();
    if y.len() != n || pw.len() != n || ps.len() != n {
        return Err(Error::Shape(format!(
            "batch size mismatch: c {n}, y {}, pw {}, ps {}",
            y.len(),
            pw.len(),
            ps.len()
        )));
    }
    let n_repr = 2 * parts.repr_spec.num_layers();
    let n_h1 = 2 * parts.head1_spec.num_layers();
    let n_h0 = 2 * parts.head0_spec.num_layers();
    if param_ids.len() != n_repr + n_h1 + n_h0 {
        return Err(Error::Shape(format!(
            "expected {} parameter nodes, got {}",
            n_repr + n_h1 + n_h0,
            param_ids.len()
        )));
    }
    let repr_nodes = mlp_nodes_from_ids(parts.repr_spec, &param_ids[..n_repr])?;
    let h1_nodes = mlp_nodes_from_ids(parts.head1_spec, &param_ids[n_repr..n_repr + n_h1])?;
    let h0_nodes = mlp_nodes_from_ids(parts.head0_spec, &param_ids[n_repr + n_h1..])?;

    let z = mlp_forward_on_tape(tape, parts.repr_spec, &repr_nodes, c)?;
    let f1 = mlp_forward_on_tape(tape, parts.head1_spec, &h1_nodes, z)?;
    let f0 = mlp_forward_on_tape(tape, parts.head0_spec, &h0_nodes, z)?;

    let pw_node = tape.constant(Matrix::column_vector(pw));
    let pw0_node = tape.constant(Matrix::column_vector(
        &pw.iter().map(|v| 1.0 - v).collect::<Vec<_>>(),
    ));
    let y_node = tape.constant(Matrix::column_vector(y));

    let treated = tape.mul(f1, pw_node)?;
    let control = tape.mul(f0, pw0_node)?;
    let y_hat = tape.add(treated, control)?;
    let resid = tape.sub(y_node, y_hat)?;
    let sq = tape.mul(resid, resid)?;
    let mut loss = tape.mean(sq);

    for (weight, probs, label) in [
        (parts.alpha, pw, "treatment"),
        (parts.beta, ps, "instrument"),
    ] {
        if weight <= 0.0 {
            continue;
        }
        match ipm_term(tape, z, probs, parts.sinkhorn) {
            Ok(term) => {
                let scaled = tape.scale(term, weight);
                loss = tape.add(loss, scaled)?;
            }
            Err(Error::DegenerateGroup(msg)) =>. {
                warnings.push(format!("{label} balance term skipped: {msg}"));
            }
            Err(other) => return Err(other),
        }
    }

    if parts.l2_lambda > 0.0 {
        let weight_ids: Vec<NodeId> = repr_nodes
            .layers
            .iter()
            .chain(h1_nodes.layers.iter())
            .chain(h0_nodes.layers.iter())
            .map(|&(w, _)| w)
            .collect();
        let pen = l2_penalty_on_tape(tape, &weight_ids, parts.l2_lambda)?;
        loss = tape.add(loss, pen)?;
    }
    Ok(loss)
}

/// Value-only wrapper over [`outcome_loss_on_tape`] for fixed parameters.
#[allow(clippy::too_many_arguments)]
pub fn outcome_loss_value(
    parts: &OutcomeLossParts<'_>,
    params: &crate::params::ParamSet,
    c: &Matrix,
    y: &[f64],
    pw: &[f64],
    ps: &[f64],
    warnings: &mut Vec<String>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = params.iter().map(|p| tape.input(p.value.clone())).collect();
    let c_id = tape.constant(c.clone());
    let loss = outcome_loss_on_tape(&mut tape, parts, &ids, c_id, y, pw, ps, warnings)?;
    Ok(tape.scalar(loss))
}
