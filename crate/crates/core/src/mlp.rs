//! Dense feed-forward networks: spec, seeded init, forward passes.

use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::diff::{NodeId, Tape, PROB_CLAMP};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::params::{Param, ParamKind, ParamSet};
use crate::rng::{substream, Stream};

/// Activation for hidden layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HiddenActivation {
    Relu,
}

/// Activation for the output layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    /// Probability head, clamped to `[1e-6, 1 - 1e-6]`.
    Sigmoid,
    Identity,
}

/// Architecture description. `(spec, init_seed)` fully determines the
/// parameter count and initial values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
    pub init_seed: u64,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden_dims: Vec<usize>,
        output_dim: usize,
        output_activation: OutputActivation,
        init_seed: u64,
    ) -> Self {
        MlpSpec {
            input_dim,
            hidden_dims,
            output_dim,
            hidden_activation: HiddenActivation::Relu,
            output_activation,
            init_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("mlp dims must be >= 1".into()));
        }
        if self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("hidden dims must be >= 1".into()));
        }
        Ok(())
    }

    /// Layer widths including input and output.
    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_dims.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden_dims);
        w.push(self.output_dim);
        w
    }

    pub fn num_layers(&self) -> usize {
        self.hidden_dims.len() + 1
    }

    /// Total parameter count implied by the widths.
    pub fn param_count(&self) -> usize {
        let w = self.widths();
        w.windows(2).map(|d| d[0] * d[1] + d[1]).sum()
    }
}

/// Scaled-uniform init: weights U(-l, l) with l = sqrt(6 / (fan_in + fan_out)),
/// biases zero. Deterministic given `(spec, spec.init_seed)`.
pub fn mlp_init(spec: &MlpSpec) -> Result<ParamSet> {
    spec.validate()?;
    let mut rng = substream(spec.init_seed, Stream::Init);
    let widths = spec.widths();
    let mut params = ParamSet::new();
    for (layer, pair) in widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new(-limit, limit);
        let mut w = Matrix::zeros(fan_in, fan_out);
        for v in w.data_mut() {
            *v = dist.sample(&mut rng);
        }
        params.push(Param {
            name: format!("w{layer}"),
            kind: ParamKind::Weight,
            value: w,
        })?;
        params.push(Param {
            name: format!("b{layer}"),
            kind: ParamKind::Bias,
            value: Matrix::zeros(1, fan_out),
        })?;
    }
    Ok(params)
}

fn check_input(spec: &MlpSpec, params: &ParamSet, x: &Matrix) -> Result<()> {
    if x.cols() != spec.input_dim {
        return Err(Error::Shape(format!(
            "mlp input has {} columns, spec wants {}",
            x.cols(),
            spec.input_dim
        )));
    }
    if params.len() != 2 * spec.num_layers() {
        return Err(Error::Shape(format!(
            "param set has {} tensors, spec wants {}",
            params.len(),
            2 * spec.num_layers()
        )));
    }
    Ok(())
}

/// Plain forward pass. Output shape `(x.rows, spec.output_dim)`; sigmoid
/// outputs clamped to `[1e-6, 1 - 1e-6]`.
pub fn mlp_forward(params: &ParamSet, spec: &MlpSpec, x: &Matrix) -> Result<Matrix> {
    check_input(spec, params, x)?;
    let mut h = x.clone();
    let layers = spec.num_layers();
    for layer in 0..layers {
        let w = &params.get(&format!("w{layer}")).ok_or_else(|| {
            Error::Shape(format!("missing parameter w{layer}"))
        })?.value;
        let b = &params.get(&format!("b{layer}")).ok_or_else(|| {
            Error::Shape(format!("missing parameter b{layer}"))
        })?.value;
        let mut z = h.matmul(w)?;
        for i in 0..z.rows() {
            for j in 0..z.cols() {
                let v = z.get(i, j) + b.data()[j];
                z.set(i, j, v);
            }
        }
        h = if layer + 1 < layers {
            z.map(|v| if v > 0.0 { v } else { 0.0 })
        } else {
            match spec.output_activation {
                OutputActivation::Identity => z,
                OutputActivation::Sigmoid => z.map(|v| {
                    let s = 1.0 / (1.0 + (-v).exp());
                    s.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
                }),
            }
        };
    }
    Ok(h)
}

/// Node handles for one network's parameters on a tape.
pub struct MlpNodes {
    pub layers: Vec<(NodeId, NodeId)>,
}

/// Load a network's parameters onto the tape as differentiable inputs.
pub fn mlp_nodes(tape: &mut Tape, spec: &MlpSpec, params: &ParamSet) -> Result<MlpNodes> {
    let mut layers = Vec::with_capacity(spec.num_layers());
    for layer in 0..spec.num_layers() {
        let w = params
            .get(&format!("w{layer}"))
            .ok_or_else(|| Error::Shape(format!("missing parameter w{layer}")))?;
        let b = params
            .get(&format!("b{layer}"))
            .ok_or_else(|| Error::Shape(format!("missing parameter b{layer}")))?;
        layers.push((tape.input(w.value.clone()), tape.input(b.value.clone())));
    }
    Ok(MlpNodes { layers })
}

/// Wrap already-created node ids (for use with `value_and_grad`, whose input
/// order is the `ParamSet` order: w0, b0, w1, b1, ...).
pub fn mlp_nodes_from_ids(spec: &MlpSpec, ids: &[NodeId]) -> Result<MlpNodes> {
    if ids.len() != 2 * spec.num_layers() {
        return Err(Error::Shape(format!(
            "expected {} node ids, got {}",
            2 * spec.num_layers(),
            ids.len()
        )));
    }
    Ok(MlpNodes {
        layers: ids.chunks(2).map(|c| (c[0], c[1])).collect(),
    })
}

/// Forward pass recorded on the tape.
pub fn mlp_forward_on_tape(
    tape: &mut Tape,
    spec: &MlpSpec,
    nodes: &MlpNodes,
    x: NodeId,
) -> Result<NodeId> {
    let layers = nodes.layers.len();
    let mut h = x;
    for (layer, &(w, b)) in nodes.layers.iter().enumerate() {
        let z = tape.matmul(h, w)?;
        let z = tape.add_row(z, b)?;
        h = if layer + 1 < layers {
            tape.relu(z)
        } else {
            match spec.output_activation {
                OutputActivation::Identity => z,
                OutputActivation::Sigmoid => tape.sigmoid_clamped(z),
            }
        };
    }
    Ok(h)
}

/// `lambda * sum of squared weight entries` (biases excluded).
pub fn l2_penalty(params: &ParamSet, lambda: f64) -> f64 {
    lambda
        * params
            .iter()
            .filter(|p| p.kind == ParamKind::Weight)
            .flat_map(|p| p.value.data())
            .map(|v| v * v)
            .sum::<f64>()
}

/// Tape version of [`l2_penalty`] over the given weight nodes.
pub fn l2_penalty_on_tape(tape: &mut Tape, weights: &[NodeId], lambda: f64) -> Result<NodeId> {
    let mut acc: Option<NodeId> = None;
    for &w in weights {
        let sq = tape.mul(w, w)?;
        let s = tape.sum(sq);
        acc = Some(match acc {
            None => s,
            Some(prev) => tape.add(prev, s)?,
        });
    }
    let total = acc.unwrap_or_else(|| tape.constant(Matrix::zeros(1, 1)));
    Ok(tape.scale(total, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(input: usize, hidden: Vec<usize>, output: usize) -> MlpSpec {
        MlpSpec::new(input, hidden, output, OutputActivation::Sigmoid, 7)
    }

    #[test]
    fn degenerate_linear_model_has_two_tensors() {
        let s = spec(3, vec![], 1);
        let params = mlp_init(&s).unwrap();
        assert_eq!(params.len(), 2);
        assert_eq!(params.get("w0").unwrap().value.shape(), (3, 1));
        assert_eq!(params.get("b0").unwrap().value.shape(), (1, 1));
    }

    #[test]
    fn init_is_deterministic() {
        let s = spec(4, vec![8], 2);
        assert_eq!(mlp_init(&s).unwrap(), mlp_init(&s).unwrap());
    }

    #[test]
    fn param_count_by_shape_arithmetic() {
        // 4*32+32 + 32*32+32 + 32*1+1 = 1249
        let s = spec(4, vec![32, 32], 1);
        assert_eq!(s.param_count(), 1249);
        assert_eq!(mlp_init(&s).unwrap().num_values(), 1249);
    }

    #[test]
    fn zero_params_sigmoid_gives_half() {
        let s = spec(2, vec![3], 1);
        let params = mlp_init(&s).unwrap().zeros_like();
        let x = Matrix::from_rows(&[vec![0.3, -1.0], vec![2.0, 0.1]]).unwrap();
        let y = mlp_forward(&params, &s, &x).unwrap();
        assert!(y.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn linear_identity_layer_matches_hand_multiply() {
        let s = MlpSpec::new(2, vec![], 2, OutputActivation::Identity, 0);
        let mut params = mlp_init(&s).unwrap();
        params.get_mut("w0").unwrap().value =
            Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        params.get_mut("b0").unwrap().value = Matrix::from_vec(1, 2, vec![0.5, -0.5]).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let y = mlp_forward(&params, &s, &x).unwrap();
        // X @ W + b computed by hand
        assert_eq!(y.data(), &[1.5, 1.5, 3.5, 3.5]);
    }

    #[test]
    fn sigmoid_clamps_at_delta() {
        let s = spec(1, vec![], 1);
        let mut params = mlp_init(&s).unwrap();
        params.get_mut("w0").unwrap().value = Matrix::from_vec(1, 1, vec![-1000.0]).unwrap();
        let x = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let y = mlp_forward(&params, &s, &x).unwrap();
        assert_eq!(y.data()[0], PROB_CLAMP);
    }

    #[test]
    fn forward_shape_mismatch_errors() {
        let s = spec(3, vec![], 1);
        let params = mlp_init(&s).unwrap();
        let x = Matrix::zeros(2, 4);
        assert!(matches!(
            mlp_forward(&params, &s, &x),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn tape_forward_matches_plain() {
        let s = MlpSpec::new(3, vec![5, 4], 2, OutputActivation::Sigmoid, 42);
        let params = mlp_init(&s).unwrap();
        let x = Matrix::from_rows(&[vec![0.1, -0.2, 0.3], vec![1.0, 0.5, -0.7]]).unwrap();
        let plain = mlp_forward(&params, &s, &x).unwrap();

        let mut tape = Tape::new();
        let nodes = mlp_nodes(&mut tape, &s, &params).unwrap();
        let xid = tape.constant(x);
        let out = mlp_forward_on_tape(&mut tape, &s, &nodes, xid).unwrap();
        assert_eq!(tape.value(out), &plain);
    }

    #[test]
    fn l2_penalty_excludes_biases() {
        let s = MlpSpec::new(1, vec![], 1, OutputActivation::Identity, 0);
        let mut params = mlp_init(&s).unwrap();
        params.get_mut("w0").unwrap().value = Matrix::from_vec(1, 1, vec![3.0]).unwrap();
        params.get_mut("b0").unwrap().value = Matrix::from_vec(1, 1, vec![100.0]).unwrap();
        assert!((l2_penalty(&params, 0.1) - 0.9).abs() < 1e-12);
        assert_eq!(l2_penalty(&params, 0.0), 0.0);
    }
}
