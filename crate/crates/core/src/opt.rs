//! Plain SGD and bias-corrected Adam over parameter sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamSet;

/// One SGD step: `p <- p - lr * g`.
pub fn sgd_step(params: &ParamSet, grads: &ParamSet, lr: f64) -> Result<ParamSet> {
    if lr <= 0.0 {
        return Err(Error::Config(format!("sgd learning rate must be > 0, got {lr}")));
    }
    params.zip_map(grads, |p, g| p - lr * g)
}

/// Adam moment state. Moments mirror the parameter shapes; the step counter
/// increments by exactly one per update.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub first_moment: ParamSet,
    pub second_moment: ParamSet,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Zero-moment state for the given parameters.
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        AdamState {
            step: 0,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Standard bias-corrected update; returns the new parameters.
    pub fn step(&mut self, params: &ParamSet, grads: &ParamSet) -> Result<ParamSet> {
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        self.first_moment = self
            .first_moment
            .zip_map(grads, |m, g| b1 * m + (1.0 - b1) * g)?;
        self.second_moment = self
            .second_moment
            .zip_map(grads, |v, g| b2 * v + (1.0 - b2) * g * g)?;

        let corr1 = 1.0 - b1.powi(self.step as i32);
        let corr2 = 1.0 - b2.powi(self.step as i32);
        let lr = self.lr;
        let eps = self.eps;
        let m_hat = self.first_moment.map(|m| m / corr1);
        let update = m_hat.zip_map(&self.second_moment, |mh, v| {
            lr * mh / ((v / corr2).sqrt() + eps)
        })?;
        params.zip_map(&update, |p, u| p - u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::params::{Param, ParamKind};

    fn scalar_params(v: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.push(Param {
            name: "w0".into(),
            kind: ParamKind::Weight,
            value: Matrix::from_vec(1, 1, vec![v]).unwrap(),
        })
        .unwrap();
        ps
    }

    #[test]
    fn sgd_arithmetic() {
        let p = scalar_params(1.0);
        let g = scalar_params(2.0);
        let out = sgd_step(&p, &g, 0.05).unwrap();
        assert!((out.get("w0").unwrap().value.data()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn sgd_zero_gradient_is_identity() {
        let p = scalar_params(1.25);
        let g = scalar_params(0.0);
        assert_eq!(sgd_step(&p, &g, 0.05).unwrap(), p);
    }

    #[test]
    fn sgd_two_steps_equal_double_lr() {
        let p = scalar_params(1.0);
        let g = scalar_params(0.3);
        let twice = sgd_step(&sgd_step(&p, &g, 0.05).unwrap(), &g, 0.05).unwrap();
        let once = sgd_step(&p, &g, 0.10).unwrap();
        assert!(
            (twice.get("w0").unwrap().value.data()[0] - once.get("w0").unwrap().value.data()[0])
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn adam_first_step_magnitude() {
        // With g = 1 the bias-corrected first step is lr / (1 + eps).
        let p = scalar_params(0.0);
        let g = scalar_params(1.0);
        let mut state = AdamState::new(&p, 0.0005);
        let out = state.step(&p, &g).unwrap();
        let delta = -out.get("w0").unwrap().value.data()[0];
        assert!((delta - 0.0005).abs() < 1e-9);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let p = scalar_params(0.7);
        let g = scalar_params(0.0);
        let mut state = AdamState::new(&p, 0.0005);
        let mut cur = p.clone();
        for _ in 0..5 {
            cur = state.step(&cur, &g).unwrap();
        }
        assert_eq!(cur, p);
    }

    #[test]
    fn adam_update_opposes_gradient_sign() {
        let p = scalar_params(0.0);
        for sign in [1.0, -1.0] {
            let g = scalar_params(sign * 0.3);
            let mut state = AdamState::new(&p, 0.01);
            let out = state.step(&p, &g).unwrap();
            let moved = out.get("w0").unwrap().value.data()[0];
            assert!(moved * sign < 0.0, "update must oppose gradient");
        }
    }
}
