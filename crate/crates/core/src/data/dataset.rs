//! The unit of experimentation: observed columns plus optional ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{mean, Matrix};

/// Hidden ground-truth block carried alongside generated data. Never part of
/// the observed columns; used only by evaluators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
    /// Unobserved confounder columns used during generation.
    pub u: Matrix,
    pub true_ace: f64,
}

/// Observed data `(C, S, W, Y)` with optional potential-outcome truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CivDataset {
    /// Observed confounders, n x p.
    pub c: Matrix,
    /// Binary conditional instrument.
    pub s: Vec<u8>,
    /// Binary treatment.
    pub w: Vec<u8>,
    /// Outcome.
    pub y: Vec<f64>,
    pub truth: Option<GroundTruth>,
}

impl CivDataset {
    pub fn len(&self) -> usize {
        self.c.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_confounders(&self) -> usize {
        self.c.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.c.rows();
        if self.s.len() != n || self.w.len() != n || self.y.len() != n {
            return Err(Error::Shape(format!(
                "column lengths differ: C {}, S {}, W {}, Y {}",
                n,
                self.s.len(),
                self.w.len(),
                self.y.len()
            )));
        }
        if self.s.iter().chain(self.w.iter()).any(|&v| v > 1) {
            return Err(Error::Argument("S and W must be binary".into()));
        }
        if !self.c.is_finite() || self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("dataset contains non-finite values".into()));
        }
        if let Some(t) = &self.truth {
            if t.y1.len() != n || t.y0.len() != n {
                return Err(Error::Shape("ground truth length mismatch".into()));
            }
        }
        Ok(())
    }

    /// Mean of `Y1 - Y0` over the rows, when ground truth is present.
    pub fn true_ace(&self) -> Option<f64> {
        self.truth.as_ref().map(|t| {
            let diffs: Vec<f64> = t.y1.iter().zip(t.y0.iter()).map(|(a, b)| a - b).collect();
            mean(&diffs)
        })
    }

    /// Row subset, carrying all ground-truth columns along.
    pub fn select(&self, idx: &[usize]) -> CivDataset {
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        CivDataset {
            c: self.c.select_rows(idx),
            s: idx.iter().map(|&i| self.s[i]).collect(),
            w: idx.iter().map(|&i| self.w[i]).collect(),
            y: pick(&self.y),
            truth: self.truth.as_ref().map(|t| GroundTruth {
                y1: pick(&t.y1),
                y0: pick(&t.y0),
                u: t.u.select_rows(idx),
                true_ace: t.true_ace,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> CivDataset {
        CivDataset {
            c: Matrix::from_rows(&[vec![0.1], vec![0.2], vec![0.3]]).unwrap(),
            s: vec![0, 1, 1],
            w: vec![1, 0, 1],
            y: vec![1.0, 2.0, 3.0],
            truth: Some(GroundTruth {
                y1: vec![1.0, 5.0, 3.0],
                y0: vec![0.0, 2.0, 1.0],
                u: Matrix::zeros(3, 1),
                true_ace: 2.0,
            }),
        }
    }

    #[test]
    fn consistency_identity_holds_for_generated_rows() {
        let d = tiny();
        let t = d.truth.as_ref().unwrap();
        for i in 0..d.len() {
            let expected = if d.w[i] == 1 { t.y1[i] } else { t.y0[i] };
            assert_eq!(d.y[i], expected);
        }
    }

    #[test]
    fn select_carries_truth() {
        let d = tiny();
        let sub = d.select(&[2, 0]);
        assert_eq!(sub.y, vec![3.0, 1.0]);
        assert_eq!(sub.truth.as_ref().unwrap().y1, vec![3.0, 1.0]);
    }

    #[test]
    fn validate_rejects_nonbinary() {
        let mut d = tiny();
        d.w[0] = 2;
        assert!(d.validate().is_err());
    }
}
