//! Probability-weighted point clouds.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Tolerance below which a group's total mass counts as absent.
pub(crate) const MASS_FLOOR: f64 = 1e-8;

/// A set of representation points with nonnegative weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedCloud {
    pub points: Matrix,
    pub weights: Vec<f64>,
}

impl WeightedCloud {
    pub fn new(points: Matrix, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != points.rows() {
            return Err(Error::Shape(format!(
                "cloud has {} points but {} weights",
                points.rows(),
                weights.len()
            )));
        }
        if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::Argument("cloud weights must be finite and >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Argument(format!(
                "cloud weights sum to {total}, expected 1"
            )));
        }
        if !weights.iter().any(|&w| w > 0.0) {
            return Err(Error::DegenerateGroup("no strictly positive weight".into()));
        }
        Ok(WeightedCloud { points, weights })
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }
}

/// Split representation rows into the two subgroup measures of a binary
/// variable: cloud one weighted by `prob1`, cloud zero by `1 - prob1`, each
/// normalized to unit mass.
pub fn clouds_from_probs(z: &Matrix, prob1: &[f64]) -> Result<(WeightedCloud, WeightedCloud)> {
    if z.rows() != prob1.len() {
        return Err(Error::Shape(format!(
            "{} rows vs {} probabilities",
            z.rows(),
            prob1.len()
        )));
    }
    if prob1.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::Argument("probabilities must lie in [0, 1]".into()));
    }
    let total1: f64 = prob1.iter().sum();
    let total0: f64 = prob1.iter().map(|p| 1.0 - p).sum();
    if total1 < MASS_FLOOR {
        return Err(Error::DegenerateGroup(format!(
            "group 1 mass {total1:.3e} below {MASS_FLOOR:.0e}"
        )));
    }
    if total0 < MASS_FLOOR {
        return Err(Error::DegenerateGroup(format!(
            "group 0 mass {total0:.3e} below {MASS_FLOOR:.0e}"
        )));
    }
    let w1: Vec<f64> = prob1.iter().map(|p| p / total1).collect();
    let w0: Vec<f64> = prob1.iter().map(|p| (1.0 - p) / total0).collect();
    Ok((
        WeightedCloud::new(z.clone(), w1)?,
        WeightedCloud::new(z.clone(), w0)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z4() -> Matrix {
        Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap()
    }

    #[test]
    fn hard_assignment_splits_points() {
        let (c1, c0) = clouds_from_probs(&z4(), &[1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(c1.weights, vec![0.5, 0.5, 0.0, 0.0]);
        assert_eq!(c0.weights, vec![0.0, 0.0, 0.5, 0.5]);
    }

    #[test]
    fn uniform_probs_give_identical_clouds() {
        let (c1, c0) = clouds_from_probs(&z4(), &[0.5; 4]).unwrap();
        assert_eq!(c1, c0);
    }

    #[test]
    fn normalization_arithmetic() {
        let z = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let (c1, c0) = clouds_from_probs(&z, &[0.8, 0.2]).unwrap();
        assert!((c1.weights[0] - 0.8).abs() < 1e-15);
        assert!((c1.weights[1] - 0.2).abs() < 1e-15);
        assert!((c0.weights[0] - 0.2).abs() < 1e-15);
        assert!((c0.weights[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn all_zero_side_is_degenerate() {
        let z = z4();
        assert!(matches!(
            clouds_from_probs(&z, &[1.0, 1.0, 1.0, 1.0]),
            Err(Error::DegenerateGroup(_))
        ));
        assert!(matches!(
            clouds_from_probs(&z, &[0.0, 0.0, 0.0, 0.0]),
            Err(Error::DegenerateGroup(_))
        ));
    }
}
