//! Exact 1-Wasserstein distance between one-dimensional weighted clouds.
//!
//! Serves as the small-instance oracle for the entropic solver:
//! W1 = integral of |F_a(t) - F_b(t)| dt over the merged support.

use crate::balance::WeightedCloud;
use crate::error::{Error, Result};

/// Exact W1 via sorted quantile-function integration. Both clouds must be
/// one-dimensional.
pub fn exact_w1_1d(a: &WeightedCloud, b: &WeightedCloud) -> Result<f64> {
    if a.dim() != 1 || b.dim() != 1 {
        return Err(Error::Argument(format!(
            "exact_w1_1d needs 1-d clouds, got dims {} and {}",
            a.dim(),
            b.dim()
        )));
    }

    let mut xa: Vec<(f64, f64)> = a
        .points
        .data()
        .iter()
        .copied()
        .zip(a.weights.iter().copied())
        .collect();
    let mut xb: Vec<(f64, f64)> = b
        .points
        .data()
        .iter()
        .copied()
        .zip(b.weights.iter().copied())
        .collect();
    xa.sort_by(|p, q| p.0.total_cmp(&q.0));
    xb.sort_by(|p, q| p.0.total_cmp(&q.0));

    let mut pts: Vec<f64> = xa.iter().chain(xb.iter()).map(|p| p.0).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();

    // CDF values of each cloud at every merged support point.
    let cdf = |sorted: &[(f64, f64)], t: f64| -> f64 {
        let mut acc = 0.0;
        for &(x, w) in sorted {
            if x <= t {
                acc += w;
            } else {
                break;
            }
        }
        acc
    };

    let mut total = 0.0;
    for win in pts.windows(2) {
        let (t0, t1) = (win[0], win[1]);
        total += (cdf(&xa, t0) - cdf(&xb, t0)).abs() * (t1 - t0);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn cloud(points: &[f64], weights: &[f64]) -> WeightedCloud {
        WeightedCloud::new(Matrix::column_vector(points), weights.to_vec()).unwrap()
    }

    #[test]
    fn point_mass_translation() {
        let a = cloud(&[0.0], &[1.0]);
        let b = cloud(&[1.0], &[1.0]);
        assert!((exact_w1_1d(&a, &b).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identical_clouds() {
        let a = cloud(&[0.2, 0.7, 0.9], &[0.3, 0.3, 0.4]);
        assert_eq!(exact_w1_1d(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn hand_enumerated_coupling() {
        // a = {0 w.5, 2 w.5}, b = {1 w1}: both halves travel distance 1.
        let a = cloud(&[0.0, 2.0], &[0.5, 0.5]);
        let b = cloud(&[1.0], &[1.0]);
        assert!((exact_w1_1d(&a, &b).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_higher_dimensions() {
        let m = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let a = WeightedCloud::new(m, vec![1.0]).unwrap();
        let b = cloud(&[0.0], &[1.0]);
        assert!(exact_w1_1d(&a, &b).is_err());
    }
}
