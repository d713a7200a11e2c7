//! Synthetic data generation.
//!
//! Confounders are jointly gaussian with unit variances and 0.05
//! cross-covariance. The instrument and treatment are bernoulli draws from
//! sigmoids of confounder sums; the outcome surface is quadratic under
//! treatment and linear under control, scaled by `1/(p+q)`, which puts the
//! true average effect at 1 in expectation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::dataset::{CivDataset, GroundTruth};
use crate::error::{Error, Result};
use crate::matrix::{mean, Matrix};
use crate::rng::{substream, Stream};

/// Synthetic setting: `p` observed confounders, `q` unobserved, `n` samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynSpec {
    pub p: usize,
    pub q: usize,
    pub n: usize,
    pub seed: u64,
    /// Standard deviation of additive outcome noise; 0 matches the
    /// generation formulas exactly.
    pub noise_sd: f64,
}

impl SynSpec {
    pub fn new(p: usize, q: usize, n: usize, seed: u64) -> Self {
        SynSpec { p, q, n, seed, noise_sd: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return Err(Error::Config("need at least one observed confounder".into()));
        }
        if self.n < 2 {
            return Err(Error::Config("need at least two samples".into()));
        }
        if self.noise_sd < 0.0 {
            return Err(Error::Config("noise_sd must be >= 0".into()));
        }
        Ok(())
    }

    pub fn setting_name(&self) -> String {
        format!("Syn-{}-{}", self.p, self.q)
    }
}

/// Covariance with unit diagonal and 0.05 everywhere else:
/// `0.95 * I + 0.05 * ones`.
pub fn make_covariance(d: usize) -> Matrix {
    let mut m = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            m.set(i, j, if i == j { 1.0 } else { 0.05 });
        }
    }
    m
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let (r, c) = a.shape();
    if r != c {
        return Err(Error::Shape(format!("cholesky needs a square matrix, got {r}x{c}")));
    }
    let n = r;
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Argument(format!(
                        "matrix not positive definite at pivot {i} (value {s})"
                    )));
                }
                l.set(i, j, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(l)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn row_sum(m: &Matrix, i: usize) -> f64 {
    m.row(i).iter().sum()
}

/// Joint gaussian draw of observed and unobserved confounders.
pub fn sample_confounders(spec: &SynSpec) -> Result<(Matrix, Matrix)> {
    spec.validate()?;
    let d = spec.p + spec.q;
    let l = cholesky(&make_covariance(d))?;
    let mut rng = substream(spec.seed, Stream::Confounders);
    let mut c = Matrix::zeros(spec.n, spec.p);
    let mut u = Matrix::zeros(spec.n, spec.q);
    let mut z = vec![0.0; d];
    for i in 0..spec.n {
        for zj in z.iter_mut() {
            *zj = rng.sample(StandardNormal);
        }
        for j in 0..d {
            // x = L z, one coordinate at a time
            let mut acc = 0.0;
            for k in 0..=j {
                acc += l.get(j, k) * z[k];
            }
            if j < spec.p {
                c.set(i, j, acc);
            } else {
                u.set(i, j - spec.p, acc);
            }
        }
    }
    Ok((c, u))
}

/// Instrument assignment: `S_i ~ Bern(sigmoid(sum C_i + sum U_i))`.
pub fn gen_instrument(c: &Matrix, u: &Matrix, rng: &mut ChaCha8Rng) -> Result<Vec<u8>> {
    if c.rows() != u.rows() {
        return Err(Error::Shape("C and U row counts differ".into()));
    }
    Ok((0..c.rows())
        .map(|i| {
            let prob = sigmoid(row_sum(c, i) + row_sum(u, i));
            u8::from(rng.gen::<f64>() < prob)
        })
        .collect())
}

/// Treatment assignment: `W_i ~ Bern(sigmoid(S_i * sum C_i + sum C_i + sum U_i))`.
pub fn gen_treatment(s: &[u8], c: &Matrix, u: &Matrix, rng: &mut ChaCha8Rng) -> Result<Vec<u8>> {
    if s.len() != c.rows() || c.rows() != u.rows() {
        return Err(Error::Shape("S, C, U lengths differ".into()));
    }
    Ok((0..c.rows())
        .map(|i| {
            let sc = row_sum(c, i);
            let prob = sigmoid(f64::from(s[i]) * sc + sc + row_sum(u, i));
            u8::from(rng.gen::<f64>() < prob)
        })
        .collect())
}

/// Potential outcomes and the realized outcome:
/// `Y1 = (sum C^2 + sum U^2)/(p+q)`, `Y0 = (sum C + sum U)/(p+q)`.
pub fn gen_outcome(
    w: &[u8],
    c: &Matrix,
    u: &Matrix,
    noise_sd: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if w.len() != c.rows() || c.rows() != u.rows() {
        return Err(Error::Shape("W, C, U lengths differ".into()));
    }
    let d = (c.cols() + u.cols()) as f64;
    let n = c.rows();
    let mut y = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    let mut y0 = Vec::with_capacity(n);
    for i in 0..n {
        let sq: f64 = c.row(i).iter().map(|v| v * v).sum::<f64>()
            + u.row(i).iter().map(|v| v * v).sum::<f64>();
        let lin = row_sum(c, i) + row_sum(u, i);
        let t1 = sq / d;
        let t0 = lin / d;
        let noise = if noise_sd > 0.0 {
            noise_sd * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        y1.push(t1);
        y0.push(t0);
        y.push(if w[i] == 1 { t1 } else { t0 } + noise);
    }
    Ok((y, y1, y0))
}

/// Full generation pipeline. The unobserved block is used for assignment and
/// outcomes, then withheld from the observed columns (kept only in the
/// ground-truth block).
pub fn generate_synthetic(spec: &SynSpec) -> Result<CivDataset> {
    spec.validate()?;
    let (c, u) = sample_confounders(spec)?;
    let mut rng_s = substream(spec.seed, Stream::Instrument);
    let s = gen_instrument(&c, &u, &mut rng_s)?;
    let mut rng_w = substream(spec.seed, Stream::Treatment);
    let w = gen_treatment(&s, &c, &u, &mut rng_w)?;
    let mut rng_n = substream(spec.seed, Stream::Noise);
    let (y, y1, y0) = gen_outcome(&w, &c, &u, spec.noise_sd, &mut rng_n)?;
    let diffs: Vec<f64> = y1.iter().zip(y0.iter()).map(|(a, b)| a - b).collect();
    let true_ace = mean(&diffs);
    let data = CivDataset {
        c,
        s,
        w,
        y,
        truth: Some(GroundTruth { y1, y0, u, true_ace }),
    };
    data.validate()?;
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_d2_exact() {
        let m = make_covariance(2);
        assert_eq!(m.data(), &[1.0, 0.05, 0.05, 1.0]);
    }

    #[test]
    fn covariance_d1_is_identity() {
        assert_eq!(make_covariance(1).data(), &[1.0]);
    }

    #[test]
    fn cholesky_succeeds_up_to_64() {
        // eigenvalues are 0.95 and 0.95 + 0.05 d, all positive
        for d in [1, 2, 8, 64] {
            let l = cholesky(&make_covariance(d)).unwrap();
            let back = l.matmul(&l.transpose()).unwrap();
            for i in 0..d {
                for j in 0..d {
                    let want = if i == j { 1.0 } else { 0.05 };
                    assert!((back.get(i, j) - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn outcome_zero_row_gives_zero_potentials() {
        let c = Matrix::zeros(1, 2);
        let u = Matrix::zeros(1, 2);
        let mut rng = substream(0, Stream::Noise);
        let (_, y1, y0) = gen_outcome(&[1], &c, &u, 0.0, &mut rng).unwrap();
        assert_eq!((y1[0], y0[0]), (0.0, 0.0));
    }

    #[test]
    fn outcome_hand_arithmetic() {
        // p = q = 1, C = 2, U = 1: Y1 = (4+1)/2, Y0 = (2+1)/2
        let c = Matrix::from_rows(&[vec![2.0]]).unwrap();
        let u = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let mut rng = substream(0, Stream::Noise);
        let (_, y1, y0) = gen_outcome(&[0], &c, &u, 0.0, &mut rng).unwrap();
        assert!((y1[0] - 2.5).abs() < 1e-15);
        assert!((y0[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SynSpec::new(3, 2, 50, 99);
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate_synthetic(&SynSpec::new(2, 2, 200, 1)).unwrap();
        let b = generate_synthetic(&SynSpec::new(2, 2, 200, 2)).unwrap();
        assert_ne!(a.s, b.s);
    }

    #[test]
    fn observed_schema_has_p_plus_3_columns() {
        let d = generate_synthetic(&SynSpec::new(4, 4, 20, 5)).unwrap();
        // C block has p columns; S, W, Y are the other three.
        assert_eq!(d.c.cols(), 4);
        assert_eq!(d.len(), 20);
    }

    #[test]
    fn consistency_identity_noiseless() {
        let d = generate_synthetic(&SynSpec::new(3, 3, 300, 11)).unwrap();
        let t = d.truth.as_ref().unwrap();
        for i in 0..d.len() {
            let expect = if d.w[i] == 1 { t.y1[i] } else { t.y0[i] };
            assert_eq!(d.y[i], expect);
        }
    }
}
