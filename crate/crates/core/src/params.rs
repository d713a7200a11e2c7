//! Named, ordered parameter collections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Whether a tensor is a connection weight or a bias. The l2 penalty covers
/// weights only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Weight,
    Bias,
}

/// One named parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub value: Matrix,
}

/// Ordered list of uniquely named parameter tensors. Shapes are fixed after
/// insertion; all elementwise combinators check them.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamSet {
    entries: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    pub fn push(&mut self, param: Param) -> Result<()> {
        if self.entries.iter().any(|p| p.name == param.name) {
            return Err(Error::Config(format!("duplicate parameter {}", param.name)));
        }
        self.entries.push(param);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.entries.iter_mut()
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.entries.iter_mut().find(|p| p.name == name)
    }

    /// Total scalar count.
    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|p| p.value.len()).sum()
    }

    /// Same names/kinds/shapes, zero values.
    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    kind: p.kind,
                    value: Matrix::zeros(p.value.rows(), p.value.cols()),
                })
                .collect(),
        }
    }

    /// Concatenate all values in entry order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_values());
        for p in &self.entries {
            out.extend_from_slice(p.value.data());
        }
        out
    }

    /// Rebuild a set shaped like `self` from a flat slice. Exact inverse of
    /// `flatten`.
    pub fn unflatten(&self, flat: &[f64]) -> Result<ParamSet> {
        if flat.len() != self.num_values() {
            return Err(Error::Shape(format!(
                "unflatten: expected {} values, got {}",
                self.num_values(),
                flat.len()
            )));
        }
        let mut out = self.clone();
        let mut offset = 0;
        for p in out.entries.iter_mut() {
            let n = p.value.len();
            p.value.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(out)
    }

    /// Elementwise map over all values.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ParamSet {
        let mut out = self.clone();
        for p in out.entries.iter_mut() {
            p.value = p.value.map(&f);
        }
        out
    }

    /// Elementwise combination of two identically shaped sets.
    pub fn zip_map(&self, other: &ParamSet, f: impl Fn(f64, f64) -> f64) -> Result<ParamSet> {
        if self.len() != other.len() {
            return Err(Error::Shape(format!(
                "param sets differ in length: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        let mut out = self.clone();
        for (dst, src) in out.entries.iter_mut().zip(other.entries.iter()) {
            if dst.name != src.name || dst.value.shape() != src.value.shape() {
                return Err(Error::Shape(format!(
                    "param mismatch: {}{:?} vs {}{:?}",
                    dst.name,
                    dst.value.shape(),
                    src.name,
                    src.value.shape()
                )));
            }
            dst.value = dst.value.zip_map(&src.value, &f)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamSet {
        let mut ps = ParamSet::new();
        ps.push(Param {
            name: "w0".into(),
            kind: ParamKind::Weight,
            value: Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
        })
        .unwrap();
        ps.push(Param {
            name: "b0".into(),
            kind: ParamKind::Bias,
            value: Matrix::from_vec(1, 2, vec![5.0, 6.0]).unwrap(),
        })
        .unwrap();
        ps
    }

    #[test]
    fn flatten_unflatten_roundtrip() {
        let ps = sample();
        let flat = ps.flatten();
        assert_eq!(flat, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let back = ps.unflatten(&flat).unwrap();
        assert_eq!(back, ps);
    }

    #[test]
    fn duplicate_name_rejected() {
        let mut ps = sample();
        let err = ps.push(Param {
            name: "w0".into(),
            kind: ParamKind::Weight,
            value: Matrix::zeros(1, 1),
        });
        assert!(err.is_err());
    }

    #[test]
    fn unflatten_length_check() {
        let ps = sample();
        assert!(ps.unflatten(&[0.0; 3]).is_err());
    }
}
