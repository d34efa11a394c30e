use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};

/// A symmetric positive-definite `d × d` volatility matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Control {
    dim: usize,
    entries: Vec<f64>,
}

impl Control {
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(Error::invalid(format!(
                "control needs {} entries for dimension {dim}",
                dim * dim
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("control entries must be finite"));
        }
        for i in 0..dim {
            for j in 0..i {
                if entries[i * dim + j] != entries[j * dim + i] {
                    return Err(Error::invalid("control matrix must be symmetric"));
                }
            }
        }
        if !is_positive_definite(dim, &entries) {
            return Err(Error::invalid(format!(
                "control {entries:?} is not positive definite"
            )));
        }
        Ok(Self { dim, entries })
    }

    pub fn scalar(u: f64) -> Result<Self> {
        Self::new(1, vec![u])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    /// Frobenius norm `|u|`.
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Lexicographic order on entries.
    pub fn total_cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.entries.iter().zip(&other.entries) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.entries.len().cmp(&other.entries.len())
    }
}

fn is_positive_definite(dim: usize, a: &[f64]) -> bool {
    // Cholesky; fails on the first non-positive pivot.
    let mut l = vec![0.0; dim * dim];
    for j in 0..dim {
        let mut d = a[j * dim + j];
        for k in 0..j {
            d -= l[j * dim + k] * l[j * dim + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        l[j * dim + j] = d;
        for i in (j + 1)..dim {
            let mut s = a[i * dim + j];
            for k in 0..j {
                s -= l[i * dim + k] * l[j * dim + k];
            }
            l[i * dim + j] = s / d;
        }
    }
    true
}

/// Finite volatility control grid, sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlSet {
    controls: Vec<Control>,
    cap: f64,
}

impl ControlSet {
    pub fn new(mut controls: Vec<Control>, cap: f64) -> Result<Self> {
        if controls.is_empty() {
            return Err(Error::invalid("control set must be nonempty"));
        }
        if !(cap > 0.0 && cap.is_finite()) {
            return Err(Error::invalid("control cap must be positive and finite"));
        }
        let dim = controls[0].dim;
        if controls.iter().any(|c| c.dim != dim) {
            return Err(Error::invalid("controls must share one dimension"));
        }
        if let Some(c) = controls.iter().find(|c| c.norm() > cap) {
            return Err(Error::invalid(format!(
                "control {:?} has norm {} above cap {cap}",
                c.entries,
                c.norm()
            )));
        }
        controls.sort_by(|a, b| a.total_cmp(b));
        controls.dedup_by(|a, b| a.total_cmp(b) == Ordering::Equal);
        Ok(Self { controls, cap })
    }

    /// One-dimensional set from positive scalar volatilities.
    pub fn scalar(values: &[f64], cap: f64) -> Result<Self> {
        let controls = values
            .iter()
            .map(|&u| Control::scalar(u))
            .collect::<Result<Vec<_>>>()?;
        Self::new(controls, cap)
    }

    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.controls[0].dim
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn get(&self, i: usize) -> &Control {
        &self.controls[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Control> {
        self.controls.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_and_deduplicated() {
        let set = ControlSet::scalar(&[1.0, 0.5, 1.0, 0.25], 1.0).unwrap();
        let vals: Vec<f64> = set.iter().map(|c| c.entry(0, 0)).collect();
        assert_eq!(vals, vec![0.25, 0.5, 1.0]);
    }

    #[test]
    fn rejects_degenerate_and_oversized_controls() {
        assert!(ControlSet::scalar(&[0.0], 1.0).is_err());
        assert!(ControlSet::scalar(&[-0.5], 1.0).is_err());
        assert!(ControlSet::scalar(&[2.0], 1.0).is_err());
        assert!(ControlSet::scalar(&[], 1.0).is_err());
    }

    #[test]
    fn matrix_controls_need_symmetry_and_definiteness() {
        assert!(Control::new(2, vec![1.0, 0.0, 0.0, 1.0]).is_ok());
        assert!(Control::new(2, vec![1.0, 0.5, 0.0, 1.0]).is_err());
        assert!(Control::new(2, vec![1.0, 2.0, 2.0, 1.0]).is_err());
        assert!(Control::new(2, vec![1.0]).is_err());
    }
}
