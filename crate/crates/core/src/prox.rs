//! Proximity operators of the nonsmooth penalties and support-set helpers.

use crate::{Error, Result};

/// Componentwise prox of `t |.|_0`: keeps `u_i` when `|u_i| > sqrt(2t)`,
/// zeroes it otherwise. At `|u_i| == sqrt(2t)` both `0` and `u_i` minimize
/// the scalar objective; this returns `0`.
pub fn hard_threshold(u: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(Error::invalid(format!("hard threshold parameter must be positive, got {t}")));
    }
    let thr = (2.0 * t).sqrt();
    Ok(u.iter().map(|&x| if x.abs() > thr { x } else { 0.0 }).collect())
}

/// Componentwise prox of `s |.|_1`: `sign(y_i) max(|y_i| - s, 0)`.
pub fn soft_threshold(y: &[f64], s: f64) -> Result<Vec<f64>> {
    if !(s >= 0.0) {
        return Err(Error::invalid(format!("soft threshold must be nonnegative, got {s}")));
    }
    Ok(y.iter().map(|&x| soft_scalar(x, s)).collect())
}

#[inline]
pub(crate) fn soft_scalar(x: f64, s: f64) -> f64 {
    if x > s {
        x - s
    } else if x < -s {
        x + s
    } else {
        0.0
    }
}

/// Sorted, duplicate-free set of 1-based indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct SupportSet {
    indices: Vec<usize>,
}

impl SupportSet {
    /// Builds a support set from arbitrary 1-based indices, all of which must
    /// lie in `1..=n`.
    pub fn from_indices(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i == 0 || i > n) {
            return Err(Error::invalid(format!("support index {bad} outside 1..={n}")));
        }
        indices.sort_unstable();
        indices.dedup();
        Ok(SupportSet { indices })
    }

    pub fn full(n: usize) -> Self {
        SupportSet { indices: (1..=n).collect() }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

/// `{i : x_i != 0}` (1-based, exact comparison with zero).
pub fn support(x: &[f64]) -> SupportSet {
    SupportSet { indices: x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i + 1).collect() }
}

/// `|S(x)|`
pub fn nnz(x: &[f64]) -> usize {
    x.iter().filter(|v| **v != 0.0).count()
}

/// Keeps the entries of `x` indexed by `c` and zeroes the rest.
pub fn project_support(x: &[f64], c: &SupportSet) -> Result<Vec<f64>> {
    if let Some(&last) = c.indices.last() {
        if last > x.len() {
            return Err(Error::invalid(format!("support index {last} outside vector of length {}", x.len())));
        }
    }
    let mut out = vec![0.0; x.len()];
    for &i in &c.indices {
        out[i - 1] = x[i - 1];
    }
    Ok(out)
}
