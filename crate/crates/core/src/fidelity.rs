//! Smooth convex data-fit terms `psi` with closed-form resolvents
//! `(I + q grad psi)^{-1}`.
//!
//! | kind           | `psi(z)`                         | resolvent `w` of `z`                        |
//! |----------------|----------------------------------|---------------------------------------------|
//! | squared loss   | `1/2 ||z - a||^2`                | `(z + q a) / (1 + q)`                       |
//! | squared hinge  | `1/2 sum max(1 - z_j, 0)^2`      | `z_j` if `z_j >= 1`, else `(z_j + q)/(1+q)` |
//! | Poisson / KL   | `<z, 1> - <ln z, a>`             | positive root of `w^2 + (q - z) w - q a = 0`|
//!
//! `a` is the anchor: observed data for the squared and Poisson losses. The
//! squared hinge ignores it apart from its length, since labels are folded
//! into the forward operator.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Lower clamp applied to Poisson resolvent outputs where the anchor is 0.
pub const POISSON_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FidelityKind {
    SquaredLoss,
    SquaredHinge,
    PoissonKl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fidelity {
    kind: FidelityKind,
    anchor: Vec<f64>,
}

impl Fidelity {
    pub fn new(kind: FidelityKind, anchor: Vec<f64>) -> Result<Self> {
        crate::linalg::ensure_finite(&anchor, "fidelity anchor")?;
        if kind == FidelityKind::PoissonKl {
            if let Some(i) = anchor.iter().position(|a| *a < 0.0) {
                return Err(Error::invalid(format!(
                    "Poisson anchor must be nonnegative (index {i} is {})",
                    anchor[i]
                )));
            }
        }
        Ok(Fidelity { kind, anchor })
    }

    pub fn squared_loss(anchor: Vec<f64>) -> Result<Self> {
        Self::new(FidelityKind::SquaredLoss, anchor)
    }

    /// Squared hinge on `dim` margins.
    pub fn squared_hinge(dim: usize) -> Self {
        Fidelity { kind: FidelityKind::SquaredHinge, anchor: vec![0.0; dim] }
    }

    pub fn poisson_kl(anchor: Vec<f64>) -> Result<Self> {
        Self::new(FidelityKind::PoissonKl, anchor)
    }

    pub fn kind(&self) -> FidelityKind {
        self.kind
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    fn check(&self, z: &[f64]) -> Result<()> {
        Error::check_dim(self.anchor.len(), z.len())
    }

    fn poisson_domain(&self, z: &[f64]) -> Result<()> {
        for (i, (zi, ai)) in z.iter().zip(&self.anchor).enumerate() {
            if *ai > 0.0 && !(*zi > 0.0) {
                return Err(Error::Domain(format!(
                    "Poisson fidelity needs z > 0 where data is positive; z[{i}] = {zi}"
                )));
            }
        }
        Ok(())
    }

    pub fn value(&self, z: &[f64]) -> Result<f64> {
        self.check(z)?;
        let mut s = 0.0;
        match self.kind {
            FidelityKind::SquaredLoss => {
                for (zi, ai) in z.iter().zip(&self.anchor) {
                    let d = zi - ai;
                    s += d * d;
                }
                s *= 0.5;
            }
            FidelityKind::SquaredHinge => {
                for zi in z {
                    let m = (1.0 - zi).max(0.0);
                    s += m * m;
                }
                s *= 0.5;
            }
            FidelityKind::PoissonKl => {
                self.poisson_domain(z)?;
                for (zi, ai) in z.iter().zip(&self.anchor) {
                    s += if *ai > 0.0 { zi - ai * zi.ln() } else { *zi };
                }
            }
        }
        Ok(s)
    }

    pub fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check(z)?;
        Ok(match self.kind {
            FidelityKind::SquaredLoss => crate::linalg::sub(z, &self.anchor),
            FidelityKind::SquaredHinge => z.iter().map(|zi| -(1.0 - zi).max(0.0)).collect(),
            FidelityKind::PoissonKl => {
                self.poisson_domain(z)?;
                z.iter()
                    .zip(&self.anchor)
                    .map(|(zi, ai)| if *ai > 0.0 { 1.0 - ai / zi } else { 1.0 })
                    .collect()
            }
        })
    }

    /// The unique `w` with `w + q grad psi(w) = z`.
    pub fn resolvent(&self, z: &[f64], q: f64) -> Result<Vec<f64>> {
        if !(q > 0.0) {
            return Err(Error::invalid(format!("resolvent parameter q must be positive, got {q}")));
        }
        self.check(z)?;
        Ok(match self.kind {
            FidelityKind::SquaredLoss => {
                z.iter().zip(&self.anchor).map(|(zi, ai)| (zi + q * ai) / (1.0 + q)).collect()
            }
            FidelityKind::SquaredHinge => {
                z.iter().map(|&zi| if zi >= 1.0 { zi } else { (zi + q) / (1.0 + q) }).collect()
            }
            FidelityKind::PoissonKl => {
                z.iter().zip(&self.anchor).map(|(&zi, &ai)| poisson_resolvent_scalar(zi, ai, q)).collect()
            }
        })
    }

    /// `(1/q) (I - (I + q grad psi)^{-1})(x)`, the dual update used by the
    /// primal-dual inner iterations.
    pub fn dual_step(&self, x: &[f64], q: f64) -> Result<Vec<f64>> {
        let r = self.resolvent(x, q)?;
        Ok(x.iter().zip(&r).map(|(xi, ri)| (xi - ri) / q).collect())
    }
}

fn poisson_resolvent_scalar(z: f64, a: f64, q: f64) -> f64 {
    let d = z - q;
    if a == 0.0 {
        return d.max(POISSON_FLOOR);
    }
    let root = (d * d + 4.0 * q * a).sqrt();
    if d >= 0.0 {
        0.5 * (d + root)
    } else {
        // avoids cancellation in d + root when d << 0
        2.0 * q * a / (root - d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_at_simple_points() {
        let f = Fidelity::squared_loss(vec![1.0, -2.0]).unwrap();
        assert_eq!(f.value(&[1.0, -2.0]).unwrap(), 0.0);
        assert_eq!(f.value(&[2.0, -2.0]).unwrap(), 0.5);

        let h = Fidelity::squared_hinge(2);
        assert_eq!(h.value(&[2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(h.value(&[0.0, 3.0]).unwrap(), 0.5);

        let p = Fidelity::poisson_kl(vec![1.0]).unwrap();
        assert_eq!(p.value(&[1.0]).unwrap(), 1.0);
    }

    #[test]
    fn gradients_at_simple_points() {
        let f = Fidelity::squared_loss(vec![1.0, -2.0]).unwrap();
        assert_eq!(f.gradient(&[1.0, -2.0]).unwrap(), vec![0.0, 0.0]);
        let h = Fidelity::squared_hinge(1);
        assert_eq!(h.gradient(&[0.5]).unwrap(), vec![-0.5]);
        assert_eq!(h.gradient(&[1.5]).unwrap(), vec![0.0]);
        let p = Fidelity::poisson_kl(vec![2.0, 0.0]).unwrap();
        assert_eq!(p.gradient(&[4.0, 3.0]).unwrap(), vec![0.5, 1.0]);
    }

    #[test]
    fn resolvent_examples() {
        let f = Fidelity::squared_loss(vec![2.0]).unwrap();
        assert_eq!(f.resolvent(&[4.0], 1.0).unwrap(), vec![3.0]);
        let h = Fidelity::squared_hinge(1);
        assert_eq!(h.resolvent(&[0.0], 1.0).unwrap(), vec![0.5]);
        let p = Fidelity::poisson_kl(vec![1.0]).unwrap();
        assert_eq!(p.resolvent(&[1.0], 1.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn poisson_zero_anchor_clamps() {
        let p = Fidelity::poisson_kl(vec![0.0, 0.0]).unwrap();
        let w = p.resolvent(&[0.5, 3.0], 1.0).unwrap();
        assert_eq!(w, vec![POISSON_FLOOR, 2.0]);
        assert!(p.value(&w).unwrap().is_finite());
        assert_eq!(p.gradient(&w).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn poisson_domain_errors() {
        let p = Fidelity::poisson_kl(vec![1.0]).unwrap();
        assert!(matches!(p.value(&[0.0]), Err(Error::Domain(_))));
        assert!(matches!(p.value(&[-1.0]), Err(Error::Domain(_))));
        assert!(matches!(p.gradient(&[0.0]), Err(Error::Domain(_))));
        assert!(Fidelity::poisson_kl(vec![-1.0]).is_err());
    }

    #[test]
    fn resolvent_rejects_nonpositive_q_and_bad_dims() {
        let f = Fidelity::squared_loss(vec![0.0]).unwrap();
        assert!(f.resolvent(&[1.0], 0.0).is_err());
        assert!(f.resolvent(&[1.0, 2.0], 1.0).is_err());
        assert!(f.value(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn poisson_resolvent_stable_for_large_negative_input() {
        let p = Fidelity::poisson_kl(vec![1e-3]).unwrap();
        let q = 2.0;
        let w = p.resolvent(&[-1e8], q).unwrap()[0];
        assert!(w > 0.0);
        let g = p.gradient(&[w]).unwrap()[0];
        assert!(((w + q * g) - (-1e8)).abs() <= 1e-10 * 1e8);
    }
}
