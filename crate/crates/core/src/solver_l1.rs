//! l1 baselines.
//!
//! * [`solve_l1_identity`]: `min psi(B v) + lambda ||v||_1` by a primal-dual
//!   fixed-point iteration with soft thresholding in the primal step.
//! * [`solve_l1_general`]: `min psi(B v) + lambda ||D v||_1` with an outer
//!   primal-dual loop on `D` whose primal step is solved inexactly by an
//!   inner primal-dual loop on `B`.

use serde::Serialize;

use crate::fidelity::Fidelity;
use crate::linalg::{dist2, norm2};
use crate::linops::{operator_norm, LinearOp};
use crate::prox::{soft_scalar, soft_threshold};
use crate::solver_l0::{ErrorSequence, SolveStatus};
use crate::{Error, Result};

/// Parameters for [`solve_l1_identity`].
#[derive(Debug, Clone, PartialEq)]
pub struct L1Config {
    pub lambda: f64,
    pub p: f64,
    /// `p q > ||B||^2` is required.
    pub q: f64,
    pub tol: f64,
    pub max_outer: usize,
}

/// Parameters for [`solve_l1_general`].
#[derive(Debug, Clone, PartialEq)]
pub struct L1GeneralConfig {
    pub lambda: f64,
    /// Outer (D) step pair, `p1 q1 > ||D||^2`.
    pub p1: f64,
    pub q1: f64,
    /// Inner (B) step pair, `p2 q2 > ||B||^2`.
    pub p2: f64,
    pub q2: f64,
    pub error_seq: ErrorSequence,
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct L1Record {
    pub k: usize,
    pub objective: f64,
    /// `||v^{k+1} - v^k||`
    pub dv_norm: f64,
    /// Inner gradient norm at exit; 0 for the identity variant.
    pub grad_norm: f64,
    pub error_bound: f64,
    pub inner_iters: usize,
    pub inner_cap_hit: bool,
    pub nnz: usize,
}

#[derive(Debug, Clone)]
pub struct L1Solution {
    pub v: Vec<f64>,
    /// Dual variable attached to `B`.
    pub z: Vec<f64>,
    /// Dual variable attached to `D` (empty for the identity variant).
    pub w: Vec<f64>,
    pub trace: Vec<L1Record>,
    pub status: SolveStatus,
}

impl L1Solution {
    pub fn final_objective(&self) -> Option<f64> {
        self.trace.last().map(|r| r.objective)
    }
}

/// `psi(B v) + lambda ||D v||_1`; pass `None` for `D = I`.
pub fn l1_objective(
    b: &dyn LinearOp,
    d: Option<&dyn LinearOp>,
    fidelity: &Fidelity,
    lambda: f64,
    v: &[f64],
) -> Result<f64> {
    let fit = fidelity.value(&b.apply(v))?;
    let pen: f64 = match d {
        Some(d) => d.apply(v).iter().map(|x| x.abs()).sum(),
        None => v.iter().map(|x| x.abs()).sum(),
    };
    Ok(fit + lambda * pen)
}

fn check_pair(name: &str, p: f64, q: f64, norm: f64) -> Result<()> {
    if !(p > 0.0) || !(q > 0.0) {
        return Err(Error::invalid(format!("{name}: step parameters must be positive")));
    }
    if !(p * q > norm * norm) {
        return Err(Error::invalid(format!(
            "{name}: need p q > ||op||^2 (p q = {}, ||op||^2 ~ {})",
            p * q,
            norm * norm
        )));
    }
    Ok(())
}

/// Relative change below `tol`, or no change at all. Both primal and dual
/// must settle: with zero duals the first primal step can leave `v` as is.
fn settled(new: &[f64], old: &[f64], tol: f64) -> bool {
    let d = dist2(new, old);
    d == 0.0 || d < tol * norm2(new)
}

/// `w+ = (1/q)(I - resolvent)(q w + B(2 v+ - v))`, given `B v+` and `B v`.
fn dual_update(fidelity: &Fidelity, q: f64, w: &[f64], bv_next: &[f64], bv: &[f64]) -> Result<Vec<f64>> {
    let arg: Vec<f64> = w.iter().zip(bv_next).zip(bv).map(|((wi, bn), bo)| q * wi + 2.0 * bn - bo).collect();
    fidelity.dual_step(&arg, q)
}

/// Primal-dual iteration for `min psi(B v) + lambda ||v||_1`:
///
/// ```text
/// v+ = soft(v - B^T w / p, lambda / p)
/// w+ = (1/q)(I - (I + q grad psi)^{-1})(q w + B(2 v+ - v))
/// ```
///
/// Stops when `||v+ - v|| < tol ||v+||`.
pub fn solve_l1_identity(
    b: &dyn LinearOp,
    fidelity: &Fidelity,
    cfg: &L1Config,
    v0: Vec<f64>,
) -> Result<L1Solution> {
    Error::check_dim(b.out_dim(), fidelity.dim())?;
    Error::check_dim(b.in_dim(), v0.len())?;
    if !(cfg.lambda > 0.0) || !(cfg.tol > 0.0) || cfg.max_outer == 0 {
        return Err(Error::invalid("lambda, tol and max_outer must be positive"));
    }
    let b_norm = operator_norm(b);
    check_pair("l1 identity", cfg.p, cfg.q, b_norm)?;

    let mut v = v0;
    let mut w = vec![0.0; b.out_dim()];
    let mut bv = b.apply(&v);
    let mut trace = Vec::new();
    let mut status = SolveStatus::MaxIterations;
    let thr = cfg.lambda / cfg.p;

    for k in 1..=cfg.max_outer {
        let btw = b.adjoint(&w);
        let v_next: Vec<f64> = v.iter().zip(&btw).map(|(vi, bi)| soft_scalar(vi - bi / cfg.p, thr)).collect();
        let bv_next = b.apply(&v_next);
        let w_next = dual_update(fidelity, cfg.q, &w, &bv_next, &bv)?;
        let dv = dist2(&v_next, &v);
        let objective = fidelity.value(&bv_next)? + cfg.lambda * v_next.iter().map(|x| x.abs()).sum::<f64>();
        trace.push(L1Record {
            k,
            objective,
            dv_norm: dv,
            grad_norm: 0.0,
            error_bound: 0.0,
            inner_iters: 1,
            inner_cap_hit: false,
            nnz: crate::prox::nnz(&v_next),
        });
        let converged = settled(&v_next, &v, cfg.tol) && settled(&w_next, &w, cfg.tol);
        v = v_next;
        w = w_next;
        bv = bv_next;
        if converged {
            status = SolveStatus::Converged;
            break;
        }
    }
    Ok(L1Solution { v, z: w, w: Vec::new(), trace, status })
}

/// `grad T(v) = p1 (v - anchor) + B^T grad psi(B v)`, the gradient of the
/// inner objective `(p1/2)||v - anchor||^2 + psi(B v)`.
pub fn grad_t(b: &dyn LinearOp, fidelity: &Fidelity, p1: f64, anchor: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    grad_t_cached(b, fidelity, p1, anchor, v, &b.apply(v))
}

fn grad_t_cached(
    b: &dyn LinearOp,
    fidelity: &Fidelity,
    p1: f64,
    anchor: &[f64],
    v: &[f64],
    bv: &[f64],
) -> Result<Vec<f64>> {
    let btg = b.adjoint(&fidelity.gradient(bv)?);
    Ok(v.iter().zip(anchor).zip(&btg).map(|((vi, ai), gi)| p1 * (vi - ai) + gi).collect())
}

/// Inexact primal-dual iteration for `min psi(B v) + lambda ||D v||_1`.
///
/// Outer step `k`, with `a = v^k - D^T w^k / p1`:
///
/// ```text
/// inner, from (v^k, z^k), until ||grad T(v_l)|| <= e_{k+1} (at least one step):
///   v_{l+1} = p1/(p1+p2) a + p2/(p1+p2) (v_l - B^T z_l / p2)
///   z_{l+1} = (1/q2)(I - (I + q2 grad psi)^{-1})(q2 z_l + B(2 v_{l+1} - v_l))
/// w^{k+1} = (1/q1)(I - soft(., q1 lambda))(q1 w^k + D(2 v^{k+1} - v^k))
/// ```
pub fn solve_l1_general(
    b: &dyn LinearOp,
    d: &dyn LinearOp,
    fidelity: &Fidelity,
    cfg: &L1GeneralConfig,
    v0: Vec<f64>,
) -> Result<L1Solution> {
    Error::check_dim(b.out_dim(), fidelity.dim())?;
    Error::check_dim(b.in_dim(), d.in_dim())?;
    Error::check_dim(b.in_dim(), v0.len())?;
    if !(cfg.lambda > 0.0) || !(cfg.tol > 0.0) || cfg.max_outer == 0 || cfg.max_inner == 0 {
        return Err(Error::invalid("lambda, tol and iteration caps must be positive"));
    }
    let b_norm = operator_norm(b);
    let d_norm = operator_norm(d);
    check_pair("outer D pair", cfg.p1, cfg.q1, d_norm)?;
    check_pair("inner B pair", cfg.p2, cfg.q2, b_norm)?;

    let (p1, p2, q1, q2) = (cfg.p1, cfg.p2, cfg.q1, cfg.q2);
    let (c1, c2) = (p1 / (p1 + p2), p2 / (p1 + p2));
    let mut v = v0;
    let mut bv = b.apply(&v);
    let mut dv = d.apply(&v);
    let mut w = vec![0.0; d.out_dim()];
    let mut z = vec![0.0; b.out_dim()];
    let mut trace = Vec::new();
    let mut status = SolveStatus::MaxIterations;

    for k in 1..=cfg.max_outer {
        let e = cfg.error_seq.at(k);
        let dtw = d.adjoint(&w);
        let anchor: Vec<f64> = v.iter().zip(&dtw).map(|(vi, di)| vi - di / p1).collect();

        let (mut vl, mut zl, mut bvl) = (v.clone(), z.clone(), bv.clone());
        let mut inner_iters = 0;
        let mut cap_hit = false;
        let mut grad_norm;
        // at least one step, so that an unchanged v signals a fixed point
        loop {
            let btz = b.adjoint(&zl);
            let v_next: Vec<f64> = vl
                .iter()
                .zip(&btz)
                .zip(&anchor)
                .map(|((vi, bi), ai)| c1 * ai + c2 * (vi - bi / p2))
                .collect();
            let bv_next = b.apply(&v_next);
            zl = dual_update(fidelity, q2, &zl, &bv_next, &bvl)?;
            vl = v_next;
            bvl = bv_next;
            inner_iters += 1;
            grad_norm = match grad_t_cached(b, fidelity, p1, &anchor, &vl, &bvl) {
                Ok(g) => norm2(&g),
                Err(Error::Domain(_)) => f64::INFINITY,
                Err(err) => return Err(err),
            };
            if grad_norm <= e {
                break;
            }
            if inner_iters >= cfg.max_inner {
                cap_hit = true;
                break;
            }
        }

        let dv_next = d.apply(&vl);
        let arg: Vec<f64> =
            w.iter().zip(&dv_next).zip(&dv).map(|((wi, dn), dold)| q1 * wi + 2.0 * dn - dold).collect();
        let thr = q1 * cfg.lambda;
        let shrunk = soft_threshold(&arg, thr)?;
        let w_next: Vec<f64> = arg.iter().zip(&shrunk).map(|(a, s)| (a - s) / q1).collect();

        let dvn = dist2(&vl, &v);
        let objective = fidelity.value(&bvl)? + cfg.lambda * dv_next.iter().map(|x| x.abs()).sum::<f64>();
        trace.push(L1Record {
            k,
            objective,
            dv_norm: dvn,
            grad_norm,
            error_bound: e,
            inner_iters,
            inner_cap_hit: cap_hit,
            nnz: crate::prox::nnz(&dv_next),
        });
        let converged = settled(&vl, &v, cfg.tol) && settled(&w_next, &w, cfg.tol);
        v = vl;
        z = zl;
        w = w_next;
        bv = bvl;
        dv = dv_next;
        if converged {
            status = SolveStatus::Converged;
            break;
        }
    }
    Ok(L1Solution { v, z, w, trace, status })
}
