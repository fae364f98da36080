//! Inexact fixed-point proximity algorithm for the two-variable l0 model
//!
//! ```text
//! min_{u, v}  F(u, v) = psi(B v) + (lambda / 2 gamma) ||u - D v||^2 + lambda ||u||_0
//! ```
//!
//! Each outer step hard-thresholds a relaxed point,
//! `u+ = HT((1 - alpha) u + alpha D v, alpha gamma)`, then approximates
//! `v+ = argmin_v H(v; u+)` with `H(v; u) = (lambda/2gamma)||v - D^T u||^2 + psi(B v)`
//! by running a primal-dual fixed-point inner loop. The inner loop stops
//! once both
//!
//! * `F(u+, v_l) - F(u+, v) <= (rho'/2) ||u+ - u||^2` (sufficient descent), and
//! * `||grad H(v_l; u+)|| <= e_{k+1}` (summable inexactness)
//!
//! hold. If `u+ == u` and `grad H(v; u+) == 0` the iterate is already a fixed
//! point and `(v, w)` is carried forward unchanged.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::fidelity::Fidelity;
use crate::linalg::{dist2, dist2_sq, lincomb, norm2, norm2_sq, sub};
use crate::linops::{operator_norm, LinearOp};
use crate::prox::{hard_threshold, nnz, support, SupportSet};
use crate::{Error, Result};

/// Relative residual allowed in the `D^T D = I` check of [`L0Problem::new`].
pub const TIGHT_FRAME_TOL: f64 = 1e-8;

/// Absolute-plus-relative slack used when flagging objective increases.
pub const DESCENT_SLACK: f64 = 1e-10;

/// Inexactness tolerances `e_{k+1}` for the inner loop, indexed by the outer
/// counter `k >= 1`. Both policies are summable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorSequence {
    /// `M / k^2`
    InverseSquare { m: f64 },
    /// `M / k^power`, `power > 1`
    InversePower { m: f64, power: f64 },
}

impl ErrorSequence {
    pub fn at(&self, k: usize) -> f64 {
        let k = k.max(1) as f64;
        match *self {
            ErrorSequence::InverseSquare { m } => m / (k * k),
            ErrorSequence::InversePower { m, power } => m / k.powf(power),
        }
    }

    fn validate(&self) -> Result<()> {
        let (m, power) = match *self {
            ErrorSequence::InverseSquare { m } => (m, 2.0),
            ErrorSequence::InversePower { m, power } => (m, power),
        };
        if !(m > 0.0) || !(power > 1.0) {
            return Err(Error::invalid(format!(
                "error sequence must be positive and summable (M = {m}, power = {power})"
            )));
        }
        Ok(())
    }
}

impl Default for ErrorSequence {
    fn default() -> Self {
        ErrorSequence::InverseSquare { m: 1e16 }
    }
}

/// The data of one l0 problem instance.
#[derive(Clone, Copy)]
pub struct L0Problem<'a> {
    pub b: &'a dyn LinearOp,
    pub d: &'a dyn LinearOp,
    pub fidelity: &'a Fidelity,
    pub lambda: f64,
    pub gamma: f64,
}

impl<'a> L0Problem<'a> {
    pub fn new(
        b: &'a dyn LinearOp,
        d: &'a dyn LinearOp,
        fidelity: &'a Fidelity,
        lambda: f64,
        gamma: f64,
    ) -> Result<Self> {
        if !(lambda > 0.0) || !(gamma > 0.0) {
            return Err(Error::invalid(format!(
                "lambda and gamma must be positive (lambda = {lambda}, gamma = {gamma})"
            )));
        }
        Error::check_dim(b.in_dim(), d.in_dim())?;
        Error::check_dim(b.out_dim(), fidelity.dim())?;
        // the v-gradient below relies on D^T D = I
        let probe: Vec<f64> = (0..d.in_dim()).map(|i| ((i as f64 + 1.0) * 0.618).sin()).collect();
        let back = d.adjoint(&d.apply(&probe));
        if dist2(&back, &probe) > TIGHT_FRAME_TOL * norm2(&probe).max(1.0) {
            return Err(Error::invalid("the transform D must satisfy D^T D = I"));
        }
        Ok(L0Problem { b, d, fidelity, lambda, gamma })
    }

    /// `lambda / gamma`
    pub fn coupling(&self) -> f64 {
        self.lambda / self.gamma
    }

    /// `F(u, v)`.
    pub fn objective(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        Error::check_dim(self.d.out_dim(), u.len())?;
        Error::check_dim(self.b.in_dim(), v.len())?;
        let bv = self.b.apply(v);
        let dv = self.d.apply(v);
        self.objective_parts(u, &bv, &dv)
    }

    fn objective_parts(&self, u: &[f64], bv: &[f64], dv: &[f64]) -> Result<f64> {
        let fit = self.fidelity.value(bv)?;
        Ok(fit + 0.5 * self.coupling() * dist2_sq(u, dv) + self.lambda * nnz(u) as f64)
    }

    /// `grad H(v; u) = (lambda/gamma)(v - D^T u) + B^T grad psi(B v)`.
    pub fn grad_h(&self, v: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.d.out_dim(), u.len())?;
        Error::check_dim(self.b.in_dim(), v.len())?;
        let dtu = self.d.adjoint(u);
        let bv = self.b.apply(v);
        self.grad_h_parts(v, &bv, &dtu)
    }

    fn grad_h_parts(&self, v: &[f64], bv: &[f64], dtu: &[f64]) -> Result<Vec<f64>> {
        let g = self.fidelity.gradient(bv)?;
        let btg = self.b.adjoint(&g);
        let c = self.coupling();
        Ok(v.iter().zip(dtu).zip(&btg).map(|((vi, di), bi)| c * (vi - di) + bi).collect())
    }

    /// `H(v; u) = (lambda/2gamma)||v - D^T u||^2 + psi(B v)`.
    pub fn h_value(&self, v: &[f64], u: &[f64]) -> Result<f64> {
        let dtu = self.d.adjoint(u);
        Ok(0.5 * self.coupling() * dist2_sq(v, &dtu) + self.fidelity.value(&self.b.apply(v))?)
    }
}

/// Algorithm parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L0Config {
    /// Relaxation in the u-step, `(0, 2]`; descent is guaranteed for `(0, 1)`.
    pub alpha: f64,
    /// Descent slack `rho'` in the inner stopping rule.
    pub rho_prime: f64,
    /// Primal step parameter of the inner loop (`1/p` is the step size).
    pub p: f64,
    /// Dual step parameter; `p q > ||B||^2` is required.
    pub q: f64,
    pub error_seq: ErrorSequence,
    /// Relative u-change tolerance of the outer loop.
    pub outer_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Keep the full support set in every trace record (memory grows with
    /// `n * iterations`); a hash is always kept.
    pub record_supports: bool,
}

impl L0Config {
    /// `0.99 (lambda/gamma)(1/alpha - 1)` for `alpha < 1`, else 0.
    pub fn default_rho_prime(lambda: f64, gamma: f64, alpha: f64) -> f64 {
        if alpha >= 1.0 {
            0.0
        } else {
            0.99 * (lambda / gamma) * (1.0 / alpha - 1.0)
        }
    }

    /// `(1 + 1e-6) ||B||^2 / p`
    pub fn default_q(b_norm: f64, p: f64) -> f64 {
        (1.0 + 1e-6) * b_norm * b_norm / p
    }

    /// Defaults for everything except `alpha` and `p`; `q` is derived from a
    /// power-iteration estimate of `||B||`.
    pub fn for_problem(problem: &L0Problem<'_>, alpha: f64, p: f64) -> Self {
        let b_norm = operator_norm(problem.b);
        L0Config {
            alpha,
            rho_prime: Self::default_rho_prime(problem.lambda, problem.gamma, alpha),
            p,
            q: Self::default_q(b_norm, p),
            error_seq: ErrorSequence::default(),
            outer_tol: 1e-6,
            max_outer: 100_000,
            max_inner: 100_000,
            record_supports: false,
        }
    }

    /// Hard errors on sign or range violations; returns soft warnings for
    /// settings outside the convergence theory.
    pub fn validate(&self, problem: &L0Problem<'_>, b_norm: f64) -> Result<Vec<String>> {
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 2], got {}", self.alpha)));
        }
        if !(self.rho_prime >= 0.0) {
            return Err(Error::invalid("rho_prime must be nonnegative"));
        }
        if !(self.p > 0.0) || !(self.q > 0.0) {
            return Err(Error::invalid("p and q must be positive"));
        }
        if !(self.outer_tol > 0.0) || self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::invalid("tolerance and iteration caps must be positive"));
        }
        self.error_seq.validate()?;
        if !(self.p * self.q > b_norm * b_norm) {
            return Err(Error::invalid(format!(
                "inner loop needs p q > ||B||^2 (p q = {}, ||B||^2 ~ {})",
                self.p * self.q,
                b_norm * b_norm
            )));
        }
        let mut warnings = Vec::new();
        if self.alpha >= 1.0 {
            warnings.push(format!("alpha = {} outside (0, 1): convergence not guaranteed", self.alpha));
        } else {
            let bound = problem.coupling() * (1.0 - self.alpha) / self.alpha;
            if self.rho_prime >= bound {
                warnings.push(format!(
                    "rho' = {} exceeds (lambda/gamma)(1-alpha)/alpha = {bound}: descent not guaranteed",
                    self.rho_prime
                ));
            }
        }
        Ok(warnings)
    }
}

/// Primal `u`, primal `v` and dual `w` iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct L0State {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    /// Outer iteration count reached.
    pub k: usize,
}

impl L0State {
    /// `u = D v`, `w = 0`.
    pub fn from_v(problem: &L0Problem<'_>, v: Vec<f64>) -> Self {
        L0State { u: problem.d.apply(&v), w: vec![0.0; problem.b.out_dim()], v, k: 0 }
    }

    pub fn zeros(problem: &L0Problem<'_>) -> Self {
        Self::from_v(problem, vec![0.0; problem.b.in_dim()])
    }
}

/// Diagnostics for one outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    /// `F(u^{k+1}, v^{k+1})`
    pub f_value: f64,
    /// `||u^{k+1} - u^k||`
    pub u_step_norm: f64,
    /// `||grad H(v^{k+1}; u^{k+1})||`
    pub grad_h_norm: f64,
    /// `e_{k+1}` in force for this step.
    pub error_bound: f64,
    pub nnz: usize,
    pub support_hash: u64,
    #[serde(skip)]
    pub support: Option<SupportSet>,
    pub inner_iters: usize,
    /// The inner loop ran into `max_inner` before its stopping rule held.
    pub inner_cap_hit: bool,
    /// `F` went up by more than the slack relative to the previous step.
    pub descent_violation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct L0Solution {
    pub state: L0State,
    pub trace: Vec<IterationRecord>,
    pub status: SolveStatus,
    pub initial_objective: f64,
    pub warnings: Vec<String>,
}

impl L0Solution {
    pub fn final_objective(&self) -> f64 {
        self.trace.last().map_or(self.initial_objective, |r| r.f_value)
    }

    pub fn descent_violations(&self) -> usize {
        self.trace.iter().filter(|r| r.descent_violation).count()
    }

    pub fn inner_cap_hits(&self) -> usize {
        self.trace.iter().filter(|r| r.inner_cap_hit).count()
    }
}

/// View of one completed outer step, handed to [`solve_l0_observed`].
pub struct OuterStep<'s> {
    pub k: usize,
    pub u_prev: &'s [f64],
    pub v_prev: &'s [f64],
    pub u_next: &'s [f64],
    pub v_next: &'s [f64],
    pub w_next: &'s [f64],
    /// False when the fixed-point test short-circuited the inner loop.
    pub inner_ran: bool,
    pub record: &'s IterationRecord,
}

/// `HT((1 - alpha) u + alpha D v, alpha gamma)`.
pub fn outer_u_step(state: &L0State, alpha: f64, gamma: f64, d: &dyn LinearOp) -> Result<Vec<f64>> {
    if !(alpha > 0.0) {
        return Err(Error::invalid("alpha must be positive"));
    }
    let dv = d.apply(&state.v);
    relaxed_threshold(&state.u, &dv, alpha, gamma)
}

fn relaxed_threshold(u: &[f64], dv: &[f64], alpha: f64, gamma: f64) -> Result<Vec<f64>> {
    hard_threshold(&lincomb(1.0 - alpha, u, alpha, dv), alpha * gamma)
}

/// One primal-dual step towards `argmin_v H(v; u_next)`:
///
/// ```text
/// v+ = lambda/(p gamma + lambda) D^T u_next + p gamma/(p gamma + lambda) (v - B^T w / p)
/// w+ = (1/q)(I - (I + q grad psi)^{-1})(q w + B(2 v+ - v))
/// ```
pub fn inner_fppa_step(
    problem: &L0Problem<'_>,
    cfg: &L0Config,
    v: &[f64],
    w: &[f64],
    u_next: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dtu = problem.d.adjoint(u_next);
    let bv = problem.b.apply(v);
    let (v1, w1, _) = fppa_step_cached(problem, cfg, v, w, &bv, &dtu)?;
    Ok((v1, w1))
}

/// As [`inner_fppa_step`], reusing `B v` and `D^T u_next`; also returns `B v+`.
fn fppa_step_cached(
    problem: &L0Problem<'_>,
    cfg: &L0Config,
    v: &[f64],
    w: &[f64],
    bv: &[f64],
    dtu: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (lambda, gamma, p, q) = (problem.lambda, problem.gamma, cfg.p, cfg.q);
    let denom = p * gamma + lambda;
    let (c_anchor, c_prev) = (lambda / denom, p * gamma / denom);
    let btw = problem.b.adjoint(w);
    let v_next: Vec<f64> =
        v.iter().zip(&btw).zip(dtu).map(|((vi, bi), di)| c_anchor * di + c_prev * (vi - bi / p)).collect();
    let bv_next = problem.b.apply(&v_next);
    let dual_arg: Vec<f64> =
        w.iter().zip(&bv_next).zip(bv).map(|((wi, bn), bo)| q * wi + 2.0 * bn - bo).collect();
    let w_next = problem.fidelity.dual_step(&dual_arg, q)?;
    Ok((v_next, w_next, bv_next))
}

/// The inner-loop exit test: true iff both
/// `F(u_next, v_candidate) - F(u_next, v_prev_outer) <= (rho'/2)||u_next - u_prev||^2`
/// and `||grad H(v_candidate; u_next)|| <= e_{k+1}`.
pub fn inner_stop_check(
    problem: &L0Problem<'_>,
    cfg: &L0Config,
    v_candidate: &[f64],
    v_prev_outer: &[f64],
    u_next: &[f64],
    u_prev: &[f64],
    k: usize,
) -> Result<bool> {
    if k == 0 {
        return Err(Error::invalid("outer index k starts at 1"));
    }
    let grad = match problem.grad_h(v_candidate, u_next) {
        Ok(g) => g,
        Err(Error::Domain(_)) => return Ok(false),
        Err(e) => return Err(e),
    };
    if norm2(&grad) > cfg.error_seq.at(k) {
        return Ok(false);
    }
    let f_ref = problem.objective(u_next, v_prev_outer)?;
    let f_cand = match problem.objective(u_next, v_candidate) {
        Ok(f) => f,
        Err(Error::Domain(_)) => return Ok(false),
        Err(e) => return Err(e),
    };
    Ok(f_cand - f_ref <= 0.5 * cfg.rho_prime * dist2_sq(u_next, u_prev))
}

fn support_hash(u: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    for (i, x) in u.iter().enumerate() {
        if *x != 0.0 {
            i.hash(&mut h);
        }
    }
    h.finish()
}

/// Runs the solver to convergence or `max_outer`.
pub fn solve_l0(problem: &L0Problem<'_>, cfg: &L0Config, init: L0State) -> Result<L0Solution> {
    solve_l0_observed(problem, cfg, init, |_| {})
}

/// [`solve_l0`] with a callback after every outer step.
pub fn solve_l0_observed<F>(
    problem: &L0Problem<'_>,
    cfg: &L0Config,
    init: L0State,
    mut observer: F,
) -> Result<L0Solution>
where
    F: FnMut(&OuterStep<'_>),
{
    Error::check_dim(problem.d.out_dim(), init.u.len())?;
    Error::check_dim(problem.b.in_dim(), init.v.len())?;
    Error::check_dim(problem.b.out_dim(), init.w.len())?;
    let b_norm = operator_norm(problem.b);
    let warnings = cfg.validate(problem, b_norm)?;

    let L0State { mut u, mut v, mut w, k: k0 } = init;
    let mut bv = problem.b.apply(&v);
    let mut dv = problem.d.apply(&v);
    let initial_objective = problem.objective_parts(&u, &bv, &dv)?;
    let mut f_prev = initial_objective;
    let mut trace = Vec::new();
    let mut status = SolveStatus::MaxIterations;
    let half_rho = 0.5 * cfg.rho_prime;

    for step in 1..=cfg.max_outer {
        let k = k0 + step;
        let u_next = relaxed_threshold(&u, &dv, cfg.alpha, problem.gamma)?;
        let dtu = problem.d.adjoint(&u_next);
        let grad = problem.grad_h_parts(&v, &bv, &dtu)?;
        let du2 = dist2_sq(&u_next, &u);
        let e = cfg.error_seq.at(k);

        let mut inner_iters = 0;
        let mut cap_hit = false;
        let inner_ran = du2 + norm2_sq(&grad) > 0.0;
        let (v_next, w_next, bv_next, dv_next, grad_norm, f_next);
        if inner_ran {
            let f_ref = problem.objective_parts(&u_next, &bv, &dv)?;
            let slack = half_rho * du2;
            let (mut vl, mut wl, mut bvl) = (v.clone(), w.clone(), bv.clone());
            loop {
                let (vn, wn, bvn) = fppa_step_cached(problem, cfg, &vl, &wl, &bvl, &dtu)?;
                vl = vn;
                wl = wn;
                bvl = bvn;
                inner_iters += 1;
                let accepted = match problem.grad_h_parts(&vl, &bvl, &dtu) {
                    Ok(g) if norm2(&g) <= e => {
                        let dvl = problem.d.apply(&vl);
                        match problem.objective_parts(&u_next, &bvl, &dvl) {
                            Ok(f) => (f - f_ref <= slack).then_some((f, dvl, norm2(&g))),
                            Err(Error::Domain(_)) => None,
                            Err(err) => return Err(err),
                        }
                    }
                    Ok(_) | Err(Error::Domain(_)) => None,
                    Err(err) => return Err(err),
                };
                if let Some((f, dvl, gn)) = accepted {
                    f_next = f;
                    dv_next = dvl;
                    grad_norm = gn;
                    break;
                }
                if inner_iters >= cfg.max_inner {
                    cap_hit = true;
                    dv_next = problem.d.apply(&vl);
                    f_next = problem.objective_parts(&u_next, &bvl, &dv_next)?;
                    grad_norm = norm2(&problem.grad_h_parts(&vl, &bvl, &dtu)?);
                    break;
                }
            }
            v_next = vl;
            w_next = wl;
            bv_next = bvl;
        } else {
            f_next = problem.objective_parts(&u_next, &bv, &dv)?;
            v_next = v.clone();
            w_next = w.clone();
            bv_next = bv.clone();
            dv_next = dv.clone();
            grad_norm = 0.0;
        }

        let descent_violation = f_next > f_prev + DESCENT_SLACK * f_prev.abs().max(1.0);
        let record = IterationRecord {
            k,
            f_value: f_next,
            u_step_norm: du2.sqrt(),
            grad_h_norm: grad_norm,
            error_bound: e,
            nnz: nnz(&u_next),
            support_hash: support_hash(&u_next),
            support: cfg.record_supports.then(|| support(&u_next)),
            inner_iters,
            inner_cap_hit: cap_hit,
            descent_violation,
        };

        let u_norm = norm2(&u_next);
        let converged = if u_norm > 0.0 {
            du2.sqrt() < cfg.outer_tol * u_norm
        } else {
            // u stuck at 0: fall back to the relative change of (v, w); the
            // first inner step from w = 0 can leave v untouched
            let still = |a: &[f64], b: &[f64]| {
                let d = dist2(a, b);
                d == 0.0 || d < cfg.outer_tol * norm2(a)
            };
            du2 == 0.0 && still(&v_next, &v) && still(&w_next, &w)
        };

        observer(&OuterStep {
            k,
            u_prev: &u,
            v_prev: &v,
            u_next: &u_next,
            v_next: &v_next,
            w_next: &w_next,
            inner_ran,
            record: &record,
        });
        trace.push(record);

        u = u_next;
        v = v_next;
        w = w_next;
        bv = bv_next;
        dv = dv_next;
        f_prev = f_next;

        if converged {
            status = SolveStatus::Converged;
            break;
        }
    }

    let k = k0 + trace.len();
    Ok(L0Solution { state: L0State { u, v, w, k }, trace, status, initial_objective, warnings })
}

/// Fixed-point residuals of a candidate solution:
/// `(||u - HT((1-alpha)u + alpha D v, alpha gamma)||, ||grad H(v; u)||)`.
pub fn fixed_point_residuals(
    problem: &L0Problem<'_>,
    alpha: f64,
    u: &[f64],
    v: &[f64],
) -> Result<(f64, f64)> {
    let dv = problem.d.apply(v);
    let ht = relaxed_threshold(u, &dv, alpha, problem.gamma)?;
    let r_u = norm2(&sub(u, &ht));
    let r_v = norm2(&problem.grad_h(v, u)?);
    Ok((r_u, r_v))
}
