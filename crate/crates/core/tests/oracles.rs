mod common;

use common::*;
use proptest::prelude::*;
use sparsefix::data_io::psnr_pixels;
use sparsefix::fidelity::Fidelity;
use sparsefix::linalg::{dot, norm2};
use sparsefix::linops::{
    dct_framelet_operator, estimate_spectral_norm, first_difference_operator, gaussian_kernel_matrix,
    motion_blur_operator, DenseMatrix, LinearOp,
};
use sparsefix::prox::{hard_threshold, nnz, project_support, soft_threshold, support};
use sparsefix::solver_l0::{L0Config, L0Problem};
use sparsefix::solver_l1::grad_t;

#[test]
fn spectral_norm_matches_jacobi_svd() {
    let mut r = rng(11);
    for _ in 0..5 {
        let m = gaussian_matrix(&mut r, 5, 7, 1.0);
        let want = jacobi_max_singular_value(&to_rows(&m));
        let got = estimate_spectral_norm(&m, 1e-14, 100_000);
        assert!(got.converged);
        assert!((got.value - want).abs() <= 1e-6 * want, "{} vs {want}", got.value);
    }
}

#[test]
fn blur_and_difference_match_their_dense_transposes() {
    let ops: Vec<Box<dyn LinearOp>> = vec![
        Box::new(motion_blur_operator(5, 30.0, 7, 6).unwrap()),
        Box::new(first_difference_operator(6, 5).unwrap()),
        Box::new(dct_framelet_operator(6, 6, 3).unwrap()),
    ];
    let mut r = rng(12);
    for op in &ops {
        let a = op.to_dense();
        let at = a.transpose();
        let y = gaussian_vec(&mut r, op.out_dim(), 1.0);
        let want = at.apply(&y);
        let got = op.adjoint(&y);
        assert!(want.iter().zip(&got).all(|(p, q)| (p - q).abs() <= 1e-12));
    }
}

#[test]
fn objective_matches_scalar_reevaluation() {
    let mut r = rng(13);
    let b = gaussian_matrix(&mut r, 4, 6, 1.0);
    // stacked rotation [c P; s I] has orthonormal columns
    let mut rows = vec![vec![0.0; 6]; 12];
    for i in 0..6 {
        rows[i][(i + 2) % 6] = 0.6;
        rows[6 + i][i] = 0.8;
    }
    let d = DenseMatrix::from_rows(&rows).unwrap();
    let y = gaussian_vec(&mut r, 4, 1.0);
    let f = Fidelity::squared_loss(y.clone()).unwrap();
    let (lambda, gamma) = (0.3, 0.7);
    let pb = L0Problem::new(&b, &d, &f, lambda, gamma).unwrap();
    let v = gaussian_vec(&mut r, 6, 1.0);
    let mut u = gaussian_vec(&mut r, 12, 1.0);
    u[2] = 0.0;
    u[5] = 0.0;

    let (br, dr) = (to_rows(&b), to_rows(&d));
    let mut fit = 0.0;
    for i in 0..4 {
        let mut s = 0.0;
        for j in 0..6 {
            s += br[i][j] * v[j];
        }
        fit += 0.5 * (s - y[i]) * (s - y[i]);
    }
    let mut coupling = 0.0;
    let mut count = 0.0;
    for i in 0..12 {
        let mut s = 0.0;
        for j in 0..6 {
            s += dr[i][j] * v[j];
        }
        coupling += (u[i] - s) * (u[i] - s);
        if u[i] != 0.0 {
            count += 1.0;
        }
    }
    let want = fit + lambda / (2.0 * gamma) * coupling + lambda * count;
    let got = pb.objective(&u, &v).unwrap();
    assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
}

#[test]
fn grad_t_matches_finite_differences() {
    let mut r = rng(14);
    let b = gaussian_matrix(&mut r, 5, 4, 1.0);
    let anchor = gaussian_vec(&mut r, 4, 1.0);
    let fids = [Fidelity::squared_loss(gaussian_vec(&mut r, 5, 1.0)).unwrap(), Fidelity::squared_hinge(5)];
    for f in &fids {
        for _ in 0..20 {
            let v = gaussian_vec(&mut r, 4, 1.0);
            let t = |x: &[f64]| {
                let d: f64 = x.iter().zip(&anchor).map(|(p, q)| (p - q) * (p - q)).sum();
                0.7 * d + f.value(&b.apply(x)).unwrap()
            };
            let g = grad_t(&b, f, 1.4, &anchor, &v).unwrap();
            assert!(rel_err(&g, &fd_gradient(t, &v, 1e-6)) < 1e-5);
        }
    }
}

#[test]
fn grad_t_vanishes_when_terms_cancel_in_one_dimension() {
    // T(v) = (1/2)(v - a)^2 + (1/2)(v - y)^2 is stationary at (a + y)/2
    let b = DenseMatrix::identity(1);
    let f = Fidelity::squared_loss(vec![3.0]).unwrap();
    assert_eq!(grad_t(&b, &f, 1.0, &[1.0], &[2.0]).unwrap(), vec![0.0]);
}

#[test]
fn default_q_clears_the_step_condition() {
    let mut r = rng(15);
    let b = gaussian_matrix(&mut r, 6, 9, 1.0);
    let d = DenseMatrix::identity(9);
    let f = Fidelity::squared_loss(vec![0.0; 6]).unwrap();
    let pb = L0Problem::new(&b, &d, &f, 1.0, 1.0).unwrap();
    let cfg = L0Config::for_problem(&pb, 0.5, 0.3);
    let s = jacobi_max_singular_value(&to_rows(&b));
    assert!(cfg.p * cfg.q > s * s);
    assert!(cfg.p * cfg.q < s * s * (1.0 + 2e-6));
}

#[test]
fn kernel_matrix_is_symmetric_positive_semidefinite() {
    let mut r = rng(16);
    let pts: Vec<Vec<f64>> = (0..8).map(|_| gaussian_vec(&mut r, 3, 1.0)).collect();
    let k = gaussian_kernel_matrix(&pts, 1.5).unwrap();
    assert_eq!(k.transpose(), k);
    for _ in 0..20 {
        let x = gaussian_vec(&mut r, 8, 1.0);
        assert!(dot(&x, &k.apply(&x)) >= -1e-12);
    }
}

fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, 1..=n)
}

proptest! {
    #[test]
    fn hard_threshold_minimizes_each_coordinate(u in vec_strategy(20), t in 0.01f64..100.0) {
        let x = hard_threshold(&u, t).unwrap();
        for (xi, ui) in x.iter().zip(&u) {
            let cost = |c: f64| (c - ui).powi(2) / (2.0 * t) + if c != 0.0 { 1.0 } else { 0.0 };
            prop_assert!(*xi == 0.0 || xi == ui);
            prop_assert!(cost(*xi) <= cost(0.0).min(cost(*ui)));
        }
    }

    #[test]
    fn soft_threshold_is_nonexpansive(a in vec_strategy(10), s in 0.0f64..20.0, shift in -5.0f64..5.0) {
        let b: Vec<f64> = a.iter().map(|x| x + shift * x.sin()).collect();
        let (pa, pb) = (soft_threshold(&a, s).unwrap(), soft_threshold(&b, s).unwrap());
        let da: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let db: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        prop_assert!(da <= db + 1e-12);
        prop_assert!(nnz(&pa) <= nnz(&a));
    }

    #[test]
    fn project_support_is_idempotent(x in vec_strategy(15), mask in prop::collection::vec(any::<bool>(), 15)) {
        let idx: Vec<usize> = (1..=x.len()).filter(|i| mask[i - 1]).collect();
        let c = sparsefix::prox::SupportSet::from_indices(idx, x.len()).unwrap();
        let once = project_support(&x, &c).unwrap();
        prop_assert_eq!(project_support(&once, &c).unwrap(), once.clone());
        prop_assert!(support(&once).indices().iter().all(|i| c.contains(*i)));
    }

    #[test]
    fn resolvent_inverts_its_defining_map(
        z in prop::collection::vec(-100.0f64..100.0, 4),
        a in prop::collection::vec(0.0f64..50.0, 4),
        q in 1e-3f64..1e3,
    ) {
        let fids = [
            Fidelity::squared_loss(a.clone()).unwrap(),
            Fidelity::squared_hinge(4),
            Fidelity::poisson_kl(a.iter().map(|x| x + 1e-3).collect()).unwrap(),
        ];
        for f in &fids {
            let w = f.resolvent(&z, q).unwrap();
            let g = f.gradient(&w).unwrap();
            for ((wi, gi), zi) in w.iter().zip(&g).zip(&z) {
                prop_assert!((wi + q * gi - zi).abs() <= 1e-10 * zi.abs().max(1.0));
            }
        }
    }

    #[test]
    fn framelet_is_a_parseval_frame(seed in 0u64..1000, w in 3usize..12, h in 3usize..12) {
        let block = if w.min(h) >= 5 { 5 } else { 3 };
        let fr = dct_framelet_operator(w, h, block).unwrap();
        let x = gaussian_vec(&mut rng(seed), w * h, 10.0);
        let y = fr.apply(&x);
        prop_assert!((norm2(&y) - norm2(&x)).abs() <= 1e-10 * norm2(&x));
        let back = fr.adjoint(&y);
        prop_assert!(back.iter().zip(&x).all(|(p, q)| (p - q).abs() <= 1e-10 * norm2(&x)));
    }

    #[test]
    fn blur_adjoint_pairing(seed in 0u64..1000, len in 1usize..6, angle in 0.0f64..180.0) {
        let op = motion_blur_operator(len, angle, 8, 7).unwrap();
        let mut r = rng(seed);
        let x = gaussian_vec(&mut r, 56, 1.0);
        let y = gaussian_vec(&mut r, 56, 1.0);
        prop_assert!((dot(&op.apply(&x), &y) - dot(&x, &op.adjoint(&y))).abs() <= 1e-10);
    }

    #[test]
    fn psnr_decreases_along_nested_perturbations(seed in 0u64..1000, n in 4usize..64) {
        let mut r = rng(seed);
        let clean = uniform_vec(&mut r, n, 0.0, 255.0);
        let dir = gaussian_vec(&mut r, n, 1.0);
        let mut last = f64::INFINITY;
        for scale in [0.0, 0.5, 1.0, 2.0, 8.0, 40.0] {
            let noisy: Vec<f64> = clean.iter().zip(&dir).map(|(c, d)| c + scale * d).collect();
            let p = psnr_pixels(&clean, &noisy).unwrap();
            if scale == 0.0 {
                prop_assert_eq!(p, f64::INFINITY);
            } else {
                prop_assert!(p < last);
            }
            last = p;
        }
    }
    #[test]
    fn operators_are_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let ops: Vec<Box<dyn LinearOp>> = vec![
            Box::new(motion_blur_operator(4, 60.0, 7, 6).unwrap()),
            Box::new(first_difference_operator(7, 6).unwrap()),
            Box::new(dct_framelet_operator(7, 6, 3).unwrap()),
        ];
        let mut r = rng(seed);
        for op in &ops {
            let x = gaussian_vec(&mut r, 42, 1.0);
            let y = gaussian_vec(&mut r, 42, 1.0);
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let want: Vec<f64> = op.apply(&x).iter().zip(op.apply(&y)).map(|(p, q)| a * p + b * q).collect();
            let got = op.apply(&mix);
            let scale = norm2(&want).max(1.0);
            prop_assert!(got.iter().zip(&want).all(|(p, q)| (p - q).abs() <= 1e-10 * scale));
        }
    }
}
