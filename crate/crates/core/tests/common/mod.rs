//! Shared fixtures and independent numerical oracles for the integration
//! tests. Nothing here calls into the solvers.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sparsefix::linops::DenseMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    DenseMatrix::new(rows, cols, gaussian_vec(rng, rows * cols, scale)).unwrap()
}

/// Row-major `rows x cols` as nested vectors.
pub fn to_rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

pub fn matvec_t(a: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = a.first().map_or(0, Vec::len);
    let mut out = vec![0.0; n];
    for (r, yi) in a.iter().zip(y) {
        for (o, v) in out.iter_mut().zip(r) {
            *o += v * yi;
        }
    }
    out
}

/// `A^T A` for row-major `A`.
pub fn gram(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.first().map_or(0, Vec::len);
    let mut g = vec![vec![0.0; n]; n];
    for r in a {
        for i in 0..n {
            for j in 0..n {
                g[i][j] += r[i] * r[j];
            }
        }
    }
    g
}

/// Solves `M x = b` by Gaussian elimination with partial pivoting.
pub fn solve_dense(m: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .zip(b)
        .map(|(r, bi)| {
            let mut row = r.clone();
            row.push(*bi);
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..=n {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (a[r][n] - s) / a[r][r];
    }
    x
}

/// Largest singular value by one-sided Jacobi orthogonalization of the
/// columns.
pub fn jacobi_max_singular_value(a: &[Vec<f64>]) -> f64 {
    let m = a.len();
    let n = a.first().map_or(0, Vec::len);
    let mut u: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a[i][j]).collect()).collect();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = u[p].iter().map(|x| x * x).sum();
                let beta: f64 = u[q].iter().map(|x| x * x).sum();
                let gamma: f64 = u[p].iter().zip(&u[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (u[p][i], u[q][i]);
                    u[p][i] = c * x - s * y;
                    u[q][i] = s * x + c * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    u.iter().map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max)
}

/// Central finite-difference gradient of `f` at `x`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            xp[i] = orig + h;
            let fp = f(&xp);
            xp[i] = orig - h;
            let fm = f(&xp);
            xp[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-12)
}

/// Compressed-sensing fixture: `y = B v_true + noise` with a Gaussian
/// `rows x cols` matrix and a `k`-sparse ground truth.
pub struct SparseInstance {
    pub b: DenseMatrix,
    pub b_rows: Vec<Vec<f64>>,
    pub v_true: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn sparse_instance(seed: u64, rows: usize, cols: usize, k: usize, noise: f64) -> SparseInstance {
    let mut r = rng(seed);
    let b = gaussian_matrix(&mut r, rows, cols, 1.0 / (rows as f64).sqrt());
    let mut idx: Vec<usize> = (0..cols).collect();
    rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut r);
    let mut v_true = vec![0.0; cols];
    for &i in &idx[..k] {
        let mag: f64 = r.gen_range(1.0..2.0);
        v_true[i] = if r.gen_bool(0.5) { mag } else { -mag };
    }
    let b_rows = to_rows(&b);
    let clean = matvec(&b_rows, &v_true);
    let y = clean.iter().zip(gaussian_vec(&mut r, rows, noise)).map(|(c, e)| c + e).collect();
    SparseInstance { b, b_rows, v_true, y }
}

/// Random `rows x cols` matrix with orthonormal columns, by Gram-Schmidt on a Gaussian draw.
pub fn random_tight_frame(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    assert!(rows >= cols);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cols);
    while basis.len() < cols {
        let mut c = gaussian_vec(rng, rows, 1.0);
        for _ in 0..2 {
            for e in &basis {
                let dot: f64 = c.iter().zip(e).map(|(a, b)| a * b).sum();
                c.iter_mut().zip(e).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(c.into_iter().map(|x| x / norm).collect());
        }
    }
    let data = (0..rows).flat_map(|i| basis.iter().map(move |e| e[i]).collect::<Vec<_>>()).collect();
    DenseMatrix::new(rows, cols, data).unwrap()
}
