//! Linear operators used as the `B` (forward model) and `D` (sparsifying
//! transform) matrices, plus power-iteration spectral norm estimation.
//!
//! Every operator is immutable after construction, exposes its forward
//! application and its exact adjoint, and can be shared across threads.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{dot, norm2, norm2_sq};
use crate::{Error, Result};

/// A real linear map `R^in_dim -> R^out_dim` with its transpose.
pub trait LinearOp: Send + Sync {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn adjoint(&self, y: &[f64]) -> Vec<f64>;

    /// Materializes the operator column by column. Meant for tests and
    /// small problems only.
    fn to_dense(&self) -> DenseMatrix {
        let (m, n) = (self.out_dim(), self.in_dim());
        let mut data = vec![0.0; m * n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.apply(&e);
            e[j] = 0.0;
            for i in 0..m {
                data[i * n + j] = col[i];
            }
        }
        DenseMatrix { rows: m, cols: n, data }
    }
}

impl<T: LinearOp + ?Sized> LinearOp for &T {
    fn in_dim(&self) -> usize {
        (**self).in_dim()
    }
    fn out_dim(&self) -> usize {
        (**self).out_dim()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (**self).apply(x)
    }
    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        (**self).adjoint(y)
    }
}

impl<T: LinearOp + ?Sized> LinearOp for Box<T> {
    fn in_dim(&self) -> usize {
        (**self).in_dim()
    }
    fn out_dim(&self) -> usize {
        (**self).out_dim()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (**self).apply(x)
    }
    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        (**self).adjoint(y)
    }
}

/// Row-major grayscale image. Pixel values are nominally in `[0, 255]` but
/// are only clamped when written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        Error::check_dim(width * height, pixels.len())?;
        Ok(Image { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Same dimensions, new pixel buffer.
    pub fn with_pixels(&self, pixels: Vec<f64>) -> Result<Self> {
        Self::new(self.width, self.height, pixels)
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Error::check_dim(rows * cols, data.len())?;
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            Error::check_dim(cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(DenseMatrix { rows: rows.len(), cols, data })
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut data = vec![0.0; n * n];
        for (i, d) in diag.iter().enumerate() {
            data[i * n + i] = *d;
        }
        DenseMatrix { rows: n, cols: n, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        DenseMatrix { rows: self.cols, cols: self.rows, data }
    }

    /// `diag(s) * self`
    pub fn scale_rows(&self, s: &[f64]) -> Result<DenseMatrix> {
        Error::check_dim(self.rows, s.len())?;
        let mut out = self.clone();
        for (i, si) in s.iter().enumerate() {
            for x in &mut out.data[i * self.cols..(i + 1) * self.cols] {
                *x *= si;
            }
        }
        Ok(out)
    }
}

impl LinearOp for DenseMatrix {
    fn in_dim(&self) -> usize {
        self.cols
    }

    fn out_dim(&self) -> usize {
        self.rows
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "DenseMatrix::apply dimension");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows, "DenseMatrix::adjoint dimension");
        let mut out = vec![0.0; self.cols];
        for (i, yi) in y.iter().enumerate() {
            if *yi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * yi;
            }
        }
        out
    }

    fn to_dense(&self) -> DenseMatrix {
        self.clone()
    }
}

/// The identity map on `R^n`.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl LinearOp for Identity {
    fn in_dim(&self) -> usize {
        self.0
    }
    fn out_dim(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.0);
        x.to_vec()
    }
    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.0);
        y.to_vec()
    }
}

/// `exp(-||x - y||^2 / (2 sigma^2))`
pub fn gaussian_kernel(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    (-crate::linalg::dist2_sq(x, y) / (2.0 * sigma * sigma)).exp()
}

/// The symmetric Gram matrix `K[j][k] = exp(-||x_j - x_k||^2 / (2 sigma^2))`.
pub fn gaussian_kernel_matrix(points: &[Vec<f64>], sigma: f64) -> Result<DenseMatrix> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("kernel sigma must be positive"));
    }
    let d = points.first().map_or(0, Vec::len);
    for p in points {
        Error::check_dim(d, p.len())?;
    }
    let m = points.len();
    let mut data = vec![0.0; m * m];
    for j in 0..m {
        data[j * m + j] = 1.0;
        for k in (j + 1)..m {
            let v = gaussian_kernel(&points[j], &points[k], sigma);
            data[j * m + k] = v;
            data[k * m + j] = v;
        }
    }
    Ok(DenseMatrix { rows: m, cols: m, data })
}

/// Small odd-sized 2-D correlation kernel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2d {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
}

impl Kernel2d {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.weights[r * self.cols + c]
    }
}

/// Line-segment motion kernel of `length` pixels at `angle_deg` degrees
/// (counter-clockwise from the positive x axis).
///
/// Each cell is weighted by `max(0, 1 - dist)` where `dist` is the distance
/// from the cell centre to the segment of length `length - 1` through the
/// kernel centre. The result is made exactly 180-degree symmetric, cropped
/// to its nonzero support and normalized to unit sum.
pub fn motion_kernel(length: usize, angle_deg: f64) -> Result<Kernel2d> {
    if length < 1 {
        return Err(Error::invalid("motion blur length must be >= 1"));
    }
    if !(0.0..360.0).contains(&angle_deg) {
        return Err(Error::invalid("motion blur angle must lie in [0, 360)"));
    }
    let half = (length as f64 - 1.0) / 2.0;
    let radius = half.ceil() as usize + 1;
    let size = 2 * radius + 1;
    let theta = angle_deg.to_radians();
    let (dir_x, dir_y) = (theta.cos(), theta.sin());

    let mut w = vec![0.0; size * size];
    for i in 0..size {
        for j in 0..size {
            let px = j as f64 - radius as f64;
            let py = radius as f64 - i as f64;
            let t = (px * dir_x + py * dir_y).clamp(-half, half);
            let dist = ((px - t * dir_x).powi(2) + (py - t * dir_y).powi(2)).sqrt();
            w[i * size + j] = (1.0 - dist).max(0.0);
        }
    }
    // 180-degree rotational symmetry: cell (i, j) pairs with (size-1-i, size-1-j).
    let n = w.len();
    for idx in 0..n / 2 {
        let avg = 0.5 * (w[idx] + w[n - 1 - idx]);
        w[idx] = avg;
        w[n - 1 - idx] = avg;
    }

    let row_zero = |i: usize| (0..size).all(|j| w[i * size + j] == 0.0);
    let col_zero = |j: usize| (0..size).all(|i| w[i * size + j] == 0.0);
    let mut crop_r = 0;
    while crop_r < radius && row_zero(crop_r) {
        crop_r += 1;
    }
    let mut crop_c = 0;
    while crop_c < radius && col_zero(crop_c) {
        crop_c += 1;
    }
    let rows = size - 2 * crop_r;
    let cols = size - 2 * crop_c;
    let mut weights = Vec::with_capacity(rows * cols);
    for i in crop_r..crop_r + rows {
        weights.extend_from_slice(&w[i * size + crop_c..i * size + crop_c + cols]);
    }
    let total: f64 = weights.iter().sum();
    for x in &mut weights {
        *x /= total;
    }
    Ok(Kernel2d { rows, cols, weights })
}

/// Half-sample symmetric reflection of an index into `0..n` (`... c b a | a b c ... | c b a ...`).
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// 2-D correlation with a motion kernel under symmetric boundary extension.
/// The adjoint scatters each weighted contribution back to the reflected
/// source pixel, so it is the exact transpose of the padded forward map.
#[derive(Debug, Clone)]
pub struct MotionBlur {
    kernel: Kernel2d,
    width: usize,
    height: usize,
    // Reflected source index for each (output coordinate, kernel offset).
    row_src: Vec<usize>,
    col_src: Vec<usize>,
}

pub fn motion_blur_operator(length: usize, angle_deg: f64, img_w: usize, img_h: usize) -> Result<MotionBlur> {
    if img_w == 0 || img_h == 0 {
        return Err(Error::invalid("image dimensions must be positive"));
    }
    if length > img_w.min(img_h) {
        return Err(Error::invalid(format!(
            "motion blur length {length} exceeds image size {img_w}x{img_h}"
        )));
    }
    let kernel = motion_kernel(length, angle_deg)?;
    Ok(MotionBlur::new(kernel, img_w, img_h))
}

impl MotionBlur {
    pub fn new(kernel: Kernel2d, width: usize, height: usize) -> Self {
        let cr = (kernel.rows / 2) as isize;
        let cc = (kernel.cols / 2) as isize;
        let mut row_src = Vec::with_capacity(height * kernel.rows);
        for r in 0..height {
            for a in 0..kernel.rows {
                row_src.push(reflect(r as isize + a as isize - cr, height));
            }
        }
        let mut col_src = Vec::with_capacity(width * kernel.cols);
        for c in 0..width {
            for b in 0..kernel.cols {
                col_src.push(reflect(c as isize + b as isize - cc, width));
            }
        }
        MotionBlur { kernel, width, height, row_src, col_src }
    }

    pub fn kernel(&self) -> &Kernel2d {
        &self.kernel
    }

    pub fn blur_image(&self, img: &Image) -> Result<Image> {
        Error::check_dim(self.width * self.height, img.len())?;
        img.with_pixels(self.apply(img.pixels()))
    }
}

impl LinearOp for MotionBlur {
    fn in_dim(&self) -> usize {
        self.width * self.height
    }

    fn out_dim(&self) -> usize {
        self.width * self.height
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.in_dim());
        let (kr, kc, w) = (self.kernel.rows, self.kernel.cols, self.width);
        let mut out = vec![0.0; x.len()];
        for r in 0..self.height {
            for c in 0..w {
                let mut s = 0.0;
                for a in 0..kr {
                    let src_row = self.row_src[r * kr + a] * w;
                    for b in 0..kc {
                        let k = self.kernel.weights[a * kc + b];
                        if k != 0.0 {
                            s += k * x[src_row + self.col_src[c * kc + b]];
                        }
                    }
                }
                out[r * w + c] = s;
            }
        }
        out
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.out_dim());
        let (kr, kc, w) = (self.kernel.rows, self.kernel.cols, self.width);
        let mut out = vec![0.0; y.len()];
        for r in 0..self.height {
            for c in 0..w {
                let yv = y[r * w + c];
                for a in 0..kr {
                    let src_row = self.row_src[r * kr + a] * w;
                    for b in 0..kc {
                        let k = self.kernel.weights[a * kc + b];
                        if k != 0.0 {
                            out[src_row + self.col_src[c * kc + b]] += k * yv;
                        }
                    }
                }
            }
        }
        out
    }
}

/// Undecimated tight frame built from the `block x block` 2-D DCT-II basis.
///
/// Filter `(ky, kx)` is the outer product of 1-D orthonormal DCT-II vectors
/// scaled by `1 / block`, applied as a centred correlation with periodic
/// extension. Output is subband-major: coefficient `(ky, kx)` of pixel `i`
/// lives at `(ky * block + kx) * N + i`. With this scaling `D^T D = I`.
#[derive(Debug, Clone)]
pub struct DctFramelet {
    width: usize,
    height: usize,
    block: usize,
    // filters[k][j], already carrying the 1/sqrt(block) factor
    filters: Vec<Vec<f64>>,
}

pub fn dct_framelet_operator(img_w: usize, img_h: usize, block: usize) -> Result<DctFramelet> {
    if block < 3 || block.is_multiple_of(2) {
        return Err(Error::invalid(format!("framelet block must be odd and >= 3, got {block}")));
    }
    if img_w < block || img_h < block {
        return Err(Error::invalid(format!("image {img_w}x{img_h} smaller than framelet block {block}")));
    }
    let b = block as f64;
    let filters = (0..block)
        .map(|k| {
            let c = if k == 0 { (1.0 / b).sqrt() } else { (2.0 / b).sqrt() };
            (0..block)
                .map(|j| c * (PI * k as f64 * (2 * j + 1) as f64 / (2.0 * b)).cos() / b.sqrt())
                .collect()
        })
        .collect();
    Ok(DctFramelet { width: img_w, height: img_h, block, filters })
}

impl DctFramelet {
    pub fn block(&self) -> usize {
        self.block
    }

    pub fn num_subbands(&self) -> usize {
        self.block * self.block
    }

    /// Correlate along rows (horizontal direction) with filter `f`.
    fn filter_h(&self, x: &[f64], f: &[f64], out: &mut [f64]) {
        let (w, h) = (self.width, self.block / 2);
        let mut pad = vec![0.0; w + self.block - 1];
        for (row, orow) in x.chunks_exact(w).zip(out.chunks_exact_mut(w)) {
            for (t, p) in pad.iter_mut().enumerate() {
                *p = row[wrap(t as isize - h as isize, w)];
            }
            for (c, o) in orow.iter_mut().enumerate() {
                *o = f.iter().zip(&pad[c..]).map(|(a, b)| a * b).sum();
            }
        }
    }

    fn filter_v(&self, x: &[f64], f: &[f64], out: &mut [f64]) {
        let (w, h) = (self.width, self.block as isize / 2);
        for (r, orow) in out.chunks_exact_mut(w).enumerate() {
            orow.iter_mut().for_each(|o| *o = 0.0);
            for (j, fj) in f.iter().enumerate() {
                let src = wrap(r as isize + j as isize - h, self.height);
                for (o, xv) in orow.iter_mut().zip(&x[src * w..(src + 1) * w]) {
                    *o += fj * xv;
                }
            }
        }
    }

    /// Transposed horizontal correlation, accumulated into `out`.
    fn filter_h_t(&self, y: &[f64], f: &[f64], out: &mut [f64]) {
        let (w, h) = (self.width, self.block / 2);
        let mut pad = vec![0.0; w + self.block - 1];
        for (yrow, orow) in y.chunks_exact(w).zip(out.chunks_exact_mut(w)) {
            pad.iter_mut().for_each(|p| *p = 0.0);
            for (c, yv) in yrow.iter().enumerate() {
                for (p, fj) in pad[c..].iter_mut().zip(f) {
                    *p += fj * yv;
                }
            }
            for (t, p) in pad.iter().enumerate() {
                orow[wrap(t as isize - h as isize, w)] += p;
            }
        }
    }

    fn filter_v_t(&self, y: &[f64], f: &[f64], out: &mut [f64]) {
        let (w, h) = (self.width, self.block as isize / 2);
        for (r, yrow) in y.chunks_exact(w).enumerate() {
            for (j, fj) in f.iter().enumerate() {
                let dst = wrap(r as isize + j as isize - h, self.height);
                for (o, yv) in out[dst * w..(dst + 1) * w].iter_mut().zip(yrow) {
                    *o += fj * yv;
                }
            }
        }
    }
}

impl LinearOp for DctFramelet {
    fn in_dim(&self) -> usize {
        self.width * self.height
    }

    fn out_dim(&self) -> usize {
        self.num_subbands() * self.in_dim()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.in_dim());
        let n = self.in_dim();
        let b = self.block;
        let mut out = vec![0.0; b * b * n];
        let mut tmp = vec![0.0; n];
        for kx in 0..b {
            self.filter_h(x, &self.filters[kx], &mut tmp);
            for ky in 0..b {
                let band = ky * b + kx;
                self.filter_v(&tmp, &self.filters[ky], &mut out[band * n..(band + 1) * n]);
            }
        }
        out
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.out_dim());
        let n = self.in_dim();
        let b = self.block;
        let mut out = vec![0.0; n];
        let mut acc = vec![0.0; n];
        for kx in 0..b {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for ky in 0..b {
                let band = ky * b + kx;
                self.filter_v_t(&y[band * n..(band + 1) * n], &self.filters[ky], &mut acc);
            }
            self.filter_h_t(&acc, &self.filters[kx], &mut out);
        }
        out
    }
}

/// Forward differences in both directions with periodic wrap. The first
/// `N` outputs are horizontal differences `x[r][c+1] - x[r][c]`, the next
/// `N` vertical differences `x[r+1][c] - x[r][c]`.
#[derive(Debug, Clone, Copy)]
pub struct FirstDifference {
    width: usize,
    height: usize,
}

pub fn first_difference_operator(img_w: usize, img_h: usize) -> Result<FirstDifference> {
    if img_w < 2 || img_h < 2 {
        return Err(Error::invalid("difference operator needs image dims >= 2"));
    }
    Ok(FirstDifference { width: img_w, height: img_h })
}

impl LinearOp for FirstDifference {
    fn in_dim(&self) -> usize {
        self.width * self.height
    }

    fn out_dim(&self) -> usize {
        2 * self.in_dim()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.in_dim());
        let (w, h, n) = (self.width, self.height, self.in_dim());
        let mut out = vec![0.0; 2 * n];
        for r in 0..h {
            let rn = (r + 1) % h;
            for c in 0..w {
                let cn = (c + 1) % w;
                let i = r * w + c;
                out[i] = x[r * w + cn] - x[i];
                out[n + i] = x[rn * w + c] - x[i];
            }
        }
        out
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.out_dim());
        let (w, h, n) = (self.width, self.height, self.in_dim());
        let mut out = vec![0.0; n];
        for r in 0..h {
            let rn = (r + 1) % h;
            for c in 0..w {
                let cn = (c + 1) % w;
                let i = r * w + c;
                out[r * w + cn] += y[i];
                out[i] -= y[i];
                out[rn * w + c] += y[n + i];
                out[i] -= y[n + i];
            }
        }
        out
    }
}

/// Result of [`estimate_spectral_norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralNorm {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Power iteration on `A^T A` from a fixed-seed random start. Returns the
/// square root of the dominant eigenvalue estimate; `converged` is false when
/// `max_iter` ran out before the relative change dropped below `tol`.
pub fn estimate_spectral_norm(op: &dyn LinearOp, tol: f64, max_iter: usize) -> SpectralNorm {
    let n = op.in_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let nx = norm2(&x);
    if n == 0 || nx == 0.0 {
        return SpectralNorm { value: 0.0, converged: true, iterations: 0 };
    }
    x.iter_mut().for_each(|v| *v /= nx);

    let mut prev = f64::NAN;
    for it in 1..=max_iter {
        let ax = op.apply(&x);
        let eig = norm2_sq(&ax);
        let y = op.adjoint(&ax);
        let ny = norm2(&y);
        if ny == 0.0 {
            return SpectralNorm { value: 0.0, converged: true, iterations: it };
        }
        if prev.is_finite() && (eig - prev).abs() <= tol * eig {
            return SpectralNorm { value: eig.sqrt(), converged: true, iterations: it };
        }
        prev = eig;
        x = y.into_iter().map(|v| v / ny).collect();
    }
    SpectralNorm { value: prev.max(0.0).sqrt(), converged: false, iterations: max_iter }
}

/// `||op||_2` by power iteration with the settings used for step-size
/// checks: relative tolerance `1e-10`, at most 1000 iterations. Power
/// iteration approaches the norm from below.
pub fn operator_norm(op: &dyn LinearOp) -> f64 {
    estimate_spectral_norm(op, 1e-10, 1000).value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dist2, norm2};

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn adjoint_gap(op: &dyn LinearOp, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_vec(&mut rng, op.in_dim());
        let y = random_vec(&mut rng, op.out_dim());
        let lhs = dot(&op.apply(&x), &y);
        let rhs = dot(&x, &op.adjoint(&y));
        (lhs - rhs).abs() / (norm2(&x) * norm2(&y))
    }

    #[test]
    fn kernel_matrix_diagonal_and_known_entry() {
        let pts = vec![vec![0.0, 0.0], vec![2.0, 4.0]];
        let k = gaussian_kernel_matrix(&pts, 10f64.sqrt()).unwrap();
        assert_eq!(k.get(0, 0), 1.0);
        assert_eq!(k.get(1, 1), 1.0);
        // ||x0 - x1||^2 = 20, 2 sigma^2 = 20
        assert!((k.get(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((k.get(0, 1) - 0.367879).abs() < 1e-6);
        assert_eq!(k.get(0, 1), k.get(1, 0));
    }

    #[test]
    fn kernel_matrix_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec<f64>> = (0..3).map(|_| random_vec(&mut rng, 2)).collect();
        let k = gaussian_kernel_matrix(&pts, 1.0).unwrap();
        for j in 0..3 {
            for l in 0..3 {
                let d2 = (pts[j][0] - pts[l][0]).powi(2) + (pts[j][1] - pts[l][1]).powi(2);
                let expect = (-d2 / 2.0).exp();
                assert!((k.get(j, l) - expect).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn kernel_matrix_rejects_bad_input() {
        assert!(gaussian_kernel_matrix(&[vec![1.0], vec![1.0, 2.0]], 1.0).is_err());
        assert!(gaussian_kernel_matrix(&[vec![1.0]], 0.0).is_err());
    }

    #[test]
    fn motion_kernel_length_one_is_identity() {
        for angle in [0.0, 30.0, 45.0, 90.0, 271.5] {
            let k = motion_kernel(1, angle).unwrap();
            assert_eq!((k.rows, k.cols), (1, 1));
            assert_eq!(k.weights, vec![1.0]);
        }
        let op = motion_blur_operator(1, 45.0, 5, 4).unwrap();
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert_eq!(op.apply(&x), x);
    }

    #[test]
    fn motion_kernel_normalized_and_symmetric() {
        for (len, angle) in [(3, 0.0), (5, 45.0), (9, 45.0), (7, 120.0), (15, 200.0), (4, 10.0)] {
            let k = motion_kernel(len, angle).unwrap();
            let s: f64 = k.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "len {len} angle {angle} sum {s}");
            assert!(k.rows % 2 == 1 && k.cols % 2 == 1);
            let n = k.weights.len();
            for i in 0..n {
                assert_eq!(k.weights[i], k.weights[n - 1 - i]);
            }
            assert!(k.weights.iter().all(|w| *w >= 0.0));
        }
        // horizontal blur of length 5 spans 5 columns in a single row
        let k = motion_kernel(5, 0.0).unwrap();
        assert_eq!((k.rows, k.cols), (1, 5));
    }

    #[test]
    fn motion_blur_rejects_long_kernel() {
        assert!(motion_blur_operator(9, 45.0, 8, 16).is_err());
        assert!(motion_blur_operator(0, 45.0, 8, 8).is_err());
        assert!(motion_blur_operator(3, 360.0, 8, 8).is_err());
    }

    #[test]
    fn motion_blur_dense_transpose_matches_adjoint() {
        let op = motion_blur_operator(5, 45.0, 8, 8).unwrap();
        let dense = op.to_dense();
        let dense_t = dense.transpose();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_vec(&mut rng, 64);
        let y = random_vec(&mut rng, 64);
        let kx = op.apply(&x);
        let kty = op.adjoint(&y);
        assert!(dist2(&kty, &dense_t.apply(&y)) < 1e-12);
        assert!((dot(&kx, &y) - dot(&x, &kty)).abs() < 1e-10);
    }

    #[test]
    fn blur_preserves_constants() {
        let op = motion_blur_operator(9, 45.0, 16, 12).unwrap();
        let out = op.apply(&vec![7.0; 16 * 12]);
        assert!(out.iter().all(|v| (v - 7.0).abs() < 1e-12));
    }

    #[test]
    fn framelet_is_tight() {
        let op = dct_framelet_operator(16, 16, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_vec(&mut rng, 256);
        let back = op.adjoint(&op.apply(&x));
        assert!(dist2(&back, &x) <= 1e-10 * norm2(&x));
    }

    #[test]
    fn framelet_constant_image_only_dc() {
        let op = dct_framelet_operator(9, 11, 3).unwrap();
        let n = 99;
        let coef = op.apply(&vec![4.0; n]);
        let dc_max = coef[..n].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(dc_max > 1.0);
        let rest = coef[n..].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(rest <= 1e-10, "highpass leak {rest}");
    }

    #[test]
    fn framelet_parseval_block3() {
        let op = dct_framelet_operator(9, 9, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_vec(&mut rng, 81);
        assert!((norm2(&op.apply(&x)) - norm2(&x)).abs() <= 1e-10);
        assert_eq!(op.out_dim(), 9 * 81);
    }

    #[test]
    fn framelet_rejects_even_or_large_block() {
        assert!(dct_framelet_operator(16, 16, 4).is_err());
        assert!(dct_framelet_operator(16, 16, 1).is_err());
        assert!(dct_framelet_operator(5, 16, 7).is_err());
    }

    #[test]
    fn difference_of_constant_is_zero() {
        let op = first_difference_operator(5, 4).unwrap();
        assert!(op.apply(&[3.5; 20]).iter().all(|v| *v == 0.0));
        assert!(first_difference_operator(1, 4).is_err());
    }

    #[test]
    fn difference_single_pixel_has_four_unit_outputs() {
        let op = first_difference_operator(4, 4).unwrap();
        let mut x = vec![0.0; 16];
        x[5] = 1.0;
        let out = op.apply(&x);
        let nz: Vec<f64> = out.iter().copied().filter(|v| *v != 0.0).collect();
        assert_eq!(nz.len(), 4);
        assert!(nz.iter().all(|v| v.abs() == 1.0));
        assert_eq!(nz.iter().filter(|v| **v > 0.0).count(), 2);
    }

    #[test]
    fn difference_norm_bounded_by_sqrt8() {
        let op = first_difference_operator(8, 8).unwrap();
        let est = estimate_spectral_norm(&op, 1e-12, 20_000);
        assert!(est.value <= 2.8285, "{est:?}");
        assert!(est.value > 2.8);
    }

    #[test]
    fn adjoint_pairing_all_operators() {
        let ops: Vec<Box<dyn LinearOp>> = vec![
            Box::new(motion_blur_operator(9, 45.0, 17, 13).unwrap()),
            Box::new(motion_blur_operator(4, 100.0, 6, 9).unwrap()),
            Box::new(dct_framelet_operator(12, 9, 7).unwrap()),
            Box::new(first_difference_operator(7, 5).unwrap()),
            Box::new(gaussian_kernel_matrix(&[vec![0.0], vec![1.0], vec![3.0]], 1.0).unwrap()),
            Box::new(Identity(6)),
        ];
        for (i, op) in ops.iter().enumerate() {
            for seed in 0..5 {
                let gap = adjoint_gap(op.as_ref(), seed);
                assert!(gap <= 1e-10, "operator {i}: gap {gap}");
            }
        }
    }

    #[test]
    fn spectral_norm_simple_cases() {
        let d = DenseMatrix::diagonal(&[2.0, 1.0]);
        let est = estimate_spectral_norm(&d, 1e-12, 10_000);
        assert!((est.value - 2.0).abs() < 1e-6);
        assert!(est.converged);

        let est = estimate_spectral_norm(&Identity(17), 1e-12, 100);
        assert!((est.value - 1.0).abs() < 1e-12);

        let framelet = dct_framelet_operator(8, 8, 3).unwrap();
        let est = estimate_spectral_norm(&framelet, 1e-12, 100);
        assert!((est.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn spectral_norm_flags_iteration_cap() {
        let d = DenseMatrix::diagonal(&[1.0, 0.999_999, 0.5]);
        let est = estimate_spectral_norm(&d, 1e-15, 3);
        assert!(!est.converged);
        assert_eq!(est.iterations, 3);
        assert!(est.value > 0.0 && est.value <= 1.0 + 1e-12);
    }
}
