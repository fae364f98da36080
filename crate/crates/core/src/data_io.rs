//! Dataset readers, PGM image I/O, seeded noise synthesis and evaluation
//! metrics.
//!
//! All randomness comes from a ChaCha8 stream seeded with a `u64`, so every
//! generator here is a pure function of its input and seed.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linops::Image;
use crate::{Error, Result};

pub use crate::prox::nnz;

/// Feature vectors with one real label each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

impl LabeledDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        Error::check_dim(features.len(), labels.len())?;
        if let Some(d) = features.first().map(Vec::len) {
            for f in &features {
                Error::check_dim(d, f.len())?;
            }
        }
        Ok(LabeledDataset { features, labels })
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature dimension (0 for an empty set).
    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Rows at the given positions, in that order.
    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Keeps the rows whose label satisfies `keep`.
    pub fn filter_labels(&self, keep: impl Fn(f64) -> bool) -> LabeledDataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(self.labels[i])).collect();
        self.subset(&idx)
    }

    /// Seeded shuffle, then the first `train_count` rows train and the rest test.
    pub fn split(&self, train_count: usize, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
        let (train, test) = shuffle_split(self.len(), train_count, seed)?;
        Ok((self.subset(&train), self.subset(&test)))
    }
}

/// Seeded permutation of `0..n` cut after `train_count` entries.
pub fn shuffle_split(n: usize, train_count: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if train_count > n {
        return Err(Error::invalid(format!("train count {train_count} exceeds dataset size {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(train_count);
    Ok((idx, test))
}

/// Parses libsvm text: `label idx:val idx:val ...` with 1-based indices.
/// Blank lines are skipped. The feature dimension is the largest index seen.
pub fn parse_libsvm(text: &str) -> Result<LabeledDataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut dim = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let perr = |msg: String| Error::Parse { line: line_no, msg };
        let mut tokens = line.split_whitespace();
        let Some(label) = tokens.next() else { continue };
        let label: f64 = label.parse().map_err(|_| perr(format!("bad label {label:?}")))?;
        let mut row = Vec::new();
        for tok in tokens {
            let (i, v) = tok.split_once(':').ok_or_else(|| perr(format!("expected idx:val, got {tok:?}")))?;
            let i: usize = i.parse().map_err(|_| perr(format!("bad index {i:?}")))?;
            if i == 0 {
                return Err(perr("indices are 1-based".into()));
            }
            let v: f64 = v.parse().map_err(|_| perr(format!("bad value {v:?}")))?;
            dim = dim.max(i);
            row.push((i, v));
        }
        rows.push(row);
        labels.push(label);
    }
    let features = rows
        .into_iter()
        .map(|row| {
            let mut f = vec![0.0; dim];
            for (i, v) in row {
                f[i - 1] = v;
            }
            f
        })
        .collect();
    LabeledDataset::new(features, labels)
}

pub fn read_libsvm(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    parse_libsvm(&fs::read_to_string(path)?)
}

/// Writes nonzero features only; values use the shortest round-trip form.
pub fn format_libsvm(ds: &LabeledDataset) -> String {
    let mut out = String::new();
    for (f, y) in ds.features.iter().zip(&ds.labels) {
        let _ = write!(out, "{y}");
        for (i, v) in f.iter().enumerate() {
            if *v != 0.0 {
                let _ = write!(out, " {}:{v}", i + 1);
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_libsvm(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_libsvm(ds))?;
    Ok(())
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated(format!("{what}: header ends at byte {}", bytes.len())))
}

fn idx_payload<'a>(bytes: &'a [u8], offset: usize, len: usize, what: &str) -> Result<&'a [u8]> {
    let have = bytes.len().saturating_sub(offset);
    if have < len {
        return Err(Error::Truncated(format!("{what}: expected {len} data bytes, found {have}")));
    }
    if have > len {
        return Err(Error::Format(format!("{what}: {} trailing bytes", have - len)));
    }
    Ok(&bytes[offset..])
}

/// Decoded IDX image/label pair with the image geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxData {
    pub rows: usize,
    pub cols: usize,
    pub dataset: LabeledDataset,
}

/// Decodes big-endian IDX image and label buffers; pixels are scaled by 1/255.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<IdxData> {
    let magic = be_u32(images, 0, "image file")?;
    if magic != IDX_IMAGES {
        return Err(Error::Format(format!("image file magic {magic:#010x}, expected {IDX_IMAGES:#010x}")));
    }
    let count = be_u32(images, 4, "image file")? as usize;
    let rows = be_u32(images, 8, "image file")? as usize;
    let cols = be_u32(images, 12, "image file")? as usize;
    let pixels = idx_payload(images, 16, count * rows * cols, "image file")?;

    let magic = be_u32(labels, 0, "label file")?;
    if magic != IDX_LABELS {
        return Err(Error::Format(format!("label file magic {magic:#010x}, expected {IDX_LABELS:#010x}")));
    }
    let n_labels = be_u32(labels, 4, "label file")? as usize;
    if n_labels != count {
        return Err(Error::invalid(format!("{count} images but {n_labels} labels")));
    }
    let label_bytes = idx_payload(labels, 8, n_labels, "label file")?;

    let d = rows * cols;
    let features = (0..count)
        .map(|i| pixels[i * d..(i + 1) * d].iter().map(|&b| f64::from(b) / 255.0).collect())
        .collect();
    let labels = label_bytes.iter().map(|&b| f64::from(b)).collect();
    Ok(IdxData { rows, cols, dataset: LabeledDataset::new(features, labels)? })
}

pub fn read_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<IdxData> {
    parse_idx(&fs::read(images_path)?, &fs::read(labels_path)?)
}

/// Decodes a binary P5 PGM with maxval 255. `#` comments are allowed in the
/// header.
pub fn parse_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let next_token = |pos: &mut usize| -> Result<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        // every header token is followed by whitespace
        if start == *pos || *pos == bytes.len() {
            return Err(Error::Truncated("PGM header incomplete".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = next_token(&mut pos)?;
    match magic.as_str() {
        "P5" => {}
        "P2" => return Err(Error::Unsupported("ASCII PGM (P2); only binary P5 is read".into())),
        other => return Err(Error::Unsupported(format!("magic {other:?}; only binary P5 is read"))),
    }
    let mut num = |what: &str| -> Result<usize> {
        let t = next_token(&mut pos)?;
        t.parse().map_err(|_| Error::Format(format!("PGM {what}: {t:?}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval != 255 {
        return Err(Error::Unsupported(format!("PGM maxval {maxval}; only 255 is read")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() {
        return Err(Error::Truncated("PGM raster missing".into()));
    }
    let raster = &bytes[pos + 1..];
    let n = width * height;
    if raster.len() < n {
        return Err(Error::Truncated(format!("PGM raster has {} of {n} bytes", raster.len())));
    }
    Image::new(width, height, raster[..n].iter().map(|&b| f64::from(b)).collect())
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    parse_pgm(&fs::read(path)?)
}

/// Encodes as P5, clamping to `[0, 255]` and rounding half away from zero.
pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.pixels().iter().map(|&x| to_byte(x)));
    out
}

fn to_byte(x: f64) -> u8 {
    if x.is_nan() {
        0
    } else {
        x.round().clamp(0.0, 255.0) as u8
    }
}

pub fn write_pgm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pgm(img))?;
    Ok(())
}

/// One standard normal draw by Box-Muller.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // 1 - U keeps the log argument in (0, 1]
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Adds i.i.d. `N(0, sigma^2)` noise per pixel; values are not clamped.
pub fn add_gaussian_noise(img: &Image, sigma: f64, seed: u64) -> Result<Image> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("noise sigma must be nonnegative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    img.with_pixels(img.pixels().iter().map(|&x| x + sigma * standard_normal(&mut rng)).collect())
}

/// Mean below which Poisson draws use sequential-search inversion.
pub const POISSON_INVERSION_LIMIT: f64 = 30.0;

fn poisson_draw(mean: f64, rng: &mut ChaCha8Rng) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    if mean < POISSON_INVERSION_LIMIT {
        let u: f64 = rng.gen();
        let mut p = (-mean).exp();
        let mut cdf = p;
        let mut k = 0u32;
        while u > cdf && p > 0.0 {
            k += 1;
            p *= mean / f64::from(k);
            cdf += p;
        }
        f64::from(k)
    } else {
        (mean + mean.sqrt() * standard_normal(rng)).round().max(0.0)
    }
}

/// Per-pixel Poisson draw with mean equal to the pixel value.
pub fn sample_poisson(img: &Image, seed: u64) -> Result<Image> {
    if let Some(i) = img.pixels().iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::invalid(format!(
            "Poisson mean must be finite and nonnegative; pixel {i} is {}",
            img.pixels()[i]
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    img.with_pixels(img.pixels().iter().map(|&m| poisson_draw(m, &mut rng)).collect())
}

/// Rescales so the largest pixel equals `peak`.
pub fn scale_to_peak(img: &Image, peak: f64) -> Result<Image> {
    let max = img.pixels().iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    if !(max > 0.0) || !(peak > 0.0) {
        return Err(Error::invalid("peak scaling needs a positive peak and a positive pixel"));
    }
    let s = peak / max;
    img.with_pixels(img.pixels().iter().map(|x| x * s).collect())
}

/// Piecewise-constant test image on `[0, 255]` with a strictly positive
/// background: a bright rectangle, a mid-gray disk and a dark diagonal band.
pub fn synthetic_piecewise_image(width: usize, height: usize) -> Result<Image> {
    let (w, h) = (width as f64, height as f64);
    let mut px = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            let (x, y) = ((c as f64 + 0.5) / w, (r as f64 + 0.5) / h);
            let mut val = 60.0;
            if (0.15..0.55).contains(&x) && (0.1..0.45).contains(&y) {
                val = 210.0;
            }
            if (x - 0.65).powi(2) + (y - 0.65).powi(2) < 0.22f64.powi(2) {
                val = 140.0;
            }
            if (x + y - 0.95).abs() < 0.06 && x < 0.5 {
                val = 20.0;
            }
            px.push(val);
        }
    }
    Image::new(width, height, px)
}

/// `(1/N) sum (pred - truth)^2`
pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    Error::check_dim(truth.len(), pred.len())?;
    if truth.is_empty() {
        return Err(Error::invalid("mse of empty vectors"));
    }
    Ok(crate::linalg::dist2_sq(pred, truth) / truth.len() as f64)
}

/// Fraction of exactly matching labels.
pub fn accuracy(pred: &[f64], truth: &[f64]) -> Result<f64> {
    Error::check_dim(truth.len(), pred.len())?;
    if truth.is_empty() {
        return Err(Error::invalid("accuracy of empty vectors"));
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// `20 log10(255 sqrt(N) / ||clean - restored||)`, i.e. peak over per-pixel
/// RMSE. Identical images give `+inf`.
pub fn psnr(clean: &Image, restored: &Image) -> Result<f64> {
    if clean.width() != restored.width() || clean.height() != restored.height() {
        return Err(Error::invalid(format!(
            "image sizes differ: {}x{} vs {}x{}",
            clean.width(),
            clean.height(),
            restored.width(),
            restored.height()
        )));
    }
    psnr_pixels(clean.pixels(), restored.pixels())
}

pub fn psnr_pixels(clean: &[f64], restored: &[f64]) -> Result<f64> {
    Error::check_dim(clean.len(), restored.len())?;
    let err = crate::linalg::dist2(clean, restored);
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (255.0 * (clean.len() as f64).sqrt() / err).log10())
}
