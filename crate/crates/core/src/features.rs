//! Patch-feature math: the deterministic stub encoder, mean pooling, and
//! patient-level aggregation.
//!
//! `stub-stats-64` maps an RGB patch to 64 features in [0, 1] with a fixed
//! layout: per channel (R, G, B) four moments (mean, std, skew proxy, edge
//! energy) followed by a 16-bin mean-centered intensity histogram, then four
//! luma-sum texture statistics (std, mean absolute deviation, edge energy,
//! range). Centering the histogram and computing deviations as exact
//! integer-ratio values makes every feature except the channel means
//! bit-invariant to constant intensity offsets, so downstream probes see
//! stain-shift structure only where it belongs.

use alloc::vec;
use alloc::vec::Vec;

use crate::raster::RasterImage;

pub const STUB_STATS_DIM: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum FeatureError {
    #[error("feature store is empty")]
    EmptyStore,
    #[error("vector dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
}

/// Row-major matrix of f32 features (n rows of `dim`).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub dim: usize,
    pub data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(dim: usize) -> Self {
        FeatureMatrix { dim, data: Vec::new() }
    }

    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn push_row(&mut self, row: &[f32]) {
        assert_eq!(row.len(), self.dim, "row dimension");
        self.data.extend_from_slice(row);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rows as f64 for the solvers.
    pub fn to_mat(&self) -> crate::linalg::Mat {
        let rows = self.rows();
        let mut out = crate::linalg::Mat::zeros(rows, self.dim);
        for r in 0..rows {
            for c in 0..self.dim {
                out.set(r, c, self.row(r)[c] as f64);
            }
        }
        out
    }
}

/// Channel statistics block: mean, std, skew proxy, edge energy, 16 histogram
/// bins. Deviations are computed as (v*n - sum)/n, which is exact and cancels
/// constant offsets bit-for-bit.
fn channel_block(values: &[i64], max_value: f64, edge_pairs: &[(usize, usize)]) -> [f64; 20] {
    let n = values.len() as i64;
    let sum: i64 = values.iter().sum();
    let n_f = n as f64;
    let mean = sum as f64 / n_f;
    let mut m2 = 0.0f64;
    let mut m3 = 0.0f64;
    for &v in values {
        let dev = (v * n - sum) as f64 / n_f;
        m2 += dev * dev;
        m3 += dev * dev * dev;
    }
    m2 /= n_f;
    m3 /= n_f;
    let std = libm::sqrt(m2);
    let mut edge = 0.0f64;
    for &(a, b) in edge_pairs {
        edge += (values[a] - values[b]).unsigned_abs() as f64;
    }
    let edge_norm = if edge_pairs.is_empty() {
        0.0
    } else {
        edge / (edge_pairs.len() as f64 * max_value)
    };
    let mut block = [0.0f64; 20];
    block[0] = mean / max_value;
    block[1] = std / (max_value / 2.0);
    block[2] = (m3 / (max_value * max_value * max_value) + 1.0) / 2.0;
    block[3] = edge_norm;
    // mean-centered 16-bin histogram; the center offset is an exact integer
    // round-half-up of the mean so constant shifts cancel
    let center = (2 * sum + n) / (2 * n);
    let scale = max_value / 255.0; // map centered values back onto a 0..255 lattice
    for &v in values {
        let centered = libm::floor((v - center) as f64 / scale + 0.5) + 128.0;
        let clamped = centered.clamp(0.0, 255.0) as usize;
        block[4 + (clamped >> 4)] += 1.0;
    }
    for bin in block[4..20].iter_mut() {
        *bin /= n_f;
    }
    block
}

/// The 64-feature stub patch encoder. Works for any patch size; all features
/// are area-normalized.
pub fn stub_stats_64(img: &RasterImage) -> [f32; STUB_STATS_DIM] {
    let w = img.width as usize;
    let h = img.height as usize;
    let n = w * h;
    assert!(n > 0, "empty patch");
    // horizontal and vertical neighbor pairs, fixed order
    let mut pairs = Vec::with_capacity(2 * n);
    for y in 0..h {
        for x in 0..w.saturating_sub(1) {
            pairs.push((y * w + x, y * w + x + 1));
        }
    }
    for y in 0..h.saturating_sub(1) {
        for x in 0..w {
            pairs.push((y * w + x, (y + 1) * w + x));
        }
    }
    let mut out = [0.0f32; STUB_STATS_DIM];
    let mut luma: Vec<i64> = vec![0; n];
    for channel in 0..3 {
        let values: Vec<i64> = img
            .data
            .chunks_exact(3)
            .map(|px| px[channel] as i64)
            .collect();
        for (l, &v) in luma.iter_mut().zip(values.iter()) {
            *l += v;
        }
        let block = channel_block(&values, 255.0, &pairs);
        for (i, &v) in block.iter().enumerate() {
            out[channel * 20 + i] = v as f32;
        }
    }
    // luma-sum texture block: std, MAD, edge, range over r+g+b in 0..765
    let n_i = n as i64;
    let sum: i64 = luma.iter().sum();
    let n_f = n as f64;
    let mut m2 = 0.0f64;
    let mut mad = 0.0f64;
    for &v in &luma {
        let dev = (v * n_i - sum) as f64 / n_f;
        m2 += dev * dev;
        mad += if dev < 0.0 { -dev } else { dev };
    }
    let std = libm::sqrt(m2 / n_f);
    mad /= n_f;
    let mut edge = 0.0f64;
    for &(a, b) in &pairs {
        edge += (luma[a] - luma[b]).unsigned_abs() as f64;
    }
    let edge_norm =
        if pairs.is_empty() { 0.0 } else { edge / (pairs.len() as f64 * 765.0) };
    let max = luma.iter().copied().max().unwrap_or(0);
    let min = luma.iter().copied().min().unwrap_or(0);
    out[60] = (std / 382.5) as f32;
    out[61] = (mad / 382.5) as f32;
    out[62] = edge_norm as f32;
    out[63] = ((max - min) as f64 / 765.0) as f32;
    out
}

/// Arithmetic mean over rows, accumulated in f64.
pub fn pool_mean(features: &FeatureMatrix) -> Result<Vec<f32>, FeatureError> {
    let rows = features.rows();
    if rows == 0 {
        return Err(FeatureError::EmptyStore);
    }
    let mut acc = vec![0.0f64; features.dim];
    for r in 0..rows {
        for (a, &v) in acc.iter_mut().zip(features.row(r).iter()) {
            *a += v as f64;
        }
    }
    Ok(acc.into_iter().map(|v| (v / rows as f64) as f32).collect())
}

/// Mean of per-slide vectors: the patient-level feature.
pub fn aggregate_patient(slide_vectors: &[Vec<f32>]) -> Result<Vec<f32>, FeatureError> {
    let first = slide_vectors.first().ok_or(FeatureError::EmptyStore)?;
    let dim = first.len();
    let mut acc = vec![0.0f64; dim];
    for v in slide_vectors {
        if v.len() != dim {
            return Err(FeatureError::DimMismatch { expected: dim, got: v.len() });
        }
        for (a, &x) in acc.iter_mut().zip(v.iter()) {
            *a += x as f64;
        }
    }
    let n = slide_vectors.len() as f64;
    Ok(acc.into_iter().map(|v| (v / n) as f32).collect())
}
