//! Minimal dense matrix helpers for the small optimization problems in this
//! crate (probe, Cox, MIL). Row-major `f64`, plain loops, fixed evaluation
//! order for reproducibility.

use alloc::vec;
use alloc::vec::Vec;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Solve A x = b for symmetric positive definite A by Cholesky decomposition.
/// Returns None when a pivot degenerates (A not positive definite).
pub fn cholesky_solve(a: &Mat, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows;
    assert_eq!(a.cols, n);
    assert_eq!(b.len(), n);
    // lower-triangular factor
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = libm::sqrt(sum);
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    // forward then backward substitution
    let mut y = vec![0.0f64; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0f64; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    Some(x)
}

/// Per-column mean and standard deviation (population) of a data matrix.
pub fn column_stats(x: &Mat) -> (Vec<f64>, Vec<f64>) {
    let mut means = vec![0.0f64; x.cols];
    for r in 0..x.rows {
        for c in 0..x.cols {
            means[c] += x.get(r, c);
        }
    }
    for m in means.iter_mut() {
        *m /= x.rows as f64;
    }
    let mut vars = vec![0.0f64; x.cols];
    for r in 0..x.rows {
        for c in 0..x.cols {
            let d = x.get(r, c) - means[c];
            vars[c] += d * d;
        }
    }
    let sds = vars.iter().map(|v| libm::sqrt(v / x.rows as f64)).collect();
    (means, sds)
}

/// Train-fold z-scoring that drops near-constant columns (spread < 1e-12).
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub kept: Vec<usize>,
}

impl Standardizer {
    /// Fit on training data only.
    pub fn fit(train: &Mat) -> Standardizer {
        let (means, sds) = column_stats(train);
        let kept = (0..train.cols).filter(|&c| sds[c] > 1e-12).collect();
        Standardizer { means, sds, kept }
    }

    pub fn transform(&self, x: &Mat) -> Mat {
        let mut out = Mat::zeros(x.rows, self.kept.len());
        for r in 0..x.rows {
            for (j, &c) in self.kept.iter().enumerate() {
                out.set(r, j, (x.get(r, c) - self.means[c]) / self.sds[c]);
            }
        }
        out
    }
}
