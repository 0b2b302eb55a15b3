//! Linear probing: multinomial logistic regression with a ridge penalty on
//! frozen embeddings.
//!
//! The objective is mean cross-entropy plus (lambda/2)*||W||^2 (biases
//! unpenalized), minimized by full-batch gradient descent with a backtracking
//! (Armijo) line search. The problem is convex, so the converged objective is
//! independent of the seeded initialization; the seed only moves the starting
//! point and the internal CV folds used for lambda selection.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Mat;
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ProbeError {
    #[error("all training labels belong to one class")]
    SingleClass,
    #[error("non-finite value encountered during training")]
    NonFinite,
    #[error("empty training set")]
    EmptySet,
}

#[derive(Clone, Debug)]
pub struct ProbeModel {
    /// k x d weight matrix.
    pub weights: Mat,
    /// k biases.
    pub bias: Vec<f64>,
    pub lambda: f64,
    pub n_classes: usize,
    pub train_log: TrainLog,
}

#[derive(Clone, Debug)]
pub struct TrainLog {
    pub iterations: usize,
    pub final_objective: f64,
    /// Objective after every accepted step (non-increasing by construction).
    pub objective_trace: Vec<f64>,
}

const MAX_ITERS: usize = 5000;
const REL_TOL: f64 = 1e-7;

/// Mean cross-entropy + (lambda/2)||W||^2 and its analytic gradient.
pub fn objective_and_gradient(
    x: &Mat,
    y: &[usize],
    k: usize,
    w: &Mat,
    b: &[f64],
    lambda: f64,
) -> (f64, Mat, Vec<f64>) {
    let n = x.rows;
    let d = x.cols;
    let mut loss = 0.0f64;
    let mut grad_w = Mat::zeros(k, d);
    let mut grad_b = vec![0.0f64; k];
    let mut logits = vec![0.0f64; k];
    for r in 0..n {
        let row = x.row(r);
        for c in 0..k {
            logits[c] = crate::linalg::dot(w.row(c), row) + b[c];
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for c in 0..k {
            logits[c] = libm::exp(logits[c] - max);
            denom += logits[c];
        }
        let log_denom = libm::log(denom);
        for c in 0..k {
            let p = logits[c] / denom;
            let e = p - if y[r] == c { 1.0 } else { 0.0 };
            for j in 0..d {
                grad_w.data[c * d + j] += e * row[j];
            }
            grad_b[c] += e;
            if y[r] == c {
                // -log softmax = log(denom) - (logit - max)
                loss += log_denom - libm::log(logits[c]);
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    loss *= inv_n;
    for v in grad_w.data.iter_mut() {
        *v *= inv_n;
    }
    for v in grad_b.iter_mut() {
        *v *= inv_n;
    }
    let mut penalty = 0.0;
    for (g, &v) in grad_w.data.iter_mut().zip(w.data.iter()) {
        penalty += v * v;
        *g += lambda * v;
    }
    loss += 0.5 * lambda * penalty;
    (loss, grad_w, grad_b)
}

/// Fit at a fixed lambda from a seeded random initialization.
pub fn fit_fixed_lambda(
    x: &Mat,
    y: &[usize],
    k: usize,
    lambda: f64,
    seed: u64,
) -> Result<ProbeModel, ProbeError> {
    if x.rows == 0 {
        return Err(ProbeError::EmptySet);
    }
    if !x.is_finite() {
        return Err(ProbeError::NonFinite);
    }
    let d = x.cols;
    let mut rng = Rng::for_stream(seed, 0x9c0be);
    let mut w = Mat::zeros(k, d);
    for v in w.data.iter_mut() {
        *v = rng.normal() * 0.01;
    }
    let mut b = vec![0.0f64; k];
    let (mut obj, mut grad_w, mut grad_b) = objective_and_gradient(x, y, k, &w, &b, lambda);
    let mut trace = vec![obj];
    let mut step = 1.0f64;
    let mut iterations = 0;
    for iter in 0..MAX_ITERS {
        iterations = iter + 1;
        let grad_norm2: f64 = grad_w.data.iter().map(|g| g * g).sum::<f64>()
            + grad_b.iter().map(|g| g * g).sum::<f64>();
        if !grad_norm2.is_finite() {
            return Err(ProbeError::NonFinite);
        }
        if grad_norm2 == 0.0 {
            break;
        }
        // backtracking line search with the Armijo condition
        let mut accepted = false;
        let mut t = step;
        for _ in 0..60 {
            let mut w_new = w.clone();
            for (v, g) in w_new.data.iter_mut().zip(grad_w.data.iter()) {
                *v -= t * g;
            }
            let mut b_new = b.clone();
            for (v, g) in b_new.iter_mut().zip(grad_b.iter()) {
                *v -= t * g;
            }
            let (obj_new, gw_new, gb_new) =
                objective_and_gradient(x, y, k, &w_new, &b_new, lambda);
            if obj_new <= obj - 1e-4 * t * grad_norm2 {
                let rel_change = (obj - obj_new) / obj.abs().max(1e-12);
                w = w_new;
                b = b_new;
                obj = obj_new;
                grad_w = gw_new;
                grad_b = gb_new;
                trace.push(obj);
                step = (t * 2.0).min(1e6);
                accepted = true;
                if rel_change < REL_TOL {
                    iterations = iter + 1;
                    return Ok(finish(w, b, lambda, k, iterations, obj, trace));
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break; // step underflow: nothing left to gain at f64 resolution
        }
    }
    Ok(finish(w, b, lambda, k, iterations, obj, trace))
}

fn finish(
    weights: Mat,
    bias: Vec<f64>,
    lambda: f64,
    k: usize,
    iterations: usize,
    final_objective: f64,
    objective_trace: Vec<f64>,
) -> ProbeModel {
    ProbeModel {
        weights,
        bias,
        lambda,
        n_classes: k,
        train_log: TrainLog { iterations, final_objective, objective_trace },
    }
}

/// Train a probe, selecting lambda from the grid. With more than one
/// candidate, 5-fold cross-validation on the training portion picks the
/// lambda with the lowest mean validation log-loss (ties to the larger
/// lambda); a single-entry grid skips the CV.
pub fn train_linear_probe(
    x: &Mat,
    y: &[usize],
    lambda_grid: &[f64],
    seed: u64,
) -> Result<ProbeModel, ProbeError> {
    assert!(!lambda_grid.is_empty(), "empty lambda grid");
    if x.rows == 0 {
        return Err(ProbeError::EmptySet);
    }
    let k = match y.iter().max() {
        Some(&m) => m + 1,
        None => return Err(ProbeError::EmptySet),
    };
    let distinct = {
        let mut seen = vec![false; k];
        for &label in y {
            seen[label] = true;
        }
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(ProbeError::SingleClass);
    }
    let lambda = if lambda_grid.len() == 1 {
        lambda_grid[0]
    } else {
        select_lambda(x, y, k, lambda_grid, seed)?
    };
    fit_fixed_lambda(x, y, k, lambda, seed)
}

fn select_lambda(
    x: &Mat,
    y: &[usize],
    k: usize,
    grid: &[f64],
    seed: u64,
) -> Result<f64, ProbeError> {
    let n = x.rows;
    let folds = 5usize.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    Rng::for_stream(seed, 0xcf01d).shuffle(&mut order);
    let mut best_lambda = grid[0];
    let mut best_loss = f64::INFINITY;
    for &lambda in grid {
        let mut total_loss = 0.0;
        let mut total_count = 0usize;
        for fold in 0..folds {
            let val: Vec<usize> =
                order.iter().enumerate().filter(|(i, _)| i % folds == fold).map(|(_, &r)| r).collect();
            let train: Vec<usize> =
                order.iter().enumerate().filter(|(i, _)| i % folds != fold).map(|(_, &r)| r).collect();
            if val.is_empty() || train.is_empty() {
                continue;
            }
            let train_y: Vec<usize> = train.iter().map(|&r| y[r]).collect();
            let distinct = {
                let mut seen = vec![false; k];
                for &label in &train_y {
                    seen[label] = true;
                }
                seen.iter().filter(|&&s| s).count()
            };
            if distinct < 2 {
                continue;
            }
            let train_x = take_rows(x, &train);
            let model = fit_fixed_lambda(&train_x, &train_y, k, lambda, seed)?;
            for &r in &val {
                let p = model.predict_proba(x.row(r));
                let py = p[y[r]].max(1e-300);
                total_loss += -libm::log(py);
                total_count += 1;
            }
        }
        if total_count == 0 {
            continue;
        }
        let mean_loss = total_loss / total_count as f64;
        // ties go to the stronger regularizer
        if mean_loss < best_loss - 1e-12 || (mean_loss <= best_loss + 1e-12 && lambda > best_lambda)
        {
            best_loss = mean_loss;
            best_lambda = lambda;
        }
    }
    Ok(best_lambda)
}

fn take_rows(x: &Mat, rows: &[usize]) -> Mat {
    let mut out = Mat::zeros(rows.len(), x.cols);
    for (i, &r) in rows.iter().enumerate() {
        out.data[i * x.cols..(i + 1) * x.cols].copy_from_slice(x.row(r));
    }
    out
}

impl ProbeModel {
    /// Class probabilities for one standardized feature row.
    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let k = self.n_classes;
        let mut logits = vec![0.0f64; k];
        for c in 0..k {
            logits[c] = crate::linalg::dot(self.weights.row(c), row) + self.bias[c];
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for l in logits.iter_mut() {
            *l = libm::exp(*l - max);
            denom += *l;
        }
        for l in logits.iter_mut() {
            *l /= denom;
        }
        logits
    }

    /// Argmax class, ties to the lowest index.
    pub fn predict(&self, row: &[f64]) -> usize {
        let p = self.predict_proba(row);
        let mut best = 0;
        for (c, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = c;
            }
        }
        best
    }
}
