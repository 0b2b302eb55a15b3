//! Supervised finetuning head over frozen patch features: attention-pooled
//! multiple-instance learning.
//!
//! Per bag with patch features h_i: attention scores s_i = w^T tanh(V h_i),
//! a = softmax(s), pooled z = sum_i a_i h_i, logits = Wc z + bc. Trained with
//! seeded mini-batch (bag-level) gradient descent on cross-entropy; all
//! gradients are derived by hand and checked against central differences in
//! the tests.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{dot, Mat};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum MilError {
    #[error("bag {0} is empty")]
    EmptyBag(usize),
    #[error("training diverged to non-finite values (learning rate too high)")]
    NonFinite,
    #[error("all training labels belong to one class")]
    SingleClass,
}

#[derive(Clone, Debug)]
pub struct MilHyper {
    pub d_att: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MilHyper {
    fn default() -> Self {
        MilHyper { d_att: 32, lr: 0.05, epochs: 40, batch_size: 8, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct MilModel {
    /// Attention projection, d_att x dim.
    pub v: Mat,
    /// Attention vector, d_att.
    pub w: Vec<f64>,
    /// Classifier weights, k x dim.
    pub wc: Mat,
    /// Classifier bias, k.
    pub bc: Vec<f64>,
    pub n_classes: usize,
}

/// Gradients of the summed cross-entropy over a set of bags.
#[derive(Clone, Debug)]
pub struct MilGradients {
    pub v: Mat,
    pub w: Vec<f64>,
    pub wc: Mat,
    pub bc: Vec<f64>,
}

impl MilModel {
    pub fn init(dim: usize, n_classes: usize, d_att: usize, seed: u64) -> MilModel {
        let mut rng = Rng::for_stream(seed, 0x311);
        let mut v = Mat::zeros(d_att, dim);
        let scale_v = 1.0 / libm::sqrt(dim as f64);
        for val in v.data.iter_mut() {
            *val = rng.normal() * scale_v;
        }
        let scale_w = 1.0 / libm::sqrt(d_att as f64);
        let w: Vec<f64> = (0..d_att).map(|_| rng.normal() * scale_w).collect();
        let mut wc = Mat::zeros(n_classes, dim);
        for val in wc.data.iter_mut() {
            *val = rng.normal() * 0.01;
        }
        MilModel { v, w, wc, bc: vec![0.0; n_classes], n_classes }
    }

    /// Attention weights and logits for one bag (n_patches x dim).
    pub fn forward(&self, bag: &Mat) -> (Vec<f64>, Vec<f64>) {
        let n = bag.rows;
        let d_att = self.w.len();
        let mut scores = vec![0.0f64; n];
        for i in 0..n {
            let row = bag.row(i);
            let mut s = 0.0;
            for a in 0..d_att {
                s += self.w[a] * libm::tanh(dot(self.v.row(a), row));
            }
            scores[i] = s;
        }
        let attention = softmax(&scores);
        let dim = bag.cols;
        let mut z = vec![0.0f64; dim];
        for i in 0..n {
            let row = bag.row(i);
            for j in 0..dim {
                z[j] += attention[i] * row[j];
            }
        }
        let logits: Vec<f64> =
            (0..self.n_classes).map(|c| dot(self.wc.row(c), &z) + self.bc[c]).collect();
        (attention, logits)
    }

    pub fn predict_proba(&self, bag: &Mat) -> Vec<f64> {
        let (_, logits) = self.forward(bag);
        softmax(&logits)
    }

    pub fn predict(&self, bag: &Mat) -> usize {
        let p = self.predict_proba(bag);
        let mut best = 0;
        for (c, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = c;
            }
        }
        best
    }

    /// Summed cross-entropy over the given bags. A zero probability for the
    /// true class yields an infinite loss, which the training loop reports
    /// as [`MilError::NonFinite`] rather than clipping away.
    pub fn batch_loss(&self, bags: &[Mat], y: &[usize]) -> f64 {
        let mut loss = 0.0;
        for (bag, &label) in bags.iter().zip(y.iter()) {
            let (_, logits) = self.forward(bag);
            let p = softmax(&logits);
            loss += -libm::log(p[label]);
        }
        loss
    }

    /// Analytic gradients of [`Self::batch_loss`].
    pub fn batch_gradients(&self, bags: &[Mat], y: &[usize]) -> MilGradients {
        let dim = self.wc.cols;
        let d_att = self.w.len();
        let k = self.n_classes;
        let mut gv = Mat::zeros(d_att, dim);
        let mut gw = vec![0.0f64; d_att];
        let mut gwc = Mat::zeros(k, dim);
        let mut gbc = vec![0.0f64; k];
        for (bag, &label) in bags.iter().zip(y.iter()) {
            let n = bag.rows;
            // forward pass, keeping intermediates
            let mut tanh_proj = Mat::zeros(n, d_att);
            let mut scores = vec![0.0f64; n];
            for i in 0..n {
                let row = bag.row(i);
                for a in 0..d_att {
                    let t = libm::tanh(dot(self.v.row(a), row));
                    tanh_proj.set(i, a, t);
                    scores[i] += self.w[a] * t;
                }
            }
            let attention = softmax(&scores);
            debug_assert!(
                (attention.iter().sum::<f64>() - 1.0).abs() < 1e-6,
                "attention does not sum to 1"
            );
            let mut z = vec![0.0f64; dim];
            for i in 0..n {
                let row = bag.row(i);
                for j in 0..dim {
                    z[j] += attention[i] * row[j];
                }
            }
            let logits: Vec<f64> =
                (0..k).map(|c| dot(self.wc.row(c), &z) + self.bc[c]).collect();
            let p = softmax(&logits);
            // backward
            let err: Vec<f64> =
                (0..k).map(|c| p[c] - if c == label { 1.0 } else { 0.0 }).collect();
            let mut dz = vec![0.0f64; dim];
            for c in 0..k {
                gbc[c] += err[c];
                for j in 0..dim {
                    gwc.data[c * dim + j] += err[c] * z[j];
                    dz[j] += self.wc.get(c, j) * err[c];
                }
            }
            // through the attention softmax
            let g: Vec<f64> = (0..n).map(|i| dot(&dz, bag.row(i))).collect();
            let mean_g: f64 = (0..n).map(|i| attention[i] * g[i]).sum();
            for i in 0..n {
                let ds = attention[i] * (g[i] - mean_g);
                let row = bag.row(i);
                for a in 0..d_att {
                    let t = tanh_proj.get(i, a);
                    gw[a] += ds * t;
                    let dpre = ds * self.w[a] * (1.0 - t * t);
                    for j in 0..dim {
                        gv.data[a * dim + j] += dpre * row[j];
                    }
                }
            }
        }
        MilGradients { v: gv, w: gw, wc: gwc, bc: gbc }
    }

    /// One seeded epoch of mini-batch SGD. Returns the mean pre-update loss.
    pub fn train_epoch(
        &mut self,
        bags: &[Mat],
        y: &[usize],
        lr: f64,
        batch_size: usize,
        seed: u64,
        epoch: u64,
    ) -> Result<f64, MilError> {
        let n = bags.len();
        let mut order: Vec<usize> = (0..n).collect();
        Rng::for_stream(seed, 0xe90c_0000 | epoch).shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch_size.max(1)) {
            let batch_bags: Vec<Mat> = chunk.iter().map(|&i| bags[i].clone()).collect();
            let batch_y: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            let loss = self.batch_loss(&batch_bags, &batch_y);
            if !loss.is_finite() {
                return Err(MilError::NonFinite);
            }
            epoch_loss += loss;
            let grads = self.batch_gradients(&batch_bags, &batch_y);
            let scale = lr / chunk.len() as f64;
            for (p, g) in self.v.data.iter_mut().zip(grads.v.data.iter()) {
                *p -= scale * g;
            }
            for (p, g) in self.w.iter_mut().zip(grads.w.iter()) {
                *p -= scale * g;
            }
            for (p, g) in self.wc.data.iter_mut().zip(grads.wc.data.iter()) {
                *p -= scale * g;
            }
            for (p, g) in self.bc.iter_mut().zip(grads.bc.iter()) {
                *p -= scale * g;
            }
        }
        let finite = self.v.is_finite()
            && self.wc.is_finite()
            && self.w.iter().all(|v| v.is_finite())
            && self.bc.iter().all(|v| v.is_finite());
        if !finite {
            return Err(MilError::NonFinite);
        }
        Ok(epoch_loss / n as f64)
    }
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|&s| libm::exp(s - max)).collect();
    let denom: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= denom;
    }
    out
}

/// Train an attention-MIL head from scratch on frozen patch features.
pub fn finetune_mil(bags: &[Mat], y: &[usize], hyper: &MilHyper) -> Result<MilModel, MilError> {
    for (i, bag) in bags.iter().enumerate() {
        if bag.rows == 0 {
            return Err(MilError::EmptyBag(i));
        }
    }
    let k = y.iter().max().map_or(0, |&m| m + 1);
    {
        let mut seen = vec![false; k];
        for &label in y {
            seen[label] = true;
        }
        if seen.iter().filter(|&&s| s).count() < 2 {
            return Err(MilError::SingleClass);
        }
    }
    let dim = bags[0].cols;
    let mut model = MilModel::init(dim, k, hyper.d_att, hyper.seed);
    for epoch in 0..hyper.epochs {
        model.train_epoch(bags, y, hyper.lr, hyper.batch_size, hyper.seed, epoch as u64)?;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_bag(rng: &mut Rng, n: usize, dim: usize, shift: f64) -> Mat {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.normal() + shift).collect())
            .collect();
        Mat::from_rows(&rows)
    }

    #[test]
    fn singleton_bag_pools_to_the_patch_itself() {
        let model = MilModel::init(6, 2, 4, 3);
        let mut rng = Rng::seed_from(9);
        let bag = random_bag(&mut rng, 1, 6, 0.0);
        let (attention, logits) = model.forward(&bag);
        assert_eq!(attention, vec![1.0]);
        // logits must equal Wc h + bc computed directly on the single patch
        for c in 0..2 {
            let direct = dot(model.wc.row(c), bag.row(0)) + model.bc[c];
            assert_eq!(logits[c], direct);
        }
    }

    #[test]
    fn attention_sums_to_one_during_training() {
        let mut rng = Rng::seed_from(17);
        let dim = 8;
        let bags: Vec<Mat> =
            (0..20).map(|i| random_bag(&mut rng, 3 + i % 4, dim, 0.0)).collect();
        let y: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let mut model = MilModel::init(dim, 2, 8, 5);
        for epoch in 0..10u64 {
            for bag in &bags {
                let (attention, _) = model.forward(bag);
                let sum: f64 = attention.iter().sum();
                assert!((sum - 1.0).abs() < 1e-6, "epoch {epoch}: sum {sum}");
            }
            model.train_epoch(&bags, &y, 0.05, 4, 5, epoch).unwrap();
        }
    }

    #[test]
    fn empty_bag_is_an_error() {
        let bags = vec![Mat::zeros(0, 4)];
        assert_eq!(
            finetune_mil(&bags, &[0], &MilHyper::default()).unwrap_err(),
            MilError::EmptyBag(0)
        );
    }

    #[test]
    fn huge_learning_rate_reports_non_finite() {
        let mut rng = Rng::seed_from(2);
        let bags: Vec<Mat> = (0..8).map(|_| random_bag(&mut rng, 4, 6, 0.0)).collect();
        let y: Vec<usize> = (0..8).map(|i| i % 2).collect();
        let hyper = MilHyper { lr: 1e18, epochs: 30, ..MilHyper::default() };
        assert_eq!(finetune_mil(&bags, &y, &hyper).unwrap_err(), MilError::NonFinite);
    }

    #[test]
    fn all_gradients_match_central_differences() {
        let mut rng = Rng::seed_from(64);
        let dim = 4;
        let d_att = 3;
        let k = 2;
        let bags = vec![
            random_bag(&mut rng, 1, dim, 0.2),
            random_bag(&mut rng, 3, dim, -0.1),
            random_bag(&mut rng, 2, dim, 0.4),
        ];
        let y = vec![0usize, 1, 0];
        let model = MilModel::init(dim, k, d_att, 11);
        let grads = model.batch_gradients(&bags, &y);
        let eps = 1e-6;
        let check = |analytic: f64, numeric: f64, what: &str| {
            let rel = (analytic - numeric).abs() / analytic.abs().max(1e-6);
            assert!(rel < 1e-4, "{what}: analytic {analytic} vs numeric {numeric}");
        };
        for idx in 0..model.v.data.len() {
            let mut mp = model.clone();
            mp.v.data[idx] += eps;
            let mut mm = model.clone();
            mm.v.data[idx] -= eps;
            let numeric = (mp.batch_loss(&bags, &y) - mm.batch_loss(&bags, &y)) / (2.0 * eps);
            check(grads.v.data[idx], numeric, "dV");
        }
        for idx in 0..model.w.len() {
            let mut mp = model.clone();
            mp.w[idx] += eps;
            let mut mm = model.clone();
            mm.w[idx] -= eps;
            let numeric = (mp.batch_loss(&bags, &y) - mm.batch_loss(&bags, &y)) / (2.0 * eps);
            check(grads.w[idx], numeric, "dw");
        }
        for idx in 0..model.wc.data.len() {
            let mut mp = model.clone();
            mp.wc.data[idx] += eps;
            let mut mm = model.clone();
            mm.wc.data[idx] -= eps;
            let numeric = (mp.batch_loss(&bags, &y) - mm.batch_loss(&bags, &y)) / (2.0 * eps);
            check(grads.wc.data[idx], numeric, "dWc");
        }
        for idx in 0..model.bc.len() {
            let mut mp = model.clone();
            mp.bc[idx] += eps;
            let mut mm = model.clone();
            mm.bc[idx] -= eps;
            let numeric = (mp.batch_loss(&bags, &y) - mm.batch_loss(&bags, &y)) / (2.0 * eps);
            check(grads.bc[idx], numeric, "dbc");
        }
    }

    #[test]
    fn recovers_planted_witness_patch_signal() {
        // bag is positive iff it contains at least one shifted patch
        let mut rng = Rng::seed_from(31);
        let dim = 16;
        let make_set = |rng: &mut Rng, n: usize| {
            let mut bags = Vec::new();
            let mut labels = Vec::new();
            for b in 0..n {
                let positive = b % 2 == 1;
                let n_patches = 6 + rng.below_usize(5);
                let mut rows = Vec::new();
                for p in 0..n_patches {
                    let witness = positive && p == 0;
                    let shift = if witness { 2.5 } else { 0.0 };
                    rows.push((0..dim).map(|_| rng.normal() * 0.5 + shift).collect());
                }
                bags.push(Mat::from_rows(&rows));
                labels.push(usize::from(positive));
            }
            (bags, labels)
        };
        let (train_bags, train_y) = make_set(&mut rng, 200);
        let (test_bags, test_y) = make_set(&mut rng, 100);
        let hyper = MilHyper { d_att: 16, lr: 0.05, epochs: 30, batch_size: 8, seed: 7 };
        let model = finetune_mil(&train_bags, &train_y, &hyper).unwrap();
        let pred: Vec<usize> = test_bags.iter().map(|b| model.predict(b)).collect();
        let ba = crate::metrics::balanced_accuracy(&pred, &test_y, 2).unwrap();
        assert!(ba >= 0.9, "test balanced accuracy {ba}");
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = Rng::seed_from(12);
        let bags: Vec<Mat> = (0..12).map(|_| random_bag(&mut rng, 3, 6, 0.0)).collect();
        let y: Vec<usize> = (0..12).map(|i| i % 2).collect();
        let hyper = MilHyper { epochs: 5, ..MilHyper::default() };
        let a = finetune_mil(&bags, &y, &hyper).unwrap();
        let b = finetune_mil(&bags, &y, &hyper).unwrap();
        assert_eq!(a.v.data, b.v.data);
        assert_eq!(a.wc.data, b.wc.data);
    }
}
