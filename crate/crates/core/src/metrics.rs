//! Canonical task metrics: balanced accuracy, AUROC, quadratic weighted
//! kappa, and Harrell's concordance index.
//!
//! AUROC and the C-index are computed through rank machinery rather than
//! raw pair loops so the O(n^2) pair-enumeration oracles in the tests stay an
//! independent check. All tie credit is a half, which keeps every
//! intermediate value exactly representable.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("scores contain a single class: both classes are required")]
    SingleClass,
    #[error("class {0} has no true instances")]
    EmptyClass(usize),
    #[error("both raters are constant and equal: kappa denominator is zero")]
    DegenerateMarginals,
    #[error("no comparable pairs (all subjects censored or tied times)")]
    NoComparablePairs,
    #[error("length mismatch between predictions and labels")]
    LengthMismatch,
}

/// Binary AUROC via the Mann-Whitney statistic:
/// (#concordant + 0.5 * #tied) / (#pos * #neg).
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch);
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    // average ranks with midrank tie handling
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; tied block shares the midrank
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Macro-averaged one-vs-rest AUROC for a score matrix (row-major, n x k).
pub fn auroc_macro_ovr(
    scores: &[f64],
    n: usize,
    k: usize,
    labels: &[usize],
) -> Result<f64, MetricError> {
    if labels.len() != n || scores.len() != n * k {
        return Err(MetricError::LengthMismatch);
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for class in 0..k {
        let class_scores: Vec<f64> = (0..n).map(|r| scores[r * k + class]).collect();
        let class_labels: Vec<bool> = labels.iter().map(|&l| l == class).collect();
        match auroc(&class_scores, &class_labels) {
            Ok(v) => {
                total += v;
                counted += 1;
            }
            // a class absent from this fold contributes nothing
            Err(MetricError::SingleClass) => {}
            Err(e) => return Err(e),
        }
    }
    if counted == 0 {
        return Err(MetricError::SingleClass);
    }
    Ok(total / counted as f64)
}

/// Mean of per-class recalls over classes 0..k.
pub fn balanced_accuracy(pred: &[usize], labels: &[usize], k: usize) -> Result<f64, MetricError> {
    if pred.len() != labels.len() {
        return Err(MetricError::LengthMismatch);
    }
    let mut correct = vec![0u64; k];
    let mut count = vec![0u64; k];
    for (&p, &l) in pred.iter().zip(labels.iter()) {
        count[l] += 1;
        if p == l {
            correct[l] += 1;
        }
    }
    let mut sum = 0.0;
    for c in 0..k {
        if count[c] == 0 {
            return Err(MetricError::EmptyClass(c));
        }
        sum += correct[c] as f64 / count[c] as f64;
    }
    Ok(sum / k as f64)
}

/// Quadratic weighted kappa over ratings in [0, k).
pub fn qwk(pred: &[usize], labels: &[usize], k: usize) -> Result<f64, MetricError> {
    if pred.len() != labels.len() {
        return Err(MetricError::LengthMismatch);
    }
    let n = pred.len() as f64;
    let mut observed = vec![0.0f64; k * k];
    let mut row_marginal = vec![0.0f64; k];
    let mut col_marginal = vec![0.0f64; k];
    for (&p, &l) in pred.iter().zip(labels.iter()) {
        assert!(p < k && l < k, "rating out of range");
        observed[l * k + p] += 1.0;
        row_marginal[l] += 1.0;
        col_marginal[p] += 1.0;
    }
    let denom_w = if k > 1 { ((k - 1) * (k - 1)) as f64 } else { 0.0 };
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..k {
        for j in 0..k {
            let w = if denom_w > 0.0 {
                let d = i as f64 - j as f64;
                d * d / denom_w
            } else {
                0.0
            };
            num += w * observed[i * k + j];
            den += w * row_marginal[i] * col_marginal[j] / n;
        }
    }
    if den == 0.0 {
        return Err(MetricError::DegenerateMarginals);
    }
    Ok(1.0 - num / den)
}

/// Harrell's concordance index. A pair (i, j) is comparable when
/// time_i < time_j and subject i had the event; it is concordant when
/// risk_i > risk_j, with half credit for tied risks.
///
/// Implemented by sweeping subjects in descending time order and counting
/// rank positions in a Fenwick tree, so the pair-enumeration oracle in the
/// tests is an independent route.
pub fn c_index(risk: &[f64], time: &[f64], event: &[bool]) -> Result<f64, MetricError> {
    let n = risk.len();
    if time.len() != n || event.len() != n {
        return Err(MetricError::LengthMismatch);
    }
    // compress risks to ranks
    let mut sorted_risks: Vec<f64> = risk.to_vec();
    sorted_risks.sort_by(|a, b| a.partial_cmp(b).expect("finite risks"));
    sorted_risks.dedup();
    let rank_of = |v: f64| -> usize {
        sorted_risks.partition_point(|&x| x < v)
    };
    // descending time order, grouped by tied times
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| time[b].partial_cmp(&time[a]).expect("finite times"));
    let mut tree = Fenwick::new(sorted_risks.len());
    let mut concordant = 0.0f64;
    let mut comparable = 0u64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && time[order[j + 1]] == time[order[i]] {
            j += 1;
        }
        // events in this time group compare against strictly later subjects,
        // all of which are already in the tree
        for &idx in &order[i..=j] {
            if !event[idx] {
                continue;
            }
            let r = rank_of(risk[idx]);
            let later = tree.total();
            if later == 0 {
                continue;
            }
            let below = tree.prefix(r); // later subjects with lower risk
            let at = tree.range(r, r + 1); // later subjects with equal risk
            concordant += below as f64 + at as f64 * 0.5;
            comparable += later;
        }
        for &idx in &order[i..=j] {
            tree.add(rank_of(risk[idx]), 1);
        }
        i = j + 1;
    }
    if comparable == 0 {
        return Err(MetricError::NoComparablePairs);
    }
    Ok(concordant / comparable as f64)
}

struct Fenwick {
    tree: Vec<u64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick { tree: vec![0; n + 1] }
    }

    fn add(&mut self, mut i: usize, v: u64) {
        i += 1;
        while i < self.tree.len() {
            self.tree[i] += v;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum of counts at ranks < i.
    fn prefix(&self, mut i: usize) -> u64 {
        let mut sum = 0;
        while i > 0 {
            sum += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        sum
    }

    fn range(&self, lo: usize, hi: usize) -> u64 {
        self.prefix(hi) - self.prefix(lo)
    }

    fn total(&self) -> u64 {
        self.prefix(self.tree.len() - 1)
    }
}
