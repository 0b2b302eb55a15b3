//! Non-parametric case retrieval: exact nearest-neighbor search in embedding
//! space with label-agreement scoring.

use alloc::vec::Vec;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RetrievalError {
    #[error("query dimension {query} does not match index dimension {index}")]
    DimMismatch { query: usize, index: usize },
    #[error("k = {k} exceeds the number of indexed cases ({m})")]
    KTooLarge { k: usize, m: usize },
    #[error("empty index")]
    EmptyIndex,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSpace {
    Cosine,
    Euclidean,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalScores {
    pub top_k_accuracy: f64,
    pub mean_average_precision_at_k: f64,
}

fn distance(a: &[f64], b: &[f64], space: MetricSpace) -> f64 {
    match space {
        MetricSpace::Euclidean => {
            let mut acc = 0.0;
            for i in 0..a.len() {
                let d = a[i] - b[i];
                acc += d * d;
            }
            libm::sqrt(acc)
        }
        MetricSpace::Cosine => {
            let mut dot = 0.0;
            let mut na = 0.0;
            let mut nb = 0.0;
            for i in 0..a.len() {
                dot += a[i] * b[i];
                na += a[i] * a[i];
                nb += b[i] * b[i];
            }
            if na == 0.0 || nb == 0.0 {
                // zero vectors carry no direction: maximal distance
                return 1.0;
            }
            1.0 - dot / (libm::sqrt(na) * libm::sqrt(nb))
        }
    }
}

/// Indices of the k nearest train rows for one query, distance ties broken by
/// ascending train index.
pub fn k_nearest(
    train: &[Vec<f64>],
    query: &[f64],
    k: usize,
    space: MetricSpace,
) -> Result<Vec<usize>, RetrievalError> {
    if train.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    if k > train.len() {
        return Err(RetrievalError::KTooLarge { k, m: train.len() });
    }
    if train[0].len() != query.len() {
        return Err(RetrievalError::DimMismatch { query: query.len(), index: train[0].len() });
    }
    let mut scored: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .map(|(i, row)| (distance(row, query, space), i))
        .collect();
    scored.sort_by(|a, b| {
        a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1))
    });
    Ok(scored.into_iter().take(k).map(|(_, i)| i).collect())
}

/// Evaluate retrieval quality: top-k accuracy (at least one same-label
/// neighbor among the k nearest) and MAP@k (average precision normalized by
/// min(k, relevant-in-index), the standard IR convention).
pub fn retrieval_eval(
    train: &[Vec<f64>],
    train_labels: &[usize],
    test: &[Vec<f64>],
    test_labels: &[usize],
    k: usize,
    space: MetricSpace,
) -> Result<RetrievalScores, RetrievalError> {
    assert_eq!(train.len(), train_labels.len());
    assert_eq!(test.len(), test_labels.len());
    let mut hits = 0usize;
    let mut ap_sum = 0.0f64;
    for (query, &label) in test.iter().zip(test_labels.iter()) {
        let neighbors = k_nearest(train, query, k, space)?;
        let mut relevant_seen = 0usize;
        let mut ap = 0.0f64;
        for (pos, &n) in neighbors.iter().enumerate() {
            if train_labels[n] == label {
                relevant_seen += 1;
                ap += relevant_seen as f64 / (pos + 1) as f64;
            }
        }
        if relevant_seen > 0 {
            hits += 1;
        }
        let total_relevant = train_labels.iter().filter(|&&l| l == label).count();
        let denom = k.min(total_relevant);
        if denom > 0 {
            ap_sum += ap / denom as f64;
        }
    }
    let n = test.len() as f64;
    Ok(RetrievalScores {
        top_k_accuracy: hits as f64 / n,
        mean_average_precision_at_k: ap_sum / n,
    })
}

/// Majority-vote label from the k nearest neighbors (ties to the smaller
/// class index) plus the per-class vote fractions, for scoring retrieval with
/// the task's canonical metric.
pub fn knn_vote(
    train: &[Vec<f64>],
    train_labels: &[usize],
    n_classes: usize,
    query: &[f64],
    k: usize,
    space: MetricSpace,
) -> Result<(usize, Vec<f64>), RetrievalError> {
    let neighbors = k_nearest(train, query, k, space)?;
    let mut votes = alloc::vec![0usize; n_classes];
    for &n in &neighbors {
        votes[train_labels[n]] += 1;
    }
    let mut best = 0usize;
    for (c, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = c;
        }
    }
    let fractions = votes.iter().map(|&v| v as f64 / k as f64).collect();
    Ok((best, fractions))
}
