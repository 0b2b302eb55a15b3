//! Framework dispatch: fit on each fold's train side, score the test side
//! with the task's canonical metric.
//!
//! Probing and Cox regression run on slide- or patient-level vectors
//! (patient vectors are the mean of the patient's slide vectors, built from
//! the split table); supervised finetuning runs on bags of frozen patch
//! features, with a patient's bag being the concatenation of its slides'
//! bags. Retrieval scores the canonical metric through k-nearest-neighbor
//! voting and reports the retrieval-native numbers alongside.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::cox::{cox_fit, CoxError};
use crate::features::{aggregate_patient, FeatureMatrix};
use crate::linalg::{Mat, Standardizer};
use crate::metrics::{auroc, auroc_macro_ovr, balanced_accuracy, c_index, qwk, MetricError};
use crate::mil::{finetune_mil, MilError, MilHyper};
use crate::probe::{train_linear_probe, ProbeError};
use crate::retrieval::{knn_vote, retrieval_eval, MetricSpace, RetrievalError};
use crate::rng::mix64;
use crate::splits::{LabelKind, LabelValue, MetricKind, Role, SplitTable, TaskLevel, TaskSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Framework {
    Probe,
    Cox,
    Mil,
    Retrieval,
}

impl Framework {
    pub fn as_str(&self) -> &'static str {
        match self {
            Framework::Probe => "probe",
            Framework::Cox => "cox",
            Framework::Mil => "mil",
            Framework::Retrieval => "retrieval",
        }
    }

    pub fn parse(s: &str) -> Option<Framework> {
        match s {
            "probe" => Some(Framework::Probe),
            "cox" => Some(Framework::Cox),
            "mil" => Some(Framework::Mil),
            "retrieval" => Some(Framework::Retrieval),
            _ => None,
        }
    }

    pub fn compatible_with(&self, kind: LabelKind) -> bool {
        match self {
            Framework::Cox => kind == LabelKind::Survival,
            _ => kind != LabelKind::Survival,
        }
    }
}

/// Per-sample features: pooled vectors for probe/cox/retrieval, patch bags
/// for MIL. Keyed by slide id.
#[derive(Clone, Debug)]
pub enum SampleFeatures {
    Vectors(BTreeMap<String, Vec<f32>>),
    Bags(BTreeMap<String, FeatureMatrix>),
}

#[derive(Clone, Debug)]
pub struct EvalHyper {
    pub lambda_grid: Vec<f64>,
    pub cox_ridge: f64,
    pub mil: MilHyper,
    pub retrieval_k: usize,
    pub retrieval_space: MetricSpace,
    pub seed: u64,
}

impl Default for EvalHyper {
    fn default() -> Self {
        EvalHyper {
            lambda_grid: vec![1e-4],
            cox_ridge: 1e-4,
            mil: MilHyper::default(),
            retrieval_k: 5,
            retrieval_space: MetricSpace::Cosine,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub task_id: String,
    pub model_name: String,
    pub framework: Framework,
    pub metric: MetricKind,
    pub fold_values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Framework-specific extras (retrieval reports top-k accuracy and
    /// MAP@k averaged over folds).
    pub extras: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("framework {framework:?} is incompatible with label kind {label_kind:?}")]
    IncompatibleFramework { framework: Framework, label_kind: LabelKind },
    #[error("no features for sample {0:?}")]
    MissingFeatures(String),
    #[error("wrong feature shape: {0}")]
    WrongFeatureShape(String),
    #[error("label {0:?} is not a valid rating or class for this task")]
    BadLabel(String),
    #[error("fold {fold} has no {side} samples")]
    EmptySide { fold: usize, side: &'static str },
    #[error("probe: {0}")]
    Probe(#[from] ProbeError),
    #[error("cox: {0}")]
    Cox(#[from] CoxError),
    #[error("mil: {0}")]
    Mil(#[from] MilError),
    #[error("retrieval: {0}")]
    Retrieval(#[from] RetrievalError),
    #[error("metric: {0}")]
    Metric(#[from] MetricError),
}

/// One evaluation sample: a slide, or a patient with its slides merged.
struct Sample {
    label: LabelValue,
    class_index: usize,
    vector: Option<Vec<f32>>,
    bag: Option<Mat>,
    folds: Vec<Option<Role>>,
}

pub fn evaluate_task(
    spec: &TaskSpec,
    table: &SplitTable,
    features: &SampleFeatures,
    framework: Framework,
    hyper: &EvalHyper,
    model_name: &str,
) -> Result<EvalResult, EvalError> {
    if !framework.compatible_with(spec.label_kind) {
        return Err(EvalError::IncompatibleFramework { framework, label_kind: spec.label_kind });
    }
    let samples = build_samples(spec, table, features, framework)?;
    let n_classes = class_count(spec, table)?;
    let mut fold_values = Vec::with_capacity(table.n_folds);
    let mut extras_acc: BTreeMap<String, f64> = BTreeMap::new();
    for fold in 0..table.n_folds {
        let train: Vec<&Sample> =
            samples.iter().filter(|s| s.folds[fold] == Some(Role::Train)).collect();
        let test: Vec<&Sample> =
            samples.iter().filter(|s| s.folds[fold] == Some(Role::Test)).collect();
        if train.is_empty() {
            return Err(EvalError::EmptySide { fold, side: "train" });
        }
        if test.is_empty() {
            return Err(EvalError::EmptySide { fold, side: "test" });
        }
        let fold_seed = mix64(hyper.seed ^ mix64(fold as u64));
        let value = match framework {
            Framework::Probe => {
                eval_probe_fold(spec, &train, &test, n_classes, hyper, fold_seed)?
            }
            Framework::Cox => eval_cox_fold(&train, &test, hyper)?,
            Framework::Mil => eval_mil_fold(spec, &train, &test, hyper, fold_seed)?,
            Framework::Retrieval => {
                eval_retrieval_fold(spec, &train, &test, n_classes, hyper, &mut extras_acc)?
            }
        };
        fold_values.push(value);
    }
    let n = fold_values.len() as f64;
    let mean = fold_values.iter().sum::<f64>() / n;
    let var = fold_values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    for v in extras_acc.values_mut() {
        *v /= n;
    }
    Ok(EvalResult {
        task_id: spec.task_id.clone(),
        model_name: model_name.to_string(),
        framework,
        metric: spec.metric,
        fold_values,
        mean,
        std: libm::sqrt(var),
        extras: extras_acc,
    })
}

fn class_count(spec: &TaskSpec, table: &SplitTable) -> Result<usize, EvalError> {
    match spec.label_kind {
        LabelKind::Survival => Ok(0),
        _ => {
            let declared = spec.classes.unwrap_or(0) as usize;
            let observed = table.class_labels().len();
            Ok(declared.max(observed))
        }
    }
}

fn build_samples(
    spec: &TaskSpec,
    table: &SplitTable,
    features: &SampleFeatures,
    framework: Framework,
) -> Result<Vec<Sample>, EvalError> {
    let class_index = class_index_map(spec, table)?;
    // group rows into samples
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    match spec.level {
        TaskLevel::Slide => {
            for (i, row) in table.rows.iter().enumerate() {
                groups.push((row.slide_id.clone(), vec![i]));
            }
        }
        TaskLevel::Patient => {
            let mut by_patient: BTreeMap<&str, usize> = BTreeMap::new();
            for (i, row) in table.rows.iter().enumerate() {
                match by_patient.get(row.patient_id.as_str()) {
                    Some(&g) => groups[g].1.push(i),
                    None => {
                        by_patient.insert(&row.patient_id, groups.len());
                        groups.push((row.patient_id.clone(), vec![i]));
                    }
                }
            }
        }
    }
    let mut samples = Vec::with_capacity(groups.len());
    for (id, row_indices) in groups {
        let first = &table.rows[row_indices[0]];
        let ci = match &first.label {
            LabelValue::Class(c) => *class_index.get(c).unwrap_or(&0),
            LabelValue::Survival { .. } => 0,
        };
        let (vector, bag) = match (features, framework) {
            (SampleFeatures::Vectors(map), Framework::Mil) => {
                let _ = map;
                return Err(EvalError::WrongFeatureShape(
                    "supervised finetuning needs patch bags, not pooled vectors".to_string(),
                ));
            }
            (SampleFeatures::Bags(map), Framework::Mil) => {
                let mut merged: Option<Mat> = None;
                for &ri in &row_indices {
                    let slide_id = &table.rows[ri].slide_id;
                    let fm = map
                        .get(slide_id)
                        .ok_or_else(|| EvalError::MissingFeatures(slide_id.clone()))?;
                    let m = fm.to_mat();
                    merged = Some(match merged {
                        None => m,
                        Some(mut acc) => {
                            assert_eq!(acc.cols, m.cols);
                            acc.data.extend_from_slice(&m.data);
                            acc.rows += m.rows;
                            acc
                        }
                    });
                }
                (None, merged)
            }
            (SampleFeatures::Vectors(map), _) => {
                let mut vectors = Vec::with_capacity(row_indices.len());
                for &ri in &row_indices {
                    let slide_id = &table.rows[ri].slide_id;
                    let v = map
                        .get(slide_id)
                        .ok_or_else(|| EvalError::MissingFeatures(slide_id.clone()))?;
                    vectors.push(v.clone());
                }
                let merged = aggregate_patient(&vectors).map_err(|e| {
                    EvalError::WrongFeatureShape(alloc::format!("{e}"))
                })?;
                (Some(merged), None)
            }
            (SampleFeatures::Bags(map), _) => {
                // pooled vectors derived from bags by mean pooling
                let mut vectors = Vec::with_capacity(row_indices.len());
                for &ri in &row_indices {
                    let slide_id = &table.rows[ri].slide_id;
                    let fm = map
                        .get(slide_id)
                        .ok_or_else(|| EvalError::MissingFeatures(slide_id.clone()))?;
                    let pooled = crate::features::pool_mean(fm).map_err(|e| {
                        EvalError::WrongFeatureShape(alloc::format!("{e}"))
                    })?;
                    vectors.push(pooled);
                }
                let merged = aggregate_patient(&vectors).map_err(|e| {
                    EvalError::WrongFeatureShape(alloc::format!("{e}"))
                })?;
                (Some(merged), None)
            }
        };
        let _ = &id;
        samples.push(Sample {
            label: first.label.clone(),
            class_index: ci,
            vector,
            bag,
            folds: first.folds.clone(),
        });
    }
    Ok(samples)
}

fn class_index_map(
    spec: &TaskSpec,
    table: &SplitTable,
) -> Result<BTreeMap<String, usize>, EvalError> {
    let mut map = BTreeMap::new();
    match spec.label_kind {
        LabelKind::Survival => {}
        LabelKind::Ordinal => {
            // ordinal labels are their own rating indices
            let k = spec.classes.unwrap_or(0) as usize;
            for label in table.class_labels() {
                let rating: usize =
                    label.parse().map_err(|_| EvalError::BadLabel(label.clone()))?;
                if k > 0 && rating >= k {
                    return Err(EvalError::BadLabel(label.clone()));
                }
                map.insert(label, rating);
            }
        }
        LabelKind::Categorical => {
            for (i, label) in table.class_labels().into_iter().enumerate() {
                map.insert(label, i);
            }
        }
    }
    Ok(map)
}

fn vectors_to_mat(samples: &[&Sample]) -> Result<Mat, EvalError> {
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            s.vector
                .as_ref()
                .map(|v| v.iter().map(|&x| x as f64).collect())
                .ok_or_else(|| EvalError::WrongFeatureShape("missing vector".to_string()))
        })
        .collect::<Result<_, _>>()?;
    Ok(Mat::from_rows(&rows))
}

fn score_classification(
    spec: &TaskSpec,
    n_classes: usize,
    pred: &[usize],
    proba: &[Vec<f64>],
    labels: &[usize],
) -> Result<f64, EvalError> {
    let value = match spec.metric {
        MetricKind::BalancedAccuracy => balanced_accuracy(pred, labels, n_classes)?,
        MetricKind::Qwk => qwk(pred, labels, n_classes)?,
        MetricKind::Auroc => {
            if n_classes == 2 {
                let scores: Vec<f64> = proba.iter().map(|p| p[1]).collect();
                let bools: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
                auroc(&scores, &bools)?
            } else {
                let flat: Vec<f64> = proba.iter().flatten().copied().collect();
                auroc_macro_ovr(&flat, labels.len(), n_classes, labels)?
            }
        }
        MetricKind::CIndex => {
            return Err(EvalError::IncompatibleFramework {
                framework: Framework::Probe,
                label_kind: spec.label_kind,
            })
        }
    };
    Ok(value)
}

fn eval_probe_fold(
    spec: &TaskSpec,
    train: &[&Sample],
    test: &[&Sample],
    n_classes: usize,
    hyper: &EvalHyper,
    seed: u64,
) -> Result<f64, EvalError> {
    let x_train = vectors_to_mat(train)?;
    let y_train: Vec<usize> = train.iter().map(|s| s.class_index).collect();
    let standardizer = Standardizer::fit(&x_train);
    let z_train = standardizer.transform(&x_train);
    let model = train_linear_probe(&z_train, &y_train, &hyper.lambda_grid, seed)?;
    let x_test = vectors_to_mat(test)?;
    let z_test = standardizer.transform(&x_test);
    let labels: Vec<usize> = test.iter().map(|s| s.class_index).collect();
    let mut pred = Vec::with_capacity(test.len());
    let mut proba = Vec::with_capacity(test.len());
    for r in 0..z_test.rows {
        let p = model.predict_proba(z_test.row(r));
        pred.push(argmax(&p));
        proba.push(pad_proba(p, n_classes));
    }
    score_classification(spec, n_classes, &pred, &proba, &labels)
}

fn eval_cox_fold(train: &[&Sample], test: &[&Sample], hyper: &EvalHyper) -> Result<f64, EvalError> {
    let x_train = vectors_to_mat(train)?;
    let (mut time_train, mut event_train) = (Vec::new(), Vec::new());
    for s in train {
        match s.label {
            LabelValue::Survival { time, event } => {
                time_train.push(time);
                event_train.push(event);
            }
            _ => return Err(EvalError::BadLabel("expected survival label".to_string())),
        }
    }
    let standardizer = Standardizer::fit(&x_train);
    let z_train = standardizer.transform(&x_train);
    let model = cox_fit(&z_train, &time_train, &event_train, hyper.cox_ridge)?;
    let x_test = vectors_to_mat(test)?;
    let z_test = standardizer.transform(&x_test);
    let (mut time_test, mut event_test, mut risks) = (Vec::new(), Vec::new(), Vec::new());
    for (i, s) in test.iter().enumerate() {
        match s.label {
            LabelValue::Survival { time, event } => {
                time_test.push(time);
                event_test.push(event);
                risks.push(model.predict_risk(z_test.row(i)));
            }
            _ => return Err(EvalError::BadLabel("expected survival label".to_string())),
        }
    }
    Ok(c_index(&risks, &time_test, &event_test)?)
}

fn eval_mil_fold(
    spec: &TaskSpec,
    train: &[&Sample],
    test: &[&Sample],
    hyper: &EvalHyper,
    seed: u64,
) -> Result<f64, EvalError> {
    let bags: Vec<Mat> = train
        .iter()
        .map(|s| {
            s.bag
                .clone()
                .ok_or_else(|| EvalError::WrongFeatureShape("missing bag".to_string()))
        })
        .collect::<Result<_, _>>()?;
    let y: Vec<usize> = train.iter().map(|s| s.class_index).collect();
    let mil_hyper = MilHyper { seed, ..hyper.mil.clone() };
    let model = finetune_mil(&bags, &y, &mil_hyper)?;
    let n_classes = model.n_classes;
    let labels: Vec<usize> = test.iter().map(|s| s.class_index).collect();
    let mut pred = Vec::with_capacity(test.len());
    let mut proba = Vec::with_capacity(test.len());
    for s in test {
        let bag = s
            .bag
            .as_ref()
            .ok_or_else(|| EvalError::WrongFeatureShape("missing bag".to_string()))?;
        let p = model.predict_proba(bag);
        pred.push(argmax(&p));
        proba.push(pad_proba(p, n_classes));
    }
    score_classification(spec, n_classes, &pred, &proba, &labels)
}

fn eval_retrieval_fold(
    spec: &TaskSpec,
    train: &[&Sample],
    test: &[&Sample],
    n_classes: usize,
    hyper: &EvalHyper,
    extras: &mut BTreeMap<String, f64>,
) -> Result<f64, EvalError> {
    let index: Vec<Vec<f64>> = train
        .iter()
        .map(|s| {
            s.vector
                .as_ref()
                .map(|v| v.iter().map(|&x| x as f64).collect())
                .ok_or_else(|| EvalError::WrongFeatureShape("missing vector".to_string()))
        })
        .collect::<Result<_, _>>()?;
    let index_labels: Vec<usize> = train.iter().map(|s| s.class_index).collect();
    let queries: Vec<Vec<f64>> = test
        .iter()
        .map(|s| {
            s.vector
                .as_ref()
                .map(|v| v.iter().map(|&x| x as f64).collect())
                .ok_or_else(|| EvalError::WrongFeatureShape("missing vector".to_string()))
        })
        .collect::<Result<_, _>>()?;
    let labels: Vec<usize> = test.iter().map(|s| s.class_index).collect();
    let k = hyper.retrieval_k.min(index.len().max(1));
    let mut pred = Vec::with_capacity(test.len());
    let mut proba = Vec::with_capacity(test.len());
    for q in &queries {
        let (vote, fractions) =
            knn_vote(&index, &index_labels, n_classes, q, k, hyper.retrieval_space)?;
        pred.push(vote);
        proba.push(fractions);
    }
    let native =
        retrieval_eval(&index, &index_labels, &queries, &labels, k, hyper.retrieval_space)?;
    *extras.entry("top_k_accuracy".to_string()).or_insert(0.0) += native.top_k_accuracy;
    *extras.entry("map_at_k".to_string()).or_insert(0.0) +=
        native.mean_average_precision_at_k;
    score_classification(spec, n_classes, &pred, &proba, &labels)
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = c;
        }
    }
    best
}

fn pad_proba(mut p: Vec<f64>, n_classes: usize) -> Vec<f64> {
    p.resize(n_classes.max(p.len()), 0.0);
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::splits::{GenSpec, PatientRecord};

    fn make_task(metric: MetricKind, label_kind: LabelKind) -> TaskSpec {
        TaskSpec {
            task_id: "toy".to_string(),
            level: TaskLevel::Slide,
            label_kind,
            classes: if label_kind == LabelKind::Survival { None } else { Some(2) },
            n_samples: 0,
            n_folds: 5,
            metric,
            split_scheme: crate::splits::SplitScheme::Kfold,
            stratified: true,
            seed: 0,
        }
    }

    fn separable_cohort(
        n: usize,
        dim: usize,
        sep: f64,
        seed: u64,
    ) -> (SplitTable, BTreeMap<String, Vec<f32>>) {
        let mut rng = Rng::seed_from(seed);
        let patients: Vec<PatientRecord> = (0..n)
            .map(|i| PatientRecord {
                patient_id: alloc::format!("P{i:03}"),
                slides: vec![alloc::format!("S{i:03}")],
                label: LabelValue::Class(alloc::format!("c{}", i % 2)),
            })
            .collect();
        let gen = GenSpec {
            scheme: crate::splits::SplitScheme::Kfold,
            n_folds: 5,
            seed: 11,
            stratify: true,
        };
        let table = crate::splits::generate_splits(&patients, &gen).unwrap();
        let mut features = BTreeMap::new();
        for i in 0..n {
            let shift = if i % 2 == 0 { -sep } else { sep };
            let v: Vec<f32> = (0..dim).map(|_| (rng.normal() + shift) as f32).collect();
            features.insert(alloc::format!("S{i:03}"), v);
        }
        (table, features)
    }

    #[test]
    fn separable_task_scores_high_with_probe() {
        let (table, features) = separable_cohort(40, 8, 2.5, 3);
        let spec = make_task(MetricKind::BalancedAccuracy, LabelKind::Categorical);
        let result = evaluate_task(
            &spec,
            &table,
            &SampleFeatures::Vectors(features),
            Framework::Probe,
            &EvalHyper::default(),
            "stub",
        )
        .unwrap();
        assert_eq!(result.fold_values.len(), 5);
        assert!(result.mean >= 0.95, "mean {}", result.mean);
    }

    #[test]
    fn shuffled_labels_land_at_chance() {
        // average over a few shuffles: any single small-sample shuffle has
        // wide spread, the average sits near 0.5
        let mut means = Vec::new();
        for shuffle_seed in 0..3u64 {
            let (mut table, features) = separable_cohort(100, 8, 2.5, 9);
            let mut labels: Vec<LabelValue> =
                table.rows.iter().map(|r| r.label.clone()).collect();
            Rng::seed_from(shuffle_seed).shuffle(&mut labels);
            for (row, label) in table.rows.iter_mut().zip(labels) {
                row.label = label;
            }
            let spec = make_task(MetricKind::Auroc, LabelKind::Categorical);
            let result = evaluate_task(
                &spec,
                &table,
                &SampleFeatures::Vectors(features),
                Framework::Probe,
                &EvalHyper::default(),
                "stub",
            )
            .unwrap();
            means.push(result.mean);
        }
        let grand = means.iter().sum::<f64>() / means.len() as f64;
        assert!(
            grand > 0.35 && grand < 0.65,
            "shuffled AUROC should be near chance, got {grand} ({means:?})"
        );
    }

    #[test]
    fn survival_task_routes_to_cox_only() {
        let spec = make_task(MetricKind::CIndex, LabelKind::Survival);
        let table = SplitTable { n_folds: 1, rows: vec![] };
        let err = evaluate_task(
            &spec,
            &table,
            &SampleFeatures::Vectors(BTreeMap::new()),
            Framework::Probe,
            &EvalHyper::default(),
            "stub",
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::IncompatibleFramework { .. }));
    }

    #[test]
    fn categorical_task_rejects_cox() {
        let spec = make_task(MetricKind::Auroc, LabelKind::Categorical);
        let table = SplitTable { n_folds: 1, rows: vec![] };
        let err = evaluate_task(
            &spec,
            &table,
            &SampleFeatures::Vectors(BTreeMap::new()),
            Framework::Cox,
            &EvalHyper::default(),
            "stub",
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::IncompatibleFramework { .. }));
    }

    #[test]
    fn missing_features_are_reported_by_slide() {
        let (table, mut features) = separable_cohort(20, 4, 2.0, 1);
        features.remove("S007");
        let spec = make_task(MetricKind::BalancedAccuracy, LabelKind::Categorical);
        let err = evaluate_task(
            &spec,
            &table,
            &SampleFeatures::Vectors(features),
            Framework::Probe,
            &EvalHyper::default(),
            "stub",
        )
        .unwrap_err();
        assert_eq!(err, EvalError::MissingFeatures("S007".to_string()));
    }

    #[test]
    fn retrieval_framework_reports_native_extras() {
        let (table, features) = separable_cohort(40, 6, 3.0, 17);
        let spec = make_task(MetricKind::BalancedAccuracy, LabelKind::Categorical);
        let result = evaluate_task(
            &spec,
            &table,
            &SampleFeatures::Vectors(features),
            Framework::Retrieval,
            &EvalHyper { retrieval_k: 3, ..EvalHyper::default() },
            "stub",
        )
        .unwrap();
        assert!(result.mean >= 0.9, "knn mean {}", result.mean);
        assert!(result.extras.contains_key("top_k_accuracy"));
        assert!(result.extras.contains_key("map_at_k"));
    }

    #[test]
    fn survival_cohort_evaluates_with_cox() {
        let mut rng = Rng::seed_from(23);
        let n = 50;
        let patients: Vec<PatientRecord> = (0..n)
            .map(|i| {
                let risk = rng.normal();
                let time = libm::exp(-risk) * (1.0 + rng.next_f64());
                PatientRecord {
                    patient_id: alloc::format!("P{i:03}"),
                    slides: vec![alloc::format!("S{i:03}")],
                    label: LabelValue::Survival { time, event: rng.next_f64() < 0.8 },
                }
            })
            .collect();
        let gen = GenSpec {
            scheme: crate::splits::SplitScheme::MonteCarlo,
            n_folds: 5,
            seed: 3,
            stratify: false,
        };
        let table = crate::splits::generate_splits(&patients, &gen).unwrap();
        // single feature strongly correlated with the underlying risk
        let mut features = BTreeMap::new();
        for (i, p) in patients.iter().enumerate() {
            let time = match p.label {
                LabelValue::Survival { time, .. } => time,
                _ => unreachable!(),
            };
            let noisy = -libm::log(time) + 0.2 * rng.normal();
            features.insert(
                alloc::format!("S{i:03}"),
                vec![noisy as f32, rng.normal() as f32],
            );
        }
        let spec = TaskSpec {
            level: TaskLevel::Patient,
            ..make_task(MetricKind::CIndex, LabelKind::Survival)
        };
        let result = evaluate_task(
            &spec,
            &table,
            &SampleFeatures::Vectors(features),
            Framework::Cox,
            &EvalHyper::default(),
            "stub",
        )
        .unwrap();
        assert!(result.mean > 0.7, "c-index {}", result.mean);
    }

    #[test]
    fn patient_level_aggregates_slide_vectors() {
        // two slides per patient with complementary vectors: the patient
        // vector is their midpoint, which carries the class signal
        let patients: Vec<PatientRecord> = (0..20)
            .map(|i| PatientRecord {
                patient_id: alloc::format!("P{i:02}"),
                slides: vec![alloc::format!("P{i:02}_a"), alloc::format!("P{i:02}_b")],
                label: LabelValue::Class(alloc::format!("c{}", i % 2)),
            })
            .collect();
        let gen = GenSpec {
            scheme: crate::splits::SplitScheme::Kfold,
            n_folds: 5,
            seed: 2,
            stratify: true,
        };
        let table = crate::splits::generate_splits(&patients, &gen).unwrap();
        let mut features = BTreeMap::new();
        for (i, p) in patients.iter().enumerate() {
            let shift = if i % 2 == 0 { -2.0f32 } else { 2.0 };
            features.insert(p.slides[0].clone(), vec![shift + 1.0, 0.0]);
            features.insert(p.slides[1].clone(), vec![shift - 1.0, 0.0]);
        }
        let spec = TaskSpec {
            level: TaskLevel::Patient,
            ..make_task(MetricKind::BalancedAccuracy, LabelKind::Categorical)
        };
        let result = evaluate_task(
            &spec,
            &table,
            &SampleFeatures::Vectors(features),
            Framework::Probe,
            &EvalHyper::default(),
            "stub",
        )
        .unwrap();
        assert_eq!(result.mean, 1.0);
    }

    #[test]
    fn mil_framework_runs_on_bags() {
        let mut rng = Rng::seed_from(41);
        let patients: Vec<PatientRecord> = (0..30)
            .map(|i| PatientRecord {
                patient_id: alloc::format!("P{i:02}"),
                slides: vec![alloc::format!("S{i:02}")],
                label: LabelValue::Class(alloc::format!("c{}", i % 2)),
            })
            .collect();
        let gen = GenSpec {
            scheme: crate::splits::SplitScheme::Kfold,
            n_folds: 3,
            seed: 8,
            stratify: true,
        };
        let table = crate::splits::generate_splits(&patients, &gen).unwrap();
        let mut bags = BTreeMap::new();
        for i in 0..30 {
            let positive = i % 2 == 1;
            let mut fm = FeatureMatrix::new(8);
            for p in 0..5 {
                let shift = if positive && p == 0 { 3.0 } else { 0.0 };
                let row: Vec<f32> =
                    (0..8).map(|_| (rng.normal() * 0.4 + shift) as f32).collect();
                fm.push_row(&row);
            }
            bags.insert(alloc::format!("S{i:02}"), fm);
        }
        let spec = TaskSpec {
            n_folds: 3,
            ..make_task(MetricKind::BalancedAccuracy, LabelKind::Categorical)
        };
        let hyper = EvalHyper {
            mil: MilHyper { epochs: 100, lr: 0.1, d_att: 8, ..MilHyper::default() },
            ..EvalHyper::default()
        };
        let result = evaluate_task(
            &spec,
            &table,
            &SampleFeatures::Bags(bags),
            Framework::Mil,
            &hyper,
            "stub",
        )
        .unwrap();
        assert!(result.mean >= 0.8, "MIL mean {}", result.mean);
    }
}
