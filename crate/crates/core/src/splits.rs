//! Task definitions and train-test split tables.
//!
//! A task is a per-slide table (patient id, slide id, label, one train/test
//! assignment column per fold) plus metadata (level, label kind, folds,
//! canonical metric, split scheme). Splits are always assigned at patient
//! granularity so a patient's slides can never straddle train and test, and
//! generation is a pure function of (labels, scheme, seed).

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskLevel {
    Patient,
    Slide,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Categorical,
    Ordinal,
    Survival,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    BalancedAccuracy,
    Auroc,
    Qwk,
    CIndex,
}

impl MetricKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MetricKind::BalancedAccuracy => "balanced_accuracy",
            MetricKind::Auroc => "auroc",
            MetricKind::Qwk => "qwk",
            MetricKind::CIndex => "c_index",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitScheme {
    Kfold,
    MonteCarlo,
    OfficialSingle,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub level: TaskLevel,
    pub label_kind: LabelKind,
    /// Number of classes for categorical/ordinal tasks; None for survival.
    pub classes: Option<u32>,
    pub n_samples: usize,
    pub n_folds: usize,
    pub metric: MetricKind,
    pub split_scheme: SplitScheme,
    pub stratified: bool,
    pub seed: u64,
}

impl TaskSpec {
    /// Metric and label kind must agree: survival pairs with the concordance
    /// index, ordinal with kappa, categorical with AUROC or balanced accuracy.
    pub fn validate(&self) -> Result<(), SplitError> {
        let ok = match self.label_kind {
            LabelKind::Survival => self.metric == MetricKind::CIndex,
            LabelKind::Ordinal => self.metric == MetricKind::Qwk,
            LabelKind::Categorical => {
                matches!(self.metric, MetricKind::Auroc | MetricKind::BalancedAccuracy)
            }
        };
        if !ok {
            return Err(SplitError::IncompatibleMetric {
                label_kind: self.label_kind,
                metric: self.metric,
            });
        }
        if self.n_folds == 0 {
            return Err(SplitError::BadSpec("n_folds must be at least 1".to_string()));
        }
        match self.label_kind {
            LabelKind::Survival => {
                if self.classes.is_some() {
                    return Err(SplitError::BadSpec(
                        "survival tasks carry no class count".to_string(),
                    ));
                }
            }
            _ => {
                if self.classes.is_none_or(|k| k < 2) {
                    return Err(SplitError::BadSpec(
                        "categorical/ordinal tasks need at least two classes".to_string(),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LabelValue {
    Class(String),
    Survival { time: f64, event: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitRow {
    pub patient_id: String,
    pub slide_id: String,
    pub label: LabelValue,
    /// One entry per fold; None = excluded from that fold.
    pub folds: Vec<Option<Role>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitTable {
    pub n_folds: usize,
    pub rows: Vec<SplitRow>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SplitError {
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("class {class:?} has {got} patients but the scheme needs at least {needed}")]
    ClassStarvation { class: String, needed: usize, got: usize },
    #[error("patient {patient:?} appears in both train and test of fold {fold} (rows {row_a} and {row_b})")]
    Leakage { fold: usize, patient: String, row_a: usize, row_b: usize },
    #[error("patient {patient:?} carries conflicting labels (rows {row_a} and {row_b})")]
    LabelConflict { patient: String, row_a: usize, row_b: usize },
    #[error("slide {slide:?} appears twice (rows {row_a} and {row_b})")]
    DuplicateSlide { slide: String, row_a: usize, row_b: usize },
    #[error("metric {metric:?} is incompatible with label kind {label_kind:?}")]
    IncompatibleMetric { label_kind: LabelKind, metric: MetricKind },
    #[error("bad task spec: {0}")]
    BadSpec(String),
    #[error("fold index {fold} out of range ({n_folds} folds)")]
    BadFoldIndex { fold: usize, n_folds: usize },
}

/// Non-fatal findings from validation.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioWarning {
    pub fold: usize,
    pub train_patients: usize,
    pub test_patients: usize,
}

impl SplitTable {
    /// Distinct class labels in deterministic (lexicographic) order.
    pub fn class_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self
            .rows
            .iter()
            .filter_map(|r| match &r.label {
                LabelValue::Class(c) => Some(c.clone()),
                LabelValue::Survival { .. } => None,
            })
            .collect();
        labels.sort();
        labels.dedup();
        labels
    }

    /// Check every structural invariant. Hard violations are errors; the
    /// 80:20 ratio check comes back as warnings (official single-fold splits
    /// are exempt).
    pub fn validate(&self, spec: &TaskSpec) -> Result<Vec<RatioWarning>, SplitError> {
        spec.validate()?;
        let mut slide_seen: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, row) in self.rows.iter().enumerate() {
            if row.folds.len() != self.n_folds {
                return Err(SplitError::BadSpec(alloc::format!(
                    "row {i} has {} fold entries, expected {}",
                    row.folds.len(),
                    self.n_folds
                )));
            }
            if let Some(&first) = slide_seen.get(row.slide_id.as_str()) {
                return Err(SplitError::DuplicateSlide {
                    slide: row.slide_id.clone(),
                    row_a: first,
                    row_b: i,
                });
            }
            slide_seen.insert(&row.slide_id, i);
        }
        if spec.level == TaskLevel::Patient {
            let mut label_seen: BTreeMap<&str, (usize, &LabelValue)> = BTreeMap::new();
            for (i, row) in self.rows.iter().enumerate() {
                match label_seen.get(row.patient_id.as_str()) {
                    Some(&(first, label)) if label != &row.label => {
                        return Err(SplitError::LabelConflict {
                            patient: row.patient_id.clone(),
                            row_a: first,
                            row_b: i,
                        });
                    }
                    Some(_) => {}
                    None => {
                        label_seen.insert(&row.patient_id, (i, &row.label));
                    }
                }
            }
        }
        let mut warnings = Vec::new();
        for fold in 0..self.n_folds {
            let mut roles: BTreeMap<&str, (usize, Role)> = BTreeMap::new();
            for (i, row) in self.rows.iter().enumerate() {
                let Some(role) = row.folds[fold] else { continue };
                match roles.get(row.patient_id.as_str()) {
                    Some(&(first, existing)) if existing != role => {
                        return Err(SplitError::Leakage {
                            fold,
                            patient: row.patient_id.clone(),
                            row_a: first,
                            row_b: i,
                        });
                    }
                    Some(_) => {}
                    None => {
                        roles.insert(&row.patient_id, (i, role));
                    }
                }
            }
            if spec.split_scheme != SplitScheme::OfficialSingle {
                let train = roles.values().filter(|(_, r)| *r == Role::Train).count();
                let test = roles.len() - train;
                let expected_test = round_half_up(0.2 * roles.len() as f64).max(1);
                if test.abs_diff(expected_test) > 1 {
                    warnings.push(RatioWarning { fold, train_patients: train, test_patients: test });
                }
            }
        }
        Ok(warnings)
    }
}

fn round_half_up(v: f64) -> usize {
    libm::floor(v + 0.5) as usize
}

/// Per-patient input to split generation.
#[derive(Clone, Debug, PartialEq)]
pub struct PatientRecord {
    pub patient_id: String,
    pub slides: Vec<String>,
    pub label: LabelValue,
}

#[derive(Clone, Debug)]
pub struct GenSpec {
    pub scheme: SplitScheme,
    pub n_folds: usize,
    pub seed: u64,
    pub stratify: bool,
}

/// Stratification key: the class for categorical labels, the event indicator
/// for survival.
fn stratum_of(label: &LabelValue) -> String {
    match label {
        LabelValue::Class(c) => c.clone(),
        LabelValue::Survival { event, .. } => {
            if *event {
                "event".to_string()
            } else {
                "censored".to_string()
            }
        }
    }
}

/// Generate patient-grouped splits. K-fold partitions patients into near-
/// equal test blocks (each patient tests exactly once); Monte Carlo draws
/// `n_folds` independent seeded 80:20 splits. Stratification keeps class
/// proportions within one patient per class, allocating remainders to the
/// least-loaded folds (largest-remainder style, ties broken by the seeded
/// stream).
pub fn generate_splits(
    patients: &[PatientRecord],
    spec: &GenSpec,
) -> Result<SplitTable, SplitError> {
    let n = patients.len();
    if n < 2 {
        return Err(SplitError::TooFewSamples { needed: 2, got: n });
    }
    if spec.n_folds == 0 {
        return Err(SplitError::BadSpec("n_folds must be at least 1".to_string()));
    }
    // strata in deterministic order
    let mut strata: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, p) in patients.iter().enumerate() {
        strata.entry(stratum_of(&p.label)).or_default().push(i);
    }
    if spec.stratify {
        let needed = match spec.scheme {
            SplitScheme::Kfold => spec.n_folds,
            _ => 2,
        };
        for (class, members) in &strata {
            if members.len() < needed {
                return Err(SplitError::ClassStarvation {
                    class: class.clone(),
                    needed,
                    got: members.len(),
                });
            }
        }
    }
    // fold -> per-patient role
    let mut assignments: Vec<Vec<Role>> = vec![vec![Role::Train; n]; spec.n_folds];
    match spec.scheme {
        SplitScheme::Kfold => {
            let mut rng = Rng::for_stream(spec.seed, 0x5f01d);
            let mut fold_load = vec![0usize; spec.n_folds];
            let groups: Vec<Vec<usize>> = if spec.stratify {
                strata.values().cloned().collect()
            } else {
                vec![(0..n).collect()]
            };
            for members in groups {
                let mut members = members;
                rng.shuffle(&mut members);
                let base = members.len() / spec.n_folds;
                let extras = members.len() % spec.n_folds;
                // extras go to the currently lightest folds, seeded tiebreak
                let mut order: Vec<usize> = (0..spec.n_folds).collect();
                rng.shuffle(&mut order);
                order.sort_by_key(|&f| fold_load[f]);
                let mut sizes = vec![base; spec.n_folds];
                for &f in order.iter().take(extras) {
                    sizes[f] += 1;
                }
                let mut cursor = 0usize;
                for (fold, &size) in sizes.iter().enumerate() {
                    for &p in &members[cursor..cursor + size] {
                        assignments[fold][p] = Role::Test;
                    }
                    fold_load[fold] += size;
                    cursor += size;
                }
            }
        }
        SplitScheme::MonteCarlo | SplitScheme::OfficialSingle => {
            for fold in 0..spec.n_folds {
                let mut rng = Rng::for_stream(spec.seed, 0x3c00 + fold as u64);
                let test_total = round_half_up(0.2 * n as f64).max(1);
                if spec.stratify {
                    // largest-remainder allocation of the test quota per class
                    let classes: Vec<(&String, &Vec<usize>)> = strata.iter().collect();
                    let mut counts = vec![0usize; classes.len()];
                    let mut remainders: Vec<(f64, usize)> = Vec::new();
                    let mut assigned = 0usize;
                    for (ci, (_, members)) in classes.iter().enumerate() {
                        let quota = test_total as f64 * members.len() as f64 / n as f64;
                        let floor = libm::floor(quota) as usize;
                        counts[ci] = floor.min(members.len());
                        assigned += counts[ci];
                        remainders.push((quota - floor as f64, ci));
                    }
                    let mut tie_order: Vec<usize> = (0..classes.len()).collect();
                    rng.shuffle(&mut tie_order);
                    let tie_rank: Vec<usize> = {
                        let mut rank = vec![0usize; classes.len()];
                        for (pos, &ci) in tie_order.iter().enumerate() {
                            rank[ci] = pos;
                        }
                        rank
                    };
                    remainders.sort_by(|a, b| {
                        b.0.partial_cmp(&a.0).unwrap().then(tie_rank[a.1].cmp(&tie_rank[b.1]))
                    });
                    let mut left = test_total.saturating_sub(assigned);
                    for &(_, ci) in &remainders {
                        if left == 0 {
                            break;
                        }
                        if counts[ci] < classes[ci].1.len() {
                            counts[ci] += 1;
                            left -= 1;
                        }
                    }
                    for (ci, (_, members)) in classes.iter().enumerate() {
                        let picks = rng.sample_indices(members.len(), counts[ci]);
                        for &k in &picks {
                            assignments[fold][members[k]] = Role::Test;
                        }
                    }
                } else {
                    let picks = rng.sample_indices(n, test_total);
                    for &p in &picks {
                        assignments[fold][p] = Role::Test;
                    }
                }
            }
        }
    }
    // expand to one row per slide
    let mut rows = Vec::new();
    for (i, p) in patients.iter().enumerate() {
        for slide in &p.slides {
            rows.push(SplitRow {
                patient_id: p.patient_id.clone(),
                slide_id: slide.clone(),
                label: p.label.clone(),
                folds: (0..spec.n_folds).map(|f| Some(assignments[f][i])).collect(),
            });
        }
    }
    Ok(SplitTable { n_folds: spec.n_folds, rows })
}

/// Keep exactly `k_shots` train patients per class in one fold (uniform
/// without replacement, seeded); every other train patient of that fold
/// becomes unassigned. Test assignments are untouched.
pub fn few_shot_subsample(
    table: &SplitTable,
    fold: usize,
    k_shots: usize,
    seed: u64,
) -> Result<SplitTable, SplitError> {
    if fold >= table.n_folds {
        return Err(SplitError::BadFoldIndex { fold, n_folds: table.n_folds });
    }
    // distinct train patients per class, in first-appearance order
    let mut class_patients: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for row in &table.rows {
        if row.folds[fold] != Some(Role::Train) {
            continue;
        }
        let class = stratum_of(&row.label);
        let patients = class_patients.entry(class).or_default();
        if !patients.contains(&row.patient_id) {
            patients.push(row.patient_id.clone());
        }
    }
    let mut keep: BTreeMap<String, bool> = BTreeMap::new();
    let mut rng = Rng::for_stream(seed, 0xf5 ^ fold as u64);
    for (class, patients) in &class_patients {
        if patients.len() < k_shots {
            return Err(SplitError::ClassStarvation {
                class: class.clone(),
                needed: k_shots,
                got: patients.len(),
            });
        }
        let picks = rng.sample_indices(patients.len(), k_shots);
        for (i, patient) in patients.iter().enumerate() {
            keep.insert(patient.clone(), picks.contains(&i));
        }
    }
    let mut out = table.clone();
    for row in out.rows.iter_mut() {
        if row.folds[fold] == Some(Role::Train) && !keep.get(&row.patient_id).copied().unwrap_or(false)
        {
            row.folds[fold] = None;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cohort(n: usize, classes: usize, slides_per_patient: usize) -> Vec<PatientRecord> {
        (0..n)
            .map(|i| PatientRecord {
                patient_id: alloc::format!("P{i:03}"),
                slides: (0..slides_per_patient)
                    .map(|s| alloc::format!("P{i:03}_S{s}"))
                    .collect(),
                label: LabelValue::Class(alloc::format!("c{}", i % classes)),
            })
            .collect()
    }

    fn spec_for(table_scheme: SplitScheme, n_folds: usize, classes: u32) -> TaskSpec {
        TaskSpec {
            task_id: "t".to_string(),
            level: TaskLevel::Patient,
            label_kind: LabelKind::Categorical,
            classes: Some(classes),
            n_samples: 0,
            n_folds,
            metric: MetricKind::BalancedAccuracy,
            split_scheme: table_scheme,
            stratified: true,
            seed: 0,
        }
    }

    #[test]
    fn monte_carlo_hits_eighty_twenty_exactly() {
        let patients = cohort(100, 2, 1);
        let spec = GenSpec { scheme: SplitScheme::MonteCarlo, n_folds: 50, seed: 7, stratify: true };
        let table = generate_splits(&patients, &spec).unwrap();
        for fold in 0..50 {
            let train = table.rows.iter().filter(|r| r.folds[fold] == Some(Role::Train)).count();
            let test = table.rows.iter().filter(|r| r.folds[fold] == Some(Role::Test)).count();
            assert_eq!((train, test), (80, 20), "fold {fold}");
        }
    }

    #[test]
    fn slides_of_one_patient_share_assignments() {
        let patients = cohort(20, 2, 3);
        let spec = GenSpec { scheme: SplitScheme::Kfold, n_folds: 5, seed: 1, stratify: true };
        let table = generate_splits(&patients, &spec).unwrap();
        let mut per_patient: BTreeMap<&str, &Vec<Option<Role>>> = BTreeMap::new();
        for row in &table.rows {
            match per_patient.get(row.patient_id.as_str()) {
                Some(folds) => assert_eq!(*folds, &row.folds, "patient {}", row.patient_id),
                None => {
                    per_patient.insert(&row.patient_id, &row.folds);
                }
            }
        }
    }

    #[test]
    fn stratified_kfold_partitions_patients_exactly_once() {
        let patients = cohort(10, 2, 1);
        let spec = GenSpec { scheme: SplitScheme::Kfold, n_folds: 5, seed: 3, stratify: true };
        let table = generate_splits(&patients, &spec).unwrap();
        // each fold's test block: one patient per class; blocks partition all
        let mut tested: Vec<&str> = Vec::new();
        for fold in 0..5 {
            let test_rows: Vec<&SplitRow> =
                table.rows.iter().filter(|r| r.folds[fold] == Some(Role::Test)).collect();
            assert_eq!(test_rows.len(), 2, "fold {fold}");
            let classes: Vec<&LabelValue> = test_rows.iter().map(|r| &r.label).collect();
            assert_ne!(classes[0], classes[1], "fold {fold} not stratified");
            for r in test_rows {
                tested.push(&r.patient_id);
            }
        }
        tested.sort_unstable();
        let unique: Vec<&&str> = {
            let mut t = tested.iter().collect::<Vec<_>>();
            t.dedup();
            t
        };
        assert_eq!(tested.len(), 10);
        assert_eq!(unique.len(), 10);
    }

    #[test]
    fn generation_is_deterministic_given_seed() {
        let patients = cohort(37, 3, 2);
        let spec = GenSpec { scheme: SplitScheme::MonteCarlo, n_folds: 50, seed: 42, stratify: true };
        let a = generate_splits(&patients, &spec).unwrap();
        let b = generate_splits(&patients, &spec).unwrap();
        assert_eq!(a, b);
        let other = GenSpec { seed: 43, ..spec };
        let c = generate_splits(&patients, &other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn too_few_patients_is_an_error() {
        let patients = cohort(1, 1, 1);
        let spec = GenSpec { scheme: SplitScheme::Kfold, n_folds: 5, seed: 0, stratify: false };
        assert_eq!(
            generate_splits(&patients, &spec),
            Err(SplitError::TooFewSamples { needed: 2, got: 1 })
        );
    }

    #[test]
    fn starved_class_is_an_error() {
        // class c1 has 2 patients but kfold needs 5 per class
        let mut patients = cohort(8, 1, 1);
        patients[0].label = LabelValue::Class("c1".to_string());
        patients[1].label = LabelValue::Class("c1".to_string());
        let spec = GenSpec { scheme: SplitScheme::Kfold, n_folds: 5, seed: 0, stratify: true };
        assert!(matches!(
            generate_splits(&patients, &spec),
            Err(SplitError::ClassStarvation { .. })
        ));
    }

    #[test]
    fn validation_catches_leakage() {
        let patients = cohort(10, 2, 2);
        let spec = GenSpec { scheme: SplitScheme::Kfold, n_folds: 5, seed: 5, stratify: true };
        let mut table = generate_splits(&patients, &spec).unwrap();
        let warnings = table.validate(&spec_for(SplitScheme::Kfold, 5, 2)).unwrap();
        assert!(warnings.is_empty(), "{warnings:?}");
        // flip one slide of one patient: its sibling now disagrees
        let patient = table.rows[0].patient_id.clone();
        let flipped = match table.rows[0].folds[2] {
            Some(Role::Train) => Some(Role::Test),
            _ => Some(Role::Train),
        };
        table.rows[0].folds[2] = flipped;
        let err = table.validate(&spec_for(SplitScheme::Kfold, 5, 2)).unwrap_err();
        match err {
            SplitError::Leakage { fold, patient: p, .. } => {
                assert_eq!(fold, 2);
                assert_eq!(p, patient);
            }
            other => panic!("expected leakage, got {other:?}"),
        }
    }

    #[test]
    fn validation_catches_label_conflict() {
        let patients = cohort(10, 2, 2);
        let spec = GenSpec { scheme: SplitScheme::Kfold, n_folds: 5, seed: 5, stratify: true };
        let mut table = generate_splits(&patients, &spec).unwrap();
        table.rows[1].label = LabelValue::Class("zzz".to_string());
        assert!(matches!(
            table.validate(&spec_for(SplitScheme::Kfold, 5, 3)),
            Err(SplitError::LabelConflict { .. })
        ));
    }

    #[test]
    fn validation_catches_duplicate_slides() {
        let patients = cohort(10, 2, 1);
        let spec = GenSpec { scheme: SplitScheme::Kfold, n_folds: 5, seed: 5, stratify: true };
        let mut table = generate_splits(&patients, &spec).unwrap();
        let dup = table.rows[0].clone();
        table.rows.push(dup);
        assert!(matches!(
            table.validate(&spec_for(SplitScheme::Kfold, 5, 2)),
            Err(SplitError::DuplicateSlide { .. })
        ));
    }

    #[test]
    fn metric_compatibility_is_enforced() {
        let spec = TaskSpec {
            label_kind: LabelKind::Survival,
            metric: MetricKind::Auroc,
            classes: None,
            ..spec_for(SplitScheme::Kfold, 5, 2)
        };
        assert!(matches!(spec.validate(), Err(SplitError::IncompatibleMetric { .. })));
    }

    #[test]
    fn few_shot_keeps_k_train_patients_per_class() {
        let patients = cohort(40, 2, 1);
        let spec = GenSpec { scheme: SplitScheme::MonteCarlo, n_folds: 3, seed: 9, stratify: true };
        let table = generate_splits(&patients, &spec).unwrap();
        let sub = few_shot_subsample(&table, 1, 4, 77).unwrap();
        for class in ["c0", "c1"] {
            let train: Vec<&SplitRow> = sub
                .rows
                .iter()
                .filter(|r| {
                    r.folds[1] == Some(Role::Train)
                        && r.label == LabelValue::Class(class.to_string())
                })
                .collect();
            assert_eq!(train.len(), 4, "class {class}");
        }
        // test side untouched
        for (a, b) in table.rows.iter().zip(sub.rows.iter()) {
            assert_eq!(
                a.folds[1] == Some(Role::Test),
                b.folds[1] == Some(Role::Test)
            );
            // other folds untouched entirely
            assert_eq!(a.folds[0], b.folds[0]);
            assert_eq!(a.folds[2], b.folds[2]);
        }
    }

    #[test]
    fn few_shot_with_full_class_size_changes_nothing() {
        let patients = cohort(10, 2, 1);
        let spec = GenSpec { scheme: SplitScheme::Kfold, n_folds: 5, seed: 2, stratify: true };
        let table = generate_splits(&patients, &spec).unwrap();
        // each class has 4 train patients per fold (8 patients train, 2 test)
        let sub = few_shot_subsample(&table, 0, 4, 123).unwrap();
        assert_eq!(table, sub);
    }

    #[test]
    fn few_shot_is_deterministic() {
        let patients = cohort(30, 3, 1);
        let spec = GenSpec { scheme: SplitScheme::MonteCarlo, n_folds: 2, seed: 4, stratify: true };
        let table = generate_splits(&patients, &spec).unwrap();
        let a = few_shot_subsample(&table, 0, 2, 55).unwrap();
        let b = few_shot_subsample(&table, 0, 2, 55).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_leakage_across_many_random_cohorts() {
        let mut rng = Rng::seed_from(1001);
        for case in 0..60 {
            let n = 10 + rng.below_usize(60);
            let classes = 2 + rng.below_usize(3);
            let slides = 1 + rng.below_usize(3);
            let patients = cohort(n, classes, slides);
            let scheme = if case % 2 == 0 { SplitScheme::Kfold } else { SplitScheme::MonteCarlo };
            let n_folds = if scheme == SplitScheme::Kfold { 5 } else { 20 };
            let spec = GenSpec { scheme, n_folds, seed: rng.next_u64(), stratify: true };
            let table = match generate_splits(&patients, &spec) {
                Ok(t) => t,
                Err(SplitError::ClassStarvation { .. }) => continue,
                Err(e) => panic!("{e:?}"),
            };
            let task = spec_for(scheme, n_folds, classes as u32);
            let warnings = table.validate(&task).unwrap();
            assert!(warnings.is_empty(), "case {case}: ratio warnings {warnings:?}");
        }
    }
}
