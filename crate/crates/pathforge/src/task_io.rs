//! Task artifacts on disk: the per-slide CSV and the metadata YAML.
//!
//! CSV columns: `patient_id,slide_id,label,fold_1..fold_N` for classification
//! tasks, `patient_id,slide_id,time,event,fold_1..fold_N` for survival. Fold
//! cells hold `train`, `test`, or nothing (excluded from that fold). Fields
//! are plain comma-separated UTF-8 with no quoting; generated identifiers
//! never need it.
//!
//! Validation happens on both ends: writing refuses a table that violates
//! the split invariants, parsing reports violations with row numbers and
//! returns 80:20 deviations as warnings.

use std::path::{Path, PathBuf};

use pathforge_core::splits::{
    LabelKind, LabelValue, RatioWarning, Role, SplitRow, SplitTable, TaskSpec,
};

use crate::error::{PathforgeError, Result};

fn schema_error(path: &Path, row: Option<usize>, detail: impl Into<String>) -> PathforgeError {
    PathforgeError::SchemaError { path: path.to_path_buf(), row, detail: detail.into() }
}

/// Write both task artifacts. The table is validated first; ratio warnings
/// are returned, anything harder refuses the write.
pub fn write_task(
    spec: &TaskSpec,
    table: &SplitTable,
    csv_path: &Path,
    yaml_path: &Path,
) -> Result<Vec<RatioWarning>> {
    let warnings = table.validate(spec)?;
    let survival = spec.label_kind == LabelKind::Survival;
    let mut out = String::new();
    out.push_str("patient_id,slide_id,");
    out.push_str(if survival { "time,event," } else { "label," });
    let fold_headers: Vec<String> = (1..=table.n_folds).map(|k| format!("fold_{k}")).collect();
    out.push_str(&fold_headers.join(","));
    out.push('\n');
    for row in &table.rows {
        out.push_str(&row.patient_id);
        out.push(',');
        out.push_str(&row.slide_id);
        out.push(',');
        match &row.label {
            LabelValue::Class(c) => out.push_str(c),
            LabelValue::Survival { time, event } => {
                out.push_str(&format!("{time},{}", u8::from(*event)));
            }
        }
        for fold in &row.folds {
            out.push(',');
            out.push_str(match fold {
                Some(Role::Train) => "train",
                Some(Role::Test) => "test",
                None => "",
            });
        }
        out.push('\n');
    }
    std::fs::write(csv_path, out)?;
    std::fs::write(yaml_path, serde_yaml::to_string(spec)?)?;
    Ok(warnings)
}

/// Parse and validate both task artifacts.
pub fn parse_task(
    csv_path: &Path,
    yaml_path: &Path,
) -> Result<(TaskSpec, SplitTable, Vec<RatioWarning>)> {
    let yaml_bytes = std::fs::read(yaml_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => PathforgeError::MissingFile(yaml_path.to_path_buf()),
        _ => PathforgeError::Io(e),
    })?;
    let spec: TaskSpec = serde_yaml::from_slice(&yaml_bytes)?;
    spec.validate()?;
    let table = parse_split_csv(csv_path, &spec)?;
    let n_samples = match spec.level {
        pathforge_core::splits::TaskLevel::Patient => {
            let mut patients: Vec<&str> =
                table.rows.iter().map(|r| r.patient_id.as_str()).collect();
            patients.sort_unstable();
            patients.dedup();
            patients.len()
        }
        pathforge_core::splits::TaskLevel::Slide => table.rows.len(),
    };
    if spec.n_samples != n_samples {
        return Err(schema_error(
            csv_path,
            None,
            format!("metadata declares {} samples, CSV holds {n_samples}", spec.n_samples),
        ));
    }
    let warnings = table.validate(&spec)?;
    Ok((spec, table, warnings))
}

fn parse_split_csv(path: &Path, spec: &TaskSpec) -> Result<SplitTable> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => PathforgeError::MissingFile(path.to_path_buf()),
        _ => PathforgeError::Io(e),
    })?;
    let survival = spec.label_kind == LabelKind::Survival;
    let mut lines = text.lines().enumerate();
    let (_, header) =
        lines.next().ok_or_else(|| schema_error(path, None, "empty CSV"))?;
    let columns: Vec<&str> = header.split(',').map(|c| c.trim()).collect();
    let expected_label_cols: Vec<&str> =
        if survival { vec!["time", "event"] } else { vec!["label"] };
    let mut expected: Vec<String> =
        vec!["patient_id".to_string(), "slide_id".to_string()];
    expected.extend(expected_label_cols.iter().map(|s| s.to_string()));
    expected.extend((1..=spec.n_folds).map(|k| format!("fold_{k}")));
    if columns != expected.iter().map(|s| s.as_str()).collect::<Vec<_>>() {
        return Err(schema_error(
            path,
            Some(1),
            format!("header is {columns:?}, expected {expected:?}"),
        ));
    }
    let mut rows = Vec::new();
    for (line_idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row_no = line_idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected.len() {
            return Err(schema_error(
                path,
                Some(row_no),
                format!("{} fields, expected {}", fields.len(), expected.len()),
            ));
        }
        let label = if survival {
            let time: f64 = fields[2].parse().map_err(|_| {
                schema_error(path, Some(row_no), format!("bad time {:?}", fields[2]))
            })?;
            let event = match fields[3] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(schema_error(
                        path,
                        Some(row_no),
                        format!("bad event flag {other:?} (expected 0 or 1)"),
                    ))
                }
            };
            LabelValue::Survival { time, event }
        } else {
            LabelValue::Class(fields[2].to_string())
        };
        let fold_start = if survival { 4 } else { 3 };
        let folds = fields[fold_start..]
            .iter()
            .map(|&cell| match cell {
                "train" => Ok(Some(Role::Train)),
                "test" => Ok(Some(Role::Test)),
                "" => Ok(None),
                other => Err(schema_error(
                    path,
                    Some(row_no),
                    format!("bad fold assignment {other:?} (expected train/test/empty)"),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(SplitRow {
            patient_id: fields[0].to_string(),
            slide_id: fields[1].to_string(),
            label,
            folds,
        });
    }
    if rows.is_empty() {
        return Err(schema_error(path, None, "no data rows"));
    }
    Ok(SplitTable { n_folds: spec.n_folds, rows })
}

/// Resolve a task reference: accepts `path/to/task` (no extension), or a
/// path to either artifact. Returns (csv, yaml).
pub fn task_paths(reference: &Path) -> (PathBuf, PathBuf) {
    let base = match reference.extension().and_then(|e| e.to_str()) {
        Some("csv") | Some("yaml") | Some("yml") => reference.with_extension(""),
        _ => reference.to_path_buf(),
    };
    (base.with_extension("csv"), base.with_extension("yaml"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use pathforge_core::splits::{
        generate_splits, GenSpec, MetricKind, PatientRecord, SplitScheme, TaskLevel,
    };

    fn demo_spec(n_folds: usize) -> TaskSpec {
        TaskSpec {
            task_id: "demo".to_string(),
            level: TaskLevel::Patient,
            label_kind: LabelKind::Categorical,
            classes: Some(2),
            n_samples: 12,
            n_folds,
            metric: MetricKind::BalancedAccuracy,
            split_scheme: SplitScheme::Kfold,
            stratified: true,
            seed: 5,
        }
    }

    fn demo_table(n_folds: usize) -> SplitTable {
        let patients: Vec<PatientRecord> = (0..12)
            .map(|i| PatientRecord {
                patient_id: format!("P{i:02}"),
                slides: vec![format!("P{i:02}_S0")],
                label: LabelValue::Class(format!("c{}", i % 2)),
            })
            .collect();
        generate_splits(
            &patients,
            &GenSpec { scheme: SplitScheme::Kfold, n_folds, seed: 5, stratify: true },
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_is_field_identical() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("t.csv");
        let yaml = dir.path().join("t.yaml");
        let spec = demo_spec(5);
        let table = demo_table(5);
        write_task(&spec, &table, &csv, &yaml).unwrap();
        let (spec2, table2, warnings) = parse_task(&csv, &yaml).unwrap();
        assert_eq!(spec2, spec);
        assert_eq!(table2, table);
        assert!(warnings.is_empty());
    }

    #[test]
    fn survival_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("s.csv");
        let yaml = dir.path().join("s.yaml");
        let patients: Vec<PatientRecord> = (0..10)
            .map(|i| PatientRecord {
                patient_id: format!("P{i:02}"),
                slides: vec![format!("P{i:02}_S0")],
                label: LabelValue::Survival { time: 1.5 * (i as f64 + 1.0) / 3.0, event: i % 3 != 0 },
            })
            .collect();
        let table = generate_splits(
            &patients,
            &GenSpec { scheme: SplitScheme::MonteCarlo, n_folds: 4, seed: 9, stratify: false },
        )
        .unwrap();
        let spec = TaskSpec {
            task_id: "surv".to_string(),
            level: TaskLevel::Patient,
            label_kind: LabelKind::Survival,
            classes: None,
            n_samples: 10,
            n_folds: 4,
            metric: MetricKind::CIndex,
            split_scheme: SplitScheme::MonteCarlo,
            stratified: false,
            seed: 9,
        };
        write_task(&spec, &table, &csv, &yaml).unwrap();
        let (spec2, table2, _) = parse_task(&csv, &yaml).unwrap();
        assert_eq!(spec2, spec);
        assert_eq!(table2, table);
    }

    #[test]
    fn leakage_in_csv_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("l.csv");
        let yaml = dir.path().join("l.yaml");
        let mut spec = demo_spec(2);
        spec.split_scheme = SplitScheme::MonteCarlo;
        // patient P0 has two slides on opposite sides of fold 1
        let csv_text = "patient_id,slide_id,label,fold_1,fold_2\n\
                        P0,S0,c0,train,train\n\
                        P0,S1,c0,test,train\n\
                        P1,S2,c1,test,test\n\
                        P2,S3,c0,train,test\n\
                        P3,S4,c1,train,train\n";
        spec.n_samples = 4;
        std::fs::write(&csv, csv_text).unwrap();
        std::fs::write(&yaml, serde_yaml::to_string(&spec).unwrap()).unwrap();
        match parse_task(&csv, &yaml) {
            Err(PathforgeError::Split(pathforge_core::splits::SplitError::Leakage {
                fold,
                patient,
                ..
            })) => {
                assert_eq!(fold, 0);
                assert_eq!(patient, "P0");
            }
            other => panic!("expected leakage, got {other:?}"),
        }
    }

    #[test]
    fn incompatible_metric_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("m.csv");
        let yaml = dir.path().join("m.yaml");
        let mut spec = demo_spec(2);
        spec.label_kind = LabelKind::Survival;
        spec.classes = None;
        spec.metric = MetricKind::Auroc; // survival must use the c-index
        std::fs::write(&csv, "patient_id,slide_id,time,event,fold_1,fold_2\nP0,S0,1.0,1,train,test\n")
            .unwrap();
        std::fs::write(&yaml, serde_yaml::to_string(&spec).unwrap()).unwrap();
        assert!(matches!(
            parse_task(&csv, &yaml),
            Err(PathforgeError::Split(
                pathforge_core::splits::SplitError::IncompatibleMetric { .. }
            ))
        ));
    }

    #[test]
    fn bad_fold_value_reports_row_number() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("b.csv");
        let yaml = dir.path().join("b.yaml");
        let mut spec = demo_spec(1);
        spec.n_samples = 2;
        spec.split_scheme = SplitScheme::OfficialSingle;
        std::fs::write(&csv, "patient_id,slide_id,label,fold_1\nP0,S0,c0,train\nP1,S1,c1,maybe\n")
            .unwrap();
        std::fs::write(&yaml, serde_yaml::to_string(&spec).unwrap()).unwrap();
        match parse_task(&csv, &yaml) {
            Err(PathforgeError::SchemaError { row, .. }) => assert_eq!(row, Some(3)),
            other => panic!("expected SchemaError, got {other:?}"),
        }
    }

    #[test]
    fn sample_count_mismatch_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("n.csv");
        let yaml = dir.path().join("n.yaml");
        let spec = demo_spec(5); // declares 12 samples
        let mut table = demo_table(5);
        table.rows.truncate(6);
        // write bypassing validation to simulate a hand-edited file
        let mut bad_spec = spec.clone();
        bad_spec.n_samples = 6;
        write_task(&bad_spec, &table, &csv, &yaml).unwrap();
        std::fs::write(&yaml, serde_yaml::to_string(&spec).unwrap()).unwrap();
        assert!(matches!(
            parse_task(&csv, &yaml),
            Err(PathforgeError::SchemaError { .. })
        ));
    }

    #[test]
    fn write_refuses_invalid_tables() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("r.csv");
        let yaml = dir.path().join("r.yaml");
        let spec = demo_spec(5);
        let mut table = demo_table(5);
        // duplicate one slide id
        let dup = table.rows[0].clone();
        table.rows.push(dup);
        assert!(write_task(&spec, &table, &csv, &yaml).is_err());
        assert!(!csv.exists(), "refused write must not leave files behind");
    }

    #[test]
    fn few_shot_rows_roundtrip_as_empty_cells() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("f.csv");
        let yaml = dir.path().join("f.yaml");
        // a cohort big enough that 2-shot training visibly breaks 80:20
        let patients: Vec<PatientRecord> = (0..40)
            .map(|i| PatientRecord {
                patient_id: format!("P{i:02}"),
                slides: vec![format!("P{i:02}_S0")],
                label: LabelValue::Class(format!("c{}", i % 2)),
            })
            .collect();
        let table = generate_splits(
            &patients,
            &GenSpec { scheme: SplitScheme::Kfold, n_folds: 5, seed: 5, stratify: true },
        )
        .unwrap();
        let mut spec = demo_spec(5);
        spec.n_samples = 40;
        let sub = pathforge_core::splits::few_shot_subsample(&table, 2, 2, 7).unwrap();
        assert!(sub.rows.iter().any(|r| r.folds[2].is_none()));
        let warnings = write_task(&spec, &sub, &csv, &yaml).unwrap();
        // subsampling fold 2 breaks its 80:20 ratio: that is a warning
        assert!(warnings.iter().any(|w| w.fold == 2));
        let (_, table2, warnings2) = parse_task(&csv, &yaml).unwrap();
        assert_eq!(table2, sub);
        assert!(warnings2.iter().any(|w| w.fold == 2));
    }
}
