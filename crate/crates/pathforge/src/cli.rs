//! Command-line interface: one subcommand per pipeline stage plus the sweep
//! controls, mirroring the two-tier design of high-level sweep scripts over
//! reusable low-level modules.
//!
//! Exit codes: 0 success, 1 validation error (bad flags, malformed inputs),
//! 2 runtime failure. With `--json`, errors are emitted on stderr as one
//! JSON object.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;

use clap::{ArgAction, Parser, Subcommand};
use pathforge_core::eval::{evaluate_task, EvalHyper, Framework, SampleFeatures};
use pathforge_core::features::{pool_mean, FeatureMatrix};
use pathforge_core::grid::{plan_grid, PatchParams};
use pathforge_core::mil::MilHyper;
use pathforge_core::retrieval::MetricSpace;
use pathforge_core::seg::{SegParams, ThresholdRule};
use pathforge_core::splits::{
    LabelKind, LabelValue, MetricKind, PatientRecord, SplitScheme, SplitTable, TaskLevel,
    TaskSpec,
};
use pathforge_core::sweep::Experiment;

use crate::batch::{run_batch, PipelineConfig};
use crate::encoder::{EncoderRegistry, DEFAULT_FRAME_TIMEOUT};
use crate::error::{ErrorKind, PathforgeError, Result};
use crate::feature_store::FeatureStore;
use crate::orchestrator::{self, SweepConfig};
use crate::slide::Slide;
use crate::synth::{generate_cohort, SynthConfig};
use crate::task_io::{parse_task, task_paths, write_task};

#[derive(Parser)]
#[command(name = "pathforge", version, about = "Slide processing and benchmark sweeps")]
struct Cli {
    /// Emit errors as JSON on stderr.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment tissue from background and save the mask (optionally GeoJSON).
    Segment {
        #[arg(long)]
        slide: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1024)]
        thumb_max_dim: u32,
        #[arg(long, default_value_t = 2)]
        blur_radius: u32,
        /// Fixed threshold 0-255 instead of Otsu.
        #[arg(long)]
        fixed_threshold: Option<u8>,
        #[arg(long, default_value_t = 2)]
        close_radius: u32,
        #[arg(long, default_value_t = 1)]
        open_radius: u32,
        #[arg(long, default_value_t = 1e-4)]
        min_region_area: f64,
        #[arg(long, default_value_t = 1e-4)]
        min_hole_area: f64,
        /// Also export the outlines as GeoJSON for external editing.
        #[arg(long)]
        geojson: bool,
        /// Replace the pipeline mask with an edited GeoJSON file.
        #[arg(long)]
        import_geojson: Option<PathBuf>,
    },
    /// Plan patch coordinates over the tissue mask and save a PGRD file.
    Patch {
        #[arg(long)]
        slide: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Mask snapshot to use instead of running segmentation.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value_t = 256)]
        patch_size: u32,
        #[arg(long, default_value_t = 20)]
        mag: u32,
        #[arg(long, default_value_t = 0)]
        overlap: u32,
        #[arg(long, default_value_t = 0.25)]
        min_tissue: f64,
        /// Microns-per-pixel override when metadata is missing.
        #[arg(long)]
        mpp: Option<f64>,
    },
    /// Segment, patch, and encode many slides into FSTR feature stores.
    Extract {
        /// Slide files; a directory takes every .spyr/.png inside.
        #[arg(long, num_args = 1.., required = true)]
        slides: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "stub-stats-64")]
        encoder: String,
        /// Worker count; defaults to PATHFORGE_WORKERS or 4.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value_t = true, action = ArgAction::Set)]
        skip_existing: bool,
        /// External encoder as NAME=CMDLINE (repeatable).
        #[arg(long)]
        external: Vec<String>,
        #[arg(long, default_value_t = 256)]
        patch_size: u32,
        #[arg(long, default_value_t = 20)]
        mag: u32,
        #[arg(long, default_value_t = 0.25)]
        min_tissue: f64,
        #[arg(long)]
        mpp: Option<f64>,
        #[arg(long, default_value_t = 32)]
        encode_batch_size: usize,
    },
    /// Generate patient-grouped splits from a cohort CSV and write the task.
    MakeTask {
        /// Cohort CSV: patient_id,slide_id,label (or time,event).
        #[arg(long)]
        cohort: PathBuf,
        /// Output path prefix: writes <out>.csv and <out>.yaml.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "task")]
        task_id: String,
        #[arg(long, value_parser = parse_level, default_value = "patient")]
        level: TaskLevel,
        #[arg(long, value_parser = parse_label_kind, default_value = "categorical")]
        label_kind: LabelKind,
        #[arg(long, value_parser = parse_metric)]
        metric: Option<MetricKind>,
        #[arg(long, value_parser = parse_scheme, default_value = "kfold")]
        scheme: SplitScheme,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_stratify: bool,
    },
    /// Run a single experiment: one model, one task, one framework.
    Run {
        /// Task reference (base path of the .csv/.yaml pair).
        #[arg(long)]
        task: PathBuf,
        /// Directory of <slide_id>.fstr feature stores.
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_parser = parse_framework)]
        framework: Framework,
        /// Model name recorded in the results.
        #[arg(long, default_value = "stub-stats-64")]
        model: String,
        #[arg(long)]
        out_dir: PathBuf,
        /// Ridge strengths for the probe's internal selection.
        #[arg(long, num_args = 1.., default_values_t = vec![1e-4])]
        lambda: Vec<f64>,
        #[arg(long, default_value_t = 1e-4)]
        ridge: f64,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, value_parser = parse_space, default_value = "cosine")]
        space: MetricSpace,
        #[arg(long, default_value_t = 32)]
        d_att: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 40)]
        epochs: usize,
        #[arg(long, default_value_t = 8)]
        mil_batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Enumerate and execute a sweep from a YAML config, then gather.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Progress snapshot of a sweep directory.
    Status {
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Collect all experiment results into one CSV.
    Gather {
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Generate a synthetic cohort with planted class signal.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 20)]
        slides: usize,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1536)]
        slide_px: u32,
        #[arg(long, default_value_t = 256)]
        tile_size: u32,
        #[arg(long, default_value_t = 2)]
        levels: u32,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, value_parser = parse_scheme, default_value = "kfold")]
        scheme: SplitScheme,
        #[arg(long, default_value = "synthetic-subtyping")]
        task_id: String,
    },
}

fn parse_framework(s: &str) -> std::result::Result<Framework, String> {
    Framework::parse(s).ok_or_else(|| format!("unknown framework {s:?} (probe|cox|mil|retrieval)"))
}

fn parse_level(s: &str) -> std::result::Result<TaskLevel, String> {
    match s {
        "patient" => Ok(TaskLevel::Patient),
        "slide" => Ok(TaskLevel::Slide),
        _ => Err(format!("unknown level {s:?} (patient|slide)")),
    }
}

fn parse_label_kind(s: &str) -> std::result::Result<LabelKind, String> {
    match s {
        "categorical" => Ok(LabelKind::Categorical),
        "ordinal" => Ok(LabelKind::Ordinal),
        "survival" => Ok(LabelKind::Survival),
        _ => Err(format!("unknown label kind {s:?} (categorical|ordinal|survival)")),
    }
}

fn parse_metric(s: &str) -> std::result::Result<MetricKind, String> {
    match s {
        "balanced_accuracy" => Ok(MetricKind::BalancedAccuracy),
        "auroc" => Ok(MetricKind::Auroc),
        "qwk" => Ok(MetricKind::Qwk),
        "c_index" => Ok(MetricKind::CIndex),
        _ => Err(format!("unknown metric {s:?}")),
    }
}

fn parse_scheme(s: &str) -> std::result::Result<SplitScheme, String> {
    match s {
        "kfold" => Ok(SplitScheme::Kfold),
        "monte_carlo" | "monte-carlo" => Ok(SplitScheme::MonteCarlo),
        "official_single" | "official-single" => Ok(SplitScheme::OfficialSingle),
        _ => Err(format!("unknown scheme {s:?} (kfold|monte_carlo|official_single)")),
    }
}

fn parse_space(s: &str) -> std::result::Result<MetricSpace, String> {
    match s {
        "cosine" => Ok(MetricSpace::Cosine),
        "euclidean" => Ok(MetricSpace::Euclidean),
        _ => Err(format!("unknown metric space {s:?} (cosine|euclidean)")),
    }
}

fn default_workers(requested: Option<usize>) -> usize {
    requested
        .or_else(|| std::env::var("PATHFORGE_WORKERS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(4)
        .max(1)
}

/// Entry point; returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as ClapKind;
            if matches!(e.kind(), ClapKind::DisplayHelp | ClapKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            return 1;
        }
    };
    let json = cli.json;
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let kind = e.kind();
            if json {
                let payload = serde_json::json!({
                    "error": e.to_string(),
                    "kind": match kind {
                        ErrorKind::Validation => "validation",
                        ErrorKind::Runtime => "runtime",
                    },
                });
                eprintln!("{payload}");
            } else {
                eprintln!("error: {e}");
            }
            match kind {
                ErrorKind::Validation => 1,
                ErrorKind::Runtime => 2,
            }
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Segment {
            slide,
            out_dir,
            thumb_max_dim,
            blur_radius,
            fixed_threshold,
            close_radius,
            open_radius,
            min_region_area,
            min_hole_area,
            geojson,
            import_geojson,
        } => {
            std::fs::create_dir_all(&out_dir)?;
            let handle = Slide::open(&slide)?;
            let params = SegParams {
                thumb_max_dim,
                blur_radius,
                threshold: match fixed_threshold {
                    Some(t) => ThresholdRule::Fixed(t),
                    None => ThresholdRule::Otsu,
                },
                close_radius,
                open_radius,
                min_region_area,
                min_hole_area,
            };
            let mask = match import_geojson {
                Some(geo_path) => {
                    // the imported mask fully replaces the pipeline mask
                    let (thumb, scale) = handle.thumbnail(params.thumb_max_dim)?;
                    crate::geojson::import_geojson(
                        &geo_path,
                        handle.slide_id(),
                        thumb.width,
                        thumb.height,
                        scale,
                    )?
                }
                None => handle.segment_tissue(&params)?,
            };
            let png_path = out_dir.join(format!("{}.mask.png", handle.slide_id()));
            crate::mask_io::save_mask(&mask, &png_path)?;
            println!(
                "{}: mask {}x{} at scale {:.3}, {} foreground px -> {}",
                handle.slide_id(),
                mask.mask.width,
                mask.mask.height,
                mask.scale,
                mask.mask.count_foreground(),
                png_path.display()
            );
            if geojson {
                let polys = pathforge_core::contour::mask_to_polygons(&mask)?;
                let geo_path = out_dir.join(format!("{}.geojson", handle.slide_id()));
                crate::geojson::export_geojson(&polys, &geo_path)?;
                println!("{} outlines -> {}", polys.polygons.len(), geo_path.display());
            }
            Ok(())
        }
        Command::Patch { slide, out_dir, mask, patch_size, mag, overlap, min_tissue, mpp } => {
            std::fs::create_dir_all(&out_dir)?;
            let handle = Slide::open_with_override(&slide, mpp)?;
            let tissue = match mask {
                Some(path) => crate::mask_io::load_mask(&path)?,
                None => handle.segment_tissue(&SegParams::default())?,
            };
            let params = PatchParams {
                patch_size,
                target_magnification: mag,
                overlap,
                min_tissue_frac: min_tissue,
            };
            let mag_info = handle.magnification()?;
            let (w0, h0) = handle.level_dimensions(0)?;
            let grid = plan_grid(
                handle.slide_id(),
                w0,
                h0,
                handle.downsamples(),
                &tissue,
                &mag_info,
                &params,
            )?;
            let out = out_dir.join(format!("{}.pgrd", handle.slide_id()));
            crate::grid_io::save_grid(&grid, &out)?;
            println!(
                "{}: {} patches of {}px at {}x (level-0 extent {}, read level {}) -> {}",
                handle.slide_id(),
                grid.coords.len(),
                patch_size,
                mag,
                grid.level0_patch_extent,
                grid.read_level,
                out.display()
            );
            Ok(())
        }
        Command::Extract {
            slides,
            out_dir,
            encoder,
            workers,
            skip_existing,
            external,
            patch_size,
            mag,
            min_tissue,
            mpp,
            encode_batch_size,
        } => {
            let slide_paths = collect_slides(&slides)?;
            let mut registry = EncoderRegistry::builtin();
            for entry in &external {
                let (name, cmdline) = entry.split_once('=').ok_or_else(|| {
                    PathforgeError::BadInvocation(format!(
                        "--external takes NAME=CMDLINE, got {entry:?}"
                    ))
                })?;
                let command: Vec<String> =
                    cmdline.split_whitespace().map(|s| s.to_string()).collect();
                registry.register_external(name, command, None, DEFAULT_FRAME_TIMEOUT);
            }
            let mut config = PipelineConfig::new(out_dir);
            config.encoder = encoder;
            config.registry = registry;
            config.skip_existing = skip_existing;
            config.mpp_override = mpp;
            config.encode_batch_size = encode_batch_size;
            config.patch.patch_size = patch_size;
            config.patch.target_magnification = mag;
            config.patch.min_tissue_frac = min_tissue;
            let report = run_batch(&slide_paths, &config, default_workers(workers));
            for (path, status) in &report.statuses {
                println!("{}: {:?}", path.display(), status);
            }
            println!(
                "extract: {} done, {} skipped, {} failed in {:.1}s",
                report.done(),
                report.skipped(),
                report.failed(),
                report.wall.as_secs_f64()
            );
            Ok(())
        }
        Command::MakeTask {
            cohort,
            out,
            task_id,
            level,
            label_kind,
            metric,
            scheme,
            folds,
            seed,
            no_stratify,
        } => {
            let patients = read_cohort(&cohort, label_kind)?;
            let table = pathforge_core::splits::generate_splits(
                &patients,
                &pathforge_core::splits::GenSpec {
                    scheme,
                    n_folds: folds,
                    seed,
                    stratify: !no_stratify,
                },
            )?;
            let metric = metric.unwrap_or(match label_kind {
                LabelKind::Categorical => MetricKind::BalancedAccuracy,
                LabelKind::Ordinal => MetricKind::Qwk,
                LabelKind::Survival => MetricKind::CIndex,
            });
            let n_samples = match level {
                TaskLevel::Patient => patients.len(),
                TaskLevel::Slide => table.rows.len(),
            };
            let classes = match label_kind {
                LabelKind::Survival => None,
                _ => Some(table.class_labels().len() as u32),
            };
            let spec = TaskSpec {
                task_id,
                level,
                label_kind,
                classes,
                n_samples,
                n_folds: folds,
                metric,
                split_scheme: scheme,
                stratified: !no_stratify,
                seed,
            };
            let (csv_path, yaml_path) = task_paths(&out);
            if let Some(parent) = csv_path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let warnings = write_task(&spec, &table, &csv_path, &yaml_path)?;
            for w in &warnings {
                eprintln!(
                    "warning: fold {} is {} train / {} test patients, off the 80:20 target",
                    w.fold + 1,
                    w.train_patients,
                    w.test_patients
                );
            }
            println!(
                "{}: {} rows, {} folds -> {} + {}",
                spec.task_id,
                table.rows.len(),
                folds,
                csv_path.display(),
                yaml_path.display()
            );
            Ok(())
        }
        Command::Run {
            task,
            features,
            framework,
            model,
            out_dir,
            lambda,
            ridge,
            k,
            space,
            d_att,
            lr,
            epochs,
            mil_batch,
            seed,
        } => {
            let hyper = EvalHyper {
                lambda_grid: lambda,
                cox_ridge: ridge,
                mil: MilHyper { d_att, lr, epochs, batch_size: mil_batch, seed },
                retrieval_k: k,
                retrieval_space: space,
                seed,
            };
            let result = run_single_experiment(&task, &features, framework, &model, &hyper)?;
            std::fs::create_dir_all(&out_dir)?;
            let exp = Experiment {
                exp_id: pathforge_core::sweep::fnv1a_hex(
                    format!("{model}\x1f{}\x1f{}", result.task_id, framework.as_str()).as_bytes(),
                ),
                model: model.clone(),
                task_id: result.task_id.clone(),
                task_path: task.to_string_lossy().into_owned(),
                framework,
                hyper: BTreeMap::new(),
                n_folds: result.fold_values.len(),
            };
            orchestrator::write_result_files(&out_dir, &exp, &result, seed)?;
            println!(
                "{} {} {}: {} = {:.4} +/- {:.4} over {} folds",
                model,
                result.task_id,
                framework.as_str(),
                result.metric.as_str(),
                result.mean,
                result.std,
                result.fold_values.len()
            );
            Ok(())
        }
        Command::Sweep { config } => {
            let config = SweepConfig::load(&config)?;
            let matrix = orchestrator::enumerate(&config)?;
            println!(
                "sweep: {} experiments ({} incompatible pairs filtered)",
                matrix.experiments.len(),
                matrix.filtered_incompatible
            );
            let cancel = AtomicBool::new(false);
            let replay = orchestrator::schedule(
                &matrix,
                &config,
                |exp, slot| {
                    let hyper = hyper_from_assignment(&exp.hyper, config.seed)
                        .map_err(|e| e.to_string())?;
                    let features_dir = config.features_root.join(&exp.model);
                    // anything this run spawns sees its device slot
                    let _ = slot;
                    run_single_experiment(
                        Path::new(&exp.task_path),
                        &features_dir,
                        exp.framework,
                        &exp.model,
                        &hyper,
                    )
                    .map_err(|e| e.to_string())
                },
                &cancel,
            )?;
            let done = replay.count(|s| matches!(s, pathforge_core::sweep::ExpStatus::Done));
            let failed =
                replay.count(|s| matches!(s, pathforge_core::sweep::ExpStatus::Failed { .. }));
            println!("sweep finished: {done} done, {failed} failed");
            let (path, fold_rows, summary_rows, failed_rows) =
                orchestrator::gather_results(&config.out_dir)?;
            println!(
                "gathered {fold_rows} fold rows, {summary_rows} summaries, {failed_rows} failures -> {}",
                path.display()
            );
            Ok(())
        }
        Command::Status { out_dir } => {
            let snapshot = orchestrator::status(&out_dir)?;
            println!("{}", serde_json::to_string_pretty(&snapshot)?);
            Ok(())
        }
        Command::Gather { out_dir } => {
            let (path, fold_rows, summary_rows, failed_rows) =
                orchestrator::gather_results(&out_dir)?;
            println!(
                "gathered {fold_rows} fold rows, {summary_rows} summaries, {failed_rows} failures -> {}",
                path.display()
            );
            Ok(())
        }
        Command::Synth {
            out_dir,
            slides,
            classes,
            seed,
            slide_px,
            tile_size,
            levels,
            folds,
            scheme,
            task_id,
        } => {
            let mut config = SynthConfig::new(out_dir);
            config.n_slides = slides;
            config.n_classes = classes;
            config.seed = seed;
            config.slide_px = slide_px;
            config.tile_size = tile_size;
            config.n_levels = levels;
            config.n_folds = folds;
            config.scheme = scheme;
            config.task_id = task_id;
            let out = generate_cohort(&config)?;
            println!(
                "synth: {} slides, task {} -> {} + {}",
                out.slides.len(),
                out.spec.task_id,
                out.csv_path.display(),
                out.yaml_path.display()
            );
            Ok(())
        }
    }
}

fn collect_slides(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(input)?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| {
                    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                    // mask snapshots are not slides
                    if name.ends_with(".mask.png") || name.ends_with(".truth.png") {
                        return false;
                    }
                    matches!(
                        p.extension().and_then(|e| e.to_str()),
                        Some("spyr") | Some("png")
                    )
                })
                .collect();
            entries.sort();
            out.extend(entries);
        } else {
            out.push(input.clone());
        }
    }
    if out.is_empty() {
        return Err(PathforgeError::BadInvocation("no slides to process".to_string()));
    }
    Ok(out)
}

fn read_cohort(path: &Path, label_kind: LabelKind) -> Result<Vec<PatientRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => PathforgeError::MissingFile(path.to_path_buf()),
        _ => PathforgeError::Io(e),
    })?;
    let survival = label_kind == LabelKind::Survival;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| PathforgeError::SchemaError {
            path: path.to_path_buf(),
            row: None,
            detail: "empty cohort file".to_string(),
        })?;
    let expected = if survival {
        "patient_id,slide_id,time,event"
    } else {
        "patient_id,slide_id,label"
    };
    if header.trim() != expected {
        return Err(PathforgeError::SchemaError {
            path: path.to_path_buf(),
            row: Some(1),
            detail: format!("header is {header:?}, expected {expected:?}"),
        });
    }
    let mut patients: Vec<PatientRecord> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for (line_idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row_no = line_idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        let want = if survival { 4 } else { 3 };
        if fields.len() != want {
            return Err(PathforgeError::SchemaError {
                path: path.to_path_buf(),
                row: Some(row_no),
                detail: format!("{} fields, expected {want}", fields.len()),
            });
        }
        let label = if survival {
            let time: f64 = fields[2].parse().map_err(|_| PathforgeError::SchemaError {
                path: path.to_path_buf(),
                row: Some(row_no),
                detail: format!("bad time {:?}", fields[2]),
            })?;
            let event = fields[3] == "1";
            LabelValue::Survival { time, event }
        } else {
            LabelValue::Class(fields[2].to_string())
        };
        match index.get(fields[0]) {
            Some(&i) => {
                if patients[i].label != label {
                    return Err(PathforgeError::Split(
                        pathforge_core::splits::SplitError::LabelConflict {
                            patient: fields[0].to_string(),
                            row_a: 0,
                            row_b: row_no,
                        },
                    ));
                }
                patients[i].slides.push(fields[1].to_string());
            }
            None => {
                index.insert(fields[0].to_string(), patients.len());
                patients.push(PatientRecord {
                    patient_id: fields[0].to_string(),
                    slides: vec![fields[1].to_string()],
                    label,
                });
            }
        }
    }
    Ok(patients)
}

/// Load per-slide features for a task and evaluate one experiment.
pub fn run_single_experiment(
    task: &Path,
    features_dir: &Path,
    framework: Framework,
    model: &str,
    hyper: &EvalHyper,
) -> Result<pathforge_core::eval::EvalResult> {
    let (csv_path, yaml_path) = task_paths(task);
    let (spec, table, _warnings) = parse_task(&csv_path, &yaml_path)?;
    let features = load_features(&table, features_dir, framework)?;
    Ok(evaluate_task(&spec, &table, &features, framework, hyper, model)?)
}

/// Pull FSTR stores for every slide in the table: bags for MIL, mean-pooled
/// vectors otherwise.
pub fn load_features(
    table: &SplitTable,
    features_dir: &Path,
    framework: Framework,
) -> Result<SampleFeatures> {
    let mut vectors: BTreeMap<String, Vec<f32>> = BTreeMap::new();
    let mut bags: BTreeMap<String, FeatureMatrix> = BTreeMap::new();
    for row in &table.rows {
        if bags.contains_key(&row.slide_id) || vectors.contains_key(&row.slide_id) {
            continue;
        }
        let path = features_dir.join(format!("{}.fstr", row.slide_id));
        let store = FeatureStore::load(&path)?;
        if framework == Framework::Mil {
            bags.insert(row.slide_id.clone(), store.matrix);
        } else {
            vectors.insert(row.slide_id.clone(), pool_mean(&store.matrix)?);
        }
    }
    Ok(if framework == Framework::Mil {
        SampleFeatures::Bags(bags)
    } else {
        SampleFeatures::Vectors(vectors)
    })
}

/// Translate a sweep hyper assignment (string-valued) into typed knobs.
pub fn hyper_from_assignment(
    assignment: &BTreeMap<String, String>,
    seed: u64,
) -> Result<EvalHyper> {
    let mut hyper = EvalHyper { seed, ..EvalHyper::default() };
    hyper.mil.seed = seed;
    for (key, value) in assignment {
        let bad = |what: &str| {
            PathforgeError::BadInvocation(format!("bad hyper value {key}={value}: {what}"))
        };
        match key.as_str() {
            "lambda" => {
                hyper.lambda_grid =
                    vec![value.parse().map_err(|_| bad("expected a float"))?]
            }
            "ridge" => hyper.cox_ridge = value.parse().map_err(|_| bad("expected a float"))?,
            "k" => hyper.retrieval_k = value.parse().map_err(|_| bad("expected an integer"))?,
            "space" => {
                hyper.retrieval_space =
                    parse_space(value).map_err(PathforgeError::BadInvocation)?
            }
            "d_att" => hyper.mil.d_att = value.parse().map_err(|_| bad("expected an integer"))?,
            "lr" => hyper.mil.lr = value.parse().map_err(|_| bad("expected a float"))?,
            "epochs" => {
                hyper.mil.epochs = value.parse().map_err(|_| bad("expected an integer"))?
            }
            "batch_size" => {
                hyper.mil.batch_size = value.parse().map_err(|_| bad("expected an integer"))?
            }
            other => {
                return Err(PathforgeError::BadInvocation(format!(
                    "unknown hyper parameter {other:?}"
                )))
            }
        }
    }
    Ok(hyper)
}
