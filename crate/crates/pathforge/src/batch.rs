//! Resumable parallel feature extraction over a set of slides.
//!
//! A fixed pool of workers drains a slide queue; each worker owns its slide
//! handles and its own encoder instance (external encoders get one child
//! process per worker, with the worker index exported as SLOT_ID). Output
//! files land via temp-file-plus-rename so the resumability check never sees
//! a partial store, and one slide's failure never takes the batch down.
//! Every output is a pure function of its input slide, so batch results are
//! byte-identical whatever the worker count.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use pathforge_core::grid::{plan_grid, PatchParams};
use pathforge_core::seg::SegParams;

use crate::encoder::EncoderRegistry;
use crate::error::Result;
use crate::feature_store::{FeatureStore, GridEcho};
use crate::slide::{load_patch, Slide};

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub seg: SegParams,
    pub patch: PatchParams,
    pub encoder: String,
    pub registry: EncoderRegistry,
    pub out_dir: PathBuf,
    pub skip_existing: bool,
    pub mpp_override: Option<f64>,
    /// Patches per encoder call.
    pub encode_batch_size: usize,
}

impl PipelineConfig {
    pub fn new(out_dir: PathBuf) -> PipelineConfig {
        PipelineConfig {
            seg: SegParams::default(),
            patch: PatchParams::default(),
            encoder: "stub-stats-64".to_string(),
            registry: EncoderRegistry::builtin(),
            out_dir,
            skip_existing: true,
            mpp_override: None,
            encode_batch_size: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SlideStatus {
    Done { patches: usize },
    SkippedExisting,
    Failed { reason: String },
}

#[derive(Clone, Debug)]
pub struct BatchReport {
    /// One entry per input slide, in input order.
    pub statuses: Vec<(PathBuf, SlideStatus)>,
    pub wall: Duration,
}

impl BatchReport {
    pub fn done(&self) -> usize {
        self.statuses.iter().filter(|(_, s)| matches!(s, SlideStatus::Done { .. })).count()
    }

    pub fn skipped(&self) -> usize {
        self.statuses.iter().filter(|(_, s)| *s == SlideStatus::SkippedExisting).count()
    }

    pub fn failed(&self) -> usize {
        self.statuses.iter().filter(|(_, s)| matches!(s, SlideStatus::Failed { .. })).count()
    }
}

pub fn output_path(out_dir: &Path, slide_id: &str) -> PathBuf {
    out_dir.join(format!("{slide_id}.fstr"))
}

fn slide_id_for(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "slide".into())
}

/// Segment, plan, encode, and persist one slide.
fn process_slide(
    path: &Path,
    config: &PipelineConfig,
    encoder: &mut dyn crate::encoder::PatchEncoder,
    worker: usize,
) -> Result<usize> {
    let slide = Slide::open_with_override(path, config.mpp_override)?;
    let mask = slide.segment_tissue(&config.seg)?;
    let mag = slide.magnification()?;
    let (w0, h0) = slide.level_dimensions(0)?;
    let grid = plan_grid(
        slide.slide_id(),
        w0,
        h0,
        slide.downsamples(),
        &mask,
        &mag,
        &config.patch,
    )?;
    let mut matrix = pathforge_core::features::FeatureMatrix::new(encoder.dim());
    let chunk = config.encode_batch_size.max(1);
    let mut start = 0usize;
    while start < grid.coords.len() {
        let end = (start + chunk).min(grid.coords.len());
        let patches: Vec<_> = (start..end)
            .map(|i| load_patch(&slide, &grid, i))
            .collect::<Result<_>>()?;
        let encoded = encoder.encode_batch(&patches)?;
        matrix.data.extend_from_slice(&encoded.data);
        start = end;
    }
    let store = FeatureStore {
        slide_id: slide.slide_id().to_string(),
        encoder_name: config.encoder.clone(),
        coords: grid.coords.clone(),
        matrix,
        grid: GridEcho::from_grid(&grid),
    };
    let final_path = output_path(&config.out_dir, slide.slide_id());
    let tmp_path = config
        .out_dir
        .join(format!(".{}.w{worker}.tmp", slide.slide_id()));
    std::fs::write(&tmp_path, store.to_bytes()?)?;
    std::fs::rename(&tmp_path, &final_path)?;
    Ok(store.len())
}

/// Run the extraction pipeline over many slides with a worker pool.
pub fn run_batch(slides: &[PathBuf], config: &PipelineConfig, workers: usize) -> BatchReport {
    let started = Instant::now();
    std::fs::create_dir_all(&config.out_dir).ok();
    let queue: Arc<Mutex<VecDeque<(usize, PathBuf)>>> =
        Arc::new(Mutex::new(slides.iter().cloned().enumerate().collect()));
    let statuses: Arc<Mutex<Vec<Option<SlideStatus>>>> =
        Arc::new(Mutex::new(vec![None; slides.len()]));
    let workers = workers.max(1);
    std::thread::scope(|scope| {
        for worker in 0..workers {
            let queue = Arc::clone(&queue);
            let statuses = Arc::clone(&statuses);
            let config = config.clone();
            scope.spawn(move || {
                // one encoder per worker; external encoders see their slot
                let env = [("SLOT_ID".to_string(), worker.to_string())];
                let mut encoder = match config.registry.patch_encoder(&config.encoder, &env) {
                    Ok(e) => e,
                    Err(e) => {
                        // every slide this worker would have taken fails fast
                        let reason = e.to_string();
                        while let Some((idx, _)) = queue.lock().unwrap().pop_front() {
                            statuses.lock().unwrap()[idx] =
                                Some(SlideStatus::Failed { reason: reason.clone() });
                        }
                        return;
                    }
                };
                loop {
                    let job = queue.lock().unwrap().pop_front();
                    let Some((idx, path)) = job else { break };
                    let slide_id = slide_id_for(&path);
                    let out = output_path(&config.out_dir, &slide_id);
                    let status = if config.skip_existing
                        && out.exists()
                        && FeatureStore::validates(&out, &slide_id, &config.encoder, encoder.dim())
                    {
                        SlideStatus::SkippedExisting
                    } else {
                        match process_slide(&path, &config, encoder.as_mut(), worker) {
                            Ok(patches) => SlideStatus::Done { patches },
                            Err(e) => SlideStatus::Failed { reason: e.to_string() },
                        }
                    };
                    statuses.lock().unwrap()[idx] = Some(status);
                }
            });
        }
    });
    let statuses = Arc::try_unwrap(statuses).expect("workers joined").into_inner().unwrap();
    let statuses = slides
        .iter()
        .cloned()
        .zip(statuses.into_iter().map(|s| s.expect("every slide gets a status")))
        .collect();
    BatchReport { statuses, wall: started.elapsed() }
}
