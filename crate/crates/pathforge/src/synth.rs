//! Synthetic cohort generation: slides with known tissue geometry and a
//! planted, class-dependent color/texture shift, plus the matching task
//! artifacts. The generator keeps its own ground-truth masks so segmentation
//! accuracy can be scored against the true blob, and the planted signal is
//! strong enough that stub features carry it through the whole pipeline.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pathforge_core::mask::{BitMask, MaskSource, TissueMask};
use pathforge_core::raster::RasterImage;
use pathforge_core::rng::Rng;
use pathforge_core::splits::{
    generate_splits, GenSpec, LabelKind, LabelValue, MetricKind, PatientRecord, SplitScheme,
    SplitTable, TaskLevel, TaskSpec,
};

use crate::container::write_pyramid;
use crate::error::Result;
use crate::mask_io::save_mask;
use crate::task_io::write_task;

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub n_slides: usize,
    pub n_classes: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub slide_px: u32,
    pub tile_size: u32,
    pub n_levels: u32,
    pub task_id: String,
    pub n_folds: usize,
    pub scheme: SplitScheme,
    /// Roughly this fraction of patients contributes two slides.
    pub two_slide_fraction: f64,
    /// Fraction of tissue patch cells carrying the class signal.
    pub signal_fraction: f64,
    /// Write `<slide>.truth.png` ground-truth masks.
    pub write_truth: bool,
}

impl SynthConfig {
    pub fn new(out_dir: PathBuf) -> SynthConfig {
        SynthConfig {
            n_slides: 20,
            n_classes: 2,
            seed: 0,
            out_dir,
            slide_px: 1536,
            tile_size: 256,
            n_levels: 2,
            task_id: "synthetic-subtyping".to_string(),
            n_folds: 5,
            scheme: SplitScheme::Kfold,
            two_slide_fraction: 0.2,
            signal_fraction: 0.6,
            write_truth: true,
        }
    }
}

pub struct SynthSlide {
    pub path: PathBuf,
    pub slide_id: String,
    pub patient_id: String,
    pub class: usize,
    /// Ground truth tissue mask at level 0 resolution / truth_scale.
    pub truth: BitMask,
    pub truth_scale: f64,
}

pub struct SynthOutput {
    pub slides: Vec<SynthSlide>,
    pub csv_path: PathBuf,
    pub yaml_path: PathBuf,
    pub spec: TaskSpec,
    pub table: SplitTable,
}

/// Per-class stain shift applied inside signal cells: strong enough for the
/// stub encoder's channel means and centered histograms to separate classes.
fn class_shift(class: usize) -> [i16; 3] {
    match class % 4 {
        0 => [0, 0, 0],
        1 => [-45, 20, 30],
        2 => [25, -40, 15],
        _ => [-20, -25, -35],
    }
}

fn clamp_u8(v: i16) -> u8 {
    v.clamp(0, 255) as u8
}

/// Paint one slide: white background, an elliptical tissue blob with mild
/// per-pixel jitter, and the class shift plus a checker texture in a seeded
/// fraction of 256px grid cells.
fn paint_slide(
    rng: &mut Rng,
    size: u32,
    class: usize,
    signal_fraction: f64,
) -> (RasterImage, BitMask) {
    let mut img = RasterImage::filled(size, size, [255, 255, 255]);
    let mut truth = BitMask::new(size, size);
    let cx = size as i64 / 2 + rng.range_i64(-(size as i64) / 8, size as i64 / 8);
    let cy = size as i64 / 2 + rng.range_i64(-(size as i64) / 8, size as i64 / 8);
    let rx = (size as i64 * 3 / 10) + rng.range_i64(0, size as i64 / 10);
    let ry = (size as i64 * 3 / 10) + rng.range_i64(0, size as i64 / 10);
    let base = [205i16, 140, 175];
    let shift = class_shift(class);
    let cell = 256i64;
    let cells_across = (size as i64 + cell - 1) / cell;
    let signal_cells: Vec<bool> = (0..cells_across * cells_across)
        .map(|_| rng.next_f64() < signal_fraction)
        .collect();
    for y in 0..size as i64 {
        for x in 0..size as i64 {
            let dx = (x - cx) as f64 / rx as f64;
            let dy = (y - cy) as f64 / ry as f64;
            if dx * dx + dy * dy > 1.0 {
                continue;
            }
            truth.set(x as u32, y as u32, true);
            let jitter = rng.range_i64(-14, 14) as i16;
            let cell_idx = ((y / cell) * cells_across + (x / cell)) as usize;
            let signal = signal_cells[cell_idx];
            let mut px = [0u8; 3];
            for c in 0..3 {
                let mut v = base[c] + jitter;
                if signal {
                    v += shift[c];
                    // texture: 8px checker flips the luma inside signal cells
                    if ((x / 8) + (y / 8)) % 2 == 0 {
                        v -= 12;
                    }
                }
                px[c] = clamp_u8(v);
            }
            img.set_pixel(x as u32, y as u32, px);
        }
    }
    (img, truth)
}

pub fn generate_cohort(config: &SynthConfig) -> Result<SynthOutput> {
    std::fs::create_dir_all(&config.out_dir)?;
    let mut rng = Rng::for_stream(config.seed, 0x517e);
    let mut slides = Vec::new();
    let mut patients: Vec<PatientRecord> = Vec::new();
    let mut slide_index = 0usize;
    let mut patient_index = 0usize;
    // stratified generation needs enough patients per class; two-slide
    // patients are only allowed while the slide budget can still cover that
    let per_class_floor = match config.scheme {
        SplitScheme::Kfold => config.n_folds,
        _ => 2,
    };
    let min_patients = per_class_floor * config.n_classes;
    while slide_index < config.n_slides {
        let class = patient_index % config.n_classes;
        let patient_id = format!("patient-{patient_index:03}");
        let remaining = config.n_slides - slide_index;
        let still_needed = min_patients.saturating_sub(patient_index + 1);
        let can_double = remaining >= 2 && remaining - 2 >= still_needed;
        let n_slides_here =
            if can_double && rng.next_f64() < config.two_slide_fraction { 2 } else { 1 };
        let mut slide_ids = Vec::new();
        for _ in 0..n_slides_here {
            let slide_id = format!("slide-{slide_index:03}");
            let (img, truth) = paint_slide(&mut rng, config.slide_px, class, config.signal_fraction);
            let path = config.out_dir.join(format!("{slide_id}.spyr"));
            let metadata = BTreeMap::from([
                ("mpp_x".to_string(), "0.5".to_string()),
                ("mpp_y".to_string(), "0.5".to_string()),
                ("objective_power".to_string(), "20".to_string()),
            ]);
            write_pyramid(&img, config.tile_size, config.n_levels, &metadata, &slide_id, &path)?;
            if config.write_truth {
                // snapshot the truth at a manageable scale, in a side
                // directory so the cohort root stays a plain slide listing
                let truth_dir = config.out_dir.join("truth");
                std::fs::create_dir_all(&truth_dir)?;
                let scale = 4u32;
                let small = downscale_mask(&truth, scale);
                save_mask(
                    &TissueMask {
                        slide_id: slide_id.clone(),
                        mask: small,
                        scale: scale as f64,
                        source: MaskSource::External,
                    },
                    &truth_dir.join(format!("{slide_id}.png")),
                )?;
            }
            slides.push(SynthSlide {
                path,
                slide_id: slide_id.clone(),
                patient_id: patient_id.clone(),
                class,
                truth,
                truth_scale: 1.0,
            });
            slide_ids.push(slide_id);
            slide_index += 1;
        }
        patients.push(PatientRecord {
            patient_id,
            slides: slide_ids,
            label: LabelValue::Class(format!("class-{class}")),
        });
        patient_index += 1;
    }
    let gen = GenSpec {
        scheme: config.scheme,
        n_folds: config.n_folds,
        seed: config.seed,
        stratify: true,
    };
    let table = generate_splits(&patients, &gen)?;
    let spec = TaskSpec {
        task_id: config.task_id.clone(),
        level: TaskLevel::Patient,
        label_kind: LabelKind::Categorical,
        classes: Some(config.n_classes as u32),
        n_samples: patients.len(),
        n_folds: config.n_folds,
        metric: MetricKind::BalancedAccuracy,
        split_scheme: config.scheme,
        stratified: true,
        seed: config.seed,
    };
    let csv_path = config.out_dir.join(format!("{}.csv", config.task_id));
    let yaml_path = config.out_dir.join(format!("{}.yaml", config.task_id));
    write_task(&spec, &table, &csv_path, &yaml_path)?;
    Ok(SynthOutput { slides, csv_path, yaml_path, spec, table })
}

/// Majority-vote downscale of a ground-truth mask.
pub fn downscale_mask(mask: &BitMask, factor: u32) -> BitMask {
    let w = mask.width.div_ceil(factor);
    let h = mask.height.div_ceil(factor);
    let mut out = BitMask::new(w, h);
    for oy in 0..h {
        for ox in 0..w {
            let mut fg = 0u32;
            let mut total = 0u32;
            for dy in 0..factor {
                for dx in 0..factor {
                    let (x, y) = (ox * factor + dx, oy * factor + dy);
                    if x < mask.width && y < mask.height {
                        total += 1;
                        fg += mask.get(x, y) as u32;
                    }
                }
            }
            out.set(ox, oy, fg * 2 >= total);
        }
    }
    out
}

/// Resample the level-0 ground truth onto an arbitrary mask grid.
pub fn truth_at_scale(truth: &BitMask, width: u32, height: u32, scale: f64) -> BitMask {
    let mut out = BitMask::new(width, height);
    for oy in 0..height {
        for ox in 0..width {
            // majority over the covered level-0 block, sampled on a 4x4 grid
            let mut fg = 0u32;
            let mut total = 0u32;
            for sy in 0..4 {
                for sx in 0..4 {
                    let x = ((ox as f64 + (sx as f64 + 0.5) / 4.0) * scale) as i64;
                    let y = ((oy as f64 + (sy as f64 + 0.5) / 4.0) * scale) as i64;
                    if x >= 0 && (x as u32) < truth.width && y >= 0 && (y as u32) < truth.height {
                        total += 1;
                        fg += truth.get(x as u32, y as u32) as u32;
                    }
                }
            }
            out.set(ox, oy, total > 0 && fg * 2 >= total);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slide::Slide;
    use pathforge_core::seg::SegParams;

    #[test]
    fn cohort_has_declared_shape_and_parses_back() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = SynthConfig::new(dir.path().to_path_buf());
        config.n_slides = 6;
        config.slide_px = 512;
        config.n_folds = 3;
        config.write_truth = false;
        let out = generate_cohort(&config).unwrap();
        assert_eq!(out.slides.len(), 6);
        let (spec, table, warnings) =
            crate::task_io::parse_task(&out.csv_path, &out.yaml_path).unwrap();
        assert_eq!(spec, out.spec);
        assert_eq!(table, out.table);
        assert!(warnings.is_empty(), "{warnings:?}");
        // both classes present
        let classes = table.class_labels();
        assert_eq!(classes, vec!["class-0".to_string(), "class-1".to_string()]);
    }

    #[test]
    fn segmentation_recovers_the_planted_blob() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = SynthConfig::new(dir.path().to_path_buf());
        config.n_slides = 4;
        config.slide_px = 1024;
        config.n_folds = 1;
        config.scheme = SplitScheme::MonteCarlo;
        config.write_truth = false;
        let out = generate_cohort(&config).unwrap();
        for synth in &out.slides {
            let slide = Slide::open(&synth.path).unwrap();
            let mask = slide.segment_tissue(&SegParams::default()).unwrap();
            let truth = truth_at_scale(
                &synth.truth,
                mask.mask.width,
                mask.mask.height,
                mask.scale,
            );
            let iou = mask.mask.iou(&truth);
            assert!(iou >= 0.95, "slide {}: IoU {iou}", synth.slide_id);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let mut config_a = SynthConfig::new(dir_a.path().to_path_buf());
        config_a.n_slides = 4;
        config_a.slide_px = 256;
        config_a.write_truth = false;
        config_a.n_folds = 2;
        let mut config_b = config_a.clone();
        config_b.out_dir = dir_b.path().to_path_buf();
        generate_cohort(&config_a).unwrap();
        generate_cohort(&config_b).unwrap();
        for i in 0..4 {
            let a = std::fs::read(dir_a.path().join(format!("slide-{i:03}.spyr"))).unwrap();
            let b = std::fs::read(dir_b.path().join(format!("slide-{i:03}.spyr"))).unwrap();
            assert_eq!(a, b, "slide {i} differs across runs");
        }
        let ca = std::fs::read(dir_a.path().join("synthetic-subtyping.csv")).unwrap();
        let cb = std::fs::read(dir_b.path().join("synthetic-subtyping.csv")).unwrap();
        assert_eq!(ca, cb);
    }
}
