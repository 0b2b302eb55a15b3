//! Cross-module pipeline checks: patch loading against resize oracles, the
//! flat-PNG path through segmentation and patching, and grid persistence in
//! context.

use std::collections::BTreeMap;

use pathforge::container::write_pyramid;
use pathforge::grid_io::{load_grid, save_grid};
use pathforge::slide::{load_patch, Slide};
use pathforge_core::grid::{plan_grid, PatchParams};
use pathforge_core::mask::{BitMask, MaskSource, TissueMask};
use pathforge_core::raster::RasterImage;
use pathforge_core::rng::Rng;

fn full_mask(slide_id: &str, mask_px: u32, scale: f64) -> TissueMask {
    let mut mask = BitMask::new(mask_px, mask_px);
    mask.data.iter_mut().for_each(|v| *v = true);
    TissueMask { slide_id: slide_id.to_string(), mask, scale, source: MaskSource::OtsuPipeline }
}

#[test]
fn load_patch_at_native_magnification_is_a_plain_crop() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = Rng::seed_from(61);
    let img = RasterImage::from_data(
        512,
        512,
        (0..512 * 512 * 3).map(|_| (rng.next_u64() & 0xff) as u8).collect(),
    );
    let path = dir.path().join("native.spyr");
    let metadata = BTreeMap::from([("mpp_x".to_string(), "0.5".to_string())]);
    write_pyramid(&img, 128, 1, &metadata, "native", &path).unwrap();
    let slide = Slide::open(&path).unwrap();
    let mag = slide.magnification().unwrap();
    assert_eq!(mag.base_magnification, 20);
    let params = PatchParams { patch_size: 128, ..PatchParams::default() };
    let grid =
        plan_grid("native", 512, 512, slide.downsamples(), &full_mask("native", 64, 8.0), &mag, &params)
            .unwrap();
    assert_eq!(grid.resize_factor, 1.0);
    for index in 0..grid.coords.len() {
        let patch = load_patch(&slide, &grid, index).unwrap();
        let (x, y) = grid.coords[index];
        let direct = slide.read_region(0, x, y, 128, 128).unwrap();
        assert_eq!(patch, direct, "patch {index} is not a plain crop");
    }
}

#[test]
fn load_patch_downsamples_by_block_mean_from_forty_x() {
    // a 40x slide (mpp 0.25) read at 20x: every output pixel is the mean of
    // its 2x2 source block
    let dir = tempfile::tempdir().unwrap();
    let mut rng = Rng::seed_from(40);
    let img = RasterImage::from_data(
        512,
        512,
        (0..512 * 512 * 3).map(|_| (rng.next_u64() & 0xff) as u8).collect(),
    );
    let path = dir.path().join("forty.spyr");
    let metadata = BTreeMap::from([("mpp_x".to_string(), "0.25".to_string())]);
    write_pyramid(&img, 128, 1, &metadata, "forty", &path).unwrap();
    let slide = Slide::open(&path).unwrap();
    let mag = slide.magnification().unwrap();
    assert_eq!(mag.base_magnification, 40);
    let params = PatchParams { patch_size: 64, ..PatchParams::default() };
    let grid =
        plan_grid("forty", 512, 512, slide.downsamples(), &full_mask("forty", 64, 8.0), &mag, &params)
            .unwrap();
    assert_eq!(grid.level0_patch_extent, 128);
    assert_eq!(grid.resize_factor, 2.0);
    let patch = load_patch(&slide, &grid, 0).unwrap();
    assert_eq!((patch.width, patch.height), (64, 64));
    let (x0, y0) = grid.coords[0];
    for py in 0..64u32 {
        for px in 0..64u32 {
            for c in 0..3 {
                let mut sum = 0u32;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let sx = x0 as u32 + px * 2 + dx;
                        let sy = y0 as u32 + py * 2 + dy;
                        sum += img.pixel(sx, sy)[c] as u32;
                    }
                }
                let expected = ((2 * sum + 4) / 8) as u8;
                assert_eq!(patch.pixel(px, py)[c], expected, "at ({px},{py}) ch {c}");
            }
        }
    }
}

#[test]
fn bad_patch_index_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let img = RasterImage::filled(256, 256, [128, 90, 100]);
    let path = dir.path().join("idx.spyr");
    let metadata = BTreeMap::from([("mpp_x".to_string(), "0.5".to_string())]);
    write_pyramid(&img, 128, 1, &metadata, "idx", &path).unwrap();
    let slide = Slide::open(&path).unwrap();
    let mag = slide.magnification().unwrap();
    let grid = plan_grid(
        "idx",
        256,
        256,
        slide.downsamples(),
        &full_mask("idx", 32, 8.0),
        &mag,
        &PatchParams { patch_size: 128, ..PatchParams::default() },
    )
    .unwrap();
    let n = grid.coords.len();
    match load_patch(&slide, &grid, n) {
        Err(pathforge::error::PathforgeError::Grid(
            pathforge_core::grid::GridError::BadIndex { index, count },
        )) => {
            assert_eq!((index, count), (n, n));
        }
        other => panic!("expected BadIndex, got {other:?}"),
    }
}

#[test]
fn flat_png_flows_through_segmentation_and_patching() {
    let dir = tempfile::tempdir().unwrap();
    let png_path = dir.path().join("flat.png");
    let mut img = RasterImage::filled(640, 480, [255, 255, 255]);
    for y in 100..380u32 {
        for x in 150..500u32 {
            img.set_pixel(x, y, [200, 120, 165]);
        }
    }
    {
        let file = std::fs::File::create(&png_path).unwrap();
        let mut encoder = png::Encoder::new(std::io::BufWriter::new(file), 640, 480);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        encoder.write_header().unwrap().write_image_data(&img.data).unwrap();
    }
    std::fs::write(dir.path().join("flat.meta.json"), r#"{"mpp_x": 0.5, "mpp_y": 0.5}"#).unwrap();
    let slide = Slide::open(&png_path).unwrap();
    let mask = slide
        .segment_tissue(&pathforge_core::seg::SegParams {
            thumb_max_dim: 256,
            ..Default::default()
        })
        .unwrap();
    let mag = slide.magnification().unwrap();
    let grid = plan_grid(
        "flat",
        640,
        480,
        slide.downsamples(),
        &mask,
        &mag,
        &PatchParams { patch_size: 64, ..PatchParams::default() },
    )
    .unwrap();
    assert!(!grid.coords.is_empty());
    // grids persist and reload in context
    let grid_path = dir.path().join("flat.pgrd");
    save_grid(&grid, &grid_path).unwrap();
    assert_eq!(load_grid(&grid_path).unwrap(), grid);
    // every kept patch really does overlap the painted rectangle
    for &(x, y) in &grid.coords {
        let overlaps = x + 64 > 150 - 64 && x < 500 + 64 && y + 64 > 100 - 64 && y < 380 + 64;
        assert!(overlaps, "patch at ({x},{y}) is far from tissue");
    }
}
