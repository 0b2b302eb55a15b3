//! Patch planning: turn a tissue mask into level-0 patch coordinates.
//!
//! Only coordinates are produced here; pixels are read on demand later. All
//! coordinates are level-0 top-left integers so a grid stays valid whatever
//! pyramid level it is eventually read from.

use alloc::string::String;
use alloc::vec::Vec;

use crate::mag::MagInfo;
use crate::mask::{Rect, TissueMask};

/// Patching parameters, in pixels at the target magnification.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PatchParams {
    pub patch_size: u32,
    pub target_magnification: u32,
    pub overlap: u32,
    pub min_tissue_frac: f64,
}

impl Default for PatchParams {
    fn default() -> Self {
        PatchParams {
            patch_size: 256,
            target_magnification: 20,
            overlap: 0,
            min_tissue_frac: 0.25,
        }
    }
}

impl PatchParams {
    pub fn validate(&self) -> Result<(), GridError> {
        if self.patch_size == 0 {
            return Err(GridError::BadParams("patch_size must be positive".into()));
        }
        if self.overlap >= self.patch_size {
            return Err(GridError::BadParams("overlap must be smaller than patch_size".into()));
        }
        if !(0.0..=1.0).contains(&self.min_tissue_frac) {
            return Err(GridError::BadParams("min_tissue_frac must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Planned patch coordinates for one slide.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGrid {
    pub slide_id: String,
    pub params: PatchParams,
    /// Patch side length in level-0 pixels.
    pub level0_patch_extent: u32,
    /// Lattice step in level-0 pixels.
    pub step: u32,
    /// Level-0 top-left corners, row-major order.
    pub coords: Vec<(i64, i64)>,
    /// Pyramid level patches are read from.
    pub read_level: u32,
    /// Downscale applied after reading (>= 1).
    pub resize_factor: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum GridError {
    #[error("target magnification {target}x exceeds the slide's base magnification {base}x")]
    MagnificationUnavailable { target: u32, base: u32 },
    #[error("no patches meet the tissue threshold")]
    NoPatches,
    #[error("patch index {index} out of range ({count} patches)")]
    BadIndex { index: usize, count: usize },
    #[error("invalid patch parameters: {0}")]
    BadParams(String),
}

/// Enumerate the row-major lattice over the slide extent and keep cells with
/// enough tissue. `level_downsamples` are the pyramid's per-level downsample
/// factors (ascending, level 0 first).
pub fn plan_grid(
    slide_id: &str,
    level0_width: u32,
    level0_height: u32,
    level_downsamples: &[f64],
    mask: &TissueMask,
    mag: &MagInfo,
    params: &PatchParams,
) -> Result<PatchGrid, GridError> {
    params.validate()?;
    if params.target_magnification > mag.base_magnification {
        return Err(GridError::MagnificationUnavailable {
            target: params.target_magnification,
            base: mag.base_magnification,
        });
    }
    let ratio = mag.base_magnification as f64 / params.target_magnification as f64;
    let level0_patch_extent = round_to_px(params.patch_size as f64 * ratio);
    let step = round_to_px((params.patch_size - params.overlap) as f64 * ratio);
    let coords = enumerate_lattice(
        level0_width,
        level0_height,
        level0_patch_extent,
        step,
        mask,
        params.min_tissue_frac,
    );
    if coords.is_empty() {
        return Err(GridError::NoPatches);
    }
    // deepest level whose downsample still oversamples the target
    let mut read_level = 0u32;
    for (i, &ds) in level_downsamples.iter().enumerate() {
        if ds <= ratio + 1e-9 {
            read_level = i as u32;
        }
    }
    let resize_factor = ratio / level_downsamples[read_level as usize];
    Ok(PatchGrid {
        slide_id: slide_id.into(),
        params: params.clone(),
        level0_patch_extent,
        step,
        coords,
        read_level,
        resize_factor,
    })
}

fn round_to_px(v: f64) -> u32 {
    libm::floor(v + 0.5) as u32
}

fn enumerate_lattice(
    level0_width: u32,
    level0_height: u32,
    extent: u32,
    step: u32,
    mask: &TissueMask,
    min_tissue_frac: f64,
) -> Vec<(i64, i64)> {
    let mut coords = Vec::new();
    if extent > level0_width || extent > level0_height {
        return coords;
    }
    let mut y = 0u64;
    while y + extent as u64 <= level0_height as u64 {
        let mut x = 0u64;
        while x + extent as u64 <= level0_width as u64 {
            let rect = Rect {
                x: x as f64,
                y: y as f64,
                w: extent as f64,
                h: extent as f64,
            };
            if mask.tissue_fraction(rect) >= min_tissue_frac {
                coords.push((x as i64, y as i64));
            }
            x += step as u64;
        }
        y += step as u64;
    }
    coords
}

impl PatchGrid {
    /// Level-0 rectangle of one patch.
    pub fn patch_rect(&self, index: usize) -> Result<(i64, i64, u32), GridError> {
        let &(x, y) = self
            .coords
            .get(index)
            .ok_or(GridError::BadIndex { index, count: self.coords.len() })?;
        Ok((x, y, self.level0_patch_extent))
    }
}
