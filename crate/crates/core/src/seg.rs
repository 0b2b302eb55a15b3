//! Tissue-vs-background segmentation on a thumbnail.
//!
//! The classical pipeline: saturation channel -> box blur -> threshold (Otsu
//! or fixed) -> morphological close/open -> small-component removal -> small-
//! hole filling. A model-based segmenter can replace all of this by importing
//! an external mask; downstream code only ever sees a [`crate::mask::TissueMask`].

use alloc::vec;
use alloc::vec::Vec;

use crate::mask::BitMask;
use crate::raster::{GrayImage, RasterImage};

/// Segmentation pipeline parameters.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SegParams {
    /// Longest thumbnail side the pipeline works at.
    pub thumb_max_dim: u32,
    pub blur_radius: u32,
    pub threshold: ThresholdRule,
    pub close_radius: u32,
    pub open_radius: u32,
    /// Components smaller than this fraction of the thumbnail area are dropped.
    pub min_region_area: f64,
    /// Holes smaller than this fraction of the thumbnail area are filled.
    pub min_hole_area: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    Otsu,
    Fixed(u8),
}

impl Default for SegParams {
    fn default() -> Self {
        SegParams {
            thumb_max_dim: 1024,
            blur_radius: 2,
            threshold: ThresholdRule::Otsu,
            close_radius: 2,
            open_radius: 1,
            min_region_area: 1e-4,
            min_hole_area: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SegError {
    #[error("histogram has fewer than two populated bins")]
    DegenerateHistogram,
    #[error("no tissue remains after segmentation: blank slide or over-aggressive parameters")]
    EmptyTissue,
    #[error("mask is empty")]
    EmptyMask,
}

/// Saturation channel: 0 for white/gray background, high for stained tissue.
/// S = round(255 * (1 - min/max)), 0 when max = 0.
pub fn saturation_channel(img: &RasterImage) -> GrayImage {
    let mut out = Vec::with_capacity(img.width as usize * img.height as usize);
    for px in img.data.chunks_exact(3) {
        let max = px[0].max(px[1]).max(px[2]) as u32;
        let min = px[0].min(px[1]).min(px[2]) as u32;
        let s = if max == 0 {
            0
        } else {
            // round half up of 255*(max-min)/max
            ((2 * 255 * (max - min) + max) / (2 * max)) as u8
        };
        out.push(s);
    }
    GrayImage::from_data(img.width, img.height, out)
}

/// Otsu's threshold: the smallest t in [0, 255) maximizing the between-class
/// variance with class 0 = bins [0..=t] and class 1 = bins [t+1..=255].
///
/// Class counts and intensity sums are kept as exact integers so the scan is
/// bit-reproducible and identical to a brute-force re-computation.
pub fn otsu_threshold(hist: &[u64; 256]) -> Result<u8, SegError> {
    let populated = hist.iter().filter(|&&c| c > 0).count();
    if populated < 2 {
        return Err(SegError::DegenerateHistogram);
    }
    let total_count: u64 = hist.iter().sum();
    let total_sum: u64 = hist.iter().enumerate().map(|(v, &c)| v as u64 * c).sum();
    let mut best_t = 0u8;
    let mut best_score = f64::NEG_INFINITY;
    let mut count0 = 0u64;
    let mut sum0 = 0u64;
    for t in 0..255usize {
        count0 += hist[t];
        sum0 += t as u64 * hist[t];
        let count1 = total_count - count0;
        if count0 == 0 || count1 == 0 {
            continue;
        }
        let sum1 = total_sum - sum0;
        let mu0 = sum0 as f64 / count0 as f64;
        let mu1 = sum1 as f64 / count1 as f64;
        let diff = mu0 - mu1;
        let score = count0 as f64 * count1 as f64 * diff * diff;
        if score > best_score {
            best_score = score;
            best_t = t as u8;
        }
    }
    Ok(best_t)
}

/// Foreground = value strictly above the threshold.
pub fn apply_threshold(gray: &GrayImage, t: u8) -> BitMask {
    let data = gray.data.iter().map(|&v| v > t).collect();
    BitMask { width: gray.width, height: gray.height, data }
}

/// Dilation with a square (Chebyshev) structuring element of the given
/// radius; pixels outside the image count as background. Separable.
pub fn dilate(mask: &BitMask, radius: u32) -> BitMask {
    if radius == 0 {
        return mask.clone();
    }
    let horizontal = running_any_rows(mask, radius);
    running_any_cols(&horizontal, radius)
}

/// Erosion with the same element and border convention (outside = background,
/// so foreground within `radius` of the border erodes).
pub fn erode(mask: &BitMask, radius: u32) -> BitMask {
    if radius == 0 {
        return mask.clone();
    }
    let inverted = mask.complement();
    dilate(&inverted, radius).complement()
}

pub fn close(mask: &BitMask, radius: u32) -> BitMask {
    erode(&dilate(mask, radius), radius)
}

pub fn open(mask: &BitMask, radius: u32) -> BitMask {
    dilate(&erode(mask, radius), radius)
}

fn running_any_rows(mask: &BitMask, radius: u32) -> BitMask {
    let w = mask.width as usize;
    let h = mask.height as usize;
    let r = radius as usize;
    let mut out = vec![false; w * h];
    for y in 0..h {
        let row = &mask.data[y * w..(y + 1) * w];
        // prefix count of set pixels
        let mut prefix = vec![0u32; w + 1];
        for x in 0..w {
            prefix[x + 1] = prefix[x] + row[x] as u32;
        }
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r + 1).min(w);
            out[y * w + x] = prefix[hi] > prefix[lo];
        }
    }
    BitMask { width: mask.width, height: mask.height, data: out }
}

fn running_any_cols(mask: &BitMask, radius: u32) -> BitMask {
    let w = mask.width as usize;
    let h = mask.height as usize;
    let r = radius as usize;
    let mut out = vec![false; w * h];
    for x in 0..w {
        let mut prefix = vec![0u32; h + 1];
        for y in 0..h {
            prefix[y + 1] = prefix[y] + mask.data[y * w + x] as u32;
        }
        for y in 0..h {
            let lo = y.saturating_sub(r);
            let hi = (y + r + 1).min(h);
            out[y * w + x] = prefix[hi] > prefix[lo];
        }
    }
    BitMask { width: mask.width, height: mask.height, data: out }
}

/// Label foreground components (8-connectivity). Returns the label grid
/// (0 = background) and per-label pixel counts indexed by label-1.
pub fn label_components(mask: &BitMask) -> (Vec<u32>, Vec<u64>) {
    let w = mask.width as i64;
    let h = mask.height as i64;
    let mut labels = vec![0u32; (w * h) as usize];
    let mut areas = Vec::new();
    let mut stack = Vec::new();
    let mut next = 0u32;
    for start in 0..(w * h) as usize {
        if !mask.data[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        let mut area = 0u64;
        stack.push(start);
        labels[start] = next;
        while let Some(idx) = stack.pop() {
            area += 1;
            let x = idx as i64 % w;
            let y = idx as i64 / w;
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || nx >= w || ny < 0 || ny >= h {
                        continue;
                    }
                    let nidx = (ny * w + nx) as usize;
                    if mask.data[nidx] && labels[nidx] == 0 {
                        labels[nidx] = next;
                        stack.push(nidx);
                    }
                }
            }
        }
        areas.push(area);
    }
    (labels, areas)
}

/// Remove foreground components smaller than `min_pixels`.
pub fn drop_small_components(mask: &BitMask, min_pixels: u64) -> BitMask {
    let (labels, areas) = label_components(mask);
    let data = labels
        .iter()
        .map(|&l| l != 0 && areas[(l - 1) as usize] >= min_pixels)
        .collect();
    BitMask { width: mask.width, height: mask.height, data }
}

/// Fill background holes (4-connected background regions not touching the
/// border) smaller than `max_pixels`.
pub fn fill_small_holes(mask: &BitMask, max_pixels: u64) -> BitMask {
    let w = mask.width as i64;
    let h = mask.height as i64;
    let mut out = mask.clone();
    let mut visited = vec![false; (w * h) as usize];
    let mut stack = Vec::new();
    let mut region = Vec::new();
    for start in 0..(w * h) as usize {
        if mask.data[start] || visited[start] {
            continue;
        }
        region.clear();
        let mut touches_border = false;
        stack.push(start);
        visited[start] = true;
        while let Some(idx) = stack.pop() {
            region.push(idx);
            let x = idx as i64 % w;
            let y = idx as i64 / w;
            if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                touches_border = true;
            }
            for (dx, dy) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || nx >= w || ny < 0 || ny >= h {
                    continue;
                }
                let nidx = (ny * w + nx) as usize;
                if !mask.data[nidx] && !visited[nidx] {
                    visited[nidx] = true;
                    stack.push(nidx);
                }
            }
        }
        if !touches_border && (region.len() as u64) < max_pixels {
            for &idx in &region {
                out.data[idx] = true;
            }
        }
    }
    out
}

/// Run the mask pipeline on an already-built thumbnail.
pub fn segment_thumbnail(thumb: &RasterImage, params: &SegParams) -> Result<BitMask, SegError> {
    let sat = saturation_channel(thumb);
    let blurred = sat.box_blur(params.blur_radius);
    let t = match params.threshold {
        ThresholdRule::Fixed(t) => t,
        // a single-bin histogram means nothing separates from the background,
        // which the pipeline reports as a blank slide
        ThresholdRule::Otsu => match otsu_threshold(&blurred.histogram()) {
            Ok(t) => t,
            Err(SegError::DegenerateHistogram) => return Err(SegError::EmptyTissue),
            Err(e) => return Err(e),
        },
    };
    let mut mask = apply_threshold(&blurred, t);
    mask = close(&mask, params.close_radius);
    mask = open(&mask, params.open_radius);
    let total = mask.width as f64 * mask.height as f64;
    let min_region = libm::ceil(params.min_region_area * total) as u64;
    let max_hole = libm::ceil(params.min_hole_area * total) as u64;
    mask = drop_small_components(&mask, min_region.max(1));
    mask = fill_small_holes(&mask, max_hole);
    if mask.count_foreground() == 0 {
        return Err(SegError::EmptyTissue);
    }
    Ok(mask)
}
