//! Magnification and resolution inference.
//!
//! Scanners encode resolution in different places; the resolver walks a fixed
//! heuristic chain (explicit override, then `mpp_x`/`mpp_y` metadata, then
//! `objective_power`) and maps between microns-per-pixel and nominal
//! objective power with the conventional table:
//!
//! | power | um/px |
//! |-------|-------|
//! | 80x   | 0.125 |
//! | 40x   | 0.25  |
//! | 20x   | 0.5   |
//! | 10x   | 1.0   |
//! | 5x    | 2.0   |

use alloc::collections::BTreeMap;
use alloc::string::String;

/// Which rung of the heuristic chain produced the answer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagSource {
    MetadataMpp,
    MetadataObjective,
    UserOverride,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MagInfo {
    /// Microns per pixel at level 0.
    pub mpp: f64,
    /// Nominal objective power, one of 5/10/20/40/80.
    pub base_magnification: u32,
    pub source: MagSource,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum MagError {
    #[error("magnification unknown: no override, no mpp metadata, no objective power")]
    UnknownMagnification,
    #[error("invalid magnification override {0}: must be a positive microns-per-pixel value")]
    InvalidOverride(String),
}

const BUCKETS: [(u32, f64); 5] =
    [(80, 0.125), (40, 0.25), (20, 0.5), (10, 1.0), (5, 2.0)];

/// Nearest objective-power bucket for an mpp value, ties resolved toward the
/// higher power (log-space distance).
pub fn magnification_for_mpp(mpp: f64) -> u32 {
    let target = libm::log(mpp);
    let mut best = BUCKETS[0].0;
    let mut best_dist = f64::INFINITY;
    for (power, bucket_mpp) in BUCKETS {
        let d = abs(libm::log(bucket_mpp) - target);
        if d < best_dist {
            best_dist = d;
            best = power;
        }
    }
    best
}

/// Conventional mpp for an objective power; arbitrary powers snap to the
/// nearest bucket first.
pub fn mpp_for_magnification(power: f64) -> (u32, f64) {
    let target = libm::log(power);
    let mut best = BUCKETS[0];
    let mut best_dist = f64::INFINITY;
    for bucket in BUCKETS {
        let d = abs(libm::log(bucket.0 as f64) - target);
        if d < best_dist {
            best_dist = d;
            best = bucket;
        }
    }
    best
}

#[inline]
fn abs(x: f64) -> f64 {
    if x < 0.0 {
        -x
    } else {
        x
    }
}

fn parse_positive(s: &str) -> Option<f64> {
    match s.trim().parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Some(v),
        _ => None,
    }
}

/// Resolve resolution info from slide metadata, first hit wins:
/// 1. explicit `mpp_override`
/// 2. metadata key `mpp_x` (averaged with `mpp_y` when present)
/// 3. metadata key `objective_power`
///
/// Unparseable metadata values fall through to the next rung.
pub fn infer_magnification(
    metadata: &BTreeMap<String, String>,
    mpp_override: Option<f64>,
) -> Result<MagInfo, MagError> {
    if let Some(mpp) = mpp_override {
        if !(mpp > 0.0 && mpp.is_finite()) {
            return Err(MagError::InvalidOverride(alloc::format!("{mpp}")));
        }
        return Ok(MagInfo {
            mpp,
            base_magnification: magnification_for_mpp(mpp),
            source: MagSource::UserOverride,
        });
    }
    if let Some(mpp_x) = metadata.get("mpp_x").and_then(|s| parse_positive(s)) {
        let mpp = match metadata.get("mpp_y").and_then(|s| parse_positive(s)) {
            Some(mpp_y) => (mpp_x + mpp_y) / 2.0,
            None => mpp_x,
        };
        return Ok(MagInfo {
            mpp,
            base_magnification: magnification_for_mpp(mpp),
            source: MagSource::MetadataMpp,
        });
    }
    if let Some(power) = metadata.get("objective_power").and_then(|s| parse_positive(s)) {
        let (base_magnification, mpp) = mpp_for_magnification(power);
        return Ok(MagInfo { mpp, base_magnification, source: MagSource::MetadataObjective });
    }
    Err(MagError::UnknownMagnification)
}
