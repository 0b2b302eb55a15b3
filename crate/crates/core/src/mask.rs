//! Binary masks at thumbnail scale and tissue-fraction queries against them.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Dense binary raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl BitMask {
    pub fn new(width: u32, height: u32) -> Self {
        BitMask { width, height, data: vec![false; width as usize * height as usize] }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn complement(&self) -> BitMask {
        BitMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| !v).collect(),
        }
    }

    pub fn count_foreground(&self) -> u64 {
        self.data.iter().filter(|&&v| v).count() as u64
    }

    /// Intersection over union with another mask of the same dimensions.
    pub fn iou(&self, other: &BitMask) -> f64 {
        assert_eq!((self.width, self.height), (other.width, other.height), "mask dims");
        let mut inter = 0u64;
        let mut union = 0u64;
        for (&a, &b) in self.data.iter().zip(other.data.iter()) {
            if a && b {
                inter += 1;
            }
            if a || b {
                union += 1;
            }
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// How a tissue mask was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskSource {
    OtsuPipeline,
    External,
}

/// Binary tissue mask at thumbnail scale.
#[derive(Clone, Debug, PartialEq)]
pub struct TissueMask {
    pub slide_id: String,
    pub mask: BitMask,
    /// Level-0 pixels per mask pixel.
    pub scale: f64,
    pub source: MaskSource,
}

/// Axis-aligned rectangle in level-0 pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl TissueMask {
    /// Fraction of `rect` covered by foreground, measured on the mask grid
    /// with partial-pixel weighting at the rectangle borders. Parts of the
    /// rectangle outside the mask count as background.
    pub fn tissue_fraction(&self, rect: Rect) -> f64 {
        assert!(rect.w > 0.0 && rect.h > 0.0, "tissue_fraction of empty rect");
        let x0 = rect.x / self.scale;
        let y0 = rect.y / self.scale;
        let x1 = (rect.x + rect.w) / self.scale;
        let y1 = (rect.y + rect.h) / self.scale;
        let total_area = (x1 - x0) * (y1 - y0);
        let ix0 = libm::floor(x0.max(0.0)) as i64;
        let iy0 = libm::floor(y0.max(0.0)) as i64;
        let ix1 = (libm::ceil(x1) as i64).min(self.mask.width as i64);
        let iy1 = (libm::ceil(y1) as i64).min(self.mask.height as i64);
        if ix0 >= ix1 || iy0 >= iy1 {
            return 0.0;
        }
        let mut covered = 0.0f64;
        for py in iy0..iy1 {
            let hy = overlap_len(py as f64, y0, y1);
            if hy <= 0.0 {
                continue;
            }
            for px in ix0..ix1 {
                if !self.mask.get(px as u32, py as u32) {
                    continue;
                }
                let hx = overlap_len(px as f64, x0, x1);
                if hx > 0.0 {
                    covered += hx * hy;
                }
            }
        }
        (covered / total_area).clamp(0.0, 1.0)
    }
}

#[inline]
fn overlap_len(cell: f64, lo: f64, hi: f64) -> f64 {
    let a = if lo > cell { lo } else { cell };
    let b = if hi < cell + 1.0 { hi } else { cell + 1.0 };
    if b > a {
        b - a
    } else {
        0.0
    }
}
