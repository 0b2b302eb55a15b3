//! In-memory raster types and deterministic resampling.
//!
//! Level reductions and patch resizes both use plain area averaging with
//! round-half-up, computed in integer arithmetic where the ratio is integral
//! so results are identical on every platform.

use alloc::vec;
use alloc::vec::Vec;

/// Row-major 8-bit RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

/// Row-major 8-bit single-channel image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl RasterImage {
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            data.extend_from_slice(&rgb);
        }
        RasterImage { width, height, data }
    }

    pub fn from_data(width: u32, height: u32, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width as usize * height as usize * 3, "buffer size");
        RasterImage { width, height, data }
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Copy of the sub-rectangle; the caller guarantees it lies inside.
    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> RasterImage {
        assert!(x + w <= self.width && y + h <= self.height, "crop out of bounds");
        let mut data = Vec::with_capacity(w as usize * h as usize * 3);
        for row in y..y + h {
            let start = (row as usize * self.width as usize + x as usize) * 3;
            data.extend_from_slice(&self.data[start..start + w as usize * 3]);
        }
        RasterImage { width: w, height: h, data }
    }

    /// Paste `src` with its top-left corner at (x, y); clipped to bounds.
    pub fn paste(&mut self, src: &RasterImage, x: i64, y: i64) {
        for sy in 0..src.height as i64 {
            let dy = y + sy;
            if dy < 0 || dy >= self.height as i64 {
                continue;
            }
            for sx in 0..src.width as i64 {
                let dx = x + sx;
                if dx < 0 || dx >= self.width as i64 {
                    continue;
                }
                self.set_pixel(dx as u32, dy as u32, src.pixel(sx as u32, sy as u32));
            }
        }
    }

    /// Halve both dimensions (ceil) by averaging each 2x2 block, round half up.
    /// Edge blocks with fewer source pixels average what is there.
    pub fn reduce2x(&self) -> RasterImage {
        let ow = self.width.div_ceil(2).max(1);
        let oh = self.height.div_ceil(2).max(1);
        let mut out = vec![0u8; ow as usize * oh as usize * 3];
        for oy in 0..oh {
            for ox in 0..ow {
                let x0 = ox * 2;
                let y0 = oy * 2;
                let x1 = (x0 + 2).min(self.width);
                let y1 = (y0 + 2).min(self.height);
                let count = (x1 - x0) * (y1 - y0);
                let mut sums = [0u32; 3];
                for y in y0..y1 {
                    for x in x0..x1 {
                        let p = self.pixel(x, y);
                        for c in 0..3 {
                            sums[c] += p[c] as u32;
                        }
                    }
                }
                let base = (oy as usize * ow as usize + ox as usize) * 3;
                for c in 0..3 {
                    // round half up: floor(sum/count + 1/2)
                    out[base + c] = ((2 * sums[c] + count) / (2 * count)) as u8;
                }
            }
        }
        RasterImage { width: ow, height: oh, data: out }
    }

    /// Area-average resample to (dst_w, dst_h) with partial-pixel weighting
    /// at box borders, round half up.
    pub fn area_resize(&self, dst_w: u32, dst_h: u32) -> RasterImage {
        assert!(dst_w > 0 && dst_h > 0, "area_resize to zero size");
        if dst_w == self.width && dst_h == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / dst_w as f64;
        let sy = self.height as f64 / dst_h as f64;
        let mut out = vec![0u8; dst_w as usize * dst_h as usize * 3];
        for oy in 0..dst_h {
            let y_lo = oy as f64 * sy;
            let y_hi = (oy + 1) as f64 * sy;
            let iy0 = libm::floor(y_lo) as u32;
            let iy1 = (libm::ceil(y_hi) as u32).min(self.height);
            for ox in 0..dst_w {
                let x_lo = ox as f64 * sx;
                let x_hi = (ox + 1) as f64 * sx;
                let ix0 = libm::floor(x_lo) as u32;
                let ix1 = (libm::ceil(x_hi) as u32).min(self.width);
                let mut acc = [0.0f64; 3];
                let mut weight = 0.0f64;
                for y in iy0..iy1 {
                    let wy = overlap(y as f64, y_lo, y_hi);
                    if wy <= 0.0 {
                        continue;
                    }
                    for x in ix0..ix1 {
                        let wx = overlap(x as f64, x_lo, x_hi);
                        if wx <= 0.0 {
                            continue;
                        }
                        let w = wx * wy;
                        let p = self.pixel(x, y);
                        for c in 0..3 {
                            acc[c] += w * p[c] as f64;
                        }
                        weight += w;
                    }
                }
                let base = (oy as usize * dst_w as usize + ox as usize) * 3;
                for c in 0..3 {
                    let v = libm::floor(acc[c] / weight + 0.5);
                    out[base + c] = clamp_u8(v);
                }
            }
        }
        RasterImage { width: dst_w, height: dst_h, data: out }
    }
}

#[inline]
fn overlap(cell: f64, lo: f64, hi: f64) -> f64 {
    let a = if lo > cell { lo } else { cell };
    let b = if hi < cell + 1.0 { hi } else { cell + 1.0 };
    if b > a {
        b - a
    } else {
        0.0
    }
}

#[inline]
fn clamp_u8(v: f64) -> u8 {
    if v <= 0.0 {
        0
    } else if v >= 255.0 {
        255
    } else {
        v as u8
    }
}

impl GrayImage {
    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        GrayImage { width, height, data: vec![value; width as usize * height as usize] }
    }

    pub fn from_data(width: u32, height: u32, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width as usize * height as usize, "buffer size");
        GrayImage { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// 256-bin intensity histogram.
    pub fn histogram(&self) -> [u64; 256] {
        let mut hist = [0u64; 256];
        for &v in &self.data {
            hist[v as usize] += 1;
        }
        hist
    }

    /// Box blur with a (2r+1)^2 window, border windows clipped to the image,
    /// integer mean with round half up. Radius 0 is the identity.
    pub fn box_blur(&self, radius: u32) -> GrayImage {
        if radius == 0 {
            return self.clone();
        }
        let w = self.width as usize;
        let h = self.height as usize;
        // summed-area table with a zero border row/column
        let mut sat = vec![0u64; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row_sum = 0u64;
            for x in 0..w {
                row_sum += self.data[y * w + x] as u64;
                sat[(y + 1) * (w + 1) + (x + 1)] = sat[y * (w + 1) + (x + 1)] + row_sum;
            }
        }
        let r = radius as usize;
        let mut out = vec![0u8; w * h];
        for y in 0..h {
            let y0 = y.saturating_sub(r);
            let y1 = (y + r + 1).min(h);
            for x in 0..w {
                let x0 = x.saturating_sub(r);
                let x1 = (x + r + 1).min(w);
                let sum = sat[y1 * (w + 1) + x1] + sat[y0 * (w + 1) + x0]
                    - sat[y0 * (w + 1) + x1]
                    - sat[y1 * (w + 1) + x0];
                let count = ((y1 - y0) * (x1 - x0)) as u64;
                out[y * w + x] = ((2 * sum + count) / (2 * count)) as u8;
            }
        }
        GrayImage { width: self.width, height: self.height, data: out }
    }
}
