//! The slide handle: a SPYR container or a flat PNG with an optional
//! `<name>.meta.json` sidecar, behind one region-read interface.
//!
//! Handles are immutable after open and safe to share across workers: the
//! container path uses positioned reads with no seek state, the flat path
//! decodes once into an immutable buffer.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use pathforge_core::mag::{infer_magnification, MagInfo};
use pathforge_core::mask::{MaskSource, TissueMask};
use pathforge_core::raster::RasterImage;
use pathforge_core::seg::{segment_thumbnail, SegParams};

use crate::container::Container;
use crate::error::{PathforgeError, Result};

const PNG_MAGIC: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

enum Backend {
    Container(Container),
    Flat { path: std::path::PathBuf, decoded: OnceLock<RasterImage> },
}

pub struct Slide {
    backend: Backend,
    slide_id: String,
    metadata: BTreeMap<String, String>,
    levels: Vec<(u32, u32)>,
    downsamples: Vec<f64>,
    mpp_override: Option<f64>,
}

impl Slide {
    pub fn open(path: &Path) -> Result<Slide> {
        Slide::open_with_override(path, None)
    }

    /// Open a slide, optionally pinning the level-0 resolution (microns per
    /// pixel) for magnification inference.
    pub fn open_with_override(path: &Path, mpp_override: Option<f64>) -> Result<Slide> {
        if !path.exists() {
            return Err(PathforgeError::MissingFile(path.to_path_buf()));
        }
        let mut magic = [0u8; 8];
        {
            use std::io::Read;
            let mut f = std::fs::File::open(path)?;
            let n = f.read(&mut magic)?;
            if n < 4 {
                return Err(PathforgeError::BadMagic {
                    path: path.to_path_buf(),
                    expected: "SPYR or PNG",
                });
            }
        }
        if &magic[..4] == crate::container::SPYR_MAGIC {
            let container = Container::open(path)?;
            let levels = container.header.levels.iter().map(|l| (l.w, l.h)).collect();
            let downsamples = container.downsamples.clone();
            Ok(Slide {
                slide_id: container.header.slide_id.clone(),
                metadata: container.header.metadata.clone(),
                levels,
                downsamples,
                backend: Backend::Container(container),
                mpp_override,
            })
        } else if magic == PNG_MAGIC {
            let (width, height) = png_dimensions(path)?;
            let slide_id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "slide".to_string());
            let metadata = read_sidecar(path)?;
            Ok(Slide {
                backend: Backend::Flat { path: path.to_path_buf(), decoded: OnceLock::new() },
                slide_id,
                metadata,
                levels: vec![(width, height)],
                downsamples: vec![1.0],
                mpp_override,
            })
        } else {
            Err(PathforgeError::BadMagic { path: path.to_path_buf(), expected: "SPYR or PNG" })
        }
    }

    pub fn slide_id(&self) -> &str {
        &self.slide_id
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    /// (width, height) of a level.
    pub fn level_dimensions(&self, level: u32) -> Result<(u32, u32)> {
        self.levels
            .get(level as usize)
            .copied()
            .ok_or(PathforgeError::BadLevel { level, levels: self.levels.len() })
    }

    pub fn downsamples(&self) -> &[f64] {
        &self.downsamples
    }

    pub fn magnification(&self) -> Result<MagInfo> {
        Ok(infer_magnification(&self.metadata, self.mpp_override)?)
    }

    /// Read a region: (x, y) in level-0 coordinates, (w, h) in pixels at the
    /// requested level. Out-of-bounds pixels are white.
    pub fn read_region(&self, level: u32, x: i64, y: i64, w: u32, h: u32) -> Result<RasterImage> {
        match &self.backend {
            Backend::Container(c) => c.read_region(level, x, y, w, h),
            Backend::Flat { .. } => {
                if level != 0 {
                    return Err(PathforgeError::BadLevel { level, levels: 1 });
                }
                if w == 0 || h == 0 {
                    return Err(PathforgeError::ZeroArea);
                }
                let full = self.flat_decoded()?;
                let mut out = RasterImage::filled(w, h, [255, 255, 255]);
                out.paste(full, -x, -y);
                Ok(out)
            }
        }
    }

    fn flat_decoded(&self) -> Result<&RasterImage> {
        match &self.backend {
            Backend::Flat { path, decoded, .. } => {
                if let Some(img) = decoded.get() {
                    return Ok(img);
                }
                let img = decode_png(path)?;
                Ok(decoded.get_or_init(|| img))
            }
            Backend::Container(_) => unreachable!("flat_decoded on container"),
        }
    }

    /// Thumbnail from the smallest level still at least `max_dim` wide/tall,
    /// area-averaged so max(w, h) == max_dim exactly. Returns the image and
    /// the level-0-pixels-per-thumbnail-pixel scale. Slides smaller than
    /// `max_dim` come back unscaled.
    pub fn thumbnail(&self, max_dim: u32) -> Result<(RasterImage, f64)> {
        assert!(max_dim >= 64, "thumbnail max_dim must be at least 64");
        let mut chosen = 0usize;
        for (i, &(w, h)) in self.levels.iter().enumerate() {
            if w.max(h) >= max_dim {
                chosen = i;
            }
        }
        let (lw, lh) = self.levels[chosen];
        let level_img = self.read_region(chosen as u32, 0, 0, lw, lh)?;
        let (w0, _) = self.levels[0];
        if lw.max(lh) <= max_dim {
            let scale = w0 as f64 / lw as f64;
            return Ok((level_img, scale));
        }
        let (tw, th) = if lw >= lh {
            (max_dim, ((lh as f64 * max_dim as f64 / lw as f64).round() as u32).max(1))
        } else {
            ((((lw as f64) * max_dim as f64 / lh as f64).round() as u32).max(1), max_dim)
        };
        let thumb = level_img.area_resize(tw, th);
        let scale = w0 as f64 / tw as f64;
        Ok((thumb, scale))
    }

    /// Full segmentation pipeline: thumbnail, saturation, blur, threshold,
    /// morphology, component and hole filtering.
    pub fn segment_tissue(&self, params: &SegParams) -> Result<TissueMask> {
        let (thumb, scale) = self.thumbnail(params.thumb_max_dim)?;
        let mask = segment_thumbnail(&thumb, params)?;
        Ok(TissueMask {
            slide_id: self.slide_id.clone(),
            mask,
            scale,
            source: MaskSource::OtsuPipeline,
        })
    }
}

/// Load one planned patch: read the level-0 rectangle from the grid's read
/// level and area-average down to exactly patch_size^2. Deterministic.
pub fn load_patch(
    slide: &Slide,
    grid: &pathforge_core::grid::PatchGrid,
    index: usize,
) -> Result<RasterImage> {
    let (x, y, _) = grid.patch_rect(index)?;
    let level_px = (grid.params.patch_size as f64 * grid.resize_factor).round() as u32;
    let region = slide.read_region(grid.read_level, x, y, level_px, level_px)?;
    Ok(region.area_resize(grid.params.patch_size, grid.params.patch_size))
}

fn png_dimensions(path: &Path) -> Result<(u32, u32)> {
    let file = std::fs::File::open(path)?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let reader = decoder.read_info().map_err(|e| PathforgeError::PngDecode(e.to_string()))?;
    let info = reader.info();
    Ok((info.width, info.height))
}

pub(crate) fn decode_png(path: &Path) -> Result<RasterImage> {
    let file = std::fs::File::open(path)?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| PathforgeError::PngDecode(e.to_string()))?;
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| PathforgeError::PngDecode(e.to_string()))?;
    buf.truncate(info.buffer_size());
    if info.bit_depth != png::BitDepth::Eight {
        return Err(PathforgeError::PngDecode(format!(
            "only 8-bit PNGs are supported, got {:?}",
            info.bit_depth
        )));
    }
    let (w, h) = (info.width, info.height);
    let rgb = match info.color_type {
        png::ColorType::Rgb => buf,
        png::ColorType::Rgba => {
            buf.chunks_exact(4).flat_map(|px| [px[0], px[1], px[2]]).collect()
        }
        png::ColorType::Grayscale => buf.iter().flat_map(|&v| [v, v, v]).collect(),
        png::ColorType::GrayscaleAlpha => {
            buf.chunks_exact(2).flat_map(|px| [px[0], px[0], px[0]]).collect()
        }
        other => {
            return Err(PathforgeError::PngDecode(format!("unsupported color type {other:?}")))
        }
    };
    Ok(RasterImage::from_data(w, h, rgb))
}

/// `slide.png` pairs with `slide.meta.json`; a missing sidecar is an empty
/// metadata map. Numeric JSON values are stringified.
fn read_sidecar(png_path: &Path) -> Result<BTreeMap<String, String>> {
    let sidecar = png_path.with_extension("meta.json");
    if !sidecar.exists() {
        return Ok(BTreeMap::new());
    }
    let raw: BTreeMap<String, serde_json::Value> =
        serde_json::from_slice(&std::fs::read(&sidecar)?)?;
    Ok(raw
        .into_iter()
        .map(|(k, v)| {
            let s = match v {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            };
            (k, s)
        })
        .collect())
}
