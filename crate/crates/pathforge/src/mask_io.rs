//! Mask snapshots: an 8-bit PNG (0/255) plus a JSON sidecar carrying the
//! scale and slide id.

use std::path::Path;

use pathforge_core::mask::{BitMask, MaskSource, TissueMask};

use crate::error::{PathforgeError, Result};

#[derive(serde::Serialize, serde::Deserialize)]
struct MaskSidecar {
    slide_id: String,
    scale: f64,
}

pub fn save_mask(mask: &TissueMask, png_path: &Path) -> Result<()> {
    let data: Vec<u8> = mask.mask.data.iter().map(|&v| if v { 255 } else { 0 }).collect();
    let file = std::fs::File::create(png_path)?;
    let mut encoder =
        png::Encoder::new(std::io::BufWriter::new(file), mask.mask.width, mask.mask.height);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer =
        encoder.write_header().map_err(|e| PathforgeError::PngDecode(e.to_string()))?;
    writer
        .write_image_data(&data)
        .map_err(|e| PathforgeError::PngDecode(e.to_string()))?;
    let sidecar = MaskSidecar { slide_id: mask.slide_id.clone(), scale: mask.scale };
    std::fs::write(
        png_path.with_extension("mask.json"),
        serde_json::to_vec_pretty(&sidecar)?,
    )?;
    Ok(())
}

/// Load a mask snapshot; any nonzero pixel is foreground. Loaded masks are
/// external by definition (they may have been edited).
pub fn load_mask(png_path: &Path) -> Result<TissueMask> {
    let img = crate::slide::decode_png(png_path)?;
    let data: Vec<bool> = img.data.chunks_exact(3).map(|px| px[0] > 0).collect();
    let sidecar_path = png_path.with_extension("mask.json");
    let sidecar: MaskSidecar = serde_json::from_slice(&std::fs::read(&sidecar_path).map_err(
        |e| match e.kind() {
            std::io::ErrorKind::NotFound => PathforgeError::MissingFile(sidecar_path.clone()),
            _ => PathforgeError::Io(e),
        },
    )?)?;
    Ok(TissueMask {
        slide_id: sidecar.slide_id,
        mask: BitMask { width: img.width, height: img.height, data },
        scale: sidecar.scale,
        source: MaskSource::External,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mut mask = BitMask::new(40, 30);
        for y in 5..20 {
            for x in 10..35 {
                mask.set(x, y, true);
            }
        }
        let tm = TissueMask {
            slide_id: "s".to_string(),
            mask,
            scale: 2.5,
            source: MaskSource::OtsuPipeline,
        };
        save_mask(&tm, &path).unwrap();
        let back = load_mask(&path).unwrap();
        assert_eq!(back.mask, tm.mask);
        assert_eq!(back.scale, 2.5);
        assert_eq!(back.slide_id, "s");
        assert_eq!(back.source, MaskSource::External);
    }
}
