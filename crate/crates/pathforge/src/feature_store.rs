//! FSTR feature-store files: per-slide patch embeddings with coordinates.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "FSTR" | version u32 = 1 | header JSON
//!   | count x (x i64, y i64) | count x dim x f32
//! ```
//!
//! The header echoes the grid parameters the coordinates came from, so a
//! store can be validated against a slide/encoder pairing without reopening
//! the slide.

use std::path::Path;

use pathforge_core::features::FeatureMatrix;
use pathforge_core::grid::PatchGrid;

use crate::error::{PathforgeError, Result};
use crate::grid_io::parse_json_prefix;

pub const FSTR_MAGIC: &[u8; 4] = b"FSTR";
pub const FSTR_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridEcho {
    pub patch_size: u32,
    pub target_magnification: u32,
    pub overlap: u32,
    pub min_tissue_frac: f64,
    pub level0_patch_extent: u32,
    pub step: u32,
}

impl GridEcho {
    pub fn from_grid(grid: &PatchGrid) -> GridEcho {
        GridEcho {
            patch_size: grid.params.patch_size,
            target_magnification: grid.params.target_magnification,
            overlap: grid.params.overlap,
            min_tissue_frac: grid.params.min_tissue_frac,
            level0_patch_extent: grid.level0_patch_extent,
            step: grid.step,
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
struct StoreHeader {
    slide_id: String,
    encoder_name: String,
    dim: u32,
    count: u64,
    grid: GridEcho,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStore {
    pub slide_id: String,
    pub encoder_name: String,
    pub coords: Vec<(i64, i64)>,
    pub matrix: FeatureMatrix,
    pub grid: GridEcho,
}

impl FeatureStore {
    pub fn dim(&self) -> usize {
        self.matrix.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, &bytes)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        assert_eq!(self.coords.len(), self.matrix.rows(), "coords and rows disagree");
        let header = StoreHeader {
            slide_id: self.slide_id.clone(),
            encoder_name: self.encoder_name.clone(),
            dim: self.matrix.dim as u32,
            count: self.coords.len() as u64,
            grid: self.grid.clone(),
        };
        let mut out = Vec::new();
        out.extend_from_slice(FSTR_MAGIC);
        out.extend_from_slice(&FSTR_VERSION.to_le_bytes());
        out.extend_from_slice(&serde_json::to_vec(&header)?);
        for &(x, y) in &self.coords {
            out.extend_from_slice(&x.to_le_bytes());
            out.extend_from_slice(&y.to_le_bytes());
        }
        for &v in &self.matrix.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<FeatureStore> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => PathforgeError::MissingFile(path.to_path_buf()),
            _ => PathforgeError::Io(e),
        })?;
        if bytes.len() < 8 || &bytes[..4] != FSTR_MAGIC {
            return Err(PathforgeError::BadMagic { path: path.to_path_buf(), expected: "FSTR" });
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FSTR_VERSION {
            return Err(PathforgeError::VersionMismatch { format: "FSTR", version });
        }
        let (header, header_end): (StoreHeader, usize) =
            parse_json_prefix(&bytes[8..]).map_err(|e| PathforgeError::SchemaError {
                path: path.to_path_buf(),
                row: None,
                detail: format!("header: {e}"),
            })?;
        let rest = &bytes[8 + header_end..];
        let count = header.count as usize;
        let dim = header.dim as usize;
        let coord_bytes = count * 16;
        let value_bytes = count * dim * 4;
        if rest.len() != coord_bytes + value_bytes {
            return Err(PathforgeError::TruncatedFile {
                path: path.to_path_buf(),
                detail: format!(
                    "expected {count} coords and {count}x{dim} values ({} bytes), found {}",
                    coord_bytes + value_bytes,
                    rest.len()
                ),
            });
        }
        let coords: Vec<(i64, i64)> = rest[..coord_bytes]
            .chunks_exact(16)
            .map(|c| {
                (
                    i64::from_le_bytes(c[..8].try_into().unwrap()),
                    i64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        let data: Vec<f32> = rest[coord_bytes..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let matrix = FeatureMatrix { dim, data };
        if !matrix.is_finite() {
            return Err(PathforgeError::SchemaError {
                path: path.to_path_buf(),
                row: None,
                detail: "non-finite feature values".to_string(),
            });
        }
        Ok(FeatureStore {
            slide_id: header.slide_id,
            encoder_name: header.encoder_name,
            coords,
            matrix,
            grid: header.grid,
        })
    }

    /// Resumability check: does an existing file hold non-empty features for
    /// this slide and encoder at the right dimension?
    pub fn validates(path: &Path, slide_id: &str, encoder_name: &str, dim: usize) -> bool {
        match FeatureStore::load(path) {
            Ok(store) => {
                store.slide_id == slide_id
                    && store.encoder_name == encoder_name
                    && store.dim() == dim
                    && !store.is_empty()
            }
            Err(_) => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pathforge_core::rng::Rng;

    fn sample_store(seed: u64) -> FeatureStore {
        let mut rng = Rng::seed_from(seed);
        let dim = 8;
        let mut matrix = FeatureMatrix::new(dim);
        let coords: Vec<(i64, i64)> = (0..10).map(|i| (i * 256, (i % 3) * 256)).collect();
        for _ in 0..10 {
            let row: Vec<f32> = (0..dim).map(|_| rng.next_f64() as f32).collect();
            matrix.push_row(&row);
        }
        FeatureStore {
            slide_id: "slide-7".to_string(),
            encoder_name: "stub-stats-64".to_string(),
            coords,
            matrix,
            grid: GridEcho {
                patch_size: 256,
                target_magnification: 20,
                overlap: 0,
                min_tissue_frac: 0.25,
                level0_patch_extent: 256,
                step: 256,
            },
        }
    }

    #[test]
    fn roundtrip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.fstr");
        let store = sample_store(5);
        store.save(&path).unwrap();
        assert_eq!(FeatureStore::load(&path).unwrap(), store);
    }

    #[test]
    fn validates_checks_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.fstr");
        sample_store(6).save(&path).unwrap();
        assert!(FeatureStore::validates(&path, "slide-7", "stub-stats-64", 8));
        assert!(!FeatureStore::validates(&path, "slide-8", "stub-stats-64", 8));
        assert!(!FeatureStore::validates(&path, "slide-7", "other", 8));
        assert!(!FeatureStore::validates(&path, "slide-7", "stub-stats-64", 64));
        assert!(!FeatureStore::validates(Path::new("/nope.fstr"), "slide-7", "stub-stats-64", 8));
    }

    #[test]
    fn truncation_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.fstr");
        sample_store(7).save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(
            FeatureStore::load(&path),
            Err(PathforgeError::TruncatedFile { .. })
        ));
    }
}
