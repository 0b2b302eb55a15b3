//! PGRD patch-coordinate files.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "PGRD" | version u32 = 1 | header JSON | count x (x i64, y i64)
//! ```
//!
//! The header is a single JSON object parsed in streaming fashion, so no
//! length prefix is needed; `count` in the header is authoritative for the
//! record section.

use std::path::Path;

use pathforge_core::grid::{PatchGrid, PatchParams};

use crate::error::{PathforgeError, Result};

pub const PGRD_MAGIC: &[u8; 4] = b"PGRD";
pub const PGRD_VERSION: u32 = 1;

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
struct GridHeader {
    slide_id: String,
    params: PatchParams,
    level0_patch_extent: u32,
    step: u32,
    read_level: u32,
    resize_factor: f64,
    count: u64,
}

pub fn save_grid(grid: &PatchGrid, path: &Path) -> Result<()> {
    if grid.coords.is_empty() {
        return Err(pathforge_core::grid::GridError::NoPatches.into());
    }
    let header = GridHeader {
        slide_id: grid.slide_id.clone(),
        params: grid.params.clone(),
        level0_patch_extent: grid.level0_patch_extent,
        step: grid.step,
        read_level: grid.read_level,
        resize_factor: grid.resize_factor,
        count: grid.coords.len() as u64,
    };
    let mut out = Vec::new();
    out.extend_from_slice(PGRD_MAGIC);
    out.extend_from_slice(&PGRD_VERSION.to_le_bytes());
    out.extend_from_slice(&serde_json::to_vec(&header)?);
    for &(x, y) in &grid.coords {
        out.extend_from_slice(&x.to_le_bytes());
        out.extend_from_slice(&y.to_le_bytes());
    }
    std::fs::write(path, &out)?;
    Ok(())
}

pub fn load_grid(path: &Path) -> Result<PatchGrid> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => PathforgeError::MissingFile(path.to_path_buf()),
        _ => PathforgeError::Io(e),
    })?;
    if bytes.len() < 8 || &bytes[..4] != PGRD_MAGIC {
        return Err(PathforgeError::BadMagic { path: path.to_path_buf(), expected: "PGRD" });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != PGRD_VERSION {
        return Err(PathforgeError::VersionMismatch { format: "PGRD", version });
    }
    let (header, header_end): (GridHeader, usize) = parse_json_prefix(&bytes[8..])
        .map_err(|e| PathforgeError::SchemaError {
            path: path.to_path_buf(),
            row: None,
            detail: format!("header: {e}"),
        })?;
    let records = &bytes[8 + header_end..];
    let expected = header.count as usize * 16;
    if records.len() != expected {
        return Err(PathforgeError::TruncatedFile {
            path: path.to_path_buf(),
            detail: format!(
                "header promises {} coordinates ({expected} bytes), found {} bytes",
                header.count,
                records.len()
            ),
        });
    }
    let coords = records
        .chunks_exact(16)
        .map(|c| {
            (
                i64::from_le_bytes(c[..8].try_into().unwrap()),
                i64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    Ok(PatchGrid {
        slide_id: header.slide_id,
        params: header.params,
        level0_patch_extent: header.level0_patch_extent,
        step: header.step,
        coords,
        read_level: header.read_level,
        resize_factor: header.resize_factor,
    })
}

/// Parse one JSON value from the front of a byte slice, returning the value
/// and the number of bytes it consumed.
pub(crate) fn parse_json_prefix<T: serde::de::DeserializeOwned>(
    bytes: &[u8],
) -> serde_json::Result<(T, usize)> {
    let mut stream = serde_json::Deserializer::from_slice(bytes).into_iter::<T>();
    match stream.next() {
        Some(Ok(value)) => Ok((value, stream.byte_offset())),
        Some(Err(e)) => Err(e),
        None => Err(serde::de::Error::custom("empty header")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_grid() -> PatchGrid {
        PatchGrid {
            slide_id: "s1".to_string(),
            params: PatchParams::default(),
            level0_patch_extent: 256,
            step: 256,
            coords: (0..4)
                .flat_map(|y| (0..4).map(move |x| (x * 256, y * 256)))
                .collect(),
            read_level: 0,
            resize_factor: 1.0,
        }
    }

    #[test]
    fn roundtrip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.pgrd");
        let grid = sample_grid();
        save_grid(&grid, &path).unwrap();
        assert_eq!(load_grid(&path).unwrap(), grid);
    }

    #[test]
    fn roundtrip_preserves_awkward_floats() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.pgrd");
        let mut grid = sample_grid();
        grid.resize_factor = 2.0 / 3.0;
        grid.params.min_tissue_frac = 0.1 + 0.2;
        save_grid(&grid, &path).unwrap();
        let back = load_grid(&path).unwrap();
        assert_eq!(back.resize_factor.to_bits(), grid.resize_factor.to_bits());
        assert_eq!(
            back.params.min_tissue_frac.to_bits(),
            grid.params.min_tissue_frac.to_bits()
        );
    }

    #[test]
    fn empty_grid_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.pgrd");
        let mut grid = sample_grid();
        grid.coords.clear();
        match save_grid(&grid, &path) {
            Err(PathforgeError::Grid(pathforge_core::grid::GridError::NoPatches)) => {}
            other => panic!("expected NoPatches, got {other:?}"),
        }
    }

    #[test]
    fn truncated_records_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.pgrd");
        save_grid(&sample_grid(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 24]).unwrap();
        match load_grid(&path) {
            Err(PathforgeError::TruncatedFile { .. }) => {}
            other => panic!("expected TruncatedFile, got {other:?}"),
        }
    }

    #[test]
    fn wrong_magic_and_version_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pgrd");
        std::fs::write(&path, b"GRDP\x01\x00\x00\x00{}").unwrap();
        assert!(matches!(load_grid(&path), Err(PathforgeError::BadMagic { .. })));
        std::fs::write(&path, b"PGRD\x02\x00\x00\x00{}").unwrap();
        assert!(matches!(
            load_grid(&path),
            Err(PathforgeError::VersionMismatch { format: "PGRD", version: 2 })
        ));
    }
}
