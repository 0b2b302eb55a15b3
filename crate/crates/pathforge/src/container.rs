//! The SPYR pyramid container.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "SPYR" | version u32 = 1 | header_len u32 | header JSON
//!   | tile index: per level, row-major {offset u64, len u64}
//!   | tile blobs, each zlib-compressed raw RGB
//! ```
//!
//! Edge tiles are stored padded to the full tile size with white; the level
//! dimensions in the header are authoritative. Offsets are absolute file
//! offsets and validated against the file length at open, so a corrupt index
//! is rejected before any pixel is read. Tile pixels themselves are only
//! read on demand.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;
use flate2::Compression;
use pathforge_core::raster::RasterImage;

use crate::error::{PathforgeError, Result};

pub const SPYR_MAGIC: &[u8; 4] = b"SPYR";
pub const SPYR_VERSION: u32 = 1;

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct LevelDims {
    pub w: u32,
    pub h: u32,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SpyrHeader {
    pub slide_id: String,
    pub tile_size: u32,
    pub levels: Vec<LevelDims>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Clone, Copy, Debug)]
pub struct TileEntry {
    pub offset: u64,
    pub len: u64,
}

pub struct Container {
    file: File,
    pub path: PathBuf,
    pub header: SpyrHeader,
    /// Per level, row-major tile entries.
    pub index: Vec<Vec<TileEntry>>,
    pub downsamples: Vec<f64>,
}

fn tiles_across(dim: u32, tile_size: u32) -> u32 {
    dim.div_ceil(tile_size)
}

#[cfg(unix)]
fn read_at(file: &File, offset: u64, buf: &mut [u8]) -> std::io::Result<()> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, offset)
}

#[cfg(windows)]
fn read_at(file: &File, offset: u64, buf: &mut [u8]) -> std::io::Result<()> {
    use std::os::windows::fs::FileExt;
    let mut done = 0usize;
    while done < buf.len() {
        let n = file.seek_read(&mut buf[done..], offset + done as u64)?;
        if n == 0 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "tile read past end of file",
            ));
        }
        done += n;
    }
    Ok(())
}

impl Container {
    pub fn open(path: &Path) -> Result<Container> {
        let mut file = File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => PathforgeError::MissingFile(path.to_path_buf()),
            _ => PathforgeError::Io(e),
        })?;
        let file_len = file.metadata()?.len();
        let mut magic = [0u8; 4];
        file.read_exact(&mut magic)?;
        if &magic != SPYR_MAGIC {
            return Err(PathforgeError::BadMagic { path: path.to_path_buf(), expected: "SPYR" });
        }
        let version = read_u32(&mut file)?;
        if version != SPYR_VERSION {
            return Err(PathforgeError::VersionMismatch { format: "SPYR", version });
        }
        let header_len = read_u32(&mut file)? as usize;
        let mut header_bytes = vec![0u8; header_len];
        file.read_exact(&mut header_bytes)?;
        let header: SpyrHeader = serde_json::from_slice(&header_bytes)?;
        validate_header(path, &header)?;
        let mut index = Vec::with_capacity(header.levels.len());
        for dims in &header.levels {
            let count =
                tiles_across(dims.w, header.tile_size) as usize * tiles_across(dims.h, header.tile_size) as usize;
            let mut entries = Vec::with_capacity(count);
            let mut buf = [0u8; 16];
            for _ in 0..count {
                file.read_exact(&mut buf)?;
                let offset = u64::from_le_bytes(buf[..8].try_into().unwrap());
                let len = u64::from_le_bytes(buf[8..].try_into().unwrap());
                if len == 0 || offset.checked_add(len).is_none_or(|end| end > file_len) {
                    return Err(PathforgeError::CorruptIndex {
                        path: path.to_path_buf(),
                        detail: format!(
                            "tile at offset {offset} with length {len} exceeds file length {file_len}"
                        ),
                    });
                }
                entries.push(TileEntry { offset, len });
            }
            index.push(entries);
        }
        let downsamples = compute_downsamples(&header.levels);
        Ok(Container { file, path: path.to_path_buf(), header, index, downsamples })
    }

    /// Decompress one tile to exactly tile_size^2 RGB bytes.
    pub fn read_tile(&self, level: u32, tile_x: u32, tile_y: u32) -> Result<Vec<u8>> {
        let dims = &self.header.levels[level as usize];
        let across = tiles_across(dims.w, self.header.tile_size);
        let entry = self.index[level as usize][(tile_y * across + tile_x) as usize];
        let mut compressed = vec![0u8; entry.len as usize];
        read_at(&self.file, entry.offset, &mut compressed)?;
        let expected = self.header.tile_size as usize * self.header.tile_size as usize * 3;
        let mut raw = Vec::with_capacity(expected);
        let mut decoder = ZlibDecoder::new(&compressed[..]);
        decoder.read_to_end(&mut raw).map_err(|e| PathforgeError::CorruptTile {
            level,
            tile: (tile_y * across + tile_x) as usize,
            detail: format!("zlib: {e}"),
        })?;
        if raw.len() != expected {
            return Err(PathforgeError::CorruptTile {
                level,
                tile: (tile_y * across + tile_x) as usize,
                detail: format!("decompressed to {} bytes, expected {expected}", raw.len()),
            });
        }
        Ok(raw)
    }

    /// Assemble a region. `x`/`y` are level-0 coordinates; `w`/`h` are pixels
    /// at the requested level. Pixels outside the level come back white.
    pub fn read_region(&self, level: u32, x: i64, y: i64, w: u32, h: u32) -> Result<RasterImage> {
        if level as usize >= self.header.levels.len() {
            return Err(PathforgeError::BadLevel { level, levels: self.header.levels.len() });
        }
        if w == 0 || h == 0 {
            return Err(PathforgeError::ZeroArea);
        }
        let ds = self.downsamples[level as usize];
        let lx = (x as f64 / ds).floor() as i64;
        let ly = (y as f64 / ds).floor() as i64;
        let dims = &self.header.levels[level as usize];
        let tile = self.header.tile_size as i64;
        let mut out = RasterImage::filled(w, h, [255, 255, 255]);
        let x2 = lx + w as i64;
        let y2 = ly + h as i64;
        let col_start = lx.div_euclid(tile).max(0);
        let col_end = (x2 - 1).div_euclid(tile) + 1;
        let row_start = ly.div_euclid(tile).max(0);
        let row_end = (y2 - 1).div_euclid(tile) + 1;
        let cols = tiles_across(dims.w, self.header.tile_size) as i64;
        let rows = tiles_across(dims.h, self.header.tile_size) as i64;
        for tr in row_start..row_end.min(rows) {
            for tc in col_start..col_end.min(cols) {
                let raw = self.read_tile(level, tc as u32, tr as u32)?;
                let tile_x0 = tc * tile;
                let tile_y0 = tr * tile;
                // clip the tile to the authoritative level dims, then to the
                // requested window
                let left = lx.max(tile_x0);
                let top = ly.max(tile_y0);
                let right = x2.min(tile_x0 + tile).min(dims.w as i64);
                let bottom = y2.min(tile_y0 + tile).min(dims.h as i64);
                if left >= right || top >= bottom {
                    continue;
                }
                for row in top..bottom {
                    let src_start =
                        ((row - tile_y0) as usize * tile as usize + (left - tile_x0) as usize) * 3;
                    let dst_start = ((row - ly) as usize * w as usize + (left - lx) as usize) * 3;
                    let byte_len = (right - left) as usize * 3;
                    out.data[dst_start..dst_start + byte_len]
                        .copy_from_slice(&raw[src_start..src_start + byte_len]);
                }
            }
        }
        Ok(out)
    }
}

fn validate_header(path: &Path, header: &SpyrHeader) -> Result<()> {
    let bad = |detail: String| PathforgeError::InconsistentPyramid {
        path: path.to_path_buf(),
        detail,
    };
    if header.levels.is_empty() {
        return Err(bad("no levels".to_string()));
    }
    if header.tile_size < 64 || !header.tile_size.is_power_of_two() {
        return Err(bad(format!("tile_size {} is not a power of two >= 64", header.tile_size)));
    }
    for pair in header.levels.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.w == 0 || b.h == 0 {
            return Err(bad("zero-sized level".to_string()));
        }
        if b.w > a.w.div_ceil(2) + 1 || b.h > a.h.div_ceil(2) + 1 {
            return Err(bad(format!(
                "level {}x{} is larger than the near-dyadic bound under {}x{}",
                b.w, b.h, a.w, a.h
            )));
        }
    }
    Ok(())
}

/// OpenSlide-style downsample: mean of the width and height ratios.
pub fn compute_downsamples(levels: &[LevelDims]) -> Vec<f64> {
    let l0 = &levels[0];
    levels
        .iter()
        .map(|l| (l0.w as f64 / l.w as f64 + l0.h as f64 / l.h as f64) / 2.0)
        .collect()
}

fn read_u32(file: &mut File) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    file.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

/// Write a pyramid container. Level 0 is the image itself, deeper levels are
/// successive 2x area-averaged reductions; the requested level count stops
/// early once a level bottoms out at 1x1.
pub fn write_pyramid(
    image: &RasterImage,
    tile_size: u32,
    n_levels: u32,
    metadata: &BTreeMap<String, String>,
    slide_id: &str,
    path: &Path,
) -> Result<u32> {
    assert!(n_levels >= 1, "n_levels must be at least 1");
    assert!(
        tile_size >= 64 && tile_size.is_power_of_two(),
        "tile_size must be a power of two >= 64"
    );
    let mut levels: Vec<RasterImage> = vec![image.clone()];
    while (levels.len() as u32) < n_levels {
        let prev = levels.last().unwrap();
        if prev.width == 1 && prev.height == 1 {
            break;
        }
        levels.push(prev.reduce2x());
    }
    let header = SpyrHeader {
        slide_id: slide_id.to_string(),
        tile_size,
        levels: levels.iter().map(|l| LevelDims { w: l.width, h: l.height }).collect(),
        metadata: metadata.clone(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    // compress all tiles first so offsets are known
    let mut blobs: Vec<Vec<u8>> = Vec::new();
    let mut counts_per_level = Vec::new();
    for level in &levels {
        let tx = tiles_across(level.width, tile_size);
        let ty = tiles_across(level.height, tile_size);
        counts_per_level.push((tx * ty) as usize);
        for tile_row in 0..ty {
            for tile_col in 0..tx {
                let mut tile = RasterImage::filled(tile_size, tile_size, [255, 255, 255]);
                let x0 = tile_col * tile_size;
                let y0 = tile_row * tile_size;
                let w = tile_size.min(level.width - x0);
                let h = tile_size.min(level.height - y0);
                tile.paste(&level.crop(x0, y0, w, h), 0, 0);
                let mut encoder = ZlibEncoder::new(Vec::new(), Compression::default());
                encoder.write_all(&tile.data)?;
                blobs.push(encoder.finish()?);
            }
        }
    }
    let total_tiles: usize = counts_per_level.iter().sum();
    let index_start = 4 + 4 + 4 + header_bytes.len() as u64;
    let blobs_start = index_start + total_tiles as u64 * 16;
    let mut out = Vec::new();
    out.extend_from_slice(SPYR_MAGIC);
    out.extend_from_slice(&SPYR_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    let mut offset = blobs_start;
    for blob in &blobs {
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
        offset += blob.len() as u64;
    }
    for blob in &blobs {
        out.extend_from_slice(blob);
    }
    std::fs::write(path, &out)?;
    Ok(levels.len() as u32)
}
