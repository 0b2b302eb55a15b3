//! Binary mask to polygon conversion and back.
//!
//! Contours follow pixel cracks on the corner lattice (the marching-squares
//! cells of the binary image), with saddle cells resolved so that diagonally
//! touching foreground stays connected (8-connectivity). Collinear vertices
//! are merged, so a filled rectangle comes out as exactly four corners.
//!
//! Orientation convention: outer rings have positive shoelace sum over the
//! raw (x, y) coordinates (counter-clockwise in the mathematical sense),
//! holes negative (clockwise). Rasterization samples pixel centers with the
//! even-odd rule, which reproduces a traced mask exactly.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::mask::{BitMask, MaskSource, TissueMask};
use crate::seg::SegError;

pub type Ring = Vec<(f64, f64)>;

#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    pub outer: Ring,
    pub holes: Vec<Ring>,
}

/// Tissue outlines in level-0 coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct TissuePolygons {
    pub slide_id: String,
    pub polygons: Vec<Polygon>,
}

/// Twice the signed area (shoelace sum); positive = outer by our convention.
pub fn ring_signed_area2(ring: &[(f64, f64)]) -> f64 {
    let mut sum = 0.0;
    for i in 0..ring.len() {
        let (x1, y1) = ring[i];
        let (x2, y2) = ring[(i + 1) % ring.len()];
        sum += x1 * y2 - x2 * y1;
    }
    sum
}

/// Even-odd point-in-ring test.
pub fn point_in_ring(px: f64, py: f64, ring: &[(f64, f64)]) -> bool {
    let mut inside = false;
    for i in 0..ring.len() {
        let (x1, y1) = ring[i];
        let (x2, y2) = ring[(i + 1) % ring.len()];
        if (y1 <= py && py < y2) || (y2 <= py && py < y1) {
            let t = (py - y1) / (y2 - y1);
            if px < x1 + t * (x2 - x1) {
                inside = !inside;
            }
        }
    }
    inside
}

// Directions on the corner lattice: E, S, W, N.
const DIRS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

#[inline]
fn left_of(dir: usize) -> usize {
    // E->N, S->E, W->S, N->W (screen coordinates, y down)
    match dir {
        0 => 3,
        1 => 0,
        2 => 1,
        _ => 2,
    }
}

/// Trace all boundary loops of a mask. Returned rings are in mask pixel
/// coordinates on the corner lattice; outers have positive shoelace.
pub fn trace_rings(mask: &BitMask) -> Vec<Ring> {
    let w = mask.width as i64;
    let h = mask.height as i64;
    let corners_w = (w + 1) as usize;
    let fg = |x: i64, y: i64| -> bool {
        x >= 0 && x < w && y >= 0 && y < h && mask.get(x as u32, y as u32)
    };
    // up to two outgoing directed edges per corner: (direction, used)
    let mut edges: Vec<[(u8, bool); 2]> = vec![[(u8::MAX, false); 2]; corners_w * (h as usize + 1)];
    let mut push_edge = |cx: i64, cy: i64, dir: u8| {
        let slot = &mut edges[cy as usize * corners_w + cx as usize];
        if slot[0].0 == u8::MAX {
            slot[0] = (dir, false);
        } else {
            debug_assert_eq!(slot[1].0, u8::MAX, "corner with more than two outgoing edges");
            slot[1] = (dir, false);
        }
    };
    for y in 0..h {
        for x in 0..w {
            if !fg(x, y) {
                continue;
            }
            // emit boundary edges with foreground on the right of travel
            if !fg(x, y - 1) {
                push_edge(x, y, 0); // top side, walking east
            }
            if !fg(x + 1, y) {
                push_edge(x + 1, y, 1); // right side, walking south
            }
            if !fg(x, y + 1) {
                push_edge(x + 1, y + 1, 2); // bottom side, walking west
            }
            if !fg(x - 1, y) {
                push_edge(x, y + 1, 3); // left side, walking north
            }
        }
    }
    let mut rings = Vec::new();
    for start_idx in 0..edges.len() {
        for slot in 0..2 {
            if edges[start_idx][slot].0 == u8::MAX || edges[start_idx][slot].1 {
                continue;
            }
            // walk a loop from this unused edge
            let mut ring: Ring = Vec::new();
            let mut cx = (start_idx % corners_w) as i64;
            let mut cy = (start_idx / corners_w) as i64;
            let mut dir = edges[start_idx][slot].0 as usize;
            edges[start_idx][slot].1 = true;
            let (start_x, start_y) = (cx, cy);
            loop {
                ring.push((cx as f64, cy as f64));
                cx += DIRS[dir].0;
                cy += DIRS[dir].1;
                if cx == start_x && cy == start_y {
                    break;
                }
                let cell = &mut edges[cy as usize * corners_w + cx as usize];
                let candidates: Vec<usize> = (0..2)
                    .filter(|&i| cell[i].0 != u8::MAX && !cell[i].1)
                    .collect();
                let chosen = match candidates.len() {
                    1 => candidates[0],
                    2 => {
                        // saddle: take the left turn to keep diagonal
                        // foreground connected
                        let want = left_of(dir) as u8;
                        if cell[candidates[0]].0 == want {
                            candidates[0]
                        } else {
                            debug_assert_eq!(cell[candidates[1]].0, want);
                            candidates[1]
                        }
                    }
                    _ => unreachable!("open boundary: no outgoing edge at ({cx},{cy})"),
                };
                dir = cell[chosen].0 as usize;
                cell[chosen].1 = true;
            }
            rings.push(merge_collinear(ring));
        }
    }
    rings
}

/// Drop vertices whose neighbors are collinear with them.
fn merge_collinear(ring: Ring) -> Ring {
    let n = ring.len();
    if n < 4 {
        return ring;
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (px, py) = ring[(i + n - 1) % n];
        let (cx, cy) = ring[i];
        let (nx, ny) = ring[(i + 1) % n];
        let cross = (cx - px) * (ny - py) - (cy - py) * (nx - px);
        if cross != 0.0 {
            out.push((cx, cy));
        }
    }
    out
}

/// Extract polygons (outer rings with grouped holes) in level-0 coordinates.
pub fn mask_to_polygons(mask: &TissueMask) -> Result<TissuePolygons, SegError> {
    if mask.mask.count_foreground() == 0 {
        return Err(SegError::EmptyMask);
    }
    let rings = trace_rings(&mask.mask);
    let scale = mask.scale;
    let mut outers: Vec<(Ring, f64)> = Vec::new();
    let mut holes: Vec<Ring> = Vec::new();
    for ring in rings {
        let area2 = ring_signed_area2(&ring);
        let scaled: Ring = ring.iter().map(|&(x, y)| (x * scale, y * scale)).collect();
        if area2 > 0.0 {
            outers.push((scaled, area2));
        } else {
            holes.push(scaled);
        }
    }
    let mut polygons: Vec<Polygon> =
        outers.iter().map(|(r, _)| Polygon { outer: r.clone(), holes: Vec::new() }).collect();
    for hole in holes {
        // probe point just inside the hole: first edge midpoint nudged to the
        // left of travel (the hole interior side)
        let (x1, y1) = hole[0];
        let (x2, y2) = hole[1];
        let (mx, my) = ((x1 + x2) / 2.0, (y1 + y2) / 2.0);
        let (dx, dy) = (x2 - x1, y2 - y1);
        let len = libm::sqrt(dx * dx + dy * dy);
        let (px, py) = (mx + dy / len * 0.5 * scale, my - dx / len * 0.5 * scale);
        let mut parent: Option<usize> = None;
        let mut parent_area = f64::INFINITY;
        for (i, (ring, area2)) in outers.iter().enumerate() {
            if *area2 < parent_area && point_in_ring(px, py, ring) {
                parent = Some(i);
                parent_area = *area2;
            }
        }
        match parent {
            Some(i) => polygons[i].holes.push(hole),
            None => {
                debug_assert!(false, "hole without a containing outer ring");
                if let Some(first) = polygons.first_mut() {
                    first.holes.push(hole);
                }
            }
        }
    }
    Ok(TissuePolygons { slide_id: mask.slide_id.clone(), polygons })
}

/// Rasterize polygons back to a mask grid: pixel centers, even-odd rule.
/// `width`/`height` are the target mask dimensions and `scale` its level-0
/// pixels per mask pixel.
pub fn rasterize_polygons(
    polys: &TissuePolygons,
    width: u32,
    height: u32,
    scale: f64,
) -> TissueMask {
    let mut mask = BitMask::new(width, height);
    let mut edges: Vec<(f64, f64, f64, f64)> = Vec::new();
    for poly in &polys.polygons {
        for ring in core::iter::once(&poly.outer).chain(poly.holes.iter()) {
            for i in 0..ring.len() {
                let (x1, y1) = ring[i];
                let (x2, y2) = ring[(i + 1) % ring.len()];
                if y1 != y2 {
                    edges.push((x1, y1, x2, y2));
                }
            }
        }
    }
    let mut crossings: Vec<f64> = Vec::new();
    for row in 0..height {
        let py = (row as f64 + 0.5) * scale;
        crossings.clear();
        for &(x1, y1, x2, y2) in &edges {
            if (y1 <= py && py < y2) || (y2 <= py && py < y1) {
                let t = (py - y1) / (y2 - y1);
                crossings.push(x1 + t * (x2 - x1));
            }
        }
        crossings.sort_by(|a, b| a.partial_cmp(b).expect("finite crossings"));
        for pair in crossings.chunks_exact(2) {
            let (lo, hi) = (pair[0], pair[1]);
            // pixel centers (x + 0.5) * scale inside [lo, hi)
            let x_start = libm::ceil(lo / scale - 0.5).max(0.0) as i64;
            let x_end = libm::ceil(hi / scale - 0.5).min(width as f64) as i64;
            for x in x_start..x_end {
                mask.set(x as u32, row, true);
            }
        }
    }
    TissueMask { slide_id: polys.slide_id.clone(), mask, scale, source: MaskSource::External }
}
