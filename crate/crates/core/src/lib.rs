//! Algorithmic core for the pathforge slide-processing and benchmarking toolkit.
//!
//! Everything in this crate is pure computation: no files, no threads, no
//! clocks. All randomness flows through the seeded [`rng::Rng`] stream and all
//! transcendental math goes through `libm`, so results are bit-reproducible
//! across platforms and worker counts. The companion `pathforge` crate layers
//! file formats, process pools, and the CLI on top.
//!
//! The crate is `no_std` (with `alloc`) outside of tests.

#![cfg_attr(not(test), no_std)]
// indexed loops are the house style in the numeric kernels: most walk two
// or three arrays in lockstep where iterator chains obscure the math
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod contour;
pub mod cox;
pub mod eval;
pub mod features;
pub mod grid;
pub mod linalg;
pub mod mag;
pub mod mask;
pub mod metrics;
pub mod mil;
pub mod probe;
pub mod raster;
pub mod retrieval;
pub mod rng;
pub mod seg;
pub mod splits;
pub mod sweep;

pub use mag::{infer_magnification, MagInfo, MagSource};
pub use mask::TissueMask;
pub use raster::{GrayImage, RasterImage};
pub use rng::Rng;
