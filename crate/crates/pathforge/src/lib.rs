//! Slide processing and benchmark orchestration on top of `pathforge-core`.
//!
//! This crate owns everything that touches the outside world: the SPYR
//! pyramid container, PGRD coordinate files, FSTR feature stores, GeoJSON
//! mask exchange, the external-encoder wire protocol, the extraction worker
//! pool, task CSV/YAML files, the sweep scheduler with its append-only
//! ledger, the synthetic cohort generator, and the CLI.

pub mod batch;
pub mod cli;
pub mod container;
pub mod encoder;
pub mod error;
pub mod feature_store;
pub mod geojson;
pub mod grid_io;
pub mod mask_io;
pub mod orchestrator;
pub mod slide;
pub mod synth;
pub mod task_io;

pub use error::{ErrorKind, PathforgeError};
pub use slide::Slide;
