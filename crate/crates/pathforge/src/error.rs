//! Crate-wide error type with an exit-code classification: validation
//! failures (bad inputs, malformed files, incompatible requests) exit 1,
//! runtime failures (I/O mid-run, child processes dying) exit 2.

use std::path::PathBuf;

use pathforge_core::cox::CoxError;
use pathforge_core::eval::EvalError;
use pathforge_core::features::FeatureError;
use pathforge_core::grid::GridError;
use pathforge_core::mag::MagError;
use pathforge_core::metrics::MetricError;
use pathforge_core::mil::MilError;
use pathforge_core::probe::ProbeError;
use pathforge_core::retrieval::RetrievalError;
use pathforge_core::seg::SegError;
use pathforge_core::splits::SplitError;
use pathforge_core::sweep::SweepError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Runtime,
}

#[derive(Debug, thiserror::Error)]
pub enum PathforgeError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("bad magic: {path} is not a {expected} file")]
    BadMagic { path: PathBuf, expected: &'static str },
    #[error("unsupported {format} version {version}")]
    VersionMismatch { format: &'static str, version: u32 },
    #[error("corrupt index in {path}: {detail}")]
    CorruptIndex { path: PathBuf, detail: String },
    #[error("inconsistent pyramid in {path}: {detail}")]
    InconsistentPyramid { path: PathBuf, detail: String },
    #[error("corrupt tile {tile} at level {level}: {detail}")]
    CorruptTile { level: u32, tile: usize, detail: String },
    #[error("level {level} out of range ({levels} levels)")]
    BadLevel { level: u32, levels: usize },
    #[error("zero-area region requested")]
    ZeroArea,
    #[error("truncated file {path}: {detail}")]
    TruncatedFile { path: PathBuf, detail: String },
    #[error("malformed GeoJSON: {0}")]
    MalformedGeoJson(String),
    #[error("unsupported geometry type {0:?}: only Polygon and MultiPolygon carry regions")]
    UnsupportedGeometry(String),
    #[error("unknown encoder {name:?}; registered encoders: {registered}")]
    UnknownEncoder { name: String, registered: String },
    #[error("patch size mismatch: encoder expects {expected}, got {got}")]
    SizeMismatch { expected: String, got: String },
    #[error("external encoder failure: {0}")]
    ExternalEncoderFailure(String),
    #[error("schema error in {path}{}: {detail}", row.map(|r| format!(" (row {r})")).unwrap_or_default())]
    SchemaError { path: PathBuf, row: Option<usize>, detail: String },
    #[error("no results to gather")]
    NoResults,
    #[error("ledger not found at {0}")]
    MissingLedger(PathBuf),
    #[error("unknown subcommand or flag: {0}")]
    BadInvocation(String),
    #[error(transparent)]
    Mag(#[from] MagError),
    #[error(transparent)]
    Seg(#[from] SegError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Cox(#[from] CoxError),
    #[error(transparent)]
    Mil(#[from] MilError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("PNG failure: {0}")]
    PngDecode(String),
    #[error("JSON failure: {0}")]
    Json(#[from] serde_json::Error),
    #[error("YAML failure: {0}")]
    Yaml(#[from] serde_yaml::Error),
}

impl PathforgeError {
    pub fn kind(&self) -> ErrorKind {
        use PathforgeError::*;
        match self {
            MissingFile(_) | BadMagic { .. } | VersionMismatch { .. } | CorruptIndex { .. }
            | InconsistentPyramid { .. } | BadLevel { .. } | ZeroArea | TruncatedFile { .. }
            | MalformedGeoJson(_) | UnsupportedGeometry(_) | UnknownEncoder { .. }
            | SizeMismatch { .. } | SchemaError { .. } | MissingLedger(_) | BadInvocation(_)
            | Mag(_) | Grid(_) | Split(_) | Sweep(_) | Yaml(_) => ErrorKind::Validation,
            CorruptTile { .. } | ExternalEncoderFailure(_) | NoResults | Seg(_) | Feature(_)
            | Metric(_) | Probe(_) | Cox(_) | Mil(_) | Retrieval(_) | Eval(_) | Io(_)
            | PngDecode(_) | Json(_) => ErrorKind::Runtime,
        }
    }
}

pub type Result<T> = std::result::Result<T, PathforgeError>;
