//! Experiment runner: bound studies, metric comparisons, the beyond-gap
//! table, private releases and the contour bootstrap suite.
//!
//! Every study is a pure function of its configuration. Trial `t` at level
//! index `l` draws its noise from `derive_seed(seed, l, t)`.

use thiserror::Error;

use crate::bounds::BoundError;
use crate::contour::ContourError;
use crate::ingest::IngestError;
use crate::matcore::LinalgError;
use crate::noise::NoiseError;

pub mod config;
pub mod instances;
pub mod report;
pub mod studies;

pub use config::{default_levels, load_input, resolve_rank, ExperimentConfig, InputSpec, LoadedInput, RankSpec, Synthetic};
pub use report::{to_canonical_json, Stat};
pub use studies::{
    dp_release, error_metrics, run_beyond_gap, run_bootstrap_suite, run_bound_study, run_metric_study, BeyondGapReport,
    BootstrapConfig, BootstrapReport, BoundStudyReport, DpRelease, ErrorMetrics, MetricStudyReport,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Contour(#[from] ContourError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}
