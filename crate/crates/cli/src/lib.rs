//! Parameter sweeps, figure presets and validation runs on top of `rlc_arq`.
//!
//! Every sweep point gets its own seed derived from the master seed and the
//! point's (curve, lambda) position, so output is identical however the
//! points are scheduled.

pub mod figure;
pub mod sweep;
pub mod validate;

use std::path::{Path, PathBuf};

pub use figure::{reproduce_figure, saturation_order_violations, saturation_point, Figure, RunManifest, Scale};
pub use sweep::{run_sweep, sweep_rows, write_csv, CurveSpec, Row, Source, Status, SweepSpec, CSV_HEADER};
pub use validate::{run_validation, Check};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid sweep: {0}")]
    InvalidSpec(String),
    #[error("{path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Model(#[from] rlc_arq::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::IoFailure {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Errors caused by the request rather than by the run.
    pub fn is_usage(&self) -> bool {
        matches!(self, CliError::InvalidSpec(_))
    }
}
