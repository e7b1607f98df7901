//! Config parsing, grid execution and artifact writing for the `oil` binary.

pub mod config;
pub mod error;
pub mod grid;
pub mod report;

pub use config::{ExperimentConfig, Preset};
pub use error::CliError;
pub use grid::{run_grid, ExperimentGrid, GridOutcome};

/// Environment variable naming the output directory when `--out` is absent.
pub const OUT_DIR_ENV: &str = "OIL_OUT_DIR";
