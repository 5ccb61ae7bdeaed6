//! Experiment orchestration for expected-coverage studies: configuration,
//! the cell matrix with on-disk caching, plot tables and the acceptance
//! suite.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod matrix;
pub mod progress;
pub mod report;
pub mod sweep;

pub use config::{is_amortized, ExperimentConfig, METHODS};
pub use error::{HarnessError, Result};
pub use matrix::{
    build_ensemble_cell, cell_hash, cells, execute_cell, expected_calls, run_matrix, Cell, ExperimentRecord, RunSummary,
};
pub use progress::Progress;
pub use report::{emit_plotdata, Filter, PlotKind};
