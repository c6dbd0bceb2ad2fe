//! Batch pipeline around `corpusqc-core`: one TOML config drives ingestion,
//! cleaning, validation, manifests, review replay and evaluation. Every run
//! writes its artifacts and a `run_summary.json` into its own directory.

pub mod app;
pub mod config;
pub mod stages;
pub mod summary;

pub use app::{main_with_args, run, Cli, Command};
pub use config::{ConfigError, PipelineConfig};
pub use stages::CliError;
pub use summary::{RunSummary, StageSummary};
