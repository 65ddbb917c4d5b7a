//! Experiment pipelines behind the `basinscope` command.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod figures;
pub mod workspace;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use figures::{run_figure, FigureId, FigureOutput};
pub use workspace::Workspace;
