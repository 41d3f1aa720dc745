//! Command-line front end for Split Integrated Gradients experiments:
//! configuration, model and dataset resolution, and CSV/JSON/SVG output.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod svg;

pub use commands::{cmd_attribute, cmd_gradcheck, cmd_metrics, cmd_scan_path, cmd_train_fixture, Outcome};
pub use config::RunConfig;
pub use error::{CliError, CliResult};
