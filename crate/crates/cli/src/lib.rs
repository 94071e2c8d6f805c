//! Configuration, output formats and self-checks behind the `mceb` binary.

pub mod config;
pub mod error;
pub mod output;
pub mod validate;

pub use config::{parse_config, parse_config_with, LoadedConfig, ScenarioFile};
pub use error::{CliError, CliResult};
pub use output::{emit_curve, read_curve_csv, read_curve_json, CurveRow, OutputFormat};
pub use validate::{validate_scenario, CheckStatus, Report};
