//! Batch front end: configuration files, the four subcommands, run manifests.

pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::{cmd_adjoint, cmd_experiment, cmd_forward, cmd_reconstruct, DEFAULT_SNAPSHOTS};
pub use config::{build_config, config_entries, parse_lines, read_overrides};
pub use manifest::RunManifest;
