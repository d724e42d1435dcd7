// SPDX-License-Identifier: Apache-2.0

//! Command-line front end: config parsing and subcommands.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_convergence, cmd_dynamics, cmd_info, cmd_oracle_compare, cmd_steady, cmd_sweep, compare_with_oracle,
    ArtifactWriter,
};
pub use config::{parse_config, Resolved, RunConfig};
