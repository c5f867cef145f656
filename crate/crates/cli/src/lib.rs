//! Command-line front end for the low-Mach steady-flow solver: flat-file
//! configuration, the `solve`/`sweep`/`mms`/`check` subcommands, and the
//! machine-readable outputs (`report.json`, `sweep.csv`, `state.bin`).

pub mod config;
pub mod output;
pub mod runner;
pub mod snapshot;
