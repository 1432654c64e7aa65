//! IO, file formats, and experiment commands for the preference-learning
//! benchmark. The algorithmic core lives in `prefbench-core`; this crate
//! adds the line-delimited dataset format, checkpoints, report files, run
//! manifests, and the subcommand implementations behind the `prefbench`
//! binary.
//!
//! Every file this crate writes is byte-deterministic: numbers are printed
//! with 9 significant digits, map keys are emitted in sorted order, and all
//! writes go through a temp-file-plus-rename so failed runs never leave
//! partial outputs.

pub mod commands;
pub mod error;
pub mod io;
pub mod manifest;

pub use error::{CmdError, ExitCode};
