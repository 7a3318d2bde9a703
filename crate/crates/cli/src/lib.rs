//! `vesselgen` command-line tool. Every command writes into `--out` and
//! leaves a `run.json` manifest with the resolved config and the hashes of
//! its inputs and outputs, which `replay` can check.

pub mod cli;
pub mod commands;
pub mod manifest;

pub use cli::{Cli, Command, Common};
pub use commands::{execute, resolve_config, run};
pub use manifest::{blob_hash, RunManifest};

use vesselgen::Error;

/// 2 for bad input (arguments, config, missing files), 3 for failures
/// inside the pipeline.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 2,
        e if e.is_validation() => 2,
        _ => 3,
    }
}
