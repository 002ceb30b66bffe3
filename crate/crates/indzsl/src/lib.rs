//! Files, configuration, pipeline orchestration and the `indzsl` command line
//! on top of `indzsl-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;

pub use config::{resolve, ModeSelection, Profile, RunConfig};
pub use error::{FormatError, StageError};
pub use pipeline::{cmd_run, cmd_sweep, run_pipeline, RunArtifacts, RunReport};
