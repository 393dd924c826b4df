//! Batch runner: TOML run configurations in, deterministic CSV/JSON artifacts out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::{Mode, RunConfig};
pub use error::CliError;
pub use run::{execute, run, Outcome};
