//! Verification, benchmark and demo drivers behind the `tattn` binary.

pub mod bench;
pub mod config;
pub mod demo;
pub mod error;
pub mod verify;

pub use config::{BenchConfig, BenchVariant, Format, Overrides};
pub use error::CliError;
