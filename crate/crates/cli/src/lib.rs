//! Command implementations behind the `ssta` binary, exposed as a library
//! so integration tests can drive them in-process.

pub mod commands;
pub mod config;
pub mod presets;
pub mod report;

pub use config::{BenchConfig, BenchMode, RawConfig};

/// Process exit code for an engine error: IO failures map to 3, everything
/// else is a configuration problem (2). Verification failures exit 1 and are
/// not errors.
pub fn exit_code(err: &ssta_core::Error) -> i32 {
    match err {
        ssta_core::Error::Io { .. } | ssta_core::Error::Format { .. } => 3,
        _ => 2,
    }
}
