//! Library side of the `phnet` binary, so commands are testable in-process.

pub mod args;
pub mod commands;
pub mod config;

pub use args::Cli;
pub use commands::{run, Outcome};
pub use config::{DataSource, MapPolicy, RunConfig};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const VALIDATION: u8 = 1;
    pub const RUNTIME: u8 = 2;
    pub const VERIFICATION: u8 = 3;
}

/// Caps worker threads from `PHNET_THREADS` when set.
pub fn init_threads() -> phnet_core::Result<()> {
    let Ok(raw) = std::env::var("PHNET_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| phnet_core::Error::Config(format!("PHNET_THREADS={raw:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| phnet_core::Error::Config(format!("thread pool: {e}")))
}
