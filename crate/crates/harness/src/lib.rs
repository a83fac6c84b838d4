//! Command-line plumbing for `sohb-core`: run configuration, output formats,
//! statistical estimators and the acceptance suite.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod estimators;
pub mod output;
pub mod runs;

pub use error::{HarnessError, Result};

/// Sizes the global thread pool from `SOHB_THREADS` if set; otherwise rayon's default.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("SOHB_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| HarnessError::Parse {
            what: "SOHB_THREADS".into(),
            message: format!("expected a positive integer, got '{v}'"),
        })?;
        // A pool that is already built (tests, repeated calls) is left alone.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    Ok(())
}
