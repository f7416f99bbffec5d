//! Experiment runner for the pcbias numerical lab: dataset and weight files,
//! TOML configs, the experiment kinds and their csv/SVG reports.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod plot;
pub mod report;

pub use config::{ExperimentConfig, Kind, Settings};
pub use error::{LabError, Result};
pub use experiments::{run, Outcome};

/// Runs `f` on a worker pool capped by `PCBIAS_THREADS` (all cores when unset).
pub fn with_pool<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    let threads = std::env::var("PCBIAS_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
