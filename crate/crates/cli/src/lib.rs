//! File-based pipeline around `t1rho-inr`: simulate, undersample, calibrate,
//! reconstruct, fit, score and compare training modes. Every command writes
//! a manifest with content hashes so any run can be replayed and checked.

pub mod ablation;
pub mod error;
pub mod manifest;
pub mod pipeline;

use std::path::Path;

pub use ablation::{AblationRow, AblationTable};
pub use error::{CliError, CliResult};
pub use manifest::{FileRecord, RunManifest};
pub use pipeline::{
    cmd_ablate, cmd_calibrate, cmd_fit, cmd_metrics, cmd_phantom, cmd_reconstruct, cmd_repro, cmd_undersample,
    replay, run, Command, Dirs, MetricsArgs,
};

use t1rho_inr::{ExperimentConfig, Mode};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Caps the worker threads used by the numerical core.
pub const THREADS_ENV: &str = "LINEAR_THREADS";

/// Command-line overrides applied on top of a config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<String>,
    pub iters: Option<usize>,
}

/// Loads `path` (or the defaults) and applies the overrides.
pub fn resolve_config(path: Option<&Path>, o: &Overrides) -> CliResult<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => t1rho_inr::load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(m) = &o.mode {
        cfg.mode = m.parse::<Mode>()?;
    }
    if let Some(n) = o.iters {
        cfg.iters = n;
    }
    Ok(cfg.validated()?)
}

/// Sizes the global thread pool from `LINEAR_THREADS` when set.
pub fn configure_threads() -> CliResult<Option<usize>> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))?;
    Ok(Some(n))
}
