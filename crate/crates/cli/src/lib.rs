//! Experiment runner around `arper-core`: TOML configs, the method × seed ×
//! order matrix, content-addressed run directories, report tables and
//! plot-ready CSV for forgetting curves and weight heat maps.

pub mod config;
pub mod orders;
pub mod report;
pub mod runner;
pub mod tools;

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub use config::RunConfig;
pub use report::{cmd_report, Report};
pub use runner::{cmd_run, RunOutcome, RunStatus};
pub use tools::{cmd_diagnose, cmd_weight_delta};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "ARPER_OUT";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `--out` flag, then the config's `run.out`, then `$ARPER_OUT`, then `./runs`.
pub fn resolve_out(flag: Option<&Path>, config: &RunConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = &config.run.out {
        return p.clone();
    }
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from("runs"),
    }
}
