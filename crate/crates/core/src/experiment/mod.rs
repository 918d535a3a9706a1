//! Named experiments: TOML configuration, execution into self-describing
//! output bundles, parameter sweeps and bundle reports.
//!
//! A run bundle is a directory holding the CSV outputs, `config.toml`,
//! `summary.json` (metrics, fits, acceptance checks) and `manifest.json`
//! (parameters, seeds, code version and a SHA-256 of every file).

mod config;
mod execute;
mod report;
mod sweep;

pub use config::*;
pub use execute::{
    config_hash, evaluate_expectations, run_experiment, ExpectationResult, RunManifest, RunOutcome,
    RunSummary, CODE_VERSION, CONFIG_FILE, MANIFEST_FILE, SUMMARY_FILE,
};
pub use report::{load_report, render_report, verify_bundle, Report};
pub use sweep::{
    evaluate_fit, point_dir, point_value, run_sweep, sweep_points, FitResult, SweepAxis, SweepOutcome,
    SweepPoint, SWEEP_FILE, SWEEP_TABLE,
};
