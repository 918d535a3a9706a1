use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::execute::{evaluate_expectations, RunManifest, RunSummary, MANIFEST_FILE, SUMMARY_FILE};
use super::sweep::{table_hash, SweepOutcome, SWEEP_FILE};
use crate::error::{Error, Result};
use crate::io::sha256_file;

/// Checks that every file listed in the bundle manifest is present and
/// unchanged.
pub fn verify_bundle(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::Integrity {
        file: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Integrity {
        file: path.display().to_string(),
        reason: e.to_string(),
    })?;
    for (name, expected) in &manifest.files {
        let file = dir.join(name);
        let actual = sha256_file(&file).map_err(|e| Error::Integrity {
            file: file.display().to_string(),
            reason: e.to_string(),
        })?;
        if &actual != expected {
            return Err(Error::Integrity {
                file: file.display().to_string(),
                reason: "contents do not match the manifest hash".into(),
            });
        }
    }
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Report {
    Run {
        manifest: Box<RunManifest>,
        summary: Box<RunSummary>,
    },
    Sweep(Box<SweepOutcome>),
}

impl Report {
    /// True when every configured expectation and fit passed.
    pub fn passed(&self) -> bool {
        match self {
            Report::Run { summary, .. } => summary.expectations.iter().all(|e| e.pass),
            Report::Sweep(s) => {
                s.fits.iter().all(|f| f.pass)
                    && s.points.iter().all(|p| p.summary.expectations.iter().all(|e| e.pass))
            }
        }
    }
}

fn read_summary(dir: &Path) -> Result<RunSummary> {
    let path = dir.join(SUMMARY_FILE);
    serde_json::from_slice(&fs::read(&path)?).map_err(|e| Error::Integrity {
        file: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Loads and verifies a run or sweep directory.
pub fn load_report(dir: &Path) -> Result<Report> {
    if dir.join(SWEEP_FILE).exists() {
        let path = dir.join(SWEEP_FILE);
        let outcome: SweepOutcome =
            serde_json::from_slice(&fs::read(&path)?).map_err(|e| Error::Integrity {
                file: path.display().to_string(),
                reason: e.to_string(),
            })?;
        if table_hash(dir)? != outcome.table_hash {
            return Err(Error::Integrity {
                file: dir.join(super::sweep::SWEEP_TABLE).display().to_string(),
                reason: "contents do not match the recorded hash".into(),
            });
        }
        for p in &outcome.points {
            let m = verify_bundle(&dir.join(&p.dir))?;
            if m.config_hash != p.config_hash {
                return Err(Error::Integrity {
                    file: p.dir.clone(),
                    reason: "bundle belongs to a different configuration".into(),
                });
            }
        }
        return Ok(Report::Sweep(Box::new(outcome)));
    }
    let manifest = verify_bundle(dir)?;
    let mut summary = read_summary(dir)?;
    summary.expectations = evaluate_expectations(&manifest.config.expect, &summary.metrics);
    Ok(Report::Run {
        manifest: Box::new(manifest),
        summary: Box::new(summary),
    })
}

fn mark(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn render_summary(out: &mut String, s: &RunSummary) {
    for (k, v) in &s.metrics {
        let _ = writeln!(out, "  {k:<32} {v:.6e}");
    }
    if let Some(d) = &s.decay {
        let _ = writeln!(
            out,
            "  decay fit: tau_d = {:.3}, floor = {:.4}, from tau = {}",
            d.tau_d, d.floor, d.tau_peak
        );
    }
    for e in &s.expectations {
        let v = e.value.map_or("missing".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(
            out,
            "  [{}] {} = {v} (expected {} .. {})",
            mark(e.pass),
            e.metric,
            e.range[0],
            e.range[1]
        );
    }
    for w in &s.warnings {
        let _ = writeln!(out, "  warning: {w}");
    }
}

/// Human-readable rendering of a report.
pub fn render_report(report: &Report) -> String {
    let mut out = String::new();
    match report {
        Report::Run { manifest, summary } => {
            let _ = writeln!(
                out,
                "run {} ({:?}), config {}…, {}",
                manifest.experiment,
                manifest.kind,
                &manifest.config_hash[..12],
                manifest.code_version
            );
            let _ = writeln!(
                out,
                "  beta = {}, alpha = {}, e = {}, n = {}, realizations = {}, seed = {}",
                manifest.system.beta,
                manifest.system.alpha,
                manifest.system.e,
                manifest.ensemble_size,
                manifest.realizations,
                manifest.seed
            );
            render_summary(&mut out, summary);
        }
        Report::Sweep(s) => {
            let _ = writeln!(out, "sweep {} with {} points", s.experiment, s.points.len());
            for p in &s.points {
                let _ = writeln!(out, "point {}{}", p.dir, if p.resumed { " (reused)" } else { "" });
                render_summary(&mut out, &p.summary);
            }
            for f in &s.fits {
                match &f.fit {
                    Some(fit) => {
                        let _ = writeln!(
                            out,
                            "[{}] fit {}: exponent {:.4} (expected {:?}), prefactor {:.4} (expected {:?}), r^2 {:.4}, {} points",
                            mark(f.pass),
                            f.name,
                            fit.exponent,
                            f.exponent_range,
                            fit.prefactor,
                            f.prefactor_range,
                            fit.r_squared,
                            f.points
                        );
                    }
                    None => {
                        let _ = writeln!(out, "[FAIL] fit {}: {}", f.name, f.error.as_deref().unwrap_or("failed"));
                    }
                }
            }
        }
    }
    out
}
