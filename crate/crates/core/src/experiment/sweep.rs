use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{FitKind, FitSpec, RunConfig};
use super::execute::{
    config_hash, run_experiment, RunManifest, RunSummary, MANIFEST_FILE, SUMMARY_FILE,
};
use super::report::verify_bundle;
use crate::analysis::{fit_power_law, smoothing_scaling_check, ScalingFit, SmoothingPoint};
use crate::error::{Error, Result};
use crate::io::{sha256_hex, write_bytes, CsvTable};
use crate::seeds::{derive_seed, Domain};

pub const SWEEP_FILE: &str = "sweep.json";
pub const SWEEP_TABLE: &str = "sweep.csv";

/// One swept configuration path and its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub path: String,
    pub values: Vec<toml::Value>,
}

impl SweepAxis {
    /// Parses `path=v1,v2,...`; values are TOML literals.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = |reason: &str| Error::Config {
            path: format!("--axis {spec}"),
            reason: reason.into(),
        };
        let (path, list) = spec.split_once('=').ok_or_else(|| bad("expected path=v1,v2,..."))?;
        let values = list
            .split(',')
            .map(|v| {
                let doc: toml::Table = toml::from_str(&format!("v = {}", v.trim()))
                    .or_else(|_| toml::from_str(&format!("v = \"{}\"", v.trim())))
                    .map_err(|_| bad("unparsable value"))?;
                Ok(doc["v"].clone())
            })
            .collect::<Result<Vec<_>>>()?;
        if path.trim().is_empty() || values.is_empty() {
            return Err(bad("empty axis"));
        }
        Ok(SweepAxis {
            path: path.trim().to_string(),
            values,
        })
    }
}

/// Assignments of every sweep point, in order.
pub fn sweep_points(axes: &[SweepAxis], listed: bool) -> Result<Vec<Vec<(String, toml::Value)>>> {
    if axes.is_empty() {
        return Ok(vec![Vec::new()]);
    }
    if listed {
        let n = axes[0].values.len();
        if axes.iter().any(|a| a.values.len() != n) {
            return Err(Error::Config {
                path: "sweep.axes".into(),
                reason: "listed axes need equal lengths".into(),
            });
        }
        return Ok((0..n)
            .map(|i| axes.iter().map(|a| (a.path.clone(), a.values[i].clone())).collect())
            .collect());
    }
    let mut points: Vec<Vec<(String, toml::Value)>> = vec![Vec::new()];
    for a in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                a.values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((a.path.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

fn label(assignments: &[(String, toml::Value)]) -> String {
    if assignments.is_empty() {
        return "base".into();
    }
    assignments
        .iter()
        .map(|(p, v)| {
            let key = p.rsplit('.').next().unwrap_or(p);
            let val = match v {
                toml::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            format!("{key}={val}")
        })
        .collect::<Vec<_>>()
        .join("_")
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "=._-".contains(c) { c } else { '-' })
        .collect()
}

fn as_number(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Float(f) => Some(*f),
        toml::Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: usize,
    pub dir: String,
    pub assignments: BTreeMap<String, toml::Value>,
    pub config_hash: String,
    /// True when an existing verified bundle was reused.
    pub resumed: bool,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub name: String,
    pub kind: FitKind,
    pub points: usize,
    pub fit: Option<ScalingFit>,
    pub error: Option<String>,
    pub exponent_range: Option<[f64; 2]>,
    pub prefactor_range: Option<[f64; 2]>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub experiment: String,
    pub listed: bool,
    pub axes: Vec<SweepAxis>,
    pub points: Vec<SweepPoint>,
    pub fits: Vec<FitResult>,
    /// SHA-256 of the aggregate table.
    pub table_hash: String,
}

/// Runs every point of the sweep under `out_dir/NNN-label`. Point seeds are
/// derived from the master seed and the point index. Points whose bundle
/// already exists with the same configuration hash and intact files are not
/// rerun.
pub fn run_sweep(base: &RunConfig, axes: &[SweepAxis], listed: bool, out_dir: &Path) -> Result<SweepOutcome> {
    base.validate()?;
    let points = sweep_points(axes, listed)?;
    let mut dirs = BTreeSet::new();
    let mut planned = Vec::with_capacity(points.len());
    for (i, assignments) in points.iter().enumerate() {
        let lbl = label(assignments);
        if !dirs.insert(lbl.clone()) {
            return Err(Error::Config {
                path: "sweep.axes".into(),
                reason: format!("two sweep points map to the same output `{lbl}`"),
            });
        }
        let mut cfg = base.clone();
        for (path, value) in assignments {
            cfg = cfg.with_override(path, value)?;
        }
        cfg.seed = derive_seed(base.seed, Domain::Sweep, i as u64);
        cfg.sweep = None;
        planned.push((format!("{i:03}-{lbl}"), assignments.clone(), cfg));
    }
    fs::create_dir_all(out_dir)?;

    let mut results = Vec::with_capacity(planned.len());
    for (i, (dir_name, assignments, cfg)) in planned.into_iter().enumerate() {
        let dir = out_dir.join(&dir_name);
        let hash = config_hash(&cfg)?;
        let (summary, resumed) = match reuse(&dir, &hash) {
            Some(s) => (s, true),
            None => {
                log::info!("sweep point {i}: {dir_name}");
                (run_experiment(&cfg, &dir)?.summary, false)
            }
        };
        results.push(SweepPoint {
            index: i,
            dir: dir_name,
            assignments: assignments.into_iter().collect(),
            config_hash: hash,
            resumed,
            summary,
        });
    }

    let fits_spec = base.sweep.as_ref().map(|s| s.fits.clone()).unwrap_or_default();
    let fits = fits_spec.iter().map(|f| evaluate_fit(f, &results)).collect();
    let table = aggregate_table(axes, &results);
    let table_hash = write_bytes(&out_dir.join(SWEEP_TABLE), &table.to_bytes())?;
    let outcome = SweepOutcome {
        experiment: base.experiment.clone(),
        listed,
        axes: axes.to_vec(),
        points: results,
        fits,
        table_hash,
    };
    write_bytes(&out_dir.join(SWEEP_FILE), &serde_json::to_vec_pretty(&outcome)?)?;
    Ok(outcome)
}

fn reuse(dir: &Path, hash: &str) -> Option<RunSummary> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?;
    let manifest: RunManifest = serde_json::from_str(&text).ok()?;
    if manifest.config_hash != hash || verify_bundle(dir).is_err() {
        return None;
    }
    serde_json::from_slice(&fs::read(dir.join(SUMMARY_FILE)).ok()?).ok()
}

/// Value of an axis path or metric at a sweep point.
pub fn point_value(point: &SweepPoint, name: &str) -> Option<f64> {
    point
        .assignments
        .get(name)
        .and_then(as_number)
        .or_else(|| point.summary.metrics.get(name).copied())
}

pub fn evaluate_fit(spec: &FitSpec, points: &[SweepPoint]) -> FitResult {
    let in_range = |x: f64| spec.x_range.is_none_or(|[lo, hi]| x >= lo && x <= hi);
    let attempt: Result<(usize, ScalingFit)> = match spec.kind {
        FitKind::Power => {
            let (x, y): (Vec<f64>, Vec<f64>) = points
                .iter()
                .filter_map(|p| Some((point_value(p, &spec.x)?, point_value(p, &spec.y)?)))
                .filter(|(x, _)| in_range(*x))
                .unzip();
            fit_power_law(&x, &y).map(|f| (x.len(), f))
        }
        FitKind::Smoothing => {
            let key = spec.time.map(|t| format!("{t}"));
            let pts: Vec<SmoothingPoint> = points
                .iter()
                .flat_map(|p| match &key {
                    Some(k) => p.summary.smoothing.get(k).cloned().unwrap_or_default(),
                    None => p.summary.smoothing.values().flatten().copied().collect(),
                })
                .filter(|s| in_range(s.beta / s.delta_s))
                .collect();
            smoothing_scaling_check(&pts).map(|f| (pts.len(), f))
        }
    };
    match attempt {
        Ok((n, fit)) => {
            let ok = |r: Option<[f64; 2]>, v: f64| r.is_none_or(|[lo, hi]| v >= lo && v <= hi);
            FitResult {
                name: spec.name.clone(),
                kind: spec.kind,
                points: n,
                pass: ok(spec.exponent, fit.exponent) && ok(spec.prefactor, fit.prefactor),
                fit: Some(fit),
                error: None,
                exponent_range: spec.exponent,
                prefactor_range: spec.prefactor,
            }
        }
        Err(e) => FitResult {
            name: spec.name.clone(),
            kind: spec.kind,
            points: 0,
            fit: None,
            error: Some(e.to_string()),
            exponent_range: spec.exponent,
            prefactor_range: spec.prefactor,
            pass: false,
        },
    }
}

fn aggregate_table(axes: &[SweepAxis], points: &[SweepPoint]) -> CsvTable {
    let numeric_axes: Vec<&str> = axes
        .iter()
        .filter(|a| a.values.iter().all(|v| as_number(v).is_some()))
        .map(|a| a.path.as_str())
        .collect();
    let metrics: BTreeSet<&str> = points
        .iter()
        .flat_map(|p| p.summary.metrics.keys().map(String::as_str))
        .collect();
    let mut columns = vec!["point"];
    columns.extend(numeric_axes.iter().copied());
    columns.extend(metrics.iter().copied());
    let mut t = CsvTable::new("sweep", &columns);
    for p in points {
        let mut row = vec![p.index as f64];
        row.extend(numeric_axes.iter().map(|a| p.assignments.get(*a).and_then(as_number).unwrap_or(f64::NAN)));
        row.extend(metrics.iter().map(|m| p.summary.metrics.get(*m).copied().unwrap_or(f64::NAN)));
        t.push(row);
    }
    t
}

/// Directory a sweep point is written to.
pub fn point_dir(out_dir: &Path, point: &SweepPoint) -> PathBuf {
    out_dir.join(&point.dir)
}

/// Hash of the sweep-level table as stored on disk.
pub fn table_hash(out_dir: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(out_dir.join(SWEEP_TABLE))?))
}
