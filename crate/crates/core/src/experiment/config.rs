use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classical::Sampling;
use crate::environment::NoiseParams;
use crate::error::{Error, Result};
use crate::params::{InitialStateSpec, SystemParams};
use crate::quantum::{default_cutoff, EvolutionControls, Method};

/// What a run computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Quantum and classical `<Jz>` against time.
    Means,
    /// Quantum and classical `Jz` distributions and their 1-norm distance.
    Distributions,
    /// 1-norm distance between two classical ensembles with different `J0`.
    ClassicalConvergence,
    /// Stroboscopic section of individual trajectories.
    Poincare,
    /// Maximal Lyapunov exponents of individual trajectories.
    Lyapunov,
}

/// A run configuration, read from TOML. See `docs/config.md` for the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    pub kind: ExperimentKind,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    pub system: SystemSection,
    #[serde(default)]
    pub initial: Option<InitialSection>,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub quantum: QuantumSection,
    #[serde(default)]
    pub noise: Option<NoiseSection>,
    pub record: RecordSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub poincare: Option<PoincareSection>,
    #[serde(default)]
    pub lyapunov: Option<LyapunovSection>,
    #[serde(default)]
    pub convergence: Option<ConvergenceSection>,
    /// Acceptance ranges `[lo, hi]` for summary metrics.
    #[serde(default)]
    pub expect: BTreeMap<String, [f64; 2]>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub alpha: f64,
    pub e: f64,
    pub beta: f64,
    #[serde(default = "default_dtau")]
    pub dtau: f64,
}

fn default_dtau() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub j0: f64,
    pub sigma_j: f64,
    #[serde(default)]
    pub phi0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    /// Total number of trajectories.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub sampling: Sampling,
    /// Independent sub-ensembles used to estimate statistical errors of
    /// noise-free means.
    #[serde(default = "one")]
    pub replicates: usize,
}

fn default_n() -> usize {
    100_000
}

fn one() -> usize {
    1
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            n: default_n(),
            sampling: Sampling::default(),
            replicates: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantumSection {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default)]
    pub method: Method,
    /// Step of the quantum integrator; defaults to `system.dtau`.
    #[serde(default)]
    pub dtau: Option<f64>,
    /// Basis cutoff `K` (`m` in `-K..=K`); defaults to `20 / beta + 16`.
    #[serde(default)]
    pub cutoff: Option<usize>,
    #[serde(default = "default_norm_tol")]
    pub norm_tol: f64,
}

fn yes() -> bool {
    true
}

fn default_norm_tol() -> f64 {
    1e-9
}

impl Default for QuantumSection {
    fn default() -> Self {
        QuantumSection {
            enabled: true,
            method: Method::default(),
            dtau: None,
            cutoff: None,
            norm_tol: default_norm_tol(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// Absolute amplitude; give either this or `sigma_over_vch`.
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Amplitude relative to the tidal scale `3 sqrt(2) pi^2 alpha`.
    #[serde(default)]
    pub sigma_over_vch: Option<f64>,
    pub tau_c: f64,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
}

fn default_c() -> f64 {
    crate::environment::DEFAULT_RECURRENCE
}

fn default_realizations() -> usize {
    100
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotFormat {
    #[default]
    None,
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordSection {
    pub tau_end: f64,
    /// Spacing of the recorded time series.
    pub every: f64,
    /// Times (on the record grid) at which full distributions are written.
    #[serde(default)]
    pub distribution_times: Vec<f64>,
    #[serde(default)]
    pub snapshots: SnapshotFormat,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    /// Write the drive `R(tau)` of the first realization.
    #[serde(default = "yes")]
    pub noise_trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default = "default_peak_window")]
    pub peak_window: [f64; 2],
    #[serde(default = "default_growth_window")]
    pub growth_window: [f64; 2],
    #[serde(default = "default_plateau_window")]
    pub plateau_window: [f64; 2],
    #[serde(default = "default_envelope_width")]
    pub envelope_width: f64,
    #[serde(default = "default_average_window")]
    pub average_window: [f64; 2],
    /// Triangular smoothing widths applied to distributions.
    #[serde(default = "default_smoothing")]
    pub smoothing: Vec<f64>,
    /// Times at which distances are reported; defaults to the end time.
    #[serde(default)]
    pub norm_times: Vec<f64>,
    /// Length of the Lyapunov estimate from the initial-state center.
    #[serde(default = "default_lyapunov_tau")]
    pub lyapunov_tau: f64,
}

fn default_peak_window() -> [f64; 2] {
    [0.0, 2.0]
}
fn default_growth_window() -> [f64; 2] {
    [2.0, 5.5]
}
fn default_plateau_window() -> [f64; 2] {
    [6.0, 12.0]
}
fn default_envelope_width() -> f64 {
    0.5
}
fn default_average_window() -> [f64; 2] {
    [20.0, 100.0]
}
fn default_smoothing() -> Vec<f64> {
    vec![0.25]
}
fn default_lyapunov_tau() -> f64 {
    500.0
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            peak_window: default_peak_window(),
            growth_window: default_growth_window(),
            plateau_window: default_plateau_window(),
            envelope_width: default_envelope_width(),
            average_window: default_average_window(),
            smoothing: default_smoothing(),
            norm_times: Vec::new(),
            lyapunov_tau: default_lyapunov_tau(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoincareSection {
    /// Explicit `[phi, jz]` start points.
    #[serde(default)]
    pub starts: Vec<[f64; 2]>,
    /// Additional starts on a grid `phi = 0`, `jz` evenly spaced.
    #[serde(default)]
    pub jz_grid: Option<[f64; 3]>,
    pub periods: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovSection {
    pub starts: Vec<[f64; 2]>,
    pub tau_total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    /// Mean `Jz` of the second ensemble.
    pub j0_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Default axes, dotted config path to values.
    #[serde(default)]
    pub axes: BTreeMap<String, Vec<toml::Value>>,
    /// Zip the axes point by point instead of taking the Cartesian product.
    #[serde(default)]
    pub listed: bool,
    #[serde(default)]
    pub fits: Vec<FitSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    /// `y = A x^p` over the sweep points.
    #[default]
    Power,
    /// Smoothed 1-norms against `beta / delta_s`, pooled over points and widths.
    Smoothing,
}

/// An aggregate fit over sweep points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    pub name: String,
    #[serde(default)]
    pub kind: FitKind,
    /// Axis path or metric name for the abscissa (power fits).
    #[serde(default)]
    pub x: String,
    /// Metric name for the ordinate (power fits).
    #[serde(default)]
    pub y: String,
    /// Time whose smoothed distances enter a smoothing fit.
    #[serde(default)]
    pub time: Option<f64>,
    /// Keep only points with `x` in this range.
    #[serde(default)]
    pub x_range: Option<[f64; 2]>,
    #[serde(default)]
    pub exponent: Option<[f64; 2]>,
    #[serde(default)]
    pub prefactor: Option<[f64; 2]>,
}

fn config_error(path: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        reason: reason.into(),
    }
}

/// Re-labels a parameter error with its config section.
fn in_section(section: &str, err: Error) -> Error {
    match err {
        Error::InvalidParameter { name, reason } => config_error(format!("{section}.{name}"), reason),
        other => other,
    }
}

fn check_window(path: &str, w: [f64; 2]) -> Result<()> {
    if !(w[0] >= 0.0 && w[1] > w[0]) {
        return Err(config_error(path, format!("window {w:?} must satisfy 0 <= lo < hi")));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let path = e
                .span()
                .map(|s| format!("bytes {}..{}", s.start, s.end))
                .unwrap_or_else(|| "<document>".into());
            config_error(path, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config { path: p, reason } => config_error(format!("{}: {p}", path.display()), reason),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_error("<document>", e.to_string()))
    }

    pub fn system_params(&self) -> SystemParams {
        SystemParams::new(self.system.alpha, self.system.e, self.system.beta).with_dtau(self.system.dtau)
    }

    pub fn initial_spec(&self) -> Result<InitialStateSpec> {
        let i = self
            .initial
            .ok_or_else(|| config_error("initial", "this experiment needs an initial state"))?;
        Ok(InitialStateSpec::new(i.j0, i.sigma_j, i.phi0))
    }

    pub fn cutoff(&self) -> usize {
        self.quantum.cutoff.unwrap_or_else(|| default_cutoff(self.system.beta))
    }

    pub fn controls(&self) -> EvolutionControls {
        let mut c = EvolutionControls::new(self.quantum.dtau.unwrap_or(self.system.dtau))
            .with_method(self.quantum.method);
        c.norm_tol = self.quantum.norm_tol;
        c
    }

    /// Noise amplitude and correlation; the per-realization seed is filled in
    /// at run time.
    pub fn noise_params(&self) -> Result<Option<NoiseParams>> {
        let Some(n) = self.noise else { return Ok(None) };
        let sigma = match (n.sigma, n.sigma_over_vch) {
            (Some(s), None) => s,
            (None, Some(r)) => r * self.system_params().tidal_scale(),
            _ => {
                return Err(config_error(
                    "noise.sigma",
                    "give exactly one of `sigma` and `sigma_over_vch`",
                ))
            }
        };
        let mut p = NoiseParams::new(sigma, n.tau_c, 0);
        p.c = n.c;
        Ok(Some(p))
    }

    pub fn realizations(&self) -> usize {
        self.noise.map_or(0, |n| n.realizations)
    }

    /// The record grid `0, every, 2 every, ..., tau_end`.
    pub fn record_times(&self) -> Vec<f64> {
        let n = (self.record.tau_end / self.record.every).round() as usize;
        (0..=n).map(|i| (i as f64 * self.record.every).min(self.record.tau_end)).collect()
    }

    /// Index on the record grid of `t`, which must lie on it.
    pub fn record_index(&self, t: f64, path: &str) -> Result<usize> {
        let i = (t / self.record.every).round();
        if i < 0.0 || (i * self.record.every - t).abs() > 1e-9 || t > self.record.tau_end + 1e-9 {
            return Err(config_error(path, format!("time {t} is not on the record grid")));
        }
        Ok(i as usize)
    }

    /// Times at which distances are reported.
    pub fn norm_times(&self) -> Vec<f64> {
        if self.analysis.norm_times.is_empty() {
            vec![self.record.tau_end]
        } else {
            self.analysis.norm_times.clone()
        }
    }

    /// Checks everything that can be checked without running, reporting the
    /// offending field path.
    pub fn validate(&self) -> Result<()> {
        if self.experiment.is_empty()
            || !self
                .experiment
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(config_error("experiment", "use letters, digits, '_' or '-'"));
        }
        self.system_params().validate().map_err(|e| in_section("system", e))?;
        let needs_initial = matches!(
            self.kind,
            ExperimentKind::Means | ExperimentKind::Distributions | ExperimentKind::ClassicalConvergence
        );
        if needs_initial {
            self.initial_spec()?.validate().map_err(|e| in_section("initial", e))?;
        }
        if self.ensemble.n == 0 {
            return Err(config_error("ensemble.n", "must be at least 1"));
        }
        if self.ensemble.replicates == 0 || self.ensemble.replicates > self.ensemble.n {
            return Err(config_error("ensemble.replicates", "must lie in 1..=n"));
        }
        self.controls().validate().map_err(|e| in_section("quantum", e))?;
        if let Some(np) = self.noise_params()? {
            np.validate().map_err(|e| in_section("noise", e))?;
            let r = self.realizations();
            if r == 0 {
                return Err(config_error("noise.realizations", "must be at least 1"));
            }
            if r > self.ensemble.n {
                return Err(config_error("noise.realizations", "exceeds the ensemble size"));
            }
            let dt = self.system.dtau.min(self.controls().dtau);
            if np.update_interval() < dt {
                return Err(config_error(
                    "noise.tau_c",
                    format!("update interval {:e} is below the step {dt:e}", np.update_interval()),
                ));
            }
        }
        if !(self.record.tau_end > 0.0) {
            return Err(config_error("record.tau_end", "must be positive"));
        }
        if !(self.record.every > 0.0 && self.record.every <= self.record.tau_end) {
            return Err(config_error("record.every", "must lie in (0, tau_end]"));
        }
        let steps = self.record.every / self.system.dtau;
        if (steps - steps.round()).abs() > 1e-6 {
            return Err(config_error("record.every", "must be a multiple of system.dtau"));
        }
        for &t in &self.record.distribution_times {
            self.record_index(t, "record.distribution_times")?;
        }
        for &t in &self.norm_times() {
            self.record_index(t, "analysis.norm_times")?;
        }
        for (i, &t) in self.record.snapshot_times.iter().enumerate() {
            if !(0.0..=self.record.tau_end).contains(&t) {
                return Err(config_error(format!("record.snapshot_times[{i}]"), "outside [0, tau_end]"));
            }
        }
        if !self.record.snapshot_times.windows(2).all(|w| w[0] <= w[1]) {
            return Err(config_error("record.snapshot_times", "must be sorted"));
        }
        let a = &self.analysis;
        check_window("analysis.peak_window", a.peak_window)?;
        check_window("analysis.growth_window", a.growth_window)?;
        check_window("analysis.plateau_window", a.plateau_window)?;
        check_window("analysis.average_window", a.average_window)?;
        if !(a.envelope_width > 0.0) {
            return Err(config_error("analysis.envelope_width", "must be positive"));
        }
        for (i, &ds) in a.smoothing.iter().enumerate() {
            if self.kind == ExperimentKind::Distributions && ds < self.system.beta {
                return Err(config_error(format!("analysis.smoothing[{i}]"), "must be at least beta"));
            }
        }
        match self.kind {
            ExperimentKind::Poincare => {
                let p = self
                    .poincare
                    .as_ref()
                    .ok_or_else(|| config_error("poincare", "section required for this kind"))?;
                if p.periods == 0 {
                    return Err(config_error("poincare.periods", "must be at least 1"));
                }
                if p.starts.is_empty() && p.jz_grid.is_none() {
                    return Err(config_error("poincare.starts", "no start points"));
                }
                if let Some(g) = p.jz_grid {
                    if !(g[2] >= 1.0 && g[1] >= g[0]) {
                        return Err(config_error("poincare.jz_grid", "expects [lo, hi, count]"));
                    }
                }
            }
            ExperimentKind::Lyapunov => {
                let l = self
                    .lyapunov
                    .as_ref()
                    .ok_or_else(|| config_error("lyapunov", "section required for this kind"))?;
                if l.starts.is_empty() {
                    return Err(config_error("lyapunov.starts", "no start points"));
                }
                if !(l.tau_total >= 20.0) {
                    return Err(config_error("lyapunov.tau_total", "must be at least 20"));
                }
            }
            ExperimentKind::ClassicalConvergence if self.convergence.is_none() => {
                return Err(config_error("convergence", "section required for this kind"));
            }
            _ => {}
        }
        for (name, [lo, hi]) in &self.expect {
            if !(lo <= hi) {
                return Err(config_error(format!("expect.{name}"), "needs lo <= hi"));
            }
        }
        Ok(())
    }

    /// Returns a copy with the dotted `path` (e.g. `system.beta`) set to
    /// `value`.
    pub fn with_override(&self, path: &str, value: &toml::Value) -> Result<Self> {
        let mut doc = toml::Value::try_from(self).map_err(|e| config_error(path, e.to_string()))?;
        let parts: Vec<&str> = path.split('.').collect();
        let (last, parents) = parts.split_last().ok_or_else(|| config_error(path, "empty path"))?;
        let mut node = &mut doc;
        for p in parents {
            node = node
                .as_table_mut()
                .and_then(|t| t.get_mut(*p))
                .ok_or_else(|| config_error(path, format!("no table `{p}`")))?;
        }
        let table = node
            .as_table_mut()
            .ok_or_else(|| config_error(path, "parent is not a table"))?;
        // Integers given for float fields are accepted.
        let value = match (table.get(*last), value) {
            (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(*i as f64),
            _ => value.clone(),
        };
        table.insert(last.to_string(), value);
        let cfg: RunConfig = doc
            .try_into()
            .map_err(|e: toml::de::Error| config_error(path, e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Built-in configurations, by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("regular_means", include_str!("../../presets/regular_means.toml")),
    ("chaotic_early", include_str!("../../presets/chaotic_early.toml")),
    ("chaotic_means", include_str!("../../presets/chaotic_means.toml")),
    ("chaotic_distributions", include_str!("../../presets/chaotic_distributions.toml")),
    ("noisy_means", include_str!("../../presets/noisy_means.toml")),
    ("decoherence_collapse", include_str!("../../presets/decoherence_collapse.toml")),
    ("decoherence_decay", include_str!("../../presets/decoherence_decay.toml")),
    ("classical_convergence", include_str!("../../presets/classical_convergence.toml")),
    ("poincare_chaotic", include_str!("../../presets/poincare_chaotic.toml")),
    ("lyapunov_chaotic", include_str!("../../presets/lyapunov_chaotic.toml")),
];

pub fn preset(name: &str) -> Result<RunConfig> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| config_error("preset", format!("unknown preset `{name}`")))?;
    RunConfig::from_toml_str(text).map_err(|e| match e {
        Error::Config { path, reason } => config_error(format!("preset {name}: {path}"), reason),
        other => other,
    })
}

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}
