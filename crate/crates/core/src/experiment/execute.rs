use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentKind, RunConfig, SnapshotFormat};
use crate::analysis::{
    envelope, fit_decay_time, fit_exponential, multinomial_one_norm_floor, one_norm, time_average,
    triangular_smooth, DecayFit, ProbabilityVector, SmoothingPoint,
};
use crate::classical::{
    evolve_ensemble_stats, lyapunov_exponent, poincare_section, sample_initial_ensemble_with,
    ClassicalEnsemble, HistogramSpec, RecordRequest,
};
use crate::environment::{
    diffusion_parameter, make_noise_realization, realization_seed, run_classical_pair_average,
    run_realization_average, ClassicalRunSpec, NoiseParams, QuantumRunSpec,
};
use crate::error::{Error, Result};
use crate::io::{
    classical_snapshot_table, encode_classical_snapshot, encode_quantum_snapshot,
    quantum_snapshot_table, sha256_hex, write_bytes, CsvTable,
};
use crate::orbit::{build_orbit_table, OrbitParams, OrbitSolution};
use crate::params::{InitialStateSpec, SystemParams};
use crate::quantum::{evolve_quantum_stats, init_quantum_state, QuantumRecordRequest};
use crate::seeds::{derive_seed, Domain};

pub const CODE_VERSION: &str = concat!("hyperion-core ", env!("CARGO_PKG_VERSION"));
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.toml";

/// Everything needed to reproduce a run, stored next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub kind: ExperimentKind,
    pub system: SystemParams,
    pub initial: Option<InitialStateSpec>,
    pub noise: Option<NoiseParams>,
    pub ensemble_size: usize,
    pub realizations: usize,
    pub record_times: Vec<f64>,
    pub seed: u64,
    pub output_dir: String,
    pub code_version: String,
    /// SHA-256 of the configuration and code version; equal hashes mean
    /// equal outputs.
    pub config_hash: String,
    pub config: RunConfig,
    /// SHA-256 of every output file, by file name.
    pub files: BTreeMap<String, String>,
}

/// Result of checking one metric against its configured range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationResult {
    pub metric: String,
    pub range: [f64; 2],
    pub value: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub experiment: String,
    pub kind: ExperimentKind,
    pub config_hash: String,
    /// Scalar results by name.
    pub metrics: BTreeMap<String, f64>,
    /// Smoothed distances by report time, for smoothing-law fits.
    #[serde(default)]
    pub smoothing: BTreeMap<String, Vec<SmoothingPoint>>,
    #[serde(default)]
    pub decay: Option<DecayFit>,
    pub expectations: Vec<ExpectationResult>,
    pub warnings: Vec<String>,
    pub runtime_seconds: f64,
}

pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let mut bytes = serde_json::to_vec(cfg)?;
    bytes.extend_from_slice(CODE_VERSION.as_bytes());
    Ok(sha256_hex(&bytes))
}

pub fn evaluate_expectations(
    expect: &BTreeMap<String, [f64; 2]>,
    metrics: &BTreeMap<String, f64>,
) -> Vec<ExpectationResult> {
    expect
        .iter()
        .map(|(name, range)| {
            let value = metrics.get(name).copied();
            ExpectationResult {
                metric: name.clone(),
                range: *range,
                value,
                pass: value.is_some_and(|v| v >= range[0] && v <= range[1]),
            }
        })
        .collect()
}

/// Files produced by a run, kept in memory until the bundle is committed.
#[derive(Default)]
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
    metrics: BTreeMap<String, f64>,
    smoothing: BTreeMap<String, Vec<SmoothingPoint>>,
    decay: Option<DecayFit>,
    warnings: Vec<String>,
}

impl Outputs {
    fn csv(&mut self, name: &str, table: &CsvTable) {
        self.files.push((name.to_string(), table.to_bytes()));
    }

    fn metric(&mut self, name: impl Into<String>, value: f64) {
        if value.is_finite() {
            self.metrics.insert(name.into(), value);
        }
    }
}

/// A finished run bundle.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub summary: RunSummary,
}

/// Runs `cfg` and writes its bundle to `out_dir`. An existing bundle in
/// `out_dir` is replaced; a non-bundle directory is never touched. On failure
/// nothing is left behind.
pub fn run_experiment(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let out = execute(cfg)?;
    let hash = config_hash(cfg)?;
    let metrics = out.metrics;
    let summary = RunSummary {
        experiment: cfg.experiment.clone(),
        kind: cfg.kind,
        config_hash: hash.clone(),
        expectations: evaluate_expectations(&cfg.expect, &metrics),
        metrics,
        smoothing: out.smoothing,
        decay: out.decay,
        warnings: out.warnings,
        runtime_seconds: started.elapsed().as_secs_f64(),
    };
    let mut files = out.files;
    files.push((CONFIG_FILE.into(), cfg.to_toml_string()?.into_bytes()));
    files.push((SUMMARY_FILE.into(), serde_json::to_vec_pretty(&summary)?));
    let manifest = RunManifest {
        experiment: cfg.experiment.clone(),
        kind: cfg.kind,
        system: cfg.system_params(),
        initial: cfg.initial_spec().ok(),
        noise: cfg.noise_params()?,
        ensemble_size: cfg.ensemble.n,
        realizations: cfg.realizations(),
        record_times: cfg.record_times(),
        seed: cfg.seed,
        output_dir: out_dir.display().to_string(),
        code_version: CODE_VERSION.into(),
        config_hash: hash,
        config: cfg.clone(),
        files: files.iter().map(|(n, b)| (n.clone(), sha256_hex(b))).collect(),
    };
    commit_bundle(out_dir, &files, &manifest)?;
    Ok(RunOutcome {
        dir: out_dir.to_path_buf(),
        manifest,
        summary,
    })
}

fn commit_bundle(out_dir: &Path, files: &[(String, Vec<u8>)], manifest: &RunManifest) -> Result<()> {
    if out_dir.exists() && !out_dir.join(MANIFEST_FILE).exists() {
        let empty = fs::read_dir(out_dir)?.next().is_none();
        if !empty {
            return Err(Error::Config {
                path: out_dir.display().to_string(),
                reason: "output directory exists and is not a run bundle".into(),
            });
        }
    }
    let name = out_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let staging = out_dir.with_file_name(format!(".{name}.partial-{}", std::process::id()));
    if let Some(parent) = staging.parent() {
        fs::create_dir_all(parent)?;
    }
    let write_all = || -> Result<()> {
        fs::create_dir_all(&staging)?;
        for (n, b) in files {
            write_bytes(&staging.join(n), b)?;
        }
        write_bytes(&staging.join(MANIFEST_FILE), &serde_json::to_vec_pretty(manifest)?)?;
        if out_dir.exists() {
            fs::remove_dir_all(out_dir)?;
        }
        fs::rename(&staging, out_dir)?;
        Ok(())
    };
    let result = write_all();
    if result.is_err() {
        let _ = fs::remove_dir_all(&staging);
    }
    result
}

fn execute(cfg: &RunConfig) -> Result<Outputs> {
    match cfg.kind {
        ExperimentKind::Means => run_means(cfg),
        ExperimentKind::Distributions => run_distributions(cfg),
        ExperimentKind::ClassicalConvergence => run_convergence(cfg),
        ExperimentKind::Poincare => run_poincare(cfg),
        ExperimentKind::Lyapunov => run_lyapunov(cfg),
    }
}

fn orbit_for(cfg: &RunConfig) -> Result<OrbitSolution> {
    build_orbit_table(&OrbitParams::new(cfg.system.e))
}

/// Initial ensembles, one per replicate, with the members split as evenly
/// as possible.
fn replicate_ensembles(cfg: &RunConfig, spec: &InitialStateSpec, j0: f64) -> Result<Vec<ClassicalEnsemble>> {
    let r = cfg.ensemble.replicates;
    let params = cfg.system_params();
    let spec = InitialStateSpec { j0, ..*spec };
    (0..r)
        .map(|i| {
            let size = cfg.ensemble.n / r + usize::from(i < cfg.ensemble.n % r);
            let seed = derive_seed(cfg.seed, Domain::Ensemble, i as u64);
            sample_initial_ensemble_with(&spec, &params, size, seed, cfg.ensemble.sampling)
        })
        .collect()
}

fn single_ensemble(cfg: &RunConfig, spec: &InitialStateSpec, j0: f64) -> Result<ClassicalEnsemble> {
    let spec = InitialStateSpec { j0, ..*spec };
    let seed = derive_seed(cfg.seed, Domain::Ensemble, 0);
    sample_initial_ensemble_with(&spec, &cfg.system_params(), cfg.ensemble.n, seed, cfg.ensemble.sampling)
}

fn noise_seeds(cfg: &RunConfig) -> Vec<u64> {
    (0..cfg.realizations()).map(|i| realization_seed(cfg.seed, i)).collect()
}

fn noise_trace(cfg: &RunConfig, noise: &NoiseParams, seed: u64, out: &mut Outputs) -> Result<()> {
    if !cfg.record.noise_trace {
        return Ok(());
    }
    let r = make_noise_realization(&noise.with_seed(seed), cfg.record.tau_end, cfg.system.dtau)?;
    let mut t = CsvTable::new("noise_trace", &["tau", "r"]);
    for (tau, v) in r.trace() {
        t.push(vec![tau, v]);
    }
    out.csv("noise_trace.csv", &t);
    Ok(())
}

fn noise_metrics(cfg: &RunConfig, noise: &NoiseParams, out: &mut Outputs) {
    let d = diffusion_parameter(noise);
    out.metric("sigma", noise.sigma);
    out.metric("diffusion", d);
    out.metric("xi", cfg.system.beta * cfg.system.beta / d);
}

fn run_means(cfg: &RunConfig) -> Result<Outputs> {
    let params = cfg.system_params();
    let spec = cfg.initial_spec()?;
    let orbit = orbit_for(cfg)?;
    let times = cfg.record_times();
    let tau_end = cfg.record.tau_end;
    let mut out = Outputs::default();

    let (qm, cl, stderr): (Vec<f64>, Vec<f64>, Vec<f64>);
    if let Some(noise) = cfg.noise_params()? {
        let seeds = noise_seeds(cfg);
        let state = init_quantum_state(&spec, &params, cfg.cutoff())?;
        let ens = single_ensemble(cfg, &spec, spec.j0)?;
        let avg = run_realization_average(
            &QuantumRunSpec {
                state: &state,
                controls: cfg.controls(),
            },
            &ClassicalRunSpec { ensemble: &ens },
            &params,
            &orbit,
            &noise,
            &seeds,
            tau_end,
            &times,
        )?;
        let r = seeds.len() as f64;
        let chunk = ens.len() / seeds.len();
        let weights: Vec<f64> = (0..seeds.len())
            .map(|i| if i + 1 == seeds.len() { (ens.len() - chunk * i) as f64 } else { chunk as f64 })
            .collect();
        let n = ens.len() as f64;
        let mut q = vec![0.0; times.len()];
        let mut c = vec![0.0; times.len()];
        let mut s = vec![0.0; times.len()];
        for t in 0..times.len() {
            q[t] = avg.qm_mean.iter().map(|m| m[t]).sum::<f64>() / r;
            c[t] = avg.cl_mean.iter().zip(&weights).map(|(m, w)| m[t] * w).sum::<f64>() / n;
            let diffs: Vec<f64> = avg.qm_mean.iter().zip(&avg.cl_mean).map(|(a, b)| a[t] - b[t]).collect();
            s[t] = std_error(&diffs);
        }
        qm = q;
        cl = c;
        stderr = s;
        noise_metrics(cfg, &noise, &mut out);
        noise_trace(cfg, &noise, seeds[0], &mut out)?;
    } else {
        let state = init_quantum_state(&spec, &params, cfg.cutoff())?;
        let q = evolve_quantum_stats(
            &state,
            &params,
            &orbit,
            tau_end,
            &cfg.controls(),
            None,
            &times,
            QuantumRecordRequest::default(),
        )?;
        let max_drift = q.norm_drift.iter().fold(0.0f64, |a, d| a.max(d.abs()));
        out.metric("max_norm_drift", max_drift);
        qm = q.mean_jz;
        let replicates = replicate_ensembles(cfg, &spec, spec.j0)?;
        let mut means = Vec::with_capacity(replicates.len());
        let mut var = vec![0.0; times.len()];
        for ens in &replicates {
            let rec = evolve_ensemble_stats(ens, &params, &orbit, tau_end, None, &times, RecordRequest::default())?;
            for (v, x) in var.iter_mut().zip(&rec.var_jz) {
                *v += x * ens.len() as f64 / cfg.ensemble.n as f64;
            }
            means.push((rec.mean_jz, ens.len()));
        }
        let n = cfg.ensemble.n as f64;
        cl = (0..times.len())
            .map(|t| means.iter().map(|(m, w)| m[t] * *w as f64).sum::<f64>() / n)
            .collect();
        stderr = (0..times.len())
            .map(|t| {
                if means.len() >= 2 {
                    std_error(&means.iter().map(|(m, _)| m[t]).collect::<Vec<_>>())
                } else {
                    (var[t] / n).sqrt()
                }
            })
            .collect();
    }

    let diff: Vec<f64> = qm.iter().zip(&cl).map(|(a, b)| a - b).collect();
    let mut table = CsvTable::new("means", &["tau", "qm_mean_jz", "cl_mean_jz", "diff", "diff_stderr"]);
    for i in 0..times.len() {
        table.push(vec![times[i], qm[i], cl[i], diff[i], stderr[i]]);
    }
    out.csv("means.csv", &table);
    means_metrics(cfg, &times, &qm, &cl, &diff, &stderr, &orbit, &mut out)?;
    write_snapshots(cfg, &spec, &orbit, &mut out)?;
    Ok(out)
}

fn std_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return f64::NAN;
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

fn covers(times: &[f64], w: [f64; 2]) -> bool {
    times.last().is_some_and(|&t| t >= w[1] - 1e-9)
}

#[allow(clippy::too_many_arguments)]
fn means_metrics(
    cfg: &RunConfig,
    times: &[f64],
    qm: &[f64],
    cl: &[f64],
    diff: &[f64],
    stderr: &[f64],
    orbit: &OrbitSolution,
    out: &mut Outputs,
) -> Result<()> {
    let a = &cfg.analysis;
    let window = |w: [f64; 2]| times.iter().enumerate().filter(move |(_, t)| **t >= w[0] - 1e-9 && **t <= w[1] + 1e-9).map(|(i, _)| i);

    if let Some(i) = window(a.peak_window).max_by(|&i, &j| diff[i].abs().total_cmp(&diff[j].abs())) {
        out.metric("peak_abs_diff", diff[i].abs());
        out.metric("peak_tau", times[i]);
        out.metric("peak_stderr", stderr[i]);
        out.metric("peak_snr", diff[i].abs() / stderr[i]);
        let worst = window(a.peak_window).map(|i| stderr[i]).fold(0.0f64, f64::max);
        out.metric("max_stderr_in_peak_window", worst);
    }

    let (env_t, env_v) = envelope(times, diff, a.envelope_width)?;
    if covers(times, a.growth_window) {
        match fit_exponential(&env_t, &env_v, (a.growth_window[0], a.growth_window[1])) {
            Ok(f) => {
                out.metric("growth_rate", f.rate);
                out.metric("growth_r_squared", f.r_squared);
            }
            Err(e) => out.warnings.push(format!("growth fit: {e}")),
        }
    }
    if covers(times, a.plateau_window) {
        match fit_exponential(&env_t, &env_v, (a.plateau_window[0], a.plateau_window[1])) {
            Ok(f) => out.metric("late_growth_rate", f.rate),
            Err(e) => out.warnings.push(format!("plateau fit: {e}")),
        }
        // Size of the largest difference after the plateau begins relative to
        // the largest difference reached by its start.
        let onset = a.plateau_window[0];
        let before = times.iter().zip(diff).filter(|(t, _)| **t <= onset).fold(0.0f64, |m, (_, d)| m.max(d.abs()));
        let after = times.iter().zip(diff).filter(|(t, _)| **t > onset).fold(0.0f64, |m, (_, d)| m.max(d.abs()));
        out.metric("late_to_early_max_ratio", after / before);
    }
    if covers(times, a.average_window) {
        let [lo, hi] = a.average_window;
        let abs: Vec<f64> = diff.iter().map(|d| d.abs()).collect();
        out.metric("time_avg_abs_diff", time_average(times, &abs, lo, hi)?);
        let max = window(a.average_window).map(|i| abs[i]).fold(0.0f64, f64::max);
        out.metric("max_abs_diff", max);
        out.metric("classical_saturation", time_average(times, cl, lo, hi)?);
        out.metric("quantum_saturation", time_average(times, qm, lo, hi)?);
    }
    if cfg.system.e > 0.0 && cfg.analysis.lyapunov_tau > 0.0 {
        let spec = cfg.initial_spec()?;
        let l = lyapunov_exponent((spec.phi0, spec.j0), &cfg.system_params(), orbit, cfg.analysis.lyapunov_tau)?;
        out.metric("lyapunov", l.lambda);
        out.metric("lyapunov_stderr", l.std_err);
        if let Some(g) = out.metrics.get("growth_rate").copied() {
            out.metric("growth_over_two_lyapunov", g / (2.0 * l.lambda));
        }
    }
    Ok(())
}

/// Phase-space and wave-function snapshots of a noise-free run.
fn write_snapshots(cfg: &RunConfig, spec: &InitialStateSpec, orbit: &OrbitSolution, out: &mut Outputs) -> Result<()> {
    let times = &cfg.record.snapshot_times;
    if cfg.record.snapshots == SnapshotFormat::None || times.is_empty() {
        return Ok(());
    }
    if cfg.noise.is_some() {
        out.warnings.push("snapshots are only written for noise-free runs".into());
        return Ok(());
    }
    let params = cfg.system_params();
    let end = times.last().copied().unwrap_or(0.0).max(params.dtau);
    let ens = replicate_ensembles(cfg, spec, spec.j0)?.remove(0);
    let cl = evolve_ensemble_stats(
        &ens,
        &params,
        orbit,
        end,
        None,
        times,
        RecordRequest {
            histogram: None,
            snapshots: true,
        },
    )?;
    let state = init_quantum_state(spec, &params, cfg.cutoff())?;
    let q = evolve_quantum_stats(
        &state,
        &params,
        orbit,
        end,
        &cfg.controls(),
        None,
        times,
        QuantumRecordRequest {
            probabilities: false,
            states: true,
        },
    )?;
    match cfg.record.snapshots {
        SnapshotFormat::Csv => {
            out.csv("classical_snapshots.csv", &classical_snapshot_table(&cl.snapshots));
            out.csv("quantum_snapshots.csv", &quantum_snapshot_table(&q.states));
        }
        SnapshotFormat::Binary => {
            for (i, s) in cl.snapshots.iter().enumerate() {
                out.files.push((format!("classical_snapshot_{i:03}.bin"), encode_classical_snapshot(s)));
            }
            for (i, s) in q.states.iter().enumerate() {
                out.files.push((format!("quantum_snapshot_{i:03}.bin"), encode_quantum_snapshot(s)));
            }
        }
        SnapshotFormat::None => {}
    }
    Ok(())
}

fn variance_of(p: &ProbabilityVector) -> f64 {
    let mean = p.mean_jz();
    p.iter().map(|(m, x)| x * (p.beta * m as f64 - mean).powi(2)).sum()
}

fn fmt_key(v: f64) -> String {
    format!("{v}")
}

fn run_distributions(cfg: &RunConfig) -> Result<Outputs> {
    let params = cfg.system_params();
    let spec = cfg.initial_spec()?;
    let orbit = orbit_for(cfg)?;
    let times = cfg.record_times();
    let tau_end = cfg.record.tau_end;
    let k = cfg.cutoff();
    let mut out = Outputs::default();
    let state = init_quantum_state(&spec, &params, k)?;
    let ens = single_ensemble(cfg, &spec, spec.j0)?;

    let noise = cfg.noise_params()?;
    let (p_qm, p_cl) = if let Some(noise) = noise {
        let seeds = noise_seeds(cfg);
        let avg = run_realization_average(
            &QuantumRunSpec {
                state: &state,
                controls: cfg.controls(),
            },
            &ClassicalRunSpec { ensemble: &ens },
            &params,
            &orbit,
            &noise,
            &seeds,
            tau_end,
            &times,
        )?;
        noise_metrics(cfg, &noise, &mut out);
        noise_trace(cfg, &noise, seeds[0], &mut out)?;
        (avg.p_qm, avg.p_cl)
    } else {
        let q = evolve_quantum_stats(
            &state,
            &params,
            &orbit,
            tau_end,
            &cfg.controls(),
            None,
            &times,
            QuantumRecordRequest {
                probabilities: true,
                states: false,
            },
        )?;
        let max_drift = q.norm_drift.iter().fold(0.0f64, |a, d| a.max(d.abs()));
        out.metric("max_norm_drift", max_drift);
        let c = evolve_ensemble_stats(
            &ens,
            &params,
            &orbit,
            tau_end,
            None,
            &times,
            RecordRequest {
                histogram: Some(HistogramSpec { beta: params.beta, k }),
                snapshots: false,
            },
        )?;
        (q.probabilities, c.histograms)
    };

    let smoothing = &cfg.analysis.smoothing;
    let mut columns: Vec<String> = vec!["tau".into(), "one_norm".into()];
    columns.extend(smoothing.iter().map(|ds| format!("smoothed_{}", fmt_key(*ds))));
    let col_refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut series = CsvTable::new("one_norm", &col_refs);
    let mut raw = Vec::with_capacity(times.len());
    let mut smoothed: Vec<Vec<f64>> = vec![Vec::with_capacity(times.len()); smoothing.len()];
    for (t, (q, c)) in times.iter().zip(p_qm.iter().zip(&p_cl)) {
        let d = one_norm(q, c)?;
        raw.push(d);
        let mut row = vec![*t, d];
        for (j, ds) in smoothing.iter().enumerate() {
            let s = one_norm(&triangular_smooth(q, *ds)?, &triangular_smooth(c, *ds)?)?;
            smoothed[j].push(s);
            row.push(s);
        }
        series.push(row);
    }
    out.csv("one_norm.csv", &series);

    let mut dist = CsvTable::new("distributions", &["tau", "m", "beta_m", "p_qm", "p_cl"]);
    for &t in &cfg.record.distribution_times {
        let i = cfg.record_index(t, "record.distribution_times")?;
        for ((m, pq), (_, pc)) in p_qm[i].iter().zip(p_cl[i].iter()) {
            if pq > 0.0 || pc > 0.0 {
                dist.push(vec![times[i], m as f64, params.beta * m as f64, pq, pc]);
            }
        }
    }
    if !dist.rows.is_empty() {
        out.csv("distributions.csv", &dist);
    }

    let (imax, max) = raw
        .iter()
        .enumerate()
        .skip(1)
        .fold((0, 0.0f64), |b, (i, v)| if *v > b.1 { (i, *v) } else { b });
    out.metric("max_one_norm", max);
    out.metric("max_one_norm_tau", times[imax]);
    for t in cfg.norm_times() {
        let i = cfg.record_index(t, "analysis.norm_times")?;
        let key = fmt_key(t);
        out.metric(format!("one_norm_t{key}"), raw[i]);
        out.metric(format!("floor_t{key}"), multinomial_one_norm_floor(&p_cl[i], cfg.ensemble.n));
        out.metric(
            format!("sigma_m_t{key}"),
            (variance_of(&p_cl[i]) / cfg.ensemble.n as f64).sqrt(),
        );
        let mut points = Vec::new();
        for (j, ds) in smoothing.iter().enumerate() {
            let s = smoothed[j][i];
            out.metric(format!("smoothed_t{key}_ds{}", fmt_key(*ds)), s);
            out.metric(format!("reduction_t{key}_ds{}", fmt_key(*ds)), raw[i] / s);
            points.push(SmoothingPoint {
                beta: params.beta,
                delta_s: *ds,
                one_norm: s,
            });
        }
        out.smoothing.insert(key, points);
    }
    if noise.is_some() {
        match fit_decay_time(&times, &raw) {
            Ok(f) => {
                out.metric("decay_tau_d", f.tau_d);
                out.metric("decay_floor", f.floor);
                out.metric("decay_rms_residual", f.rms_residual);
                out.decay = Some(f);
            }
            Err(e) => out.warnings.push(format!("decay fit: {e}")),
        }
    }
    Ok(out)
}

fn run_convergence(cfg: &RunConfig) -> Result<Outputs> {
    let params = cfg.system_params();
    let spec = cfg.initial_spec()?;
    let j0_b = cfg.convergence.expect("validated").j0_b;
    let orbit = orbit_for(cfg)?;
    let times = cfg.record_times();
    let k = cfg.cutoff();
    let mut out = Outputs::default();
    let a = single_ensemble(cfg, &spec, spec.j0)?;
    let b = {
        let s = InitialStateSpec { j0: j0_b, ..spec };
        let seed = derive_seed(cfg.seed, Domain::Ensemble, 1);
        sample_initial_ensemble_with(&s, &params, cfg.ensemble.n, seed, cfg.ensemble.sampling)?
    };
    let (pa, pb) = if let Some(noise) = cfg.noise_params()? {
        let seeds = noise_seeds(cfg);
        let r = run_classical_pair_average(&a, &b, &params, &orbit, &noise, &seeds, cfg.record.tau_end, &times, k)?;
        noise_metrics(cfg, &noise, &mut out);
        noise_trace(cfg, &noise, seeds[0], &mut out)?;
        (r.p_a, r.p_b)
    } else {
        let req = RecordRequest {
            histogram: Some(HistogramSpec { beta: params.beta, k }),
            snapshots: false,
        };
        let ra = evolve_ensemble_stats(&a, &params, &orbit, cfg.record.tau_end, None, &times, req)?;
        let rb = evolve_ensemble_stats(&b, &params, &orbit, cfg.record.tau_end, None, &times, req)?;
        (ra.histograms, rb.histograms)
    };
    let mut table = CsvTable::new("pair_norm", &["tau", "one_norm"]);
    let mut norms = Vec::with_capacity(times.len());
    for (t, (x, y)) in times.iter().zip(pa.iter().zip(&pb)) {
        let d = one_norm(x, y)?;
        norms.push(d);
        table.push(vec![*t, d]);
    }
    out.csv("pair_norm.csv", &table);
    out.metric("floor", multinomial_one_norm_floor(pa.last().expect("non-empty"), cfg.ensemble.n) * 2f64.sqrt());
    match fit_decay_time(&times, &norms) {
        Ok(f) => {
            out.metric("decay_tau_d", f.tau_d);
            out.metric("decay_floor", f.floor);
            out.metric("decay_rms_residual", f.rms_residual);
            out.decay = Some(f);
        }
        Err(e) => out.warnings.push(format!("decay fit: {e}")),
    }
    Ok(out)
}

fn run_poincare(cfg: &RunConfig) -> Result<Outputs> {
    let p = cfg.poincare.as_ref().expect("validated");
    let mut starts: Vec<(f64, f64)> = p.starts.iter().map(|s| (s[0], s[1])).collect();
    if let Some([lo, hi, count]) = p.jz_grid {
        let n = count as usize;
        for i in 0..n {
            let jz = if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
            starts.push((0.0, jz));
        }
    }
    let orbit = orbit_for(cfg)?;
    let points = poincare_section(&starts, &cfg.system_params(), &orbit, p.periods)?;
    let mut t = CsvTable::new("poincare", &["trajectory", "period", "phi", "jz"]);
    for pt in &points {
        t.push(vec![pt.trajectory as f64, pt.period as f64, pt.phi, pt.jz]);
    }
    let mut out = Outputs::default();
    out.csv("poincare.csv", &t);
    out.metric("points", points.len() as f64);
    Ok(out)
}

fn run_lyapunov(cfg: &RunConfig) -> Result<Outputs> {
    let l = cfg.lyapunov.as_ref().expect("validated");
    let orbit = orbit_for(cfg)?;
    let params = cfg.system_params();
    let mut t = CsvTable::new("lyapunov", &["phi", "jz", "lambda", "std_err"]);
    let mut out = Outputs::default();
    let mut lambdas = Vec::new();
    for s in &l.starts {
        let est = lyapunov_exponent((s[0], s[1]), &params, &orbit, l.tau_total)?;
        t.push(vec![s[0], s[1], est.lambda, est.std_err]);
        lambdas.push(est.lambda);
    }
    out.csv("lyapunov.csv", &t);
    out.metric("lambda_mean", lambdas.iter().sum::<f64>() / lambdas.len() as f64);
    out.metric("lambda_min", lambdas.iter().copied().fold(f64::INFINITY, f64::min));
    out.metric("lambda_max", lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    Ok(out)
}
