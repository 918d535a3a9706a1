//! Correlated random drive for the environmental potential `V0 R(t) cos(phi)`.
//!
//! The drive is built from i.i.d. standard normals by the recurrence
//! `R_{i+1} = c R_i + (1 - c) r_{i+1}`, held constant over update intervals of
//! length `tau_c |ln c|`. Its stationary variance is `(1 - c) / (1 + c)` and its
//! autocorrelation decays as `exp(-tau / tau_c)`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::ProbabilityVector;
use crate::classical::{evolve_ensemble_stats, ClassicalEnsemble, HistogramSpec, RecordRequest};
use crate::error::{Error, Result};
use crate::orbit::OrbitSolution;
use crate::params::SystemParams;
use crate::quantum::{evolve_quantum_stats, EvolutionControls, QuantumRecordRequest, QuantumState};
use crate::seeds::{derive_seed, stream_rng, Domain};

pub const DEFAULT_RECURRENCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Dimensionless amplitude `V0 T^2 / I3`.
    pub sigma: f64,
    /// Correlation time in orbital periods.
    pub tau_c: f64,
    /// Recurrence constant of the generator.
    #[serde(default = "default_recurrence")]
    pub c: f64,
    pub seed: u64,
}

fn default_recurrence() -> f64 {
    DEFAULT_RECURRENCE
}

impl NoiseParams {
    pub fn new(sigma: f64, tau_c: f64, seed: u64) -> Self {
        NoiseParams {
            sigma,
            tau_c,
            c: DEFAULT_RECURRENCE,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("sigma", "must be non-negative"));
        }
        if !(self.tau_c > 0.0) {
            return Err(Error::param("tau_c", "must be positive"));
        }
        validate_recurrence(self.c)
    }

    /// Time between generator updates, `tau_c |ln c|`.
    pub fn update_interval(&self) -> f64 {
        self.tau_c * self.c.ln().abs()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn validate_recurrence(c: f64) -> Result<()> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::param("c", format!("{c} outside (0, 1)")));
    }
    Ok(())
}

/// Correlated sequence `R_1..R_n` with `R_1 = r_1`.
pub fn correlated_sequence(c: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    validate_recurrence(c)?;
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    let mut rng = stream_rng(seed, 0);
    let mut out = Vec::with_capacity(n);
    let mut r: f64 = rng.sample(StandardNormal);
    out.push(r);
    for _ in 1..n {
        let x: f64 = rng.sample(StandardNormal);
        r = c * r + (1.0 - c) * x;
        out.push(r);
    }
    Ok(out)
}

/// Piecewise-constant drive `R(tau)` for one realization of the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRealization {
    pub update_interval: f64,
    pub values: Vec<f64>,
    pub params: NoiseParams,
}

impl NoiseRealization {
    /// `R(tau)`; constant on `[i dt, (i + 1) dt)`.
    #[inline]
    pub fn value_at(&self, tau: f64) -> f64 {
        let idx = (tau / self.update_interval).floor();
        let idx = if idx <= 0.0 { 0 } else { idx as usize };
        self.values[idx.min(self.values.len() - 1)]
    }

    pub fn sigma(&self) -> f64 {
        self.params.sigma
    }

    /// Time span covered by the stored values.
    pub fn covered(&self) -> f64 {
        self.values.len() as f64 * self.update_interval
    }

    /// `(tau, R)` rows, one per update, for audit output.
    pub fn trace(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &r)| (i as f64 * self.update_interval, r))
    }
}

/// Builds a realization long enough to cover `[0, tau_end]`. `dtau` is the step
/// of the integrators that will consume it; the drive must not change faster
/// than they sample it.
pub fn make_noise_realization(
    params: &NoiseParams,
    tau_end: f64,
    dtau: f64,
) -> Result<NoiseRealization> {
    params.validate()?;
    if !(tau_end > 0.0) {
        return Err(Error::param("tau_end", "must be positive"));
    }
    let interval = params.update_interval();
    if interval < dtau {
        return Err(Error::param(
            "tau_c",
            format!("update interval {interval:e} is shorter than the integrator step {dtau:e}"),
        ));
    }
    let n = (tau_end / interval).ceil() as usize + 1;
    let values = correlated_sequence(params.c, n, params.seed)?;
    Ok(NoiseRealization {
        update_interval: interval,
        values,
        params: *params,
    })
}

/// Dimensionless momentum diffusion parameter, `sigma^2 tau_c / 6` at `c = 1/2`.
///
/// For other `c` this is `sigma^2 tau_c (1 - c) / (2 (1 + c))`, the same
/// continuous-correlation result before `c` is fixed.
pub fn diffusion_parameter(params: &NoiseParams) -> f64 {
    let c = params.c;
    params.sigma * params.sigma * params.tau_c * (1.0 - c) / (2.0 * (1.0 + c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionEstimate {
    pub d_hat: f64,
    pub std_err: f64,
    /// False when the relative standard error exceeds 5 %.
    pub sufficient: bool,
}

/// Monte-Carlo estimate of `D` from free random walks under the torque
/// `sigma R(tau) sin(phi)`, with each walker's angle drawn uniformly and held
/// fixed. Returns `Var(dJ) / (2 tau_end)`.
pub fn empirical_diffusion(
    params: &NoiseParams,
    n_walks: usize,
    tau_end: f64,
    seed: u64,
) -> Result<DiffusionEstimate> {
    params.validate()?;
    if n_walks < 2 {
        return Err(Error::param("n_walks", "need at least two walks"));
    }
    let interval = params.update_interval();
    if tau_end < 10.0 * params.tau_c {
        return Err(Error::param("tau_end", "must be much longer than tau_c"));
    }
    let full = (tau_end / interval).floor() as usize;
    let tail = tau_end - full as f64 * interval;

    let mut samples = Vec::with_capacity(n_walks);
    for w in 0..n_walks {
        let walk_seed = derive_seed(seed, Domain::Walks, w as u64);
        let noise = NoiseParams {
            seed: walk_seed,
            ..*params
        };
        let values = correlated_sequence(noise.c, full + 1, walk_seed)?;
        let phi: f64 = stream_rng(walk_seed, 1).random::<f64>() * std::f64::consts::TAU;
        let integral: f64 =
            values[..full].iter().sum::<f64>() * interval + values[full] * tail;
        samples.push(params.sigma * phi.sin() * integral);
    }

    let n = n_walks as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sq: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = sq.iter().sum::<f64>() / (n - 1.0);
    let d_hat = var / (2.0 * tau_end);
    let sq_mean = sq.iter().sum::<f64>() / n;
    let sq_var = sq.iter().map(|s| (s - sq_mean) * (s - sq_mean)).sum::<f64>() / (n - 1.0);
    let std_err = sq_var.sqrt() / n.sqrt() / (2.0 * tau_end);
    let sufficient = d_hat == 0.0 || std_err / d_hat <= 0.05;
    if !sufficient {
        log::warn!(
            "empirical diffusion: relative standard error {:.3} exceeds 5%",
            std_err / d_hat
        );
    }
    Ok(DiffusionEstimate {
        d_hat,
        std_err,
        sufficient,
    })
}

/// Quantum side of a realization-averaged run.
#[derive(Debug, Clone)]
pub struct QuantumRunSpec<'a> {
    pub state: &'a QuantumState,
    pub controls: EvolutionControls,
}

/// Classical side: the ensemble is split into contiguous, equally sized
/// sub-ensembles, one per realization, and their histograms are pooled.
#[derive(Debug, Clone)]
pub struct ClassicalRunSpec<'a> {
    pub ensemble: &'a ClassicalEnsemble,
}

/// Averaged distributions and per-realization mean traces.
#[derive(Debug, Clone)]
pub struct RealizationAverage {
    pub tau: Vec<f64>,
    /// Uniform average of the quantum distributions over realizations.
    pub p_qm: Vec<ProbabilityVector>,
    /// Pooled classical histogram over all sub-ensembles.
    pub p_cl: Vec<ProbabilityVector>,
    /// `<Jz>` per realization (outer) and record time (inner).
    pub qm_mean: Vec<Vec<f64>>,
    pub cl_mean: Vec<Vec<f64>>,
    pub seeds: Vec<u64>,
}

/// Noise seed of realization `index` under `master`.
pub fn realization_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, Domain::Noise, index as u64)
}

/// Runs the quantum state and a classical sub-ensemble under each noise
/// realization in `seeds`; realization `i` drives both sides with the same
/// `R(tau)`.
#[allow(clippy::too_many_arguments)]
pub fn run_realization_average(
    quantum: &QuantumRunSpec<'_>,
    classical: &ClassicalRunSpec<'_>,
    params: &SystemParams,
    orbit: &OrbitSolution,
    noise: &NoiseParams,
    seeds: &[u64],
    tau_end: f64,
    record_at: &[f64],
) -> Result<RealizationAverage> {
    noise.validate()?;
    let n_real = seeds.len();
    if n_real == 0 {
        return Err(Error::param("n_realizations", "must be at least 1"));
    }
    let ens = classical.ensemble;
    if ens.len() < n_real {
        return Err(Error::param(
            "ensemble",
            format!("{} members cannot be split over {n_real} realizations", ens.len()),
        ));
    }
    let k = quantum.state.k;
    let hist = HistogramSpec {
        beta: params.beta,
        k,
    };
    let dtau = params.dtau.min(quantum.controls.dtau);

    struct Member {
        p_qm: Vec<ProbabilityVector>,
        counts: Vec<Vec<f64>>,
        qm_mean: Vec<f64>,
        cl_mean: Vec<f64>,
        tau: Vec<f64>,
        n_cl: usize,
    }

    let members: Vec<Result<Member>> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let wrap = |e: Error| Error::Realization {
                index: i,
                source: Box::new(e),
            };
            let realization = make_noise_realization(&noise.with_seed(seed), tau_end, dtau).map_err(wrap)?;
            let q = evolve_quantum_stats(
                quantum.state,
                params,
                orbit,
                tau_end,
                &quantum.controls,
                Some(&realization),
                record_at,
                QuantumRecordRequest {
                    probabilities: true,
                    states: false,
                },
            )
            .map_err(wrap)?;
            let c = classical_member(ens, i, n_real, params, orbit, &realization, tau_end, record_at, hist)
                .map_err(wrap)?;
            Ok(Member {
                p_qm: q.probabilities,
                counts: c.counts,
                qm_mean: q.mean_jz,
                cl_mean: c.mean_jz,
                tau: q.tau,
                n_cl: c.n,
            })
        })
        .collect();
    let members = members.into_iter().collect::<Result<Vec<_>>>()?;

    let tau = members[0].tau.clone();
    let mut p_qm = Vec::with_capacity(tau.len());
    for r in 0..tau.len() {
        let q: Vec<ProbabilityVector> = members.iter().map(|m| m.p_qm[r].clone()).collect();
        p_qm.push(ProbabilityVector::average(&q)?);
    }
    let p_cl = pool_counts(members.iter().map(|m| (&m.counts, m.n_cl)), tau.len(), hist);
    Ok(RealizationAverage {
        tau,
        p_qm,
        p_cl,
        qm_mean: members.iter().map(|m| m.qm_mean.clone()).collect(),
        cl_mean: members.iter().map(|m| m.cl_mean.clone()).collect(),
        seeds: seeds.to_vec(),
    })
}

struct ClassicalMember {
    counts: Vec<Vec<f64>>,
    mean_jz: Vec<f64>,
    tau: Vec<f64>,
    n: usize,
}

/// Evolves sub-ensemble `i` of `n_real` under one realization and returns its
/// histogram counts.
#[allow(clippy::too_many_arguments)]
fn classical_member(
    ens: &ClassicalEnsemble,
    i: usize,
    n_real: usize,
    params: &SystemParams,
    orbit: &OrbitSolution,
    realization: &NoiseRealization,
    tau_end: f64,
    record_at: &[f64],
    hist: HistogramSpec,
) -> Result<ClassicalMember> {
    let chunk = ens.len() / n_real;
    let lo = i * chunk;
    let hi = if i + 1 == n_real { ens.len() } else { lo + chunk };
    let sub = ClassicalEnsemble {
        phi: ens.phi[lo..hi].to_vec(),
        jz: ens.jz[lo..hi].to_vec(),
        seed: ens.seed,
        tau: ens.tau,
    };
    let c = evolve_ensemble_stats(
        &sub,
        params,
        orbit,
        tau_end,
        Some(realization),
        record_at,
        RecordRequest {
            histogram: Some(hist),
            snapshots: false,
        },
    )?;
    let n = hi - lo;
    Ok(ClassicalMember {
        counts: c
            .histograms
            .iter()
            .map(|h| h.p.iter().map(|p| (p * n as f64).round()).collect())
            .collect(),
        mean_jz: c.mean_jz,
        tau: c.tau,
        n,
    })
}

fn pool_counts<'a>(
    members: impl Iterator<Item = (&'a Vec<Vec<f64>>, usize)> + Clone,
    n_rec: usize,
    hist: HistogramSpec,
) -> Vec<ProbabilityVector> {
    let total: usize = members.clone().map(|m| m.1).sum();
    (0..n_rec)
        .map(|r| {
            let mut pooled = vec![0.0; 2 * hist.k + 1];
            for (counts, _) in members.clone() {
                for (a, b) in pooled.iter_mut().zip(&counts[r]) {
                    *a += b;
                }
            }
            pooled.iter_mut().for_each(|x| *x /= total as f64);
            ProbabilityVector {
                beta: hist.beta,
                m_min: -(hist.k as i64),
                p: pooled,
            }
        })
        .collect()
}

/// Pooled histograms of two classical ensembles that share every noise
/// realization: sub-ensemble `i` of each runs under realization `i`.
#[derive(Debug, Clone)]
pub struct ClassicalPairAverage {
    pub tau: Vec<f64>,
    pub p_a: Vec<ProbabilityVector>,
    pub p_b: Vec<ProbabilityVector>,
}

/// Runs two classical ensembles through the same noise realizations, for
/// measuring how fast the environment washes out their difference.
#[allow(clippy::too_many_arguments)]
pub fn run_classical_pair_average(
    a: &ClassicalEnsemble,
    b: &ClassicalEnsemble,
    params: &SystemParams,
    orbit: &OrbitSolution,
    noise: &NoiseParams,
    seeds: &[u64],
    tau_end: f64,
    record_at: &[f64],
    k: usize,
) -> Result<ClassicalPairAverage> {
    noise.validate()?;
    let n_real = seeds.len();
    if n_real == 0 {
        return Err(Error::param("n_realizations", "must be at least 1"));
    }
    if a.len() < n_real || b.len() < n_real {
        return Err(Error::param("ensemble", "fewer members than realizations"));
    }
    let hist = HistogramSpec { beta: params.beta, k };
    let members: Vec<Result<(ClassicalMember, ClassicalMember)>> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let wrap = |e: Error| Error::Realization {
                index: i,
                source: Box::new(e),
            };
            let realization =
                make_noise_realization(&noise.with_seed(seed), tau_end, params.dtau).map_err(wrap)?;
            let ma = classical_member(a, i, n_real, params, orbit, &realization, tau_end, record_at, hist)
                .map_err(wrap)?;
            let mb = classical_member(b, i, n_real, params, orbit, &realization, tau_end, record_at, hist)
                .map_err(wrap)?;
            Ok((ma, mb))
        })
        .collect();
    let members = members.into_iter().collect::<Result<Vec<_>>>()?;
    let tau = members[0].0.tau.clone();
    let n_rec = tau.len();
    Ok(ClassicalPairAverage {
        p_a: pool_counts(members.iter().map(|m| (&m.0.counts, m.0.n)), n_rec, hist),
        p_b: pool_counts(members.iter().map(|m| (&m.1.counts, m.1.n)), n_rec, hist),
        tau,
    })
}
