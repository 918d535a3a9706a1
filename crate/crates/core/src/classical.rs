//! Classical Liouville dynamics by Monte-Carlo ensembles.
//!
//! Each member obeys
//!
//! ```text
//! dphi/dtau = Jz
//! dJz/dtau  = -6 pi^2 alpha (a/r)^3 sin(2 (phi - theta)) + sigma R(tau) sin(phi)
//! ```
//!
//! integrated with fixed-step RK4. The noise term is present only when a
//! realization is supplied; `R` is sampled at the step midpoint and held for
//! the whole step. Angles are kept unwrapped and reduced mod `2 pi` only on
//! output.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::ProbabilityVector;
use crate::environment::NoiseRealization;
use crate::error::{Error, Result};
use crate::orbit::OrbitSolution;
use crate::params::{record_steps, InitialStateSpec, SystemParams};
use crate::special::fast_sin;
use crate::seeds::stream_rng;

/// Trajectories per work unit. Reductions sum block partials in block order,
/// so results do not depend on how blocks are scheduled.
pub const BLOCK: usize = 1024;

/// How initial conditions are drawn from the Gaussian initial density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Independent pseudo-random draws, one ChaCha stream per trajectory.
    #[default]
    Random,
    /// Antithetic pairs: trajectory `2k + 1` mirrors trajectory `2k` about the
    /// center of the initial density.
    Antithetic,
    /// Randomly shifted rank-1 lattice with the tent transform, mapped through
    /// the inverse normal CDF. Equal weights like `Random`, but ensemble means
    /// of smooth observables converge much faster than `n^{-1/2}`; the error is
    /// estimated from independently shifted replicates.
    Lattice,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalEnsemble {
    /// Unwrapped angles.
    pub phi: Vec<f64>,
    pub jz: Vec<f64>,
    pub seed: u64,
    /// Time of the stored state.
    pub tau: f64,
}

impl ClassicalEnsemble {
    pub fn len(&self) -> usize {
        self.jz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jz.is_empty()
    }

    /// Angles reduced to `[0, 2 pi)`.
    pub fn phi_wrapped(&self) -> Vec<f64> {
        self.phi.iter().map(|&p| wrap_angle(p)).collect()
    }
}

#[inline]
pub fn wrap_angle(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

pub fn sample_initial_ensemble(
    spec: &InitialStateSpec,
    params: &SystemParams,
    n: usize,
    seed: u64,
) -> Result<ClassicalEnsemble> {
    sample_initial_ensemble_with(spec, params, n, seed, Sampling::Random)
}

pub fn sample_initial_ensemble_with(
    spec: &InitialStateSpec,
    params: &SystemParams,
    n: usize,
    seed: u64,
    sampling: Sampling,
) -> Result<ClassicalEnsemble> {
    spec.validate()?;
    params.validate()?;
    if n == 0 {
        return Err(Error::param("n", "ensemble needs at least one member"));
    }
    let sigma_phi = spec.sigma_phi(params.beta);
    if sigma_phi > 1.0 {
        log::warn!("initial angle width {sigma_phi:.3} rad is no longer narrow");
    }
    let draw = |i: usize| -> (f64, f64) {
        let mut rng = stream_rng(seed, i as u64);
        let zj: f64 = rng.sample(StandardNormal);
        let zp: f64 = rng.sample(StandardNormal);
        (zj, zp)
    };
    let lattice = (sampling == Sampling::Lattice).then(|| Lattice::new(n, seed));
    let mut phi = Vec::with_capacity(n);
    let mut jz = Vec::with_capacity(n);
    for i in 0..n {
        let (zj, zp) = match sampling {
            Sampling::Random => draw(i),
            Sampling::Lattice => lattice.as_ref().expect("lattice").normal_point(i),
            Sampling::Antithetic => {
                let (a, b) = draw(i / 2);
                if i % 2 == 0 {
                    (a, b)
                } else {
                    (-a, -b)
                }
            }
        };
        jz.push(spec.j0 + spec.sigma_j * zj);
        phi.push(spec.phi0 + sigma_phi * zp);
    }
    Ok(ClassicalEnsemble {
        phi,
        jz,
        seed,
        tau: 0.0,
    })
}

/// Golden-ratio rank-1 lattice `(i / n, i a / n)` with a random shift.
struct Lattice {
    n: usize,
    a: usize,
    shift: (f64, f64),
    normal: Normal,
}

impl Lattice {
    fn new(n: usize, seed: u64) -> Self {
        let golden = 0.5 * (1.0 + 5f64.sqrt());
        let mut a = ((n as f64 / golden).round() as usize).max(1);
        while gcd(a, n) != 1 {
            a += 1;
        }
        let mut rng = stream_rng(seed, u64::MAX);
        Lattice {
            n,
            a,
            shift: (rng.random(), rng.random()),
            normal: Normal::standard(),
        }
    }

    fn normal_point(&self, i: usize) -> (f64, f64) {
        let u = (i as f64 / self.n as f64 + self.shift.0).fract();
        let v = (((i as u128 * self.a as u128) % self.n as u128) as f64 / self.n as f64 + self.shift.1).fract();
        (self.to_normal(u), self.to_normal(v))
    }

    fn to_normal(&self, u: f64) -> f64 {
        let t = 1.0 - (2.0 * u - 1.0).abs();
        let t = t.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        self.normal.inverse_cdf(t)
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Blocked sum in fixed order.
pub(crate) fn fixed_order_sum(xs: &[f64]) -> f64 {
    xs.chunks(BLOCK)
        .map(|c| c.iter().sum::<f64>())
        .fold(0.0, |acc, s| acc + s)
}

pub fn ensemble_mean_jz(ens: &ClassicalEnsemble) -> Result<f64> {
    if ens.is_empty() {
        return Err(Error::Empty("ensemble"));
    }
    Ok(fixed_order_sum(&ens.jz) / ens.len() as f64)
}

/// Bins of width `beta` centered on `beta m`, `m` in `-k..=k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub beta: f64,
    pub k: usize,
}

impl HistogramSpec {
    #[inline]
    fn bin(&self, jz: f64) -> Option<usize> {
        let m = (jz / self.beta).round();
        let k = self.k as f64;
        if m.abs() <= k {
            Some((m + k) as usize)
        } else {
            None
        }
    }

    fn len(&self) -> usize {
        2 * self.k + 1
    }

    fn to_probabilities(self, counts: &[u64], n: usize) -> ProbabilityVector {
        let inv = 1.0 / n as f64;
        ProbabilityVector {
            beta: self.beta,
            m_min: -(self.k as i64),
            p: counts.iter().map(|&c| c as f64 * inv).collect(),
        }
    }
}

pub fn histogram_jz(ens: &ClassicalEnsemble, beta: f64, k: usize) -> Result<ProbabilityVector> {
    if ens.is_empty() {
        return Err(Error::Empty("ensemble"));
    }
    let spec = HistogramSpec { beta, k };
    let mut counts = vec![0u64; spec.len()];
    let mut outside = 0usize;
    for &j in &ens.jz {
        match spec.bin(j) {
            Some(b) => counts[b] += 1,
            None => outside += 1,
        }
    }
    if outside > 0 {
        return Err(Error::OutOfRange {
            count: outside,
            limit: beta * k as f64,
        });
    }
    Ok(spec.to_probabilities(&counts, ens.len()))
}

/// Time-dependent coefficients sampled on the half-step grid.
struct Drive {
    dt: f64,
    tau0: f64,
    /// `6 pi^2 alpha (a/r)^3` at `tau0 + k dt / 2`.
    gain: Vec<f64>,
    /// `2 theta` at the same nodes.
    two_theta: Vec<f64>,
    /// `sigma R` at step midpoints.
    noise: Option<Vec<f64>>,
}

impl Drive {
    fn new(
        params: &SystemParams,
        orbit: &OrbitSolution,
        tau0: f64,
        steps: usize,
        noise: Option<&NoiseRealization>,
    ) -> Self {
        let dt = params.dtau;
        let scale = 6.0 * PI * PI * params.alpha;
        let mut gain = Vec::with_capacity(2 * steps + 1);
        let mut two_theta = Vec::with_capacity(2 * steps + 1);
        for k in 0..=2 * steps {
            let p = orbit.at(tau0 + k as f64 * 0.5 * dt);
            gain.push(scale * p.tidal_factor());
            two_theta.push(2.0 * p.theta);
        }
        let noise = noise.map(|n| {
            (0..steps)
                .map(|s| n.sigma() * n.value_at(tau0 + (s as f64 + 0.5) * dt))
                .collect()
        });
        Drive {
            dt,
            tau0,
            gain,
            two_theta,
            noise,
        }
    }

    fn tau_at(&self, step: usize) -> f64 {
        self.tau0 + step as f64 * self.dt
    }

    /// Advances every member of the block from `from` to `to` (step indices).
    fn advance(&self, phi: &mut [f64], jz: &mut [f64], from: usize, to: usize) {
        let h = self.dt;
        let h2 = 0.5 * h;
        let h6 = h / 6.0;
        for s in from..to {
            let (g0, g1, g2) = (self.gain[2 * s], self.gain[2 * s + 1], self.gain[2 * s + 2]);
            let (t0, t1, t2) = (
                self.two_theta[2 * s],
                self.two_theta[2 * s + 1],
                self.two_theta[2 * s + 2],
            );
            match &self.noise {
                None => {
                    for (p, j) in phi.iter_mut().zip(jz.iter_mut()) {
                        let (p0, j0) = (*p, *j);
                        let a1 = -g0 * fast_sin(2.0 * p0 - t0);
                        let q2 = p0 + h2 * j0;
                        let v2 = j0 + h2 * a1;
                        let a2 = -g1 * fast_sin(2.0 * q2 - t1);
                        let q3 = p0 + h2 * v2;
                        let v3 = j0 + h2 * a2;
                        let a3 = -g1 * fast_sin(2.0 * q3 - t1);
                        let q4 = p0 + h * v3;
                        let v4 = j0 + h * a3;
                        let a4 = -g2 * fast_sin(2.0 * q4 - t2);
                        *p = p0 + h6 * (j0 + 2.0 * v2 + 2.0 * v3 + v4);
                        *j = j0 + h6 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
                    }
                }
                Some(ns) => {
                    let n = ns[s];
                    for (p, j) in phi.iter_mut().zip(jz.iter_mut()) {
                        let (p0, j0) = (*p, *j);
                        let a1 = -g0 * fast_sin(2.0 * p0 - t0) + n * fast_sin(p0);
                        let q2 = p0 + h2 * j0;
                        let v2 = j0 + h2 * a1;
                        let a2 = -g1 * fast_sin(2.0 * q2 - t1) + n * fast_sin(q2);
                        let q3 = p0 + h2 * v2;
                        let v3 = j0 + h2 * a2;
                        let a3 = -g1 * fast_sin(2.0 * q3 - t1) + n * fast_sin(q3);
                        let q4 = p0 + h * v3;
                        let v4 = j0 + h * a3;
                        let a4 = -g2 * fast_sin(2.0 * q4 - t2) + n * fast_sin(q4);
                        *p = p0 + h6 * (j0 + 2.0 * v2 + 2.0 * v3 + v4);
                        *j = j0 + h6 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
                    }
                }
            }
        }
    }
}

fn check_finite(phi: &[f64], jz: &[f64], offset: usize, tau: f64) -> Result<()> {
    for (i, (p, j)) in phi.iter().zip(jz).enumerate() {
        if !p.is_finite() || !j.is_finite() {
            return Err(Error::NonFinite {
                index: offset + i,
                tau,
            });
        }
    }
    Ok(())
}

/// What to collect at each record time.
#[derive(Debug, Clone, Copy, Default)]
pub struct RecordRequest {
    pub histogram: Option<HistogramSpec>,
    pub snapshots: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSnapshot {
    pub tau: f64,
    pub phi: Vec<f64>,
    pub jz: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EnsembleRecord {
    pub tau: Vec<f64>,
    pub mean_jz: Vec<f64>,
    /// Population variance of `Jz` at each record time.
    pub var_jz: Vec<f64>,
    pub histograms: Vec<ProbabilityVector>,
    pub snapshots: Vec<EnsembleSnapshot>,
    pub final_state: ClassicalEnsemble,
}

struct BlockOutput {
    sums: Vec<f64>,
    sq_sums: Vec<f64>,
    counts: Vec<Vec<u64>>,
    outside: usize,
    snaps: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Evolves `ens` to `tau_end` and gathers statistics at `record_at`.
pub fn evolve_ensemble_stats(
    ens: &ClassicalEnsemble,
    params: &SystemParams,
    orbit: &OrbitSolution,
    tau_end: f64,
    noise: Option<&NoiseRealization>,
    record_at: &[f64],
    request: RecordRequest,
) -> Result<EnsembleRecord> {
    params.validate()?;
    if ens.is_empty() {
        return Err(Error::Empty("ensemble"));
    }
    let span = tau_end - ens.tau;
    if !(span > 0.0) {
        return Err(Error::param("tau_end", "must lie after the ensemble time"));
    }
    let steps = params.steps_for(span)?;
    let shifted: Vec<f64> = record_at.iter().map(|t| t - ens.tau).collect();
    let rec = record_steps(&shifted, span, params.dtau)?;
    let drive = Drive::new(params, orbit, ens.tau, steps, noise);
    let n_rec = rec.len();

    let mut phi = ens.phi.clone();
    let mut jz = ens.jz.clone();
    let outputs: Vec<Result<BlockOutput>> = phi
        .par_chunks_mut(BLOCK)
        .zip(jz.par_chunks_mut(BLOCK))
        .enumerate()
        .map(|(b, (p, j))| {
            let mut out = BlockOutput {
                sums: vec![0.0; n_rec],
                sq_sums: vec![0.0; n_rec],
                counts: Vec::new(),
                outside: 0,
                snaps: Vec::new(),
            };
            let mut at = 0;
            for (r, &step) in rec.iter().enumerate() {
                drive.advance(p, j, at, step);
                at = step;
                check_finite(p, j, b * BLOCK, drive.tau_at(step))?;
                out.sums[r] = j.iter().sum();
                out.sq_sums[r] = j.iter().map(|x| x * x).sum();
                if let Some(h) = request.histogram {
                    let mut c = vec![0u64; h.len()];
                    for &x in j.iter() {
                        match h.bin(x) {
                            Some(i) => c[i] += 1,
                            None => out.outside += 1,
                        }
                    }
                    out.counts.push(c);
                }
                if request.snapshots {
                    out.snaps.push((p.to_vec(), j.to_vec()));
                }
            }
            drive.advance(p, j, at, steps);
            check_finite(p, j, b * BLOCK, drive.tau_at(steps))?;
            Ok(out)
        })
        .collect();
    let outputs = outputs.into_iter().collect::<Result<Vec<_>>>()?;

    let n = ens.len() as f64;
    let mut mean_jz = vec![0.0; n_rec];
    let mut second = vec![0.0; n_rec];
    let mut outside = 0;
    for o in &outputs {
        for r in 0..n_rec {
            mean_jz[r] += o.sums[r];
            second[r] += o.sq_sums[r];
        }
        outside += o.outside;
    }
    let var_jz: Vec<f64> = mean_jz
        .iter_mut()
        .zip(&second)
        .map(|(m, s)| {
            *m /= n;
            (s / n - *m * *m).max(0.0)
        })
        .collect();

    let mut histograms = Vec::new();
    if let Some(h) = request.histogram {
        if outside > 0 {
            return Err(Error::OutOfRange {
                count: outside,
                limit: h.beta * h.k as f64,
            });
        }
        for r in 0..n_rec {
            let mut c = vec![0u64; h.len()];
            for o in &outputs {
                for (a, b) in c.iter_mut().zip(&o.counts[r]) {
                    *a += b;
                }
            }
            histograms.push(h.to_probabilities(&c, ens.len()));
        }
    }

    let taus: Vec<f64> = rec.iter().map(|&s| drive.tau_at(s)).collect();
    let mut snapshots = Vec::new();
    if request.snapshots {
        for (r, &tau) in taus.iter().enumerate() {
            let mut sp = Vec::with_capacity(ens.len());
            let mut sj = Vec::with_capacity(ens.len());
            for o in &outputs {
                sp.extend_from_slice(&o.snaps[r].0);
                sj.extend_from_slice(&o.snaps[r].1);
            }
            snapshots.push(EnsembleSnapshot { tau, phi: sp, jz: sj });
        }
    }

    Ok(EnsembleRecord {
        tau: taus,
        mean_jz,
        var_jz,
        histograms,
        snapshots,
        final_state: ClassicalEnsemble {
            phi,
            jz,
            seed: ens.seed,
            tau: drive.tau_at(steps),
        },
    })
}

/// Full phase-space snapshots at each record time.
pub fn evolve_ensemble(
    ens: &ClassicalEnsemble,
    params: &SystemParams,
    orbit: &OrbitSolution,
    tau_end: f64,
    noise: Option<&NoiseRealization>,
    record_at: &[f64],
) -> Result<Vec<EnsembleSnapshot>> {
    let request = RecordRequest {
        histogram: None,
        snapshots: true,
    };
    Ok(evolve_ensemble_stats(ens, params, orbit, tau_end, noise, record_at, request)?.snapshots)
}

/// Energy in the frame co-rotating with a circular orbit,
/// `(Jz - 2 pi)^2 / 2 - 3 pi^2 alpha cos(2 (phi - 2 pi tau))`. Conserved when `e = 0`.
pub fn rotating_frame_energy(phi: f64, jz: f64, tau: f64, alpha: f64) -> f64 {
    let d = jz - TAU;
    0.5 * d * d - 3.0 * PI * PI * alpha * (2.0 * (phi - TAU * tau)).cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincarePoint {
    pub trajectory: usize,
    pub period: usize,
    /// Angle reduced to `[0, 2 pi)`.
    pub phi: f64,
    pub jz: f64,
}

/// Stroboscopic section at integer `tau` for each `(phi, Jz)` start point.
pub fn poincare_section(
    starts: &[(f64, f64)],
    params: &SystemParams,
    orbit: &OrbitSolution,
    n_periods: usize,
) -> Result<Vec<PoincarePoint>> {
    if n_periods == 0 {
        return Err(Error::param("n_periods", "must be at least 1"));
    }
    let per_period = params.steps_for(1.0)?;
    let ens = ClassicalEnsemble {
        phi: starts.iter().map(|s| s.0).collect(),
        jz: starts.iter().map(|s| s.1).collect(),
        seed: 0,
        tau: 0.0,
    };
    if ens.is_empty() {
        return Ok(Vec::new());
    }
    params.validate()?;
    let drive = Drive::new(params, orbit, 0.0, per_period * n_periods, None);
    let mut out = Vec::with_capacity(starts.len() * n_periods);
    let mut phi = ens.phi;
    let mut jz = ens.jz;
    for period in 1..=n_periods {
        drive.advance(&mut phi, &mut jz, (period - 1) * per_period, period * per_period);
        check_finite(&phi, &jz, 0, period as f64)?;
        for (i, (&p, &j)) in phi.iter().zip(&jz).enumerate() {
            out.push(PoincarePoint {
                trajectory: i,
                period,
                phi: wrap_angle(p),
                jz: j,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    /// Maximal exponent per orbital period.
    pub lambda: f64,
    /// Standard error from the spread of per-segment estimates.
    pub std_err: f64,
    /// True when `lambda` is not distinguishable from zero.
    pub below_resolution: bool,
}

const LYAPUNOV_SEPARATION: f64 = 1e-8;
const LYAPUNOV_RENORM: f64 = 0.1;
const LYAPUNOV_SEGMENT: f64 = 10.0;

/// Benettin two-trajectory estimate of the maximal Lyapunov exponent.
pub fn lyapunov_exponent(
    start: (f64, f64),
    params: &SystemParams,
    orbit: &OrbitSolution,
    tau_total: f64,
) -> Result<LyapunovEstimate> {
    params.validate()?;
    if tau_total < 2.0 * LYAPUNOV_SEGMENT {
        return Err(Error::param("tau_total", "too short for a Lyapunov estimate"));
    }
    if tau_total < 200.0 {
        log::warn!("Lyapunov estimate over tau = {tau_total} may not be converged");
    }
    let renorm = params.steps_for(LYAPUNOV_RENORM)?;
    let steps = params.steps_for(tau_total)?;
    let n_renorm = steps / renorm;
    let per_segment = (LYAPUNOV_SEGMENT / LYAPUNOV_RENORM).round() as usize;
    let drive = Drive::new(params, orbit, 0.0, n_renorm * renorm, None);

    let d0 = LYAPUNOV_SEPARATION;
    let u = std::f64::consts::FRAC_1_SQRT_2;
    let mut phi = [start.0, start.0 + d0 * u];
    let mut jz = [start.1, start.1 + d0 * u];
    let mut total = 0.0;
    let mut segments = Vec::new();
    let mut seg_sum = 0.0;
    for r in 0..n_renorm {
        drive.advance(&mut phi, &mut jz, r * renorm, (r + 1) * renorm);
        check_finite(&phi, &jz, 0, drive.tau_at((r + 1) * renorm))?;
        let dp = phi[1] - phi[0];
        let dj = jz[1] - jz[0];
        let d = (dp * dp + dj * dj).sqrt();
        let log_growth = (d / d0).ln();
        total += log_growth;
        seg_sum += log_growth;
        phi[1] = phi[0] + dp * d0 / d;
        jz[1] = jz[0] + dj * d0 / d;
        if (r + 1) % per_segment == 0 {
            segments.push(seg_sum / LYAPUNOV_SEGMENT);
            seg_sum = 0.0;
        }
    }
    let lambda = total / (n_renorm as f64 * LYAPUNOV_RENORM);
    let m = segments.len() as f64;
    let seg_mean = segments.iter().sum::<f64>() / m;
    let seg_var = segments.iter().map(|s| (s - seg_mean).powi(2)).sum::<f64>() / (m - 1.0);
    let std_err = (seg_var / m).sqrt();
    Ok(LyapunovEstimate {
        lambda,
        std_err,
        below_resolution: lambda.abs() < 3.0 * std_err.max(1e-3),
    })
}
