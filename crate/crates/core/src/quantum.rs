//! Schrödinger dynamics in the angular-momentum basis `|m>`, `m = -K..K`:
//!
//! ```text
//! i dc_m/dtau = (beta m^2 / 2) c_m
//!             - (3 pi^2 / 2)(alpha / beta)(a/r)^3 (c_{m+2} e^{2 i theta} + c_{m-2} e^{-2 i theta})
//!             + (sigma R / (2 beta)) (c_{m+1} + c_{m-1})
//! ```
//!
//! The potential terms are multiplication operators in the angle
//! representation, `-(3 pi^2 alpha / beta)(a/r)^3 cos(2(phi - theta))` and
//! `(sigma R / beta) cos(phi)`. The split-operator integrators apply the
//! kinetic phase exactly and each potential kick exactly as a Jacobi–Anger
//! convolution in `m`; the default composes three Strang steps into a
//! fourth-order method. Crank–Nicolson and RK4 are available as cross-checks.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analysis::ProbabilityVector;
use crate::environment::NoiseRealization;
use crate::error::{Error, Result};
use crate::orbit::OrbitSolution;
use crate::params::{record_steps, InitialStateSpec, SystemParams};
use crate::special::{bessel_cutoff, bessel_j_sequence};

/// Probability allowed at the initial-state basis edge.
const INIT_EDGE_TOL: f64 = 1e-12;
/// Probability allowed at the basis edge during evolution.
pub const EDGE_TOL: f64 = 1e-10;
/// Guard cells added to the `20 / beta` cutoff.
pub const GUARD_CELLS: usize = 16;
const BESSEL_TOL: f64 = 1e-18;

/// Default cutoff `ceil(20 / beta) + 16`.
pub fn default_cutoff(beta: f64) -> usize {
    (20.0 / beta).ceil() as usize + GUARD_CELLS
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    /// Amplitudes `c_m` at index `m + K`.
    pub c: Vec<Complex64>,
    pub k: usize,
    pub beta: f64,
    pub tau: f64,
}

impl QuantumState {
    pub fn dim(&self) -> usize {
        2 * self.k + 1
    }

    pub fn m_of(&self, index: usize) -> i64 {
        index as i64 - self.k as i64
    }

    pub fn amplitude(&self, m: i64) -> Complex64 {
        let i = m + self.k as i64;
        if i < 0 || i as usize >= self.c.len() {
            Complex64::new(0.0, 0.0)
        } else {
            self.c[i as usize]
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Largest probability on the two outermost basis states.
    pub fn edge_probability(&self) -> f64 {
        let n = self.c.len();
        self.c[0].norm_sqr().max(self.c[n - 1].norm_sqr())
    }

    /// `|<self|other>|^2`.
    pub fn fidelity(&self, other: &QuantumState) -> f64 {
        let overlap: Complex64 = self
            .c
            .iter()
            .zip(&other.c)
            .map(|(a, b)| a.conj() * b)
            .sum();
        overlap.norm_sqr()
    }
}

/// Gaussian in angular momentum,
/// `c_m ∝ exp(-(beta m - J0)^2 / (2 delta^2) - i phi0 m)` with `delta = sigma_j sqrt(2)`.
pub fn init_quantum_state(
    spec: &InitialStateSpec,
    params: &SystemParams,
    k: usize,
) -> Result<QuantumState> {
    spec.validate()?;
    params.validate()?;
    if k == 0 {
        return Err(Error::param("K", "cutoff must be positive"));
    }
    let beta = params.beta;
    let delta = spec.sigma_j * std::f64::consts::SQRT_2;
    let mut c: Vec<Complex64> = (0..=2 * k)
        .map(|i| {
            let m = i as f64 - k as f64;
            let x = (beta * m - spec.j0) / delta;
            Complex64::from_polar((-0.5 * x * x).exp(), -spec.phi0 * m)
        })
        .collect();
    let norm = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::param("K", "initial state has no weight inside the basis"));
    }
    c.iter_mut().for_each(|z| *z /= norm);
    let state = QuantumState {
        c,
        k,
        beta,
        tau: 0.0,
    };
    let edge = state.edge_probability();
    if edge > INIT_EDGE_TOL {
        return Err(Error::Truncation {
            prob: edge,
            tau: 0.0,
            k,
        });
    }
    Ok(state)
}

/// `sum_m beta m |c_m|^2`.
pub fn expectation_jz(state: &QuantumState) -> f64 {
    moments(state).0
}

/// Mean and variance of `Jz`.
pub fn moments(state: &QuantumState) -> (f64, f64) {
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for (i, z) in state.c.iter().enumerate() {
        let j = state.beta * state.m_of(i) as f64;
        let p = z.norm_sqr();
        s1 += j * p;
        s2 += j * j * p;
    }
    (s1, (s2 - s1 * s1).max(0.0))
}

/// `P(m) = |c_m|^2`, renormalized on read-out.
pub fn probability_vector(state: &QuantumState) -> ProbabilityVector {
    let mut p: Vec<f64> = state.c.iter().map(|z| z.norm_sqr()).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    ProbabilityVector {
        beta: state.beta,
        m_min: -(state.k as i64),
        p,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Fourth-order triple-jump composition of exact split steps.
    #[default]
    Split4,
    /// Second-order Strang split with exact kinetic and potential factors.
    Split2,
    /// Cayley form on each parity chain; noise by Strang splitting.
    CrankNicolson,
    /// Explicit RK4 without renormalization, for monitoring.
    Rk4Monitor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionControls {
    pub dtau: f64,
    #[serde(default)]
    pub method: Method,
    /// Largest allowed `|norm^2 - 1|`.
    pub norm_tol: f64,
}

impl EvolutionControls {
    pub fn new(dtau: f64) -> Self {
        EvolutionControls {
            dtau,
            method: Method::Split4,
            norm_tol: 1e-9,
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dtau > 0.0) {
            return Err(Error::param("dtau", "must be positive"));
        }
        if self.dtau > crate::params::MAX_DTAU {
            return Err(Error::param("dtau", "exceeds the accuracy limit"));
        }
        if !(self.norm_tol >= 0.0) {
            return Err(Error::param("norm_tol", "must be non-negative"));
        }
        Ok(())
    }
}

/// Step-by-step propagator for one parameter set.
pub struct Propagator<'a> {
    params: SystemParams,
    orbit: &'a OrbitSolution,
    noise: Option<&'a NoiseRealization>,
    method: Method,
    dt: f64,
    k: usize,
    /// `beta m^2 / 2` per basis index.
    energy: Vec<f64>,
    /// Sub-step weights of the composition (sum to one).
    weights: Vec<f64>,
    /// Kinetic phase factors applied before each sub-step kick, then the
    /// closing factor, and the factor joining two consecutive steps.
    kinetic: Vec<Vec<Complex64>>,
    join: Vec<Complex64>,
    scratch: Vec<Complex64>,
    kernel: Vec<Complex64>,
    cn: Option<CnWork>,
}

struct CnWork {
    lower: Vec<Complex64>,
    diag: Vec<Complex64>,
    upper: Vec<Complex64>,
    rhs: Vec<Complex64>,
    gam: Vec<Complex64>,
}

impl<'a> Propagator<'a> {
    /// `dt` may be negative to run backwards in time.
    pub fn new(
        params: &SystemParams,
        orbit: &'a OrbitSolution,
        noise: Option<&'a NoiseRealization>,
        method: Method,
        dt: f64,
        k: usize,
    ) -> Self {
        let n = 2 * k + 1;
        let energy: Vec<f64> = (0..n)
            .map(|i| {
                let m = i as f64 - k as f64;
                0.5 * params.beta * m * m
            })
            .collect();
        let weights = match method {
            Method::Split4 => {
                let cbrt2 = 2f64.cbrt();
                let w1 = 1.0 / (2.0 - cbrt2);
                vec![w1, -cbrt2 * w1, w1]
            }
            _ => vec![1.0],
        };
        let phases = |fraction: f64| -> Vec<Complex64> {
            energy
                .iter()
                .map(|e| Complex64::from_polar(1.0, -e * fraction * dt))
                .collect()
        };
        // Kinetic fractions: w_0/2, (w_0+w_1)/2, ..., w_last/2.
        let mut kinetic = Vec::with_capacity(weights.len() + 1);
        kinetic.push(phases(0.5 * weights[0]));
        for pair in weights.windows(2) {
            kinetic.push(phases(0.5 * (pair[0] + pair[1])));
        }
        kinetic.push(phases(0.5 * weights[weights.len() - 1]));
        let join = phases(0.5 * (weights[0] + weights[weights.len() - 1]));
        let cn = (method == Method::CrankNicolson).then(|| CnWork {
            lower: vec![Complex64::default(); n],
            diag: vec![Complex64::default(); n],
            upper: vec![Complex64::default(); n],
            rhs: vec![Complex64::default(); n],
            gam: vec![Complex64::default(); n],
        });
        Propagator {
            params: *params,
            orbit,
            noise,
            method,
            dt,
            k,
            energy,
            weights,
            kinetic,
            join,
            scratch: vec![Complex64::default(); n],
            kernel: Vec::new(),
            cn,
        }
    }

    /// Tidal coupling amplitude `(3 pi^2 / 2)(alpha / beta)(a/r)^3` and `theta` at `tau`.
    fn tidal(&self, tau: f64) -> (f64, f64) {
        let p = self.orbit.at(tau);
        (
            1.5 * PI * PI * self.params.alpha / self.params.beta * p.tidal_factor(),
            p.theta,
        )
    }

    /// Noise coupling `sigma R / (2 beta)` for the step starting at `tau`
    /// (sampled at the step midpoint).
    fn noise_coupling(&self, tau: f64) -> f64 {
        match self.noise {
            Some(n) => {
                let mid = tau + 0.5 * self.dt;
                n.sigma() * n.value_at(mid) / (2.0 * self.params.beta)
            }
            None => 0.0,
        }
    }

    /// Advances `c` by `steps` steps starting at time `tau`.
    pub fn advance(&mut self, c: &mut [Complex64], tau: f64, steps: usize) {
        if steps == 0 {
            return;
        }
        match self.method {
            Method::Split4 | Method::Split2 => self.advance_split(c, tau, steps),
            Method::CrankNicolson => {
                for s in 0..steps {
                    self.step_cn(c, tau + s as f64 * self.dt);
                }
            }
            Method::Rk4Monitor => {
                for s in 0..steps {
                    self.step_rk4(c, tau + s as f64 * self.dt);
                }
            }
        }
    }

    fn advance_split(&mut self, c: &mut [Complex64], tau: f64, steps: usize) {
        let subs = self.weights.len();
        mul_in_place(c, &self.kinetic[0]);
        for s in 0..steps {
            let t = tau + s as f64 * self.dt;
            let noise = self.noise_coupling(t);
            let mut start = t;
            for j in 0..subs {
                let h = self.weights[j] * self.dt;
                self.kick(c, start + 0.5 * h, h, noise);
                start += h;
                if j + 1 < subs {
                    mul_in_place(c, &self.kinetic[j + 1]);
                }
            }
            if s + 1 < steps {
                mul_in_place(c, &self.join);
            }
        }
        mul_in_place(c, &self.kinetic[subs]);
    }

    /// Exact `exp(-i h V)` with the tidal term evaluated at `mid` and the
    /// noise coupling `g` held fixed.
    fn kick(&mut self, c: &mut [Complex64], mid: f64, h: f64, g: f64) {
        let (amp, theta) = self.tidal(mid);
        // exp(i x cos(2(phi - theta))) = sum_k i^k J_k(x) e^{-2ik theta} e^{2ik phi}
        let x = 2.0 * amp * h;
        if x != 0.0 {
            let kmax = bessel_cutoff(x, BESSEL_TOL);
            let j = bessel_j_sequence(x, kmax);
            self.kernel.clear();
            for q in -(kmax as i64)..=(kmax as i64) {
                let a = q.unsigned_abs() as usize;
                let jq = if q < 0 && a % 2 == 1 { -j[a] } else { j[a] };
                let phase = Complex64::i().powi(q as i32)
                    * Complex64::from_polar(1.0, -2.0 * q as f64 * theta);
                self.kernel.push(phase * jq);
            }
            convolve(c, &mut self.scratch, &self.kernel, 2);
        }
        if g != 0.0 {
            // exp(-i y cos(phi)) = sum_k (-i)^k J_k(y) e^{ik phi}, y = 2 g h
            let y = 2.0 * g * h;
            let kmax = bessel_cutoff(y, BESSEL_TOL);
            let j = bessel_j_sequence(y, kmax);
            self.kernel.clear();
            let mi = -Complex64::i();
            for q in -(kmax as i64)..=(kmax as i64) {
                let a = q.unsigned_abs() as usize;
                let jq = if q < 0 && a % 2 == 1 { -j[a] } else { j[a] };
                self.kernel.push(mi.powi(q as i32) * jq);
            }
            convolve(c, &mut self.scratch, &self.kernel, 1);
        }
    }

    /// `out = H(tau) c` with noise coupling `g`.
    fn apply_h(&self, c: &[Complex64], out: &mut [Complex64], tau: f64, g: f64) {
        let (amp, theta) = self.tidal(tau);
        let up = Complex64::from_polar(-amp, 2.0 * theta);
        let down = up.conj();
        let n = c.len();
        for i in 0..n {
            let mut v = c[i] * self.energy[i];
            if i + 2 < n {
                v += up * c[i + 2];
            }
            if i >= 2 {
                v += down * c[i - 2];
            }
            if g != 0.0 {
                if i + 1 < n {
                    v += c[i + 1] * g;
                }
                if i >= 1 {
                    v += c[i - 1] * g;
                }
            }
            out[i] = v;
        }
    }

    fn step_rk4(&mut self, c: &mut [Complex64], tau: f64) {
        let dt = self.dt;
        let g = self.noise_coupling(tau);
        let n = c.len();
        let mi = -Complex64::i();
        let mut k1 = vec![Complex64::default(); n];
        let mut k2 = vec![Complex64::default(); n];
        let mut k3 = vec![Complex64::default(); n];
        let mut k4 = vec![Complex64::default(); n];
        let mut tmp = vec![Complex64::default(); n];
        self.apply_h(c, &mut k1, tau, g);
        k1.iter_mut().for_each(|v| *v *= mi);
        for i in 0..n {
            tmp[i] = c[i] + k1[i] * (0.5 * dt);
        }
        self.apply_h(&tmp, &mut k2, tau + 0.5 * dt, g);
        k2.iter_mut().for_each(|v| *v *= mi);
        for i in 0..n {
            tmp[i] = c[i] + k2[i] * (0.5 * dt);
        }
        self.apply_h(&tmp, &mut k3, tau + 0.5 * dt, g);
        k3.iter_mut().for_each(|v| *v *= mi);
        for i in 0..n {
            tmp[i] = c[i] + k3[i] * dt;
        }
        self.apply_h(&tmp, &mut k4, tau + dt, g);
        k4.iter_mut().for_each(|v| *v *= mi);
        for i in 0..n {
            c[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
        }
    }

    fn step_cn(&mut self, c: &mut [Complex64], tau: f64) {
        let dt = self.dt;
        let g = self.noise_coupling(tau);
        if g != 0.0 {
            self.cn_noise_half(c, g);
        }
        let (amp, theta) = self.tidal(tau + 0.5 * dt);
        let up = Complex64::from_polar(-amp, 2.0 * theta);
        let down = up.conj();
        let half = Complex64::new(0.0, 0.5 * dt);
        let n = c.len();
        let mut work = self.cn.take().expect("CN workspace");
        for parity in 0..2 {
            let idx: Vec<usize> = (parity..n).step_by(2).collect();
            let len = idx.len();
            for (j, &i) in idx.iter().enumerate() {
                let mut hc = c[i] * self.energy[i];
                if j + 1 < len {
                    hc += up * c[idx[j + 1]];
                }
                if j > 0 {
                    hc += down * c[idx[j - 1]];
                }
                work.rhs[j] = c[i] - half * hc;
                work.diag[j] = Complex64::new(1.0, 0.0) + half * self.energy[i];
                work.upper[j] = half * up;
                work.lower[j] = half * down;
            }
            thomas(
                &work.lower[..len],
                &work.diag[..len],
                &work.upper[..len],
                &mut work.rhs[..len],
                &mut work.gam[..len],
            );
            for (j, &i) in idx.iter().enumerate() {
                c[i] = work.rhs[j];
            }
        }
        self.cn = Some(work);
        if g != 0.0 {
            self.cn_noise_half(c, g);
        }
    }

    /// Cayley step of `dt / 2` for the nearest-neighbour noise coupling.
    fn cn_noise_half(&mut self, c: &mut [Complex64], g: f64) {
        let n = c.len();
        let q = Complex64::new(0.0, 0.25 * self.dt * g);
        let mut work = self.cn.take().expect("CN workspace");
        for i in 0..n {
            let mut hc = Complex64::default();
            if i + 1 < n {
                hc += c[i + 1];
            }
            if i > 0 {
                hc += c[i - 1];
            }
            work.rhs[i] = c[i] - q * hc;
            work.diag[i] = Complex64::new(1.0, 0.0);
            work.upper[i] = q;
            work.lower[i] = q;
        }
        thomas(&work.lower, &work.diag, &work.upper, &mut work.rhs, &mut work.gam);
        c.copy_from_slice(&work.rhs);
        self.cn = Some(work);
    }

    pub fn cutoff(&self) -> usize {
        self.k
    }
}

#[inline]
fn mul_in_place(c: &mut [Complex64], f: &[Complex64]) {
    for (a, b) in c.iter_mut().zip(f) {
        *a *= b;
    }
}

/// `c'_m = sum_q kernel[q] c_{m - stride q}` with `q` centered in `kernel`;
/// terms that would reach outside the basis are dropped.
fn convolve(c: &mut [Complex64], scratch: &mut [Complex64], kernel: &[Complex64], stride: usize) {
    let n = c.len();
    let half = (kernel.len() / 2) as i64;
    scratch.iter_mut().for_each(|v| *v = Complex64::default());
    for (qi, &w) in kernel.iter().enumerate() {
        let shift = (qi as i64 - half) * stride as i64;
        // out[i] += w * c[i - shift]
        let (lo, hi) = if shift >= 0 {
            (shift as usize, n)
        } else {
            (0, (n as i64 + shift).max(0) as usize)
        };
        if lo >= hi {
            continue;
        }
        let src_lo = (lo as i64 - shift) as usize;
        let src = &c[src_lo..src_lo + (hi - lo)];
        for (o, s) in scratch[lo..hi].iter_mut().zip(src) {
            *o += w * s;
        }
    }
    c.copy_from_slice(scratch);
}

/// In-place tridiagonal solve; `lower[0]` and `upper[n-1]` are ignored.
fn thomas(
    lower: &[Complex64],
    diag: &[Complex64],
    upper: &[Complex64],
    rhs: &mut [Complex64],
    gam: &mut [Complex64],
) {
    let n = diag.len();
    let mut bet = diag[0];
    rhs[0] /= bet;
    for i in 1..n {
        gam[i] = upper[i - 1] / bet;
        bet = diag[i] - lower[i] * gam[i];
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / bet;
    }
    for i in (0..n - 1).rev() {
        let next = rhs[i + 1];
        rhs[i] -= gam[i + 1] * next;
    }
}

/// What to keep at each record time.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuantumRecordRequest {
    pub probabilities: bool,
    pub states: bool,
}

#[derive(Debug, Clone)]
pub struct QuantumRecord {
    pub tau: Vec<f64>,
    pub mean_jz: Vec<f64>,
    pub var_jz: Vec<f64>,
    /// `norm^2 - 1` at each record time.
    pub norm_drift: Vec<f64>,
    pub probabilities: Vec<ProbabilityVector>,
    pub states: Vec<QuantumState>,
    pub final_state: QuantumState,
}

/// Interval between norm and edge checks when no record falls sooner.
const WATCHDOG_INTERVAL: f64 = 1.0;

/// Evolves `state` to `tau_end`, collecting observables at `record_at`.
#[allow(clippy::too_many_arguments)]
pub fn evolve_quantum_stats(
    state: &QuantumState,
    params: &SystemParams,
    orbit: &OrbitSolution,
    tau_end: f64,
    controls: &EvolutionControls,
    noise: Option<&NoiseRealization>,
    record_at: &[f64],
    request: QuantumRecordRequest,
) -> Result<QuantumRecord> {
    params.validate()?;
    controls.validate()?;
    let span = tau_end - state.tau;
    if !(span > 0.0) {
        return Err(Error::param("tau_end", "must lie after the state time"));
    }
    let dt = controls.dtau;
    let qparams = SystemParams { dtau: dt, ..*params };
    let steps = qparams.steps_for(span)?;
    let shifted: Vec<f64> = record_at.iter().map(|t| t - state.tau).collect();
    let rec = record_steps(&shifted, span, dt)?;

    // Stops: every record plus periodic watchdog checks.
    let watch = ((WATCHDOG_INTERVAL / dt).round() as usize).max(1);
    let mut stops: Vec<(usize, Option<usize>)> = rec.iter().enumerate().map(|(r, &s)| (s, Some(r))).collect();
    stops.extend((watch..steps).step_by(watch).map(|s| (s, None)));
    stops.push((steps, None));
    stops.sort_by_key(|&(s, r)| (s, r.is_none()));

    let mut prop = Propagator::new(&qparams, orbit, noise, controls.method, dt, state.k);
    let mut c = state.c.clone();
    let tau_of = |s: usize| state.tau + s as f64 * dt;

    let mut out = QuantumRecord {
        tau: Vec::with_capacity(rec.len()),
        mean_jz: Vec::with_capacity(rec.len()),
        var_jz: Vec::with_capacity(rec.len()),
        norm_drift: Vec::with_capacity(rec.len()),
        probabilities: Vec::new(),
        states: Vec::new(),
        final_state: state.clone(),
    };
    let mut at = 0;
    let mut snapshot = state.clone();
    for (stop, rec_idx) in stops {
        if stop > at {
            prop.advance(&mut c, tau_of(at), stop - at);
            at = stop;
        }
        snapshot.c.copy_from_slice(&c);
        snapshot.tau = tau_of(at);
        let norm = snapshot.norm_sqr();
        let drift = norm - 1.0;
        if !norm.is_finite() || drift.abs() > controls.norm_tol {
            return Err(Error::NormDrift {
                drift,
                tol: controls.norm_tol,
                tau: snapshot.tau,
            });
        }
        let edge = snapshot.edge_probability();
        if edge > EDGE_TOL {
            return Err(Error::Truncation {
                prob: edge,
                tau: snapshot.tau,
                k: state.k,
            });
        }
        if rec_idx.is_some() {
            let (mean, var) = moments(&snapshot);
            out.tau.push(snapshot.tau);
            out.mean_jz.push(mean);
            out.var_jz.push(var);
            out.norm_drift.push(drift);
            if request.probabilities {
                out.probabilities.push(probability_vector(&snapshot));
            }
            if request.states {
                out.states.push(snapshot.clone());
            }
        }
    }
    snapshot.c.copy_from_slice(&c);
    snapshot.tau = tau_of(steps);
    out.final_state = snapshot;
    Ok(out)
}

/// State snapshots at each record time.
pub fn evolve_quantum(
    state: &QuantumState,
    params: &SystemParams,
    orbit: &OrbitSolution,
    tau_end: f64,
    controls: &EvolutionControls,
    noise: Option<&NoiseRealization>,
    record_at: &[f64],
) -> Result<Vec<QuantumState>> {
    let request = QuantumRecordRequest {
        probabilities: false,
        states: true,
    };
    Ok(evolve_quantum_stats(state, params, orbit, tau_end, controls, noise, record_at, request)?.states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbit::{build_orbit_table, OrbitParams};

    fn chaotic() -> (SystemParams, OrbitSolution, InitialStateSpec) {
        (
            SystemParams::new(0.5, 0.1, 0.05).with_dtau(1e-3),
            build_orbit_table(&OrbitParams::new(0.1)).unwrap(),
            InitialStateSpec::new(10.0, 0.5, 0.0),
        )
    }

    #[test]
    fn initial_state_moments() {
        let (p, _, spec) = chaotic();
        let s = init_quantum_state(&spec, &p, default_cutoff(p.beta)).unwrap();
        let (mean, var) = moments(&s);
        assert!((mean - 10.0).abs() < p.beta);
        assert!((var.sqrt() - 0.5).abs() < 0.005);
        assert!((s.norm_sqr() - 1.0).abs() < 1e-14);
        assert!(s.c.iter().all(|z| z.im == 0.0 && z.re >= 0.0));
    }

    #[test]
    fn truncated_initial_state_is_rejected() {
        let (p, _, spec) = chaotic();
        assert!(matches!(
            init_quantum_state(&spec, &p, 205),
            Err(Error::Truncation { .. })
        ));
    }

    #[test]
    fn probability_vector_cases() {
        let mut s = QuantumState {
            c: vec![Complex64::default(); 5],
            k: 2,
            beta: 0.1,
            tau: 0.0,
        };
        s.c[3] = Complex64::new(0.0, 1.0);
        let p = probability_vector(&s);
        assert_eq!(p.p, vec![0.0, 0.0, 0.0, 1.0, 0.0]);
        s.c[1] = Complex64::new(1.0, 0.0);
        s.c.iter_mut().for_each(|z| *z /= 2f64.sqrt());
        let p = probability_vector(&s);
        assert!((p.prob(-1) - 0.5).abs() < 1e-15 && (p.prob(1) - 0.5).abs() < 1e-15);
        assert!(expectation_jz(&s).abs() < 1e-15);
    }

    #[test]
    fn free_rotor_phases() {
        let p = SystemParams::new(0.0, 0.0, 0.1).with_dtau(1e-3);
        let orbit = build_orbit_table(&OrbitParams::new(0.0)).unwrap();
        let spec = InitialStateSpec::new(2.0, 0.5, 0.4);
        let s0 = init_quantum_state(&spec, &p, 60).unwrap();
        for method in [Method::Split4, Method::CrankNicolson] {
            let ctl = EvolutionControls::new(1e-3).with_method(method);
            let s = evolve_quantum(&s0, &p, &orbit, 1.0, &ctl, None, &[1.0]).unwrap();
            for i in 0..s0.dim() {
                assert!((s[0].c[i].norm_sqr() - s0.c[i].norm_sqr()).abs() < 1e-12);
            }
            if method == Method::Split4 {
                for i in 0..s0.dim() {
                    let m = s0.m_of(i) as f64;
                    let expect = s0.c[i] * Complex64::from_polar(1.0, -0.1 * m * m / 2.0);
                    assert!((s[0].c[i] - expect).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn split_matches_rk4_reference() {
        // RK4 at a much finer step serves as the reference.
        let (p, orbit, spec) = chaotic();
        let p = SystemParams { beta: 0.2, ..p };
        let k = default_cutoff(p.beta);
        let s0 = init_quantum_state(&spec, &p, k).unwrap();
        let split = EvolutionControls::new(5e-4);
        let rk = EvolutionControls::new(2e-5).with_method(Method::Rk4Monitor);
        let a = evolve_quantum(&s0, &p, &orbit, 0.5, &split, None, &[0.5]).unwrap();
        let b = evolve_quantum(&s0, &p, &orbit, 0.5, &rk, None, &[0.5]).unwrap();
        let f = a[0].fidelity(&b[0]);
        assert!(f > 1.0 - 1e-8, "fidelity {f}");
    }

    #[test]
    fn crank_nicolson_converges_to_split() {
        // The Cayley phase error is second order: halving the step quarters
        // the deviation from a converged split-operator run.
        let (p, orbit, spec) = chaotic();
        let p = SystemParams { beta: 0.5, ..p };
        let s0 = init_quantum_state(&spec, &p, default_cutoff(p.beta)).unwrap();
        let run = |ctl: EvolutionControls| {
            let s = evolve_quantum(&s0, &p, &orbit, 0.2, &ctl, None, &[0.2]).unwrap();
            assert!((s[0].norm_sqr() - 1.0).abs() < 1e-10);
            expectation_jz(&s[0])
        };
        let reference = run(EvolutionControls::new(2.5e-5));
        let coarse = run(EvolutionControls::new(1e-5).with_method(Method::CrankNicolson));
        let fine = run(EvolutionControls::new(5e-6).with_method(Method::CrankNicolson));
        let ratio = (coarse - reference) / (fine - reference);
        assert!((ratio - 4.0).abs() < 0.3, "ratio {ratio}");
        assert!((fine - reference).abs() < 1e-6);
    }

    #[test]
    fn parity_is_conserved_without_noise() {
        let (p, orbit, spec) = chaotic();
        let mut s0 = init_quantum_state(&spec, &p, default_cutoff(p.beta)).unwrap();
        for i in 0..s0.dim() {
            if s0.m_of(i).rem_euclid(2) == 1 {
                s0.c[i] = Complex64::default();
            }
        }
        let n = s0.norm_sqr().sqrt();
        s0.c.iter_mut().for_each(|z| *z /= n);
        let ctl = EvolutionControls::new(1e-3);
        let s = evolve_quantum(&s0, &p, &orbit, 2.0, &ctl, None, &[2.0]).unwrap();
        for i in 0..s0.dim() {
            if s0.m_of(i).rem_euclid(2) == 1 {
                assert_eq!(s[0].c[i], Complex64::default());
            }
        }
    }

    #[test]
    fn noise_breaks_parity() {
        let (p, orbit, spec) = chaotic();
        let mut s0 = init_quantum_state(&spec, &p, default_cutoff(p.beta)).unwrap();
        for i in 0..s0.dim() {
            if s0.m_of(i).rem_euclid(2) == 1 {
                s0.c[i] = Complex64::default();
            }
        }
        let n = s0.norm_sqr().sqrt();
        s0.c.iter_mut().for_each(|z| *z /= n);
        let np = crate::environment::NoiseParams::new(0.5, 0.01, 3);
        let noise = crate::environment::make_noise_realization(&np, 1.0, 1e-3).unwrap();
        let ctl = EvolutionControls::new(1e-3);
        let t = 0.007;
        let s = evolve_quantum(&s0, &p, &orbit, t, &ctl, Some(&noise), &[t]).unwrap();
        let odd: f64 = (0..s0.dim())
            .filter(|&i| s0.m_of(i).rem_euclid(2) == 1)
            .map(|i| s[0].c[i].norm_sqr())
            .sum();
        assert!(odd > 0.0);
    }

    #[test]
    fn time_reversal() {
        let (p, orbit, spec) = chaotic();
        let s0 = init_quantum_state(&spec, &p, default_cutoff(p.beta)).unwrap();
        let dt = 1e-3;
        let steps = 5000;
        let mut fwd = Propagator::new(&p, &orbit, None, Method::Split4, dt, s0.k);
        let mut c = s0.c.clone();
        fwd.advance(&mut c, 0.0, steps);
        let mut back = Propagator::new(&p, &orbit, None, Method::Split4, -dt, s0.k);
        back.advance(&mut c, 5.0, steps);
        let s = QuantumState { c, ..s0.clone() };
        assert!(s.fidelity(&s0) > 1.0 - 1e-8);
    }

    #[test]
    fn ehrenfest_short_time_torque() {
        // d<Jz>/dtau at tau = 0 equals the classical torque at the packet
        // center times the Gaussian angle average exp(-2 sigma_phi^2).
        let (p, orbit, _) = chaotic();
        let spec = InitialStateSpec::new(10.0, 0.5, 0.3);
        let s0 = init_quantum_state(&spec, &p, default_cutoff(p.beta)).unwrap();
        let h = 1e-4;
        let ctl = EvolutionControls::new(h / 10.0);
        let s = evolve_quantum(&s0, &p, &orbit, h, &ctl, None, &[h]).unwrap();
        let rate = (expectation_jz(&s[0]) - expectation_jz(&s0)) / h;
        let o = orbit.at(0.0);
        let torque = -6.0 * PI * PI * p.alpha * o.tidal_factor() * (2.0 * (0.3 - o.theta)).sin();
        let sigma_phi = spec.sigma_phi(p.beta);
        assert!((rate - torque).abs() < 3.0 * torque.abs() * sigma_phi * sigma_phi + 1e-2 * torque.abs());
    }
}
