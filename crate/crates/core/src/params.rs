use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest integrator step accepted by the dynamics modules.
pub const MAX_DTAU: f64 = 0.01;
pub const DEFAULT_DTAU: f64 = 1e-4;

/// Dimensionless model constants plus the integrator step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Anisotropy `(I2 - I1) / I3`.
    pub alpha: f64,
    /// Orbital eccentricity.
    pub e: f64,
    /// Dimensionless Planck constant `hbar T / I3`.
    pub beta: f64,
    /// Integrator step in orbital periods.
    pub dtau: f64,
}

impl SystemParams {
    pub fn new(alpha: f64, e: f64, beta: f64) -> Self {
        SystemParams {
            alpha,
            e,
            beta,
            dtau: DEFAULT_DTAU,
        }
    }

    pub fn with_dtau(mut self, dtau: f64) -> Self {
        self.dtau = dtau;
        self
    }

    pub fn validate(&self) -> Result<()> {
        // alpha = 0 is the free rotor, kept for limit checks.
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::param("alpha", format!("{} outside [0, 1)", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.e) {
            return Err(Error::param("e", format!("{} outside [0, 1)", self.e)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::param("beta", format!("{} must be positive", self.beta)));
        }
        if !(self.dtau > 0.0) {
            return Err(Error::param("dtau", format!("{} must be positive", self.dtau)));
        }
        if self.dtau > MAX_DTAU {
            return Err(Error::param(
                "dtau",
                format!("{} exceeds the accuracy limit {MAX_DTAU}", self.dtau),
            ));
        }
        Ok(())
    }

    /// Amplitude of the tidal potential in units of `I3 / T^2`, `3 sqrt(2) pi^2 alpha`.
    pub fn tidal_scale(&self) -> f64 {
        3.0 * std::f64::consts::SQRT_2 * std::f64::consts::PI.powi(2) * self.alpha
    }

    /// Number of steps of size `dtau` covering `tau`, rejecting non-multiples.
    pub fn steps_for(&self, tau: f64) -> Result<usize> {
        let steps = (tau / self.dtau).round();
        if (steps * self.dtau - tau).abs() > 1e-9 * tau.abs().max(1.0) {
            return Err(Error::param(
                "tau",
                format!("{tau} is not a multiple of dtau = {}", self.dtau),
            ));
        }
        Ok(steps as usize)
    }
}

/// Gaussian initial state shared by the quantum and classical runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialStateSpec {
    /// Mean dimensionless angular momentum.
    pub j0: f64,
    /// Standard deviation of `Jz`.
    pub sigma_j: f64,
    /// Central angle in radians.
    pub phi0: f64,
}

impl InitialStateSpec {
    pub fn new(j0: f64, sigma_j: f64, phi0: f64) -> Self {
        InitialStateSpec { j0, sigma_j, phi0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_j > 0.0) {
            return Err(Error::param("sigma_j", "must be positive"));
        }
        if !self.j0.is_finite() || !self.phi0.is_finite() {
            return Err(Error::param("j0/phi0", "must be finite"));
        }
        Ok(())
    }

    /// Angular width of the matching minimum-uncertainty state, `beta / (2 sigma_j)`.
    pub fn sigma_phi(&self, beta: f64) -> f64 {
        beta / (2.0 * self.sigma_j)
    }
}

/// Maps record times onto step indices, requiring sorted times in `[0, tau_end]`.
pub(crate) fn record_steps(record_at: &[f64], tau_end: f64, dtau: f64) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(record_at.len());
    let mut prev = f64::NEG_INFINITY;
    for &t in record_at {
        if t < prev {
            return Err(Error::param("record_at", "times must be sorted"));
        }
        if t < 0.0 || t > tau_end + 1e-12 {
            return Err(Error::param(
                "record_at",
                format!("{t} outside [0, {tau_end}]"),
            ));
        }
        prev = t;
        out.push((t / dtau).round() as usize);
    }
    Ok(out)
}
