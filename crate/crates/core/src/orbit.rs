//! Fixed elliptical orbit of the satellite's center of mass.
//!
//! Time is measured in orbital periods, distances in units of the semi-major
//! axis. Periapsis is at `tau = 0` with true anomaly `theta = 0`; the true
//! anomaly is unwrapped so that `theta(tau + 1) = theta(tau) + 2*pi`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const KEPLER_TOL: f64 = 1e-13;
const NEWTON_MAX_ITER: usize = 50;
const BISECTION_MAX_ITER: usize = 200;

/// Default number of table samples per period.
pub const DEFAULT_ORBIT_SAMPLES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitParams {
    pub e: f64,
    pub n_samples: usize,
}

impl OrbitParams {
    pub fn new(e: f64) -> Self {
        OrbitParams {
            e,
            n_samples: DEFAULT_ORBIT_SAMPLES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_eccentricity(self.e)?;
        if self.n_samples < 16 {
            return Err(Error::param("n_samples", "must be at least 16"));
        }
        Ok(())
    }
}

fn validate_eccentricity(e: f64) -> Result<()> {
    if !(0.0..1.0).contains(&e) {
        return Err(Error::param("e", format!("eccentricity {e} outside [0, 1)")));
    }
    Ok(())
}

/// Position on the orbit at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitPoint {
    pub r_over_a: f64,
    pub theta: f64,
}

impl OrbitPoint {
    /// `(a/r)^3`, the strength of the tidal torque relative to its mean-distance value.
    #[inline]
    pub fn tidal_factor(&self) -> f64 {
        let inv = 1.0 / self.r_over_a;
        inv * inv * inv
    }
}

/// Solves Kepler's equation `E - e sin E = M` for the eccentric anomaly with
/// `M` in `[-pi, pi]`.
fn eccentric_anomaly(e: f64, mean_anomaly: f64) -> Result<f64> {
    let m = mean_anomaly;
    let residual = |ecc: f64| ecc - e * ecc.sin() - m;

    let mut ecc = m + e * m.sin();
    for _ in 0..NEWTON_MAX_ITER {
        let f = residual(ecc);
        if f.abs() < KEPLER_TOL {
            return Ok(ecc);
        }
        let fp = 1.0 - e * ecc.cos();
        ecc -= f / fp;
    }

    // f is monotone on [-pi, pi] and changes sign there.
    let (mut lo, mut hi) = (-PI, PI);
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let f = residual(mid);
        if f.abs() < KEPLER_TOL {
            return Ok(mid);
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::KeplerNonConvergence {
        e,
        mean_anomaly: m,
    })
}

/// Radius ratio `r/a` and unwrapped true anomaly at dimensionless time `tau`.
pub fn solve_kepler(e: f64, tau: f64) -> Result<(f64, f64)> {
    validate_eccentricity(e)?;
    let (r, theta, _) = kepler_state(e, tau)?;
    Ok((r, theta))
}

/// `(r/a, theta, E)` with `E` the reduced eccentric anomaly.
fn kepler_state(e: f64, tau: f64) -> Result<(f64, f64, f64)> {
    let mean = TAU * tau;
    let turns = (mean / TAU).round();
    let reduced = mean - turns * TAU;
    let ecc = eccentric_anomaly(e, reduced)?;
    let r_over_a = 1.0 - e * ecc.cos();
    let half = 0.5 * ecc;
    let nu = 2.0 * f64::atan2((1.0 + e).sqrt() * half.sin(), (1.0 - e).sqrt() * half.cos());
    Ok((r_over_a, nu + turns * TAU, ecc))
}

/// Precomputed orbit over one period with cubic Hermite lookup.
///
/// Derivatives at the nodes are exact (`dE/dtau = 2 pi / (r/a)`,
/// `dtheta/dtau = 2 pi sqrt(1 - e^2) / (r/a)^2`), so the interpolant is
/// fourth-order accurate.
#[derive(Debug, Clone)]
pub struct OrbitSolution {
    e: f64,
    n: usize,
    r_over_a: Vec<f64>,
    dr: Vec<f64>,
    theta: Vec<f64>,
    dtheta: Vec<f64>,
}

impl OrbitSolution {
    pub fn eccentricity(&self) -> f64 {
        self.e
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    /// Sample times of the table, `i / n` for `i` in `0..n`.
    pub fn tau_grid(&self) -> Vec<f64> {
        (0..self.n).map(|i| i as f64 / self.n as f64).collect()
    }

    pub fn r_over_a_samples(&self) -> &[f64] {
        &self.r_over_a[..self.n]
    }

    pub fn theta_samples(&self) -> &[f64] {
        &self.theta[..self.n]
    }

    /// Interpolated orbit position at any `tau`, extended periodically.
    pub fn at(&self, tau: f64) -> OrbitPoint {
        if self.e == 0.0 {
            return OrbitPoint {
                r_over_a: 1.0,
                theta: TAU * tau,
            };
        }
        let turns = tau.floor();
        let frac = tau - turns;
        let x = frac * self.n as f64;
        let idx = (x.floor() as usize).min(self.n - 1);
        let t = x - idx as f64;
        let h = 1.0 / self.n as f64;

        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;

        let r = h00 * self.r_over_a[idx]
            + h10 * h * self.dr[idx]
            + h01 * self.r_over_a[idx + 1]
            + h11 * h * self.dr[idx + 1];
        let theta = h00 * self.theta[idx]
            + h10 * h * self.dtheta[idx]
            + h01 * self.theta[idx + 1]
            + h11 * h * self.dtheta[idx + 1];
        OrbitPoint {
            r_over_a: r,
            theta: theta + turns * TAU,
        }
    }
}

pub fn build_orbit_table(params: &OrbitParams) -> Result<OrbitSolution> {
    params.validate()?;
    let e = params.e;
    let n = params.n_samples;
    let ang = TAU * (1.0 - e * e).sqrt();

    let mut r_over_a = Vec::with_capacity(n + 1);
    let mut dr = Vec::with_capacity(n + 1);
    let mut theta = Vec::with_capacity(n + 1);
    let mut dtheta = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let tau = i as f64 / n as f64;
        let (r, th, ecc) = kepler_state(e, tau)?;
        // r = 1 - e cos E and dE/dtau = 2 pi / r.
        r_over_a.push(r);
        dr.push(TAU * e * ecc.sin() / r);
        theta.push(th);
        dtheta.push(ang / (r * r));
    }
    // Pin the periodic endpoint exactly.
    r_over_a[n] = r_over_a[0];
    dr[n] = dr[0];
    theta[n] = theta[0] + TAU;
    dtheta[n] = dtheta[0];

    Ok(OrbitSolution {
        e,
        n,
        r_over_a,
        dr,
        theta,
        dtheta,
    })
}
