//! Distribution distances, smoothing and the scaling fits used to compare
//! quantum and classical runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NORMALIZATION_TOL: f64 = 1e-12;

/// Probabilities on the angular-momentum lattice `Jz = beta m`,
/// `m = m_min, m_min + 1, ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector {
    pub beta: f64,
    pub m_min: i64,
    pub p: Vec<f64>,
}

impl ProbabilityVector {
    pub fn m_max(&self) -> i64 {
        self.m_min + self.p.len() as i64 - 1
    }

    pub fn prob(&self, m: i64) -> f64 {
        let i = m - self.m_min;
        if i < 0 || i as usize >= self.p.len() {
            0.0
        } else {
            self.p[i as usize]
        }
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }

    pub fn mean_jz(&self) -> f64 {
        self.iter().map(|(m, p)| self.beta * m as f64 * p).sum()
    }

    /// `(m, P(m))` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.p
            .iter()
            .enumerate()
            .map(move |(i, &p)| (self.m_min + i as i64, p))
    }

    /// Probability density on the `Jz` axis, `P(m) / beta`.
    pub fn density(&self) -> Vec<f64> {
        self.p.iter().map(|p| p / self.beta).collect()
    }

    /// Uniform average of equally ranged vectors.
    pub fn average(vectors: &[ProbabilityVector]) -> Result<ProbabilityVector> {
        let first = vectors.first().ok_or(Error::Empty("probability vectors"))?;
        let mut acc = vec![0.0; first.p.len()];
        for v in vectors {
            check_same_lattice(first, v)?;
            for (a, b) in acc.iter_mut().zip(&v.p) {
                *a += b;
            }
        }
        let inv = 1.0 / vectors.len() as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        Ok(ProbabilityVector {
            beta: first.beta,
            m_min: first.m_min,
            p: acc,
        })
    }
}

fn check_same_lattice(a: &ProbabilityVector, b: &ProbabilityVector) -> Result<()> {
    if ((a.beta - b.beta) / a.beta).abs() > 1e-12 {
        return Err(Error::RangeMismatch(format!(
            "lattice spacing {} vs {}",
            a.beta, b.beta
        )));
    }
    if a.m_min != b.m_min || a.p.len() != b.p.len() {
        return Err(Error::RangeMismatch(format!(
            "m range [{}, {}] vs [{}, {}]",
            a.m_min,
            a.m_max(),
            b.m_min,
            b.m_max()
        )));
    }
    Ok(())
}

fn check_normalized(v: &ProbabilityVector, which: &str) -> Result<()> {
    let t = v.total();
    if (t - 1.0).abs() > NORMALIZATION_TOL * (v.p.len() as f64).sqrt().max(1.0) {
        return Err(Error::param(
            "distribution",
            format!("{which} sums to {t}, not 1"),
        ));
    }
    Ok(())
}

/// Classical and quantum distributions on a common lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionPair {
    pub p_cl: ProbabilityVector,
    pub p_qm: ProbabilityVector,
}

impl DistributionPair {
    pub fn new(p_cl: ProbabilityVector, p_qm: ProbabilityVector) -> Result<Self> {
        check_same_lattice(&p_cl, &p_qm)?;
        check_normalized(&p_cl, "classical distribution")?;
        check_normalized(&p_qm, "quantum distribution")?;
        Ok(DistributionPair { p_cl, p_qm })
    }

    pub fn beta(&self) -> f64 {
        self.p_cl.beta
    }

    pub fn one_norm(&self) -> f64 {
        l1(&self.p_cl.p, &self.p_qm.p)
    }

    /// Both members smoothed by the same triangular kernel.
    pub fn smoothed(&self, delta_s: f64) -> Result<DistributionPair> {
        Ok(DistributionPair {
            p_cl: triangular_smooth(&self.p_cl, delta_s)?,
            p_qm: triangular_smooth(&self.p_qm, delta_s)?,
        })
    }
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// `sum_m |P_a(m) - P_b(m)|`, in `[0, 2]` for normalized inputs.
pub fn one_norm(a: &ProbabilityVector, b: &ProbabilityVector) -> Result<f64> {
    check_same_lattice(a, b)?;
    Ok(l1(&a.p, &b.p))
}

/// Discrete unit-area triangular kernel of half-width `delta_s` on a lattice of
/// spacing `beta`; index 0 is the center.
pub fn triangular_kernel(beta: f64, delta_s: f64) -> Result<Vec<f64>> {
    if !(delta_s >= beta * (1.0 - 1e-12)) {
        return Err(Error::param(
            "delta_s",
            format!("half-width {delta_s} is below the lattice spacing {beta}"),
        ));
    }
    let w = delta_s / beta;
    let reach = (w - 1e-9).ceil() as usize;
    let mut k: Vec<f64> = (0..reach.max(1))
        .map(|i| (1.0 - i as f64 / w).max(0.0))
        .collect();
    let total = k[0] + 2.0 * k[1..].iter().sum::<f64>();
    k.iter_mut().for_each(|x| *x /= total);
    Ok(k)
}

/// Convolution with a triangular kernel of half-width `delta_s` in `Jz`.
///
/// The output lattice is widened by the kernel reach on both sides so no
/// probability is lost at the edges.
pub fn triangular_smooth(p: &ProbabilityVector, delta_s: f64) -> Result<ProbabilityVector> {
    let kernel = triangular_kernel(p.beta, delta_s)?;
    let reach = kernel.len() - 1;
    let n = p.p.len();
    let mut out = vec![0.0; n + 2 * reach];
    for (i, &x) in p.p.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let c = i + reach;
        out[c] += x * kernel[0];
        for (d, &w) in kernel.iter().enumerate().skip(1) {
            out[c - d] += x * w;
            out[c + d] += x * w;
        }
    }
    Ok(ProbabilityVector {
        beta: p.beta,
        m_min: p.m_min - reach as i64,
        p: out,
    })
}

/// Statistical error of a mean over `n` samples, `sigma / sqrt(n)`.
pub fn sigma_m(sigma: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    Ok(sigma / (n as f64).sqrt())
}

/// Expected 1-norm between a multinomial histogram of `n` samples and its
/// parent distribution, `sum_m sqrt(2 p (1 - p) / (pi n))` (normal approximation).
pub fn multinomial_one_norm_floor(p: &ProbabilityVector, n: usize) -> f64 {
    let n = n as f64;
    p.p.iter()
        .map(|&x| (2.0 * x * (1.0 - x) / (std::f64::consts::PI * n)).sqrt())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    /// Residuals of `ln y` about the fitted line.
    pub residuals: Vec<f64>,
}

impl ScalingFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.prefactor * x.powf(self.exponent)
    }
}

struct LineFit {
    slope: f64,
    intercept: f64,
    r_squared: f64,
    residuals: Vec<f64>,
}

fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| b - (intercept + slope * a))
        .collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(LineFit {
        slope,
        intercept,
        r_squared,
        residuals,
    })
}

/// Unweighted least squares of `ln y` against `ln x`.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<ScalingFit> {
    if x.len() != y.len() {
        return Err(Error::Fit("x and y lengths differ".into()));
    }
    if x.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::Fit("power-law fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let line = fit_line(&lx, &ly)?;
    Ok(ScalingFit {
        exponent: line.slope,
        prefactor: line.intercept.exp(),
        r_squared: line.r_squared,
        residuals: line.residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub rate: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub points: usize,
}

/// Slope of `ln y` against `tau` over `tau` in `[window.0, window.1]`.
pub fn fit_exponential(tau: &[f64], y: &[f64], window: (f64, f64)) -> Result<ExponentialFit> {
    if tau.len() != y.len() {
        return Err(Error::Fit("tau and y lengths differ".into()));
    }
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(Error::Fit("empty window".into()));
    }
    let first = tau.first().copied().unwrap_or(f64::NAN);
    let last = tau.last().copied().unwrap_or(f64::NAN);
    if !(lo >= first - 1e-12 && hi <= last + 1e-12) {
        return Err(Error::Fit(format!(
            "window [{lo}, {hi}] outside data range [{first}, {last}]"
        )));
    }
    let (t, ly): (Vec<f64>, Vec<f64>) = tau
        .iter()
        .zip(y)
        .filter(|(t, _)| **t >= lo - 1e-12 && **t <= hi + 1e-12)
        .map(|(t, v)| (*t, *v))
        .unzip();
    if t.len() < 2 {
        return Err(Error::Fit("fewer than two samples in the window".into()));
    }
    if ly.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Fit("exponential fit needs positive data".into()));
    }
    let logs: Vec<f64> = ly.iter().map(|v| v.ln()).collect();
    let line = fit_line(&t, &logs)?;
    Ok(ExponentialFit {
        rate: line.slope,
        prefactor: line.intercept.exp(),
        r_squared: line.r_squared,
        window,
        points: t.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// e-folding time.
    pub tau_d: f64,
    pub floor: f64,
    pub amplitude: f64,
    /// Time of the maximum the decay is measured from.
    pub tau_peak: f64,
    pub rms_residual: f64,
}

/// Least squares of `y = floor + A exp(-(tau - tau_peak) / tau_d)` over the
/// samples from the maximum onward. For fixed `tau_d` the model is linear in
/// `(floor, A)`, so only `tau_d` is searched.
pub fn fit_decay_time(tau: &[f64], y: &[f64]) -> Result<DecayFit> {
    if tau.len() != y.len() || tau.len() < 4 {
        return Err(Error::Fit("need at least 4 matching samples".into()));
    }
    let peak = y
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > y[best] { i } else { best });
    let t: Vec<f64> = tau[peak..].iter().map(|v| v - tau[peak]).collect();
    let ys = &y[peak..];
    if t.len() < 4 {
        return Err(Error::Fit("series does not decay after its maximum".into()));
    }
    let span = *t.last().unwrap();

    let solve = |tau_d: f64| -> (f64, f64, f64) {
        let e: Vec<f64> = t.iter().map(|x| (-x / tau_d).exp()).collect();
        let n = e.len() as f64;
        let se: f64 = e.iter().sum();
        let see: f64 = e.iter().map(|v| v * v).sum();
        let sy: f64 = ys.iter().sum();
        let sey: f64 = e.iter().zip(ys).map(|(a, b)| a * b).sum();
        let det = n * see - se * se;
        let amp = (n * sey - se * sy) / det;
        let floor = (sy - amp * se) / n;
        let sse: f64 = e
            .iter()
            .zip(ys)
            .map(|(a, b)| (b - floor - amp * a).powi(2))
            .sum();
        (sse, floor, amp)
    };

    let dt_min = t[1].max(1e-12) * 0.25;
    let (lo_b, hi_b) = (dt_min.ln(), (20.0 * span).ln());
    let grid = 400;
    let mut best = (f64::INFINITY, lo_b);
    for i in 0..=grid {
        let x = lo_b + (hi_b - lo_b) * i as f64 / grid as f64;
        let sse = solve(x.exp()).0;
        if sse < best.0 {
            best = (sse, x);
        }
    }
    let step = (hi_b - lo_b) / grid as f64;
    let (mut a, mut b) = (best.1 - step, best.1 + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if solve(c.exp()).0 < solve(d.exp()).0 {
            b = d;
        } else {
            a = c;
        }
        if (b - a).abs() < 1e-14 {
            break;
        }
    }
    let x = 0.5 * (a + b);
    let tau_d = x.exp();
    let (sse, floor, amplitude) = solve(tau_d);
    if !(amplitude > 0.0) || x <= lo_b + step || x >= hi_b - step {
        return Err(Error::Fit(format!(
            "series is not an exponential decay (tau_d = {tau_d:.3}, amplitude = {amplitude:.3e})"
        )));
    }
    Ok(DecayFit {
        tau_d,
        floor,
        amplitude,
        tau_peak: tau[peak],
        rms_residual: (sse / t.len() as f64).sqrt(),
    })
}

/// Arithmetic mean of the samples with `tau` in `[lo, hi]`; the samples must
/// span the window.
pub fn time_average(tau: &[f64], series: &[f64], lo: f64, hi: f64) -> Result<f64> {
    if tau.len() != series.len() {
        return Err(Error::param("series", "length differs from tau"));
    }
    let covered = tau.first().is_some_and(|f| *f <= lo + 1e-9)
        && tau.last().is_some_and(|l| *l >= hi - 1e-9);
    if !covered {
        return Err(Error::Empty("samples do not cover the averaging window"));
    }
    let vals: Vec<f64> = tau
        .iter()
        .zip(series)
        .filter(|(t, _)| **t >= lo - 1e-9 && **t <= hi + 1e-9)
        .map(|(_, v)| *v)
        .collect();
    if vals.is_empty() {
        return Err(Error::Empty("averaging window"));
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Running envelope of `|series|`: the maximum over consecutive windows of
/// width `width`, reported at each window's midpoint. Useful for growth-rate
/// fits of oscillating differences.
pub fn envelope(tau: &[f64], series: &[f64], width: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if tau.len() != series.len() {
        return Err(Error::param("series", "length differs from tau"));
    }
    if !(width > 0.0) {
        return Err(Error::param("width", "must be positive"));
    }
    let Some(&start) = tau.first() else {
        return Err(Error::Empty("envelope input"));
    };
    let (mut mid, mut max) = (Vec::new(), Vec::new());
    let mut current: Option<(i64, f64)> = None;
    for (t, v) in tau.iter().zip(series) {
        let w = ((t - start) / width + 1e-9).floor() as i64;
        match current {
            Some((cw, m)) if cw == w => current = Some((cw, m.max(v.abs()))),
            _ => {
                if let Some((cw, m)) = current {
                    mid.push(start + (cw as f64 + 0.5) * width);
                    max.push(m);
                }
                current = Some((w, v.abs()));
            }
        }
    }
    if let Some((cw, m)) = current {
        mid.push(start + (cw as f64 + 0.5) * width);
        max.push(m);
    }
    Ok((mid, max))
}

/// `xi = beta^2 / D`, the single parameter the decoherence data collapse onto.
pub fn collapse_parameter(beta: f64, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::param("D", "collapse parameter needs D > 0"));
    }
    Ok(beta * beta / d)
}

/// One saturation-regime measurement of the smoothed 1-norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingPoint {
    pub beta: f64,
    pub delta_s: f64,
    pub one_norm: f64,
}

/// Power-law fit of the smoothed 1-norm against `beta / delta_s`.
pub fn smoothing_scaling_check(points: &[SmoothingPoint]) -> Result<ScalingFit> {
    let x: Vec<f64> = points.iter().map(|p| p.beta / p.delta_s).collect();
    let y: Vec<f64> = points.iter().map(|p| p.one_norm).collect();
    fit_power_law(&x, &y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(p: Vec<f64>) -> ProbabilityVector {
        ProbabilityVector {
            beta: 0.1,
            m_min: -1,
            p,
        }
    }

    #[test]
    fn one_norm_examples() {
        let a = pv(vec![0.5, 0.5, 0.0]);
        let b = pv(vec![0.25, 0.25, 0.5]);
        assert_eq!(one_norm(&a, &a).unwrap(), 0.0);
        assert!((one_norm(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        let c = pv(vec![0.0, 0.0, 1.0]);
        assert_eq!(one_norm(&a, &c).unwrap(), 2.0);
        let d = ProbabilityVector {
            beta: 0.1,
            m_min: 0,
            p: vec![0.5, 0.5, 0.0],
        };
        assert!(matches!(one_norm(&a, &d), Err(Error::RangeMismatch(_))));
    }

    #[test]
    fn pair_rejects_unnormalized() {
        assert!(DistributionPair::new(pv(vec![0.5, 0.4, 0.0]), pv(vec![0.5, 0.5, 0.0])).is_err());
        assert!(DistributionPair::new(pv(vec![0.5, 0.5, 0.0]), pv(vec![0.5, 0.5, 0.0])).is_ok());
    }

    #[test]
    fn delta_smooths_to_triangle() {
        let mut p = vec![0.0; 21];
        p[10] = 1.0;
        let v = ProbabilityVector {
            beta: 0.05,
            m_min: -10,
            p,
        };
        let s = triangular_smooth(&v, 0.25).unwrap();
        // half-width of 5 lattice sites: weights 5,4,3,2,1 / 25
        assert_eq!(s.m_min, -14);
        let expect = [1.0, 2.0, 3.0, 4.0, 5.0, 4.0, 3.0, 2.0, 1.0];
        for (i, e) in expect.iter().enumerate() {
            assert!((s.prob(-4 + i as i64) - e / 25.0).abs() < 1e-15);
        }
        assert!((s.total() - 1.0).abs() < 1e-12);
        assert!(triangular_smooth(&v, 0.04).is_err());
    }

    #[test]
    fn smoothing_a_broad_gaussian_is_a_small_change() {
        // Continuous oracle: convolving N(0, s^2) with a triangle of half-width w
        // adds variance w^2/6, so the relative density change at the center is
        // about w^2 / (12 s^2).
        let beta = 0.01;
        let s = 1.0;
        let k = 800;
        let mut p: Vec<f64> = (-k..=k)
            .map(|m| (-(beta * m as f64).powi(2) / (2.0 * s * s)).exp())
            .collect();
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= z);
        let v = ProbabilityVector {
            beta,
            m_min: -k,
            p,
        };
        let w = 0.25;
        let sm = triangular_smooth(&v, w).unwrap();
        let rel = (sm.prob(0) - v.prob(0)) / v.prob(0);
        let predicted = -w * w / (12.0 * s * s);
        assert!((rel - predicted).abs() < 0.1 * predicted.abs(), "{rel} vs {predicted}");
    }

    #[test]
    fn sigma_m_values() {
        assert!((sigma_m(0.5, 1_000_000).unwrap() - 5e-4).abs() < 1e-18);
        let n = (0.5f64 / 2e-4).powi(2);
        assert!((n - 6.25e6).abs() < 1e-3);
        assert!(sigma_m(0.5, 0).is_err());
    }

    #[test]
    fn power_law_exact() {
        let x = [1.0, 2.0, 3.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v * v).collect();
        let f = fit_power_law(&x, &y).unwrap();
        assert!((f.exponent - 2.0).abs() < 1e-12);
        assert!((f.prefactor - 3.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(fit_power_law(&x[..2], &y[..2]).is_err());
        assert!(fit_power_law(&[1.0, -2.0, 3.0], &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn exponential_exact_and_window_errors() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|v| 0.01 * (3.0 * v).exp()).collect();
        let f = fit_exponential(&t, &y, (1.0, 4.0)).unwrap();
        assert!((f.rate - 3.0).abs() < 1e-10);
        assert!(fit_exponential(&t, &y, (1.0, 9.0)).is_err());
    }

    #[test]
    fn decay_time_exact() {
        let t: Vec<f64> = (0..300).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|v| (-v / 5.6).exp()).collect();
        let f = fit_decay_time(&t, &y).unwrap();
        assert!((f.tau_d - 5.6).abs() < 1e-6, "{}", f.tau_d);
        assert!(f.floor.abs() < 1e-8);

        let y2: Vec<f64> = t
            .iter()
            .map(|v| if *v < 2.0 { v / 2.0 } else { 0.1 + 0.9 * (-(v - 2.0) / 4.0).exp() })
            .collect();
        let f2 = fit_decay_time(&t, &y2).unwrap();
        assert!((f2.tau_d - 4.0).abs() < 1e-6);
        assert!((f2.floor - 0.1).abs() < 1e-8);
        assert!((f2.tau_peak - 2.0).abs() < 1e-12);

        let rising: Vec<f64> = t.to_vec();
        assert!(fit_decay_time(&t, &rising).is_err());
    }

    #[test]
    fn envelope_takes_window_maxima() {
        let tau: Vec<f64> = (0..8).map(|i| i as f64 * 0.25).collect();
        let y = [0.1, -0.3, 0.2, 0.0, 0.5, -0.9, 0.4, 0.3];
        let (mid, max) = envelope(&tau, &y, 0.5).unwrap();
        assert_eq!(mid, vec![0.25, 0.75, 1.25, 1.75]);
        assert_eq!(max, vec![0.3, 0.2, 0.9, 0.4]);
        assert!(envelope(&tau, &y[..3], 0.5).is_err());
    }

    #[test]
    fn time_average_examples() {
        let t: Vec<f64> = (0..=100).map(|i| i as f64).collect();
        let c = vec![2.5; 101];
        assert_eq!(time_average(&t, &c, 20.0, 100.0).unwrap(), 2.5);
        assert!((time_average(&t, &t, 20.0, 100.0).unwrap() - 60.0).abs() < 1e-12);
        assert!(time_average(&t[..50], &t[..50], 20.0, 100.0).is_err());
    }

    #[test]
    fn collapse_parameter_examples() {
        let xi = collapse_parameter(0.05, 1.06e-4).unwrap();
        assert!((xi - 23.58).abs() < 0.01);
        let xi2 = collapse_parameter(0.1, 4.0 * 1.06e-4).unwrap();
        assert!((xi - xi2).abs() < 1e-9);
        assert!(collapse_parameter(0.05, 0.0).is_err());
    }

    #[test]
    fn smoothing_scaling_recovers_synthetic_law() {
        let pts: Vec<SmoothingPoint> = [(0.05, 0.25), (0.025, 0.25), (0.05, 0.5), (0.0125, 0.1)]
            .iter()
            .map(|&(beta, delta_s)| SmoothingPoint {
                beta,
                delta_s,
                one_norm: 0.58 * (beta / delta_s).powf(0.44),
            })
            .collect();
        let f = smoothing_scaling_check(&pts).unwrap();
        assert!((f.exponent - 0.44).abs() < 1e-12);
        assert!((f.prefactor - 0.58).abs() < 1e-12);
        assert!(smoothing_scaling_check(&pts[..1]).is_err());
    }

    fn random_pv(len: usize) -> impl Strategy<Value = ProbabilityVector> {
        proptest::collection::vec(0.0f64..1.0, len).prop_map(|mut v| {
            v[0] += 1e-3;
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s);
            ProbabilityVector {
                beta: 0.05,
                m_min: -10,
                p: v,
            }
        })
    }

    proptest! {
        #[test]
        fn one_norm_is_a_metric(a in random_pv(21), b in random_pv(21), c in random_pv(21)) {
            let ab = one_norm(&a, &b).unwrap();
            let ba = one_norm(&b, &a).unwrap();
            let ac = one_norm(&a, &c).unwrap();
            let cb = one_norm(&c, &b).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab <= ac + cb + 1e-12);
            prop_assert!((0.0..=2.0 + 1e-12).contains(&ab));
            prop_assert_eq!(one_norm(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn smoothing_contracts_and_preserves_mass(
            a in random_pv(21), b in random_pv(21), w in 0.05f64..0.6
        ) {
            let sa = triangular_smooth(&a, w).unwrap();
            let sb = triangular_smooth(&b, w).unwrap();
            prop_assert!((sa.total() - 1.0).abs() < 1e-12);
            prop_assert!(one_norm(&sa, &sb).unwrap() <= one_norm(&a, &b).unwrap() + 1e-12);
        }

        #[test]
        fn smoothing_is_linear(a in random_pv(15), b in random_pv(15), t in 0.0f64..1.0) {
            let mix = ProbabilityVector {
                p: a.p.iter().zip(&b.p).map(|(x, y)| t * x + (1.0 - t) * y).collect(),
                ..a.clone()
            };
            let lhs = triangular_smooth(&mix, 0.2).unwrap();
            let sa = triangular_smooth(&a, 0.2).unwrap();
            let sb = triangular_smooth(&b, 0.2).unwrap();
            for i in 0..lhs.p.len() {
                prop_assert!((lhs.p[i] - (t * sa.p[i] + (1.0 - t) * sb.p[i])).abs() < 1e-14);
            }
        }
    }
}
