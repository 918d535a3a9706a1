//! Special functions used in the inner loops: Bessel functions of the first
//! kind for the exact quantum potential kicks, and a branch-free sine that the
//! compiler can vectorize across ensemble members.

/// `J_0(x), ..., J_nmax(x)` by Miller's backward recurrence, normalized with
/// `J_0 + 2 sum_k J_2k = 1`.
pub fn bessel_j_sequence(x: f64, nmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; nmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let start = {
        let top = nmax.max(ax as usize);
        let s = top + 16 + (40.0 * top as f64).sqrt() as usize;
        s + (s & 1)
    };
    let mut jp1 = 0.0f64;
    let mut j = 1e-300f64;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let jm1 = 2.0 * k as f64 / ax * j - jp1;
        jp1 = j;
        j = jm1;
        if k - 1 <= nmax {
            out[k - 1] = j;
        }
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * j;
        }
        if j.abs() > 1e250 {
            let s = 1e-250;
            j *= s;
            jp1 *= s;
            norm *= s;
            out.iter_mut().for_each(|v| *v *= s);
        }
    }
    norm += j;
    for v in out.iter_mut() {
        *v /= norm;
    }
    if x < 0.0 {
        for (k, v) in out.iter_mut().enumerate() {
            if k % 2 == 1 {
                *v = -*v;
            }
        }
    }
    out
}

/// Smallest order beyond which `|J_k(x)| < tol` for all larger `k`, using
/// `|J_k(x)| <= (|x|/2)^k / k!`.
pub fn bessel_cutoff(x: f64, tol: f64) -> usize {
    let h = 0.5 * x.abs();
    let mut term = 1.0;
    let mut k = 0usize;
    loop {
        if (k as f64) > h && term < tol {
            return k.saturating_sub(1);
        }
        k += 1;
        term *= h / k as f64;
        if k > 100_000 {
            return k;
        }
    }
}

// Cody–Waite split of pi/2 and the minimax kernels on [-pi/4, pi/4], as in
// the classic fdlibm implementation. Digits are kept as published.
#[allow(clippy::excessive_precision)]
const PIO2_1: f64 = 1.570_796_326_734_125_614_17e+00;
#[allow(clippy::excessive_precision)]
const PIO2_2: f64 = 6.077_100_506_303_965_976_60e-11;
#[allow(clippy::excessive_precision)]
const PIO2_3: f64 = 2.022_266_248_711_166_455_80e-21;
#[allow(clippy::excessive_precision)]
const S1: f64 = -1.666_666_666_666_663_243_48e-01;
#[allow(clippy::excessive_precision)]
const S2: f64 = 8.333_333_333_322_489_461_24e-03;
#[allow(clippy::excessive_precision)]
const S3: f64 = -1.984_126_982_985_794_931_34e-04;
#[allow(clippy::excessive_precision)]
const S4: f64 = 2.755_731_370_707_006_767_89e-06;
#[allow(clippy::excessive_precision)]
const S5: f64 = -2.505_076_025_340_686_341_95e-08;
#[allow(clippy::excessive_precision)]
const S6: f64 = 1.589_690_995_211_550_102_21e-10;
#[allow(clippy::excessive_precision)]
const C1: f64 = 4.166_666_666_666_660_190_37e-02;
#[allow(clippy::excessive_precision)]
const C2: f64 = -1.388_888_888_887_410_957_49e-03;
#[allow(clippy::excessive_precision)]
const C3: f64 = 2.480_158_728_947_672_941_78e-05;
#[allow(clippy::excessive_precision)]
const C4: f64 = -2.755_731_435_139_066_330_35e-07;
#[allow(clippy::excessive_precision)]
const C5: f64 = 2.087_572_321_298_174_827_90e-09;
#[allow(clippy::excessive_precision)]
const C6: f64 = -1.135_964_755_778_819_482_65e-11;
/// Adding and subtracting `1.5 * 2^52` rounds to the nearest integer.
const ROUNDER: f64 = 6_755_399_441_055_744.0;

/// `sin(x)` without branches, accurate to a few ulp for `|x| < 2^20`.
///
/// Used in the trajectory loops, where `f64::sin` would block vectorization.
#[inline(always)]
pub fn fast_sin(x: f64) -> f64 {
    let shifted = x * std::f64::consts::FRAC_2_PI + ROUNDER;
    let quadrant = shifted.to_bits();
    let k = shifted - ROUNDER;
    let r = ((x - k * PIO2_1) - k * PIO2_2) - k * PIO2_3;
    let z = r * r;
    let s = r + r * z * (S1 + z * (S2 + z * (S3 + z * (S4 + z * (S5 + z * S6)))));
    let c = 1.0 - 0.5 * z + z * z * (C1 + z * (C2 + z * (C3 + z * (C4 + z * (C5 + z * C6)))));
    let v = if quadrant & 1 == 0 { s } else { c };
    f64::from_bits(v.to_bits() ^ ((quadrant & 2) << 62))
}
