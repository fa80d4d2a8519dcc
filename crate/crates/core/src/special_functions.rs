//! Macdonald functions K_0, K_1, K_2 and modified Bessel functions I_0, I_1
//! of complex argument.
//!
//! K_nu is evaluated by the ascending series for |z| <= 2, by Steed's
//! continued fraction (Temme's CF2) for 2 < |z| <= 25 and by the
//! Hankel asymptotic expansion beyond.  I_n uses the ascending series for
//! |z| <= 8 and the trapezoidal rule on the periodic integral
//! representation otherwise.  [`oracle_k`] evaluates the integral
//! representation K_nu(z) = int_0^inf exp(-z cosh t) cosh(nu t) dt by adaptive
//! quadrature and is meant for tests only.

use crate::error::{Error, Result};
use crate::quadrature::adaptive_c;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const SERIES_RADIUS: f64 = 2.0;
const ASYMPTOTIC_RADIUS: f64 = 25.0;
const I_SERIES_RADIUS: f64 = 8.0;

/// Order of a supported Bessel function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Order {
    Zero,
    One,
    Two,
}

impl Order {
    pub fn as_f64(self) -> f64 {
        match self {
            Order::Zero => 0.0,
            Order::One => 1.0,
            Order::Two => 2.0,
        }
    }

    pub fn from_index(n: usize) -> Result<Self> {
        match n {
            0 => Ok(Order::Zero),
            1 => Ok(Order::One),
            2 => Ok(Order::Two),
            _ => Err(Error::Domain(format!("unsupported Bessel order {n}"))),
        }
    }
}

/// A single evaluation with its branch error estimate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BesselEval {
    pub order: Order,
    pub z: Complex64,
    pub value: Complex64,
    pub est_rel_err: f64,
}

/// K_0(z) and K_1(z) together, with a relative error estimate.
/// Requires Re z > 0 (not checked; see [`bessel_k`]).
pub fn k01(z: Complex64) -> (Complex64, Complex64, f64) {
    let r = z.norm();
    if r <= SERIES_RADIUS {
        k01_series(z)
    } else if r <= ASYMPTOTIC_RADIUS {
        k01_steed(z)
    } else {
        k01_asymptotic(z)
    }
}

/// K_0(z) for Re z > 0.
#[inline]
pub fn k0(z: Complex64) -> Complex64 {
    k01(z).0
}

/// K_1(z) for Re z > 0.
#[inline]
pub fn k1(z: Complex64) -> Complex64 {
    k01(z).1
}

/// K_0(x) for real x > 0.
#[inline]
pub fn k0_real(x: f64) -> f64 {
    k01_real(x).0
}

/// K_1(x) for real x > 0.
#[inline]
pub fn k1_real(x: f64) -> f64 {
    k01_real(x).1
}

/// Real-arithmetic K_0(x), K_1(x) on the same branches as [`k01`].
pub fn k01_real(x: f64) -> (f64, f64) {
    if x <= SERIES_RADIUS {
        let t = 0.25 * x * x;
        let log_half = (0.5 * x).ln();
        let (mut term, mut term1) = (1.0, 1.0);
        let (mut i0, mut i1s) = (1.0, 1.0);
        let mut h = 0.0;
        let mut k0_sum = 0.0;
        let mut k1_sum = 1.0 - 2.0 * EULER_GAMMA;
        for k in 1..60 {
            let kf = k as f64;
            term *= t / (kf * kf);
            term1 *= t / (kf * (kf + 1.0));
            h += 1.0 / kf;
            let h_next = h + 1.0 / (kf + 1.0);
            i0 += term;
            i1s += term1;
            k0_sum += term * h;
            k1_sum += term1 * (h + h_next - 2.0 * EULER_GAMMA);
            if term * (1.0 + h_next) < 1e-18 * i0 {
                break;
            }
        }
        let k0 = -(log_half + EULER_GAMMA) * i0 + k0_sum;
        let k1 = 1.0 / x + log_half * 0.5 * x * i1s - 0.25 * x * k1_sum;
        (k0, k1)
    } else if x <= ASYMPTOTIC_RADIUS {
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut delh = d;
        let mut h = d;
        let (mut q1, mut q2) = (0.0, 1.0);
        let a1 = 0.25;
        let (mut q, mut c, mut a) = (a1, a1, -a1);
        let mut s = 1.0 + q * delh;
        for i in 2..5000 {
            let fi = i as f64;
            a -= 2.0 * (fi - 1.0);
            c = -c * a / fi;
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + d * a);
            delh = (b * d - 1.0) * delh;
            h += delh;
            let dels = q * delh;
            s += dels;
            if (dels / s).abs() < 1e-17 {
                break;
            }
        }
        let k0 = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
        (k0, k0 * (x + 0.5 - h * a1) / x)
    } else {
        let (k0, k1, _) = k01_asymptotic(Complex64::new(x, 0.0));
        (k0.re, k1.re)
    }
}

/// Checked entry point: K_nu(z) for nu in {0, 1, 2} and Re z > 0.
pub fn bessel_k(order: Order, z: Complex64) -> Result<Complex64> {
    Ok(bessel_k_eval(order, z)?.value)
}

pub fn bessel_k_eval(order: Order, z: Complex64) -> Result<BesselEval> {
    if !(z.re > 0.0) || !z.im.is_finite() {
        return Err(Error::Domain(format!("K_nu requires Re z > 0, got {z}")));
    }
    let (k0, k1, err) = k01(z);
    let value = match order {
        Order::Zero => k0,
        Order::One => k1,
        Order::Two => k0 + k1 * 2.0 / z,
    };
    Ok(BesselEval {
        order,
        z,
        value,
        est_rel_err: err,
    })
}

fn k01_series(z: Complex64) -> (Complex64, Complex64, f64) {
    let t = z * z * 0.25;
    let log_half = (z * 0.5).ln();
    // term_k = t^k / (k!)^2, term1_k = t^k / (k! (k+1)!)
    let mut term = Complex64::new(1.0, 0.0);
    let mut term1 = Complex64::new(1.0, 0.0);
    let mut i0 = term;
    let mut i1s = term1;
    let mut h = 0.0; // harmonic number H_k
    let mut k0_sum = Complex64::new(0.0, 0.0);
    // psi(1) + psi(2) = -2 gamma + 1
    let mut k1_sum = term1 * (1.0 - 2.0 * EULER_GAMMA);
    let mut last = 1.0;
    for k in 1..60 {
        let kf = k as f64;
        term *= t / (kf * kf);
        term1 *= t / (kf * (kf + 1.0));
        h += 1.0 / kf;
        let h_next = h + 1.0 / (kf + 1.0);
        i0 += term;
        i1s += term1;
        k0_sum += term * h;
        k1_sum += term1 * (h + h_next - 2.0 * EULER_GAMMA);
        last = term.norm() * (1.0 + h_next);
        if last < 1e-18 * i0.norm().max(1e-300) {
            break;
        }
    }
    let i1 = z * 0.5 * i1s;
    let k0 = -(log_half + EULER_GAMMA) * i0 + k0_sum;
    let k1 = z.inv() + log_half * i1 - z * 0.25 * k1_sum;
    let err = 4.0 * f64::EPSILON * (1.0 + log_half.norm()) * i0.norm() / k0.norm().max(1e-300)
        + last;
    (k0, k1, err)
}

/// Steed's algorithm with Temme's continued fraction CF2 at nu = 0.
fn k01_steed(z: Complex64) -> (Complex64, Complex64, f64) {
    let one = Complex64::new(1.0, 0.0);
    let mut b = (one + z) * 2.0;
    let mut d = b.inv();
    let mut delh = d;
    let mut h = d;
    let mut q1 = Complex64::new(0.0, 0.0);
    let mut q2 = one;
    let a1 = 0.25;
    let mut q = Complex64::new(a1, 0.0);
    let mut c = Complex64::new(a1, 0.0);
    let mut a = -a1;
    let mut s = one + q * delh;
    let mut converged_at = 1e-16;
    for i in 2..5000 {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -c * a / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = (b + d * a).inv();
        delh = (b * d - one) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        let rel = (dels / s).norm();
        if rel < 1e-17 {
            converged_at = rel.max(1e-16);
            break;
        }
    }
    let h = h * a1;
    let k0 = (Complex64::new(PI, 0.0) / (z * 2.0)).sqrt() * (-z).exp() / s;
    let k1 = k0 * (z + 0.5 - h) / z;
    (k0, k1, converged_at + 8.0 * f64::EPSILON)
}

fn k01_asymptotic(z: Complex64) -> (Complex64, Complex64, f64) {
    let pref = (Complex64::new(PI, 0.0) / (z * 2.0)).sqrt() * (-z).exp();
    let sum = |mu: f64| -> (Complex64, f64) {
        let mut term = Complex64::new(1.0, 0.0);
        let mut acc = term;
        let mut last = 1.0;
        for k in 1..40 {
            let kf = k as f64;
            let odd = 2.0 * kf - 1.0;
            let next = term * (mu - odd * odd) / (kf * 8.0 * z);
            if next.norm() > term.norm() {
                break;
            }
            term = next;
            acc += term;
            last = term.norm();
            if last < 1e-18 {
                break;
            }
        }
        (acc, last)
    };
    let (s0, e0) = sum(0.0);
    let (s1, e1) = sum(4.0);
    (pref * s0, pref * s1, e0.max(e1) + 8.0 * f64::EPSILON)
}

/// I_0(z) and I_1(z) for any finite z.
pub fn i01(z: Complex64) -> (Complex64, Complex64) {
    if z.norm() <= I_SERIES_RADIUS {
        let t = z * z * 0.25;
        let mut term = Complex64::new(1.0, 0.0);
        let mut term1 = Complex64::new(1.0, 0.0);
        let mut i0 = term;
        let mut i1 = term1;
        for k in 1..200 {
            let kf = k as f64;
            term *= t / (kf * kf);
            term1 *= t / (kf * (kf + 1.0));
            i0 += term;
            i1 += term1;
            if term.norm() < 1e-18 * i0.norm() && term1.norm() < 1e-18 * i1.norm() {
                break;
            }
        }
        (i0, z * 0.5 * i1)
    } else {
        // I_n(z) = (1/pi) int_0^pi exp(z cos th) cos(n th) d th, trapezoid rule
        let m = (2.0 * z.norm()).ceil() as usize + 40;
        let mut s0 = Complex64::new(0.0, 0.0);
        let mut s1 = Complex64::new(0.0, 0.0);
        for j in 0..=m {
            let th = PI * j as f64 / m as f64;
            let w = if j == 0 || j == m { 0.5 } else { 1.0 };
            let e = (z * th.cos()).exp() * w;
            s0 += e;
            s1 += e * th.cos();
        }
        (s0 / m as f64, s1 / m as f64)
    }
}

/// Checked entry point for I_0 and I_1.
pub fn bessel_i(order: Order, z: Complex64) -> Result<Complex64> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::Domain(format!("I_nu requires a finite argument, got {z}")));
    }
    let (i0, i1) = i01(z);
    match order {
        Order::Zero => Ok(i0),
        Order::One => Ok(i1),
        Order::Two => Ok(i0 - i1 * 2.0 / z),
    }
}

/// Logarithmic split K_0(z) = -log(z) I_0(z) + rem(z).
///
/// `rem` is an entire function of z^2; it is summed directly for |z| <= 8.
#[derive(Debug, Clone, Copy)]
pub struct K0Split {
    pub i0: Complex64,
    pub rem: Complex64,
    pub rem_err: f64,
}

pub fn k0_split(z: Complex64) -> K0Split {
    if z.norm() <= I_SERIES_RADIUS {
        let t = z * z * 0.25;
        let c = std::f64::consts::LN_2 - EULER_GAMMA;
        let mut term = Complex64::new(1.0, 0.0);
        let mut i0 = term;
        let mut h = 0.0;
        let mut extra = Complex64::new(0.0, 0.0);
        let mut last = 0.0;
        for k in 1..200 {
            let kf = k as f64;
            term *= t / (kf * kf);
            h += 1.0 / kf;
            i0 += term;
            extra += term * h;
            last = term.norm() * (1.0 + h);
            if last < 1e-18 * i0.norm() {
                break;
            }
        }
        let rem = i0 * c + extra;
        K0Split {
            i0,
            rem,
            rem_err: last + 4.0 * f64::EPSILON * (i0.norm() + extra.norm()),
        }
    } else {
        let (i0, _) = i01(z);
        let (k0, _, err) = k01(z);
        let rem = k0 + z.ln() * i0;
        K0Split {
            i0,
            rem,
            rem_err: err * k0.norm() + 4.0 * f64::EPSILON * (z.ln() * i0).norm(),
        }
    }
}

/// Integral-representation oracle for K_nu(z); test use only.
pub fn oracle_k(order: Order, z: Complex64) -> Result<BesselEval> {
    if z.re < 1e-8 {
        return Err(Error::NonConvergence(format!(
            "integral representation does not converge for Re z = {}",
            z.re
        )));
    }
    let nu = order.as_f64();
    // exp(-Re z cosh t) cosh(nu t) < 1e-40 beyond t_max
    let mut t_max: f64 = 1.0;
    while z.re * t_max.cosh() - nu * t_max < 95.0 {
        t_max += 0.25;
    }
    let res = adaptive_c(
        |t| (-z * t.cosh()).exp() * (nu * t).cosh(),
        0.0,
        t_max,
        1e-300,
        1e-13,
        20_000,
    );
    if !res.converged {
        return Err(Error::NonConvergence(format!(
            "adaptive quadrature for K_{nu}({z}) stopped at error {}",
            res.error
        )));
    }
    Ok(BesselEval {
        order,
        z,
        value: res.value,
        est_rel_err: res.error / res.value.norm().max(1e-300),
    })
}

/// Frozen envelope constants for
/// |K_0(z)| <= C0 (1 + |log|z||) e^{-Re z},
/// |K_n(z)| <= C_n |z|^{-n} e^{-3/4 Re z},
/// |K_0^{(k)}(z)| <= C'_k |z|^{-k} e^{-1/2 Re z},
/// on the sector |arg z| <= pi/2 - 0.1.
///
/// Values are the maxima over [`envelope_seed_grid`] times 1.05, rounded up.
pub mod envelopes {
    pub const SECTOR_MARGIN: f64 = 0.1;
    pub const C0: f64 = 1.22;
    pub const C1: f64 = 3.59;
    pub const C2: f64 = 137.3;
    pub const C1_DERIV: f64 = 2.54;
    pub const C2_DERIV: f64 = 48.5;
}

/// Deterministic grid in the sector |arg z| <= pi/2 - 0.1 with
/// |z| log-spaced on [1e-3, 60].
pub fn envelope_seed_grid() -> Vec<Complex64> {
    let n_r = 120;
    let n_a = 41;
    let amax = PI / 2.0 - envelopes::SECTOR_MARGIN;
    let mut out = Vec::with_capacity(n_r * n_a);
    for i in 0..n_r {
        let r = 10f64.powf(-3.0 + (60f64.log10() + 3.0) * i as f64 / (n_r - 1) as f64);
        for j in 0..n_a {
            let a = -amax + 2.0 * amax * j as f64 / (n_a - 1) as f64;
            out.push(Complex64::from_polar(r, a));
        }
    }
    out
}

/// Ratios |K(z)| / envelope(z) for the five envelope families.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct EnvelopeRatios {
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k0_d1: f64,
    pub k0_d2: f64,
}

pub fn envelope_ratios(z: Complex64) -> EnvelopeRatios {
    let (k0, k1, _) = k01(z);
    let k2 = k0 + k1 * 2.0 / z;
    let r = z.norm();
    // K_0' = -K_1, K_0'' = K_0 + K_1 / z
    let d2 = k0 + k1 / z;
    EnvelopeRatios {
        k0: k0.norm() / ((1.0 + r.ln().abs()) * (-z.re).exp()),
        k1: k1.norm() * r / (-0.75 * z.re).exp(),
        k2: k2.norm() * r * r / (-0.75 * z.re).exp(),
        k0_d1: k1.norm() * r / (-0.5 * z.re).exp(),
        k0_d2: d2.norm() * r * r / (-0.5 * z.re).exp(),
    }
}

/// Maximum envelope ratios over a set of sample points.
pub fn fit_envelopes(points: &[Complex64]) -> EnvelopeRatios {
    points.iter().fold(EnvelopeRatios::default(), |acc, &z| {
        let e = envelope_ratios(z);
        EnvelopeRatios {
            k0: acc.k0.max(e.k0),
            k1: acc.k1.max(e.k1),
            k2: acc.k2.max(e.k2),
            k0_d1: acc.k0_d1.max(e.k0_d1),
            k0_d2: acc.k0_d2.max(e.k0_d2),
        }
    })
}
