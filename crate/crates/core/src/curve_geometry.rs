//! Arclength-parameterized planar curves built from bending-angle profiles,
//! their asymptotic frames, and numerical checks of the admissibility
//! assumptions (decay of the asymptotic remainders, chord-ratio bound,
//! bounded curvature, decaying curvature).
//!
//! A curve is determined by its tangent angle: Γ'(s) = (cos βφ(s), sin βφ(s))
//! with Γ(0) = 0.  Unit speed therefore holds exactly and the signed
//! curvature is βφ'(s).

use crate::error::{ensure, Error, Result};
use crate::quadrature::{adaptive, GaussLegendre};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const PANEL_WIDTH: f64 = 0.5;
const PANEL_NODES: usize = 16;

pub type Point = [f64; 2];

/// Curvature samples with power-law tails, used by the custom family.
///
/// Inside `[s[0], s[n-1]]` the curvature is the natural cubic spline through
/// the samples.  Beyond the last knot it continues as
/// `curvature[n-1] * (s[n-1] / s)^tail_exponent` and symmetrically on the left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureTable {
    pub s: Vec<f64>,
    pub curvature: Vec<f64>,
    pub tail_exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ProfileFamily {
    /// φ(s) = θ exp(-((s - s_c)/σ)²)
    GaussianBump,
    /// φ(s) = θ (1 + tanh((s - s_c)/σ)) / 2
    SmoothedCorner,
    CustomTable(CurvatureTable),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BendingProfile {
    pub family: ProfileFamily,
    pub theta: f64,
    pub sigma: f64,
    #[serde(default)]
    pub center: f64,
    #[serde(default = "one")]
    pub beta: f64,
}

fn one() -> f64 {
    1.0
}

impl BendingProfile {
    pub fn straight_line() -> Self {
        Self::gaussian_bump(0.0, 1.0)
    }

    pub fn gaussian_bump(theta: f64, sigma: f64) -> Self {
        Self {
            family: ProfileFamily::GaussianBump,
            theta,
            sigma,
            center: 0.0,
            beta: 1.0,
        }
    }

    pub fn smoothed_corner(theta: f64, sigma: f64) -> Self {
        Self {
            family: ProfileFamily::SmoothedCorner,
            theta,
            sigma,
            center: 0.0,
            beta: 1.0,
        }
    }

    pub fn custom_table(table: CurvatureTable) -> Self {
        Self {
            family: ProfileFamily::CustomTable(table),
            theta: 0.0,
            sigma: 1.0,
            center: 0.0,
            beta: 1.0,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_center(mut self, center: f64) -> Self {
        self.center = center;
        self
    }

    /// Scale used for default truncation lengths.
    pub fn length_scale(&self) -> f64 {
        match &self.family {
            ProfileFamily::CustomTable(t) => t
                .s
                .first()
                .zip(t.s.last())
                .map(|(a, b)| 0.5 * (b - a).abs())
                .unwrap_or(1.0)
                .max(1.0),
            _ => self.sigma.max(1.0) + self.center.abs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure((0.0..=1.0).contains(&self.beta), || {
            format!("beta must lie in [0, 1], got {}", self.beta)
        })?;
        match &self.family {
            ProfileFamily::CustomTable(t) => {
                ensure(t.s.len() >= 3 && t.s.len() == t.curvature.len(), || {
                    "custom table needs at least three (s, curvature) samples of equal length".into()
                })?;
                ensure(t.s.windows(2).all(|w| w[0] < w[1]), || {
                    "custom table abscissae must be strictly increasing".into()
                })?;
                ensure(t.s[0] < 0.0 && *t.s.last().unwrap() > 0.0, || {
                    "custom table must straddle s = 0".into()
                })?;
                ensure(t.tail_exponent > 0.0, || "tail exponent must be positive".into())?;
            }
            _ => {
                ensure(self.theta.abs() < PI, || {
                    format!("theta must lie in (-pi, pi), got {}", self.theta)
                })?;
                ensure(self.sigma > 0.0, || format!("sigma must be positive, got {}", self.sigma))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Spline {
    s: Vec<f64>,
    // per-interval coefficients of a + b h + c h² + d h³
    coef: Vec<[f64; 4]>,
    // φ at each knot, integrated from s[0]
    phi: Vec<f64>,
    tail: f64,
}

impl Spline {
    fn new(t: &CurvatureTable) -> Self {
        let n = t.s.len();
        let y = &t.curvature;
        let h: Vec<f64> = t.s.windows(2).map(|w| w[1] - w[0]).collect();
        // natural spline second derivatives by the tridiagonal sweep
        let mut m = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 1..n - 1 {
            diag[i] = 2.0 * (h[i - 1] + h[i]);
            rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
        }
        for i in 2..n - 1 {
            let f = h[i - 1] / diag[i - 1];
            diag[i] -= f * h[i - 1];
            rhs[i] -= f * rhs[i - 1];
        }
        for i in (1..n - 1).rev() {
            m[i] = (rhs[i] - if i + 1 < n - 1 { h[i] * m[i + 1] } else { 0.0 }) / diag[i];
        }
        let mut coef = Vec::with_capacity(n - 1);
        let mut phi = vec![0.0; n];
        for i in 0..n - 1 {
            let a = y[i];
            let b = (y[i + 1] - y[i]) / h[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0;
            let c = m[i] / 2.0;
            let d = (m[i + 1] - m[i]) / (6.0 * h[i]);
            coef.push([a, b, c, d]);
            let hh = h[i];
            phi[i + 1] = phi[i] + a * hh + b * hh * hh / 2.0 + c * hh.powi(3) / 3.0 + d * hh.powi(4) / 4.0;
        }
        Self {
            s: t.s.clone(),
            coef,
            phi,
            tail: t.tail_exponent,
        }
    }

    fn tail_angle(&self, k_end: f64, s_end: f64, s: f64) -> f64 {
        // ∫_{s_end}^{s} k_end (s_end/u)^p du, valid for s, s_end of one sign
        let p = self.tail;
        let r = s / s_end;
        if (p - 1.0).abs() < 1e-12 {
            k_end * s_end * r.ln()
        } else {
            k_end * s_end * (r.powf(1.0 - p) - 1.0) / (1.0 - p)
        }
    }

    /// (φ, φ', φ'') at s, before subtracting φ(0).
    fn eval(&self, s: f64) -> (f64, f64, f64) {
        let n = self.s.len();
        let p = self.tail;
        if s < self.s[0] {
            let s0 = self.s[0];
            let k0 = self.coef[0][0];
            let r = s0 / s;
            let k = k0 * r.powf(p);
            (self.phi[0] + self.tail_angle(k0, s0, s), k, -p * k / s)
        } else if s > self.s[n - 1] {
            let sn = self.s[n - 1];
            let [a, b, c, d] = self.coef[n - 2];
            let hh = sn - self.s[n - 2];
            let kn = a + b * hh + c * hh * hh + d * hh.powi(3);
            let k = kn * (sn / s).powf(p);
            (self.phi[n - 1] + self.tail_angle(kn, sn, s), k, -p * k / s)
        } else {
            let i = match self.s.binary_search_by(|v| v.partial_cmp(&s).unwrap()) {
                Ok(i) => i.min(n - 2),
                Err(i) => i - 1,
            };
            let [a, b, c, d] = self.coef[i];
            let h = s - self.s[i];
            let phi = self.phi[i] + a * h + b * h * h / 2.0 + c * h.powi(3) / 3.0 + d * h.powi(4) / 4.0;
            (phi, a + b * h + c * h * h + d * h.powi(3), b + 2.0 * c * h + 3.0 * d * h * h)
        }
    }

    fn limits(&self) -> (Option<f64>, Option<f64>) {
        if self.tail <= 1.0 {
            return (None, None);
        }
        let n = self.s.len();
        let (_, kn, _) = self.eval(self.s[n - 1]);
        let k0 = self.coef[0][0];
        let plus = self.phi[n - 1] + kn * self.s[n - 1] / (self.tail - 1.0);
        let minus = self.phi[0] + k0 * self.s[0] / (self.tail - 1.0);
        (Some(minus), Some(plus))
    }
}

#[derive(Debug, Clone)]
enum Angle {
    Gaussian { theta: f64, sigma: f64, center: f64 },
    Corner { theta: f64, sigma: f64, center: f64 },
    Table(Spline, f64),
}

impl Angle {
    fn new(p: &BendingProfile) -> Self {
        match &p.family {
            ProfileFamily::GaussianBump => Angle::Gaussian {
                theta: p.theta,
                sigma: p.sigma,
                center: p.center,
            },
            ProfileFamily::SmoothedCorner => Angle::Corner {
                theta: p.theta,
                sigma: p.sigma,
                center: p.center,
            },
            ProfileFamily::CustomTable(t) => {
                let sp = Spline::new(t);
                let offset = sp.eval(0.0).0;
                Angle::Table(sp, offset)
            }
        }
    }

    /// (φ, φ', φ'') of the unscaled profile.
    fn eval(&self, s: f64) -> (f64, f64, f64) {
        match self {
            Angle::Gaussian { theta, sigma, center } => {
                let u = (s - center) / sigma;
                let e = theta * (-u * u).exp();
                (e, -2.0 * u * e / sigma, (4.0 * u * u - 2.0) * e / (sigma * sigma))
            }
            Angle::Corner { theta, sigma, center } => {
                let u = (s - center) / sigma;
                let th = u.tanh();
                let sech2 = 1.0 - th * th;
                (
                    0.5 * theta * (1.0 + th),
                    0.5 * theta * sech2 / sigma,
                    -theta * sech2 * th / (sigma * sigma),
                )
            }
            Angle::Table(sp, offset) => {
                let (a, b, c) = sp.eval(s);
                (a - offset, b, c)
            }
        }
    }

    fn limits(&self) -> (Option<f64>, Option<f64>) {
        match self {
            Angle::Gaussian { .. } => (Some(0.0), Some(0.0)),
            Angle::Corner { theta, .. } => (Some(0.0), Some(*theta)),
            Angle::Table(sp, offset) => {
                let (m, p) = sp.limits();
                (m.map(|v| v - offset), p.map(|v| v - offset))
            }
        }
    }
}

/// An arclength-parameterized curve with cached positions on [-L, L].
#[derive(Debug, Clone)]
pub struct Curve {
    pub profile: BendingProfile,
    angle: Angle,
    half_length: f64,
    // Γ at the panel boundaries -L, -L + h, ..., L
    prefix: Vec<Point>,
    rule: GaussLegendre,
}

/// Build a curve with the default cache half-length 30·max(1, σ).
pub fn build_curve(profile: BendingProfile) -> Result<Curve> {
    let l = 30.0 * profile.length_scale();
    build_curve_with(profile, l)
}

/// Build a curve caching positions on [-L, L] (L rounded up to a panel multiple).
pub fn build_curve_with(profile: BendingProfile, half_length: f64) -> Result<Curve> {
    profile.validate()?;
    ensure(half_length > 0.0, || "cache half-length must be positive".into())?;
    let angle = Angle::new(&profile);
    if let (Some(m), Some(p)) = angle.limits() {
        let v_minus = [(profile.beta * m).cos(), (profile.beta * m).sin()];
        let v_plus = [(profile.beta * p).cos(), (profile.beta * p).sin()];
        if (v_plus[0] + v_minus[0]).hypot(v_plus[1] + v_minus[1]) < 1e-9 {
            return Err(Error::Geometry(
                "limiting tangents are antiparallel (v+ = -v-)".into(),
            ));
        }
    }
    let panels = (half_length / PANEL_WIDTH).ceil() as usize;
    let l = panels as f64 * PANEL_WIDTH;
    let rule = GaussLegendre::new(PANEL_NODES);
    let mut curve = Curve {
        profile,
        angle,
        half_length: l,
        prefix: vec![[0.0, 0.0]; 2 * panels + 1],
        rule,
    };
    for j in panels..2 * panels {
        let a = -l + j as f64 * PANEL_WIDTH;
        let d = curve.panel_integral(a, a + PANEL_WIDTH);
        let p = curve.prefix[j];
        curve.prefix[j + 1] = [p[0] + d[0], p[1] + d[1]];
    }
    for j in (0..panels).rev() {
        let a = -l + j as f64 * PANEL_WIDTH;
        let d = curve.panel_integral(a, a + PANEL_WIDTH);
        let p = curve.prefix[j + 1];
        curve.prefix[j] = [p[0] - d[0], p[1] - d[1]];
    }
    Ok(curve)
}

impl Curve {
    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn beta(&self) -> f64 {
        self.profile.beta
    }

    pub fn is_straight(&self) -> bool {
        self.profile.beta == 0.0
            || match &self.profile.family {
                ProfileFamily::CustomTable(t) => t.curvature.iter().all(|&k| k == 0.0),
                _ => self.profile.theta == 0.0,
            }
    }

    /// Tangent angle βφ(s) and its first two derivatives.
    pub fn angle(&self, s: f64) -> (f64, f64, f64) {
        let (a, b, c) = self.angle.eval(s);
        let beta = self.profile.beta;
        (beta * a, beta * b, beta * c)
    }

    /// Unscaled relative angle φ(s) - φ(t) of the profile (β = 1).
    pub fn profile_angle(&self, s: f64) -> f64 {
        self.angle.eval(s).0
    }

    /// Limiting tangent angles (minus, plus) if they exist.
    pub fn limiting_angles(&self) -> (Option<f64>, Option<f64>) {
        let (m, p) = self.angle.limits();
        let b = self.profile.beta;
        (m.map(|v| b * v), p.map(|v| b * v))
    }

    fn panel_integral(&self, a: f64, b: f64) -> Point {
        let mut acc = [0.0, 0.0];
        for (x, w) in self.rule.on(a, b) {
            let th = self.angle(x).0;
            acc[0] += w * th.cos();
            acc[1] += w * th.sin();
        }
        acc
    }

    /// Γ(s).
    pub fn point(&self, s: f64) -> Point {
        if self.is_straight() {
            let th = self.angle(0.0).0;
            return if th == 0.0 { [s, 0.0] } else { [s * th.cos(), s * th.sin()] };
        }
        let l = self.half_length;
        let last = self.prefix.len() - 1;
        if s >= l || s <= -l {
            let (start, base) = if s >= l { (l, self.prefix[last]) } else { (-l, self.prefix[0]) };
            let n = ((s - start).abs() / PANEL_WIDTH).ceil().max(1.0) as usize;
            let h = (s - start) / n as f64;
            let mut p = base;
            for i in 0..n {
                let a = start + i as f64 * h;
                let d = self.panel_integral(a, a + h);
                p[0] += d[0];
                p[1] += d[1];
            }
            return p;
        }
        let j = (((s + l) / PANEL_WIDTH).floor() as usize).min(last - 1);
        let a = -l + j as f64 * PANEL_WIDTH;
        let d = self.panel_integral(a, s);
        let p = self.prefix[j];
        [p[0] + d[0], p[1] + d[1]]
    }

    pub fn points(&self, s: &[f64]) -> Vec<Point> {
        s.par_iter().map(|&x| self.point(x)).collect()
    }

    /// Γ'(s).
    pub fn tangent(&self, s: f64) -> Point {
        let th = self.angle(s).0;
        [th.cos(), th.sin()]
    }

    /// Γ''(s).
    pub fn second(&self, s: f64) -> Point {
        let (th, d1, _) = self.angle(s);
        [-th.sin() * d1, th.cos() * d1]
    }

    /// Γ'''(s).
    pub fn third(&self, s: f64) -> Point {
        let (th, d1, d2) = self.angle(s);
        let (sn, cs) = th.sin_cos();
        [-cs * d1 * d1 - sn * d2, -sn * d1 * d1 + cs * d2]
    }

    /// Signed curvature 𝔎(s) = Γ1'Γ2'' - Γ2'Γ1''.
    pub fn curvature(&self, s: f64) -> f64 {
        let t = self.tangent(s);
        let g = self.second(s);
        t[0] * g[1] - t[1] * g[0]
    }

    /// 𝔎'(s).
    pub fn curvature_derivative(&self, s: f64) -> f64 {
        self.angle(s).2
    }

    pub fn chord(&self, s: f64, t: f64) -> f64 {
        let a = self.point(s);
        let b = self.point(t);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }
}

/// Asymptotic description Γ(s) = a± + v± s + ν±(s) of a curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticFrame {
    pub a_plus: Point,
    pub a_minus: Point,
    pub v_plus: Point,
    pub v_minus: Point,
    /// Chord-ratio lower bound and the pair attaining it (None if asymptotic).
    pub rho: f64,
    pub rho_pair: Option<(f64, f64)>,
    /// Far-field limit |v+ + v-|/2 of the chord ratio for opposite arms.
    pub rho_far: f64,
    /// R_1 such that φ±(±s) <= s^{-7/2} for s >= R_1 on the tabulated range.
    pub r1: f64,
    pub truncation: f64,
    /// |ν±(±L)| bound s^{1-κ}/(κ-1) with κ = 7/2.
    pub nu_tail_bound: f64,
    /// |φ(±L) - φ±∞| (the frame is accurate when this is below 1e-10).
    pub angle_mismatch: f64,
    pub table_s: Vec<f64>,
    pub nu_plus: Vec<Point>,
    pub nu_minus: Vec<Point>,
    pub phi_plus: Vec<f64>,
    pub phi_minus: Vec<f64>,
}

impl AsymptoticFrame {
    fn lookup(&self, table: &[f64], s: f64) -> f64 {
        let h = self.table_s[1] - self.table_s[0];
        let i = (s.abs() / h).floor() as usize;
        if i + 1 >= table.len() {
            return *table.last().unwrap();
        }
        let f = s.abs() / h - i as f64;
        table[i] * (1.0 - f) + table[i + 1] * f
    }

    /// φ+(s) for s >= 0.
    pub fn phi_plus_at(&self, s: f64) -> f64 {
        self.lookup(&self.phi_plus, s)
    }

    /// φ-(s) for s <= 0.
    pub fn phi_minus_at(&self, s: f64) -> f64 {
        self.lookup(&self.phi_minus, s)
    }

    /// |ν+(s)| for s >= 0 (interpolated).
    pub fn nu_plus_norm(&self, s: f64) -> f64 {
        let n: Vec<f64> = self.nu_plus.iter().map(|p| p[0].hypot(p[1])).collect();
        self.lookup(&n, s)
    }

    /// ‖ν+'‖ at s >= 0 evaluated directly from the curve.
    pub fn nu_prime(&self, curve: &Curve, s: f64) -> f64 {
        let t = curve.tangent(s);
        let v = if s >= 0.0 { self.v_plus } else { self.v_minus };
        (t[0] - v[0]).hypot(t[1] - v[1])
    }
}

const KAPPA: f64 = 3.5;

fn tail_integral(curve: &Curve, start: f64, dir: f64, v: Point) -> Point {
    // ∫_start^{±∞} (Γ'(u) - v) du on geometrically growing panels
    let mut acc = [0.0, 0.0];
    let mut a = start;
    let mut width = PANEL_WIDTH;
    for _ in 0..200 {
        let b = a + dir * width;
        let mut d = [0.0, 0.0];
        for (x, w) in curve.rule.on(a.min(b), a.max(b)) {
            let t = curve.tangent(x);
            d[0] += w * (t[0] - v[0]);
            d[1] += w * (t[1] - v[1]);
        }
        acc[0] += dir * d[0];
        acc[1] += dir * d[1];
        if d[0].hypot(d[1]) < 1e-18 && width > 4.0 {
            break;
        }
        a = b;
        width *= 1.25;
    }
    acc
}

/// Asymptotic frame with truncation L.
pub fn asymptotic_frame(curve: &Curve, truncation: f64) -> Result<AsymptoticFrame> {
    let (m, p) = curve.limiting_angles();
    let (m, p) = match (m, p) {
        (Some(m), Some(p)) => (m, p),
        _ => {
            return Err(Error::Geometry(
                "the tangent has no limit at infinity (bending angle diverges)".into(),
            ))
        }
    };
    let l = truncation;
    let v_plus = [p.cos(), p.sin()];
    let v_minus = [m.cos(), m.sin()];
    let gp = curve.point(l);
    let gm = curve.point(-l);
    let tp = tail_integral(curve, l, 1.0, v_plus);
    let tm = tail_integral(curve, -l, -1.0, v_minus);
    // a+ = Γ(L) - v+ L + ∫_L^∞ (Γ' - v+) du
    let a_plus = [gp[0] - v_plus[0] * l + tp[0], gp[1] - v_plus[1] * l + tp[1]];
    let a_minus = [gm[0] + v_minus[0] * l - tm[0], gm[1] + v_minus[1] * l - tm[1]];
    let angle_mismatch = (curve.angle(l).0 - p).abs().max((curve.angle(-l).0 - m).abs());

    let h = 0.01 * curve.profile.sigma.clamp(0.1, 1.0);
    let n = (2.0 * l / h).ceil() as usize + 1;
    let table_s: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    let nu = |s: f64, a: Point, v: Point| {
        let g = curve.point(s);
        [g[0] - a[0] - v[0] * s, g[1] - a[1] - v[1] * s]
    };
    let nu_plus: Vec<Point> = table_s.par_iter().map(|&s| nu(s, a_plus, v_plus)).collect();
    let nu_minus: Vec<Point> = table_s.par_iter().map(|&s| nu(-s, a_minus, v_minus)).collect();
    let dp: Vec<f64> = table_s
        .iter()
        .map(|&s| {
            let t = curve.tangent(s);
            (t[0] - v_plus[0]).hypot(t[1] - v_plus[1])
        })
        .collect();
    let dm: Vec<f64> = table_s
        .iter()
        .map(|&s| {
            let t = curve.tangent(-s);
            (t[0] - v_minus[0]).hypot(t[1] - v_minus[1])
        })
        .collect();
    let suffix_max = |d: &[f64]| {
        let mut out = d.to_vec();
        for i in (0..out.len() - 1).rev() {
            out[i] = out[i].max(out[i + 1]);
        }
        out
    };
    let phi_plus = suffix_max(&dp);
    let phi_minus = suffix_max(&dm);
    let mut r1: f64 = 1.0;
    for (i, &s) in table_s.iter().enumerate().skip(1) {
        if phi_plus[i] > s.powf(-KAPPA) || phi_minus[i] > s.powf(-KAPPA) {
            r1 = r1.max(s + h);
        }
    }
    let rho_far = 0.5 * (v_plus[0] + v_minus[0]).hypot(v_plus[1] + v_minus[1]);
    let (grid_rho, pair) = chord_ratio_minimum(curve, l);
    let (rho, rho_pair) = if rho_far < grid_rho {
        (rho_far, None)
    } else {
        (grid_rho, pair)
    };
    if rho <= 0.0 {
        return Err(Error::Geometry(format!(
            "chord ratio minimum {rho} is not positive (self-intersection)"
        )));
    }
    Ok(AsymptoticFrame {
        a_plus,
        a_minus,
        v_plus,
        v_minus,
        rho,
        rho_pair,
        rho_far,
        r1,
        truncation: l,
        nu_tail_bound: l.powf(1.0 - KAPPA) / (KAPPA - 1.0),
        angle_mismatch,
        table_s,
        nu_plus,
        nu_minus,
        phi_plus,
        phi_minus,
    })
}

/// Minimum of |Γ(s) - Γ(t)| / |s - t| over a coarse grid of step 0.1 on
/// [-L, L], refined locally around the coarse minimizer.  Returns 1 with no
/// pair when the minimum is the diagonal value.
pub fn chord_ratio_minimum(curve: &Curve, l: f64) -> (f64, Option<(f64, f64)>) {
    let h = 0.1;
    let n = (2.0 * l / h).round() as usize + 1;
    let s: Vec<f64> = (0..n).map(|i| -l + i as f64 * h).collect();
    let pts = curve.points(&s);
    let best = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut b = (1.0, i, i);
            for j in i + 1..n {
                let r = (pts[i][0] - pts[j][0]).hypot(pts[i][1] - pts[j][1]) / (s[j] - s[i]);
                if r < b.0 {
                    b = (r, i, j);
                }
            }
            b
        })
        .reduce(|| (1.0, 0, 0), |a, b| if b.0 < a.0 { b } else { a });
    if best.1 == best.2 {
        return (1.0, None);
    }
    let (mut rmin, mut si, mut ti) = (best.0, s[best.1], s[best.2]);
    let (s0, t0) = (si, ti);
    let m = 50;
    let fine = h / m as f64;
    for a in -m..=m {
        let x = s0 + a as f64 * fine;
        let px = curve.point(x);
        for b in -m..=m {
            let y = t0 + b as f64 * fine;
            if y - x < 1e-9 {
                continue;
            }
            let py = curve.point(y);
            let r = (px[0] - py[0]).hypot(px[1] - py[1]) / (y - x);
            if r < rmin {
                rmin = r;
                si = x;
                ti = y;
            }
        }
    }
    (rmin, Some((si, ti)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionItem {
    pub passed: bool,
    pub value: f64,
    /// (truncation or cutoff, value) pairs backing the decision.
    pub ladder: Vec<(f64, f64)>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub delta: f64,
    pub cutoff: f64,
    pub assumption_1: AssumptionItem,
    pub assumption_2: AssumptionItem,
    pub assumption_3: AssumptionItem,
    pub assumption_4: AssumptionItem,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.assumption_1.passed
            && self.assumption_2.passed
            && self.assumption_3.passed
            && self.assumption_4.passed
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Weighted integral ∫_R^{L} (1 + s²)^δ g(s)² ds with g = |Γ'(s) - v| suffix sup.
fn weighted_envelope_integral(curve: &Curve, v: Point, dir: f64, r: f64, l: f64, delta: f64) -> f64 {
    // suffix sup taken on a fine grid extending to 2L
    let h = 0.01;
    let n = ((2.0 * l - r) / h).ceil() as usize + 1;
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let t = curve.tangent(dir * (r + i as f64 * h));
            (t[0] - v[0]).hypot(t[1] - v[1])
        })
        .collect();
    let mut sup = d;
    for i in (0..n - 1).rev() {
        sup[i] = sup[i].max(sup[i + 1]);
    }
    let m = ((l - r) / h).round() as usize;
    let mut acc = 0.0;
    for i in 0..m {
        let (a, b) = (r + i as f64 * h, r + (i + 1) as f64 * h);
        let fa = (1.0 + a * a).powf(delta) * sup[i] * sup[i];
        let fb = (1.0 + b * b).powf(delta) * sup[i + 1] * sup[i + 1];
        acc += 0.5 * h * (fa + fb);
    }
    acc
}

/// Numerical check of the admissibility assumptions.
pub fn check_assumptions(curve: &Curve, delta: f64, r: f64) -> Result<AssumptionReport> {
    ensure(delta > 3.0, || format!("delta must exceed 3, got {delta}"))?;
    ensure(r > 0.0, || format!("cutoff R must be positive, got {r}"))?;
    let l = curve.half_length().max(4.0 * r);
    let ladder_l = [l / 4.0, l / 2.0, l];

    let a1 = match curve.limiting_angles() {
        (Some(m), Some(p)) => {
            let vp = [p.cos(), p.sin()];
            let vm = [m.cos(), m.sin()];
            let ladder: Vec<(f64, f64)> = ladder_l
                .iter()
                .filter(|&&x| x > r)
                .map(|&x| {
                    (
                        x,
                        weighted_envelope_integral(curve, vp, 1.0, r, x, delta)
                            + weighted_envelope_integral(curve, vm, -1.0, r, x, delta),
                    )
                })
                .collect();
            summarize_ladder(ladder)
        }
        _ => {
            // no limiting tangent: use the end-of-cache tangents as proxies
            let vp = curve.tangent(l);
            let vm = curve.tangent(-l);
            let ladder: Vec<(f64, f64)> = ladder_l
                .iter()
                .filter(|&&x| x > r)
                .map(|&x| {
                    (
                        x,
                        weighted_envelope_integral(curve, vp, 1.0, r, x, delta)
                            + weighted_envelope_integral(curve, vm, -1.0, r, x, delta),
                    )
                })
                .collect();
            let mut item = summarize_ladder(ladder);
            item.passed = false;
            item.value = f64::INFINITY;
            item.detail = "bending angle has no limit; weighted integral diverges".into();
            item
        }
    };

    let (rho, pair) = chord_ratio_minimum(curve, l);
    let rho_far = match curve.limiting_angles() {
        (Some(m), Some(p)) => 0.5 * (p.cos() + m.cos()).hypot(p.sin() + m.sin()),
        _ => rho,
    };
    let rho_all = rho.min(rho_far);
    let a2 = AssumptionItem {
        passed: rho_all > 0.0,
        value: rho_all,
        ladder: vec![(l, rho), (f64::INFINITY, rho_far)],
        detail: match pair {
            Some((s, t)) => format!("grid minimum at (s, t) = ({s:.4}, {t:.4})"),
            None => "minimum attained on the diagonal".into(),
        },
    };

    let h = 0.01;
    let n = (2.0 * l / h).round() as usize + 1;
    let grid: Vec<f64> = (0..n).map(|i| -l + i as f64 * h).collect();
    let sup_second = grid
        .iter()
        .map(|&s| {
            let g = curve.second(s);
            g[0].hypot(g[1])
        })
        .fold(0.0, f64::max);
    let a3 = AssumptionItem {
        passed: sup_second.is_finite(),
        value: sup_second,
        ladder: vec![(l, sup_second)],
        detail: "sup |Γ''| on the sampled range".into(),
    };

    let cutoffs = [l / 8.0, l / 4.0, l / 2.0, l];
    let tail_sup = |cut: f64| {
        grid.iter()
            .chain([2.0 * l, -2.0 * l].iter())
            .filter(|s| s.abs() >= cut)
            .map(|&s| curve.curvature(s).abs().max(curve.curvature_derivative(s).abs()))
            .fold(0.0, f64::max)
    };
    let ladder4: Vec<(f64, f64)> = cutoffs.iter().map(|&c| (c, tail_sup(c))).collect();
    let first = ladder4[0].1;
    let last = ladder4.last().unwrap().1;
    let decreasing = ladder4.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12));
    let a4 = AssumptionItem {
        passed: decreasing && (last <= 0.5 * first || last < 1e-10),
        value: last,
        ladder: ladder4,
        detail: "sup over |s| >= S of max(|K|, |K'|)".into(),
    };

    Ok(AssumptionReport {
        delta,
        cutoff: r,
        assumption_1: a1,
        assumption_2: a2,
        assumption_3: a3,
        assumption_4: a4,
    })
}

fn summarize_ladder(ladder: Vec<(f64, f64)>) -> AssumptionItem {
    let vals: Vec<f64> = ladder.iter().map(|p| p.1).collect();
    let (value, passed, detail) = match vals.as_slice() {
        [.., a, b, c] => {
            let d1 = b - a;
            let d2 = c - b;
            if d2 <= 1e-14 * c.abs().max(1e-300) || d2 <= 0.0 {
                (*c, c.is_finite(), "ladder converged".to_string())
            } else if d1 > 0.0 && d2 < d1 {
                let q = d2 / d1;
                (c + d2 * q / (1.0 - q), true, format!("geometric tail estimate, ratio {q:.3}"))
            } else {
                (f64::INFINITY, false, "ladder increments do not decay".to_string())
            }
        }
        [.., c] => (*c, c.is_finite(), "single ladder point".to_string()),
        [] => (0.0, true, "empty range".to_string()),
    };
    AssumptionItem {
        passed,
        value,
        ladder,
        detail,
    }
}

/// Result of the chord condition check with the most violating pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EiCheck {
    pub holds: bool,
    pub worst_margin: f64,
    pub worst_pair: (f64, f64),
}

/// |Γ(s)-Γ(s')|/|s-s'| >= 1 - d / sqrt(1 + |s+s'|^{2μ}) over same-sign grid
/// pairs with ω < s/s' < 1/ω.
pub fn check_ei_condition(curve: &Curve, d: f64, mu: f64, omega: f64) -> Result<EiCheck> {
    ensure(omega > 0.0 && omega < 1.0, || format!("omega must be in (0, 1), got {omega}"))?;
    ensure(mu > 0.0 && d > 0.0, || "mu and d must be positive".into())?;
    let l = curve.half_length();
    let h = 0.05;
    let n = (l / h).round() as usize;
    let pos: Vec<f64> = (1..=n).map(|i| i as f64 * h).collect();
    let results: Vec<(f64, (f64, f64))> = [1.0, -1.0]
        .par_iter()
        .map(|&sign| {
            let s: Vec<f64> = pos.iter().map(|x| sign * x).collect();
            let pts = curve.points(&s);
            let mut worst = (f64::INFINITY, (0.0, 0.0));
            for i in 0..n {
                for j in i + 1..n {
                    let ratio = pos[i] / pos[j];
                    if ratio <= omega {
                        continue;
                    }
                    let lhs = (pts[i][0] - pts[j][0]).hypot(pts[i][1] - pts[j][1]) / (pos[j] - pos[i]);
                    let rhs = 1.0 - d / (1.0 + (pos[i] + pos[j]).powf(2.0 * mu)).sqrt();
                    let margin = lhs - rhs;
                    if margin < worst.0 {
                        worst = (margin, (s[i], s[j]));
                    }
                }
            }
            worst
        })
        .collect();
    let worst = if results[0].0 <= results[1].0 { results[0] } else { results[1] };
    Ok(EiCheck {
        holds: worst.0 >= -1e-13,
        worst_margin: worst.0,
        worst_pair: worst.1,
    })
}

/// d = max((1-ρ) sqrt(1 + 2^{2μ} R_2^{2μ}), 2^{μ+1/2} ω^{-μ}) with μ = 7/2 and
/// R_2 = max(R_1, 1)/ω.
pub fn ei_scale_recipe(frame: &AsymptoticFrame, omega: f64) -> (f64, f64) {
    let mu = KAPPA;
    let r2 = frame.r1.max(1.0) / omega;
    let d1 = (1.0 - frame.rho) * (1.0 + 2f64.powf(2.0 * mu) * r2.powf(2.0 * mu)).sqrt();
    let d2 = 2f64.powf(mu + 0.5) * omega.powf(-mu);
    (d1.max(d2), mu)
}

/// Γ(s) by adaptive quadrature of the tangent, independent of the cache.
pub fn point_by_quadrature(curve: &Curve, s: f64) -> Point {
    let (x, _, _) = adaptive(|u| curve.tangent(u)[0], 0.0, s, 1e-14, 1e-14);
    let (y, _, _) = adaptive(|u| curve.tangent(u)[1], 0.0, s, 1e-14, 1e-14);
    [x, y]
}
