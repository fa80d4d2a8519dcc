//! Quantitative ingredients of the wave-operator existence argument: the
//! spectral projector of the straight-line Hamiltonian onto the momentum
//! window (0, α/2), the Neumann-series kernel bounding the perturbed
//! boundary resolvent, the trace-norm bounding integrals of C₁₁…C₁₅ and the
//! t^{-3/2} leakage of a free wave packet into the left half-line.
//!
//! Planar coordinates in the trace bounds are those in which the outgoing
//! asymptote Γ⁺(s) = a₊ + v₊s becomes the x₁ axis, so that
//! φ₀(x₂) = √(α/2) e^{-α|x₂|/2} is the transverse bound state of H⁽⁺⁾.

use crate::curve_geometry::{asymptotic_frame, Curve, Point};
use crate::error::{ensure, Error, Result};
use crate::kernel_ops::{weighted_hs_norm, Grid1D, SpectralParameter};
use crate::quadrature::{adaptive, GaussLegendre};
use crate::special_functions::{envelopes, k0_real, k1_real};
use crate::table::Table;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

// ---------------------------------------------------------------------------
// projector

/// Uniform sample grids x₁ = (j - n₁/2)h₁ and x₂ = (j - n₂/2)h₂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarGrid {
    pub n1: usize,
    pub h1: f64,
    pub n2: usize,
    pub h2: f64,
}

impl PlanarGrid {
    pub fn x1(&self) -> Vec<f64> {
        (0..self.n1).map(|j| (j as f64 - (self.n1 / 2) as f64) * self.h1).collect()
    }

    pub fn x2(&self) -> Vec<f64> {
        (0..self.n2).map(|j| (j as f64 - (self.n2 / 2) as f64) * self.h2).collect()
    }

    /// Angular frequencies of the x₁ DFT bins in FFT order.
    pub fn momenta(&self) -> Vec<f64> {
        let n = self.n1;
        let dp = 2.0 * PI / (n as f64 * self.h1);
        (0..n)
            .map(|j| if j < n.div_ceil(2) { j as f64 * dp } else { (j as f64 - n as f64) * dp })
            .collect()
    }
}

/// Separable planar function ψ₁(x₁)ψ₂(x₂) on a [`PlanarGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableFn {
    pub f1: Vec<C>,
    pub f2: Vec<C>,
}

impl SeparableFn {
    /// Dense samples ψ(x₁_i, x₂_j).
    pub fn to_planar(&self) -> DMatrix<C> {
        DMatrix::from_fn(self.f1.len(), self.f2.len(), |i, j| self.f1[i] * self.f2[j])
    }
}

/// Discrete form of P⁽⁺⁾_> J⁽⁺⁾ = ℱ₁⁻¹χ_(0,α/2)ℱ₁ ⊗ φ₀(φ₀,·)₂.
#[derive(Debug, Clone)]
pub struct ProjectorRep {
    pub alpha: f64,
    pub grid: PlanarGrid,
    /// φ₀ normalised in the discrete inner product.
    pub phi0: Vec<f64>,
    /// |‖φ₀‖_h - 1| before normalisation.
    pub phi0_norm_defect: f64,
    pub bins_in_window: usize,
    window: Vec<bool>,
}

/// Output of [`ProjectorRep::apply`].
#[derive(Debug, Clone)]
pub struct ProjectorOutput {
    pub value: SeparableFn,
    /// Relative spectral energy of ψ₁ within one bin of the window edges.
    pub edge_mass: f64,
    /// Relative spectral energy of ψ₁ in the top tenth of the frequency range.
    pub nyquist_mass: f64,
    pub aliasing: bool,
}

fn dft(v: &[C], inverse: bool) -> Vec<C> {
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(v.len()) } else { planner.plan_fft_forward(v.len()) };
    let mut buf = v.to_vec();
    fft.process(&mut buf);
    if inverse {
        let s = 1.0 / v.len() as f64;
        buf.iter_mut().for_each(|z| *z *= s);
    }
    buf
}

pub fn phi0(alpha: f64, x2: f64) -> f64 {
    (0.5 * alpha).sqrt() * (-0.5 * alpha * x2.abs()).exp()
}

impl ProjectorRep {
    pub fn new(alpha: f64, grid: PlanarGrid) -> Result<Self> {
        ensure(alpha > 0.0, || format!("α must be positive, got {alpha}"))?;
        ensure(grid.n1 >= 2 && grid.n2 >= 2 && grid.h1 > 0.0 && grid.h2 > 0.0, || {
            "projector grid needs positive spacings and two points per axis".into()
        })?;
        let raw: Vec<f64> = grid.x2().iter().map(|&x| phi0(alpha, x)).collect();
        let norm = (raw.iter().map(|v| v * v).sum::<f64>() * grid.h2).sqrt();
        let window: Vec<bool> = grid.momenta().iter().map(|&p| p > 0.0 && p < 0.5 * alpha).collect();
        let bins = window.iter().filter(|&&b| b).count();
        ensure(bins > 0, || "no x₁ frequency bin falls inside (0, α/2); enlarge the x₁ grid".into())?;
        Ok(Self {
            alpha,
            grid,
            phi0: raw.iter().map(|v| v / norm).collect(),
            phi0_norm_defect: (norm - 1.0).abs(),
            bins_in_window: bins,
            window,
        })
    }

    fn transverse_coefficient(&self, f2: &[C]) -> C {
        self.phi0.iter().zip(f2).map(|(p, f)| f * *p).sum::<C>() * self.grid.h2
    }

    pub fn apply(&self, psi: &SeparableFn) -> Result<ProjectorOutput> {
        ensure(psi.f1.len() == self.grid.n1 && psi.f2.len() == self.grid.n2, || {
            "separable function does not match the projector grid".into()
        })?;
        let mut spec = dft(&psi.f1, false);
        let total: f64 = spec.iter().map(|z| z.norm_sqr()).sum();
        let p = self.grid.momenta();
        let dp = 2.0 * PI / (self.grid.n1 as f64 * self.grid.h1);
        let pmax = PI / self.grid.h1;
        let mut edge = 0.0;
        let mut top = 0.0;
        for (z, &pj) in spec.iter().zip(&p) {
            let e = z.norm_sqr();
            if pj.abs() < dp || (pj - 0.5 * self.alpha).abs() < dp {
                edge += e;
            }
            if pj.abs() > 0.9 * pmax {
                top += e;
            }
        }
        let (edge_mass, nyquist_mass) = if total > 0.0 { (edge / total, top / total) } else { (0.0, 0.0) };
        for (z, &inside) in spec.iter_mut().zip(&self.window) {
            if !inside {
                *z = C::new(0.0, 0.0);
            }
        }
        let f1 = dft(&spec, true);
        let c = self.transverse_coefficient(&psi.f2);
        let f2 = self.phi0.iter().map(|&p| c * p).collect();
        Ok(ProjectorOutput {
            value: SeparableFn { f1, f2 },
            edge_mass,
            nyquist_mass,
            aliasing: self.bins_in_window < 8 || edge_mass > 1e-6 || nyquist_mass > 1e-10,
        })
    }

    /// e^{-iH⁽⁺⁾t} restricted to the discrete model: e^{-ip²t} in x₁ and the
    /// phase e^{iα²t/4} on the φ₀ component in x₂.
    pub fn evolve(&self, psi: &SeparableFn, t: f64) -> SeparableFn {
        let mut spec = dft(&psi.f1, false);
        for (z, p) in spec.iter_mut().zip(self.grid.momenta()) {
            *z *= C::from_polar(1.0, -p * p * t);
        }
        let c = self.transverse_coefficient(&psi.f2) * (C::from_polar(1.0, 0.25 * self.alpha * self.alpha * t) - 1.0);
        SeparableFn {
            f1: dft(&spec, true),
            f2: psi.f2.iter().zip(&self.phi0).map(|(f, &p)| f + c * p).collect(),
        }
    }

    /// Discrete L² inner product (u, v) = h₁h₂ Σ ū v.
    pub fn inner(&self, u: &SeparableFn, v: &SeparableFn) -> C {
        let a: C = u.f1.iter().zip(&v.f1).map(|(x, y)| x.conj() * y).sum();
        let b: C = u.f2.iter().zip(&v.f2).map(|(x, y)| x.conj() * y).sum();
        a * b * self.grid.h1 * self.grid.h2
    }

    /// ‖u - v‖ from the dense planar samples.
    pub fn distance(&self, u: &SeparableFn, v: &SeparableFn) -> f64 {
        let d = u.to_planar() - v.to_planar();
        (d.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.h1 * self.grid.h2).sqrt()
    }
}

pub fn projector_apply(psi: &SeparableFn, grid: PlanarGrid, alpha: f64) -> Result<ProjectorOutput> {
    ProjectorRep::new(alpha, grid)?.apply(psi)
}

// ---------------------------------------------------------------------------
// Neumann kernel

/// 𝒦₁(s) = c(1 + |log κρ|s||)e^{-κρ|s|} and the partial sums of Σ 𝒦₁^{*n},
/// stored as cell masses on a uniform grid of cell width `cell_width`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeumannKernel {
    pub alpha: f64,
    pub kappa: f64,
    pub rho: f64,
    /// c = αC₀/(2π) with C₀ the fitted K₀ envelope constant.
    pub c: f64,
    pub l1_first: f64,
    pub h1_first: f64,
    /// κ at which ‖𝒦₁‖_{ℋ₁} = 1 for this ρ.
    pub kappa_threshold: f64,
    pub h1_tail_bound: f64,
    pub cell_width: f64,
    pub centres: Vec<f64>,
    pub first: Vec<f64>,
    pub sum: Vec<f64>,
    /// Discrete ℋ₁ norms of 𝒦₁^{*n}, n = 1..=order.
    pub power_h1: Vec<f64>,
    /// Discrete ℋ₁ norms of the partial sums.
    pub partial_h1: Vec<f64>,
    /// ℋ₁ bound on Σ_{n > order} 𝒦₁^{*n}.
    pub remainder: f64,
    pub l1_sum: f64,
    /// Bound on ∫|u|𝒦(u)du.
    pub first_moment: f64,
}

pub const NEUMANN_ORDER: usize = 5;

fn envelope_moments() -> (f64, f64) {
    let f0 = |u: f64| (1.0 + u.ln().abs()) * (-u).exp();
    let j0 = adaptive(f0, 0.0, 1.0, 1e-15, 1e-13).0 + adaptive(f0, 1.0, 60.0, 1e-15, 1e-13).0;
    let f1 = |u: f64| u * (1.0 + u.ln().abs()) * (-u).exp();
    let j1 = adaptive(f1, 0.0, 1.0, 1e-15, 1e-13).0 + adaptive(f1, 1.0, 60.0, 1e-15, 1e-13).0;
    (j0, j1)
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let k = n / 2;
    (0..n)
        .into_par_iter()
        .map(|i| {
            // cell i at offset i - k collects a_j b_{i-j} with offsets adding
            let lo = i.saturating_sub(k);
            let hi = (i + k).min(n - 1);
            (lo..=hi).map(|j| a[j] * b[i + k - j]).sum()
        })
        .collect()
}

pub fn neumann_tail(alpha: f64, kappa: f64, rho: f64) -> Result<NeumannKernel> {
    ensure(alpha > 0.0 && kappa > 0.0 && rho > 0.0 && rho <= 1.0, || {
        format!("need α, κ > 0 and ρ in (0, 1], got α = {alpha}, κ = {kappa}, ρ = {rho}")
    })?;
    let c = alpha * envelopes::C0 / (2.0 * PI);
    let (j0, j1) = envelope_moments();
    let m = kappa * rho;
    let l1_first = 2.0 * c * j0 / m;
    let h1_first = l1_first + 2.0 * c * j1 / (m * m);
    // 2c j1 x² + 2c j0 x = 1 with x = 1/(κρ)
    let x = (-j0 + (j0 * j0 + 2.0 * j1 / c).sqrt()) / (2.0 * j1);
    let kappa_threshold = 1.0 / (x * rho);
    if h1_first >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "κ too small: ‖𝒦₁‖_ℋ₁ = {h1_first:.4} ≥ 1 at κ = {kappa}, ρ = {rho} (threshold κ = {kappa_threshold:.4})"
        )));
    }
    let h = 0.05 / m;
    let k = (50.0 / m / h).ceil() as usize;
    let centres: Vec<f64> = (0..2 * k + 1).map(|i| (i as f64 - k as f64) * h).collect();
    let env = move |s: f64| c * (1.0 + (m * s).ln().abs()) * (-m * s).exp();
    let first: Vec<f64> = centres
        .par_iter()
        .map(|&x| {
            if x == 0.0 {
                2.0 * adaptive(env, 0.0, 0.5 * h, 1e-18, 1e-12).0
            } else {
                let a = x.abs() - 0.5 * h;
                adaptive(env, a, a + h, 1e-18, 1e-12).0
            }
        })
        .collect();
    let h1 = |v: &[f64]| v.iter().zip(&centres).map(|(m, x)| m * (1.0 + x.abs())).sum::<f64>();
    let mut power = first.clone();
    let mut sum = first.clone();
    let mut power_h1 = vec![h1(&first)];
    let mut partial_h1 = vec![h1(&sum)];
    for _ in 1..NEUMANN_ORDER {
        power = convolve(&power, &first);
        sum.iter_mut().zip(&power).for_each(|(s, p)| *s += p);
        power_h1.push(h1(&power));
        partial_h1.push(h1(&sum));
    }
    let q = h1_first;
    let remainder = q.powi(NEUMANN_ORDER as i32 + 1) / (1.0 - q);
    let l1_sum = sum.iter().sum::<f64>() + remainder;
    let first_moment = sum.iter().zip(&centres).map(|(m, x)| m * x.abs()).sum::<f64>() + remainder;
    Ok(NeumannKernel {
        alpha,
        kappa,
        rho,
        c,
        l1_first,
        h1_first,
        kappa_threshold,
        h1_tail_bound: q / (1.0 - q),
        cell_width: h,
        centres,
        first,
        sum,
        power_h1,
        partial_h1,
        remainder,
        l1_sum,
        first_moment,
    })
}

impl NeumannKernel {
    pub fn envelope(&self, s: f64) -> f64 {
        let m = self.kappa * self.rho;
        self.c * (1.0 + (m * s.abs()).ln().abs()) * (-m * s.abs()).exp()
    }

    /// Cell-averaged density of the partial sum at the cell centres.
    pub fn density(&self) -> Vec<f64> {
        self.sum.iter().map(|m| m / self.cell_width).collect()
    }
}

// ---------------------------------------------------------------------------
// trace bounds

/// One bounding integral at truncation L and 2L.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundEntry {
    pub bound_value: f64,
    pub doubled: f64,
    pub ladder_delta: f64,
    pub stable: bool,
}

impl BoundEntry {
    fn new(value: f64, doubled: f64) -> Self {
        let delta = if doubled > 0.0 { (doubled - value).abs() / doubled } else { 0.0 };
        Self {
            bound_value: value,
            doubled,
            ladder_delta: delta,
            stable: value.is_finite() && doubled.is_finite() && delta <= 0.05,
        }
    }
}

/// The two routes to ∬|G₁|.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct G1Check {
    pub delta: f64,
    pub direct: f64,
    pub hs_value: f64,
    /// ∫(1+s²)^{-δ/2}ds.
    pub weight_integral: f64,
    pub cauchy_schwarz: f64,
    pub consistent: bool,
}

/// Nuclear norm of the discretised C₁₁ on a coarse grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NuclearCheck {
    pub nodes: usize,
    pub nuclear_norm: f64,
    pub coarse_bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceBoundReport {
    pub alpha: f64,
    pub kappa: f64,
    pub rho: f64,
    pub half_length: f64,
    pub c11: BoundEntry,
    pub c12: BoundEntry,
    pub c13: BoundEntry,
    pub c14: BoundEntry,
    pub c15: BoundEntry,
    /// s > 0 and s < 0 parts of the C₁₁ integral.
    pub c11_branches: (f64, f64),
    pub parallel_asymptotes: bool,
    /// ∫|u|𝒦(u)du, the C₁₂ cross-region factor.
    pub c12_cross_moment: f64,
    /// ∬|G_j|, j = 1..4.
    pub g_integrals: [f64; 4],
    pub g1: G1Check,
    pub nuclear: Option<NuclearCheck>,
    pub kernel_l1: f64,
}

#[derive(Serialize)]
struct EntryJson<'a> {
    bound_value: f64,
    ladder_delta: f64,
    stable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<&'a serde_json::Value>,
}

impl TraceBoundReport {
    pub fn entries(&self) -> [(&'static str, &BoundEntry); 5] {
        [
            ("C11", &self.c11),
            ("C12", &self.c12),
            ("C13", &self.c13),
            ("C14", &self.c14),
            ("C15", &self.c15),
        ]
    }

    pub fn all_stable(&self) -> bool {
        self.entries().iter().all(|(_, e)| e.stable)
    }

    /// Per-operator {bound_value, ladder_delta, stable} plus the checks.
    pub fn to_json(&self) -> String {
        let mut ops = serde_json::Map::new();
        for (name, e) in self.entries() {
            let v = EntryJson {
                bound_value: e.bound_value,
                ladder_delta: e.ladder_delta,
                stable: e.stable,
                detail: None,
            };
            ops.insert(name.into(), serde_json::to_value(v).unwrap());
        }
        let doc = serde_json::json!({
            "alpha": self.alpha,
            "kappa": self.kappa,
            "rho": self.rho,
            "half_length": self.half_length,
            "operators": ops,
            "c11_branches": {"positive": self.c11_branches.0, "negative": self.c11_branches.1},
            "parallel_asymptotes": self.parallel_asymptotes,
            "c12_cross_moment": self.c12_cross_moment,
            "g_integrals": self.g_integrals,
            "g1": self.g1,
            "nuclear": self.nuclear,
            "kernel_l1": self.kernel_l1,
        });
        serde_json::to_string_pretty(&doc).unwrap()
    }
}

/// Curve and asymptote in the frame where Γ⁺(s) = (s, 0).
struct Frame {
    origin: Point,
    v: Point,
}

impl Frame {
    fn map(&self, p: Point) -> Point {
        let d = [p[0] - self.origin[0], p[1] - self.origin[1]];
        [d[0] * self.v[0] + d[1] * self.v[1], -d[0] * self.v[1] + d[1] * self.v[0]]
    }
}

/// 1 - xK₁(x), with the small-x expansion where the difference cancels.
fn one_minus_xk1(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if x < 1e-3 {
        const EULER: f64 = 0.577_215_664_901_532_9;
        -0.5 * x * x * ((0.5 * x).ln() + EULER - 0.5)
    } else {
        1.0 - x * k1_real(x)
    }
}

/// ∫_{ℝ²} K₀(κ|x-p|)K₀(κ|x-q|)dx = π d K₁(κd)/κ with d = |p-q|.
fn k0_overlap(kappa: f64, p: Point, q: Point) -> f64 {
    let d = (p[0] - q[0]).hypot(p[1] - q[1]);
    PI * (1.0 - one_minus_xk1(kappa * d)) / (kappa * kappa)
}

/// ‖(2π)^{-1}(K₀(κ|·-p|) - K₀(κ|·-q|))‖_{L²(ℝ²)}.
fn difference_norm(kappa: f64, p: Point, q: Point) -> f64 {
    let d = (p[0] - q[0]).hypot(p[1] - q[1]);
    (one_minus_xk1(kappa * d) / (2.0 * PI)).sqrt() / kappa
}

/// ‖(2π)^{-1}K₀(κ|·-p|)‖_{L²(ℝ²)}.
fn single_norm(kappa: f64) -> f64 {
    1.0 / (2.0 * PI.sqrt() * kappa)
}

struct Transverse {
    kappa: f64,
    alpha: f64,
    rule: GaussLegendre,
}

impl Transverse {
    fn new(kappa: f64, alpha: f64) -> Self {
        Self { kappa, alpha, rule: GaussLegendre::new(8) }
    }

    /// Distance beyond which e^{-κr} is below e^{-25}.
    fn reach(&self) -> f64 {
        25.0 / self.kappa
    }

    /// Widest panel: two decay lengths of the kernel or the profile.
    fn width(&self) -> f64 {
        (2.0 / self.kappa).min(4.0 / self.alpha)
    }

    /// Panels of [lo, hi] split at `points` and no wider than the kernel scale.
    fn panels(&self, mut br: Vec<f64>) -> Vec<(f64, f64)> {
        br.sort_by(f64::total_cmp);
        br.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let w = self.width();
        let mut out = Vec::new();
        for win in br.windows(2) {
            let n = ((win[1] - win[0]) / w).ceil().max(1.0) as usize;
            let step = (win[1] - win[0]) / n as f64;
            for i in 0..n {
                let a = win[0] + step * i as f64;
                out.extend(self.rule.on(a, a + step));
            }
        }
        out
    }

    /// ∫K₀(κ|p - (y₁, z)|)φ₀(z)dz.
    fn profile(&self, p: Point, y1: f64) -> f64 {
        let r = (p[0] - y1).abs();
        let d = self.reach();
        let c = p[1];
        // graded towards the near-singular point z = p₂ at scale r
        let mut br = vec![c - d, c, c + d];
        let mut x = r.max(1e-10);
        while x < self.width() {
            br.push(c - x);
            br.push(c + x);
            x *= 2.0;
        }
        if (c - d..=c + d).contains(&0.0) {
            br.push(0.0);
        }
        self.panels(br)
            .into_iter()
            .map(|(z, w)| w * k0_real(self.kappa * r.hypot(c - z)) * phi0(self.alpha, z))
            .sum()
    }

    fn y1_nodes(&self, centres: &[f64]) -> Vec<(f64, f64)> {
        let hi = centres.iter().fold(0.0f64, |m, c| m.max(*c)) + self.reach();
        let mut br = vec![0.0, hi];
        br.extend(centres.iter().filter(|&&c| c > 0.0));
        self.panels(br)
    }

    /// ‖B(s,·)‖ for the curve point p and ‖B₁₃(s,·)‖ for the pair (q, p):
    /// (2π)^{-1}(∫_{y₁>0} F(y₁)² dy₁)^{1/2} with F the transverse profile.
    fn norms(&self, p: Point, q: Point) -> (f64, f64) {
        let nodes = self.y1_nodes(&[p[0], q[0]]);
        let mut b = 0.0;
        let mut b13 = 0.0;
        let same = p == q;
        for (y1, w) in nodes {
            let fp = self.profile(p, y1);
            let fq = if same { fp } else { self.profile(q, y1) };
            b += w * fp * fp;
            b13 += w * (fq - fp) * (fq - fp);
        }
        (b.sqrt() / (2.0 * PI), b13.sqrt() / (2.0 * PI))
    }
}

#[derive(Debug, Clone)]
struct Samples {
    s: Vec<f64>,
    w: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    b13: Vec<f64>,
}

fn sample_norms(curve: &Curve, frame: &Frame, tr: &Transverse, grid: &Grid1D) -> Samples {
    let kappa = tr.kappa;
    let rows: Vec<(f64, f64, f64)> = grid
        .nodes
        .par_iter()
        .map(|&s| {
            let p = frame.map(curve.point(s));
            let q = [s, 0.0];
            let a = difference_norm(kappa, p, q);
            let (b, b13) = tr.norms(p, q);
            (a, b, b13)
        })
        .collect();
    Samples {
        s: grid.nodes.clone(),
        w: grid.weights.clone(),
        a: rows.iter().map(|r| r.0).collect(),
        b: rows.iter().map(|r| r.1).collect(),
        b13: rows.iter().map(|r| r.2).collect(),
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x < xs[0] || x > xs[xs.len() - 1] {
        return 0.0;
    }
    let i = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
    let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    ys[i - 1] * (1.0 - t) + ys[i] * t
}

/// ∬ a(s)𝒦(s - t)b(t)ds dt with 𝒦 the partial sum.  The series remainder R
/// is bounded region by region: ∫_{s<0<t} R(s - t) = ∫_{u<0}|u|R(u)du for the
/// cross region, ‖R‖₁ times the integrable half of a or b elsewhere.
fn kernel_sandwich(k: &NeumannKernel, smp: &Samples, a: &[f64], b: &[f64]) -> f64 {
    let amax = a.iter().cloned().fold(0.0, f64::max);
    let bmax = b.iter().cloned().fold(0.0, f64::max);
    let half = |v: &[f64], positive: bool| -> f64 {
        smp.s.iter().zip(&smp.w).zip(v).filter(|((s, _), _)| (**s > 0.0) == positive).map(|((_, w), v)| w * v).sum()
    };
    let remainder = k.remainder * (amax * bmax + 2.0 * amax * half(b, false) + bmax * half(a, true));
    let conv: Vec<f64> = smp
        .s
        .par_iter()
        .map(|&s| k.centres.iter().zip(&k.sum).map(|(u, m)| m * interpolate(&smp.s, b, s - u)).sum::<f64>())
        .collect();
    smp.w.iter().zip(a).zip(&conv).map(|((w, a), c)| w * a * c).sum::<f64>() + remainder
}

fn g1_direct(curve: &Curve, kappa: f64, grid: &Grid1D) -> f64 {
    let pts = curve.points(&grid.nodes);
    let n = grid.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..i {
                let ds = grid.nodes[i] - grid.nodes[j];
                let chord = (pts[i][0] - pts[j][0]).hypot(pts[i][1] - pts[j][1]);
                let g = k0_real(kappa * chord) - k0_real(kappa * ds.abs());
                acc += 2.0 * grid.weights[i] * grid.weights[j] * g.abs();
            }
            acc / (2.0 * PI)
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

struct Pieces {
    c11: f64,
    c11_pos: f64,
    c11_neg: f64,
    c12: f64,
    c13: f64,
    c14: f64,
    c15: f64,
    g: [f64; 4],
    g1: G1Check,
}

fn pieces(
    curve: &Curve,
    frame: &Frame,
    tr: &Transverse,
    k: &NeumannKernel,
    grid: &Grid1D,
    delta: f64,
) -> Result<(Pieces, Samples)> {
    let smp = sample_norms(curve, frame, tr, grid);
    let (mut pos, mut neg) = (0.0, 0.0);
    for i in 0..smp.s.len() {
        let v = smp.w[i] * smp.a[i] * smp.b[i];
        if smp.s[i] > 0.0 {
            pos += v;
        } else {
            neg += v;
        }
    }
    let c12 = kernel_sandwich(k, &smp, &smp.a, &smp.b);
    let a13 = single_norm(tr.kappa);
    let int_b13: f64 = smp.w.iter().zip(&smp.b13).map(|(w, b)| w * b).sum();
    let c13 = a13 * int_b13;
    let c15 = a13 * k.l1_sum * int_b13;

    let direct = g1_direct(curve, tr.kappa, grid);
    let kp = SpectralParameter::imaginary(tr.kappa)?;
    let hs = weighted_hs_norm(curve, &kp, delta, grid)?;
    let weight_integral = adaptive(|th: f64| th.cos().powf(delta - 2.0), -0.5 * PI, 0.5 * PI, 1e-14, 1e-12).0;
    let cs = weight_integral * hs.value.sqrt();
    let l1 = k.l1_sum;
    let g = [direct, l1 * direct, l1 * direct, l1 * l1 * direct];
    let c14 = a13 * a13 * g.iter().sum::<f64>();
    Ok((
        Pieces {
            c11: pos + neg,
            c11_pos: pos,
            c11_neg: neg,
            c12,
            c13,
            c14,
            c15,
            g,
            g1: G1Check {
                delta,
                direct,
                hs_value: hs.value,
                weight_integral,
                cauchy_schwarz: cs,
                consistent: direct <= 1.2 * cs,
            },
        },
        smp,
    ))
}

fn nuclear_check(curve: &Curve, frame: &Frame, tr: &Transverse, half_length: f64, nodes: usize) -> Result<NuclearCheck> {
    let grid = Grid1D::with_node_count(half_length, nodes, 4)?;
    let m = grid.len();
    let kappa = tr.kappa;
    let p: Vec<Point> = grid.nodes.iter().map(|&s| frame.map(curve.point(s))).collect();
    let q: Vec<Point> = grid.nodes.iter().map(|&s| [s, 0.0]).collect();
    let sw = grid.sqrt_weights();
    let scale = 1.0 / (4.0 * PI * PI);
    let ga = DMatrix::from_fn(m, m, |i, j| {
        let v = k0_overlap(kappa, p[i], p[j]) - k0_overlap(kappa, p[i], q[j]) - k0_overlap(kappa, q[i], p[j])
            + k0_overlap(kappa, q[i], q[j]);
        scale * v * sw[i] * sw[j]
    });
    // shared y₁ nodes for the transverse profiles
    let y1 = GaussLegendre::new(8);
    let hi = p.iter().fold(0.0f64, |a, x| a.max(x[0])) + tr.reach();
    let panels = (hi / 0.05).ceil() as usize;
    let width = hi / panels as f64;
    let ys: Vec<(f64, f64)> =
        (0..panels).flat_map(|i| y1.on(i as f64 * width, (i + 1) as f64 * width).collect::<Vec<_>>()).collect();
    let f: Vec<Vec<f64>> = p.par_iter().map(|&pt| ys.iter().map(|&(y, w)| tr.profile(pt, y) * w.sqrt()).collect()).collect();
    let gb = DMatrix::from_fn(m, m, |i, j| {
        scale * f[i].iter().zip(&f[j]).map(|(a, b)| a * b).sum::<f64>() * sw[i] * sw[j]
    });
    let root = |g: DMatrix<f64>| {
        let e = SymmetricEigen::new(g);
        let d = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()));
        &e.eigenvectors * d * e.eigenvectors.transpose()
    };
    let prod = root(ga.clone()) * root(gb.clone());
    let nuclear_norm = prod.singular_values().sum();
    let coarse_bound = (0..m).map(|i| ga[(i, i)].max(0.0).sqrt() * gb[(i, i)].max(0.0).sqrt()).sum();
    Ok(NuclearCheck {
        nodes: m,
        nuclear_norm,
        coarse_bound,
        holds: nuclear_norm <= coarse_bound * (1.0 + 1e-9),
    })
}

/// Options for [`trace_bound_integrals`].
#[derive(Debug, Clone, Copy)]
pub struct TraceOptions {
    pub delta: f64,
    /// Node count of the coarse nuclear-norm cross-check (0 skips it).
    pub nuclear_nodes: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { delta: 3.5, nuclear_nodes: 48 }
    }
}

/// Bounding integrals of C₁₁…C₁₅ at k = iκ on the s-grid `grid` and on the
/// grid of twice the length.
pub fn trace_bound_integrals(curve: &Curve, alpha: f64, kappa: f64, grid: &Grid1D) -> Result<TraceBoundReport> {
    trace_bound_integrals_with(curve, alpha, kappa, grid, &TraceOptions::default())
}

pub fn trace_bound_integrals_with(
    curve: &Curve,
    alpha: f64,
    kappa: f64,
    grid: &Grid1D,
    opts: &TraceOptions,
) -> Result<TraceBoundReport> {
    let fr = asymptotic_frame(curve, curve.half_length())?;
    let kernel = neumann_tail(alpha, kappa, fr.rho)?;
    let parallel = (fr.v_plus[0] * fr.v_minus[1] - fr.v_plus[1] * fr.v_minus[0]).abs() < 1e-12;
    if curve.is_straight() {
        let z = BoundEntry::new(0.0, 0.0);
        return Ok(TraceBoundReport {
            alpha,
            kappa,
            rho: fr.rho,
            half_length: grid.half_length,
            c11: z.clone(),
            c12: z.clone(),
            c13: z.clone(),
            c14: z.clone(),
            c15: z,
            c11_branches: (0.0, 0.0),
            parallel_asymptotes: true,
            c12_cross_moment: kernel.first_moment,
            g_integrals: [0.0; 4],
            g1: G1Check {
                delta: opts.delta,
                direct: 0.0,
                hs_value: 0.0,
                weight_integral: 0.0,
                cauchy_schwarz: 0.0,
                consistent: true,
            },
            nuclear: None,
            kernel_l1: kernel.l1_sum,
        });
    }
    ensure(grid.panels % 2 == 0, || "the s-grid needs an even panel count so that s = 0 is a breakpoint".into())?;
    let frame = Frame { origin: fr.a_plus, v: fr.v_plus };
    let tr = Transverse::new(kappa, alpha);
    let (one, _) = pieces(curve, &frame, &tr, &kernel, grid, opts.delta)?;
    let big = Grid1D::new(2.0 * grid.half_length, 2 * grid.panels, grid.order)?;
    let (two, _) = pieces(curve, &frame, &tr, &kernel, &big, opts.delta)?;
    let nuclear = if opts.nuclear_nodes > 0 {
        Some(nuclear_check(curve, &frame, &tr, grid.half_length, opts.nuclear_nodes)?)
    } else {
        None
    };
    Ok(TraceBoundReport {
        alpha,
        kappa,
        rho: fr.rho,
        half_length: grid.half_length,
        c11: BoundEntry::new(one.c11, two.c11),
        c12: BoundEntry::new(one.c12, two.c12),
        c13: BoundEntry::new(one.c13, two.c13),
        c14: BoundEntry::new(one.c14, two.c14),
        c15: BoundEntry::new(one.c15, two.c15),
        c11_branches: (one.c11_pos, one.c11_neg),
        parallel_asymptotes: parallel,
        c12_cross_moment: kernel.first_moment,
        g_integrals: one.g,
        g1: one.g1,
        nuclear,
        kernel_l1: kernel.l1_sum,
    })
}

// ---------------------------------------------------------------------------
// free decay

/// Smooth momentum bump exp(-1/(1 - y²)) on (ε₁, a), y the affine image in (-1, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumBump {
    pub eps1: f64,
    pub a: f64,
}

impl MomentumBump {
    pub fn new(eps1: f64, a: f64, alpha: f64) -> Result<Self> {
        ensure(0.0 < eps1 && eps1 < a && a <= 0.5 * alpha + 1e-15, || {
            format!("need 0 < ε₁ < a ≤ α/2, got ε₁ = {eps1}, a = {a}, α = {alpha}")
        })?;
        Ok(Self { eps1, a })
    }

    /// φ̂, φ̂' and φ̂''.
    pub fn eval(&self, p: f64) -> (f64, f64, f64) {
        let half = 0.5 * (self.a - self.eps1);
        let y = (p - 0.5 * (self.a + self.eps1)) / half;
        if y.abs() >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let q = 1.0 - y * y;
        let f = (-1.0 / q).exp();
        // d/dy: f·(-2y/q²);  d²/dy²: f·((2y/q²)² - 2/q² - 8y²/q³)
        let g1 = -2.0 * y / (q * q);
        let g2 = g1 * g1 - 2.0 / (q * q) - 8.0 * y * y / (q * q * q);
        (f, f * g1 / half, f * g2 / (half * half))
    }

    fn l1_norms(&self) -> [f64; 3] {
        let r = GaussLegendre::new(64);
        let mut n = [0.0; 3];
        for (p, w) in r.on(self.eps1, self.a) {
            let (f, d1, d2) = self.eval(p);
            n[0] += w * f.abs();
            n[1] += w * d1.abs();
            n[2] += w * d2.abs();
        }
        n
    }

    pub fn l2_norm(&self) -> f64 {
        GaussLegendre::new(64).integrate(self.eps1, self.a, |p| self.eval(p).0.powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayRow {
    pub t: f64,
    pub norm: f64,
    pub scaled: f64,
    /// ‖φ(t,·)‖_{L²(ℝ)} from the FFT evolution.
    pub total_norm: f64,
    pub resolved: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayTable {
    pub bump: MomentumBump,
    pub rows: Vec<DecayRow>,
    /// c = (2π)^{-1/2}(‖φ̂''‖₁ + 3‖φ̂'‖₁/ε₁ + 3‖φ̂‖₁/ε₁²).
    pub constant: f64,
    /// (c/(2√6))ε₁^{-3/2}.
    pub bound: f64,
    /// Smallest c for which the bound holds on the table.
    pub fitted_constant: f64,
    pub initial_norm: f64,
}

impl DecayTable {
    pub fn to_csv(&self) -> String {
        let mut t = Table::new(&["t", "norm", "scaled"]);
        for r in &self.rows {
            t.push_numbers(&[r.t, r.norm, r.scaled]);
        }
        t.to_csv()
    }

    pub fn max_scaled(&self) -> f64 {
        self.rows.iter().map(|r| r.scaled).fold(0.0, f64::max)
    }
}

/// Maximum oscillations per Gauss–Legendre panel of the p-quadrature.
const MAX_PANELS: usize = 4000;

/// φ(t, x) for x < 0 from the twice integrated-by-parts representation.
fn left_value(bump: &MomentumBump, rule: &GaussLegendre, panels: usize, t: f64, x: f64) -> C {
    let h = (bump.a - bump.eps1) / panels as f64;
    let mut acc = C::new(0.0, 0.0);
    for k in 0..panels {
        let lo = bump.eps1 + k as f64 * h;
        for (p, w) in rule.on(lo, lo + h) {
            let (f, d1, d2) = bump.eval(p);
            let sp = x - 2.0 * p * t;
            let amp = d2 / (sp * sp) + 6.0 * d1 * t / sp.powi(3) + 12.0 * f * t * t / sp.powi(4);
            acc += C::from_polar(w * amp, p * x - p * p * t);
        }
    }
    -acc / (2.0 * PI).sqrt()
}

fn fft_total_norm(bump: &MomentumBump, t: f64) -> f64 {
    // box wide enough that the packet does not wrap around
    let len = 2.0 * (4.0 * bump.a * t + 400.0);
    let n = ((len / 0.5) as usize).next_power_of_two();
    let h = len / n as f64;
    let dp = 2.0 * PI / (n as f64 * h);
    let spec: Vec<C> = (0..n)
        .map(|j| {
            let p = if j < n / 2 { j as f64 * dp } else { (j as f64 - n as f64) * dp };
            C::from_polar(bump.eval(p).0, -p * p * t)
        })
        .collect();
    let x = dft(&spec, true);
    // samples of (2π)^{-1/2}∫ e^{ipx}φ̂ dp: scale by n dp/√(2π)
    let s = n as f64 * dp / (2.0 * PI).sqrt();
    (x.iter().map(|z| z.norm_sqr()).sum::<f64>() * h).sqrt() * s
}

/// ‖φ(t,·)‖_{L²(-∞,0)} for φ̂ = [`MomentumBump`] on (ε₁, a).
pub fn free_decay(bump: &MomentumBump, times: &[f64]) -> Result<DecayTable> {
    ensure(times.iter().all(|&t| t > 0.0 && t.is_finite()), || "times must be positive".into())?;
    let rule = GaussLegendre::new(16);
    let xr = GaussLegendre::new(16);
    let rows: Vec<DecayRow> = times
        .par_iter()
        .map(|&t| {
            // φ(t,x) decays faster than any power once |x| exceeds a few
            // hundred momentum-window widths
            let scale = 2.0 * bump.eps1 * t;
            let x_max = 500.0 / (bump.a - bump.eps1) + 10.0 * bump.a * t;
            let osc = (x_max + 2.0 * bump.a * t) * (bump.a - bump.eps1) / (2.0 * PI);
            let want = (osc / 2.0).ceil() as usize + 8;
            let resolved = want <= MAX_PANELS;
            let panels = want.min(MAX_PANELS);
            // x panels graded geometrically from the scale of the decay
            let mut br = vec![0.0];
            let mut xb = 0.05 * (1.0 + scale);
            while xb < x_max {
                br.push(xb);
                xb *= 1.3;
            }
            br.push(x_max);
            let mut sq = 0.0;
            for win in br.windows(2) {
                let sub = (((win[1] - win[0]) * bump.a / PI).ceil() as usize).max(1);
                let h = (win[1] - win[0]) / sub as f64;
                for k in 0..sub {
                    let lo = win[0] + k as f64 * h;
                    for (u, w) in xr.on(lo, lo + h) {
                        let v = left_value(bump, &rule, panels, t, -u);
                        sq += w * v.norm_sqr();
                    }
                }
            }
            let norm = sq.sqrt();
            DecayRow {
                t,
                norm,
                scaled: t.powf(1.5) * norm,
                total_norm: fft_total_norm(bump, t),
                resolved,
            }
        })
        .collect();
    let n = bump.l1_norms();
    let e = bump.eps1;
    let constant = (n[2] + 3.0 * n[1] / e + 3.0 * n[0] / (e * e)) / (2.0 * PI).sqrt();
    let k = 2.0 * 6f64.sqrt() * e.powf(1.5);
    let fitted = rows.iter().map(|r| r.scaled * k).fold(0.0, f64::max);
    Ok(DecayTable {
        bump: *bump,
        rows,
        constant,
        bound: constant / k,
        fitted_constant: fitted,
        initial_norm: bump.l2_norm(),
    })
}
