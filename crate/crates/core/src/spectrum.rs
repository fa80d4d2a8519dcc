//! Discrete spectrum below the threshold -α²/4.
//!
//! Eigenvalues are located with the Birman–Schwinger principle: if
//! 1 ∉ σ(αR_mm(iκ)) then -κ² ∉ σ(H). Only this direction is needed to exclude
//! energies, and roots of the Birman–Schwinger condition are reported as
//! eigenvalues.
//!
//! Near the threshold the truncated operator αR_mm(iκ) has a continuum of
//! eigenvalues accumulating at α/(2κ), so the root search works with the
//! factorization I - αR_mm = (I - αR_0)(I - α𝕋𝔻), where 𝕋 is the exact line
//! inverse. With 𝕋 = LLᵀ positive definite at imaginary k, the eigenvalues
//! ν_j of the symmetric matrix αLᵀ𝔻L decide the condition: ν_j = 1 exactly
//! when 1 ∈ σ(αR_mm).

use crate::curve_geometry::{asymptotic_frame, build_curve, build_curve_with, BendingProfile, Curve};
use crate::error::{ensure, Error, Result};
use crate::kernel_ops::{apply_rdxm, assemble_difference, assemble_rmm, line_inverse, Grid1D, SpectralParameter};
use crate::linalg::{lanczos_top, max_symmetric_eigenvalue};
use crate::quadrature::GaussLegendre;
use crate::rootfind::brent;
use crate::special_functions::k1_real;
use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Largest eigenvalue of the symmetrized α·R_mm(iκ) on the grid.
pub fn bs_max_eigenvalue(curve: &Curve, alpha: f64, kappa: f64, grid: &Grid1D) -> Result<f64> {
    ensure(kappa > 0.0, || format!("decay rate must be positive, got {kappa}"))?;
    let k = SpectralParameter::imaginary(kappa)?;
    let m = assemble_rmm(curve, &k, grid)?.real_part() * alpha;
    Ok(max_symmetric_eigenvalue(&m))
}

/// Grid description stored with results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_length: f64,
    pub panels: usize,
    pub order: usize,
}

impl GridSpec {
    pub fn of(grid: &Grid1D) -> Self {
        Self {
            half_length: grid.half_length,
            panels: grid.panels,
            order: grid.order,
        }
    }

    pub fn build(&self) -> Result<Grid1D> {
        Grid1D::new(self.half_length, self.panels, self.order)
    }

    pub fn nodes(&self) -> usize {
        self.panels * self.order
    }

    /// Same interval with twice the nodes.
    pub fn doubled(&self) -> Self {
        Self {
            panels: 2 * self.panels,
            ..*self
        }
    }
}

/// Default truncation for a curve: e^{-κρL} = 1e-10 at the threshold κ = α/2.
pub fn default_grid(curve: &Curve, alpha: f64, nodes: usize) -> Result<GridSpec> {
    ensure(alpha > 0.0, || format!("coupling must be positive, got {alpha}"))?;
    let rho = asymptotic_frame(curve, curve.half_length())?.rho;
    let half_length = (1e10f64).ln() / (0.5 * alpha * rho);
    let order = 8;
    Ok(GridSpec {
        half_length,
        panels: nodes.div_ceil(order).max(1),
        order,
    })
}

/// The symmetric matrix αLᵀ𝔻L at k = iκ together with the Cholesky factor.
pub struct FactorizedBs {
    pub kappa: f64,
    pub s: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub sqrt_weights: Vec<f64>,
}

impl FactorizedBs {
    pub fn new(curve: &Curve, alpha: f64, kappa: f64, grid: &Grid1D) -> Result<Self> {
        ensure(kappa > 0.5 * alpha, || format!("κ = {kappa} is not below the threshold α/2"))?;
        let k = SpectralParameter::imaginary(kappa)?;
        let t = line_inverse(&k, alpha, grid).real_part();
        let d = assemble_difference(curve, &k, grid)?.real_part();
        let l = Cholesky::new(t)
            .ok_or_else(|| Error::NonConvergence(format!("line inverse is not positive definite at κ = {kappa}")))?
            .l();
        let s = (l.transpose() * (&d * &l)) * alpha;
        let s = (&s + s.transpose()) * 0.5;
        Ok(Self {
            kappa,
            s,
            l,
            sqrt_weights: grid.sqrt_weights(),
        })
    }

    /// Largest `wanted` eigenpairs of αLᵀ𝔻L.
    pub fn top(&self, wanted: usize) -> crate::linalg::TopEigen {
        let n = self.s.nrows();
        lanczos_top(|x| &self.s * x, n, wanted, 400, 1e-13)
    }

    /// Birman–Schwinger eigenvector f on the grid nodes from a top eigenvector y:
    /// √w f = L y, normalized to Σ w f² = 1 and positive at its largest entry.
    pub fn density(&self, y: &DVector<f64>) -> Vec<f64> {
        let g = &self.l * y;
        let norm = g.norm();
        let imax = g.iamax();
        let sign = if g[imax] < 0.0 { -1.0 } else { 1.0 };
        g.iter()
            .zip(&self.sqrt_weights)
            .map(|(v, sw)| sign * v / (norm * sw))
            .collect()
    }
}

/// Root-search controls.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Smallest q = √(κ² - α²/4) probed, relative to α.
    pub q_min: f64,
    /// Tolerance on κ.
    pub kappa_tol: f64,
    /// Width of the marginal band above 1 at the threshold.
    pub marginal: f64,
    /// Number of Birman–Schwinger eigenvalues tracked.
    pub tracked: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            q_min: 1e-6,
            kappa_tol: 1e-10,
            marginal: 1e-6,
            tracked: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumStatus {
    Found,
    NoEigenvalue,
    ThresholdMarginal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundState {
    pub energy: f64,
    pub kappa: f64,
    /// |ν_j(κ) - 1| at the returned κ.
    pub residual: f64,
    /// Lanczos residual of the eigenpair.
    pub eigen_residual: f64,
    /// Distance to the next Birman–Schwinger eigenvalue at κ.
    pub gap: f64,
    /// f on the grid nodes, Σ w f² = 1.
    pub eigenvector: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralResult {
    pub alpha: f64,
    pub status: SpectrumStatus,
    pub states: Vec<BoundState>,
    pub grid: GridSpec,
    /// Largest ν at the smallest probed q.
    pub nu_near_threshold: f64,
    pub q_min: f64,
}

impl SpectralResult {
    pub fn energies(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.energy).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spectral result serializes")
    }
}

fn kappa_of(alpha: f64, q: f64) -> f64 {
    (0.25 * alpha * alpha + q * q).sqrt()
}

/// ν_j(κ) for j < wanted.
pub fn factorized_eigenvalues(curve: &Curve, alpha: f64, kappa: f64, grid: &Grid1D, wanted: usize) -> Result<Vec<f64>> {
    let f = FactorizedBs::new(curve, alpha, kappa, grid)?;
    let mut v = f.top(wanted).values;
    v.resize(wanted, 0.0);
    Ok(v)
}

/// Bound states of the leaky wire on the default grid.
pub fn find_discrete_eigenvalues(curve: &Curve, alpha: f64) -> Result<SpectralResult> {
    let grid = default_grid(curve, alpha, 800)?;
    find_discrete_eigenvalues_with(curve, alpha, &grid, &SearchOptions::default())
}

/// Bound states on a given grid: every root of ν_j(κ) = 1 with κ in
/// (α/2, κ_hi], κ_hi = 3α/2 extended while ν_0(κ_hi) > 1.
pub fn find_discrete_eigenvalues_with(curve: &Curve, alpha: f64, spec: &GridSpec, opts: &SearchOptions) -> Result<SpectralResult> {
    ensure(alpha > 0.0, || format!("coupling must be positive, got {alpha}"))?;
    let grid = spec.build()?;
    let q_min = opts.q_min * alpha;
    let tracked = opts.tracked.max(1);
    let at_min = factorized_eigenvalues(curve, alpha, kappa_of(alpha, q_min), &grid, tracked)?;
    let count = at_min.iter().filter(|&&v| v > 1.0 + opts.marginal).count();
    let mut result = SpectralResult {
        alpha,
        status: SpectrumStatus::NoEigenvalue,
        states: vec![],
        grid: *spec,
        nu_near_threshold: at_min[0],
        q_min,
    };
    if count == 0 {
        if at_min[0] >= 1.0 {
            result.status = SpectrumStatus::ThresholdMarginal;
        }
        return Ok(result);
    }
    let mut q_hi = 2f64.sqrt() * alpha;
    for _ in 0..12 {
        let top = factorized_eigenvalues(curve, alpha, kappa_of(alpha, q_hi), &grid, 1)?;
        if top[0] < 1.0 {
            break;
        }
        q_hi *= 2.0;
    }
    let brackets: Vec<(usize, f64, f64)> = (0..count).map(|j| (j, q_min, q_hi)).collect();
    result.states = solve_brackets(curve, alpha, &grid, opts, &brackets)?;
    result.status = SpectrumStatus::Found;
    Ok(result)
}

fn solve_brackets(curve: &Curve, alpha: f64, grid: &Grid1D, opts: &SearchOptions, brackets: &[(usize, f64, f64)]) -> Result<Vec<BoundState>> {
    let tracked = opts.tracked.max(1);
    brackets
        .par_iter()
        .map(|&(j, lo, hi)| {
            let want = (j + 2).max(tracked);
            let mut failure = None;
            // dκ = (q/κ) dq ≤ q du with u = ln q
            let xtol = opts.kappa_tol / hi;
            let u = brent(
                |u| match factorized_eigenvalues(curve, alpha, kappa_of(alpha, u.exp()), grid, want) {
                    Ok(v) => v[j] - 1.0,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                },
                lo.ln(),
                hi.ln(),
                xtol,
                200,
            );
            if let Some(e) = failure {
                return Err(e);
            }
            let kappa = kappa_of(alpha, u?.exp());
            let f = FactorizedBs::new(curve, alpha, kappa, grid)?;
            let top = f.top(want);
            Ok(BoundState {
                energy: -kappa * kappa,
                kappa,
                residual: (top.values[j] - 1.0).abs(),
                eigen_residual: top.residuals[j],
                gap: top.values[j] - top.values.get(j + 1).copied().unwrap_or(0.0),
                eigenvector: f.density(&top.vectors[j]),
            })
        })
        .collect()
}

/// Re-solves a result on another grid, bracketing each root by ±`rel` in q
/// around the previous value (widened until the sign changes).
pub fn refine_on_grid(curve: &Curve, previous: &SpectralResult, spec: &GridSpec, opts: &SearchOptions, rel: f64) -> Result<SpectralResult> {
    let alpha = previous.alpha;
    let grid = spec.build()?;
    let tracked = opts.tracked.max(1);
    let mut brackets = Vec::with_capacity(previous.states.len());
    for (j, st) in previous.states.iter().enumerate() {
        let q = (st.kappa * st.kappa - 0.25 * alpha * alpha).sqrt();
        let mut width = rel;
        let nu = |q: f64| -> Result<f64> { Ok(factorized_eigenvalues(curve, alpha, kappa_of(alpha, q), &grid, (j + 2).max(tracked))?[j] - 1.0) };
        loop {
            let lo = (q * (1.0 - width)).max(previous.q_min);
            let hi = q * (1.0 + width);
            if nu(lo)? > 0.0 && nu(hi)? < 0.0 {
                brackets.push((j, lo, hi));
                break;
            }
            width *= 4.0;
            if width > 0.9 {
                return Err(Error::NotFound(format!("root {j} moved beyond the refinement bracket")));
            }
        }
    }
    let states = solve_brackets(curve, alpha, &grid, opts, &brackets)?;
    Ok(SpectralResult {
        states,
        grid: *spec,
        ..previous.clone()
    })
}

/// ψ(x) = ∫K_0(κ|x - Γ(s)|) f(s) ds for bound state `index`, scaled so that
/// max |ψ| = 1 over `points`.
pub fn eigenfunction(curve: &Curve, result: &SpectralResult, index: usize, points: &[[f64; 2]]) -> Result<Vec<Complex64>> {
    let st = result
        .states
        .get(index)
        .ok_or_else(|| Error::InvalidParameter(format!("no bound state with index {index}")))?;
    ensure(st.residual < 1e-8, || format!("bound state residual {} too large", st.residual))?;
    let grid = result.grid.build()?;
    let k = SpectralParameter::imaginary(st.kappa)?;
    let g: Vec<Complex64> = st.eigenvector.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let psi = apply_rdxm(curve, &k, &grid, &g, points);
    let peak = psi.iter().map(|z| z.norm()).fold(0.0, f64::max);
    ensure(peak > 0.0, || "eigenfunction vanishes on the sample set".into())?;
    Ok(psi.into_iter().map(|z| z / peak).collect())
}

/// Weak-bending data of a profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BendingExpansion {
    pub alpha: f64,
    /// I = ∬𝒜(s,t) ds dt on the finest truncation.
    pub integral: f64,
    /// -I².
    pub predicted_coefficient: f64,
    /// (half-length, I) for each truncation.
    pub ladder: Vec<(f64, f64)>,
    pub divergent: bool,
    /// Samples (s, t, 𝒜(s,t)) on a coarse grid.
    pub samples: Vec<(f64, f64, f64)>,
    pub fitted_coefficient: Option<f64>,
    pub betas: Vec<f64>,
}

impl BendingExpansion {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bending expansion serializes")
    }
}

/// Integrals along the profile for the 𝒜 kernel.
struct AngleTable {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    phi: Vec<f64>,
    cum1: Vec<f64>,
    cum2: Vec<f64>,
}

impl AngleTable {
    fn new(curve: &Curve, half_length: f64, panel: f64, order: usize) -> Self {
        let panels = (2.0 * half_length / panel).ceil() as usize;
        let h = 2.0 * half_length / panels as f64;
        let rule = GaussLegendre::new(order);
        let fine = GaussLegendre::new(10);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for p in 0..panels {
            let a = -half_length + p as f64 * h;
            for (x, w) in rule.on(a, a + h) {
                nodes.push(x);
                weights.push(w);
            }
        }
        let phi: Vec<f64> = nodes.iter().map(|&s| curve.profile_angle(s)).collect();
        let mut cum1 = Vec::with_capacity(nodes.len());
        let mut cum2 = Vec::with_capacity(nodes.len());
        let (mut c1, mut c2, mut prev) = (0.0, 0.0, -half_length);
        for &s in &nodes {
            for (u, w) in fine.on(prev, s) {
                let f = curve.profile_angle(u);
                c1 += w * f;
                c2 += w * f * f;
            }
            cum1.push(c1);
            cum2.push(c2);
            prev = s;
        }
        Self {
            nodes,
            weights,
            phi,
            cum1,
            cum2,
        }
    }
}

/// 𝒜(s,t) from the cumulative profile integrals, with direct quadrature
/// for close pairs.
fn bending_kernel(curve: &Curve, tab: &AngleTable, alpha: f64, i: usize, j: usize, local: &GaussLegendre) -> f64 {
    let (s, t) = (tab.nodes[i], tab.nodes[j]);
    let d = s - t;
    if d == 0.0 {
        return 0.0;
    }
    let pt = tab.phi[j];
    let (f1, f2) = if d.abs() < 0.5 {
        let mut f1 = 0.0;
        let mut f2 = 0.0;
        for (u, w) in local.on(t, s) {
            let v = curve.profile_angle(u) - pt;
            f1 += w * v;
            f2 += w * v * v;
        }
        (f1, f2)
    } else {
        let a1 = tab.cum1[i] - tab.cum1[j];
        let a2 = tab.cum2[i] - tab.cum2[j];
        (a1 - pt * d, a2 - 2.0 * pt * a1 + pt * pt * d)
    };
    let bracket = f1 * f1 / d.abs() - f2.abs();
    -(alpha.powi(4) / (32.0 * PI)) * k1_real(0.5 * alpha * d.abs()) * bracket
}

/// ∬𝒜 over [-L, L]² on panels of the given width with `order` nodes each.
pub fn bending_integral(curve: &Curve, alpha: f64, half_length: f64, panel: f64, order: usize) -> f64 {
    let tab = AngleTable::new(curve, half_length, panel, order);
    let local = GaussLegendre::new(12);
    let n = tab.nodes.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..n {
                acc += tab.weights[j] * bending_kernel(curve, &tab, alpha, i, j, &local);
            }
            acc * tab.weights[i]
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

/// I = ∬𝒜(s,t) ds dt for the unit profile (β = 1) and the predicted
/// coefficient -I² of β⁴ in λ(H^(β)) + α²/4.
pub fn bending_coefficient(profile: &BendingProfile, alpha: f64) -> Result<BendingExpansion> {
    ensure(alpha > 0.0, || format!("coupling must be positive, got {alpha}"))?;
    let unit = profile.clone().with_beta(1.0);
    let scale = unit.length_scale();
    let base = 20.0 / alpha + 6.0 * scale;
    let curve = build_curve_with(unit, 2.0 * base + 1.0)?;
    let panel = (0.5 * scale).min(1.0 / alpha);
    let ladder: Vec<(f64, f64)> = [base, 2.0 * base]
        .iter()
        .map(|&l| (l, bending_integral(&curve, alpha, l, panel, 12)))
        .collect();
    let (i1, i2) = (ladder[0].1, ladder[1].1);
    let divergent = !i2.is_finite() || (i2 - i1).abs() > 1e-3 * i2.abs().max(1e-300) && (i2 - i1).abs() > 1e-12;
    let tab = AngleTable::new(&curve, 4.0 * scale, 0.5 * scale, 4);
    let local = GaussLegendre::new(12);
    let mut samples = Vec::new();
    for i in (0..tab.nodes.len()).step_by(2) {
        for j in (0..tab.nodes.len()).step_by(2) {
            samples.push((tab.nodes[i], tab.nodes[j], bending_kernel(&curve, &tab, alpha, i, j, &local)));
        }
    }
    Ok(BendingExpansion {
        alpha,
        integral: i2,
        predicted_coefficient: -i2 * i2,
        ladder,
        divergent,
        samples,
        fitted_coefficient: None,
        betas: vec![],
    })
}

/// One row of the weak-bending table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Beta4Row {
    pub beta: f64,
    pub energy: Option<f64>,
    /// (E(β) + α²/4)/β⁴.
    pub ratio: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Beta4Report {
    pub alpha: f64,
    pub rows: Vec<Beta4Row>,
    pub expansion: BendingExpansion,
    /// (max - min)/|mean| of the surviving ratios.
    pub spread: Option<f64>,
    /// Ratio at the smallest surviving β relative to -I².
    pub relative_to_prediction: Option<f64>,
}

impl Beta4Report {
    /// `beta,energy,ratio` with empty fields for failed rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("beta,energy,ratio\n");
        let fmt = |v: Option<f64>| v.map(crate::format_float).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", crate::format_float(r.beta), fmt(r.energy), fmt(r.ratio)));
        }
        out
    }
}

/// Solves for the bound state of Γ^(β) at each β and compares the ratio
/// (E + α²/4)/β⁴ with -I².
pub fn beta4_fit(profile: &BendingProfile, alpha: f64, betas: &[f64], nodes: usize) -> Result<Beta4Report> {
    let expansion = bending_coefficient(profile, alpha)?;
    let rows: Vec<Beta4Row> = betas
        .par_iter()
        .map(|&beta| {
            let solve = || -> Result<f64> {
                ensure(beta > 0.0, || "β = 0 is the straight line".into())?;
                let curve = build_curve(profile.clone().with_beta(beta))?;
                let spec = default_grid(&curve, alpha, nodes)?;
                let opts = SearchOptions {
                    q_min: 1e-3 * beta * beta,
                    ..SearchOptions::default()
                };
                let res = find_discrete_eigenvalues_with(&curve, alpha, &spec, &opts)?;
                res.states
                    .first()
                    .map(|s| s.energy)
                    .ok_or_else(|| Error::NotFound(format!("no bound state at β = {beta}")))
            };
            match solve() {
                Ok(e) => Beta4Row {
                    beta,
                    energy: Some(e),
                    ratio: Some((e + 0.25 * alpha * alpha) / beta.powi(4)),
                    error: None,
                },
                Err(e) => Beta4Row {
                    beta,
                    energy: None,
                    ratio: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let spread = (!ratios.is_empty()).then(|| {
        let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        (max - min) / mean.abs()
    });
    let smallest = rows
        .iter()
        .filter(|r| r.ratio.is_some())
        .min_by(|a, b| a.beta.partial_cmp(&b.beta).unwrap());
    let relative_to_prediction = smallest.and_then(|r| r.ratio).map(|r| r / expansion.predicted_coefficient);
    let mut expansion = expansion;
    expansion.betas = betas.to_vec();
    expansion.fitted_coefficient = smallest.and_then(|r| r.ratio);
    Ok(Beta4Report {
        alpha,
        rows,
        expansion,
        spread,
        relative_to_prediction,
    })
}
