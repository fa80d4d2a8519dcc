//! Limiting-absorption probes on (-α²/4, 0).
//!
//! The free line multiplier A(k,p), ε-ladders of Im(φ, (H - λ - iε)^{-1} φ)
//! and condition-number scans of I - αR_mm for candidates of the
//! exceptional set. Candidates are reported as such, never as eigenvalues.

use crate::curve_geometry::{asymptotic_frame, Curve};
use crate::error::{ensure, Result};
use crate::kernel_ops::{factorize, resolvent_matrix_element_with, Grid1D, SpectralParameter, TestFunction, Window};
use crate::linalg::{complex_matmul, cond1_estimate};
use crate::spectrum::GridSpec;
use crate::table::{format_float, Table};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

type C = Complex64;

/// A(k,p) in both forms.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Multiplier {
    pub value: C,
    /// Pole part, constant 1 and the bounded remainder α/(2√(p²-k²) + α).
    pub pole: C,
    pub remainder: C,
    pub p0: C,
    /// |direct - decomposed| / max(1, |direct|).
    pub agreement: f64,
    pub near_pole: bool,
}

/// A(k,p) = 2√(p²-k²)/(2√(p²-k²) - α), Re √ > 0, and its decomposition
/// α²/(4p₀)(1/(p-p₀) - 1/(p+p₀)) + 1 + α/(2√(p²-k²) + α), p₀ = √(k² + α²/4).
pub fn multiplier_a(k: &SpectralParameter, p: f64, alpha: f64) -> Multiplier {
    let z = k.z();
    let mut s = (C::new(p * p, 0.0) - z).sqrt();
    if s.re < 0.0 {
        s = -s;
    }
    let value = 2.0 * s / (2.0 * s - alpha);
    let mut p0 = (z + 0.25 * alpha * alpha).sqrt();
    if p0.re < 0.0 {
        p0 = -p0;
    }
    let pr = C::new(p, 0.0);
    let near_pole = (pr - p0).norm() < 1e-8 || (pr + p0).norm() < 1e-8;
    let (pole, remainder) = if alpha == 0.0 {
        (C::new(0.0, 0.0), C::new(0.0, 0.0))
    } else {
        (
            alpha * alpha / (4.0 * p0) * (1.0 / (pr - p0) - 1.0 / (pr + p0)),
            alpha / (2.0 * s + alpha),
        )
    };
    let decomposed = pole + 1.0 + remainder;
    Multiplier {
        value,
        pole,
        remainder,
        p0,
        agreement: (value - decomposed).norm() / value.norm().max(1.0),
        near_pole,
    }
}

/// Default ε ladder.
pub const EPS_LADDER: [f64; 7] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4];

/// `n` cell centres splitting [λ1, λ2].
pub fn lambda_cells(window: &Window, n: usize) -> Vec<f64> {
    let h = (window.lambda2 - window.lambda1) / n as f64;
    (0..n).map(|i| window.lambda1 + (i as f64 + 0.5) * h).collect()
}

/// Grid long enough for e^{-k20 ρ L} = 1e-6 with panels of width ≤ 1.6.
pub fn default_lap_grid(curve: &Curve, window: &Window) -> Result<GridSpec> {
    let rho = asymptotic_frame(curve, curve.half_length())?.rho;
    let half_length = (1e6f64).ln() / (window.k20() * rho);
    Ok(GridSpec {
        half_length,
        panels: (2.0 * half_length / 1.6).ceil() as usize,
        order: 8,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellFlag {
    Ok,
    /// Condition number above the cap.
    IllConditioned,
    /// Close to -α²/4 or 0, inconclusive.
    Edge,
    /// R_mdx quadrature did not reach its tolerance.
    Quadrature,
    /// Im part below -1e-10 |value|.
    NegativeImaginary,
}

impl CellFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellFlag::Ok => "ok",
            CellFlag::IllConditioned => "ill_conditioned",
            CellFlag::Edge => "edge",
            CellFlag::Quadrature => "quadrature",
            CellFlag::NegativeImaginary => "negative_imaginary",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LapCell {
    pub lambda: f64,
    pub eps: f64,
    pub k: C,
    pub value: C,
    pub cond: f64,
    pub flag: CellFlag,
    pub window_bounds_hold: bool,
}

/// ε-ladder summary at one λ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LadderSummary {
    pub lambda: f64,
    /// Every rung shrinks |v(ε_j+1) - v(ε_j)| by ≤ 0.5 or sits at the noise floor.
    pub cauchy: bool,
    /// Relative change of the Im part between the two smallest ε.
    pub last_change: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LapScan {
    pub alpha: f64,
    pub window: Window,
    pub lambdas: Vec<f64>,
    pub eps: Vec<f64>,
    pub grid: GridSpec,
    /// Cells ordered by λ, then by decreasing ε.
    pub cells: Vec<LapCell>,
    pub cond_cap: f64,
}

/// Scan settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LapOptions {
    pub eps: Vec<f64>,
    pub cond_cap: f64,
    /// Cells with λ + α²/4 or -λ below `edge * α²` are inconclusive.
    pub edge: f64,
}

impl Default for LapOptions {
    fn default() -> Self {
        Self {
            eps: EPS_LADDER.to_vec(),
            cond_cap: 1e8,
            edge: 0.01,
        }
    }
}

/// Im(φ, (H - λ - iε)^{-1} φ) over λ × ε.
pub fn lap_scan(
    curve: &Curve,
    alpha: f64,
    phi: &TestFunction,
    window: &Window,
    lambdas: &[f64],
    spec: &GridSpec,
    opts: &LapOptions,
) -> Result<LapScan> {
    ensure(window.lambda1 > -0.25 * alpha * alpha, || {
        format!("window starts below the threshold -α²/4 = {}", -0.25 * alpha * alpha)
    })?;
    ensure(lambdas.iter().all(|l| *l >= window.lambda1 && *l <= window.lambda2), || {
        "λ grid leaves the window".into()
    })?;
    ensure(opts.eps.iter().all(|&e| e > 0.0 && e <= window.eps0), || {
        format!("ε ladder must lie in (0, {}]", window.eps0)
    })?;
    ensure(opts.eps.windows(2).all(|w| w[1] < w[0]), || "ε ladder must decrease".into())?;
    let grid = spec.build()?;
    let bump = phi.spectrum();
    let jobs: Vec<(f64, f64)> = lambdas
        .iter()
        .flat_map(|&l| opts.eps.iter().map(move |&e| (l, e)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(lambda, eps)| {
            let k = SpectralParameter::in_window(C::new(lambda, eps), *window)?;
            let el = resolvent_matrix_element_with(curve, alpha, &k, phi, &bump, &grid, opts.cond_cap)?;
            let edge = (lambda + 0.25 * alpha * alpha < opts.edge * alpha * alpha) || (-lambda < opts.edge * alpha * alpha);
            let flag = if el.flagged {
                CellFlag::IllConditioned
            } else if edge {
                CellFlag::Edge
            } else if !el.quadrature_converged {
                CellFlag::Quadrature
            } else if el.value.im < -1e-10 * el.value.norm() {
                CellFlag::NegativeImaginary
            } else {
                CellFlag::Ok
            };
            Ok(LapCell {
                lambda,
                eps,
                k: k.k,
                value: el.value,
                cond: el.cond,
                flag,
                window_bounds_hold: k.window_bounds_hold().unwrap_or(false),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LapScan {
        alpha,
        window: *window,
        lambdas: lambdas.to_vec(),
        eps: opts.eps.clone(),
        grid: *spec,
        cells,
        cond_cap: opts.cond_cap,
    })
}

impl LapScan {
    /// Cells at one λ in ladder order.
    pub fn ladder(&self, index: usize) -> &[LapCell] {
        let m = self.eps.len();
        &self.cells[index * m..(index + 1) * m]
    }

    pub fn summaries(&self) -> Vec<LadderSummary> {
        (0..self.lambdas.len())
            .map(|i| {
                let lad = self.ladder(i);
                let v: Vec<C> = lad.iter().map(|c| c.value).collect();
                let d: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
                let floor = 1e-8 * v.last().map(|z| z.norm()).unwrap_or(0.0);
                let cauchy = d.windows(2).all(|w| w[1] <= 0.5 * w[0] || w[1] <= floor);
                let n = v.len();
                let last_change = if n >= 2 { (v[n - 1].im - v[n - 2].im).abs() / v[n - 1].im.abs() } else { 0.0 };
                LadderSummary {
                    lambda: self.lambdas[i],
                    cauchy,
                    last_change,
                    flagged: lad.iter().any(|c| c.flag != CellFlag::Ok),
                }
            })
            .collect()
    }

    /// Relative change of the Im part between two ε values at every λ.
    pub fn change_between(&self, eps_a: f64, eps_b: f64) -> Vec<(f64, f64)> {
        let ia = self.eps.iter().position(|&e| e == eps_a);
        let ib = self.eps.iter().position(|&e| e == eps_b);
        match (ia, ib) {
            (Some(ia), Some(ib)) => (0..self.lambdas.len())
                .map(|i| {
                    let lad = self.ladder(i);
                    let (a, b) = (lad[ia].value.im, lad[ib].value.im);
                    (self.lambdas[i], (a - b).abs() / b.abs())
                })
                .collect(),
            _ => vec![],
        }
    }

    /// `lambda,eps,im_matrix_element,cond,flag`.
    pub fn to_csv(&self) -> String {
        let mut t = Table::new(&["lambda", "eps", "im_matrix_element", "cond", "flag"]);
        for c in &self.cells {
            t.push(vec![
                format_float(c.lambda),
                format_float(c.eps),
                format_float(c.value.im),
                format_float(c.cond),
                c.flag.as_str().to_string(),
            ]);
        }
        t.to_csv()
    }

    /// Condition numbers at one ε, if it was scanned.
    pub fn conditions_at(&self, eps: f64) -> Option<Vec<f64>> {
        let j = self.eps.iter().position(|&e| e == eps)?;
        Some((0..self.lambdas.len()).map(|i| self.ladder(i)[j].cond).collect())
    }
}

/// Estimated 1-norm condition number of I - αR_mm(k) in factorized form,
/// I - α D T with D = R_mm - R_0 and T = (I - αR_0)^{-1}.
pub fn bs_condition(curve: &Curve, alpha: f64, k: &SpectralParameter, grid: &Grid1D) -> Result<f64> {
    if curve.is_straight() {
        return Ok(1.0);
    }
    let fac = factorize(curve, alpha, k, grid)?;
    let n = grid.len();
    let a = DMatrix::<C>::identity(n, n) - complex_matmul(&fac.d.nystrom, &fac.t.nystrom) * C::new(alpha, 0.0);
    Ok(cond1_estimate(&a).1)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingularSet {
    pub candidates: Vec<f64>,
    pub eps: f64,
    pub threshold: f64,
    pub median: f64,
    pub lambdas: Vec<f64>,
    pub conditions: Vec<f64>,
    /// Candidates at 10× and 30× the median.
    pub sensitivity: Vec<(f64, Vec<f64>)>,
}

impl SingularSet {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("singular set serializes")
    }
}

/// Local maxima of runs of cells whose condition number exceeds
/// `factor` times the median; runs are separated by at least one cell.
pub fn spikes(lambdas: &[f64], conds: &[f64], factor: f64) -> (f64, Vec<f64>) {
    let mut sorted = conds.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.is_empty() {
        0.0
    } else if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let mut out = Vec::new();
    let mut i = 0;
    while i < conds.len() {
        if conds[i] > factor * median {
            let mut best = i;
            let mut j = i;
            while j < conds.len() && conds[j] > factor * median {
                if conds[j] > conds[best] {
                    best = j;
                }
                j += 1;
            }
            out.push(lambdas[best]);
            i = j;
        } else {
            i += 1;
        }
    }
    (median, out)
}

/// Singular-set candidates from condition numbers already computed at `eps`.
pub fn singular_set_from_conditions(lambdas: &[f64], conds: &[f64], eps: f64, threshold: f64) -> SingularSet {
    let (median, candidates) = spikes(lambdas, conds, threshold);
    let sensitivity = [10.0, 30.0]
        .iter()
        .map(|&f| (f, spikes(lambdas, conds, f).1))
        .collect();
    SingularSet {
        candidates,
        eps,
        threshold,
        median,
        lambdas: lambdas.to_vec(),
        conditions: conds.to_vec(),
        sensitivity,
    }
}

/// Cells of the λ grid where cond(I - αR_mm(√(λ + iε))) exceeds
/// `threshold` times the window median.
pub fn detect_singular_set(
    curve: &Curve,
    alpha: f64,
    window: &Window,
    lambdas: &[f64],
    spec: &GridSpec,
    eps: f64,
    threshold: f64,
) -> Result<SingularSet> {
    let grid = spec.build()?;
    let conds = lambdas
        .par_iter()
        .map(|&l| {
            let k = SpectralParameter::in_window(C::new(l, eps), *window)?;
            bs_condition(curve, alpha, &k, &grid)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(singular_set_from_conditions(lambdas, &conds, eps, threshold))
}

/// Two candidate sets agree when each candidate of one has a partner in the
/// other within `tol`.
pub fn candidates_agree(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter().all(|x| b.iter().any(|y| (x - y).abs() <= tol))
        && b.iter().all(|y| a.iter().any(|x| (x - y).abs() <= tol))
}
