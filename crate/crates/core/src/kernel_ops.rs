//! Nyström discretization of the boundary integral operators
//! R_mm(k), R_0(k), their difference, the exact inverse of I - αR_0(k) on the
//! straight line, and the free-resolvent pairings with compactly supported
//! planar test functions.
//!
//! Grids consist of equal panels carrying Gauss–Legendre nodes.  Entries
//! between nodes in the same or nearby panels use product integration for
//! the log|x|, |x| and x² log|x| parts of the kernels, so high-order
//! convergence survives the diagonal singularity.  Matrices are stored in the
//! symmetrized form M_ij ≈ K(s_i, s_j) √(w_i w_j).

use crate::curve_geometry::{Curve, Point};
use crate::error::{ensure, Error, Result};
use crate::quadrature::{adaptive_c, composite_nodes, graded_breaks, legendre_all, GaussLegendre};
use crate::special_functions::{k0_split, k01, EULER_GAMMA};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::{LN_2, PI};
use std::io::Write;
use std::sync::{Arc, Mutex, OnceLock};

type C = Complex64;

const NEAR: usize = 2;
/// rem(0) in K_0(z) = -log z I_0(z) + rem(z).
const REM0: f64 = LN_2 - EULER_GAMMA;

/// Panel Gauss–Legendre grid on [-L, L].
#[derive(Debug, Clone)]
pub struct Grid1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub half_length: f64,
    pub panels: usize,
    pub order: usize,
    pub panel_width: f64,
    ref_nodes: Vec<f64>,
}

impl Grid1D {
    pub fn new(half_length: f64, panels: usize, order: usize) -> Result<Self> {
        ensure(half_length > 0.0, || "grid half-length must be positive".into())?;
        ensure(panels >= 1 && order >= 2, || "grid needs a panel and two nodes per panel".into())?;
        let rule = GaussLegendre::new(order);
        let h = 2.0 * half_length / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let a = -half_length + p as f64 * h;
            for (x, w) in rule.on(a, a + h) {
                nodes.push(x);
                weights.push(w);
            }
        }
        Ok(Self {
            nodes,
            weights,
            half_length,
            panels,
            order,
            panel_width: h,
            ref_nodes: rule.nodes,
        })
    }

    /// Grid with at least `n` nodes, `order` nodes per panel.
    pub fn with_node_count(half_length: f64, n: usize, order: usize) -> Result<Self> {
        let panels = n.div_ceil(order).max(1);
        Self::new(half_length, panels, order)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn sqrt_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.sqrt()).collect()
    }

    fn panel_of(&self, i: usize) -> usize {
        i / self.order
    }

    fn local(&self, i: usize) -> usize {
        i % self.order
    }
}

/// Energy window [λ1, λ2] + i(0, ε0] inside (-α²/4, 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lambda1: f64,
    pub lambda2: f64,
    pub eps0: f64,
}

impl Window {
    pub fn new(lambda1: f64, lambda2: f64, eps0: f64) -> Result<Self> {
        ensure(lambda1 < lambda2 && lambda2 < 0.0 && eps0 > 0.0, || {
            format!("window needs λ1 < λ2 < 0 and ε0 > 0, got [{lambda1}, {lambda2}], ε0 = {eps0}")
        })?;
        Ok(Self { lambda1, lambda2, eps0 })
    }

    /// Upper bound b for Re k.
    pub fn b(&self) -> f64 {
        (0.5 * (self.lambda2 + self.lambda2.hypot(self.eps0))).sqrt()
    }

    /// Lower bound k_20 = sqrt(-λ2) for Im k.
    pub fn k20(&self) -> f64 {
        (-self.lambda2).sqrt()
    }

    /// Upper bound k_21 for Im k.
    pub fn k21(&self) -> f64 {
        (0.5 * (-self.lambda1 + self.lambda1.hypot(self.eps0))).sqrt()
    }
}

/// Spectral parameter k with Im k > 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralParameter {
    pub k: C,
    pub window: Option<Window>,
}

impl SpectralParameter {
    pub fn imaginary(kappa: f64) -> Result<Self> {
        ensure(kappa > 0.0, || format!("κ must be positive, got {kappa}"))?;
        Ok(Self {
            k: C::new(0.0, kappa),
            window: None,
        })
    }

    /// k = sqrt(z) on the branch Im k > 0.
    pub fn from_energy(z: C) -> Result<Self> {
        if z.im == 0.0 && z.re >= 0.0 {
            return Err(Error::Domain(format!("k² = {z} lies on the spectrum [0, ∞)")));
        }
        let k = if z.im == 0.0 {
            C::new(0.0, (-z.re).sqrt())
        } else {
            let r = z.sqrt();
            if r.im < 0.0 {
                -r
            } else {
                r
            }
        };
        Ok(Self { k, window: None })
    }

    pub fn in_window(z: C, window: Window) -> Result<Self> {
        let mut p = Self::from_energy(z)?;
        p.window = Some(window);
        Ok(p)
    }

    pub fn z(&self) -> C {
        self.k * self.k
    }

    /// -ik, the Macdonald-function scale (Re > 0).
    pub fn minus_ik(&self) -> C {
        -C::i() * self.k
    }

    /// Checks Re k <= b and k20 <= Im k <= k21 against the window.
    pub fn window_bounds_hold(&self) -> Option<bool> {
        self.window.map(|w| {
            let tol = 1e-12;
            self.k.re > 0.0
                && self.k.re <= w.b() * (1.0 + tol)
                && self.k.im >= w.k20() * (1.0 - tol)
                && self.k.im <= w.k21() * (1.0 + tol)
        })
    }
}

/// A Nyström matrix in symmetrized form, together with the row-exact matrix
/// it was symmetrized from.
///
/// Product integration is exact row by row, so `nystrom` (entries A_ij √(w_i/w_j)
/// with A the plain Nyström matrix) reproduces the operator on smooth
/// functions to high order.  Averaging with the transpose loses that pointwise
/// accuracy but only perturbs Rayleigh quotients at second order, so `data`
/// is used for eigenvalue problems and `nystrom` for solves.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub data: DMatrix<C>,
    pub nystrom: DMatrix<C>,
    pub k: C,
    pub delta: f64,
    pub half_length: f64,
    /// Product-integration corrections applied within this many panels.
    pub near_panels: usize,
}

impl KernelMatrix {
    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn real_part(&self) -> DMatrix<f64> {
        self.data.map(|z| z.re)
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n();
        let mut m: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                m = m.max((self.data[(i, j)] - self.data[(j, i)]).norm());
            }
        }
        m
    }

    /// Binary dump: u64 N, f64 L, Re k, Im k, then row-major (re, im) pairs,
    /// all little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.n();
        w.write_all(&(n as u64).to_le_bytes())?;
        for v in [self.half_length, self.k.re, self.k.im] {
            w.write_all(&v.to_le_bytes())?;
        }
        for i in 0..n {
            for j in 0..n {
                let z = self.data[(i, j)];
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Basis functions g(y) of the near-diagonal expansion, in the order
/// log|y|, |y|, y² log|y|, |y|³, y⁴ log|y|.
const BASES: usize = 5;

fn basis(which: usize, y: f64) -> f64 {
    let ay = y.abs();
    if ay == 0.0 {
        return 0.0;
    }
    match which {
        0 => ay.ln(),
        1 => ay,
        2 => y * y * ay.ln(),
        3 => ay * ay * ay,
        _ => y.powi(4) * ay.ln(),
    }
}

/// Product-integration weights ∫_{-1}^{1} ℓ_b(x) g(x0 - x) dx for target
/// x0 = ξ_a - 2·off, the Lagrange basis ℓ_b of the reference Gauss rule and
/// each expansion basis g.
struct ProductRule {
    q: usize,
    w: [Vec<f64>; BASES],
}

impl ProductRule {
    fn index(&self, off: isize, a: usize, b: usize) -> usize {
        (((off + NEAR as isize) as usize) * self.q + a) * self.q + b
    }

    fn build(q: usize) -> Self {
        let rule = GaussLegendre::new(q);
        let size = (2 * NEAR + 1) * q * q;
        let mut out = Self {
            q,
            w: std::array::from_fn(|_| vec![0.0; size]),
        };
        let pvals: Vec<Vec<f64>> = rule.nodes.iter().map(|&x| legendre_all(q - 1, x)).collect();
        let jobs: Vec<(isize, usize)> = (-(NEAR as isize)..=NEAR as isize)
            .flat_map(|off| (0..q).map(move |a| (off, a)))
            .collect();
        let moments: Vec<(isize, usize, Vec<[f64; BASES]>)> = jobs
            .par_iter()
            .map(|&(off, a)| {
                let x0 = rule.nodes[a] - 2.0 * off as f64;
                let pieces: Vec<(f64, f64)> = if x0 > -1.0 && x0 < 1.0 {
                    vec![(-1.0, x0), (x0, 1.0)]
                } else {
                    vec![(-1.0, 1.0)]
                };
                let m = (0..q)
                    .map(|n| {
                        std::array::from_fn(|which| {
                            let f = |x: f64| C::new(legendre_all(n, x)[n] * basis(which, x0 - x), 0.0);
                            pieces
                                .iter()
                                .map(|&(lo, hi)| adaptive_c(f, lo, hi, 1e-16, 1e-15, 4000).value.re)
                                .sum()
                        })
                    })
                    .collect();
                (off, a, m)
            })
            .collect();
        for (off, a, m) in moments {
            for b in 0..q {
                let idx = out.index(off, a, b);
                for t in 0..BASES {
                    out.w[t][idx] = m
                        .iter()
                        .enumerate()
                        .map(|(n, mn)| (2.0 * n as f64 + 1.0) / 2.0 * rule.weights[b] * pvals[b][n] * mn[t])
                        .sum();
                }
            }
        }
        out
    }
}

fn product_rule(q: usize) -> Arc<ProductRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<ProductRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().unwrap().get(&q) {
        return r.clone();
    }
    let r = Arc::new(ProductRule::build(q));
    cache.lock().unwrap().insert(q, r.clone());
    r
}

/// Near-diagonal split
/// K(s,t) = -a_log log|s-t| + b + Σ c_m g_m(s-t),
/// with the a_log and b depending on the node pair and the constant
/// coefficients c_m of |x|, x² log|x|, |x|³, x⁴ log|x| shared by all pairs.
#[derive(Debug, Clone, Copy, Default)]
struct Split {
    a_log: C,
    b: C,
}

type Singular = [C; BASES - 1];

const SMOOTH: Singular = [C::new(0.0, 0.0); BASES - 1];

/// Assemble a kernel matrix from far values and the near-diagonal split;
/// returns the row-exact and the symmetrized forms.
fn assemble<F, G>(grid: &Grid1D, far: F, near: G, singular: Singular) -> (DMatrix<C>, DMatrix<C>)
where
    F: Fn(usize, usize) -> C + Sync,
    G: Fn(usize, usize) -> Split + Sync,
{
    let n = grid.len();
    let q = grid.order;
    let rule = product_rule(q);
    let h = grid.panel_width;
    let hh = 0.5 * h;
    let log_hh = hh.ln();
    let sw = grid.sqrt_weights();
    let rows: Vec<Vec<C>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let pi = grid.panel_of(i) as isize;
            let a = grid.local(i);
            let mut row = vec![C::new(0.0, 0.0); n];
            for (j, slot) in row.iter_mut().enumerate() {
                let pj = grid.panel_of(j) as isize;
                let off = pj - pi;
                let wj = grid.weights[j];
                let v = if off.unsigned_abs() <= NEAR {
                    let b = grid.local(j);
                    let idx = rule.index(off, a, b);
                    let sp = near(i, j);
                    let y = grid.ref_nodes[a] - 2.0 * off as f64 - grid.ref_nodes[b];
                    let wref = wj / hh;
                    // scaled weights: |s - t| = hh |y| on the reference panel
                    let w_log = hh * rule.w[0][idx] + wj * log_hh;
                    let w_abs = hh.powi(2) * rule.w[1][idx];
                    let w_x2 = hh.powi(3) * (rule.w[2][idx] + log_hh * wref * y * y);
                    let w_abs3 = hh.powi(4) * rule.w[3][idx];
                    let w_x4 = hh.powi(5) * (rule.w[4][idx] + log_hh * wref * y.powi(4));
                    -sp.a_log * w_log
                        + singular[0] * w_abs
                        + singular[1] * w_x2
                        + singular[2] * w_abs3
                        + singular[3] * w_x4
                        + sp.b * wj
                } else {
                    far(i, j) * wj
                };
                *slot = v * (sw[i] / sw[j]);
            }
            row
        })
        .collect();
    let raw = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let mut m = raw.clone();
    symmetrize(&mut m);
    (raw, m)
}

/// Above this value of |k|·h the split coefficients vary too fast across a
/// panel to be interpolated, and near weights are integrated directly.
const SPLIT_LIMIT: f64 = 2.0;

fn lagrange_basis(nodes: &[f64], bary: &[f64], x: f64, out: &mut [f64]) {
    if let Some(b) = nodes.iter().position(|&xb| xb == x) {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[b] = 1.0;
        return;
    }
    let mut total = 0.0;
    for (b, v) in out.iter_mut().enumerate() {
        *v = bary[b] / (x - nodes[b]);
        total += *v;
    }
    out.iter_mut().for_each(|v| *v /= total);
}

/// Breakpoints on [a, b] graded towards the end nearest `s`, finest piece
/// about the distance from `s` (or a few hundred ulps), none wider than `cap`.
fn near_breaks(a: f64, b: f64, s: f64, cap: f64) -> Vec<f64> {
    let toward_a = (s - a).abs() <= (s - b).abs();
    let d = if toward_a { (s - a).abs() } else { (s - b).abs() };
    let len = b - a;
    let floor = (0.5 * d).max(1e-14 * len).max(1e3 * f64::EPSILON * a.abs().max(b.abs()));
    let mut levels = 0;
    while levels < 60 && len * 0.5f64.powi(levels + 1) > floor {
        levels += 1;
    }
    let mut br = graded_breaks(0.0, len, levels as usize, 0.5);
    if !toward_a {
        br = br.iter().rev().map(|x| len - x).collect();
    }
    let mut out = vec![a];
    for w in br.windows(2) {
        let pieces = ((w[1] - w[0]) / cap).ceil().max(1.0) as usize;
        for m in 1..=pieces {
            out.push(a + w[0] + (w[1] - w[0]) * m as f64 / pieces as f64);
        }
    }
    *out.last_mut().unwrap() = b;
    out
}

/// Like [`assemble`], with the near weights ∫ ℓ_b(t) K(s_i, t) dt over each
/// near panel computed by graded composite quadrature of `kernel(i, t)`.
fn assemble_direct<F, K>(grid: &Grid1D, far: F, kernel: K, scale: f64) -> (DMatrix<C>, DMatrix<C>)
where
    F: Fn(usize, usize) -> C + Sync,
    K: Fn(usize, f64) -> C + Sync,
{
    let n = grid.len();
    let q = grid.order;
    let h = grid.panel_width;
    let hh = 0.5 * h;
    let cap = h.min(1.0 / scale);
    let rule = GaussLegendre::new(16);
    let refs = &grid.ref_nodes;
    let bary: Vec<f64> = (0..q)
        .map(|b| 1.0 / (0..q).filter(|&m| m != b).map(|m| refs[b] - refs[m]).product::<f64>())
        .collect();
    let sw = grid.sqrt_weights();
    let rows: Vec<Vec<C>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let pi = grid.panel_of(i);
            let si = grid.nodes[i];
            let mut row: Vec<C> = (0..n).map(|j| far(i, j) * grid.weights[j]).collect();
            let lo_p = pi.saturating_sub(NEAR);
            let hi_p = (pi + NEAR).min(grid.panels - 1);
            let mut ell = vec![0.0; q];
            for p in lo_p..=hi_p {
                let a = -grid.half_length + p as f64 * h;
                let b = a + h;
                let mid = a + hh;
                let mut pieces = vec![(a, b)];
                if si > a && si < b {
                    pieces = vec![(a, si), (si, b)];
                }
                let mut acc = vec![C::new(0.0, 0.0); q];
                for (lo, hi) in pieces {
                    let br = near_breaks(lo, hi, si, cap);
                    for (t, w) in composite_nodes(&br, &rule) {
                        lagrange_basis(refs, &bary, (t - mid) / hh, &mut ell);
                        let kv = kernel(i, t) * w;
                        for (acc_b, l) in acc.iter_mut().zip(&ell) {
                            *acc_b += kv * *l;
                        }
                    }
                }
                for (b, v) in acc.into_iter().enumerate() {
                    row[p * q + b] = v;
                }
            }
            for (j, v) in row.iter_mut().enumerate() {
                *v *= sw[i] / sw[j];
            }
            row
        })
        .collect();
    let raw = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let mut m = raw.clone();
    symmetrize(&mut m);
    (raw, m)
}

fn symmetrize(m: &mut DMatrix<C>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Translation-invariant kernel tabulated on all node differences of a grid.
struct ToeplitzTable {
    q: usize,
    far: Vec<C>,
    near: Vec<Split>,
}

impl ToeplitzTable {
    fn build<K>(grid: &Grid1D, kernel: K) -> Self
    where
        K: Fn(f64) -> (C, Split) + Sync,
    {
        let q = grid.order;
        let h = grid.panel_width;
        let cells: Vec<(usize, usize, usize)> = (0..grid.panels)
            .flat_map(|m| (0..q).flat_map(move |a| (0..q).map(move |b| (m, a, b))))
            .collect();
        let vals: Vec<(C, Split)> = cells
            .par_iter()
            .map(|&(m, a, b)| {
                let x = m as f64 * h + 0.5 * h * (grid.ref_nodes[a] - grid.ref_nodes[b]);
                kernel(x.abs())
            })
            .collect();
        Self {
            q,
            far: vals.iter().map(|v| v.0).collect(),
            near: vals.iter().map(|v| v.1).collect(),
        }
    }

    fn index(&self, grid: &Grid1D, i: usize, j: usize) -> usize {
        let (pi, pj) = (grid.panel_of(i), grid.panel_of(j));
        let (a, b) = (grid.local(i), grid.local(j));
        if pi >= pj {
            ((pi - pj) * self.q + a) * self.q + b
        } else {
            ((pj - pi) * self.q + b) * self.q + a
        }
    }
}

fn r0_entry(mik: C, x: f64) -> (C, Split) {
    let inv2pi = 1.0 / (2.0 * PI);
    if x == 0.0 {
        return (
            C::new(f64::INFINITY, 0.0),
            Split {
                a_log: C::new(inv2pi, 0.0),
                b: (C::new(REM0, 0.0) - mik.ln()) * inv2pi,
            },
        );
    }
    let z = mik * x;
    let sp = k0_split(z);
    let far = k01(z).0 * inv2pi;
    (
        far,
        Split {
            a_log: sp.i0 * inv2pi,
            b: (sp.rem - sp.i0 * mik.ln()) * inv2pi,
        },
    )
}

/// Matrix of R_0(k), kernel (1/2π) K_0(-ik|s-t|).
pub fn assemble_r0(k: &SpectralParameter, grid: &Grid1D) -> KernelMatrix {
    let mik = k.minus_ik();
    let table = ToeplitzTable::build(grid, |x| r0_entry(mik, x));
    let far = |i, j| table.far[table.index(grid, i, j)];
    let (nystrom, data) = if mik.norm() * grid.panel_width > SPLIT_LIMIT {
        let kernel = |i: usize, t: f64| k01(mik * (grid.nodes[i] - t).abs()).0 / (2.0 * PI);
        assemble_direct(grid, far, kernel, mik.norm())
    } else {
        assemble(grid, far, |i, j| table.near[table.index(grid, i, j)], SMOOTH)
    };
    KernelMatrix {
        data,
        nystrom,
        k: k.k,
        delta: 0.0,
        half_length: grid.half_length,
        near_panels: NEAR,
    }
}

/// Curve positions at the grid nodes; rejects degenerate sampling.
pub fn curve_points(curve: &Curve, grid: &Grid1D) -> Result<Vec<Point>> {
    let pts = curve.points(&grid.nodes);
    for w in pts.windows(2) {
        if (w[0][0] - w[1][0]).hypot(w[0][1] - w[1][1]) < 1e-14 {
            return Err(Error::Geometry(
                "distinct grid nodes map to coincident curve points".into(),
            ));
        }
    }
    Ok(pts)
}

fn rmm_split(log_mik: C, mik: C, pts: &[Point], grid: &Grid1D, i: usize, j: usize) -> Split {
    let inv2pi = 1.0 / (2.0 * PI);
    if i == j {
        return Split {
            a_log: C::new(inv2pi, 0.0),
            b: (C::new(REM0, 0.0) - log_mik) * inv2pi,
        };
    }
    let r = dist(pts[i], pts[j]);
    let d = (grid.nodes[i] - grid.nodes[j]).abs();
    let sp = k0_split(mik * r);
    Split {
        a_log: sp.i0 * inv2pi,
        b: (sp.rem - sp.i0 * (log_mik + (r / d).ln())) * inv2pi,
    }
}

/// Matrix of R_mm(k), kernel (1/2π) K_0(-ik|Γ(s)-Γ(t)|).
pub fn assemble_rmm(curve: &Curve, k: &SpectralParameter, grid: &Grid1D) -> Result<KernelMatrix> {
    let pts = curve_points(curve, grid)?;
    let mik = k.minus_ik();
    let log_mik = mik.ln();
    let table = RadialK0::new(k, 2.0 * grid.half_length + 1.0);
    let far = |i: usize, j: usize| table.eval(dist(pts[i], pts[j])) / (2.0 * PI);
    let (nystrom, data) = if mik.norm() * grid.panel_width > SPLIT_LIMIT {
        let kernel = |i: usize, t: f64| k01(mik * dist(pts[i], curve.point(t))).0 / (2.0 * PI);
        assemble_direct(grid, far, kernel, mik.norm())
    } else {
        assemble(grid, far, |i, j| rmm_split(log_mik, mik, &pts, grid, i, j), SMOOTH)
    };
    Ok(KernelMatrix {
        data,
        nystrom,
        k: k.k,
        delta: 0.0,
        half_length: grid.half_length,
        near_panels: NEAR,
    })
}

/// Near-diagonal split of the R_mm - R_0 kernel (zero on the diagonal).
fn difference_split(mik: C, log_mik: C, pts: &[Point], grid: &Grid1D, i: usize, j: usize) -> Split {
    if i == j {
        return Split::default();
    }
    let inv2pi = 1.0 / (2.0 * PI);
    let d = (grid.nodes[i] - grid.nodes[j]).abs();
    let r = dist(pts[i], pts[j]);
    if r == d {
        return Split::default();
    }
    let sm = k0_split(mik * r);
    let s0 = k0_split(mik * d);
    Split {
        a_log: (sm.i0 - s0.i0) * inv2pi,
        b: (sm.rem - s0.rem - sm.i0 * (log_mik + (r / d).ln()) + s0.i0 * log_mik) * inv2pi,
    }
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn difference_far(table: &RadialK0, pts: &[Point], grid: &Grid1D, i: usize, j: usize) -> C {
    if i == j {
        return C::new(0.0, 0.0);
    }
    let r = dist(pts[i], pts[j]);
    let d = (grid.nodes[i] - grid.nodes[j]).abs();
    if r == d {
        return C::new(0.0, 0.0);
    }
    (table.eval(r) - table.eval(d)) / (2.0 * PI)
}

/// Matrix of D = R_mm(k) - R_0(k).
pub fn assemble_difference(curve: &Curve, k: &SpectralParameter, grid: &Grid1D) -> Result<KernelMatrix> {
    let pts = curve_points(curve, grid)?;
    let mik = k.minus_ik();
    let log_mik = mik.ln();
    let (nystrom, data) = if curve.is_straight() {
        (DMatrix::zeros(grid.len(), grid.len()), DMatrix::zeros(grid.len(), grid.len()))
    } else {
        let table = RadialK0::new(k, 2.0 * grid.half_length + 1.0);
        assemble(
            grid,
            |i, j| difference_far(&table, &pts, grid, i, j),
            |i, j| difference_split(mik, log_mik, &pts, grid, i, j),
            SMOOTH,
        )
    };
    Ok(KernelMatrix {
        data,
        nystrom,
        k: k.k,
        delta: 0.0,
        half_length: grid.half_length,
        near_panels: NEAR,
    })
}

/// p0 = sqrt(k² + α²/4) with Im p0 >= 0 (Re p0 > 0 for k² off the real axis
/// above the threshold).
pub fn pole_momentum(k: C, alpha: f64) -> C {
    let w = k * k + alpha * alpha / 4.0;
    if w.im == 0.0 && w.re < 0.0 {
        return C::new(0.0, (-w.re).sqrt());
    }
    let p = w.sqrt();
    if p.im < 0.0 {
        -p
    } else {
        p
    }
}

/// Kernel of the operator with multiplier α²/(2S(2S+α)), S = sqrt(p² - k²),
/// evaluated through its branch-cut representation
/// h(x) = (α³/π) e^{ik|x|} ∫_0^∞ e^{-v²|x|} dv / (sqrt(v² - 2ik) (4v²(v² - 2ik) + α²)).
#[derive(Debug, Clone)]
pub struct CutIntegral {
    k: C,
    alpha: f64,
    nodes: Vec<f64>,
    weights: Vec<C>,
}

impl CutIntegral {
    pub fn new(k: C, alpha: f64) -> Self {
        let rule = GaussLegendre::new(16);
        let mut breaks = graded_breaks(0.0, 1.0, 14, 0.5);
        let mut b = 1.0;
        while b < 2000.0 {
            b *= 1.5;
            breaks.push(b);
        }
        let nodes_w = composite_nodes(&breaks, &rule);
        let two_ik = 2.0 * C::i() * k;
        let pref = alpha.powi(3) / PI;
        let nodes: Vec<f64> = nodes_w.iter().map(|p| p.0).collect();
        let weights = nodes_w
            .iter()
            .map(|&(v, w)| {
                let s = C::new(v * v, 0.0) - two_ik;
                let den = s.sqrt() * (4.0 * v * v * s + alpha * alpha);
                pref * w / den
            })
            .collect();
        Self {
            k,
            alpha,
            nodes,
            weights,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eval(&self, x: f64) -> C {
        let x = x.abs();
        let s: C = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&v, &w)| w * (-v * v * x).exp())
            .sum();
        s * (C::i() * self.k * x).exp()
    }
}

/// Pointwise kernel of (I - αR_0(k))^{-1} - I on the line.
#[derive(Debug, Clone)]
pub struct LineInverseKernel {
    pub k: C,
    pub alpha: f64,
    pub p0: C,
    cut: CutIntegral,
}

impl LineInverseKernel {
    pub fn new(k: &SpectralParameter, alpha: f64) -> Self {
        Self {
            k: k.k,
            alpha,
            p0: pole_momentum(k.k, alpha),
            cut: CutIntegral::new(k.k, alpha),
        }
    }

    /// Guided-wave (pole) part i α² e^{i p0 |x|} / (4 p0).
    pub fn pole(&self, x: f64) -> C {
        C::i() * self.alpha * self.alpha * (C::i() * self.p0 * x.abs()).exp() / (4.0 * self.p0)
    }

    pub fn value(&self, x: f64) -> C {
        let x = x.abs();
        let mik = -C::i() * self.k;
        self.pole(x) + k01(mik * x).0 * (self.alpha / (2.0 * PI)) - self.cut.eval(x)
    }

    fn split(&self, x: f64) -> (C, Split) {
        let x = x.abs();
        let a = self.alpha;
        let mik = -C::i() * self.k;
        let smooth = self.pole(x) - self.cut.eval(x);
        let coef = a / (2.0 * PI);
        if x == 0.0 {
            return (
                C::new(f64::INFINITY, 0.0),
                Split {
                    a_log: C::new(coef, 0.0),
                    b: smooth + (C::new(REM0, 0.0) - mik.ln()) * coef,
                },
            );
        }
        let z = mik * x;
        let sp = k0_split(z);
        let far = smooth + k01(z).0 * coef;
        let c = self.singular();
        let b = smooth + (sp.rem - sp.i0 * mik.ln()) * coef
            - (1..BASES).map(|m| c[m - 1] * basis(m, x)).sum::<C>();
        (
            far,
            Split {
                a_log: sp.i0 * coef,
                b,
            },
        )
    }

    /// Coefficients of |x|, x² log|x|, |x|³ and x⁴ log|x| in the kernel,
    /// read off from the large-p expansion of α²/(2S(2S - α)) in powers of
    /// 1/S with S² = p² + κ'², κ'² = -k².
    fn singular(&self) -> Singular {
        let a = self.alpha;
        let kp2 = -self.k * self.k;
        [
            C::new(-a * a / 8.0, 0.0),
            C::new(a.powi(3) / (16.0 * PI), 0.0),
            -kp2 * (a * a / 48.0) + a.powi(4) / 192.0,
            kp2 * (a.powi(3) / (128.0 * PI)) - a.powi(5) / (768.0 * PI),
        ]
    }
}

/// Matrix of (I - αR_0(k))^{-1} on the line, restricted to the grid
/// (identity plus the symmetrized kernel matrix).
pub fn line_inverse(k: &SpectralParameter, alpha: f64, grid: &Grid1D) -> KernelMatrix {
    let kern = LineInverseKernel::new(k, alpha);
    let table = ToeplitzTable::build(grid, |x| kern.split(x));
    let (mut nystrom, mut data) = assemble(
        grid,
        |i, j| table.far[table.index(grid, i, j)],
        |i, j| table.near[table.index(grid, i, j)],
        kern.singular(),
    );
    for i in 0..grid.len() {
        data[(i, i)] += C::new(1.0, 0.0);
        nystrom[(i, i)] += C::new(1.0, 0.0);
    }
    KernelMatrix {
        data,
        nystrom,
        k: k.k,
        delta: 0.0,
        half_length: grid.half_length,
        near_panels: NEAR,
    }
}

/// Weighted Hilbert–Schmidt value of R_mm - R_0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HsReport {
    pub value: f64,
    pub doubled: f64,
    pub tail_bound: f64,
    pub relative_change: f64,
    pub divergent: bool,
}

fn hs_sum(curve: &Curve, k: &SpectralParameter, delta: f64, grid: &Grid1D) -> Result<f64> {
    if curve.is_straight() {
        return Ok(0.0);
    }
    let pts = curve_points(curve, grid)?;
    let table = RadialK0::new(k, 2.0 * grid.half_length + 1.0);
    let wt: Vec<f64> = grid
        .nodes
        .iter()
        .zip(&grid.weights)
        .map(|(s, w)| w * (1.0 + s * s).powf(delta / 2.0))
        .collect();
    let n = grid.len();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..i {
                let g = difference_far(&table, &pts, grid, i, j);
                acc += 2.0 * wt[i] * wt[j] * g.norm_sqr();
            }
            acc
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum())
}

/// ∬ w(s)^δ |g(s,t)|² w(t)^δ ds dt with w(s) = (1+s²)^{1/2} and g the kernel
/// of R_mm(k) - R_0(k), on the grid and on a grid of twice the length.
pub fn weighted_hs_norm(curve: &Curve, k: &SpectralParameter, delta: f64, grid: &Grid1D) -> Result<HsReport> {
    ensure(delta > 1.0, || format!("δ must exceed 1, got {delta}"))?;
    let value = hs_sum(curve, k, delta, grid)?;
    let big = Grid1D::new(2.0 * grid.half_length, 2 * grid.panels, grid.order)?;
    let doubled = hs_sum(curve, k, delta, &big)?;
    let rel = if doubled > 0.0 { (doubled - value).abs() / doubled } else { 0.0 };
    // envelope |g| <= c e^{-Im k ρ |s - t|} beyond the doubled truncation
    let l = big.half_length;
    let kappa = k.k.im;
    let tail_bound = if value == 0.0 {
        0.0
    } else {
        doubled * (1.0 + l * l).powf(delta) * (-kappa * l).exp()
    };
    Ok(HsReport {
        value,
        doubled,
        tail_bound,
        relative_change: rel,
        divergent: rel > 0.1,
    })
}

/// Smooth compactly supported bump A exp(-1/(1 - |x-c|²/r²)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub center: Point,
    pub radius: f64,
    pub amplitude: f64,
}

/// J_0 on the real line: power series for |x| <= 8, otherwise the trapezoid
/// rule for (1/π) ∫_0^π cos(x sin θ) dθ, which converges geometrically once
/// the node count exceeds |x|/2.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 8.0 {
        let t = -0.25 * x * x;
        let mut term = 1.0;
        let mut acc = 1.0;
        for k in 1..80 {
            let kf = k as f64;
            term *= t / (kf * kf);
            acc += term;
            if term.abs() < 1e-18 {
                break;
            }
        }
        acc
    } else {
        let m = (0.5 * x).ceil() as usize + 24;
        let h = PI / m as f64;
        (0..m).map(|j| (x * ((j as f64 + 0.5) * h).sin()).cos()).sum::<f64>() / m as f64
    }
}

const CHEB_DEG: usize = 20;

/// K_0(-ik r) for real r > 0 from a piecewise Chebyshev table of the scaled
/// function e^{z} K_0(z), z = -ik r.  Panels double in length up to r = 4
/// and have length 2 beyond.  Arguments outside the table use [`k01`].
#[derive(Debug, Clone)]
pub struct RadialK0 {
    mik: C,
    r_lo: f64,
    r_hi: f64,
    n_geo: usize,
    coeffs: Vec<[C; CHEB_DEG + 1]>,
    breaks: Vec<f64>,
}

impl RadialK0 {
    const GEO_END: f64 = 4.0;
    const WIDTH: f64 = 2.0;

    pub fn new(k: &SpectralParameter, r_hi: f64) -> Self {
        let mik = k.minus_ik();
        // keep e^{z} finite; past this K_0 underflows anyway
        let r_hi = if mik.re > 0.0 { r_hi.min(600.0 / mik.re) } else { r_hi };
        let r_lo = Self::GEO_END / 4096.0;
        let mut breaks = vec![r_lo];
        while *breaks.last().unwrap() < Self::GEO_END * 0.999 {
            let b = breaks.last().unwrap() * 2.0;
            breaks.push(b);
        }
        let n_geo = breaks.len() - 1;
        while *breaks.last().unwrap() < r_hi {
            let b = breaks.last().unwrap() + Self::WIDTH;
            breaks.push(b);
        }
        let r_hi = *breaks.last().unwrap();
        let cheb: Vec<f64> = (0..=CHEB_DEG)
            .map(|j| (PI * (j as f64 + 0.5) / (CHEB_DEG + 1) as f64).cos())
            .collect();
        let coeffs = breaks
            .windows(2)
            .map(|w| {
                let (c, hw) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
                let vals: Vec<C> = cheb
                    .iter()
                    .map(|&x| {
                        let z = mik * (c + hw * x);
                        k01(z).0 * z.exp()
                    })
                    .collect();
                let mut a = [C::new(0.0, 0.0); CHEB_DEG + 1];
                for (n, an) in a.iter_mut().enumerate() {
                    let mut acc = C::new(0.0, 0.0);
                    for (j, v) in vals.iter().enumerate() {
                        let th = PI * (j as f64 + 0.5) / (CHEB_DEG + 1) as f64;
                        acc += v * (n as f64 * th).cos();
                    }
                    *an = acc * (2.0 / (CHEB_DEG + 1) as f64);
                }
                a[0] *= 0.5;
                a
            })
            .collect();
        Self {
            mik,
            r_lo,
            r_hi,
            n_geo,
            coeffs,
            breaks,
        }
    }

    pub fn eval(&self, r: f64) -> C {
        let z = self.mik * r;
        if r < self.r_lo || r >= self.r_hi {
            return k01(z).0;
        }
        let j = if r < Self::GEO_END {
            ((r / self.r_lo).log2().floor() as usize).min(self.n_geo - 1)
        } else {
            (self.n_geo + ((r - self.breaks[self.n_geo]) / Self::WIDTH) as usize).min(self.coeffs.len() - 1)
        };
        let (a, b) = (self.breaks[j], self.breaks[j + 1]);
        let x = (2.0 * r - a - b) / (b - a);
        let c = &self.coeffs[j];
        let (mut b1, mut b2) = (C::new(0.0, 0.0), C::new(0.0, 0.0));
        for n in (1..=CHEB_DEG).rev() {
            let t = c[n] + b1 * (2.0 * x) - b2;
            b2 = b1;
            b1 = t;
        }
        (c[0] + b1 * x - b2) * (-z).exp()
    }
}

impl TestFunction {
    /// |φ̂(ρ)|² < 1e-16 |φ̂(0)|² beyond ρ = RHO_MAX / r.
    const RHO_MAX: f64 = 160.0;

    pub fn new(center: Point, radius: f64, amplitude: f64) -> Result<Self> {
        ensure(radius > 0.0, || format!("bump radius must be positive, got {radius}"))?;
        Ok(Self {
            center,
            radius,
            amplitude,
        })
    }

    pub fn radial(&self, rr: f64) -> f64 {
        let q = rr * rr / (self.radius * self.radius);
        if q >= 1.0 {
            0.0
        } else {
            self.amplitude * (-1.0 / (1.0 - q)).exp()
        }
    }

    pub fn value(&self, x: Point) -> f64 {
        self.radial((x[0] - self.center[0]).hypot(x[1] - self.center[1]))
    }

    /// Radial Gauss rule on [0, r] graded towards the support edge.
    pub fn radial_rule(&self, per_panel: usize) -> Vec<(f64, f64)> {
        let r = self.radius;
        let breaks = [0.0, 0.5 * r, 0.8 * r, 0.95 * r, r];
        composite_nodes(&breaks, &GaussLegendre::new(per_panel))
    }

    pub fn l1_norm(&self) -> f64 {
        2.0 * PI * self.radial_rule(24).iter().map(|&(x, w)| w * x * self.radial(x).abs()).sum::<f64>()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        2.0 * PI * self.radial_rule(24).iter().map(|&(x, w)| w * x * self.radial(x).powi(2)).sum::<f64>()
    }

    /// Unitary 2-D Fourier transform at |ξ| = rho.
    pub fn hankel(&self, rho: f64) -> f64 {
        let breaks: Vec<f64> = (0..=16).map(|j| self.radius * j as f64 / 16.0).collect();
        composite_nodes(&breaks, &GaussLegendre::new(16))
            .iter()
            .map(|&(x, w)| w * x * self.radial(x) * bessel_j0(rho * x))
            .sum()
    }

    /// Quadrature table (ρ_n, w_n |φ̂(ρ_n)|² ρ_n) for momentum integrals.
    pub fn spectrum(&self) -> BumpSpectrum {
        let r = self.radius;
        // geometric grading towards ρ = 0 resolves 1/(ρ² - z) for small |z|
        let mut breaks = vec![0.0];
        breaks.extend((0..12).rev().map(|j| 0.5f64.powi(j)));
        let step = (1.0 / r).min(1.0);
        let mut b = 1.0;
        while b < Self::RHO_MAX / r {
            b += if b < 40.0 / r { step } else { 4.0 / r };
            breaks.push(b);
        }
        let nodes = composite_nodes(&breaks, &GaussLegendre::new(12));
        let table: Vec<(f64, f64)> = nodes
            .par_iter()
            .map(|&(rho, w)| {
                let f = self.hankel(rho);
                (rho, w * f * f * rho)
            })
            .collect();
        BumpSpectrum { table }
    }
}

#[derive(Debug, Clone)]
pub struct BumpSpectrum {
    table: Vec<(f64, f64)>,
}

impl BumpSpectrum {
    /// ∫ |φ̂|² d²ξ, equal to ||φ||² by Plancherel.
    pub fn mass(&self) -> f64 {
        2.0 * PI * self.table.iter().map(|t| t.1).sum::<f64>()
    }

    pub fn pair(&self, z: C) -> C {
        2.0 * PI * self.table.iter().map(|&(rho, m)| m / (rho * rho - z)).sum::<C>()
    }
}

/// (φ, R_dxdx(k) φ) = ∫ |φ̂(ξ)|² / (|ξ|² - k²) d²ξ.
pub fn rdxdx_matrix_element(phi: &TestFunction, k: &SpectralParameter) -> Result<C> {
    let z = k.z();
    if z.im == 0.0 && z.re >= 0.0 {
        return Err(Error::Domain(format!("k² = {z} is on the free spectrum")));
    }
    Ok(phi.spectrum().pair(z))
}

/// Grid vector (R_m dx(k) φ)(s_i) with its refinement diagnostic.
#[derive(Debug, Clone)]
pub struct RmdxVector {
    pub values: Vec<C>,
    pub rel_change: f64,
    pub converged: bool,
}

fn field_at(phi: &TestFunction, table: &RadialK0, x: Point, n_rad: usize, n_ang: usize) -> C {
    let c = phi.center;
    let dist = (x[0] - c[0]).hypot(x[1] - c[1]);
    let inv2pi = 1.0 / (2.0 * PI);
    let dth = 2.0 * PI / n_ang as f64;
    if dist > 1.25 * phi.radius {
        let mut acc = C::new(0.0, 0.0);
        for (rr, w) in phi.radial_rule(n_rad) {
            let f = phi.radial(rr) * rr * w;
            if f == 0.0 {
                continue;
            }
            for t in 0..n_ang {
                let th = (t as f64 + 0.5) * dth;
                let y = [c[0] + rr * th.cos(), c[1] + rr * th.sin()];
                let d = (x[0] - y[0]).hypot(x[1] - y[1]);
                acc += table.eval(d) * f;
            }
        }
        acc * dth * inv2pi
    } else {
        // polar coordinates about the target absorb the log singularity
        let reach = dist + phi.radius;
        let breaks = graded_breaks(0.0, reach, 6, 0.35);
        let rule = GaussLegendre::new(n_rad);
        let mut acc = C::new(0.0, 0.0);
        for (rr, w) in composite_nodes(&breaks, &rule) {
            let kv = table.eval(rr) * rr * w;
            for t in 0..n_ang {
                let th = (t as f64 + 0.5) * dth;
                let v = phi.value([x[0] + rr * th.cos(), x[1] + rr * th.sin()]);
                if v != 0.0 {
                    acc += kv * v;
                }
            }
        }
        acc * dth * inv2pi
    }
}

/// (1/2π) ∫ K_0(-ik|x - y|) φ(y) d²y at a planar point.
pub fn free_field(phi: &TestFunction, k: &SpectralParameter, x: Point) -> C {
    let reach = dist(x, phi.center) + phi.radius + 1.0;
    field_at(phi, &RadialK0::new(k, reach), x, 24, 72)
}

/// (R_m dx(k) φ)(s_i) = (1/2π) ∫ K_0(-ik|Γ(s_i) - y|) φ(y) d²y at the grid nodes.
pub fn apply_rmdx(curve: &Curve, k: &SpectralParameter, phi: &TestFunction, grid: &Grid1D) -> Result<RmdxVector> {
    let pts = curve.points(&grid.nodes);
    let reach = pts.iter().map(|&x| dist(x, phi.center)).fold(0.0, f64::max) + phi.radius + 1.0;
    let table = RadialK0::new(k, reach);
    let values: Vec<C> = pts.par_iter().map(|&x| field_at(phi, &table, x, 16, 48)).collect();
    let scale = values.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
    // refinement check near the bump and on a sparse subset elsewhere
    let c = phi.center;
    let check: Vec<usize> = (0..pts.len())
        .filter(|&i| (pts[i][0] - c[0]).hypot(pts[i][1] - c[1]) < 3.0 * phi.radius || i % 16 == 0)
        .collect();
    let rel_change = check
        .par_iter()
        .map(|&i| (field_at(phi, &table, pts[i], 24, 72) - values[i]).norm() / scale)
        .reduce(|| 0.0, f64::max);
    Ok(RmdxVector {
        values,
        rel_change,
        converged: rel_change <= 1e-8,
    })
}

/// (R_dx m(k) g)(x) = Σ_i w_i (1/2π) K_0(-ik|x - Γ(s_i)|) g_i at planar points.
pub fn apply_rdxm(curve: &Curve, k: &SpectralParameter, grid: &Grid1D, g: &[C], points: &[Point]) -> Vec<C> {
    let pts = curve.points(&grid.nodes);
    let reach = points
        .iter()
        .flat_map(|&x| [dist(x, pts[0]), dist(x, pts[pts.len() - 1])])
        .fold(0.0, f64::max)
        + 1.0;
    let table = RadialK0::new(k, reach);
    points
        .par_iter()
        .map(|x| {
            let mut acc = C::new(0.0, 0.0);
            for ((p, w), gi) in pts.iter().zip(&grid.weights).zip(g) {
                acc += table.eval(dist(*x, *p)) * (*gi * *w);
            }
            acc / (2.0 * PI)
        })
        .collect()
}

/// The factors of I - αR_mm = (I - αR_0)(I - α T D) with T the exact line
/// inverse and D = R_mm - R_0, both in symmetrized form.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub alpha: f64,
    pub k: SpectralParameter,
    pub t: KernelMatrix,
    pub d: KernelMatrix,
}

pub fn factorize(curve: &Curve, alpha: f64, k: &SpectralParameter, grid: &Grid1D) -> Result<Factorization> {
    ensure(alpha >= 0.0, || format!("coupling must be non-negative, got {alpha}"))?;
    Ok(Factorization {
        alpha,
        k: *k,
        t: line_inverse(k, alpha, grid),
        d: assemble_difference(curve, k, grid)?,
    })
}

/// Value and diagnostics of (φ, (H - k²)^{-1} φ).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolventElement {
    pub value: C,
    pub free_part: C,
    /// Estimated 1-norm condition number of I - α D T.
    pub cond: f64,
    pub flagged: bool,
    pub quadrature_converged: bool,
}

/// (φ, (H - k²)^{-1} φ) = (φ, R_dxdx φ) + α (R_mdx φ, (I - αR_mm)^{-1} R_mdx φ),
/// with (I - αR_mm)^{-1} = T (I - α D T)^{-1}.
pub fn resolvent_matrix_element(
    curve: &Curve,
    alpha: f64,
    k: &SpectralParameter,
    phi: &TestFunction,
    grid: &Grid1D,
    cond_cap: f64,
) -> Result<ResolventElement> {
    let spec = phi.spectrum();
    resolvent_matrix_element_with(curve, alpha, k, phi, &spec, grid, cond_cap)
}

pub fn resolvent_matrix_element_with(
    curve: &Curve,
    alpha: f64,
    k: &SpectralParameter,
    phi: &TestFunction,
    spec: &BumpSpectrum,
    grid: &Grid1D,
    cond_cap: f64,
) -> Result<ResolventElement> {
    let free_part = spec.pair(k.z());
    if alpha == 0.0 {
        return Ok(ResolventElement {
            value: free_part,
            free_part,
            cond: 1.0,
            flagged: false,
            quadrature_converged: true,
        });
    }
    let f = apply_rmdx(curve, k, phi, grid)?;
    let sw = grid.sqrt_weights();
    let ft = DVector::from_fn(grid.len(), |i, _| f.values[i] * sw[i]);
    let fac = factorize(curve, alpha, k, grid)?;
    let n = grid.len();
    let (y, cond) = if curve.is_straight() {
        (ft.clone(), 1.0)
    } else {
        let dt = crate::linalg::complex_matmul(&fac.d.nystrom, &fac.t.nystrom);
        let a = DMatrix::<C>::identity(n, n) - dt * C::new(alpha, 0.0);
        let (solver, cond) = crate::linalg::cond1_estimate(&a);
        let y = solver
            .solve(&ft)
            .ok_or_else(|| Error::NonConvergence("singular system I - αDT".into()))?;
        (y, cond)
    };
    let ty = &fac.t.nystrom * y;
    let inner: C = ft.iter().zip(ty.iter()).map(|(a, b)| a * b).sum();
    Ok(ResolventElement {
        value: free_part + inner * alpha,
        free_part,
        cond,
        flagged: cond > cond_cap,
        quadrature_converged: f.converged,
    })
}
