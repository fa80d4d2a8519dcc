//! Weyl quasi-modes for points -α²/4 + k² of the essential spectrum.
//!
//! In the tubular coordinates x = Γ(s) + t n(s) the trial function is
//! ψ = e^{-α|t|/2} e^{iks} ϑ₁(s) ϑ₂(t) on the rectangle
//! [s₀-1, s₀+L₁+1] × [-L₂-1, L₂+1], and (-Δ + α²/4 - k²)ψ = ψ₁+ψ₂+ψ₃+ψ₄
//! in closed form, with the δ-interaction absorbing the jump of ∂_tψ at t = 0.

use crate::curve_geometry::Curve;
use crate::error::{ensure, Error, Result};
use crate::quadrature::GaussLegendre;
use crate::table::{format_float, Table};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

type C = Complex64;

/// Smooth step: 0 for x ≤ 0, 1 for x ≥ 1, with first and second derivatives.
pub fn smooth_step(x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if x >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    // ϑ = a/(a+b), a = e^{-1/x}, b = e^{-1/(1-x)}
    let y = 1.0 - x;
    let a = (-1.0 / x).exp();
    let b = (-1.0 / y).exp();
    let (a1, b1) = (a / (x * x), -b / (y * y));
    let a2 = a * (1.0 - 2.0 * x) / x.powi(4);
    let b2 = b * (1.0 - 2.0 * y) / y.powi(4);
    let s = a + b;
    let (s1, s2) = (a1 + b1, a2 + b2);
    let v = a / s;
    let v1 = (a1 * s - a * s1) / (s * s);
    let v2 = (a2 * s - a * s2) / (s * s) - 2.0 * s1 * v1 / s;
    (v, v1, v2)
}

/// Cutoff rising on [lo, lo+1], equal to 1 up to hi, falling on [hi, hi+1].
fn plateau(x: f64, lo: f64, hi: f64) -> (f64, f64, f64) {
    if x <= hi {
        smooth_step(x - lo)
    } else {
        let (v, d1, d2) = smooth_step(hi + 1.0 - x);
        (v, -d1, d2)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuasiMode {
    pub s0: f64,
    pub l1: f64,
    pub l2: f64,
    pub k: f64,
    pub alpha: f64,
    /// sup |𝔎| and sup |𝔎'| over s ≥ s₀ - 1.
    pub kappa0: f64,
    pub kappa1: f64,
    /// min of 1 - t𝔎(s) over the rectangle.
    pub min_jacobian: f64,
    pub norm_sq: f64,
    /// α⁻¹L₁(1 - e^{-αL₂}).
    pub norm_lower_bound: f64,
    pub order: usize,
    s_nodes: Vec<SNode>,
    t_nodes: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct SNode {
    s: f64,
    w: f64,
    kappa: f64,
    dkappa: f64,
}

fn unit_cells(a: f64, b: f64) -> Vec<(f64, f64)> {
    let n = (b - a).ceil().max(1.0) as usize;
    let h = (b - a) / n as f64;
    (0..n).map(|i| (a + i as f64 * h, a + (i + 1) as f64 * h)).collect()
}

fn curvature_sup(curve: &Curve, from: f64, to: f64) -> (f64, f64) {
    let n = ((to - from) / 0.02).ceil() as usize + 1;
    (0..=n)
        .map(|i| from + (to - from) * i as f64 / n as f64)
        .fold((0.0f64, 0.0f64), |(k0, k1), s| {
            (k0.max(curve.curvature(s).abs()), k1.max(curve.curvature_derivative(s).abs()))
        })
}

/// Quasi-mode with the smallest admissible s₀ ≥ `s0_min` (marching by 1/4)
/// such that |𝔎(s)| ≤ 1/(2(L₂+1)) for s ≥ s₀ - 1.
pub fn build_quasimode(curve: &Curve, alpha: f64, k: f64, s0_min: f64, l1: f64, l2: f64) -> Result<QuasiMode> {
    build_quasimode_with(curve, alpha, k, s0_min, l1, l2, 24)
}

pub fn build_quasimode_with(curve: &Curve, alpha: f64, k: f64, s0_min: f64, l1: f64, l2: f64, order: usize) -> Result<QuasiMode> {
    ensure(alpha > 0.0 && l1 > 0.0 && l2 > 0.0, || "α, L₁, L₂ must be positive".into())?;
    let bound = 1.0 / (2.0 * (l2 + 1.0));
    let reach = curve.half_length().max(s0_min + l1 + 2.0);
    let mut s0 = s0_min;
    let (kappa0, kappa1) = loop {
        let tail_end = reach.max(s0 + l1 + 2.0) + 20.0;
        let (k0, k1) = curvature_sup(curve, s0 - 1.0, tail_end);
        if k0 <= bound {
            break (k0, k1);
        }
        s0 += 0.25;
        if s0 > reach {
            return Err(Error::Geometry(format!(
                "no s₀ ≤ {reach} with |𝔎| ≤ {bound} on the tail; curvature does not decay"
            )));
        }
    };
    let rule = GaussLegendre::new(order);
    let mut s_nodes = Vec::new();
    for (a, b) in unit_cells(s0 - 1.0, s0 + l1 + 1.0) {
        for (s, w) in rule.on(a, b) {
            s_nodes.push(SNode {
                s,
                w,
                kappa: curve.curvature(s),
                dkappa: curve.curvature_derivative(s),
            });
        }
    }
    let mut t_nodes = Vec::new();
    for (a, b) in unit_cells(0.0, l2 + 1.0) {
        for (t, w) in rule.on(a, b) {
            t_nodes.push((-t, w));
            t_nodes.push((t, w));
        }
    }
    let mut min_jacobian = f64::INFINITY;
    for sn in &s_nodes {
        for &tt in &[-(l2 + 1.0), l2 + 1.0] {
            min_jacobian = min_jacobian.min(1.0 - tt * sn.kappa);
        }
    }
    if min_jacobian <= 0.0 {
        return Err(Error::Geometry(format!("Jacobian 1 - t𝔎 reaches {min_jacobian} on the rectangle")));
    }
    let mut mode = QuasiMode {
        s0,
        l1,
        l2,
        k,
        alpha,
        kappa0,
        kappa1,
        min_jacobian,
        norm_sq: 0.0,
        norm_lower_bound: l1 * (1.0 - (-alpha * l2).exp()) / alpha,
        order,
        s_nodes,
        t_nodes,
    };
    mode.norm_sq = mode.integrate(|m, sn, t| m.psi_at(sn.s, t).norm_sqr());
    Ok(mode)
}

/// Norms of the residual pieces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualReport {
    pub s0: f64,
    pub l1: f64,
    pub l2: f64,
    pub k: f64,
    /// ‖ψ₁+ψ₂+ψ₃+ψ₄‖ / ‖ψ‖.
    pub ratio: f64,
    /// ‖ψ_i‖ / ‖ψ‖.
    pub pieces: [f64; 4],
    pub norm: f64,
    /// c·[(𝔎₀+𝔎₁+e^{-αL₂/2})√(L₁+2) + (1+𝔎₁)] / √(L₁(1-e^{-αL₂})).
    pub bound: f64,
    pub constant: f64,
    pub within_bound: bool,
}

impl QuasiMode {
    fn cutoffs(&self, s: f64, t: f64) -> ((f64, f64, f64), (f64, f64, f64)) {
        let c1 = plateau(s, self.s0 - 1.0, self.s0 + self.l1);
        let c2 = plateau(t, -self.l2 - 1.0, self.l2);
        (c1, c2)
    }

    /// ψ(s,t).
    pub fn psi_at(&self, s: f64, t: f64) -> C {
        let ((v1, _, _), (v2, _, _)) = self.cutoffs(s, t);
        C::from_polar((-0.5 * self.alpha * t.abs()).exp() * v1 * v2, self.k * s)
    }

    fn integrate<F: Fn(&Self, &SNode, f64) -> f64 + Sync>(&self, f: F) -> f64 {
        self.s_nodes
            .par_iter()
            .map(|sn| {
                let mut acc = 0.0;
                for &(t, wt) in &self.t_nodes {
                    acc += wt * f(self, sn, t) * (1.0 - t * sn.kappa);
                }
                acc * sn.w
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum()
    }

    /// ψ₁…ψ₄ at a node.
    fn pieces(&self, sn: &SNode, t: f64) -> [C; 4] {
        let ((v1, d1, dd1), (v2, d2, dd2)) = self.cutoffs(sn.s, t);
        let (kp, dkp) = (sn.kappa, sn.dkappa);
        let d = 1.0 / (1.0 - t * kp);
        let sgn = if t > 0.0 {
            1.0
        } else if t < 0.0 {
            -1.0
        } else {
            0.0
        };
        let base = C::from_polar((-0.5 * self.alpha * t.abs()).exp(), self.k * sn.s);
        let psi = base * (v1 * v2);
        let ik = C::new(0.0, self.k);
        let p1 = psi * (self.k * self.k * (d * d - 1.0));
        let p2 = -psi * (ik * (t * dkp * d * d * d) + 0.5 * self.alpha * kp * d * sgn);
        let p3 = base * v1 * ((self.alpha * sgn + kp * d) * d2 - dd2);
        let p4 = -base * v2 * (d * d) * ((2.0 * ik + t * dkp * d) * d1 + dd1);
        [p1, p2, p3, p4]
    }

    /// Pointwise ψ₁ and ψ₂ at the quadrature nodes.
    pub fn curvature_pieces(&self) -> Vec<(C, C)> {
        let mut out = Vec::with_capacity(self.s_nodes.len() * self.t_nodes.len());
        for sn in &self.s_nodes {
            for &(t, _) in &self.t_nodes {
                let p = self.pieces(sn, t);
                out.push((p[0], p[1]));
            }
        }
        out
    }

    /// ψ on the boundary of the rectangle (must vanish).
    pub fn boundary_values(&self) -> Vec<C> {
        let (a, b) = (self.s0 - 1.0, self.s0 + self.l1 + 1.0);
        let (c, d) = (-self.l2 - 1.0, self.l2 + 1.0);
        let mut out = Vec::new();
        for i in 0..=40 {
            let u = i as f64 / 40.0;
            out.push(self.psi_at(a + u * (b - a), c));
            out.push(self.psi_at(a + u * (b - a), d));
            out.push(self.psi_at(a, c + u * (d - c)));
            out.push(self.psi_at(b, c + u * (d - c)));
        }
        out
    }

    /// Bound shape without the constant c.
    pub fn bound_shape(&self) -> f64 {
        let (a, l1, l2) = (self.alpha, self.l1, self.l2);
        ((self.kappa0 + self.kappa1 + (-0.5 * a * l2).exp()) * (l1 + 2.0).sqrt() + (1.0 + self.kappa1))
            / (l1 * (1.0 - (-a * l2).exp())).sqrt()
    }
}

/// ‖(H + α²/4 - k²)ψ‖/‖ψ‖ and the bound with constant `c`.
pub fn residual_ratio(mode: &QuasiMode, c: f64) -> ResidualReport {
    let norm = mode.norm_sq.sqrt();
    let total = mode.integrate(|m, sn, t| m.pieces(sn, t).iter().sum::<C>().norm_sqr());
    let mut pieces = [0.0; 4];
    for (i, p) in pieces.iter_mut().enumerate() {
        *p = mode.integrate(|m, sn, t| m.pieces(sn, t)[i].norm_sqr()).sqrt() / norm;
    }
    let ratio = total.sqrt() / norm;
    let bound = c * mode.bound_shape();
    ResidualReport {
        s0: mode.s0,
        l1: mode.l1,
        l2: mode.l2,
        k: mode.k,
        ratio,
        pieces,
        norm,
        bound,
        constant: c,
        within_bound: ratio <= bound,
    }
}

/// Constant c of the bound fitted on the straight line: the largest
/// ratio/shape over a reference ladder of (L₁, L₂).
pub fn line_constant(line: &Curve, alpha: f64, k: f64) -> Result<f64> {
    ensure(line.is_straight(), || "the bound constant is fitted on the straight line".into())?;
    let mut c: f64 = 0.0;
    for &(l1, l2) in &[(2.0, 1.0), (5.0, 2.0), (10.0, 4.0), (20.0, 8.0), (40.0, 8.0)] {
        let m = build_quasimode(line, alpha, k, 1.0, l1, l2)?;
        c = c.max(residual_ratio(&m, 1.0).ratio / m.bound_shape());
    }
    Ok(c)
}

/// Ratios for the ladder (s₀, L₁, L₂) → (2s₀, 4L₁, 2L₂), `steps` rungs.
pub fn quasimode_ladder(curve: &Curve, alpha: f64, k: f64, c: f64, start: (f64, f64, f64), steps: usize) -> Result<Vec<ResidualReport>> {
    let mut out = Vec::with_capacity(steps);
    let (mut s0, mut l1, mut l2) = start;
    for _ in 0..steps {
        let m = build_quasimode(curve, alpha, k, s0, l1, l2)?;
        out.push(residual_ratio(&m, c));
        s0 = 2.0 * m.s0;
        l1 *= 4.0;
        l2 *= 2.0;
    }
    Ok(out)
}

/// `s0,L1,L2,k,ratio,bound`.
pub fn ladder_csv(rows: &[ResidualReport]) -> String {
    let mut t = Table::new(&["s0", "L1", "L2", "k", "ratio", "bound"]);
    for r in rows {
        t.push(vec![
            format_float(r.s0),
            format_float(r.l1),
            format_float(r.l2),
            format_float(r.k),
            format_float(r.ratio),
            format_float(r.bound),
        ]);
    }
    t.to_csv()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_step_derivatives() {
        let h = 1e-5;
        for i in 1..20 {
            let x = i as f64 / 20.0;
            let (v, d1, d2) = smooth_step(x);
            assert!((0.0..=1.0).contains(&v));
            let fd1 = (smooth_step(x + h).0 - smooth_step(x - h).0) / (2.0 * h);
            let fd2 = (smooth_step(x + h).1 - smooth_step(x - h).1) / (2.0 * h);
            assert!((fd1 - d1).abs() < 1e-7);
            assert!((fd2 - d2).abs() < 1e-6);
        }
        assert!((smooth_step(0.5).0 - 0.5).abs() < 1e-15);
        let (v, d1, _) = plateau(3.5, 0.0, 3.0);
        let (w, e1, _) = smooth_step(0.5);
        assert!((v - w).abs() < 1e-15 && (d1 + e1).abs() < 1e-15);
    }
}
