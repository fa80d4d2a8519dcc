//! Dense helpers: Lanczos for the top of a symmetric spectrum and a
//! Hager–Higham estimate of the 1-norm condition number of an LU-factored
//! complex matrix.

use nalgebra::{DMatrix, DVector, Dyn, SymmetricEigen, LU};
use num_complex::Complex64;

/// Leading eigenpairs of a symmetric operator.
#[derive(Debug, Clone)]
pub struct TopEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<DVector<f64>>,
    pub residuals: Vec<f64>,
}

/// Largest `wanted` eigenvalues of the symmetric operator `apply` by Lanczos
/// with full reorthogonalization, started from the constant vector.
pub fn lanczos_top<F>(apply: F, n: usize, wanted: usize, max_iter: usize, tol: f64) -> TopEigen
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let wanted = wanted.min(n).max(1);
    let max_iter = max_iter.min(n).max(wanted);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(max_iter);
    let mut alpha = Vec::with_capacity(max_iter);
    let mut beta: Vec<f64> = Vec::with_capacity(max_iter);
    let mut q = DVector::from_fn(n, |i, _| 1.0 + 0.01 * ((i as f64) * 0.731).sin());
    q /= q.norm();
    let mut result = None;
    for m in 0..max_iter {
        let mut w = apply(&q);
        let a = q.dot(&w);
        w.axpy(-a, &q, 1.0);
        if let Some(prev) = basis.last() {
            w.axpy(-beta[m - 1], prev, 1.0);
        }
        for _ in 0..2 {
            for b in basis.iter().chain(std::iter::once(&q)) {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
        }
        basis.push(q.clone());
        alpha.push(a);
        let b = w.norm();
        let size = m + 1;
        if size >= wanted && (size % 5 == 0 || b < 1e-14 || size == max_iter) {
            let t = DMatrix::from_fn(size, size, |i, j| {
                if i == j {
                    alpha[i]
                } else if i + 1 == j {
                    beta[i]
                } else if j + 1 == i {
                    beta[j]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..size).collect();
            order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
            let top: Vec<usize> = order.into_iter().take(wanted).collect();
            let res: Vec<f64> = top
                .iter()
                .map(|&j| (b * eig.eigenvectors[(size - 1, j)]).abs())
                .collect();
            let scale = top
                .iter()
                .map(|&j| eig.eigenvalues[j].abs())
                .fold(1e-300, f64::max);
            let done = res.iter().all(|&r| r <= tol * scale) || b < 1e-14 || size == max_iter;
            if done {
                let vectors = top
                    .iter()
                    .map(|&j| {
                        let mut v = DVector::zeros(n);
                        for (i, bv) in basis.iter().enumerate() {
                            v.axpy(eig.eigenvectors[(i, j)], bv, 1.0);
                        }
                        v
                    })
                    .collect();
                result = Some(TopEigen {
                    values: top.iter().map(|&j| eig.eigenvalues[j]).collect(),
                    vectors,
                    residuals: res,
                });
                break;
            }
        }
        if b < 1e-14 {
            break;
        }
        beta.push(b);
        q = w / b;
    }
    result.unwrap_or_else(|| TopEigen {
        values: vec![],
        vectors: vec![],
        residuals: vec![],
    })
}

/// Largest eigenvalue of a dense symmetric matrix.
pub fn max_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n <= 64 {
        return SymmetricEigen::new(m.clone())
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
    }
    let top = lanczos_top(|x| m * x, n, 1, 200, 1e-13);
    top.values[0]
}

/// Complex product through four real products (the real kernel is blocked
/// and vectorized, the complex one is not).
pub fn complex_matmul(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    re.zip_map(&im, Complex64::new)
}

/// 1-norm of a complex matrix.
pub fn norm1(a: &DMatrix<Complex64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves with A and A^H from one LU factorization.
pub struct LuSolver {
    lu: LU<Complex64, Dyn, Dyn>,
    l_adj: DMatrix<Complex64>,
    u_adj: DMatrix<Complex64>,
}

impl LuSolver {
    pub fn new(a: DMatrix<Complex64>) -> Self {
        let lu = LU::new(a);
        let l_adj = lu.l().adjoint();
        let u_adj = lu.u().adjoint();
        Self { lu, l_adj, u_adj }
    }

    pub fn is_invertible(&self) -> bool {
        self.lu.is_invertible()
    }

    pub fn solve(&self, b: &DVector<Complex64>) -> Option<DVector<Complex64>> {
        self.lu.solve(b)
    }

    /// Solves A^H y = c.
    pub fn solve_adjoint(&self, c: &DVector<Complex64>) -> Option<DVector<Complex64>> {
        // P A = L U  =>  A^H = U^H L^H P
        let z = self.u_adj.solve_lower_triangular(c)?;
        let mut w = self.l_adj.solve_upper_triangular(&z)?;
        self.lu.p().inv_permute_rows(&mut w);
        Some(w)
    }
}

/// Hager–Higham estimate of ||A^{-1}||_1.
pub fn inverse_norm1_estimate(solver: &LuSolver, n: usize) -> f64 {
    let mut x = DVector::from_element(n, Complex64::new(1.0 / n as f64, 0.0));
    let mut est = 0.0;
    for iter in 0..6 {
        let y = match solver.solve(&x) {
            Some(y) => y,
            None => return f64::INFINITY,
        };
        let ny: f64 = y.iter().map(|z| z.norm()).sum();
        if iter > 0 && ny <= est {
            est = est.max(ny);
            break;
        }
        est = ny;
        let xi = y.map(|z| if z.norm() > 0.0 { z / z.norm() } else { Complex64::new(1.0, 0.0) });
        let z = match solver.solve_adjoint(&xi) {
            Some(z) => z,
            None => return f64::INFINITY,
        };
        let (jmax, zmax) = z
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (j, v)| if v.norm() > acc.1 { (j, v.norm()) } else { acc });
        let ztx: f64 = z.iter().zip(x.iter()).map(|(a, b)| (a.conj() * b).re).sum();
        if zmax <= ztx && iter > 0 {
            break;
        }
        x = DVector::zeros(n);
        x[jmax] = Complex64::new(1.0, 0.0);
    }
    // alternating-sign safeguard vector
    let alt = DVector::from_fn(n, |i, _| {
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        Complex64::new(s * (1.0 + i as f64 / (n as f64 - 1.0).max(1.0)), 0.0)
    });
    if let Some(y) = solver.solve(&alt) {
        let ny: f64 = y.iter().map(|z| z.norm()).sum();
        est = est.max(2.0 * ny / (3.0 * n as f64));
    }
    est
}

/// Estimated 1-norm condition number of A.
pub fn cond1_estimate(a: &DMatrix<Complex64>) -> (LuSolver, f64) {
    let n = a.nrows();
    let an = norm1(a);
    let solver = LuSolver::new(a.clone());
    if !solver.is_invertible() {
        return (solver, f64::INFINITY);
    }
    let inv = inverse_norm1_estimate(&solver, n);
    (solver, an * inv)
}
