use leakywire::curve_geometry::*;
use leakywire::kernel_ops::*;
use leakywire::lap::*;
use leakywire::spectrum::GridSpec;
use num_complex::Complex64 as C;
use proptest::prelude::*;

fn window() -> Window {
    Window::new(-0.2, -0.05, 0.1).unwrap()
}

fn probe(c: &Curve) -> TestFunction {
    let p = c.point(0.0);
    let t = c.tangent(0.0);
    TestFunction::new([p[0] - t[1], p[1] + t[0]], 0.5, 1.0).unwrap()
}

#[test]
fn multiplier_limits() {
    let k = SpectralParameter::from_energy(C::new(-0.1, 0.01)).unwrap();
    for &p in &[0.0, 0.3, 2.0] {
        let m = multiplier_a(&k, p, 0.0);
        assert_eq!(m.value, C::new(1.0, 0.0));
    }
    let m = multiplier_a(&k, 1e3, 1.0);
    // A - 1 = α/(2√(p²-k²) - α) = α/(2p) + O(p^{-2})
    let dev = (m.value - 1.0).norm();
    assert!((dev - 1.0 / 2e3).abs() < 1.0 / 2e6, "{dev}");
    assert!(dev < 1.0 / (2e3 - 1.0));
    assert!(m.agreement < 1e-12);
}

#[test]
fn multiplier_near_threshold() {
    // k² = -α²/4 + iε: p₀² = iε, so the pole coefficient α²/(4p₀) grows like
    // ε^{-1/2} and A(k, 0) = -α²/(2p₀²) + O(1) like ε^{-1}
    let alpha = 1.0;
    let mut prev: Option<(f64, f64)> = None;
    for &eps in &[1e-4, 1e-5, 1e-6] {
        let k = SpectralParameter::from_energy(C::new(-0.25, eps)).unwrap();
        let m = multiplier_a(&k, 0.0, alpha);
        let coeff = (alpha * alpha / (4.0 * m.p0)).norm();
        assert!((coeff * eps.sqrt() - 0.25).abs() < 1e-3);
        assert!((m.value.norm() * eps - 0.5).abs() < 1e-2, "{}", m.value);
        if let Some((c0, a0)) = prev {
            assert!((coeff / c0 - 10f64.sqrt()).abs() < 1e-3);
            assert!((m.value.norm() / a0 - 10.0).abs() < 1e-2);
        }
        prev = Some((coeff, m.value.norm()));
    }
    let k = SpectralParameter::from_energy(C::new(-0.1, 0.01)).unwrap();
    let m = multiplier_a(&k, 0.0, alpha);
    assert!(!m.near_pole);
    let k = SpectralParameter::from_energy(C::new(-0.1, 1e-20)).unwrap();
    let p0 = multiplier_a(&k, 0.0, alpha).p0.re;
    assert!(multiplier_a(&k, p0, alpha).near_pole);
}

#[test]
fn window_bounds_and_branch_along_ladders() {
    let w = window();
    for l in lambda_cells(&w, 12) {
        let mut prev: Option<C> = None;
        for &e in &EPS_LADDER {
            let k = SpectralParameter::in_window(C::new(l, e), w).unwrap();
            assert!(k.k.im > 0.0);
            assert_eq!(k.window_bounds_hold(), Some(true));
            if let Some(p) = prev {
                assert!((k.k - p).norm() < 0.2);
            }
            prev = Some(k.k);
        }
    }
}

#[test]
fn line_boundary_values_settle() {
    let c = build_curve(BendingProfile::straight_line()).unwrap();
    let w = window();
    let spec = default_lap_grid(&c, &w).unwrap();
    let opts = LapOptions {
        eps: vec![1e-2, 1e-3, 1e-4],
        ..Default::default()
    };
    let lambdas = [-0.18, -0.12, -0.07];
    let s = lap_scan(&c, 1.0, &probe(&c), &w, &lambdas, &spec, &opts).unwrap();
    for (_, ch) in s.change_between(1e-3, 1e-4) {
        assert!(ch < 0.05);
    }
    for cell in &s.cells {
        assert!(cell.value.im > 0.0);
        assert_eq!(cell.cond, 1.0);
        assert_eq!(cell.flag, CellFlag::Ok);
        assert!(cell.window_bounds_hold);
    }
    assert!(s.summaries().iter().all(|x| x.cauchy));
    let csv = s.to_csv();
    assert!(csv.starts_with("lambda,eps,im_matrix_element,cond,flag\n"));
    assert_eq!(csv.lines().count(), 10);
}

#[test]
fn bump_scan_is_bounded_and_edge_cells_are_flagged() {
    let c = build_curve(BendingProfile::gaussian_bump(0.5, 1.0)).unwrap();
    let w = Window::new(-0.249, -0.05, 0.1).unwrap();
    let spec = default_lap_grid(&c, &window()).unwrap();
    let opts = LapOptions {
        eps: vec![1e-2, 1e-3, 1e-4],
        ..Default::default()
    };
    let s = lap_scan(&c, 1.0, &probe(&c), &w, &[-0.2485, -0.15], &spec, &opts).unwrap();
    assert!(s.ladder(0).iter().all(|x| x.flag == CellFlag::Edge));
    assert!(s.ladder(1).iter().all(|x| x.flag == CellFlag::Ok));
    // threshold growth
    assert!(s.ladder(0)[2].value.im > s.ladder(1)[2].value.im);
    let sum = &s.summaries()[1];
    assert!(sum.cauchy && sum.last_change < 0.05);
    assert!(s.cells.iter().all(|x| x.value.im > 0.0 && x.value.norm().is_finite()));
}

#[test]
fn singular_sets() {
    let w = window();
    let lambdas = lambda_cells(&w, 8);
    let line = build_curve(BendingProfile::straight_line()).unwrap();
    let spec = default_lap_grid(&line, &w).unwrap();
    let s = detect_singular_set(&line, 1.0, &w, &lambdas, &spec, 1e-3, 20.0).unwrap();
    assert!(s.candidates.is_empty());
    assert_eq!(s.sensitivity.len(), 2);

    let bump = build_curve(BendingProfile::gaussian_bump(0.5, 1.0)).unwrap();
    let spec = default_lap_grid(&bump, &w).unwrap();
    let a = detect_singular_set(&bump, 1.0, &w, &lambdas, &spec, 1e-3, 20.0).unwrap();
    let fine = GridSpec {
        panels: spec.panels * 3 / 2,
        ..spec
    };
    let b = detect_singular_set(&bump, 1.0, &w, &lambdas, &fine, 1e-3, 20.0).unwrap();
    assert!(candidates_agree(&a.candidates, &b.candidates, 0.02));
    assert!(a.conditions.iter().all(|c| c.is_finite() && *c >= 1.0));
    let json: SingularSet = serde_json::from_str(&a.to_json()).unwrap();
    assert_eq!(json.candidates, a.candidates);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn decomposition_agrees(lambda in -0.24f64..-0.01, eps in 1e-4f64..0.1, p in -5.0f64..5.0, alpha in 0.2f64..2.0) {
        let lambda = lambda * alpha * alpha * 4.0 * 0.25;
        let k = SpectralParameter::from_energy(C::new(lambda, eps)).unwrap();
        let m = multiplier_a(&k, p, alpha);
        prop_assume!(!m.near_pole);
        prop_assert!(m.agreement < 1e-12, "{}", m.agreement);
        prop_assert!(m.p0.re > 0.0);
    }
}
