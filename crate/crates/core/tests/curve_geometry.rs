use leakywire::curve_geometry::*;
use proptest::prelude::*;
use std::f64::consts::PI;

fn bump() -> Curve {
    build_curve(BendingProfile::gaussian_bump(0.5, 1.0)).unwrap()
}

#[test]
fn positions_match_independent_quadrature() {
    let c = bump();
    for &s in &[-25.0, -4.2, -0.7, 0.0, 0.31, 2.5, 17.0, 29.75] {
        let a = c.point(s);
        let b = point_by_quadrature(&c, s);
        assert!((a[0] - b[0]).hypot(a[1] - b[1]) < 1e-10, "s = {s}");
    }
    // points beyond the cache continue the same integral
    let far = c.point(40.0);
    let q = point_by_quadrature(&c, 40.0);
    assert!((far[0] - q[0]).hypot(far[1] - q[1]) < 1e-10);
}

#[test]
fn unit_speed_and_curvature_formula() {
    let c = build_curve(BendingProfile::smoothed_corner(1.2, 0.7)).unwrap();
    for i in 0..400 {
        let s = -20.0 + 0.1 * i as f64;
        let t = c.tangent(s);
        assert!((t[0].hypot(t[1]) - 1.0).abs() < 1e-12);
        let (_, d1, _) = c.angle(s);
        assert!((c.curvature(s) - d1).abs() < 1e-13);
        // Γ''' by central differences of Γ''
        let h = 1e-5;
        let g2p = c.second(s + h);
        let g2m = c.second(s - h);
        let g3 = c.third(s);
        for k in 0..2 {
            let fd = (g2p[k] - g2m[k]) / (2.0 * h);
            assert!((fd - g3[k]).abs() < 1e-6);
        }
    }
}

#[test]
fn homotopy_endpoints() {
    let line = build_curve(BendingProfile::straight_line()).unwrap();
    let flat = build_curve(BendingProfile::gaussian_bump(0.5, 1.0).with_beta(0.0)).unwrap();
    let full = build_curve(BendingProfile::gaussian_bump(0.5, 1.0).with_beta(1.0)).unwrap();
    let half = build_curve(BendingProfile::gaussian_bump(0.5, 1.0).with_beta(0.5)).unwrap();
    let b = bump();
    for i in 0..121 {
        let s = -6.0 + 0.1 * i as f64;
        let p = flat.point(s);
        let q = line.point(s);
        assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
        let p = full.point(s);
        let q = b.point(s);
        assert!((p[0] - q[0]).abs() < 1e-15 && (p[1] - q[1]).abs() < 1e-15);
        let expect = 0.5 * (-2.0 * s * 0.5 * (-s * s).exp());
        assert!((half.curvature(s) - expect).abs() < 1e-14);
    }
}

#[test]
fn bump_frame() {
    let c = bump();
    let f = asymptotic_frame(&c, 30.0).unwrap();
    assert_eq!(f.v_plus, [1.0, 0.0]);
    assert_eq!(f.v_minus, [1.0, 0.0]);
    assert!(f.rho > 0.9 && f.rho < 1.0, "rho = {}", f.rho);
    let gap = (f.a_plus[0] - f.a_minus[0]).hypot(f.a_plus[1] - f.a_minus[1]);
    // a+ - a- = ∫ (cos φ - 1, sin φ) du over the whole line
    let (dx, _, _) = leakywire::quadrature::adaptive(|u| (0.5 * (-u * u).exp()).cos() - 1.0, -12.0, 12.0, 1e-15, 1e-14);
    let (dy, _, _) = leakywire::quadrature::adaptive(|u| (0.5 * (-u * u).exp()).sin(), -12.0, 12.0, 1e-15, 1e-14);
    assert!((gap - dx.hypot(dy)).abs() < 1e-10);
    assert!(gap > 0.1);
    assert!(f.phi_plus.windows(2).all(|w| w[1] <= w[0]));
    assert!(f.phi_minus.windows(2).all(|w| w[1] <= w[0]));
    // ν+ vanishes at infinity
    assert!(f.nu_plus_norm(30.0) < 1e-12);
}

#[test]
fn line_frame() {
    let c = build_curve(BendingProfile::straight_line()).unwrap();
    let f = asymptotic_frame(&c, 30.0).unwrap();
    assert_eq!(f.rho, 1.0);
    assert!(f.nu_plus.iter().chain(&f.nu_minus).all(|p| p[0].abs() < 1e-12 && p[1].abs() < 1e-12));
    assert!(f.phi_plus.iter().chain(&f.phi_minus).all(|&v| v == 0.0));
}

#[test]
fn corner_frame() {
    let c = build_curve(BendingProfile::smoothed_corner(PI / 2.0, 1.0)).unwrap();
    let f = asymptotic_frame(&c, 30.0).unwrap();
    assert!((f.v_plus[0]).abs() < 1e-15 && (f.v_plus[1] - 1.0).abs() < 1e-15);
    assert_eq!(f.v_minus, [1.0, 0.0]);
    assert!((f.rho - (PI / 4.0).cos()).abs() < 1e-12);
}

#[test]
fn assumption_reports() {
    let line = build_curve(BendingProfile::straight_line()).unwrap();
    let r = check_assumptions(&line, 3.5, 1.0).unwrap();
    assert!(r.all_passed());
    assert_eq!(r.assumption_1.value, 0.0);
    assert_eq!(r.assumption_2.value, 1.0);
    assert_eq!(r.assumption_3.value, 0.0);

    let r = check_assumptions(&bump(), 3.5, 1.0).unwrap();
    assert!(r.all_passed(), "{}", r.to_json());
    assert!(r.assumption_1.value.is_finite() && r.assumption_1.value > 0.0);

    let slow = CurvatureTable {
        s: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
        curvature: vec![0.1, 0.2, 0.3, 0.2, 0.1],
        tail_exponent: 1.0,
    };
    let c = build_curve(BendingProfile::custom_table(slow)).unwrap();
    let r = check_assumptions(&c, 3.5, 1.0).unwrap();
    assert!(!r.assumption_1.passed);
    assert!(asymptotic_frame(&c, 30.0).is_err());

    // a finite but too slowly decaying tail is caught by the ladder
    let marginal = CurvatureTable {
        s: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
        curvature: vec![0.1, 0.2, 0.3, 0.2, 0.1],
        tail_exponent: 3.0,
    };
    let c = build_curve(BendingProfile::custom_table(marginal)).unwrap();
    let r = check_assumptions(&c, 3.5, 1.0).unwrap();
    assert!(!r.assumption_1.passed, "{}", r.to_json());
    assert!(check_assumptions(&c, 2.5, 1.0).is_err());
}

#[test]
fn ei_condition() {
    let line = build_curve(BendingProfile::straight_line()).unwrap();
    assert!(check_ei_condition(&line, 0.3, 1.0, 0.5).unwrap().holds);
    let c = bump();
    let f = asymptotic_frame(&c, 30.0).unwrap();
    let (d, mu) = ei_scale_recipe(&f, 0.5);
    assert!(check_ei_condition(&c, d, mu, 0.5).unwrap().holds);
    let bad = check_ei_condition(&c, 1e-6, mu, 0.5).unwrap();
    assert!(!bad.holds);
    assert!(bad.worst_pair.0.abs() < 3.0 && bad.worst_pair.1.abs() < 3.0, "{bad:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn chord_bounds(theta in -1.5f64..1.5, sigma in 0.5f64..2.0, s in -20.0f64..20.0, t in -20.0f64..20.0) {
        let c = build_curve_with(BendingProfile::gaussian_bump(theta, sigma), 25.0).unwrap();
        let rho = chord_ratio_minimum(&c, 25.0).0;
        let d = c.chord(s, t);
        prop_assert!(d <= (s - t).abs() + 1e-12);
        prop_assert!(rho * (s - t).abs() <= d + 1e-9);
    }

    #[test]
    fn chord_ratio_is_rigid_invariant(theta in -1.5f64..1.5, shift in -3.0f64..3.0) {
        // moving the bump along the curve is a rigid motion plus reparametrization
        let a = build_curve_with(BendingProfile::gaussian_bump(theta, 1.0), 20.0).unwrap();
        let b = build_curve_with(BendingProfile::gaussian_bump(theta, 1.0).with_center(shift), 20.0).unwrap();
        let d1 = a.chord(-1.0, 2.0);
        let d2 = b.chord(-1.0 + shift, 2.0 + shift);
        prop_assert!((d1 - d2).abs() < 1e-12);
    }
}
