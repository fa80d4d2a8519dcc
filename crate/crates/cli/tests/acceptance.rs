//! Acceptance criteria 1-9. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line; exits nonzero on any FAIL.

use leakywire::curve_geometry::{asymptotic_frame, build_curve, BendingProfile, Curve};
use leakywire::kernel_ops::{weighted_hs_norm, Grid1D, SpectralParameter, Window};
use leakywire::lap::{candidates_agree, default_lap_grid, detect_singular_set, lambda_cells, lap_scan, singular_set_from_conditions, LapOptions};
use leakywire::quasimode::{build_quasimode, line_constant, quasimode_ladder, residual_ratio};
use leakywire::special_functions::{bessel_k, i01, k01, oracle_k, Order};
use leakywire::spectrum::{beta4_fit, bs_max_eigenvalue, find_discrete_eigenvalues, refine_on_grid, GridSpec, SearchOptions, SpectrumStatus};
use leakywire::wavechecks::{free_decay, neumann_tail, trace_bound_integrals, MomentumBump};
use leakywire_cli::pipelines::{lap_probe, projector_residuals};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

const ALPHA: f64 = 1.0;

fn line() -> Curve {
    build_curve(BendingProfile::straight_line()).unwrap()
}

fn bump() -> Curve {
    build_curve(BendingProfile::gaussian_bump(0.5, 1.0)).unwrap()
}

type Verdict = Result<String, String>;

fn require(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_line_birman_schwinger() -> Verdict {
    let t = Instant::now();
    let c = line();
    let grid = Grid1D::with_node_count(200.0 / ALPHA, 800, 8).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for kappa in [0.5 * ALPHA, ALPHA, 2.0 * ALPHA] {
        let mu = bs_max_eigenvalue(&c, ALPHA, kappa, &grid).map_err(|e| e.to_string())?;
        let exact = ALPHA / (2.0 * kappa);
        worst = worst.max((mu - exact).abs() / exact);
    }
    let secs = t.elapsed().as_secs_f64();
    require(worst < 1e-3 && secs < 60.0, format!("max rel err {worst:.2e}, {secs:.1} s"))
}

fn c2_bound_states() -> Verdict {
    let t = Instant::now();
    let l = find_discrete_eigenvalues(&line(), ALPHA).map_err(|e| e.to_string())?;
    let c = bump();
    let r = find_discrete_eigenvalues(&c, ALPHA).map_err(|e| e.to_string())?;
    let fine = refine_on_grid(&c, &r, &r.grid.doubled(), &SearchOptions::default(), 1e-3).map_err(|e| e.to_string())?;
    let line_ok = l.status == SpectrumStatus::NoEigenvalue && l.states.is_empty();
    let one = r.states.len() == 1 && fine.states.len() == 1;
    let rel = if one {
        (r.states[0].energy - fine.states[0].energy).abs() / r.states[0].energy.abs()
    } else {
        f64::NAN
    };
    let secs = t.elapsed().as_secs_f64();
    require(
        line_ok && one && rel < 1e-6 && secs < 120.0,
        format!(
            "line: {:?}; bump: {} state(s), E = {:.10}, N vs 2N rel {rel:.1e}, {secs:.1} s",
            l.status,
            r.states.len(),
            r.states.first().map_or(f64::NAN, |s| s.energy)
        ),
    )
}

fn c3_beta4() -> Verdict {
    let t = Instant::now();
    let rep = beta4_fit(&BendingProfile::gaussian_bump(0.5, 1.0), ALPHA, &[0.10, 0.15, 0.20], 800).map_err(|e| e.to_string())?;
    let pred = rep.expansion.predicted_coefficient;
    let ratios: Vec<f64> = rep.rows.iter().filter_map(|r| r.ratio).collect();
    let dev: Vec<f64> = ratios.iter().map(|x| (x / pred - 1.0).abs()).collect();
    let ok = ratios.len() == 3
        && ratios.iter().all(|&x| x < 0.0)
        && dev.iter().all(|&d| d < 0.25)
        && dev.windows(2).all(|w| w[0] <= w[1]);
    let secs = t.elapsed().as_secs_f64();
    require(
        ok && secs < 600.0,
        format!(
            "-I² = {pred:.6e}, |ratio/(-I²) - 1| = {} for β = 0.10, 0.15, 0.20, {secs:.1} s",
            dev.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn c4_lap() -> Verdict {
    let t = Instant::now();
    let c = bump();
    let window = Window::new(-0.20, -0.05, 0.1).map_err(|e| e.to_string())?;
    let lambdas = lambda_cells(&window, 60);
    let spec = default_lap_grid(&c, &window).map_err(|e| e.to_string())?;
    let eps = vec![1e-3, 3e-4, 1e-4];
    let opts = LapOptions {
        eps: eps.clone(),
        ..LapOptions::default()
    };
    let scan = lap_scan(&c, ALPHA, &lap_probe(&c)?, &window, &lambdas, &spec, &opts).map_err(|e| e.to_string())?;
    let conds = scan.conditions_at(1e-4).ok_or("ε = 1e-4 missing")?;
    let set = singular_set_from_conditions(&lambdas, &conds, 1e-4, 20.0);
    let fine = GridSpec {
        panels: spec.panels * 3 / 2,
        ..spec
    };
    let fine_set = detect_singular_set(&c, ALPHA, &window, &lambdas, &fine, 1e-4, 20.0).map_err(|e| e.to_string())?;
    let cell = 0.15 / 60.0;
    let near = |l: f64| set.candidates.iter().any(|&x| (x - l).abs() < 1.5 * cell);
    let worst = scan
        .change_between(1e-3, 1e-4)
        .iter()
        .filter(|(l, _)| !near(*l))
        .map(|c| c.1)
        .fold(0.0, f64::max);
    let isolated = set.candidates.windows(2).all(|w| w[1] - w[0] > 1.5 * cell);
    let stable = candidates_agree(&set.candidates, &fine_set.candidates, 0.02);
    let secs = t.elapsed().as_secs_f64();
    require(
        worst < 0.05 && isolated && stable && secs < 900.0,
        format!(
            "max Im change 1e-3 -> 1e-4 {worst:.2e}, {} candidate(s), grid-stable {stable}, {secs:.1} s",
            set.candidates.len()
        ),
    )
}

fn c5_quasimode() -> Verdict {
    let t = Instant::now();
    let (l, b) = (line(), bump());
    let mut drops = Vec::new();
    for k in [0.1, 0.3, 0.6] {
        let c = line_constant(&l, ALPHA, k).map_err(|e| e.to_string())?;
        let rows = quasimode_ladder(&b, ALPHA, k, c, (2.0, 5.0, 2.0), 2).map_err(|e| e.to_string())?;
        drops.push(1.0 - rows[1].ratio / rows[0].ratio);
    }
    let mut vanish = true;
    for k in [0.1, 0.3, 0.6] {
        let m = build_quasimode(&l, ALPHA, k, 2.0, 5.0, 2.0).map_err(|e| e.to_string())?;
        let r = residual_ratio(&m, 1.0);
        vanish &= r.pieces[0] == 0.0 && r.pieces[1] == 0.0;
        vanish &= m.curvature_pieces().iter().all(|(a, b)| a.norm() == 0.0 && b.norm() == 0.0);
    }
    let secs = t.elapsed().as_secs_f64();
    require(
        drops.iter().all(|&d| d >= 0.4) && vanish && secs < 300.0,
        format!("ratio drops {drops:.3?} for k = 0.1, 0.3, 0.6; ψ₁ = ψ₂ = 0 on the line: {vanish}, {secs:.1} s"),
    )
}

fn c6_macdonald() -> Verdict {
    let amax = PI / 2.0 - 0.1;
    let grid: Vec<Complex64> = [0.05, 0.3, 1.0, 1.9, 2.1, 4.0, 9.0, 24.0]
        .iter()
        .flat_map(|&r| [-amax, -0.7, 0.0, 0.7, amax].map(|a| Complex64::from_polar(r, a)))
        .collect();
    let mut oracle: f64 = 0.0;
    let mut wronskian: f64 = 0.0;
    for &z in &grid {
        for order in [Order::Zero, Order::One] {
            let o = oracle_k(order, z).map_err(|e| e.to_string())?.value;
            let v = bessel_k(order, z).map_err(|e| e.to_string())?;
            oracle = oracle.max((o - v).norm() / o.norm());
        }
        let (i0, i1) = i01(z);
        let (k0, k1, _) = k01(z);
        wronskian = wronskian.max(((i0 * k1 + i1 * k0) * z - 1.0).norm());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_611);
    let mut violations = 0;
    for _ in 0..10_000 {
        let r = 10f64.powf(rng.gen_range(-3.0..60f64.log10()));
        let z = Complex64::from_polar(r, rng.gen_range(-amax..amax));
        for order in [Order::Zero, Order::One] {
            let v = bessel_k(order, z).map_err(|e| e.to_string())?.norm();
            let bound = bessel_k(order, Complex64::new(z.re, 0.0)).map_err(|e| e.to_string())?.re;
            if v > bound * (1.0 + 1e-13) {
                violations += 1;
            }
        }
    }
    require(
        grid.len() == 40 && oracle <= 1e-9 && wronskian <= 1e-9 && violations == 0,
        format!("oracle {oracle:.1e} on {} points, Wronskian {wronskian:.1e}, {violations} violations in 10^4 samples", grid.len()),
    )
}

fn c7_weighted_hs() -> Verdict {
    let k = SpectralParameter::imaginary(0.5 * ALPHA).map_err(|e| e.to_string())?;
    let g = Grid1D::with_node_count(30.0, 480, 8).map_err(|e| e.to_string())?;
    let l = weighted_hs_norm(&line(), &k, 3.5, &g).map_err(|e| e.to_string())?;
    let b = weighted_hs_norm(&bump(), &k, 3.5, &g).map_err(|e| e.to_string())?;
    require(
        l.value == 0.0 && b.value.is_finite() && b.value > 0.0 && b.relative_change < 0.01,
        format!("line {}, bump {:.6e} with L -> 2L change {:.1e}", l.value, b.value, b.relative_change),
    )
}

fn c8_scattering() -> Verdict {
    let t = Instant::now();
    let (idem, adj) = projector_residuals(ALPHA, 7, 4)?;
    let c = bump();
    let rho = asymptotic_frame(&c, c.half_length()).map_err(|e| e.to_string())?.rho;
    let kernel = neumann_tail(ALPHA, 4.0, rho).map_err(|e| e.to_string())?;
    let at = neumann_tail(ALPHA, 1.001 * kernel.kappa_threshold, rho).map_err(|e| e.to_string())?;
    let below = neumann_tail(ALPHA, 0.999 * kernel.kappa_threshold, rho).is_err();
    let q = at.power_h1[0];
    let conv = at.power_h1.iter().enumerate().all(|(i, &v)| v <= q.powi(i as i32 + 1) * (1.0 + 1e-12));
    let grid = Grid1D::new(8.0, 16, 8).map_err(|e| e.to_string())?;
    let traces = trace_bound_integrals(&c, ALPHA, 4.0, &grid).map_err(|e| e.to_string())?;
    let worst_delta = traces.entries().iter().map(|(_, e)| e.ladder_delta).fold(0.0, f64::max);
    let finite = traces.entries().iter().all(|(_, e)| e.bound_value.is_finite());
    let times: Vec<f64> = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0].to_vec();
    let decay = free_decay(&MomentumBump::new(0.05, 0.5, ALPHA).map_err(|e| e.to_string())?, &times).map_err(|e| e.to_string())?;
    let bounded = decay.rows.iter().all(|r| r.resolved && r.scaled <= decay.bound);
    let secs = t.elapsed().as_secs_f64();
    require(
        idem < 1e-9 && adj < 1e-9 && at.h1_first < 1.0 && below && conv && finite && worst_delta < 0.05 && bounded,
        format!(
            "projector {:.1e}, ℋ₁ {:.4} at κ threshold {:.4}, trace ladder max Δ {worst_delta:.1e}, sup t^1.5 leakage {:.3} <= {:.1}, {secs:.1} s",
            idem.max(adj),
            at.h1_first,
            kernel.kappa_threshold,
            decay.max_scaled(),
            decay.bound
        ),
    )
}

const LIGHT: &str = r#"
[curve]
family = "gaussian_bump"
theta = 0.5
sigma = 1.0

[physics]
alpha = 1.0

[numerics]
grid_n = 240
eps_ladder = [1e-3, 1e-4]
lambda_cells = 4
quasimode_k = [0.3]

[pipelines]
run = ["curve-check", "spectrum", "lap-scan", "quasimode"]
"#;

fn run_binary(config: &Path, out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_leakywire"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("all")
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&status.stderr).into_owned())
    }
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map(|d| d.filter_map(|e| e.ok().map(|e| e.path())).collect())
        .unwrap_or_default();
    v.retain(|p| p.extension().is_some_and(|e| e == "csv"));
    v.sort();
    v
}

fn c9_determinism() -> Verdict {
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-determinism");
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).map_err(|e| e.to_string())?;
    let config = root.join("light.toml");
    std::fs::write(&config, LIGHT).map_err(|e| e.to_string())?;
    let (a, b) = (root.join("a"), root.join("b"));
    run_binary(&config, &a)?;
    run_binary(&config, &b)?;
    let (fa, fb) = (csv_files(&a), csv_files(&b));
    let mut same = !fa.is_empty() && fa.len() == fb.len();
    for (x, y) in fa.iter().zip(&fb) {
        same &= x.file_name() == y.file_name() && std::fs::read(x).ok() == std::fs::read(y).ok();
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let listed = manifest["files"].as_array().map_or(0, |f| f.len());
    let written = std::fs::read_dir(&a).map_err(|e| e.to_string())?.count() - 1;
    require(same && listed == written, format!("{} CSV files byte-identical: {same}; manifest lists {listed} of {written} files", fa.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("straight-line Birman-Schwinger eigenvalue", c1_line_birman_schwinger),
        ("bound states: none on the line, one on the bump", c2_bound_states),
        ("β⁴ weak-bending asymptotics", c3_beta4),
        ("limiting absorption stability", c4_lap),
        ("essential-spectrum quasimode ladder", c5_quasimode),
        ("Macdonald function suite", c6_macdonald),
        ("weighted Hilbert-Schmidt norm", c7_weighted_hs),
        ("scattering diagnostics", c8_scattering),
        ("determinism of `all`", c9_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {}: {tag}  {name}: {detail}", i + 1);
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
