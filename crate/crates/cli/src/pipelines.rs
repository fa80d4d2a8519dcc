//! The six pipelines. Each returns its artifacts as in-memory text plus a
//! set of named pass/fail checks; the runner owns all file output.

use crate::config::{Pipeline, RunConfig};
use leakywire::curve_geometry::{asymptotic_frame, build_curve, check_assumptions, BendingProfile, Curve};
use leakywire::kernel_ops::{Grid1D, TestFunction, Window};
use leakywire::lap::{candidates_agree, default_lap_grid, detect_singular_set, lambda_cells, lap_scan, singular_set_from_conditions, LapOptions};
use leakywire::quasimode::{ladder_csv, line_constant, quasimode_ladder};
use leakywire::spectrum::{beta4_fit, find_discrete_eigenvalues_with, refine_on_grid, GridSpec, SearchOptions};
use leakywire::table::{format_float, Table};
use leakywire::wavechecks::{free_decay, neumann_tail, trace_bound_integrals, MomentumBump, PlanarGrid, ProjectorRep, SeparableFn};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::collections::BTreeMap;

pub type Checks = BTreeMap<String, bool>;

#[derive(Debug, Default)]
pub struct Outcome {
    /// (file name, contents) in write order.
    pub files: Vec<(String, String)>,
    pub checks: Checks,
    pub summary: String,
}

impl Outcome {
    fn file(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body));
    }

    fn check(&mut self, name: &str, ok: bool) {
        self.checks.insert(name.to_string(), ok);
    }
}

type PResult = Result<Outcome, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

pub fn run_pipeline(p: Pipeline, cfg: &RunConfig) -> PResult {
    let curve = build_curve(cfg.profile()).map_err(err)?;
    match p {
        Pipeline::CurveCheck => curve_check(cfg, &curve),
        Pipeline::Spectrum => spectrum(cfg, &curve),
        Pipeline::Asymptotics => asymptotics(cfg, &curve),
        Pipeline::LapScan => lap(cfg, &curve),
        Pipeline::Quasimode => quasimode(cfg, &curve),
        Pipeline::ScatterChecks => scatter(cfg, &curve),
    }
}

/// Spectral grid from the config: explicit truncation or the curve default.
pub fn spectral_grid(cfg: &RunConfig, curve: &Curve) -> Result<GridSpec, String> {
    let n = &cfg.numerics;
    let half_length = match n.truncation {
        Some(l) => l,
        None => leakywire::spectrum::default_grid(curve, cfg.physics.alpha, n.grid_n).map_err(err)?.half_length,
    };
    Ok(GridSpec {
        half_length,
        panels: n.grid_n.div_ceil(n.order).max(1),
        order: n.order,
    })
}

fn curve_check(cfg: &RunConfig, curve: &Curve) -> PResult {
    let mut out = Outcome::default();
    let report = check_assumptions(curve, cfg.numerics.delta, 1.0).map_err(err)?;
    let mut json = report.to_json();
    json.push('\n');
    out.file("curve_check.json", json);
    let l = curve.half_length();
    let mut t = Table::new(&["s", "x", "y", "curvature"]);
    for i in 0..=400 {
        let s = -l + 2.0 * l * i as f64 / 400.0;
        let p = curve.point(s);
        t.push_numbers(&[s, p[0], p[1], curve.curvature(s)]);
    }
    out.file("curve_samples.csv", t.to_csv());
    out.check("assumptions", report.all_passed());
    out.summary = format!("assumptions {}", if report.all_passed() { "hold" } else { "violated" });
    Ok(out)
}

fn spectrum(cfg: &RunConfig, curve: &Curve) -> PResult {
    let mut out = Outcome::default();
    let alpha = cfg.physics.alpha;
    let spec = spectral_grid(cfg, curve)?;
    let opts = SearchOptions::default();
    let coarse = find_discrete_eigenvalues_with(curve, alpha, &spec, &opts).map_err(err)?;
    let fine = refine_on_grid(curve, &coarse, &spec.doubled(), &opts, 1e-3).map_err(err)?;
    let tol = cfg.numerics.tolerances.grid_doubling;
    let mut t = Table::new(&["index", "energy", "kappa", "residual", "energy_2n", "relative_change"]);
    let mut stable = coarse.states.len() == fine.states.len();
    for (i, (a, b)) in coarse.states.iter().zip(&fine.states).enumerate() {
        let rel = (a.energy - b.energy).abs() / a.energy.abs();
        stable &= rel < tol;
        t.push(vec![
            i.to_string(),
            format_float(a.energy),
            format_float(a.kappa),
            format_float(a.residual),
            format_float(b.energy),
            format_float(rel),
        ]);
    }
    out.file("eigenvalues.csv", t.to_csv());
    let strip = |r: &leakywire::spectrum::SpectralResult| {
        let mut v = serde_json::to_value(r).expect("spectral result serializes");
        if let Some(states) = v["states"].as_array_mut() {
            for s in states {
                s.as_object_mut().map(|o| o.remove("eigenvector"));
            }
        }
        v
    };
    out.file(
        "spectrum.json",
        pretty(&json!({
            "status": coarse.status,
            "count": coarse.states.len(),
            "grid_n": strip(&coarse),
            "grid_2n": strip(&fine),
            "stable": stable,
            "tolerance": tol,
        })),
    );
    out.check("grid_doubling_stable", stable);
    out.summary = match coarse.states.first() {
        None => "no eigenvalue".into(),
        Some(s) => format!("{} eigenvalue(s), lowest E = {:.12}", coarse.states.len(), s.energy),
    };
    Ok(out)
}

fn asymptotics(cfg: &RunConfig, curve: &Curve) -> PResult {
    let mut out = Outcome::default();
    let n = &cfg.numerics;
    let rep = beta4_fit(&cfg.profile(), cfg.physics.alpha, &n.betas, n.grid_n).map_err(err)?;
    out.file("beta4.csv", rep.to_csv());
    let mut v = serde_json::to_value(&rep).expect("β⁴ report serializes");
    v.as_object_mut().map(|o| o.remove("rows"));
    out.file("bending.json", pretty(&v));
    let pred = rep.expansion.predicted_coefficient;
    let mut rows: Vec<(f64, f64)> = rep.rows.iter().filter_map(|r| r.ratio.map(|x| (r.beta, x))).collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let dev: Vec<f64> = rows.iter().map(|(_, x)| (x / pred - 1.0).abs()).collect();
    if curve.is_straight() {
        out.check("line_has_no_bound_states", rows.is_empty());
        out.summary = "straight line, no β⁴ regime".into();
        return Ok(out);
    }
    let all = rows.len() == rep.rows.len() && !rows.is_empty();
    out.check("ratios_negative", all && rows.iter().all(|r| r.1 < 0.0));
    out.check("within_25_percent", all && pred < 0.0 && dev.iter().all(|&d| d < 0.25));
    out.check("deviation_shrinks", all && dev.windows(2).all(|w| w[0] <= w[1]));
    out.summary = format!("-I² = {}, {} of {} β solved", format_float(pred), rows.len(), rep.rows.len());
    Ok(out)
}

/// Probe centred one unit off the curve at s = 0.
pub fn lap_probe(curve: &Curve) -> Result<TestFunction, String> {
    let p = curve.point(0.0);
    let t = curve.tangent(0.0);
    TestFunction::new([p[0] - t[1], p[1] + t[0]], 0.5, 1.0).map_err(err)
}

fn lap(cfg: &RunConfig, curve: &Curve) -> PResult {
    let mut out = Outcome::default();
    let n = &cfg.numerics;
    let tol = &n.tolerances;
    let alpha = cfg.physics.alpha;
    let [l1, l2] = n.lambda_window;
    let window = Window::new(l1, l2, n.eps0).map_err(err)?;
    let lambdas = lambda_cells(&window, n.lambda_cells);
    let spec = default_lap_grid(curve, &window).map_err(err)?;
    let opts = LapOptions {
        eps: n.eps_ladder.clone(),
        cond_cap: tol.cond_cap,
        edge: 0.01,
    };
    let scan = lap_scan(curve, alpha, &lap_probe(curve)?, &window, &lambdas, &spec, &opts).map_err(err)?;
    out.file("lap_scan.csv", scan.to_csv());

    let eps_min = *n.eps_ladder.last().expect("validated non-empty");
    let conds = scan.conditions_at(eps_min).expect("ε is on the ladder");
    let set = singular_set_from_conditions(&lambdas, &conds, eps_min, n.singular_threshold);
    let fine = GridSpec {
        panels: spec.panels * 3 / 2,
        ..spec
    };
    let fine_set = detect_singular_set(curve, alpha, &window, &lambdas, &fine, eps_min, n.singular_threshold).map_err(err)?;
    let grid_stable = candidates_agree(&set.candidates, &fine_set.candidates, tol.candidate_match);
    let cell = (l2 - l1) / n.lambda_cells as f64;
    let isolated = set.candidates.windows(2).all(|w| w[1] - w[0] > 1.5 * cell);

    let m = n.eps_ladder.len();
    let changes = if m >= 2 { scan.change_between(n.eps_ladder[m - 2], eps_min) } else { vec![] };
    let near = |l: f64| set.candidates.iter().any(|&c| (c - l).abs() < 1.5 * cell);
    let worst = changes.iter().filter(|(l, _)| !near(*l)).map(|c| c.1).fold(0.0, f64::max);
    let summaries = scan.summaries();
    out.file(
        "lap_summary.json",
        pretty(&json!({
            "alpha": alpha,
            "window": window,
            "grid": spec,
            "eps": n.eps_ladder,
            "ladders": summaries,
            "max_change_non_candidate": worst,
            "change_tolerance": tol.lap_change,
            "singular_set": set,
            "singular_set_fine_grid": fine_set.candidates,
            "candidates_grid_stable": grid_stable,
            "candidates_isolated": isolated,
        })),
    );
    out.check("im_part_stable", worst < tol.lap_change);
    out.check("candidates_grid_stable", grid_stable);
    out.check("candidates_isolated", isolated);
    out.summary = format!(
        "{} cells, max Im change {:.3e}, {} singular candidate(s)",
        lambdas.len(),
        worst,
        set.candidates.len()
    );
    Ok(out)
}

fn quasimode(cfg: &RunConfig, curve: &Curve) -> PResult {
    let mut out = Outcome::default();
    let n = &cfg.numerics;
    let alpha = cfg.physics.alpha;
    let line = build_curve(BendingProfile::straight_line()).map_err(err)?;
    let [s0, l1, l2] = n.quasimode_start;
    let keep = 1.0 - n.tolerances.quasimode_drop;
    let mut csv = String::new();
    let mut drops = true;
    let mut vanish = true;
    for &k in &n.quasimode_k {
        let c = line_constant(&line, alpha, k).map_err(err)?;
        let rows = quasimode_ladder(curve, alpha, k, c, (s0, l1, l2), n.quasimode_steps).map_err(err)?;
        drops &= rows.windows(2).all(|w| w[1].ratio <= keep * w[0].ratio);
        if curve.is_straight() {
            vanish &= rows.iter().all(|r| r.pieces[0] == 0.0 && r.pieces[1] == 0.0);
        }
        let body = ladder_csv(&rows);
        if csv.is_empty() {
            csv = body;
        } else {
            csv.extend(body.lines().skip(1).map(|l| format!("{l}\n")));
        }
    }
    out.file("quasimode.csv", csv);
    out.check("ladder_drops", drops);
    if curve.is_straight() {
        out.check("line_curvature_terms_vanish", vanish);
    }
    out.summary = format!("{} k value(s) × {} rung(s)", n.quasimode_k.len(), n.quasimode_steps);
    Ok(out)
}

fn random_separable(grid: &PlanarGrid, rng: &mut ChaCha8Rng) -> SeparableFn {
    let mut v = |n: usize| (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    SeparableFn { f1: v(grid.n1), f2: v(grid.n2) }
}

/// Largest idempotence and self-adjointness residuals over seeded random inputs.
pub fn projector_residuals(alpha: f64, seed: u64, samples: usize) -> Result<(f64, f64), String> {
    let grid = PlanarGrid { n1: 1024, h1: 0.5, n2: 400, h2: 0.05 };
    let p = ProjectorRep::new(alpha, grid).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut idem, mut adj) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let u = random_separable(&grid, &mut rng);
        let v = random_separable(&grid, &mut rng);
        let nu = p.inner(&u, &u).re.sqrt();
        let nv = p.inner(&v, &v).re.sqrt();
        let pu = p.apply(&u).map_err(err)?.value;
        let ppu = p.apply(&pu).map_err(err)?.value;
        let pv = p.apply(&v).map_err(err)?.value;
        idem = idem.max(p.distance(&ppu, &pu) / nu);
        adj = adj.max((p.inner(&pu, &v) - p.inner(&u, &pv)).norm() / (nu * nv));
    }
    Ok((idem, adj))
}

fn scatter(cfg: &RunConfig, curve: &Curve) -> PResult {
    let mut out = Outcome::default();
    let n = &cfg.numerics;
    let tol = &n.tolerances;
    let alpha = cfg.physics.alpha;

    let (idem, adj) = projector_residuals(alpha, n.seed, 4)?;
    let rho = asymptotic_frame(curve, curve.half_length()).map_err(err)?.rho;
    let kernel = neumann_tail(alpha, n.trace_kappa, rho);
    let kernel_json = match &kernel {
        Ok(k) => {
            let q = k.power_h1[0];
            let conv = k.power_h1.iter().enumerate().all(|(i, &v)| v <= q.powi(i as i32 + 1) * (1.0 + 1e-12));
            out.check("neumann_contraction", k.h1_first < 1.0);
            out.check("convolution_powers", conv);
            json!({
                "kappa": k.kappa,
                "rho": k.rho,
                "l1_first": k.l1_first,
                "h1_first": k.h1_first,
                "kappa_threshold": k.kappa_threshold,
                "h1_tail_bound": k.h1_tail_bound,
                "power_h1": k.power_h1,
                "partial_h1": k.partial_h1,
                "remainder": k.remainder,
                "first_moment": k.first_moment,
                "convolution_powers_hold": conv,
            })
        }
        Err(e) => {
            out.check("neumann_contraction", false);
            json!({ "error": e.to_string() })
        }
    };

    let grid = Grid1D::new(n.trace_half_length, n.trace_panels, n.order).map_err(err)?;
    let traces = trace_bound_integrals(curve, alpha, n.trace_kappa, &grid).map_err(err)?;
    let mut tjson = traces.to_json();
    tjson.push('\n');
    let stable = traces.entries().iter().all(|(_, e)| e.bound_value.is_finite() && e.ladder_delta < tol.ladder);

    let bump = MomentumBump::new(n.decay_eps1, n.decay_a, alpha).map_err(err)?;
    let decay = free_decay(&bump, &n.decay_times).map_err(err)?;
    let bounded = decay.rows.iter().all(|r| r.resolved && r.scaled <= decay.bound);

    out.file(
        "scatter.json",
        pretty(&json!({
            "alpha": alpha,
            "projector": {
                "seed": n.seed,
                "idempotence_residual": idem,
                "self_adjointness_residual": adj,
                "tolerance": tol.projector,
            },
            "neumann_kernel": kernel_json,
            "trace_bounds_stable": stable,
            "decay": {
                "eps1": bump.eps1,
                "a": bump.a,
                "constant": decay.constant,
                "bound": decay.bound,
                "fitted_constant": decay.fitted_constant,
                "max_scaled": decay.max_scaled(),
                "initial_norm": decay.initial_norm,
                "uniformly_bounded": bounded,
            },
        })),
    );
    out.file("trace_bounds.json", tjson);
    out.file("decay.csv", decay.to_csv());
    out.check("projector", idem < tol.projector && adj < tol.projector);
    out.check("trace_bounds_stable", stable);
    out.check("decay_bounded", bounded);
    out.summary = format!(
        "projector residual {:.1e}, κ threshold {}, max t^1.5 leakage {:.4}",
        idem.max(adj),
        kernel.as_ref().map(|k| format!("{:.4}", k.kappa_threshold)).unwrap_or_else(|_| "n/a".into()),
        decay.max_scaled()
    );
    Ok(out)
}
