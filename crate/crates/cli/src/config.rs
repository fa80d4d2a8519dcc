//! Run configuration: a TOML file with `[curve]`, `[physics]`, `[numerics]`,
//! `[pipelines]` and `[output]` sections.

use leakywire::curve_geometry::{BendingProfile, CurvatureTable};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    CurveCheck,
    Spectrum,
    Asymptotics,
    LapScan,
    Quasimode,
    ScatterChecks,
}

impl Pipeline {
    pub const ALL: [Pipeline; 6] = [
        Pipeline::CurveCheck,
        Pipeline::Spectrum,
        Pipeline::Asymptotics,
        Pipeline::LapScan,
        Pipeline::Quasimode,
        Pipeline::ScatterChecks,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::CurveCheck => "curve-check",
            Pipeline::Spectrum => "spectrum",
            Pipeline::Asymptotics => "asymptotics",
            Pipeline::LapScan => "lap-scan",
            Pipeline::Quasimode => "quasimode",
            Pipeline::ScatterChecks => "scatter-checks",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    StraightLine,
    GaussianBump,
    SmoothedCorner,
    CustomTable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub family: Family,
    #[serde(default)]
    pub theta: f64,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default)]
    pub center: f64,
    #[serde(default = "one")]
    pub beta: f64,
    /// Required for `custom_table`.
    #[serde(default)]
    pub table: Option<CurvatureTable>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative change of a bound state between the N and 2N grids.
    pub grid_doubling: f64,
    /// Relative change of Im matrix elements between the two smallest ε.
    pub lap_change: f64,
    /// Condition-number cap for LAP cells.
    pub cond_cap: f64,
    /// Candidate matching distance between LAP grids.
    pub candidate_match: f64,
    /// Required relative drop of the quasimode ratio per ladder rung.
    pub quasimode_drop: f64,
    /// Relative change of a trace bound under L -> 2L.
    pub ladder: f64,
    /// Projector idempotence and self-adjointness residuals.
    pub projector: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            grid_doubling: 1e-6,
            lap_change: 0.05,
            cond_cap: 1e8,
            candidate_match: 0.02,
            quasimode_drop: 0.4,
            ladder: 0.05,
            projector: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsConfig {
    /// Half-length L of the spectral grid; derived from α and the curve when absent.
    pub truncation: Option<f64>,
    pub grid_n: usize,
    pub order: usize,
    pub delta: f64,
    pub eps_ladder: Vec<f64>,
    pub lambda_window: [f64; 2],
    pub lambda_cells: usize,
    pub eps0: f64,
    pub singular_threshold: f64,
    pub betas: Vec<f64>,
    pub quasimode_k: Vec<f64>,
    /// (s₀, L₁, L₂) of the first rung.
    pub quasimode_start: [f64; 3],
    pub quasimode_steps: usize,
    pub trace_kappa: f64,
    pub trace_half_length: f64,
    pub trace_panels: usize,
    pub decay_eps1: f64,
    pub decay_a: f64,
    pub decay_times: Vec<f64>,
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            truncation: None,
            grid_n: 800,
            order: 8,
            delta: 3.5,
            eps_ladder: vec![1e-3, 3e-4, 1e-4],
            lambda_window: [-0.20, -0.05],
            lambda_cells: 60,
            eps0: 0.1,
            singular_threshold: 20.0,
            betas: vec![0.10, 0.15, 0.20],
            quasimode_k: vec![0.1, 0.3, 0.6],
            quasimode_start: [2.0, 5.0, 2.0],
            quasimode_steps: 2,
            trace_kappa: 4.0,
            trace_half_length: 8.0,
            trace_panels: 16,
            decay_eps1: 0.05,
            decay_a: 0.5,
            decay_times: vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
            seed: 7,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelinesConfig {
    pub run: Vec<Pipeline>,
}

impl Default for PipelinesConfig {
    fn default() -> Self {
        Self { run: Pipeline::ALL.to_vec() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub curve: CurveConfig,
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub pipelines: PipelinesConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn one() -> f64 {
    1.0
}

/// Machine-readable configuration problem.
#[derive(Debug, Clone, Serialize, thiserror::Error)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub kind: &'static str,
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn invalid(field: &str, message: impl Into<String>) -> Self {
        Self {
            kind: "validation",
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl FromStr for RunConfig {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        toml::from_str(s).map_err(|e| ConfigError {
            kind: "parse",
            field: String::new(),
            message: e.message().to_string(),
        })
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            kind: "io",
            field: path.display().to_string(),
            message: e.to_string(),
        })?;
        text.parse()
    }

    pub fn profile(&self) -> BendingProfile {
        let c = &self.curve;
        let p = match c.family {
            Family::StraightLine => return BendingProfile::straight_line(),
            Family::GaussianBump => BendingProfile::gaussian_bump(c.theta, c.sigma),
            Family::SmoothedCorner => BendingProfile::smoothed_corner(c.theta, c.sigma),
            Family::CustomTable => BendingProfile::custom_table(c.table.clone().unwrap_or(CurvatureTable {
                s: vec![],
                curvature: vec![],
                tail_exponent: 0.0,
            })),
        };
        p.with_center(c.center).with_beta(c.beta)
    }

    pub fn selected(&self, p: Pipeline) -> bool {
        self.pipelines.run.contains(&p)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let alpha = self.physics.alpha;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ConfigError::invalid("physics.alpha", format!("α must be positive, got {alpha}")));
        }
        let c = &self.curve;
        if c.family == Family::CustomTable && c.table.is_none() {
            return Err(ConfigError::invalid("curve.table", "custom_table needs a [curve.table] block"));
        }
        if c.family != Family::CustomTable && c.table.is_some() {
            return Err(ConfigError::invalid("curve.table", "a table is only read by the custom_table family"));
        }
        if let Err(e) = self.profile().validate() {
            return Err(ConfigError::invalid("curve", e.to_string()));
        }
        let n = &self.numerics;
        if let Some(l) = n.truncation {
            if !(l > 0.0 && l.is_finite()) {
                return Err(ConfigError::invalid("numerics.truncation", format!("truncation must be positive, got {l}")));
            }
        }
        if n.grid_n == 0 || n.order == 0 {
            return Err(ConfigError::invalid("numerics.grid_n", "grid_n and order must be positive"));
        }
        if n.delta <= 3.0 {
            return Err(ConfigError::invalid("numerics.delta", format!("δ must exceed 3, got {}", n.delta)));
        }
        let t = &n.tolerances;
        for (name, v) in [
            ("grid_doubling", t.grid_doubling),
            ("lap_change", t.lap_change),
            ("cond_cap", t.cond_cap),
            ("candidate_match", t.candidate_match),
            ("quasimode_drop", t.quasimode_drop),
            ("ladder", t.ladder),
            ("projector", t.projector),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::invalid(&format!("numerics.tolerances.{name}"), format!("tolerance must be positive, got {v}")));
            }
        }
        if self.selected(Pipeline::LapScan) {
            let [l1, l2] = n.lambda_window;
            let floor = -0.25 * alpha * alpha;
            if !(floor < l1 && l1 < l2 && l2 < 0.0) {
                return Err(ConfigError::invalid(
                    "numerics.lambda_window",
                    format!("window [{l1}, {l2}] must be an interval inside (-α²/4, 0) = ({floor}, 0)"),
                ));
            }
            if n.lambda_cells == 0 {
                return Err(ConfigError::invalid("numerics.lambda_cells", "need at least one cell"));
            }
            if n.eps_ladder.is_empty() || !n.eps_ladder.iter().all(|&e| e > 0.0 && e <= n.eps0) {
                return Err(ConfigError::invalid("numerics.eps_ladder", format!("ε values must lie in (0, eps0 = {}]", n.eps0)));
            }
            if !n.eps_ladder.windows(2).all(|w| w[1] < w[0]) {
                return Err(ConfigError::invalid("numerics.eps_ladder", "ε ladder must decrease"));
            }
            if n.singular_threshold <= 1.0 {
                return Err(ConfigError::invalid("numerics.singular_threshold", "threshold must exceed 1"));
            }
        }
        if self.selected(Pipeline::Asymptotics) && !n.betas.iter().all(|&b| b > 0.0) {
            return Err(ConfigError::invalid("numerics.betas", "β values must be positive"));
        }
        if self.selected(Pipeline::Quasimode) {
            if n.quasimode_k.is_empty() || n.quasimode_steps == 0 {
                return Err(ConfigError::invalid("numerics.quasimode_k", "need at least one k and one ladder step"));
            }
            if n.quasimode_start.iter().any(|&v| !(v > 0.0)) {
                return Err(ConfigError::invalid("numerics.quasimode_start", "s0, L1 and L2 must be positive"));
            }
        }
        if self.selected(Pipeline::ScatterChecks) {
            if !(n.trace_kappa > 0.0 && n.trace_half_length > 0.0) || n.trace_panels == 0 || n.trace_panels % 2 == 1 {
                return Err(ConfigError::invalid("numerics.trace_panels", "trace grid needs κ > 0, L > 0 and an even panel count"));
            }
            if !(0.0 < n.decay_eps1 && n.decay_eps1 < n.decay_a && n.decay_a <= 0.5 * alpha) {
                return Err(ConfigError::invalid("numerics.decay_a", format!("need 0 < eps1 < a <= α/2 = {}", 0.5 * alpha)));
            }
            if n.decay_times.is_empty() || !n.decay_times.iter().all(|&t| t > 0.0) {
                return Err(ConfigError::invalid("numerics.decay_times", "times must be positive"));
            }
        }
        Ok(())
    }
}
