use clap::{Parser, Subcommand};
use leakywire_cli::{run, ConfigError, Pipeline, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "leakywire", version, about = "Spectral and scattering pipelines for leaky quantum wires")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, overrides [output].dir.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Coupling α, overrides [physics].alpha.
    #[arg(long, global = true, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Spectral grid node count, overrides [numerics].grid_n.
    #[arg(long, global = true)]
    grid_n: Option<usize>,
    /// Spectral truncation L, overrides [numerics].truncation.
    #[arg(long, global = true, allow_hyphen_values = true)]
    truncation: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    CurveCheck,
    Spectrum,
    Asymptotics,
    LapScan,
    Quasimode,
    ScatterChecks,
    /// Every pipeline listed in [pipelines].run.
    All,
}

fn fail(e: &ConfigError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(path) = &cli.config else {
        return fail(&ConfigError {
            kind: "usage",
            field: "--config".into(),
            message: "a configuration file is required".into(),
        });
    };
    let mut cfg = match RunConfig::load(path) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if let Some(d) = cli.out {
        cfg.output.dir = d;
    }
    if let Some(a) = cli.alpha {
        cfg.physics.alpha = a;
    }
    if let Some(n) = cli.grid_n {
        cfg.numerics.grid_n = n;
    }
    if let Some(l) = cli.truncation {
        cfg.numerics.truncation = Some(l);
    }
    let selection = match cli.command {
        Command::CurveCheck => vec![Pipeline::CurveCheck],
        Command::Spectrum => vec![Pipeline::Spectrum],
        Command::Asymptotics => vec![Pipeline::Asymptotics],
        Command::LapScan => vec![Pipeline::LapScan],
        Command::Quasimode => vec![Pipeline::Quasimode],
        Command::ScatterChecks => vec![Pipeline::ScatterChecks],
        Command::All => cfg.pipelines.run.clone(),
    };
    // a single subcommand validates as if only that pipeline were selected
    cfg.pipelines.run = selection.clone();
    if let Err(e) = cfg.validate() {
        return fail(&e);
    }
    match run(&cfg, &selection) {
        Ok(m) => {
            print!("{}", m.summary());
            if m.succeeded() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": { "kind": "io", "message": e.to_string() } }));
            ExitCode::FAILURE
        }
    }
}
