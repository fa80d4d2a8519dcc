//! Config-driven batch runner for the leakywire pipelines.
//!
//! A run validates the configuration, executes the selected pipelines in
//! fixed order, writes their CSV/JSON artifacts into the output directory and
//! finishes with `manifest.json` (sha256 and size of every artifact, plus a
//! status per pipeline). A failing pipeline is recorded and the run moves on.

pub mod config;
pub mod pipelines;

pub use config::{ConfigError, Pipeline, RunConfig};
pub use pipelines::{run_pipeline, Checks, Outcome};

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineRecord {
    pub name: &'static str,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub checks: Checks,
    pub files: Vec<String>,
    pub summary: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub pipelines: Vec<PipelineRecord>,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn succeeded(&self) -> bool {
        self.pipelines.iter().all(|p| p.status == Status::Ok)
    }

    pub fn checks_passed(&self) -> bool {
        self.pipelines.iter().all(|p| p.checks.values().all(|&c| c))
    }

    /// Plain-text table of pipeline outcomes.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for p in &self.pipelines {
            let status = match p.status {
                Status::Ok => "ok",
                Status::Failed => "FAILED",
            };
            let _ = writeln!(s, "{:<15} {:<7} {}", p.name, status, p.error.as_deref().unwrap_or(&p.summary));
            for (name, ok) in &p.checks {
                let _ = writeln!(s, "    {:<32} {}", name, if *ok { "pass" } else { "fail" });
            }
        }
        s
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Runs `selection` (in canonical order) and writes artifacts plus the manifest.
pub fn run(cfg: &RunConfig, selection: &[Pipeline]) -> std::io::Result<Manifest> {
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir)?;
    let mut records = Vec::new();
    let mut files = Vec::new();
    for p in Pipeline::ALL.into_iter().filter(|p| selection.contains(p)) {
        let record = match run_pipeline(p, cfg) {
            Ok(out) => {
                let mut names = Vec::new();
                for (name, body) in &out.files {
                    write_file(dir, name, body)?;
                    files.push(FileEntry {
                        path: name.clone(),
                        sha256: sha256_hex(body.as_bytes()),
                        bytes: body.len(),
                    });
                    names.push(name.clone());
                }
                PipelineRecord {
                    name: p.name(),
                    status: Status::Ok,
                    error: None,
                    checks: out.checks,
                    files: names,
                    summary: out.summary,
                }
            }
            Err(e) => PipelineRecord {
                name: p.name(),
                status: Status::Failed,
                error: Some(e),
                checks: Checks::new(),
                files: vec![],
                summary: String::new(),
            },
        };
        records.push(record);
    }
    let manifest = Manifest {
        config: cfg.clone(),
        pipelines: records,
        files,
    };
    let mut body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    body.push('\n');
    write_file(dir, "manifest.json", &body)?;
    Ok(manifest)
}

fn write_file(dir: &Path, name: &str, body: &str) -> std::io::Result<()> {
    std::fs::write(dir.join(name), body)
}
