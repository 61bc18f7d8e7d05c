//! Command-line plumbing for vlmforge: forge, eval, depe and validate.

pub mod config;
pub mod forge;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use vlmforge::depe::{bicubic_resize, load_grid, save_grid, ResizeParams};
use vlmforge::episode::{discover_episodes, load_episode, Episode};
use vlmforge::eval::{evaluate, load_benchmark, read_predictions, BenchmarkKind, ScoreReport};
use vlmforge::sample::read_samples;
use vlmforge::samplegen::validate_sample;

pub use config::{ForgeConfig, Overrides, ProviderConfig, Thresholds};
pub use forge::{run_forge, ForgeReport, ForgeStats};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    /// 1 for config and usage errors, 2 for data errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

/// Scores `pred` against the benchmark at `gt` and writes the report as
/// JSON to `out`.
pub fn run_eval(kind: BenchmarkKind, pred: &Path, gt: &Path, rho: f64, out: &Path) -> Result<ScoreReport, CliError> {
    if !(rho > 0.0) {
        return Err(CliError::Usage(format!("--rho must be positive, got {rho}")));
    }
    let bench = load_benchmark(gt).map_err(data)?;
    let preds = read_predictions(pred).map_err(data)?;
    let report = evaluate(kind, &preds, &bench, rho).map_err(data)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(out, text + "\n").map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    Ok(report)
}

/// Arguments of `depe resize`.
#[derive(Clone, Debug)]
pub struct ResizeJob {
    pub input: PathBuf,
    pub meta: PathBuf,
    pub out: PathBuf,
    pub out_meta: PathBuf,
    pub new_side: usize,
    pub params: ResizeParams,
}

pub fn run_depe_resize(job: &ResizeJob) -> Result<(usize, usize, usize), CliError> {
    if job.new_side < 2 {
        return Err(CliError::Usage(format!("--new-side must be at least 2, got {}", job.new_side)));
    }
    if !job.params.a.is_finite() {
        return Err(CliError::Usage("--kernel-a must be finite".into()));
    }
    let grid = load_grid(&job.input, &job.meta).map_err(data)?;
    let out = bicubic_resize(&grid, job.new_side, job.new_side, &job.params).map_err(data)?;
    save_grid(&out, &job.out, &job.out_meta).map_err(data)?;
    Ok((out.height, out.width, out.dim))
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ValidateReport {
    pub episodes: usize,
    pub samples: usize,
    pub passed: usize,
    pub errors: Vec<String>,
}

impl ValidateReport {
    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Loads every episode under `root`; with `samples`, re-checks each sample
/// against its family invariants and its source episode. Masks referenced
/// by samples resolve against the JSONL's directory.
pub fn run_validate(root: &Path, samples: Option<&Path>) -> Result<ValidateReport, CliError> {
    let dirs = discover_episodes(root).map_err(|e| CliError::Data(format!("{}: {e}", root.display())))?;
    let mut report = ValidateReport::default();
    let mut episodes: BTreeMap<String, Episode> = BTreeMap::new();
    for d in &dirs {
        report.episodes += 1;
        match load_episode(d) {
            Ok(ep) => {
                episodes.insert(ep.id.clone(), ep);
            }
            Err(e) => report.errors.push(format!("{}: {e}", d.display())),
        }
    }
    if let Some(path) = samples {
        let list = read_samples(path).map_err(data)?;
        let out_dir = path.parent().unwrap_or(Path::new("."));
        for s in &list {
            report.samples += 1;
            let Some(ep) = episodes.get(&s.tags.episode) else {
                report.errors.push(format!("sample {}: unknown episode {}", s.id, s.tags.episode));
                continue;
            };
            match validate_sample(s, out_dir, Some(ep)) {
                Ok(()) => report.passed += 1,
                Err(e) => report.errors.push(e.to_string()),
            }
        }
    }
    Ok(report)
}

pub fn parse_benchmark(s: &str) -> Option<BenchmarkKind> {
    match s {
        "points" => Some(BenchmarkKind::Points),
        "traj" => Some(BenchmarkKind::Trajectory),
        "afford" => Some(BenchmarkKind::Affordance),
        _ => None,
    }
}
