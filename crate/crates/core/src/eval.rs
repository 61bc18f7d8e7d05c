//! Scoring: point-in-mask ratio, discrete Fréchet distance, trajectory
//! score, box IoU and benchmark aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{Mask, RasterError};
use crate::sample::{parse_box2d, parse_point_list, split_think, Answer};
use crate::scalar::Scalar;
use crate::types::{Box2D, Point2D};

pub const METRIC_POINTS: &str = "point-in-mask";
pub const METRIC_DFD: &str = "dfd-discrete";
pub const METRIC_AFFORDANCE: &str = "box-iou";
/// Fraction of the image diagonal at which a trajectory scores zero.
pub const DEFAULT_RHO: f64 = 0.25;
pub const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction has no points")]
    EmptyPrediction,
    #[error("trajectory has no points")]
    EmptyTrajectory,
    #[error("no samples to aggregate")]
    EmptyBenchmark,
    #[error("image diagonal and normalizer must be positive")]
    BadNormalizer,
    #[error("invalid box")]
    InvalidBox,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("prediction ids do not match ground truth: {missing} missing, {extra} unknown (first: {first})")]
    IdMismatch { missing: usize, extra: usize, first: String },
    #[error("sample {id}: ground truth has no {field}")]
    MissingGroundTruth { id: String, field: &'static str },
    #[error("sample {id}: answer is not a {expected}")]
    WrongAnswer { id: String, expected: &'static str },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Fraction of predicted points whose rounded pixel lies inside `mask`.
/// Points outside the image count as misses.
pub fn score_points<T: Scalar>(predicted: &[Point2D<T>], mask: &Mask) -> Result<T, EvalError> {
    if predicted.is_empty() {
        return Err(EvalError::EmptyPrediction);
    }
    let inside = predicted.iter().filter(|p| mask.contains(*p)).count();
    Ok(T::from_usize_lossy(inside) / T::from_usize_lossy(predicted.len()))
}

/// Discrete Fréchet distance under the Euclidean metric.
pub fn dfd<T: Scalar>(p: &[Point2D<T>], q: &[Point2D<T>]) -> Result<T, EvalError> {
    if p.is_empty() || q.is_empty() {
        return Err(EvalError::EmptyTrajectory);
    }
    let m = q.len();
    let mut prev = vec![T::zero(); m];
    let mut cur = vec![T::zero(); m];
    for (i, pi) in p.iter().enumerate() {
        for (j, qj) in q.iter().enumerate() {
            let d = pi.distance(qj);
            cur[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => cur[j - 1].max(d),
                (_, 0) => prev[0].max(d),
                _ => prev[j].min(prev[j - 1]).min(cur[j - 1]).max(d),
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

/// `1 - min(1, dfd / (rho * image_diag))`.
pub fn score_trajectory<T: Scalar>(
    pred: &[Point2D<T>],
    gt: &[Point2D<T>],
    image_diag: T,
    rho: T,
) -> Result<T, EvalError> {
    if !(image_diag > T::zero()) || !(rho > T::zero()) {
        return Err(EvalError::BadNormalizer);
    }
    let d = dfd(pred, gt)?;
    Ok(T::one() - (d / (rho * image_diag)).min(T::one()))
}

/// Box IoU.
pub fn score_affordance<T: Scalar>(pred: &Box2D<T>, gt: &Box2D<T>) -> Result<T, EvalError> {
    if !pred.is_valid() || !gt.is_valid() {
        return Err(EvalError::InvalidBox);
    }
    Ok(pred.iou(gt))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub id: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub metric: String,
    pub params: BTreeMap<String, f64>,
    pub per_sample: Vec<SampleScore>,
    pub aggregate: f64,
    pub count: usize,
}

pub fn aggregate(
    per_sample: Vec<SampleScore>,
    metric: &str,
    params: BTreeMap<String, f64>,
) -> Result<ScoreReport, EvalError> {
    if per_sample.is_empty() {
        return Err(EvalError::EmptyBenchmark);
    }
    let sum: f64 = per_sample.iter().map(|s| s.score).sum();
    let count = per_sample.len();
    Ok(ScoreReport {
        metric: metric.to_string(),
        params,
        per_sample,
        aggregate: sum / count as f64,
        count,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchmarkKind {
    Points,
    Trajectory,
    Affordance,
}

impl BenchmarkKind {
    pub fn metric(self) -> &'static str {
        match self {
            BenchmarkKind::Points => METRIC_POINTS,
            BenchmarkKind::Trajectory => METRIC_DFD,
            BenchmarkKind::Affordance => METRIC_AFFORDANCE,
        }
    }
}

/// One ground-truth line of a benchmark directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub id: String,
    /// PNG path relative to the benchmark directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<Point2D>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box2d: Option<Box2D>,
    /// Width and height, for the trajectory normalizer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_size: Option<[u32; 2]>,
}

#[derive(Clone, Debug)]
pub struct Benchmark {
    pub root: PathBuf,
    pub records: BTreeMap<String, GroundTruthRecord>,
}

/// Predicted answer: structured, or free text (a leading think block is
/// ignored).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PredictedAnswer {
    Structured(Answer),
    Text(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub answer: PredictedAnswer,
}

fn read_jsonl<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| EvalError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn load_benchmark(dir: &Path) -> Result<Benchmark, EvalError> {
    let records: Vec<GroundTruthRecord> = read_jsonl(&dir.join(GROUND_TRUTH_FILE))?;
    Ok(Benchmark {
        root: dir.to_path_buf(),
        records: records.into_iter().map(|r| (r.id.clone(), r)).collect(),
    })
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, EvalError> {
    read_jsonl(path)
}

fn predicted_points(p: &Prediction) -> Option<Vec<Point2D>> {
    match &p.answer {
        PredictedAnswer::Structured(Answer::Points(ps)) => Some(ps.points.clone()),
        PredictedAnswer::Structured(Answer::Trajectory(t)) => Some(t.points.clone()),
        PredictedAnswer::Text(s) => parse_point_list(split_think(s).1),
        PredictedAnswer::Structured(Answer::Text { text }) => parse_point_list(split_think(text).1),
        _ => None,
    }
}

fn predicted_box(p: &Prediction) -> Option<Box2D> {
    match &p.answer {
        PredictedAnswer::Structured(Answer::Box2d { bbox }) => Some(*bbox),
        PredictedAnswer::Text(s) => parse_box2d(split_think(s).1),
        PredictedAnswer::Structured(Answer::Text { text }) => parse_box2d(split_think(text).1),
        _ => None,
    }
}

fn check_ids(preds: &[Prediction], bench: &Benchmark) -> Result<(), EvalError> {
    let pred_ids: BTreeSet<&str> = preds.iter().map(|p| p.id.as_str()).collect();
    let gt_ids: BTreeSet<&str> = bench.records.keys().map(String::as_str).collect();
    let missing: Vec<_> = gt_ids.difference(&pred_ids).collect();
    let extra: Vec<_> = pred_ids.difference(&gt_ids).collect();
    if missing.is_empty() && extra.is_empty() && pred_ids.len() == preds.len() {
        return Ok(());
    }
    let first = missing
        .first()
        .or(extra.first())
        .map(|s| s.to_string())
        .unwrap_or_else(|| "duplicate prediction id".into());
    Err(EvalError::IdMismatch {
        missing: missing.len(),
        extra: extra.len(),
        first,
    })
}

/// Scores every prediction against its ground truth. Prediction and
/// ground-truth ids must match one to one.
pub fn evaluate(
    kind: BenchmarkKind,
    preds: &[Prediction],
    bench: &Benchmark,
    rho: f64,
) -> Result<ScoreReport, EvalError> {
    if preds.is_empty() && bench.records.is_empty() {
        return Err(EvalError::EmptyBenchmark);
    }
    check_ids(preds, bench)?;
    let mut params = BTreeMap::new();
    if kind == BenchmarkKind::Trajectory {
        params.insert("rho".to_string(), rho);
    }
    let mut per_sample = Vec::with_capacity(preds.len());
    for p in preds {
        let gt = &bench.records[&p.id];
        let score = match kind {
            BenchmarkKind::Points => {
                let rel = gt.mask.as_ref().ok_or_else(|| EvalError::MissingGroundTruth {
                    id: p.id.clone(),
                    field: "mask",
                })?;
                let mask = Mask::load_png(&bench.root.join(rel))?;
                match predicted_points(p) {
                    Some(pts) if !pts.is_empty() => score_points(&pts, &mask)?,
                    _ => 0.0,
                }
            }
            BenchmarkKind::Trajectory => {
                let gt_traj = gt.trajectory.as_ref().ok_or_else(|| EvalError::MissingGroundTruth {
                    id: p.id.clone(),
                    field: "trajectory",
                })?;
                let [w, h] = gt.image_size.ok_or_else(|| EvalError::MissingGroundTruth {
                    id: p.id.clone(),
                    field: "image_size",
                })?;
                let diag = (w as f64).hypot(h as f64);
                match predicted_points(p) {
                    Some(pts) if !pts.is_empty() => score_trajectory(&pts, gt_traj, diag, rho)?,
                    _ => 0.0,
                }
            }
            BenchmarkKind::Affordance => {
                let gt_box = gt.box2d.ok_or_else(|| EvalError::MissingGroundTruth {
                    id: p.id.clone(),
                    field: "box2d",
                })?;
                match predicted_box(p) {
                    Some(b) if b.is_valid() => score_affordance(&b, &gt_box)?,
                    _ => 0.0,
                }
            }
        };
        per_sample.push(SampleScore {
            id: p.id.clone(),
            score,
        });
    }
    per_sample.sort_by(|a, b| a.id.cmp(&b.id));
    aggregate(per_sample, kind.metric(), params)
}
