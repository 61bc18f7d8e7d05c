//! Training sample records and JSONL output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::Trajectory2D;
use crate::types::{Box2D, Box3D, GraspPose2D, Point2D, PointSet};

/// Sample family, also the forge subcommand name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SampleFamily {
    #[serde(rename = "points")]
    Points,
    #[serde(rename = "placement")]
    Placement,
    #[serde(rename = "grasp")]
    Grasp,
    #[serde(rename = "traj")]
    Traj,
    #[serde(rename = "traj-neg")]
    TrajNeg,
    #[serde(rename = "3dbox")]
    Box3d,
    #[serde(rename = "relation")]
    Relation,
    #[serde(rename = "cot")]
    Cot,
    #[serde(rename = "plan")]
    Plan,
}

impl SampleFamily {
    pub const FORGE: [SampleFamily; 9] = [
        SampleFamily::Points,
        SampleFamily::Placement,
        SampleFamily::Grasp,
        SampleFamily::Traj,
        SampleFamily::TrajNeg,
        SampleFamily::Box3d,
        SampleFamily::Relation,
        SampleFamily::Cot,
        SampleFamily::Plan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SampleFamily::Points => "points",
            SampleFamily::Placement => "placement",
            SampleFamily::Grasp => "grasp",
            SampleFamily::Traj => "traj",
            SampleFamily::TrajNeg => "traj-neg",
            SampleFamily::Box3d => "3dbox",
            SampleFamily::Relation => "relation",
            SampleFamily::Cot => "cot",
            SampleFamily::Plan => "plan",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::FORGE.into_iter().find(|f| f.name() == s)
    }

    /// Answer variant this family must carry; `None` for CoT, which follows
    /// its base family.
    pub fn answer_kind(self) -> Option<AnswerKind> {
        Some(match self {
            SampleFamily::Points | SampleFamily::Placement => AnswerKind::Points,
            SampleFamily::Grasp => AnswerKind::Grasp,
            SampleFamily::Traj => AnswerKind::Trajectory,
            SampleFamily::TrajNeg => AnswerKind::Judgment,
            SampleFamily::Box3d => AnswerKind::Box3d,
            SampleFamily::Relation => AnswerKind::Text,
            SampleFamily::Plan => AnswerKind::Plan,
            SampleFamily::Cot => return None,
        })
    }
}

impl std::fmt::Display for SampleFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Rational,
    Irrational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub skill: String,
    pub trajectory: Trajectory2D,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnswerKind {
    Points,
    Box2d,
    Box3d,
    Trajectory,
    Grasp,
    Text,
    Judgment,
    Plan,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Answer {
    Points(PointSet),
    Box2d { bbox: Box2D },
    Box3d { bbox: Box3D },
    Trajectory(Trajectory2D),
    Grasp(GraspPose2D),
    Text { text: String },
    Judgment {
        verdict: Verdict,
        reason: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kind: Option<u8>,
    },
    Plan { steps: Vec<PlanStep> },
}

fn fmt_num(out: &mut String, v: f64) {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        let _ = write!(out, "{}", v as i64);
    } else {
        let _ = write!(out, "{v}");
    }
}

fn fmt_points(out: &mut String, pts: &[Point2D]) {
    out.push('[');
    for (i, p) in pts.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push('[');
        fmt_num(out, p.x);
        out.push(',');
        fmt_num(out, p.y);
        out.push(']');
    }
    out.push(']');
}

fn fmt_list(out: &mut String, vals: &[f64]) {
    out.push('[');
    for (i, v) in vals.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        fmt_num(out, *v);
    }
    out.push(']');
}

fn json_escape(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization is infallible")
}

impl Answer {
    pub fn kind(&self) -> AnswerKind {
        match self {
            Answer::Points(_) => AnswerKind::Points,
            Answer::Box2d { .. } => AnswerKind::Box2d,
            Answer::Box3d { .. } => AnswerKind::Box3d,
            Answer::Trajectory(_) => AnswerKind::Trajectory,
            Answer::Grasp(_) => AnswerKind::Grasp,
            Answer::Text { .. } => AnswerKind::Text,
            Answer::Judgment { .. } => AnswerKind::Judgment,
            Answer::Plan { .. } => AnswerKind::Plan,
        }
    }

    /// Model-facing answer string, e.g. `[[x1,y1],[x2,y2]]`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        match self {
            Answer::Points(ps) => fmt_points(&mut s, &ps.points),
            Answer::Box2d { bbox } => fmt_list(&mut s, &[bbox.x1, bbox.y1, bbox.x2, bbox.y2]),
            Answer::Box3d { bbox } => fmt_list(&mut s, &bbox.to_array()),
            Answer::Trajectory(t) => fmt_points(&mut s, &t.points),
            Answer::Grasp(g) => fmt_points(&mut s, &[g.p1, g.p2]),
            Answer::Text { text } => s.push_str(text),
            Answer::Judgment { verdict, reason, .. } => {
                let v = match verdict {
                    Verdict::Rational => "rational",
                    Verdict::Irrational => "irrational",
                };
                let _ = write!(s, "{{\"verdict\":\"{v}\",\"reason\":{}}}", json_escape(reason));
            }
            Answer::Plan { steps } => {
                s.push('[');
                for (i, st) in steps.iter().enumerate() {
                    if i > 0 {
                        s.push(',');
                    }
                    let _ = write!(s, "{{\"skill\":{},\"trajectory\":", json_escape(&st.skill));
                    fmt_points(&mut s, &st.trajectory.points);
                    s.push('}');
                }
                s.push(']');
            }
        }
        s
    }
}

/// Splits `<think>...</think>rest` into its reasoning and answer parts.
pub fn split_think(text: &str) -> (Option<&str>, &str) {
    let t = text.trim_start();
    if let Some(rest) = t.strip_prefix("<think>") {
        if let Some(end) = rest.find("</think>") {
            return (Some(&rest[..end]), rest[end + "</think>".len()..].trim());
        }
    }
    (None, text.trim())
}

/// Parses `[[x,y],...]` or `[(x,y),...]` (reasoning prefix allowed) into
/// points.
pub fn parse_point_list(text: &str) -> Option<Vec<Point2D>> {
    let (_, body) = split_think(text);
    let body = body.replace('(', "[").replace(')', "]");
    let raw: Vec<[f64; 2]> = serde_json::from_str(&body).ok()?;
    Some(raw.into_iter().map(|[x, y]| Point2D::new(x, y)).collect())
}

/// Parses `[x1,y1,x2,y2]` (reasoning prefix allowed).
pub fn parse_box2d(text: &str) -> Option<Box2D> {
    let (_, body) = split_think(text);
    let [x1, y1, x2, y2]: [f64; 4] = serde_json::from_str(body).ok()?;
    Box2D::new(x1, y1, x2, y2)
}

/// Provenance and scene facts a sample was derived from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleTags {
    pub family: SampleFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_family: Option<SampleFamily>,
    pub episode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<i64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl Default for SampleFamily {
    fn default() -> Self {
        SampleFamily::Points
    }
}

/// Inputs shown with the question, kept structured so samples can be
/// re-checked without the source episode.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleContext {
    /// Trajectory presented for judgement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Trajectory2D>,
    /// Choice options, in display order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    /// Mask the answer points were drawn from, relative to the output dir.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    /// Prior pixel (placement keyframe fingertip center, query pixel, ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel: Option<Point2D>,
    /// Refer-QA anchor box and direction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_box: Option<Box3D>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<String>,
    /// Image size of the primary image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_size: Option<(u32, u32)>,
}

impl SampleContext {
    pub fn is_empty(&self) -> bool {
        *self == SampleContext::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QASample {
    pub id: String,
    pub prompt: String,
    pub image_refs: Vec<String>,
    pub answer: Answer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub think: Option<String>,
    pub tags: SampleTags,
    #[serde(default, skip_serializing_if = "SampleContext::is_empty")]
    pub context: SampleContext,
    pub seed: u64,
}

impl QASample {
    /// Full model target: optional `<think>` block followed by the answer.
    pub fn target(&self) -> String {
        match &self.think {
            Some(t) => format!("<think>{t}</think>{}", self.answer.render()),
            None => self.answer.render(),
        }
    }

    pub fn family(&self) -> SampleFamily {
        self.tags.family
    }

    /// Family whose answer shape applies (the base family for CoT).
    pub fn answer_family(&self) -> Option<SampleFamily> {
        match self.tags.family {
            SampleFamily::Cot => self.tags.base_family,
            f => Some(f),
        }
    }

    /// Checks the family/answer/think shape contract.
    pub fn check_shape(&self) -> Result<(), String> {
        let is_cot = self.tags.family == SampleFamily::Cot;
        if is_cot != self.think.is_some() {
            return Err(format!(
                "sample {}: think must be present iff family is cot",
                self.id
            ));
        }
        let fam = self
            .answer_family()
            .ok_or_else(|| format!("sample {}: cot sample without base family", self.id))?;
        if fam == SampleFamily::Cot {
            return Err(format!("sample {}: nested cot", self.id));
        }
        let want = fam.answer_kind().expect("non-cot family has an answer kind");
        if self.answer.kind() != want {
            return Err(format!(
                "sample {}: answer {:?} does not match family {}",
                self.id,
                self.answer.kind(),
                fam
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SampleIoError {
    #[error("io failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line} of {path}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SampleIoError + '_ {
    move |source| SampleIoError::IoFailure {
        path: path.display().to_string(),
        source,
    }
}

/// One JSON line: the sample plus its rendered `target`. Object keys come
/// out sorted, so the bytes depend only on the sample.
pub fn sample_line(sample: &QASample) -> String {
    let mut v = serde_json::to_value(sample).expect("sample serialization is infallible");
    if let serde_json::Value::Object(map) = &mut v {
        map.insert("target".into(), serde_json::Value::String(sample.target()));
    }
    serde_json::to_string(&v).expect("value serialization is infallible")
}

/// Writes samples as JSONL ordered by id; returns the number of records.
pub fn write_samples(samples: &[QASample], path: &Path) -> Result<usize, SampleIoError> {
    let mut lines: Vec<(&str, String)> = samples
        .iter()
        .map(|s| (s.id.as_str(), sample_line(s)))
        .collect();
    lines.sort();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for (_, line) in &lines {
        w.write_all(line.as_bytes()).map_err(io_err(path))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(lines.len())
}

pub fn read_samples(path: &Path) -> Result<Vec<QASample>, SampleIoError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: QASample = serde_json::from_str(&line).map_err(|e| SampleIoError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(s);
    }
    Ok(out)
}
