//! Episode directories: manifest parsing, validation and asset access.
//!
//! Layout:
//!
//! ```text
//! <episode>/manifest.json
//! <episode>/frames/NNNNNN.png
//! <episode>/depth/NNNNNN.f32     row-major little-endian f32, meters
//! <episode>/masks/<ann_id>.png   nonzero = inside
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{DepthMap, Mask, RasterError};
use crate::trajectory::skills;
use crate::types::{CameraCalib, Frame, GripperTrace, ObjectAnnotation};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub reason: String,
}

impl Violation {
    fn new(field: &str, reason: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("missing manifest at {0}")]
    MissingManifest(PathBuf),
    #[error("cannot parse manifest {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invariant violations: {}", join_violations(.0))]
    InvariantViolation(Vec<Violation>),
    #[error("dangling reference: {0}")]
    DanglingReference(PathBuf),
    #[error("no frame with index {0}")]
    UnknownFrame(i64),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

impl EpisodeError {
    /// Fields named by an invariant violation, empty for other errors.
    pub fn violated_fields(&self) -> Vec<&str> {
        match self {
            EpisodeError::InvariantViolation(v) => v.iter().map(|v| v.field.as_str()).collect(),
            _ => Vec::new(),
        }
    }
}

/// One labelled step of the episode's task, in execution order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepLabel {
    pub skill: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

/// On-disk manifest document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub id: String,
    #[serde(default)]
    pub task_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary_camera: Option<String>,
    pub cameras: BTreeMap<String, CameraCalib>,
    pub frames: Vec<Frame>,
    #[serde(default)]
    pub gripper: GripperTrace,
    #[serde(default)]
    pub annotations: Vec<ObjectAnnotation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub steps: Vec<StepLabel>,
}

/// A validated recorded manipulation sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub id: String,
    pub root: PathBuf,
    pub task_text: String,
    pub primary_camera: String,
    pub cameras: BTreeMap<String, CameraCalib>,
    pub frames: Vec<Frame>,
    pub gripper: GripperTrace,
    pub annotations: Vec<ObjectAnnotation>,
    pub steps: Vec<StepLabel>,
}

impl Manifest {
    /// Every invariant violation in the manifest, in document order.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.id.trim().is_empty() {
            out.push(Violation::new("id", "episode id is empty"));
        }
        if self.cameras.is_empty() {
            out.push(Violation::new("cameras", "at least one camera is required"));
        }
        if let Some(p) = &self.primary_camera {
            if !self.cameras.contains_key(p) {
                out.push(Violation::new("primary_camera", format!("unknown camera '{p}'")));
            }
        }
        for (name, c) in &self.cameras {
            if !(c.fx > 0.0) {
                out.push(Violation::new("fx", format!("camera '{name}' fx must be > 0")));
            }
            if !(c.fy > 0.0) {
                out.push(Violation::new("fy", format!("camera '{name}' fy must be > 0")));
            }
            if !c.extrinsic.is_rigid(1e-9) {
                out.push(Violation::new(
                    "extrinsic",
                    format!("camera '{name}' rotation is not orthonormal with det +1"),
                ));
            }
        }

        let mut seen = BTreeSet::new();
        let mut dims = BTreeMap::new();
        for f in &self.frames {
            if f.width == 0 || f.height == 0 {
                out.push(Violation::new("frame.size", format!("frame {} has zero size", f.index)));
            }
            if !seen.insert(f.index) {
                out.push(Violation::new("frame.index", format!("duplicate frame index {}", f.index)));
            }
            if let Some(cam) = &f.camera {
                if !self.cameras.contains_key(cam) {
                    out.push(Violation::new("frame.camera", format!("frame {} references unknown camera '{cam}'", f.index)));
                }
            }
            dims.insert(f.index, (f.width, f.height));
        }
        if self.frames.is_empty() {
            out.push(Violation::new("frames", "episode has no frames"));
        }

        let mut prev: Option<i64> = None;
        for (i, s) in self.gripper.samples.iter().enumerate() {
            if let Some(p) = prev {
                if s.frame_index <= p {
                    out.push(Violation::new(
                        "frame_index",
                        format!("gripper sample {i}: frame index {} not strictly increasing", s.frame_index),
                    ));
                }
            }
            prev = Some(s.frame_index);
            if !(0.0..=1.0).contains(&s.aperture) {
                out.push(Violation::new(
                    "aperture",
                    format!("gripper sample {i}: aperture {} outside [0, 1]", s.aperture),
                ));
            }
            if !seen.contains(&s.frame_index) {
                out.push(Violation::new(
                    "gripper.frame",
                    format!("gripper sample {i} references missing frame {}", s.frame_index),
                ));
            }
            for p in [s.tip_left, s.tip_right, s.center].into_iter().flatten() {
                if !p.is_finite() {
                    out.push(Violation::new("gripper.point", format!("gripper sample {i} has a non-finite point")));
                }
            }
        }

        let mut ann_ids = BTreeSet::new();
        for a in &self.annotations {
            if !ann_ids.insert(a.id.as_str()) {
                out.push(Violation::new("annotation.id", format!("duplicate annotation id '{}'", a.id)));
            }
            if a.box2d.is_none() && a.box3d.is_none() && a.mask.is_none() {
                out.push(Violation::new(
                    "annotation",
                    format!("annotation '{}' has no box2d, box3d or mask", a.id),
                ));
            }
            match dims.get(&a.frame_index) {
                None => out.push(Violation::new(
                    "annotation.frame",
                    format!("annotation '{}' references missing frame {}", a.id, a.frame_index),
                )),
                Some(&(w, h)) => {
                    if let Some(b) = &a.box2d {
                        if !b.is_valid() || !b.within(w, h) {
                            out.push(Violation::new(
                                "box2d",
                                format!("annotation '{}' box2d invalid or outside {w}x{h}", a.id),
                            ));
                        }
                    }
                }
            }
            if let Some(b) = &a.box3d {
                if !b.is_valid() {
                    out.push(Violation::new("box3d", format!("annotation '{}' box3d invalid", a.id)));
                }
            }
        }

        for (i, s) in self.steps.iter().enumerate() {
            if skills::lookup(&s.skill).is_none() {
                out.push(Violation::new("steps", format!("step {i}: unknown atomic skill '{}'", s.skill)));
            }
        }
        out
    }
}

impl Episode {
    pub fn from_manifest(manifest: Manifest, root: PathBuf) -> Result<Self, EpisodeError> {
        let violations = manifest.violations();
        if !violations.is_empty() {
            return Err(EpisodeError::InvariantViolation(violations));
        }
        let primary_camera = manifest
            .primary_camera
            .clone()
            .or_else(|| manifest.cameras.keys().next().cloned())
            .expect("validated: at least one camera");
        let mut frames = manifest.frames;
        frames.sort_by_key(|f| f.index);
        Ok(Self {
            id: manifest.id,
            root,
            task_text: manifest.task_text,
            primary_camera,
            cameras: manifest.cameras,
            frames,
            gripper: manifest.gripper,
            annotations: manifest.annotations,
            steps: manifest.steps,
        })
    }

    pub fn to_manifest(&self) -> Manifest {
        Manifest {
            id: self.id.clone(),
            task_text: self.task_text.clone(),
            primary_camera: Some(self.primary_camera.clone()),
            cameras: self.cameras.clone(),
            frames: self.frames.clone(),
            gripper: self.gripper.clone(),
            annotations: self.annotations.clone(),
            steps: self.steps.clone(),
        }
    }

    pub fn calib(&self) -> &CameraCalib {
        &self.cameras[&self.primary_camera]
    }

    pub fn frame(&self, index: i64) -> Option<&Frame> {
        self.frames
            .binary_search_by_key(&index, |f| f.index)
            .ok()
            .map(|i| &self.frames[i])
    }

    pub fn first_frame(&self) -> &Frame {
        &self.frames[0]
    }

    pub fn last_frame(&self) -> &Frame {
        self.frames.last().expect("validated: frames non-empty")
    }

    pub fn annotations_on(&self, frame_index: i64) -> Vec<&ObjectAnnotation> {
        self.annotations
            .iter()
            .filter(|a| a.frame_index == frame_index)
            .collect()
    }

    /// Frame indices that carry annotations, ascending.
    pub fn annotated_frames(&self) -> Vec<i64> {
        self.annotations
            .iter()
            .map(|a| a.frame_index)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Provider-facing image key: `<episode id>/<relative image path>`.
    pub fn image_key(&self, frame: &Frame) -> String {
        format!("{}/{}", self.id, frame.image)
    }

    pub fn load_mask(&self, ann: &ObjectAnnotation) -> Result<Option<Mask>, EpisodeError> {
        match &ann.mask {
            None => Ok(None),
            Some(rel) => Ok(Some(Mask::load_png(&self.root.join(rel))?)),
        }
    }

    pub fn load_depth(&self, frame: &Frame) -> Result<Option<DepthMap>, EpisodeError> {
        match &frame.depth {
            None => Ok(None),
            Some(rel) => Ok(Some(DepthMap::load(
                &self.root.join(rel),
                frame.width,
                frame.height,
            )?)),
        }
    }

    /// Relative asset paths referenced by the manifest.
    pub fn referenced_assets(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for f in &self.frames {
            out.push(f.image.as_str());
            if let Some(d) = &f.depth {
                out.push(d.as_str());
            }
        }
        for a in &self.annotations {
            if let Some(m) = &a.mask {
                out.push(m.as_str());
            }
        }
        out
    }

    /// Writes `manifest.json` into `dir` (assets are written by the caller).
    pub fn write_manifest(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&self.to_manifest())
            .expect("manifest serialization is infallible");
        fs::write(dir.join(MANIFEST_FILE), json)
    }
}

/// Loads and validates an episode directory.
pub fn load_episode(dir: &Path) -> Result<Episode, EpisodeError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(EpisodeError::MissingManifest(manifest_path));
    }
    let text = fs::read_to_string(&manifest_path).map_err(|e| EpisodeError::Parse {
        path: manifest_path.clone(),
        message: e.to_string(),
    })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| EpisodeError::Parse {
        path: manifest_path.clone(),
        message: e.to_string(),
    })?;
    let episode = Episode::from_manifest(manifest, dir.to_path_buf())?;
    for rel in episode.referenced_assets() {
        let p = dir.join(rel);
        if !p.is_file() {
            return Err(EpisodeError::DanglingReference(p));
        }
    }
    Ok(episode)
}

/// Episode directories (those holding a manifest) under `root`, sorted by name.
pub fn discover_episodes(root: &Path) -> std::io::Result<Vec<PathBuf>> {
    if root.join(MANIFEST_FILE).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}
