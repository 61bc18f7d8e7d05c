//! QA sample generation for every sample family.

mod box3d;
mod cot;
mod grasp;
mod placement;
mod planning;
mod points;
pub mod provider;
mod refs;
mod relation_qa;
mod relations;
mod templates;
mod traj;
pub mod validate;

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::episode::{Episode, EpisodeError};
use crate::geometry::GeometryError;
use crate::raster::Mask;
use crate::sample::{Answer, QASample, SampleContext, SampleFamily, SampleTags};
use crate::seed::SampleRng;
use crate::trajectory::{InvalidReason, TrajectoryError};
use crate::types::{Box2D, Box3D, ObjectAnnotation, Point2D};

pub use box3d::{gen_3dbox_qa, BoxQaMode};
pub use cot::{strip_cot, trajectory_cot_steps, wrap_cot, TRAJECTORY_COT_STAGES};
pub use grasp::{gen_grasp_sample, FINGERTIP_LABEL};
pub use placement::{gen_placement_sample, PlacementFamily};
pub use planning::gen_planning_sample;
pub use points::{gen_pointing_sample, sample_points_in_mask, PromptStyle};
pub use provider::{FixtureProvider, LiveProvider, MemoProvider, NullProvider, Provider, ProviderError};
pub use refs::{disambiguate_labels, resolve_ref, Axis, ObjectRef};
pub use relation_qa::{gen_relation_qa_auto, gen_spatial_relation_qa, scene_relations, QaFormat, DISTRACTORS};
pub use relations::{evaluate_relation, superlative_winner, RelationKind, Space, SpatialRelation, Truth, MARGIN_FRACTION};
pub use templates::TemplateTable;
pub use traj::{gen_negative_samples, gen_trajectory_sample, segment_trajectory, TrajParams};
pub use validate::{validate_sample, ValidationError};

#[derive(Debug, Error)]
pub enum SampleGenError {
    #[error("mask has {have} pixels, need {need}")]
    MaskTooSmall { have: usize, need: usize },
    #[error("provider has no answer: {0}")]
    ProviderMiss(String),
    #[error(transparent)]
    Provider(ProviderError),
    #[error("'{0}' matches more than one object")]
    AmbiguousRef(String),
    #[error("'{0}' matches no object")]
    UnknownRef(String),
    #[error("same-label objects '{0}' cannot be told apart")]
    UnresolvableDuplicates(String),
    #[error("episode has no placement event")]
    NoPlacementEvent,
    #[error("episode has no grasp event")]
    NoGraspEvent,
    #[error("scene has no usable objects")]
    EmptyScene,
    #[error("no object stands in an unambiguous relation")]
    NoUnambiguousRelation,
    #[error("relation cannot be decided: {0}")]
    RelationUndecidable(String),
    #[error("only {have} distractors available")]
    InsufficientDistractors { have: usize },
    #[error("malformed relation: {0}")]
    BadRelation(String),
    #[error("no reasoning steps given")]
    EmptySteps,
    #[error("trajectory reasoning needs {need} stages, got {have}")]
    WrongStageCount { need: usize, have: usize },
    #[error("planning needs at least 2 steps, episode has {have}")]
    TooFewSteps { have: usize },
    #[error("segment {index} has no valid trajectory: {reason}")]
    InvalidSegmentTrajectory { index: usize, reason: String },
    #[error("trajectory filtered: {}", .0.as_str())]
    Filtered(InvalidReason),
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("unknown template {family}/{style}")]
    UnknownTemplate { family: String, style: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
}

impl From<ProviderError> for SampleGenError {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::Miss(what) => SampleGenError::ProviderMiss(what),
            other => SampleGenError::Provider(other),
        }
    }
}

impl SampleGenError {
    /// Short snake-case tag for stats.
    pub fn reason(&self) -> String {
        match self {
            SampleGenError::MaskTooSmall { .. } => "mask_too_small".into(),
            SampleGenError::ProviderMiss(_) => "provider_miss".into(),
            SampleGenError::Provider(_) => "provider_error".into(),
            SampleGenError::AmbiguousRef(_) => "ambiguous_ref".into(),
            SampleGenError::UnknownRef(_) => "unknown_ref".into(),
            SampleGenError::UnresolvableDuplicates(_) => "unresolvable_duplicates".into(),
            SampleGenError::NoPlacementEvent => "no_placement_event".into(),
            SampleGenError::NoGraspEvent => "no_grasp_event".into(),
            SampleGenError::EmptyScene => "empty_scene".into(),
            SampleGenError::NoUnambiguousRelation => "no_unambiguous_relation".into(),
            SampleGenError::RelationUndecidable(_) => "relation_undecidable".into(),
            SampleGenError::InsufficientDistractors { .. } => "insufficient_distractors".into(),
            SampleGenError::BadRelation(_) => "bad_relation".into(),
            SampleGenError::EmptySteps => "empty_steps".into(),
            SampleGenError::WrongStageCount { .. } => "wrong_stage_count".into(),
            SampleGenError::TooFewSteps { .. } => "too_few_steps".into(),
            SampleGenError::InvalidSegmentTrajectory { .. } => "invalid_segment_trajectory".into(),
            SampleGenError::Filtered(r) => r.as_str().into(),
            SampleGenError::MissingData(_) => "missing_data".into(),
            SampleGenError::BadRequest(_) => "bad_request".into(),
            SampleGenError::UnknownTemplate { .. } => "unknown_template".into(),
            SampleGenError::Geometry(e) => match e {
                GeometryError::BehindCamera { .. } => "behind_camera".into(),
                GeometryError::DegeneratePose => "degenerate_pose".into(),
                _ => "geometry".into(),
            },
            SampleGenError::Trajectory(e) => match e {
                TrajectoryError::PerturbationFailed { .. } => "perturbation_failed".into(),
                TrajectoryError::TooFewPoints { .. } => "too_few_points".into(),
                TrajectoryError::TooManyKeypoints { .. } => "too_many_keypoints".into(),
                TrajectoryError::ChatterRejected { .. } => "chatter_rejected".into(),
                TrajectoryError::SkillCountMismatch { .. } => "skill_count_mismatch".into(),
                _ => "trajectory".into(),
            },
            SampleGenError::Episode(_) => "episode".into(),
        }
    }

    /// Whether this is a provider miss (reported separately in stats).
    pub fn is_provider_miss(&self) -> bool {
        matches!(self, SampleGenError::ProviderMiss(_))
    }
}

/// Shared generation inputs.
#[derive(Clone, Copy)]
pub struct GenContext<'a> {
    pub provider: &'a dyn Provider,
    pub templates: &'a TemplateTable,
    /// Send rendered prompts through the provider's paraphraser.
    pub paraphrase: bool,
}

impl<'a> GenContext<'a> {
    pub fn new(provider: &'a dyn Provider, templates: &'a TemplateTable) -> Self {
        Self {
            provider,
            templates,
            paraphrase: false,
        }
    }

    pub(crate) fn prompt(
        &self,
        family: &str,
        style: &str,
        vars: &[(&str, &str)],
        rng: &mut SampleRng,
    ) -> Result<String, SampleGenError> {
        let text = self.templates.render(family, style, vars, rng)?;
        if self.paraphrase {
            Ok(self.provider.paraphrase(&text)?)
        } else {
            Ok(text)
        }
    }
}

/// One annotated object as seen by the relation and reference logic.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneObject {
    pub id: String,
    pub label: String,
    pub box2d: Option<Box2D>,
    pub box3d: Option<Box3D>,
    /// Distance from the camera, meters.
    pub depth: Option<f64>,
}

impl SceneObject {
    pub fn from_annotation(ann: &ObjectAnnotation) -> Self {
        Self {
            id: ann.id.clone(),
            label: ann.label.clone(),
            box2d: ann.box2d,
            box3d: ann.box3d,
            depth: ann.box3d.map(|b| b.cz),
        }
    }

    pub fn centroid2d(&self) -> Option<Point2D> {
        self.box2d.map(|b| b.centroid())
    }
}

/// The objects annotated on one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub episode: String,
    pub frame: i64,
    /// Provider image key.
    pub image: String,
    pub image_size: (u32, u32),
    pub objects: Vec<SceneObject>,
}

impl Scene {
    /// Builds the scene of one frame. Objects without a 3D box take their
    /// depth from the frame's depth map at the 2D box center, when present.
    pub fn from_episode(episode: &Episode, frame_index: i64) -> Result<Self, SampleGenError> {
        let frame = episode
            .frame(frame_index)
            .ok_or_else(|| SampleGenError::MissingData(format!("frame {frame_index}")))?;
        let depth = episode.load_depth(frame)?;
        let objects = episode
            .annotations_on(frame_index)
            .into_iter()
            .map(|a| {
                let mut o = SceneObject::from_annotation(a);
                if o.depth.is_none() {
                    if let (Some(d), Some(c)) = (&depth, o.centroid2d()) {
                        o.depth = d.sample(&c).filter(|v| *v > 0.0).map(f64::from);
                    }
                }
                o
            })
            .collect();
        Ok(Self {
            episode: episode.id.clone(),
            frame: frame_index,
            image: episode.image_key(frame),
            image_size: (frame.width, frame.height),
            objects,
        })
    }

    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn labels(&self) -> Vec<&str> {
        let mut l: Vec<&str> = self.objects.iter().map(|o| o.label.as_str()).collect();
        l.sort_unstable();
        l.dedup();
        l
    }
}

/// A generated sample plus the mask its answer was drawn from, which the
/// caller stores next to the JSONL and links via `context.mask`.
#[derive(Clone, Debug, PartialEq)]
pub struct Forged {
    pub sample: QASample,
    pub mask: Option<Mask>,
}

impl Forged {
    pub fn bare(sample: QASample) -> Self {
        Self { sample, mask: None }
    }
}

/// Fills the fields every generator shares. The id is provisional; batch
/// drivers renumber it.
pub(crate) fn make_sample(
    family: SampleFamily,
    episode: &str,
    frame: Option<i64>,
    prompt: String,
    image_refs: Vec<String>,
    answer: Answer,
    seed: u64,
) -> QASample {
    QASample {
        id: format!("{}/{}", family.name(), episode),
        prompt,
        image_refs,
        answer,
        think: None,
        tags: SampleTags {
            family,
            base_family: None,
            episode: episode.to_string(),
            frame,
            meta: BTreeMap::new(),
        },
        context: SampleContext::default(),
        seed,
    }
}

pub(crate) fn pick<'a, T>(items: &'a [T], rng: &mut SampleRng) -> Option<&'a T> {
    if items.is_empty() {
        None
    } else {
        Some(&items[rng.gen_range(0..items.len())])
    }
}
