use rand::seq::SliceRandom;
use rand::Rng;

use super::{make_sample, Forged, GenContext, SampleGenError};
use crate::episode::{Episode, StepLabel};
use crate::raster::Mask;
use crate::sample::{Answer, SampleFamily, Verdict};
use crate::seed::{derive_seed, rng};
use crate::trajectory::{
    defect_holds, filter_trajectory, perturb_trajectory, resample_trajectory, tip_center_px, EventKind,
    NegativeKind, PerturbContext, Segment, Trajectory2D, TrajectoryError, Validity, DEFAULT_MAX_RATIO,
    DEFAULT_MIN_LEN_PX, MAX_RESAMPLED, MIN_RESAMPLED,
};
use crate::types::{ObjectAnnotation, Point2D};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajParams {
    pub min_len_px: f64,
    pub max_ratio: f64,
    /// Inclusive range the resampled length is drawn from.
    pub n_min: usize,
    pub n_max: usize,
    /// Minimum displacement of a perturbed point, pixels.
    pub magnitude_px: f64,
}

impl Default for TrajParams {
    fn default() -> Self {
        Self {
            min_len_px: DEFAULT_MIN_LEN_PX,
            max_ratio: DEFAULT_MAX_RATIO,
            n_min: MIN_RESAMPLED,
            n_max: MAX_RESAMPLED,
            magnitude_px: 40.0,
        }
    }
}

/// Projected gripper path over a segment, one rounded pixel per frame with
/// repeats collapsed. Keypoints are the first point and the point at the
/// end of the segment's gripper event.
pub fn segment_trajectory(episode: &Episode, segment: &Segment) -> Result<Trajectory2D, SampleGenError> {
    let calib = episode.calib();
    let mut points: Vec<Point2D> = Vec::new();
    let mut frames = Vec::new();
    let mut event_idx = 0;
    for g in &episode.gripper.samples {
        if g.frame_index < segment.start_frame || g.frame_index > segment.end_frame {
            continue;
        }
        let Some(p) = tip_center_px(g, calib) else { continue };
        let p = p.rounded();
        if points.last() != Some(&p) {
            points.push(p);
            frames.push(g.frame_index);
        }
        if g.frame_index <= segment.event.end {
            event_idx = points.len() - 1;
        }
    }
    if points.len() < 2 {
        return Err(SampleGenError::MissingData(format!(
            "fingertip track for frames {}..={}",
            segment.start_frame, segment.end_frame
        )));
    }
    Ok(Trajectory2D::new(points, vec![0, event_idx], frames)?)
}

/// Filters and resamples a segment path.
pub(crate) fn prepared_trajectory(
    episode: &Episode,
    segment: &Segment,
    params: &TrajParams,
    seed: u64,
) -> Result<Trajectory2D, SampleGenError> {
    let raw = segment_trajectory(episode, segment)?;
    if let Validity::Invalid(reason) = filter_trajectory(&raw.points, params.min_len_px, params.max_ratio) {
        return Err(SampleGenError::Filtered(reason));
    }
    let mut r = rng(derive_seed(seed, "n"));
    let n = r.gen_range(params.n_min..=params.n_max);
    Ok(resample_trajectory(&raw, n, derive_seed(seed, "resample"))?)
}

/// Step label matching segment `index`, when the episode lists steps.
pub(crate) fn step_for<'a>(episode: &'a Episode, segments: &[Segment], index: usize) -> Option<&'a StepLabel> {
    episode
        .steps
        .get(index)
        .filter(|s| s.skill == segments[index].skill.name)
}

pub(crate) fn skill_phrase(name: &str) -> String {
    name.replace('_', " ")
}

fn object_phrase(step: Option<&StepLabel>) -> String {
    step.and_then(|s| s.object.as_deref().or(s.target.as_deref()))
        .map_or_else(|| "the object".to_string(), |l| format!("the {l}"))
}

/// Positive trajectory sample for segment `index`, shown on the segment's
/// first frame.
pub fn gen_trajectory_sample(
    episode: &Episode,
    segments: &[Segment],
    index: usize,
    ctx: &GenContext,
    params: &TrajParams,
    seed: u64,
) -> Result<Forged, SampleGenError> {
    let seg = &segments[index];
    let traj = prepared_trajectory(episode, seg, params, seed)?;
    let step = step_for(episode, segments, index);
    let object = object_phrase(step);
    let skill = skill_phrase(&seg.skill.name);
    let mut r = rng(seed);
    let prompt = ctx.prompt("traj", "default", &[("skill", &skill), ("object", &object)], &mut r)?;
    let frame = episode
        .frame(seg.start_frame)
        .ok_or_else(|| SampleGenError::MissingData(format!("frame {}", seg.start_frame)))?;
    let mut s = make_sample(
        SampleFamily::Traj,
        &episode.id,
        Some(seg.start_frame),
        prompt,
        vec![episode.image_key(frame)],
        Answer::Trajectory(traj),
        seed,
    );
    s.context.image_size = Some((frame.width, frame.height));
    s.tags.meta.insert("skill".into(), seg.skill.name.clone());
    s.tags.meta.insert("segment".into(), index.to_string());
    Ok(Forged::bare(s))
}

/// Annotated frame nearest to `frame`.
fn nearest_annotated(episode: &Episode, frame: i64) -> Option<i64> {
    episode.annotated_frames().into_iter().min_by_key(|f| ((f - frame).abs(), *f))
}

fn annotation_mask(episode: &Episode, ann: &ObjectAnnotation, size: (u32, u32)) -> Result<Option<Mask>, SampleGenError> {
    if let Some(m) = episode.load_mask(ann)? {
        return Ok(Some(m));
    }
    Ok(ann.box2d.map(|b| Mask::from_box(size.0, size.1, &b)))
}

/// Scene facts for perturbing a segment path.
struct NegativeScene {
    gripper_px: Point2D,
    target: Option<Mask>,
    obstacles: Vec<Mask>,
    labels: Vec<String>,
}

fn negative_scene(
    episode: &Episode,
    seg: &Segment,
    step: Option<&StepLabel>,
    traj: &Trajectory2D,
    size: (u32, u32),
) -> Result<NegativeScene, SampleGenError> {
    let gripper_px = episode
        .gripper
        .at_frame(seg.start_frame)
        .and_then(|g| tip_center_px(g, episode.calib()))
        .map(|p| p.rounded())
        .unwrap_or_else(|| traj.start());
    let held = step.and_then(|s| s.object.clone());
    let target_label = match seg.event_kind {
        EventKind::Opening => step.and_then(|s| s.target.clone()).or(held.clone()),
        EventKind::Closing => held.clone(),
    };
    let labels: Vec<String> = episode.annotations.iter().map(|a| a.label.clone()).collect();
    let (mut target, mut obstacles) = (None, Vec::new());
    if let Some(f) = nearest_annotated(episode, seg.start_frame) {
        for ann in episode.annotations_on(f) {
            let is_target = target_label.as_deref() == Some(ann.label.as_str());
            let is_held = held.as_deref() == Some(ann.label.as_str());
            if is_target && target.is_none() {
                target = annotation_mask(episode, ann, size)?;
            } else if !is_target && !is_held {
                if let Some(m) = annotation_mask(episode, ann, size)? {
                    obstacles.push(m);
                }
            }
        }
    }
    Ok(NegativeScene {
        gripper_px,
        target,
        obstacles,
        labels,
    })
}

fn perturbation_failed(kind: NegativeKind, reason: impl Into<String>) -> SampleGenError {
    SampleGenError::Trajectory(TrajectoryError::PerturbationFailed {
        kind: kind.code(),
        reason: reason.into(),
    })
}

/// One negative judgement sample per perturbation kind for segment
/// `index`. A kind whose defect cannot be produced, or is already present
/// on the original path, yields a perturbation failure.
pub fn gen_negative_samples(
    episode: &Episode,
    segments: &[Segment],
    index: usize,
    ctx: &GenContext,
    params: &TrajParams,
    seed: u64,
) -> Result<Vec<(NegativeKind, Result<Forged, SampleGenError>)>, SampleGenError> {
    let seg = &segments[index];
    let original = prepared_trajectory(episode, seg, params, seed)?;
    let frame = episode
        .frame(seg.start_frame)
        .ok_or_else(|| SampleGenError::MissingData(format!("frame {}", seg.start_frame)))?;
    let size = (frame.width, frame.height);
    let step = step_for(episode, segments, index);
    let ns = negative_scene(episode, seg, step, &original, size)?;
    let skill = skill_phrase(&seg.skill.name);
    let object = object_phrase(step);

    let mut out = Vec::new();
    for kind in NegativeKind::ALL {
        let kseed = derive_seed(seed, kind.family());
        let pctx = PerturbContext {
            gripper_px: Some(ns.gripper_px),
            target_mask: ns.target.as_ref(),
            obstacle_masks: Some(&ns.obstacles),
            object_present: Some(kind != NegativeKind::ObjectAbsent),
            image_size: Some(size),
        };
        let result = (|| -> Result<Forged, SampleGenError> {
            let present = defect_holds(kind, &original, false, &original, params.magnitude_px, &pctx)
                .map_err(|e| perturbation_failed(kind, e.to_string()))?;
            if present {
                return Err(perturbation_failed(kind, "defect already present on the original path"));
            }
            let neg = perturb_trajectory(&original, kind, params.magnitude_px, kseed, &pctx).map_err(|e| match e {
                TrajectoryError::MissingContext { field, .. } => perturbation_failed(kind, format!("missing {field}")),
                e => e.into(),
            })?;
            let shows = defect_holds(
                kind,
                &neg.trajectory,
                neg.text_image_mismatch,
                &original,
                params.magnitude_px,
                &pctx,
            )?;
            if !shows {
                return Err(perturbation_failed(kind, "defect not produced"));
            }
            let mut r = rng(kseed);
            let object = if kind == NegativeKind::ObjectAbsent {
                let mut absent: Vec<&String> = ctx
                    .templates
                    .distractor_labels
                    .iter()
                    .filter(|l| !ns.labels.contains(l))
                    .collect();
                absent.shuffle(&mut r);
                let l = absent
                    .first()
                    .ok_or_else(|| perturbation_failed(kind, "no absent label available"))?;
                format!("the {l}")
            } else {
                object.clone()
            };
            let shown = Answer::Trajectory(neg.trajectory.clone()).render();
            let prompt = ctx.prompt(
                "traj-neg",
                "default",
                &[("trajectory", &shown), ("skill", &skill), ("object", &object)],
                &mut r,
            )?;
            let mut s = make_sample(
                SampleFamily::TrajNeg,
                &episode.id,
                Some(seg.start_frame),
                prompt,
                vec![episode.image_key(frame)],
                Answer::Judgment {
                    verdict: Verdict::Irrational,
                    reason: neg.reason.clone(),
                    kind: Some(kind.code()),
                },
                kseed,
            );
            s.context.trajectory = Some(neg.trajectory);
            s.context.pixel = Some(ns.gripper_px);
            s.context.image_size = Some(size);
            let meta = &mut s.tags.meta;
            meta.insert("kind".into(), kind.family().into());
            meta.insert("magnitude_px".into(), params.magnitude_px.to_string());
            meta.insert("original".into(), Answer::Trajectory(original.clone()).render());
            meta.insert("mismatch".into(), neg.text_image_mismatch.to_string());
            meta.insert("segment".into(), index.to_string());
            let mask = (kind == NegativeKind::EndOffTarget).then(|| ns.target.clone()).flatten();
            Ok(Forged { sample: s, mask })
        })();
        out.push((kind, result));
    }
    Ok(out)
}
