//! Re-checks emitted samples against their family invariants.

use std::path::Path;

use thiserror::Error;

use super::box3d::refer_candidates;
use super::cot::strip_cot;
use super::refs::{disambiguate_labels, resolve_ref, ObjectRef};
use super::relations::{evaluate_relation, RelationKind, Space, SpatialRelation, Truth};
use super::{Scene, SceneObject};
use crate::episode::Episode;
use crate::raster::Mask;
use crate::sample::{parse_point_list, Answer, QASample, SampleFamily, Verdict};
use crate::trajectory::{defect_holds, skills, NegativeKind, PerturbContext, Trajectory2D, MAX_RESAMPLED, MIN_RESAMPLED};

#[derive(Debug, Error, PartialEq)]
#[error("sample {id}: {message}")]
pub struct ValidationError {
    pub id: String,
    pub message: String,
}

fn fail(s: &QASample, message: impl Into<String>) -> ValidationError {
    ValidationError {
        id: s.id.clone(),
        message: message.into(),
    }
}

fn check_resampled(s: &QASample, t: &Trajectory2D) -> Result<(), ValidationError> {
    t.check().map_err(|e| fail(s, e.to_string()))?;
    if !(MIN_RESAMPLED..=MAX_RESAMPLED).contains(&t.len()) {
        return Err(fail(s, format!("trajectory has {} points", t.len())));
    }
    Ok(())
}

fn load_mask(s: &QASample, out_dir: &Path) -> Result<Mask, ValidationError> {
    let rel = s.context.mask.as_ref().ok_or_else(|| fail(s, "no stored mask"))?;
    Mask::load_png(&out_dir.join(rel)).map_err(|e| fail(s, e.to_string()))
}

fn check_ref(s: &QASample, episode: &Episode) -> Result<(), ValidationError> {
    let (Some(r), Some(id), Some(frame)) = (s.tags.meta.get("ref"), s.tags.meta.get("object_id"), s.tags.frame) else {
        return Ok(());
    };
    let r: ObjectRef = serde_json::from_str(r).map_err(|e| fail(s, format!("bad ref: {e}")))?;
    let scene = Scene::from_episode(episode, frame).map_err(|e| fail(s, e.to_string()))?;
    let objects: Vec<SceneObject> = if s.tags.family == SampleFamily::Box3d {
        scene.objects.into_iter().filter(|o| o.box3d.is_some()).collect()
    } else {
        scene.objects
    };
    let hit = resolve_ref(&objects, &r).map_err(|e| fail(s, e.to_string()))?;
    if &hit.id != id {
        return Err(fail(s, format!("ref '{}' resolves to {} not {id}", r.render(), hit.id)));
    }
    let refs = disambiguate_labels(&objects).map_err(|e| fail(s, e.to_string()))?;
    for (oid, oref) in &refs {
        let back = resolve_ref(&objects, oref).map_err(|e| fail(s, e.to_string()))?;
        if &back.id != oid {
            return Err(fail(s, format!("scene ref '{}' is not a bijection", oref.render())));
        }
    }
    Ok(())
}

fn check_negative(s: &QASample, out_dir: &Path, verdict: Verdict, kind: Option<u8>) -> Result<(), ValidationError> {
    if verdict != Verdict::Irrational {
        return Err(fail(s, "negative sample must be irrational"));
    }
    let kind = kind
        .ok_or_else(|| fail(s, "missing kind"))
        .and_then(|k| NegativeKind::try_from(k).map_err(|e| fail(s, e.to_string())))?;
    let shown = s.context.trajectory.as_ref().ok_or_else(|| fail(s, "no trajectory shown"))?;
    shown.check().map_err(|e| fail(s, e.to_string()))?;
    let magnitude: f64 = s
        .tags
        .meta
        .get("magnitude_px")
        .and_then(|m| m.parse().ok())
        .ok_or_else(|| fail(s, "missing magnitude"))?;
    let original = s
        .tags
        .meta
        .get("original")
        .and_then(|o| parse_point_list(o))
        .ok_or_else(|| fail(s, "missing original path"))?;
    let original = Trajectory2D::from_points(original).map_err(|e| fail(s, e.to_string()))?;
    let mismatch = s.tags.meta.get("mismatch").map(String::as_str) == Some("true");
    let mask = match kind {
        NegativeKind::EndOffTarget => Some(load_mask(s, out_dir)?),
        _ => None,
    };
    let ctx = PerturbContext {
        gripper_px: s.context.pixel,
        target_mask: mask.as_ref(),
        obstacle_masks: None,
        object_present: None,
        image_size: s.context.image_size,
    };
    let holds = match kind {
        // Obstacle masks are not stored; the check ran at generation time.
        NegativeKind::ThroughObstacle => true,
        _ => defect_holds(kind, shown, mismatch, &original, magnitude, &ctx).map_err(|e| fail(s, e.to_string()))?,
    };
    if !holds {
        return Err(fail(s, format!("defect {} not present", kind.family())));
    }
    Ok(())
}

fn check_refer(s: &QASample, bbox: &crate::types::Box3D) -> Result<(), ValidationError> {
    let (Some(anchor), Some(dir)) = (&s.context.anchor_box, &s.context.direction) else {
        return Ok(());
    };
    let kind = RelationKind::parse(dir).ok_or_else(|| fail(s, format!("unknown direction {dir}")))?;
    let mk = |id: &str, b: &crate::types::Box3D| SceneObject {
        id: id.into(),
        label: id.into(),
        box2d: None,
        box3d: Some(*b),
        depth: Some(b.cz),
    };
    let objs = vec![mk("answer", bbox), mk("anchor", anchor)];
    let rel = SpatialRelation::new(kind, vec!["anchor".into()]).map_err(|e| fail(s, e.to_string()))?;
    let t = evaluate_relation(&objs, &rel, "answer", Space::Camera).map_err(|e| fail(s, e.to_string()))?;
    if t != Truth::Holds {
        return Err(fail(s, format!("answer box is not {dir} of the anchor")));
    }
    Ok(())
}

fn check_refer_uniqueness(s: &QASample, episode: &Episode) -> Result<(), ValidationError> {
    let (Some(target), Some(anchor), Some(dir), Some(frame)) = (
        s.tags.meta.get("object_id"),
        s.tags.meta.get("anchor_id"),
        s.context.direction.as_deref(),
        s.tags.frame,
    ) else {
        return Ok(());
    };
    let scene = Scene::from_episode(episode, frame).map_err(|e| fail(s, e.to_string()))?;
    let objects: Vec<SceneObject> = scene.objects.into_iter().filter(|o| o.box3d.is_some()).collect();
    let cands = refer_candidates(&objects).map_err(|e| fail(s, e.to_string()))?;
    if !cands
        .iter()
        .any(|(t, a, k)| &t.id == target && &a.id == anchor && k.as_str() == dir)
    {
        return Err(fail(s, "refer question does not single out its answer"));
    }
    Ok(())
}

/// Checks `sample` against its family's invariants. `out_dir` resolves
/// stored masks; with `episode`, references are re-resolved on the scene.
pub fn validate_sample(sample: &QASample, out_dir: &Path, episode: Option<&Episode>) -> Result<(), ValidationError> {
    let s = sample;
    s.check_shape().map_err(|m| fail(s, m))?;
    if s.prompt.trim().is_empty() || s.prompt.contains('{') {
        return Err(fail(s, "prompt is empty or has unfilled slots"));
    }
    match (&s.tags.family, &s.answer) {
        (SampleFamily::Cot, _) => {
            if s.think.as_deref().is_none_or(|t| t.trim().is_empty()) {
                return Err(fail(s, "empty reasoning"));
            }
            return validate_sample(&strip_cot(s), out_dir, episode);
        }
        (SampleFamily::Points | SampleFamily::Placement, Answer::Points(ps)) => {
            let mask = load_mask(s, out_dir)?;
            if let Some(p) = ps.points.iter().find(|p| !mask.contains(*p)) {
                return Err(fail(s, format!("point {p:?} outside mask")));
            }
            let mut seen = ps.points.clone();
            seen.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
            if seen.windows(2).any(|w| w[0] == w[1]) {
                return Err(fail(s, "repeated point"));
            }
        }
        (SampleFamily::Grasp, Answer::Grasp(g)) => {
            if g.p1 == g.p2 {
                return Err(fail(s, "fingertips coincide"));
            }
        }
        (SampleFamily::Traj, Answer::Trajectory(t)) => check_resampled(s, t)?,
        (SampleFamily::TrajNeg, Answer::Judgment { verdict, kind, .. }) => check_negative(s, out_dir, *verdict, *kind)?,
        (SampleFamily::Box3d, Answer::Box3d { bbox }) => {
            if !bbox.is_valid() {
                return Err(fail(s, "invalid 3D box"));
            }
            check_refer(s, bbox)?;
        }
        (SampleFamily::Relation, Answer::Text { text }) => {
            if text.trim().is_empty() {
                return Err(fail(s, "empty answer"));
            }
            if !s.context.options.is_empty() {
                for a in text.split(", ") {
                    if !s.context.options.iter().any(|o| o == a) {
                        return Err(fail(s, format!("answer '{a}' not among options")));
                    }
                }
            }
        }
        (SampleFamily::Plan, Answer::Plan { steps }) => {
            if steps.is_empty() {
                return Err(fail(s, "empty plan"));
            }
            for st in steps {
                if skills::lookup(&st.skill).is_none() {
                    return Err(fail(s, format!("unknown skill {}", st.skill)));
                }
                check_resampled(s, &st.trajectory)?;
            }
        }
        _ => {}
    }
    if let Some(ep) = episode {
        check_ref(s, ep)?;
        if s.tags.family == SampleFamily::Box3d {
            check_refer_uniqueness(s, ep)?;
        }
    }
    Ok(())
}
