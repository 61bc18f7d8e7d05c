//! Splitting an episode into atomic-skill segments at gripper keyframes.

use serde::{Deserialize, Serialize};

use super::keyframes::{KeyframeSet, Transition};
use super::skills::{AtomicSkill, BoundaryRule};
use super::TrajectoryError;
use crate::episode::Episode;
use crate::geometry::project_point;
use crate::types::{CameraCalib, GripperSample, Point2D};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Closing,
    Opening,
}

impl EventKind {
    fn as_str(self) -> &'static str {
        match self {
            EventKind::Closing => "closing",
            EventKind::Opening => "opening",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    /// Pixel distance the gripper center must travel past an event before
    /// the segment closes.
    pub lift_px: f64,
    /// Require pick segments to end at a closing and place at an opening.
    pub check_rules: bool,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            lift_px: 40.0,
            check_rules: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub skill: AtomicSkill,
    /// Inclusive frame range.
    pub start_frame: i64,
    pub end_frame: i64,
    pub event: Transition,
    pub event_kind: EventKind,
}

/// Gripper center projected into the primary camera.
pub fn tip_center_px(sample: &GripperSample, calib: &CameraCalib) -> Option<Point2D> {
    sample.tip_center().and_then(|c| project_point(&c, calib).ok())
}

fn sorted_events(keyframes: &KeyframeSet) -> Vec<(Transition, EventKind)> {
    let mut ev: Vec<_> = keyframes
        .closings
        .iter()
        .map(|t| (*t, EventKind::Closing))
        .chain(keyframes.openings.iter().map(|t| (*t, EventKind::Opening)))
        .collect();
    ev.sort_by_key(|(t, _)| (t.end, t.start));
    ev
}

/// First frame after `event.end` where the gripper center is `lift_px`
/// away from where it was at `event.end`, clamped to `[event.end, cap]`.
fn boundary_after(episode: &Episode, event: &Transition, cap: i64, lift_px: f64) -> i64 {
    let calib = episode.calib();
    let origin = episode
        .gripper
        .at_frame(event.end)
        .and_then(|s| tip_center_px(s, calib));
    let mut boundary = cap;
    if let Some(origin) = origin {
        for s in episode.gripper.samples.iter().filter(|s| s.frame_index > event.end) {
            if s.frame_index > cap {
                break;
            }
            if let Some(p) = tip_center_px(s, calib) {
                if p.distance(&origin) >= lift_px {
                    boundary = s.frame_index;
                    break;
                }
            }
        }
    } else {
        boundary = event.end;
    }
    boundary.clamp(event.end, cap.max(event.end))
}

/// Partitions the episode's frames into one segment per keyframe event.
///
/// Each segment ends where the gripper has moved `lift_px` past its event,
/// never reaching into the next event's transition; the last segment runs to
/// the final frame.
pub fn segment_episode(
    episode: &Episode,
    keyframes: &KeyframeSet,
    skills: &[AtomicSkill],
    params: &SegmentParams,
) -> Result<Vec<Segment>, TrajectoryError> {
    let events = sorted_events(keyframes);
    if events.len() != skills.len() {
        return Err(TrajectoryError::SkillCountMismatch {
            skills: skills.len(),
            segments: events.len(),
        });
    }
    if params.check_rules {
        for (skill, (_, kind)) in skills.iter().zip(&events) {
            let ok = match skill.boundary_rule {
                BoundaryRule::GraspThenLift => *kind == EventKind::Closing,
                BoundaryRule::ReleaseThenRetreat => *kind == EventKind::Opening,
                BoundaryRule::Unspecified => true,
            };
            if !ok {
                return Err(TrajectoryError::SkillEventMismatch {
                    skill: skill.name.clone(),
                    event: kind.as_str(),
                });
            }
        }
    }
    if events.is_empty() {
        return Ok(Vec::new());
    }

    let frames: Vec<i64> = episode.frames.iter().map(|f| f.index).collect();
    let first = frames[0];
    let last = *frames.last().expect("episode has frames");
    let next_frame = |f: i64| frames.iter().copied().find(|&g| g > f).unwrap_or(last);

    let mut out = Vec::with_capacity(events.len());
    let mut start = first;
    for (k, ((event, kind), skill)) in events.iter().zip(skills).enumerate() {
        let end = match events.get(k + 1) {
            Some((next, _)) => boundary_after(episode, event, next.start - 1, params.lift_px),
            None => last,
        };
        out.push(Segment {
            skill: skill.clone(),
            start_frame: start,
            end_frame: end,
            event: *event,
            event_kind: *kind,
        });
        start = next_frame(end);
    }
    Ok(out)
}
