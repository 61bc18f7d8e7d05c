//! Negative trajectory samples and their defect predicates.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Trajectory2D, TrajectoryError};
use crate::raster::Mask;
use crate::sample::Verdict;
use crate::scalar::Scalar;
use crate::seed::{rng, SampleRng};
use crate::types::Point2D;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum NegativeKind {
    StartOffGripper = 1,
    EndOffTarget = 2,
    ThroughObstacle = 3,
    ObjectAbsent = 4,
    MissingFirstHalf = 5,
    MissingSecondHalf = 6,
}

impl NegativeKind {
    pub const ALL: [NegativeKind; 6] = [
        NegativeKind::StartOffGripper,
        NegativeKind::EndOffTarget,
        NegativeKind::ThroughObstacle,
        NegativeKind::ObjectAbsent,
        NegativeKind::MissingFirstHalf,
        NegativeKind::MissingSecondHalf,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn family(self) -> &'static str {
        match self {
            NegativeKind::StartOffGripper => "start_off_gripper",
            NegativeKind::EndOffTarget => "end_off_target",
            NegativeKind::ThroughObstacle => "through_obstacle",
            NegativeKind::ObjectAbsent => "object_absent",
            NegativeKind::MissingFirstHalf => "missing_first_half",
            NegativeKind::MissingSecondHalf => "missing_second_half",
        }
    }

    pub fn reason(self) -> &'static str {
        match self {
            NegativeKind::StartOffGripper => "the path does not start at the gripper",
            NegativeKind::EndOffTarget => "the path does not end at the target",
            NegativeKind::ThroughObstacle => "the path runs through an obstacle",
            NegativeKind::ObjectAbsent => "the object to manipulate is not in the image",
            NegativeKind::MissingFirstHalf => "the first half of the path is missing",
            NegativeKind::MissingSecondHalf => "the second half of the path is missing",
        }
    }
}

impl TryFrom<u8> for NegativeKind {
    type Error = TrajectoryError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        NegativeKind::ALL
            .get((v as usize).wrapping_sub(1))
            .copied()
            .ok_or(TrajectoryError::InvalidKind(v))
    }
}

impl From<NegativeKind> for u8 {
    fn from(k: NegativeKind) -> u8 {
        k.code()
    }
}

/// Scene facts a perturbation may need.
#[derive(Clone, Debug, Default)]
pub struct PerturbContext<'a, T = f64> {
    pub gripper_px: Option<Point2D<T>>,
    pub target_mask: Option<&'a Mask>,
    pub obstacle_masks: Option<&'a [Mask]>,
    pub object_present: Option<bool>,
    /// Width and height; perturbed points are kept inside when set.
    pub image_size: Option<(u32, u32)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeTrajectorySample<T = f64> {
    pub trajectory: Trajectory2D<T>,
    pub kind: NegativeKind,
    pub verdict: Verdict,
    pub reason: String,
    /// Set for kind 4: the geometry is untouched, the prompt is wrong.
    #[serde(default)]
    pub text_image_mismatch: bool,
}

const ATTEMPTS: usize = 32;

fn failed(kind: NegativeKind, reason: impl Into<String>) -> TrajectoryError {
    TrajectoryError::PerturbationFailed {
        kind: kind.code(),
        reason: reason.into(),
    }
}

fn missing(kind: NegativeKind, field: &'static str) -> TrajectoryError {
    TrajectoryError::MissingContext {
        kind: kind.code(),
        field,
    }
}

fn unit(rng: &mut SampleRng) -> (f64, f64) {
    let a = rng.gen_range(0.0..TAU);
    (a.cos(), a.sin())
}

fn clamp_round<T: Scalar>(p: Point2D<T>, size: Option<(u32, u32)>) -> Point2D<T> {
    let mut r = p.rounded();
    if let Some((w, h)) = size {
        let max_x = T::from_u32(w.saturating_sub(1)).unwrap();
        let max_y = T::from_u32(h.saturating_sub(1)).unwrap();
        r.x = r.x.max(T::zero()).min(max_x);
        r.y = r.y.max(T::zero()).min(max_y);
    }
    r
}

/// Shifts `points[i]` by `d * weight(i)`, rounding the moved points.
fn shift<T: Scalar>(
    points: &[Point2D<T>],
    d: (f64, f64),
    size: Option<(u32, u32)>,
    weight: impl Fn(usize) -> f64,
) -> Vec<Point2D<T>> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let w = weight(i);
            if w == 0.0 {
                *p
            } else {
                let q = Point2D::new(p.x + T::lit(d.0 * w), p.y + T::lit(d.1 * w));
                clamp_round(q, size)
            }
        })
        .collect()
}

fn with_points<T: Scalar>(traj: &Trajectory2D<T>, points: Vec<Point2D<T>>) -> Trajectory2D<T> {
    Trajectory2D {
        points,
        keypoint_indices: traj.keypoint_indices.clone(),
        frame_indices: traj.frame_indices.clone(),
    }
}

fn slice<T: Scalar>(traj: &Trajectory2D<T>, range: std::ops::Range<usize>) -> Trajectory2D<T> {
    let start = range.start;
    Trajectory2D {
        points: traj.points[range.clone()].to_vec(),
        keypoint_indices: traj
            .keypoint_indices
            .iter()
            .filter(|k| range.contains(k))
            .map(|k| k - start)
            .collect(),
        frame_indices: traj.frame_indices[range].to_vec(),
    }
}

fn start_off_gripper<T: Scalar>(
    traj: &Trajectory2D<T>,
    magnitude: f64,
    rng: &mut SampleRng,
    ctx: &PerturbContext<T>,
) -> Result<Trajectory2D<T>, TrajectoryError> {
    let kind = NegativeKind::StartOffGripper;
    let g = ctx.gripper_px.ok_or_else(|| missing(kind, "gripper_px"))?;
    let n = traj.len();
    let half = n.div_ceil(2) as f64;
    let s = traj.start();
    let away = (s.x.as_f64() - g.x.as_f64(), s.y.as_f64() - g.y.as_f64());
    let norm = away.0.hypot(away.1);
    for attempt in 0..ATTEMPTS {
        let u = if attempt == 0 && norm > 1e-9 {
            (away.0 / norm, away.1 / norm)
        } else {
            unit(rng)
        };
        let r = magnitude + 1.0 + rng.gen_range(0.0..=0.5) * magnitude;
        let pts = shift(&traj.points, (u.0 * r, u.1 * r), ctx.image_size, |i| {
            (1.0 - i as f64 / half).max(0.0)
        });
        let cand = with_points(traj, pts);
        if cand.start().distance(&g).as_f64() >= magnitude {
            return Ok(cand);
        }
    }
    Err(failed(kind, "no offset moves the start far enough inside the image"))
}

fn end_off_target<T: Scalar>(
    traj: &Trajectory2D<T>,
    magnitude: f64,
    rng: &mut SampleRng,
    ctx: &PerturbContext<T>,
) -> Result<Trajectory2D<T>, TrajectoryError> {
    let kind = NegativeKind::EndOffTarget;
    let mask = ctx.target_mask.ok_or_else(|| missing(kind, "target_mask"))?;
    let bbox = mask.bbox().ok_or_else(|| failed(kind, "target mask is empty"))?;
    let n = traj.len();
    let m = n / 2;
    let e = traj.end();
    let c = bbox.centroid();
    let away = (e.x.as_f64() - c.x, e.y.as_f64() - c.y);
    let norm = away.0.hypot(away.1);
    for attempt in 0..ATTEMPTS {
        let u = if attempt == 0 && norm > 1e-9 {
            (away.0 / norm, away.1 / norm)
        } else {
            unit(rng)
        };
        for step in 0..12 {
            let r = magnitude + 1.0 + step as f64 * magnitude * 0.5;
            let pts = shift(&traj.points, (u.0 * r, u.1 * r), ctx.image_size, |i| {
                if i < m {
                    0.0
                } else {
                    (i - m + 1) as f64 / (n - m) as f64
                }
            });
            let cand = with_points(traj, pts);
            if end_outside(mask, &cand, magnitude) {
                return Ok(cand);
            }
        }
    }
    Err(failed(kind, "no offset moves the end clear of the target"))
}

fn end_outside<T: Scalar>(mask: &Mask, traj: &Trajectory2D<T>, magnitude: f64) -> bool {
    match mask.distance_to(&traj.end()) {
        Some(d) => d.as_f64() > magnitude,
        None => true,
    }
}

fn through_obstacle<T: Scalar>(
    traj: &Trajectory2D<T>,
    rng: &mut SampleRng,
    ctx: &PerturbContext<T>,
) -> Result<Trajectory2D<T>, TrajectoryError> {
    let kind = NegativeKind::ThroughObstacle;
    let masks = ctx.obstacle_masks.ok_or_else(|| missing(kind, "obstacle_masks"))?;
    let n = traj.len();
    if n < 3 {
        return Err(failed(kind, "no interior point to move"));
    }
    let mid = n / 2;
    let p = traj.points[mid];
    let px = (p.x.as_f64(), p.y.as_f64());
    let dist = |x: u32, y: u32| (x as f64 - px.0).hypot(y as f64 - px.1);
    let nearest = masks
        .iter()
        .flat_map(|m| m.pixels())
        .map(|(x, y)| dist(x, y))
        .fold(f64::INFINITY, f64::min);
    if !nearest.is_finite() {
        return Err(failed(kind, "every obstacle mask is empty"));
    }
    let near: Vec<(u32, u32)> = masks
        .iter()
        .flat_map(|m| m.pixels())
        .filter(|&(x, y)| dist(x, y) <= nearest + 10.0)
        .collect();
    let (tx, ty) = near[rng.gen_range(0..near.len())];
    let target = Point2D::new(T::from_u32(tx).unwrap(), T::from_u32(ty).unwrap());
    let d = (tx as f64 - px.0, ty as f64 - px.1);
    let mut pts = traj.points.clone();
    for j in [mid - 1, mid + 1] {
        if j >= 1 && j + 1 < n {
            let q = pts[j];
            pts[j] = clamp_round(
                Point2D::new(q.x + T::lit(d.0 * 0.5), q.y + T::lit(d.1 * 0.5)),
                ctx.image_size,
            );
        }
    }
    pts[mid] = target;
    Ok(with_points(traj, pts))
}

/// Builds a negative sample of `kind` from a valid trajectory.
pub fn perturb_trajectory<T: Scalar>(
    traj: &Trajectory2D<T>,
    kind: NegativeKind,
    magnitude_px: f64,
    seed: u64,
    ctx: &PerturbContext<T>,
) -> Result<NegativeTrajectorySample<T>, TrajectoryError> {
    traj.check()?;
    let mut rng = rng(seed);
    let n = traj.len();
    let mut mismatch = false;
    let trajectory = match kind {
        NegativeKind::StartOffGripper => start_off_gripper(traj, magnitude_px, &mut rng, ctx)?,
        NegativeKind::EndOffTarget => end_off_target(traj, magnitude_px, &mut rng, ctx)?,
        NegativeKind::ThroughObstacle => through_obstacle(traj, &mut rng, ctx)?,
        NegativeKind::ObjectAbsent => match ctx.object_present {
            None => return Err(missing(kind, "object_present")),
            Some(true) => return Err(failed(kind, "the object is visible in the image")),
            Some(false) => {
                mismatch = true;
                traj.clone()
            }
        },
        NegativeKind::MissingFirstHalf | NegativeKind::MissingSecondHalf => {
            if n < 4 {
                return Err(failed(kind, "too few points to truncate"));
            }
            let drop = n.div_ceil(2);
            let cand = if kind == NegativeKind::MissingFirstHalf {
                slice(traj, drop..n)
            } else {
                slice(traj, 0..n - drop)
            };
            let same = if kind == NegativeKind::MissingFirstHalf {
                cand.start() == traj.start()
            } else {
                cand.end() == traj.end()
            };
            if same {
                return Err(failed(kind, "truncation leaves the same endpoint"));
            }
            cand
        }
    };
    Ok(NegativeTrajectorySample {
        trajectory,
        kind,
        verdict: Verdict::Irrational,
        reason: kind.reason().to_string(),
        text_image_mismatch: mismatch,
    })
}

/// Whether `candidate` shows the defect that defines `kind`.
///
/// Kinds 5 and 6 are judged against `original`; kind 4 only by the
/// mismatch flag.
pub fn defect_holds<T: Scalar>(
    kind: NegativeKind,
    candidate: &Trajectory2D<T>,
    mismatch: bool,
    original: &Trajectory2D<T>,
    magnitude_px: f64,
    ctx: &PerturbContext<T>,
) -> Result<bool, TrajectoryError> {
    Ok(match kind {
        NegativeKind::StartOffGripper => {
            let g = ctx.gripper_px.ok_or_else(|| missing(kind, "gripper_px"))?;
            candidate.start().distance(&g).as_f64() >= magnitude_px
        }
        NegativeKind::EndOffTarget => {
            let mask = ctx.target_mask.ok_or_else(|| missing(kind, "target_mask"))?;
            end_outside(mask, candidate, magnitude_px)
        }
        NegativeKind::ThroughObstacle => {
            let masks = ctx.obstacle_masks.ok_or_else(|| missing(kind, "obstacle_masks"))?;
            let n = candidate.len();
            n >= 3
                && candidate.points[1..n - 1]
                    .iter()
                    .any(|p| masks.iter().any(|m| m.contains(p)))
        }
        NegativeKind::ObjectAbsent => mismatch,
        NegativeKind::MissingFirstHalf => {
            let (c, o) = (candidate.len(), original.len());
            c < o && candidate.points[..] == original.points[o - c..] && candidate.start() != original.start()
        }
        NegativeKind::MissingSecondHalf => {
            let (c, o) = (candidate.len(), original.len());
            c < o && candidate.points[..] == original.points[..c] && candidate.end() != original.end()
        }
    })
}

pub fn verify_negative<T: Scalar>(
    sample: &NegativeTrajectorySample<T>,
    original: &Trajectory2D<T>,
    magnitude_px: f64,
    ctx: &PerturbContext<T>,
) -> Result<bool, TrajectoryError> {
    Ok(sample.verdict == Verdict::Irrational
        && defect_holds(
            sample.kind,
            &sample.trajectory,
            sample.text_image_mismatch,
            original,
            magnitude_px,
            ctx,
        )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Box2D;

    fn traj8() -> Trajectory2D {
        let pts = (0..8)
            .map(|i| Point2D::new(100.0 + i as f64 * 20.0, 200.0 + i as f64 * 5.0))
            .collect();
        Trajectory2D::from_points(pts).unwrap()
    }

    #[test]
    fn kind1_moves_start_away() {
        let t = traj8();
        let ctx = PerturbContext {
            gripper_px: Some(t.start()),
            image_size: Some((640, 480)),
            ..Default::default()
        };
        let neg = perturb_trajectory(&t, NegativeKind::StartOffGripper, 40.0, 9, &ctx).unwrap();
        assert!(neg.trajectory.start().distance(&t.start()) >= 40.0);
        assert!(verify_negative(&neg, &t, 40.0, &ctx).unwrap());
        assert!(!defect_holds(NegativeKind::StartOffGripper, &t, false, &t, 40.0, &ctx).unwrap());
        assert_eq!(neg.verdict, Verdict::Irrational);
    }

    #[test]
    fn kind1_needs_gripper() {
        let t = traj8();
        assert_eq!(
            perturb_trajectory(&t, NegativeKind::StartOffGripper, 40.0, 1, &PerturbContext::default()),
            Err(TrajectoryError::MissingContext { kind: 1, field: "gripper_px" })
        );
    }

    #[test]
    fn kind5_drops_first_half() {
        let t = traj8();
        let neg =
            perturb_trajectory(&t, NegativeKind::MissingFirstHalf, 40.0, 1, &PerturbContext::default()).unwrap();
        assert!(neg.trajectory.len() <= 4);
        assert_ne!(neg.trajectory.start(), t.start());
    }

    #[test]
    fn kind3_empty_obstacles_fails() {
        let t = traj8();
        let masks: Vec<Mask> = vec![];
        let ctx = PerturbContext {
            obstacle_masks: Some(&masks),
            ..Default::default()
        };
        assert!(matches!(
            perturb_trajectory(&t, NegativeKind::ThroughObstacle, 40.0, 1, &ctx),
            Err(TrajectoryError::PerturbationFailed { kind: 3, .. })
        ));
    }

    #[test]
    fn kind2_and_kind3_hold() {
        let t = traj8();
        let target = Mask::from_box(640, 480, &Box2D::new(230.0, 220.0, 270.0, 250.0).unwrap());
        let obstacles = vec![Mask::from_box(640, 480, &Box2D::new(400.0, 50.0, 430.0, 80.0).unwrap())];
        let ctx = PerturbContext {
            gripper_px: Some(t.start()),
            target_mask: Some(&target),
            obstacle_masks: Some(&obstacles),
            object_present: Some(true),
            image_size: Some((640, 480)),
        };
        for kind in [NegativeKind::EndOffTarget, NegativeKind::ThroughObstacle] {
            assert!(!defect_holds(kind, &t, false, &t, 40.0, &ctx).unwrap());
            let neg = perturb_trajectory(&t, kind, 40.0, 5, &ctx).unwrap();
            assert!(verify_negative(&neg, &t, 40.0, &ctx).unwrap(), "{kind:?}");
        }
    }

    #[test]
    fn kind_round_trips_as_integer() {
        let s = serde_json::to_string(&NegativeKind::ThroughObstacle).unwrap();
        assert_eq!(s, "3");
        assert!(serde_json::from_str::<NegativeKind>("7").is_err());
    }
}
