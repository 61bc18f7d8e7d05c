//! End-effector trajectories: keyframe detection, skill segmentation,
//! validity filtering, keypoint-preserving resampling and negative samples.

mod keyframes;
mod perturb;
mod resample;
mod segment;
pub mod skills;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::types::Point2D;

pub use keyframes::{detect_keyframes, KeyframeParams, KeyframeSet, Transition};
pub use perturb::{
    defect_holds, perturb_trajectory, verify_negative, NegativeKind, NegativeTrajectorySample,
    PerturbContext,
};
pub use resample::{resample_trajectory, MAX_RESAMPLED, MIN_RESAMPLED};
pub use segment::{segment_episode, tip_center_px, EventKind, Segment, SegmentParams};
pub use skills::AtomicSkill;

/// Default path-length floor, pixels.
pub const DEFAULT_MIN_LEN_PX: f64 = 20.0;
/// Default ceiling on path length / displacement.
pub const DEFAULT_MAX_RATIO: f64 = 2.5;

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("invalid trajectory: {0}")]
    Invalid(String),
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("gripper trace is empty")]
    EmptyTrace,
    #[error("aperture reverses within the dwell window at frame {frame}")]
    ChatterRejected { frame: i64 },
    #[error("{skills} skills given but keyframes imply {segments} segments")]
    SkillCountMismatch { skills: usize, segments: usize },
    #[error("skill '{skill}' cannot end at a {event} event")]
    SkillEventMismatch { skill: String, event: &'static str },
    #[error("unknown atomic skill '{0}'")]
    UnknownSkill(String),
    #[error("need {need} points, trajectory has {have}")]
    TooFewPoints { need: usize, have: usize },
    #[error("{keypoints} retained keypoints do not fit in {n} points")]
    TooManyKeypoints { keypoints: usize, n: usize },
    #[error("perturbation kind {kind} needs context field '{field}'")]
    MissingContext { kind: u8, field: &'static str },
    #[error("perturbation kind {kind} failed: {reason}")]
    PerturbationFailed { kind: u8, reason: String },
    #[error("perturbation kind must be 1..=6, got {0}")]
    InvalidKind(u8),
}

/// Ordered end-effector pixels with retained keypoint positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory2D<T = f64> {
    pub points: Vec<Point2D<T>>,
    /// Positions into `points` that must survive resampling.
    #[serde(default)]
    pub keypoint_indices: Vec<usize>,
    /// Source frame of each point.
    #[serde(default)]
    pub frame_indices: Vec<i64>,
}

impl<T: Scalar> Trajectory2D<T> {
    pub fn new(
        points: Vec<Point2D<T>>,
        mut keypoint_indices: Vec<usize>,
        frame_indices: Vec<i64>,
    ) -> Result<Self, TrajectoryError> {
        keypoint_indices.sort_unstable();
        keypoint_indices.dedup();
        let t = Self {
            points,
            keypoint_indices,
            frame_indices,
        };
        t.check()?;
        Ok(t)
    }

    /// Points at frames `0..n`, first point as the only keypoint.
    pub fn from_points(points: Vec<Point2D<T>>) -> Result<Self, TrajectoryError> {
        let frames = (0..points.len() as i64).collect();
        Self::new(points, vec![0], frames)
    }

    pub fn check(&self) -> Result<(), TrajectoryError> {
        if self.points.len() < 2 {
            return Err(TrajectoryError::Invalid(format!(
                "need at least 2 points, got {}",
                self.points.len()
            )));
        }
        if let Some(p) = self.points.iter().find(|p| !p.is_finite()) {
            return Err(TrajectoryError::Invalid(format!("non-finite point {p:?}")));
        }
        if let Some(&k) = self.keypoint_indices.iter().find(|&&k| k >= self.points.len()) {
            return Err(TrajectoryError::Invalid(format!("keypoint {k} out of range")));
        }
        if self.frame_indices.len() != self.points.len() {
            return Err(TrajectoryError::Invalid(format!(
                "{} frame indices for {} points",
                self.frame_indices.len(),
                self.points.len()
            )));
        }
        if self.frame_indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(TrajectoryError::Invalid("frame indices not strictly increasing".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start(&self) -> Point2D<T> {
        self.points[0]
    }

    pub fn end(&self) -> Point2D<T> {
        *self.points.last().expect("trajectory has points")
    }

    pub fn path_length(&self) -> T {
        path_length(&self.points)
    }

    pub fn displacement(&self) -> T {
        displacement(&self.points)
    }

    /// Copy with every point rounded to an integer pixel.
    pub fn rounded(&self) -> Self {
        Self {
            points: self.points.iter().map(|p| p.rounded()).collect(),
            ..self.clone()
        }
    }
}

pub fn path_length<T: Scalar>(points: &[Point2D<T>]) -> T {
    points.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

pub fn displacement<T: Scalar>(points: &[Point2D<T>]) -> T {
    match (points.first(), points.last()) {
        (Some(a), Some(b)) => a.distance(b),
        _ => T::zero(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    TooShort,
    RatioExceeded,
}

impl InvalidReason {
    pub fn as_str(self) -> &'static str {
        match self {
            InvalidReason::TooShort => "too_short",
            InvalidReason::RatioExceeded => "ratio_exceeded",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Validity {
    Valid,
    Invalid(InvalidReason),
}

impl Validity {
    pub fn is_valid(self) -> bool {
        self == Validity::Valid
    }
}

/// Rejects paths that are too short or wander far more than they travel.
///
/// `path < min_len_px` is `TooShort`; `path / displacement > max_ratio` is
/// `RatioExceeded`, and zero displacement always exceeds.
pub fn filter_trajectory<T: Scalar>(points: &[Point2D<T>], min_len_px: T, max_ratio: T) -> Validity {
    let path = path_length(points);
    if path < min_len_px {
        return Validity::Invalid(InvalidReason::TooShort);
    }
    let disp = displacement(points);
    if disp <= T::zero() || path / disp > max_ratio {
        return Validity::Invalid(InvalidReason::RatioExceeded);
    }
    Validity::Valid
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, step: f64) -> Vec<Point2D> {
        (0..n).map(|i| Point2D::new(i as f64 * step, 0.0)).collect()
    }

    #[test]
    fn straight_line_is_valid() {
        let pts = line(10, 100.0 / 9.0);
        assert!((path_length(&pts) - 100.0).abs() < 1e-9);
        assert_eq!(filter_trajectory(&pts, 20.0, 2.5), Validity::Valid);
    }

    #[test]
    fn out_and_back_exceeds_ratio() {
        let pts = vec![Point2D::new(0.0, 0.0), Point2D::new(50.0, 0.0), Point2D::new(0.0, 0.0)];
        assert_eq!(
            filter_trajectory(&pts, 20.0, 2.5),
            Validity::Invalid(InvalidReason::RatioExceeded)
        );
    }

    #[test]
    fn short_path_rejected() {
        let pts = line(3, 5.0);
        assert_eq!(filter_trajectory(&pts, 20.0, 2.5), Validity::Invalid(InvalidReason::TooShort));
    }

    #[test]
    fn construction_checks() {
        assert!(Trajectory2D::from_points(vec![Point2D::new(0.0, 0.0)]).is_err());
        let pts = line(3, 1.0);
        assert!(Trajectory2D::new(pts.clone(), vec![3], vec![0, 1, 2]).is_err());
        assert!(Trajectory2D::new(pts.clone(), vec![0], vec![0, 2, 2]).is_err());
        let t = Trajectory2D::new(pts, vec![2, 0, 2], vec![4, 5, 9]).unwrap();
        assert_eq!(t.keypoint_indices, vec![0, 2]);
    }
}
