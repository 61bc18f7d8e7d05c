//! Pinhole projection and the geometric labelers built on it.
//!
//! Camera frame: `z` forward, `x` right, `y` down. A camera *pose* is the
//! camera→world transform; a calibration's `extrinsic` is world→camera.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::DepthMap;
use crate::scalar::Scalar;
use crate::types::{CameraCalib, GraspPose2D, Point2D, Point3D, RigidTransform};

/// Default minimum |yaw| for a rotation label, radians.
pub const DEFAULT_YAW_MIN: f64 = 0.15;
/// Default minimum lateral translation for a translation label, meters.
pub const DEFAULT_TRANS_MIN: f64 = 0.10;
/// Default minimum separation between ranked depths, meters.
pub const DEFAULT_TIE_EPS: f64 = 0.02;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("fingertip projections coincide after rounding")]
    DegeneratePose,
    #[error("depth must be positive and finite, got {0}")]
    InvalidDepth(f64),
    #[error("transform is not rigid")]
    InvalidTransform,
    #[error("depths of points {0} and {1} are within the tie tolerance")]
    TieRejected(usize, usize),
    #[error("no usable depth at point {0}")]
    MissingDepth(usize),
    #[error("gripper-tip reference needs the gripper pixel")]
    MissingGripper,
}

/// A projected pixel plus whether it lands inside the image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection<T> {
    pub point: Point2D<T>,
    pub in_frame: bool,
}

/// Pinhole projection of a camera-frame point.
pub fn project_point<T: Scalar>(p: &Point3D<T>, calib: &CameraCalib<T>) -> Result<Point2D<T>, GeometryError> {
    if !(p.z > T::zero()) {
        return Err(GeometryError::BehindCamera { z: p.z.as_f64() });
    }
    Ok(Point2D::new(
        calib.fx * p.x / p.z + calib.cx,
        calib.fy * p.y / p.z + calib.cy,
    ))
}

/// [`project_point`] with the out-of-frame flag for a `width` x `height` image.
pub fn project_in_image<T: Scalar>(
    p: &Point3D<T>,
    calib: &CameraCalib<T>,
    width: u32,
    height: u32,
) -> Result<Projection<T>, GeometryError> {
    let point = project_point(p, calib)?;
    Ok(Projection {
        point,
        in_frame: point.in_image(width, height),
    })
}

/// Inverse of [`project_point`] at a known depth.
pub fn back_project<T: Scalar>(px: &Point2D<T>, depth: T, calib: &CameraCalib<T>) -> Point3D<T> {
    Point3D::new(
        (px.x - calib.cx) * depth / calib.fx,
        (px.y - calib.cy) * depth / calib.fy,
        depth,
    )
}

/// Grasp pose from the two fingertip positions (camera frame), rounded to
/// integer pixels.
pub fn project_fingertips<T: Scalar>(
    tip_left: &Point3D<T>,
    tip_right: &Point3D<T>,
    calib: &CameraCalib<T>,
) -> Result<GraspPose2D<T>, GeometryError> {
    let p1 = project_point(tip_left, calib)?.rounded();
    let p2 = project_point(tip_right, calib)?.rounded();
    if p1 == p2 {
        return Err(GeometryError::DegeneratePose);
    }
    Ok(GraspPose2D { p1, p2 })
}

/// Pixel in view `b` seeing the same 3D point as `px` at `depth` in view `a`.
///
/// `pose_a` / `pose_b` are camera→world poses. The result is not rounded.
pub fn correspond_pixel<T: Scalar>(
    px: &Point2D<T>,
    depth: T,
    calib_a: &CameraCalib<T>,
    pose_a: &RigidTransform<T>,
    calib_b: &CameraCalib<T>,
    pose_b: &RigidTransform<T>,
) -> Result<Point2D<T>, GeometryError> {
    if !(depth > T::zero()) || !depth.is_finite() {
        return Err(GeometryError::InvalidDepth(depth.as_f64()));
    }
    let in_a = back_project(px, depth, calib_a);
    let world = pose_a.apply(&in_a);
    let in_b = pose_b.inverse().apply(&world);
    project_point(&in_b, calib_b)
}

/// Depth of the `a`-view point in view `b`, for the reverse mapping.
pub fn depth_in_other_view<T: Scalar>(
    px: &Point2D<T>,
    depth: T,
    calib_a: &CameraCalib<T>,
    pose_a: &RigidTransform<T>,
    pose_b: &RigidTransform<T>,
) -> T {
    let world = pose_a.apply(&back_project(px, depth, calib_a));
    pose_b.inverse().apply(&world).z
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn from_sign<T: Scalar>(v: T) -> Self {
        if v > T::zero() {
            Side::Left
        } else {
            Side::Right
        }
    }

    pub fn word(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotionLabel {
    pub rotation: Side,
    pub translation: Side,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AmbiguityReason {
    SmallRotation,
    SmallTranslation,
    Contradiction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MotionOutcome {
    Labeled(MotionLabel),
    Ambiguous(AmbiguityReason),
}

/// Relative motion of camera `b` seen from camera `a`.
///
/// Both values are signed so that positive means *leftward*: `yaw` is the
/// turn about the camera's up axis (−y), `lateral` is the displacement along
/// −x, both expressed in frame `a`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativeMotion<T> {
    pub yaw: T,
    pub lateral: T,
}

pub fn relative_motion<T: Scalar>(pose_a: &RigidTransform<T>, pose_b: &RigidTransform<T>) -> RelativeMotion<T> {
    let rel = pose_a.inverse().compose(pose_b);
    // Forward axis of b expressed in a.
    let fx = rel.rotation[0][2];
    let fz = rel.rotation[2][2];
    RelativeMotion {
        yaw: (-fx).atan2(fz),
        lateral: -rel.translation[0],
    }
}

/// Left/right label for rotation and translation between two camera poses.
///
/// Ambiguous when either magnitude is under its threshold or the two
/// directions disagree.
pub fn label_camera_motion<T: Scalar>(
    pose_a: &RigidTransform<T>,
    pose_b: &RigidTransform<T>,
    yaw_min: T,
    trans_min: T,
) -> Result<MotionOutcome, GeometryError> {
    let tol = T::lit(1e-6);
    if !pose_a.is_rigid(tol) || !pose_b.is_rigid(tol) {
        return Err(GeometryError::InvalidTransform);
    }
    let m = relative_motion(pose_a, pose_b);
    if m.yaw.abs() < yaw_min {
        return Ok(MotionOutcome::Ambiguous(AmbiguityReason::SmallRotation));
    }
    if m.lateral.abs() < trans_min {
        return Ok(MotionOutcome::Ambiguous(AmbiguityReason::SmallTranslation));
    }
    let rotation = Side::from_sign(m.yaw);
    let translation = Side::from_sign(m.lateral);
    if rotation != translation {
        return Ok(MotionOutcome::Ambiguous(AmbiguityReason::Contradiction));
    }
    Ok(MotionOutcome::Labeled(MotionLabel {
        rotation,
        translation,
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthReference {
    CameraLens,
    GripperTip,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthOrdering {
    /// Input point indices, nearest first.
    pub order: Vec<usize>,
    pub reference: DepthReference,
}

fn depth_at<T: Scalar>(depth: &DepthMap, p: &Point2D<T>, idx: usize) -> Result<T, GeometryError> {
    let d = depth.sample(p).ok_or(GeometryError::MissingDepth(idx))?;
    if !d.is_finite() || d <= 0.0 {
        return Err(GeometryError::MissingDepth(idx));
    }
    Ok(T::lit(d as f64))
}

/// Orders points by distance to the camera lens or to the gripper tip.
///
/// Depth lookup is nearest-pixel. Orderings whose adjacent distances differ
/// by less than `tie_eps` are rejected.
pub fn label_relative_depth<T: Scalar>(
    depth: &DepthMap,
    points: &[Point2D<T>],
    reference: DepthReference,
    gripper_px: Option<&Point2D<T>>,
    calib: &CameraCalib<T>,
    tie_eps: T,
) -> Result<DepthOrdering, GeometryError> {
    let keys: Vec<T> = match reference {
        DepthReference::CameraLens => points
            .iter()
            .enumerate()
            .map(|(i, p)| depth_at(depth, p, i))
            .collect::<Result<_, _>>()?,
        DepthReference::GripperTip => {
            let g = gripper_px.ok_or(GeometryError::MissingGripper)?;
            let gd = depth_at(depth, g, points.len()).map_err(|_| GeometryError::MissingGripper)?;
            let g3 = back_project(g, gd, calib);
            points
                .iter()
                .enumerate()
                .map(|(i, p)| depth_at(depth, p, i).map(|d| back_project(p, d, calib).distance(&g3)))
                .collect::<Result<_, _>>()?
        }
    };
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| keys[a].partial_cmp(&keys[b]).unwrap_or(std::cmp::Ordering::Equal));
    for w in order.windows(2) {
        if keys[w[1]] - keys[w[0]] < tie_eps {
            return Err(GeometryError::TieRejected(w[0].min(w[1]), w[0].max(w[1])));
        }
    }
    Ok(DepthOrdering { order, reference })
}
