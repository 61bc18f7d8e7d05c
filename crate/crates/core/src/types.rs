//! Domain data model.
//!
//! Pixel coordinates use image space with the origin at the top-left corner,
//! `x` to the right and `y` down. Camera coordinates follow the pinhole
//! convention: `z` forward, `x` right, `y` down, in meters.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::scalar::{round_half_away, Scalar};

/// A pixel position.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point2D<T = f64> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point2D<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Integer pixel (half away from zero) this point falls on.
    pub fn rounded(&self) -> Self {
        Self::new(round_half_away(self.x), round_half_away(self.y))
    }

    /// Whether the rounded pixel lies in a `width` x `height` image.
    pub fn in_image(&self, width: u32, height: u32) -> bool {
        let r = self.rounded();
        r.x >= T::zero()
            && r.y >= T::zero()
            && r.x < T::from_u32(width).unwrap_or_else(T::zero)
            && r.y < T::from_u32(height).unwrap_or_else(T::zero)
    }

    pub fn lerp(&self, other: &Self, t: T) -> Self {
        Self::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }

    pub fn cast<U: Scalar>(&self) -> Point2D<U> {
        Point2D::new(U::lit(self.x.as_f64()), U::lit(self.y.as_f64()))
    }
}

impl<T: Serialize> Serialize for Point2D<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (&self.x, &self.y).serialize(s)
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Point2D<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (x, y) = <(T, T)>::deserialize(d)?;
        Ok(Self { x, y })
    }
}

/// A point in the camera frame, meters.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point3D<T = f64> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> Point3D<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Self) -> T {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn midpoint(&self, other: &Self) -> Self {
        let half = T::lit(0.5);
        Self::new(
            (self.x + other.x) * half,
            (self.y + other.y) * half,
            (self.z + other.z) * half,
        )
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl<T: Serialize> Serialize for Point3D<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (&self.x, &self.y, &self.z).serialize(s)
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Point3D<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (x, y, z) = <(T, T, T)>::deserialize(d)?;
        Ok(Self { x, y, z })
    }
}

/// Axis-aligned image box `[x1, y1, x2, y2]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Box2D<T = f64> {
    pub x1: T,
    pub y1: T,
    pub x2: T,
    pub y2: T,
}

impl<T: Scalar> Box2D<T> {
    /// Builds a box, rejecting empty or inverted extents.
    pub fn new(x1: T, y1: T, x2: T, y2: T) -> Option<Self> {
        let b = Self { x1, y1, x2, y2 };
        b.is_valid().then_some(b)
    }

    pub fn is_valid(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2]
            .iter()
            .all(|v| v.is_finite())
            && self.x1 < self.x2
            && self.y1 < self.y2
    }

    pub fn width(&self) -> T {
        self.x2 - self.x1
    }

    pub fn height(&self) -> T {
        self.y2 - self.y1
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn centroid(&self) -> Point2D<T> {
        let half = T::lit(0.5);
        Point2D::new((self.x1 + self.x2) * half, (self.y1 + self.y2) * half)
    }

    pub fn contains(&self, p: &Point2D<T>) -> bool {
        p.x >= self.x1 && p.x <= self.x2 && p.y >= self.y1 && p.y <= self.y2
    }

    pub fn intersection_area(&self, other: &Self) -> T {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= T::zero() || h <= T::zero() {
            T::zero()
        } else {
            w * h
        }
    }

    pub fn iou(&self, other: &Self) -> T {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= T::zero() {
            T::zero()
        } else {
            inter / union
        }
    }

    /// Interval covered along image axis 0 (x) or 1 (y).
    pub fn interval(&self, axis: usize) -> (T, T) {
        match axis {
            0 => (self.x1, self.x2),
            _ => (self.y1, self.y2),
        }
    }

    pub fn within(&self, width: u32, height: u32) -> bool {
        self.x1 >= T::zero()
            && self.y1 >= T::zero()
            && self.x2 <= T::from_u32(width).unwrap_or_else(T::zero)
            && self.y2 <= T::from_u32(height).unwrap_or_else(T::zero)
    }
}

impl<T: Serialize> Serialize for Box2D<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [&self.x1, &self.y1, &self.x2, &self.y2].serialize(s)
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Box2D<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x1, y1, x2, y2] = <[T; 4]>::deserialize(d)?;
        Ok(Self { x1, y1, x2, y2 })
    }
}

/// Oriented 3D box `[cx, cy, cz, L, W, H, roll, pitch, yaw]` in the camera frame.
///
/// Local axes: length along local `x`, height along local `y`, width along
/// local `z`. Orientation is `R = Ry(yaw) * Rx(pitch) * Rz(roll)`, so yaw
/// turns the box about the camera's vertical axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Box3D<T = f64> {
    pub cx: T,
    pub cy: T,
    pub cz: T,
    pub length: T,
    pub width: T,
    pub height: T,
    pub roll: T,
    pub pitch: T,
    pub yaw: T,
}

impl<T: Scalar> Box3D<T> {
    pub fn from_array(v: [T; 9]) -> Self {
        Self {
            cx: v[0],
            cy: v[1],
            cz: v[2],
            length: v[3],
            width: v[4],
            height: v[5],
            roll: v[6],
            pitch: v[7],
            yaw: v[8],
        }
    }

    pub fn to_array(&self) -> [T; 9] {
        [
            self.cx,
            self.cy,
            self.cz,
            self.length,
            self.width,
            self.height,
            self.roll,
            self.pitch,
            self.yaw,
        ]
    }

    pub fn is_valid(&self) -> bool {
        let pi = T::PI();
        let angle_ok = |a: T| a > -pi && a <= pi;
        self.to_array().iter().all(|v| v.is_finite())
            && self.length > T::zero()
            && self.width > T::zero()
            && self.height > T::zero()
            && angle_ok(self.roll)
            && angle_ok(self.pitch)
            && angle_ok(self.yaw)
    }

    pub fn center(&self) -> Point3D<T> {
        Point3D::new(self.cx, self.cy, self.cz)
    }

    pub fn rotation(&self) -> [[T; 3]; 3] {
        mat_mul(
            &mat_mul(&rot_y(self.yaw), &rot_x(self.pitch)),
            &rot_z(self.roll),
        )
    }

    /// Half extent of the tight axis-aligned hull along each camera axis.
    pub fn half_extents(&self) -> [T; 3] {
        let r = self.rotation();
        let half = T::lit(0.5);
        let local = [self.length * half, self.height * half, self.width * half];
        let mut out = [T::zero(); 3];
        for (a, o) in out.iter_mut().enumerate() {
            *o = r[a][0].abs() * local[0] + r[a][1].abs() * local[1] + r[a][2].abs() * local[2];
        }
        out
    }

    /// Interval along camera axis 0 (x), 1 (y) or 2 (z).
    pub fn interval(&self, axis: usize) -> (T, T) {
        let c = self.center().to_array()[axis];
        let h = self.half_extents()[axis];
        (c - h, c + h)
    }
}

impl<T: Serialize> Serialize for Box3D<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [
            &self.cx,
            &self.cy,
            &self.cz,
            &self.length,
            &self.width,
            &self.height,
            &self.roll,
            &self.pitch,
            &self.yaw,
        ]
        .serialize(s)
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Box3D<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = <[T; 9]>::deserialize(d)?;
        let [cx, cy, cz, length, width, height, roll, pitch, yaw] = v;
        Ok(Self {
            cx,
            cy,
            cz,
            length,
            width,
            height,
            roll,
            pitch,
            yaw,
        })
    }
}

pub(crate) fn mat_mul<T: Scalar>(a: &[[T; 3]; 3], b: &[[T; 3]; 3]) -> [[T; 3]; 3] {
    let mut out = [[T::zero(); 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub(crate) fn transpose<T: Scalar>(a: &[[T; 3]; 3]) -> [[T; 3]; 3] {
    let mut out = [[T::zero(); 3]; 3];
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[j][i] = *v;
        }
    }
    out
}

pub(crate) fn mat_vec<T: Scalar>(a: &[[T; 3]; 3], v: &[T; 3]) -> [T; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub fn rot_x<T: Scalar>(a: T) -> [[T; 3]; 3] {
    let (s, c) = a.sin_cos();
    let (o, l) = (T::zero(), T::one());
    [[l, o, o], [o, c, -s], [o, s, c]]
}

pub fn rot_y<T: Scalar>(a: T) -> [[T; 3]; 3] {
    let (s, c) = a.sin_cos();
    let (o, l) = (T::zero(), T::one());
    [[c, o, s], [o, l, o], [-s, o, c]]
}

pub fn rot_z<T: Scalar>(a: T) -> [[T; 3]; 3] {
    let (s, c) = a.sin_cos();
    let (o, l) = (T::zero(), T::one());
    [[c, -s, o], [s, c, o], [o, o, l]]
}

/// Rigid transform `p' = R p + t`.
///
/// Used both for world→camera extrinsics and for camera poses
/// (camera→world); the role is fixed by the field or argument holding it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform<T = f64> {
    pub rotation: [[T; 3]; 3],
    pub translation: [T; 3],
}

impl<T: Scalar> Default for RigidTransform<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Scalar> RigidTransform<T> {
    pub fn identity() -> Self {
        let (o, l) = (T::zero(), T::one());
        Self {
            rotation: [[l, o, o], [o, l, o], [o, o, l]],
            translation: [o, o, o],
        }
    }

    pub fn new(rotation: [[T; 3]; 3], translation: [T; 3]) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: [T; 3]) -> Self {
        Self {
            translation: t,
            ..Self::identity()
        }
    }

    pub fn apply(&self, p: &Point3D<T>) -> Point3D<T> {
        let r = mat_vec(&self.rotation, &p.to_array());
        Point3D::new(
            r[0] + self.translation[0],
            r[1] + self.translation[1],
            r[2] + self.translation[2],
        )
    }

    pub fn inverse(&self) -> Self {
        let rt = transpose(&self.rotation);
        let t = mat_vec(&rt, &self.translation);
        Self {
            rotation: rt,
            translation: [-t[0], -t[1], -t[2]],
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let t = mat_vec(&self.rotation, &other.translation);
        Self {
            rotation: mat_mul(&self.rotation, &other.rotation),
            translation: [
                t[0] + self.translation[0],
                t[1] + self.translation[1],
                t[2] + self.translation[2],
            ],
        }
    }

    pub fn determinant(&self) -> T {
        let m = &self.rotation;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Orthonormal with determinant +1 within `tol`, finite translation.
    pub fn is_rigid(&self, tol: T) -> bool {
        if !self
            .rotation
            .iter()
            .flatten()
            .chain(self.translation.iter())
            .all(|v| v.is_finite())
        {
            return false;
        }
        let rrt = mat_mul(&self.rotation, &transpose(&self.rotation));
        for (i, row) in rrt.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let expect = if i == j { T::one() } else { T::zero() };
                if (*v - expect).abs() > tol {
                    return false;
                }
            }
        }
        (self.determinant() - T::one()).abs() <= tol
    }
}

/// Pinhole intrinsics plus the world→camera extrinsic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct CameraCalib<T = f64> {
    pub fx: T,
    pub fy: T,
    /// Principal point, pixels.
    pub cx: T,
    pub cy: T,
    #[serde(default)]
    pub extrinsic: RigidTransform<T>,
}

impl<T: Scalar> CameraCalib<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            extrinsic: RigidTransform::identity(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.fx > T::zero()
            && self.fy > T::zero()
            && self.cx.is_finite()
            && self.cy.is_finite()
            && self.extrinsic.is_rigid(T::lit(1e-9))
    }
}

/// One gripper state sample. Fingertip and center points are in the
/// primary camera's frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripperSample {
    #[serde(rename = "frame")]
    pub frame_index: i64,
    /// Normalized opening: 0 closed, 1 fully open.
    pub aperture: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tip_left: Option<Point3D>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tip_right: Option<Point3D>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Point3D>,
}

impl GripperSample {
    pub fn with_aperture(frame_index: i64, aperture: f64) -> Self {
        Self {
            frame_index,
            aperture,
            tip_left: None,
            tip_right: None,
            center: None,
        }
    }

    /// Fingertip center: the explicit center, else the midpoint of the tips.
    pub fn tip_center(&self) -> Option<Point3D> {
        self.center.or_else(|| match (self.tip_left, self.tip_right) {
            (Some(l), Some(r)) => Some(l.midpoint(&r)),
            _ => None,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GripperTrace {
    pub samples: Vec<GripperSample>,
}

impl GripperTrace {
    /// Trace whose frame indices equal sample positions.
    pub fn from_apertures(apertures: &[f64]) -> Self {
        Self {
            samples: apertures
                .iter()
                .enumerate()
                .map(|(i, &a)| GripperSample::with_aperture(i as i64, a))
                .collect(),
        }
    }

    pub fn apertures(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.aperture).collect()
    }

    pub fn at_frame(&self, frame: i64) -> Option<&GripperSample> {
        self.samples
            .binary_search_by_key(&frame, |s| s.frame_index)
            .ok()
            .map(|i| &self.samples[i])
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub index: i64,
    /// Image path relative to the episode directory.
    pub image: String,
    pub width: u32,
    pub height: u32,
    /// Depth map path (little-endian `f32` meters, row-major).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    pub id: String,
    pub label: String,
    #[serde(rename = "frame")]
    pub frame_index: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box2d: Option<Box2D>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box3d: Option<Box3D>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

/// 1 to 9 answer points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointSet<T = f64> {
    pub points: Vec<Point2D<T>>,
}

pub const MAX_POINTS: usize = 9;

impl<T: Scalar> PointSet<T> {
    pub fn new(points: Vec<Point2D<T>>) -> Option<Self> {
        (1..=MAX_POINTS)
            .contains(&points.len())
            .then_some(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl<'de, T: Scalar + Deserialize<'de>> Deserialize<'de> for PointSet<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw<T> {
            points: Vec<Point2D<T>>,
        }
        let raw = Raw::<T>::deserialize(d)?;
        let n = raw.points.len();
        PointSet::new(raw.points)
            .ok_or_else(|| D::Error::custom(format!("point set must hold 1..=9 points, got {n}")))
    }
}

/// Two fingertip pixels; the segment between them gives the grasp orientation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspPose2D<T = f64> {
    pub p1: Point2D<T>,
    pub p2: Point2D<T>,
}

impl<T: Scalar> GraspPose2D<T> {
    pub fn center(&self) -> Point2D<T> {
        self.p1.lerp(&self.p2, T::lit(0.5))
    }

    /// Orientation of the fingertip line in the image, radians.
    pub fn angle(&self) -> T {
        (self.p2.y - self.p1.y).atan2(self.p2.x - self.p1.x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box2d_rejects_inverted() {
        assert!(Box2D::new(10.0, 0.0, 5.0, 4.0).is_none());
        assert!(Box2D::new(0.0, 0.0, 5.0, 4.0).is_some());
    }

    #[test]
    fn iou_of_half_box() {
        let gt = Box2D::<f64>::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let half = Box2D::new(0.0, 0.0, 5.0, 10.0).unwrap();
        assert!((gt.iou(&half) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn box3d_axis_aligned_extents() {
        let b = Box3D::<f64>::from_array([1.0, 0.0, 2.0, 0.4, 0.2, 0.1, 0.0, 0.0, 0.0]);
        let (x0, x1) = b.interval(0);
        let (y0, y1) = b.interval(1);
        let (z0, z1) = b.interval(2);
        assert!((x0 - 0.8).abs() < 1e-12 && (x1 - 1.2).abs() < 1e-12);
        assert!((y0 + 0.05).abs() < 1e-12 && (y1 - 0.05).abs() < 1e-12);
        assert!((z0 - 1.9).abs() < 1e-12 && (z1 - 2.1).abs() < 1e-12);
    }

    #[test]
    fn box3d_yaw_quarter_turn_swaps_extents() {
        let b = Box3D::from_array([0.0, 0.0, 2.0, 0.4, 0.2, 0.1, 0.0, 0.0, std::f64::consts::FRAC_PI_2]);
        let h = b.half_extents();
        assert!((h[0] - 0.1).abs() < 1e-12);
        assert!((h[2] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn rigid_inverse_composes_to_identity() {
        let t = RigidTransform::new(rot_y(0.3_f64), [0.1, -0.2, 0.5]);
        let id = t.compose(&t.inverse());
        assert!(id.is_rigid(1e-12));
        for v in id.translation {
            assert!(v.abs() < 1e-12);
        }
        assert!(!RigidTransform::new([[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], [0.0; 3]).is_rigid(1e-9));
    }

    #[test]
    fn point_set_size_bounds() {
        assert!(PointSet::<f64>::new(vec![]).is_none());
        assert!(PointSet::new(vec![Point2D::new(1.0, 1.0); 10]).is_none());
        let err = serde_json::from_str::<PointSet>(r#"{"points":[]}"#);
        assert!(err.is_err());
    }

    #[test]
    fn compact_serialization() {
        let p = Point2D::new(3.0, 4.0);
        assert_eq!(serde_json::to_string(&p).unwrap(), "[3.0,4.0]");
        let b: Box2D = serde_json::from_str("[1,2,3,4]").unwrap();
        assert_eq!(b.x2, 3.0);
    }
}
