//! Sample forging for embodied vision-language training data: episode
//! loading, camera geometry, trajectory processing, QA sample generation,
//! scoring metrics and position-embedding grid resizing.
//!
//! Geometry is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the common instantiations.

pub mod depe;
pub mod episode;
pub mod eval;
pub mod geometry;
pub mod raster;
pub mod sample;
pub mod samplegen;
pub mod synth;
pub mod scalar;
pub mod seed;
pub mod trajectory;
pub mod types;

pub use scalar::Scalar;
pub use types::{Box2D, Box3D, CameraCalib, GraspPose2D, Point2D, Point3D, PointSet, RigidTransform};

pub type Point2 = Point2D<f64>;
pub type Point2f = Point2D<f32>;
pub type Point3 = Point3D<f64>;
pub type Point3f = Point3D<f32>;
pub type Box2 = Box2D<f64>;
pub type Box2f = Box2D<f32>;
pub type Box3 = Box3D<f64>;
pub type Box3f = Box3D<f32>;
pub type Calib = CameraCalib<f64>;
pub type Calibf = CameraCalib<f32>;
pub type Transform = RigidTransform<f64>;
pub type Transformf = RigidTransform<f32>;
pub type Trajectory = trajectory::Trajectory2D<f64>;
pub type Trajectoryf = trajectory::Trajectory2D<f32>;
