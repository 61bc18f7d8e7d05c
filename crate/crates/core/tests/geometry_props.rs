use proptest::prelude::*;

use vlmforge::geometry::{
    back_project, correspond_pixel, depth_in_other_view, label_camera_motion, label_relative_depth, project_point,
    AmbiguityReason, DepthReference, MotionOutcome, DEFAULT_TRANS_MIN, DEFAULT_YAW_MIN,
};
use vlmforge::raster::DepthMap;
use vlmforge::types::{rot_x, rot_y, CameraCalib, Point2D, Point3D, RigidTransform};

fn calib() -> impl Strategy<Value = CameraCalib> {
    (200.0..1500.0f64, 200.0..1500.0f64, 200.0..440.0f64, 150.0..330.0f64)
        .prop_map(|(fx, fy, cx, cy)| CameraCalib::new(fx, fy, cx, cy))
}

fn pose(max_angle: f64, max_t: f64) -> impl Strategy<Value = RigidTransform> {
    (
        -max_angle..max_angle,
        -max_angle..max_angle,
        prop::array::uniform3(-max_t..max_t),
    )
        .prop_map(|(yaw, pitch, t)| {
            let r = RigidTransform::new(rot_y(yaw), [0.0; 3]).compose(&RigidTransform::new(rot_x(pitch), [0.0; 3]));
            RigidTransform::new(r.rotation, t)
        })
}

/// Conjugation by the reflection x -> -x: the same motion seen in a
/// left-right mirrored world.
fn mirror(t: &RigidTransform) -> RigidTransform {
    let s = [-1.0, 1.0, 1.0];
    let mut r = t.rotation;
    for (i, row) in r.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v *= s[i] * s[j];
        }
    }
    RigidTransform::new(r, [-t.translation[0], t.translation[1], t.translation[2]])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn project_back_project_round_trip(c in calib(), x in -5.0..5.0f64, y in -5.0..5.0f64, z in 0.1..10.0f64) {
        let p = Point3D::new(x, y, z);
        let q = back_project(&project_point(&p, &c).unwrap(), z, &c);
        prop_assert!(q.distance(&p) < 1e-6);
    }

    #[test]
    fn correspondence_is_self_inverse(
        c in calib(), pa in pose(0.3, 0.2), pb in pose(0.3, 0.2),
        u in 0.0..640.0f64, v in 0.0..480.0f64, d in 0.5..5.0f64,
    ) {
        let px = Point2D::new(u, v);
        let db = depth_in_other_view(&px, d, &c, &pa, &pb);
        prop_assume!(db > 0.05);
        let there = correspond_pixel(&px, d, &c, &pa, &c, &pb).unwrap();
        let back = correspond_pixel(&there, db, &c, &pb, &c, &pa).unwrap();
        prop_assert!(back.distance(&px) < 0.5);
    }

    #[test]
    fn zero_motion_is_ambiguous(p in pose(3.0, 5.0)) {
        let out = label_camera_motion(&p, &p, DEFAULT_YAW_MIN, DEFAULT_TRANS_MIN).unwrap();
        prop_assert_eq!(out, MotionOutcome::Ambiguous(AmbiguityReason::SmallRotation));
    }

    #[test]
    fn mirroring_flips_both_labels(pa in pose(1.0, 1.0), pb in pose(1.0, 1.0)) {
        let a = label_camera_motion(&pa, &pb, DEFAULT_YAW_MIN, DEFAULT_TRANS_MIN).unwrap();
        let m = label_camera_motion(&mirror(&pa), &mirror(&pb), DEFAULT_YAW_MIN, DEFAULT_TRANS_MIN).unwrap();
        match (a, m) {
            (MotionOutcome::Labeled(x), MotionOutcome::Labeled(y)) => {
                prop_assert_ne!(x.rotation, y.rotation);
                prop_assert_ne!(x.translation, y.translation);
            }
            (MotionOutcome::Ambiguous(_), MotionOutcome::Ambiguous(_)) => {}
            other => prop_assert!(false, "mirroring changed labelability: {:?}", other),
        }
    }

    #[test]
    fn depth_ordering_ignores_global_scale(
        depths in prop::collection::btree_set(1u32..5000, 2..6),
        s in 0.1..20.0f32,
    ) {
        let depths: Vec<f32> = depths.into_iter().rev().map(|d| d as f32 / 1000.0).collect();
        let n = depths.len() as u32;
        let map = DepthMap::from_fn(n, 1, |x, _| depths[x as usize]);
        let pts: Vec<Point2D> = (0..n).map(|x| Point2D::new(x as f64, 0.0)).collect();
        let c = CameraCalib::new(500.0, 500.0, 320.0, 240.0);
        let a = label_relative_depth(&map, &pts, DepthReference::CameraLens, None, &c, 0.0).unwrap();
        let b = label_relative_depth(&map.scaled(s), &pts, DepthReference::CameraLens, None, &c, 0.0).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.order, (0..n as usize).rev().collect::<Vec<_>>());
    }
}

#[test]
fn projection_in_f32() {
    let c = CameraCalib::<f32>::new(500.0, 500.0, 320.0, 240.0);
    let p = project_point(&Point3D::new(0.1f32, 0.0, 1.0), &c).unwrap();
    assert_eq!(p, Point2D::new(370.0f32, 240.0));
}
