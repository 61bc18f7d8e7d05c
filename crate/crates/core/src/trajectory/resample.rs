//! Keypoint-preserving, arc-length-stratified downsampling.

use rand::Rng;

use super::{Trajectory2D, TrajectoryError};
use crate::scalar::Scalar;
use crate::seed::rng;

pub const MIN_RESAMPLED: usize = 6;
pub const MAX_RESAMPLED: usize = 8;

fn arc_lengths<T: Scalar>(traj: &Trajectory2D<T>) -> Vec<T> {
    let mut s = Vec::with_capacity(traj.len());
    let mut acc = T::zero();
    s.push(acc);
    for w in traj.points.windows(2) {
        acc = acc + w[0].distance(&w[1]);
        s.push(acc);
    }
    s
}

/// Splits `free` slots over gaps by highest averages: each slot goes to the
/// gap with the largest `length / (assigned + 1)` that still has room.
fn allocate<T: Scalar>(lengths: &[T], capacity: &[usize], free: usize) -> Vec<usize> {
    let mut m = vec![0usize; lengths.len()];
    for _ in 0..free {
        let mut best: Option<usize> = None;
        for k in 0..lengths.len() {
            if m[k] >= capacity[k] {
                continue;
            }
            let score = lengths[k] / T::from_usize_lossy(m[k] + 1);
            match best {
                Some(b) if lengths[b] / T::from_usize_lossy(m[b] + 1) >= score => {}
                _ => best = Some(k),
            }
        }
        let k = best.expect("total capacity covers free slots");
        m[k] += 1;
    }
    m
}

/// Resamples to exactly `n` points (6..=8).
///
/// The first point, the last point and every keypoint are kept verbatim.
/// Remaining slots are spread over the gaps between retained points in
/// proportion to arc length; inside a gap the arc is cut into equal bins and
/// one original point is drawn per bin.
pub fn resample_trajectory<T: Scalar>(
    traj: &Trajectory2D<T>,
    n: usize,
    seed: u64,
) -> Result<Trajectory2D<T>, TrajectoryError> {
    if !(MIN_RESAMPLED..=MAX_RESAMPLED).contains(&n) {
        return Err(TrajectoryError::BadParams(format!(
            "n must be in {MIN_RESAMPLED}..={MAX_RESAMPLED}, got {n}"
        )));
    }
    traj.check()?;
    let len = traj.len();
    if len < n {
        return Err(TrajectoryError::TooFewPoints { need: n, have: len });
    }
    let mut anchors: Vec<usize> = traj.keypoint_indices.clone();
    anchors.push(0);
    anchors.push(len - 1);
    anchors.sort_unstable();
    anchors.dedup();
    if anchors.len() > n {
        return Err(TrajectoryError::TooManyKeypoints {
            keypoints: anchors.len(),
            n,
        });
    }

    let s = arc_lengths(traj);
    let gaps: Vec<(usize, usize)> = anchors.windows(2).map(|w| (w[0], w[1])).collect();
    let lengths: Vec<T> = gaps.iter().map(|&(a, b)| s[b] - s[a]).collect();
    let capacity: Vec<usize> = gaps.iter().map(|&(a, b)| b - a - 1).collect();
    let alloc = allocate(&lengths, &capacity, n - anchors.len());

    let mut rng = rng(seed);
    let mut picked = anchors.clone();
    let half = T::lit(0.5);
    for (&(a, b), &m) in gaps.iter().zip(&alloc) {
        if m == 0 {
            continue;
        }
        let w = (s[b] - s[a]) / T::from_usize_lossy(m + 1);
        let mut used: Vec<usize> = Vec::with_capacity(m);
        for j in 0..m {
            let center = s[a] + w * T::from_usize_lossy(j + 1);
            let lo = center - w * half;
            let hi = center + w * half;
            let in_bin: Vec<usize> = (a + 1..b)
                .filter(|i| !used.contains(i) && s[*i] >= lo && s[*i] <= hi)
                .collect();
            let choice = if in_bin.is_empty() {
                (a + 1..b)
                    .filter(|i| !used.contains(i))
                    .min_by(|&x, &y| {
                        let dx = (s[x] - center).abs();
                        let dy = (s[y] - center).abs();
                        dx.partial_cmp(&dy).expect("finite arc length").then(x.cmp(&y))
                    })
                    .expect("gap has room for its allocation")
            } else {
                in_bin[rng.gen_range(0..in_bin.len())]
            };
            used.push(choice);
        }
        picked.extend(used);
    }
    picked.sort_unstable();

    let keypoints = traj
        .keypoint_indices
        .iter()
        .map(|k| picked.binary_search(k).expect("keypoint retained"))
        .collect();
    Trajectory2D::new(
        picked.iter().map(|&i| traj.points[i]).collect(),
        keypoints,
        picked.iter().map(|&i| traj.frame_indices[i]).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Point2D;

    fn wave(len: usize) -> Trajectory2D {
        let pts = (0..len)
            .map(|i| Point2D::new(i as f64 * 10.0, (i as f64 * 0.7).sin() * 15.0))
            .collect();
        Trajectory2D::from_points(pts).unwrap()
    }

    #[test]
    fn keeps_keypoints() {
        let mut t = wave(20);
        t.keypoint_indices = vec![0, 10, 19];
        let r = resample_trajectory(&t, 7, 42).unwrap();
        assert_eq!(r.len(), 7);
        for k in [0, 10, 19] {
            assert!(r.frame_indices.contains(&(k as i64)));
        }
        assert_eq!(r, resample_trajectory(&t, 7, 42).unwrap());
        for (&ki, &orig) in r.keypoint_indices.iter().zip(&[0usize, 10, 19]) {
            assert_eq!(r.points[ki], t.points[orig]);
        }
    }

    #[test]
    fn too_few_points() {
        assert_eq!(
            resample_trajectory(&wave(5), 7, 1),
            Err(TrajectoryError::TooFewPoints { need: 7, have: 5 })
        );
    }

    #[test]
    fn too_many_keypoints() {
        let mut t = wave(30);
        t.keypoint_indices = (0..30).step_by(3).collect();
        assert!(matches!(
            resample_trajectory(&t, 8, 1),
            Err(TrajectoryError::TooManyKeypoints { .. })
        ));
    }

    #[test]
    fn exact_length_is_identity() {
        let t = wave(8);
        let r = resample_trajectory(&t, 8, 3).unwrap();
        assert_eq!(r.points, t.points);
    }

    #[test]
    fn allocation_follows_length() {
        assert_eq!(allocate(&[30.0, 12.0], &[10, 10], 3), vec![2, 1]);
        assert_eq!(allocate(&[30.0, 10.0], &[1, 10], 3), vec![1, 2]);
    }
}
