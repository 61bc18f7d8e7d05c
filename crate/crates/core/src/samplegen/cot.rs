use super::{SampleGenError, SceneObject};
use crate::sample::{QASample, SampleFamily};
use crate::trajectory::Trajectory2D;
use crate::types::Point2D;

/// Stage names of trajectory reasoning, in order.
pub const TRAJECTORY_COT_STAGES: [&str; 4] = ["scene", "goal", "waypoints", "path"];

/// Adds a reasoning block to `sample`. The answer is left untouched.
pub fn wrap_cot(sample: &QASample, steps: &[String]) -> Result<QASample, SampleGenError> {
    if steps.is_empty() || steps.iter().all(|s| s.trim().is_empty()) {
        return Err(SampleGenError::EmptySteps);
    }
    let base = sample.answer_family().ok_or(SampleGenError::EmptySteps)?;
    if base == SampleFamily::Traj && steps.len() != TRAJECTORY_COT_STAGES.len() {
        return Err(SampleGenError::WrongStageCount {
            need: TRAJECTORY_COT_STAGES.len(),
            have: steps.len(),
        });
    }
    let mut out = sample.clone();
    out.think = Some(steps.join(" "));
    out.tags.family = SampleFamily::Cot;
    out.tags.base_family = Some(base);
    out.id = out.id.replacen(base.name(), SampleFamily::Cot.name(), 1);
    Ok(out)
}

/// Inverse of [`wrap_cot`].
pub fn strip_cot(sample: &QASample) -> QASample {
    let mut out = sample.clone();
    if out.tags.family == SampleFamily::Cot {
        if let Some(base) = out.tags.base_family.take() {
            out.tags.family = base;
            out.id = out.id.replacen(SampleFamily::Cot.name(), base.name(), 1);
        }
        out.think = None;
    }
    out
}

fn px(p: &Point2D) -> String {
    format!("({}, {})", p.x.round() as i64, p.y.round() as i64)
}

/// Four reasoning texts for a trajectory answer: the scene at the start,
/// the goal, the waypoints that must be hit, and the resulting path.
pub fn trajectory_cot_steps(
    objects: &[SceneObject],
    task: &str,
    goal: Option<&SceneObject>,
    traj: &Trajectory2D,
) -> Vec<String> {
    let start = traj.start();
    let mut seen: Vec<String> = objects
        .iter()
        .filter_map(|o| o.centroid2d().map(|c| format!("the {} at {}", o.label, px(&c))))
        .collect();
    if seen.is_empty() {
        seen.push("no annotated objects".into());
    }
    let scene = format!("The gripper is open at {}. In view: {}.", px(&start), seen.join("; "));
    let goal = match goal.and_then(|g| g.centroid2d().map(|c| (g, c))) {
        Some((g, c)) => format!("The task is to {task}; the {} is near {}.", g.label, px(&c)),
        None => format!("The task is to {task}."),
    };
    let keys: Vec<String> = traj.keypoint_indices.iter().map(|&i| px(&traj.points[i])).collect();
    let waypoints = format!(
        "The path has to pass {} and finish at {}.",
        keys.join(", "),
        px(&traj.end())
    );
    let path = format!(
        "So the gripper moves through {} points covering about {} pixels.",
        traj.len(),
        traj.path_length().round() as i64
    );
    vec![scene, goal, waypoints, path]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::{read_samples, write_samples, Answer, SampleTags};
    use regex::Regex;

    fn traj_sample() -> QASample {
        let t = Trajectory2D::from_points((0..6).map(|i| Point2D::new(10.0 * i as f64, 5.0)).collect()).unwrap();
        QASample {
            id: "traj/ep/00001".into(),
            prompt: "p".into(),
            image_refs: vec!["ep/f.png".into()],
            answer: Answer::Trajectory(t),
            think: None,
            tags: SampleTags {
                family: SampleFamily::Traj,
                episode: "ep".into(),
                ..Default::default()
            },
            context: Default::default(),
            seed: 1,
        }
    }

    #[test]
    fn wrap_formats_think_then_answer() {
        let s = traj_sample();
        let Answer::Trajectory(t) = &s.answer else { panic!() };
        let steps = trajectory_cot_steps(&[], "pick the apple", None, t);
        let w = wrap_cot(&s, &steps).unwrap();
        let re = Regex::new(r"^<think>.*</think>\[\[.*\]\]$").unwrap();
        assert!(re.is_match(&w.target()), "{}", w.target());
        assert_eq!(w.answer, s.answer);
        assert!(w.check_shape().is_ok());
        assert_eq!(w.id, "cot/ep/00001");
        assert_eq!(strip_cot(&w), s);
    }

    #[test]
    fn empty_and_wrong_stage_counts() {
        let s = traj_sample();
        assert!(matches!(wrap_cot(&s, &[]), Err(SampleGenError::EmptySteps)));
        assert!(matches!(
            wrap_cot(&s, &["a".into()]),
            Err(SampleGenError::WrongStageCount { need: 4, have: 1 })
        ));
    }

    #[test]
    fn wrapped_answer_survives_jsonl() {
        let s = traj_sample();
        let Answer::Trajectory(t) = &s.answer else { panic!() };
        let w = wrap_cot(&s, &trajectory_cot_steps(&[], "x", None, t)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        write_samples(std::slice::from_ref(&w), &p).unwrap();
        let back = read_samples(&p).unwrap();
        assert_eq!(back[0].answer, s.answer);
        assert_eq!(back[0], w);
    }
}
