use super::traj::{prepared_trajectory, TrajParams};
use super::{make_sample, Forged, GenContext, SampleGenError};
use crate::episode::Episode;
use crate::sample::{Answer, PlanStep, SampleFamily};
use crate::seed::{derive_seed, rng};
use crate::trajectory::Segment;

/// Remaining-steps plan as seen at the end of segment `after` (1-based).
///
/// Each remaining segment contributes its skill and its resampled path.
pub fn gen_planning_sample(
    episode: &Episode,
    segments: &[Segment],
    after: usize,
    ctx: &GenContext,
    params: &TrajParams,
    seed: u64,
) -> Result<Forged, SampleGenError> {
    if segments.len() < 2 {
        return Err(SampleGenError::TooFewSteps { have: segments.len() });
    }
    if after == 0 || after >= segments.len() {
        return Err(SampleGenError::BadRequest(format!(
            "plan query after step {after} of {}",
            segments.len()
        )));
    }
    let mut steps = Vec::new();
    for (index, seg) in segments.iter().enumerate().skip(after) {
        let traj = prepared_trajectory(episode, seg, params, derive_seed(seed, &format!("segment{index}")))
            .map_err(|e| SampleGenError::InvalidSegmentTrajectory {
                index,
                reason: e.reason(),
            })?;
        steps.push(PlanStep {
            skill: seg.skill.name.clone(),
            trajectory: traj,
        });
    }
    let at = segments[after - 1].end_frame;
    let frame = episode
        .frame(at)
        .ok_or_else(|| SampleGenError::MissingData(format!("frame {at}")))?;
    let task = if episode.task_text.is_empty() {
        segments.iter().map(|s| s.skill.name.as_str()).collect::<Vec<_>>().join(", then ")
    } else {
        episode.task_text.clone()
    };
    let mut r = rng(seed);
    let prompt = ctx.prompt("plan", "default", &[("task", &task)], &mut r)?;
    let mut s = make_sample(
        SampleFamily::Plan,
        &episode.id,
        Some(at),
        prompt,
        vec![episode.image_key(frame)],
        Answer::Plan { steps },
        seed,
    );
    s.context.image_size = Some((frame.width, frame.height));
    s.tags.meta.insert("after".into(), after.to_string());
    Ok(Forged::bare(s))
}
