use super::{make_sample, Forged, GenContext, SampleGenError, Scene};
use crate::episode::Episode;
use crate::geometry::project_fingertips;
use crate::sample::{Answer, SampleFamily};
use crate::seed::rng;
use crate::trajectory::KeyframeSet;
use crate::types::{GraspPose2D, Point2D};

/// Detector label used when fingertips are found in the image.
pub const FINGERTIP_LABEL: &str = "gripper fingertip";

/// Grasp pose on the mid frame of the first closing.
///
/// Fingertips come from the recorded 3D tips when present, otherwise from
/// the provider's fingertip detector, which must return exactly two boxes.
pub fn gen_grasp_sample(
    episode: &Episode,
    keyframes: &KeyframeSet,
    ctx: &GenContext,
    seed: u64,
) -> Result<Forged, SampleGenError> {
    let closing = keyframes.closings.first().ok_or(SampleGenError::NoGraspEvent)?;
    let scene = Scene::from_episode(episode, closing.mid)?;
    let tips = episode
        .gripper
        .at_frame(closing.mid)
        .and_then(|g| g.tip_left.zip(g.tip_right));
    let pose = match tips {
        Some((l, r)) => project_fingertips(&l, &r, episode.calib())?,
        None => {
            let boxes = ctx.provider.detect(&scene.image, FINGERTIP_LABEL)?;
            if boxes.len() != 2 {
                return Err(SampleGenError::ProviderMiss(format!(
                    "expected 2 fingertip boxes in {}, got {}",
                    scene.image,
                    boxes.len()
                )));
            }
            let mut c: Vec<Point2D> = boxes.iter().map(|b| b.centroid().rounded()).collect();
            c.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
            if c[0] == c[1] {
                return Err(crate::geometry::GeometryError::DegeneratePose.into());
            }
            GraspPose2D { p1: c[0], p2: c[1] }
        }
    };
    let center = pose.center();
    let label = episode
        .steps
        .iter()
        .find(|s| s.skill == "pick")
        .and_then(|s| s.object.clone())
        .or_else(|| {
            scene
                .objects
                .iter()
                .filter_map(|o| o.centroid2d().map(|c| (c.distance(&center), o)))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, o)| o.label.clone())
        });
    let object = label.map_or_else(|| "the object".to_string(), |l| format!("the {l}"));
    let mut r = rng(seed);
    let prompt = ctx.prompt("grasp", "default", &[("object", object.as_str())], &mut r)?;
    let mut s = make_sample(
        SampleFamily::Grasp,
        &episode.id,
        Some(closing.mid),
        prompt,
        vec![scene.image.clone()],
        Answer::Grasp(pose),
        seed,
    );
    s.context.image_size = Some(scene.image_size);
    s.tags.meta.insert(
        "source".into(),
        if tips.is_some() { "projection" } else { "detection" }.into(),
    );
    Ok(Forged::bare(s))
}
