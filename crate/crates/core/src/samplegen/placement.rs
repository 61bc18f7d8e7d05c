use rand::seq::SliceRandom;

use super::points::{provider_mask, sample_points_in_mask};
use super::refs::disambiguate_labels;
use super::{make_sample, Forged, GenContext, SampleGenError, Scene, SceneObject};
use crate::episode::Episode;
use crate::sample::{Answer, SampleFamily};
use crate::seed::{derive_seed, rng};
use crate::trajectory::{tip_center_px, KeyframeSet};
use crate::types::{Point2D, MAX_POINTS};

/// How the free region is described.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlacementFamily {
    BetweenObjects,
    ObjectObserver,
    ObjectTableSide,
}

impl PlacementFamily {
    pub const ALL: [PlacementFamily; 3] = [
        PlacementFamily::BetweenObjects,
        PlacementFamily::ObjectObserver,
        PlacementFamily::ObjectTableSide,
    ];

    pub fn style(self) -> &'static str {
        match self {
            PlacementFamily::BetweenObjects => "between_objects",
            PlacementFamily::ObjectObserver => "object_observer",
            PlacementFamily::ObjectTableSide => "object_table_side",
        }
    }

    fn anchors_needed(self) -> usize {
        match self {
            PlacementFamily::BetweenObjects => 2,
            _ => 1,
        }
    }
}

/// Table side of `p` as seen from `anchor`.
fn side_word(anchor: &Point2D, p: &Point2D) -> &'static str {
    let (dx, dy) = (p.x - anchor.x, p.y - anchor.y);
    if dx.abs() >= dy.abs() {
        if dx < 0.0 {
            "left"
        } else {
            "right"
        }
    } else if dy < 0.0 {
        "far"
    } else {
        "near"
    }
}

/// Label of the object put down in the episode: the last place step's
/// object, else the annotated object under the prior.
fn placed_label(episode: &Episode, scene: &Scene, prior: &Point2D) -> Option<String> {
    episode
        .steps
        .iter()
        .rev()
        .find(|s| s.skill == "place")
        .and_then(|s| s.object.clone())
        .or_else(|| {
            scene
                .objects
                .iter()
                .find(|o| o.box2d.is_some_and(|b| b.contains(prior)))
                .map(|o| o.label.clone())
        })
}

/// Placement sample on the last frame, seeded by the fingertip center at
/// the final release.
pub fn gen_placement_sample(
    episode: &Episode,
    keyframes: &KeyframeSet,
    ctx: &GenContext,
    family: Option<PlacementFamily>,
    seed: u64,
) -> Result<Forged, SampleGenError> {
    let opening = keyframes.openings.last().ok_or(SampleGenError::NoPlacementEvent)?;
    let prior = episode
        .gripper
        .at_frame(opening.mid)
        .and_then(|g| tip_center_px(g, episode.calib()))
        .ok_or_else(|| SampleGenError::MissingData(format!("fingertips at frame {}", opening.mid)))?
        .rounded();
    let last = episode.last_frame().index;
    let scene = Scene::from_episode(episode, last)?;
    let label = placed_label(episode, &scene, &prior)
        .ok_or_else(|| SampleGenError::MissingData("placed object label".into()))?;

    let mut anchors: Vec<&SceneObject> = scene
        .objects
        .iter()
        .filter(|o| o.label != label && o.box2d.is_some())
        .collect();
    anchors.sort_by(|a, b| {
        let da = a.centroid2d().map_or(f64::INFINITY, |c| c.distance(&prior));
        let db = b.centroid2d().map_or(f64::INFINITY, |c| c.distance(&prior));
        da.total_cmp(&db).then_with(|| a.id.cmp(&b.id))
    });
    let mut r = rng(seed);
    let family = match family {
        Some(f) => f,
        None => {
            let feasible: Vec<PlacementFamily> = PlacementFamily::ALL
                .into_iter()
                .filter(|f| f.anchors_needed() <= anchors.len())
                .collect();
            *feasible.choose(&mut r).ok_or(SampleGenError::EmptyScene)?
        }
    };
    if anchors.len() < family.anchors_needed() {
        return Err(SampleGenError::EmptyScene);
    }
    let refs = disambiguate_labels(&scene.objects)?;

    let mask = provider_mask(ctx, &scene, &label, None, Some(&prior))?;
    let k = rand::Rng::gen_range(&mut r, 1..=MAX_POINTS);
    let points = sample_points_in_mask(&mask, k, derive_seed(seed, "points"))?;

    let object = format!("the {label}");
    let a = refs[&anchors[0].id].noun_phrase();
    let b = anchors.get(1).map(|o| refs[&o.id].noun_phrase()).unwrap_or_default();
    let side = side_word(&anchors[0].centroid2d().expect("anchors have boxes"), &prior);
    let vars = [("object", object.as_str()), ("a", a.as_str()), ("b", b.as_str()), ("side", side)];
    let prompt = ctx.prompt("placement", family.style(), &vars, &mut r)?;

    let frame = episode.last_frame();
    let mut s = make_sample(
        SampleFamily::Placement,
        &episode.id,
        Some(last),
        prompt,
        vec![episode.image_key(frame)],
        Answer::Points(points),
        seed,
    );
    s.context.pixel = Some(prior);
    s.context.image_size = Some(scene.image_size);
    s.tags.meta.insert("style".into(), family.style().into());
    s.tags.meta.insert("object".into(), label);
    Ok(Forged {
        sample: s,
        mask: Some(mask),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn side_words() {
        let a = Point2D::new(100.0, 100.0);
        assert_eq!(side_word(&a, &Point2D::new(40.0, 110.0)), "left");
        assert_eq!(side_word(&a, &Point2D::new(180.0, 90.0)), "right");
        assert_eq!(side_word(&a, &Point2D::new(100.0, 20.0)), "far");
        assert_eq!(side_word(&a, &Point2D::new(110.0, 200.0)), "near");
    }
}
