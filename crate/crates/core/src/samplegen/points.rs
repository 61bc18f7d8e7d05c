use rand::seq::index::sample;
use rand::seq::SliceRandom;

use super::refs::{disambiguate_labels, resolve_ref, ObjectRef};
use super::relations::{evaluate_relation, RelationKind, Space, SpatialRelation, Truth};
use super::{make_sample, Forged, GenContext, SampleGenError, Scene, SceneObject};
use crate::raster::Mask;
use crate::sample::{Answer, SampleFamily};
use crate::seed::{derive_seed, rng};
use crate::types::{Box2D, Point2D, PointSet, MAX_POINTS};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PromptStyle {
    /// Names the object.
    Direct,
    /// Names the object by label plus its relation to another object.
    Enhanced,
}

impl PromptStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptStyle::Direct => "direct",
            PromptStyle::Enhanced => "enhanced",
        }
    }
}

/// `k` distinct mask pixels, drawn uniformly.
pub fn sample_points_in_mask(mask: &Mask, k: usize, seed: u64) -> Result<PointSet, SampleGenError> {
    let have = mask.count();
    if k == 0 || k > MAX_POINTS || have < k {
        return Err(SampleGenError::MaskTooSmall { have, need: k.max(1) });
    }
    let pixels: Vec<(u32, u32)> = mask.pixels().collect();
    let mut r = rng(seed);
    let mut picked: Vec<usize> = sample(&mut r, pixels.len(), k).into_vec();
    picked.sort_unstable();
    let pts = picked
        .into_iter()
        .map(|i| Point2D::new(pixels[i].0 as f64, pixels[i].1 as f64))
        .collect();
    Ok(PointSet::new(pts).expect("1..=9 points"))
}

/// Detection box that best matches `hint`, or the one nearest to `prior`.
pub(crate) fn choose_box(boxes: &[Box2D], hint: Option<&Box2D>, prior: Option<&Point2D>) -> Option<Box2D> {
    if let Some(h) = hint {
        return boxes
            .iter()
            .filter(|b| b.iou(h) > 0.0)
            .max_by(|a, b| a.iou(h).total_cmp(&b.iou(h)))
            .copied();
    }
    if let Some(p) = prior {
        if let Some(b) = boxes.iter().find(|b| b.contains(p)) {
            return Some(*b);
        }
        return boxes
            .iter()
            .min_by(|a, b| a.centroid().distance(p).total_cmp(&b.centroid().distance(p)))
            .copied();
    }
    boxes.first().copied()
}

/// Detect-then-segment for one label in one image.
pub(crate) fn provider_mask(
    ctx: &GenContext,
    scene: &Scene,
    label: &str,
    hint: Option<&Box2D>,
    prior: Option<&Point2D>,
) -> Result<Mask, SampleGenError> {
    let boxes = ctx.provider.detect(&scene.image, label)?;
    let b = choose_box(&boxes, hint, prior)
        .ok_or_else(|| SampleGenError::ProviderMiss(format!("no '{label}' box in {}", scene.image)))?;
    let (w, h) = scene.image_size;
    Ok(ctx.provider.segment(&scene.image, &b, w, h)?)
}

/// Image-plane relations that pick out `target` among objects of its label.
fn unique_relations(scene: &Scene, target: &SceneObject) -> Result<Vec<(RelationKind, String)>, SampleGenError> {
    let same: Vec<&SceneObject> = scene.objects.iter().filter(|o| o.label == target.label).collect();
    let mut out = Vec::new();
    for anchor in scene.objects.iter().filter(|o| o.label != target.label) {
        for kind in [RelationKind::Left, RelationKind::Right, RelationKind::Above, RelationKind::Under] {
            let rel = SpatialRelation::new(kind, vec![anchor.id.clone()])?;
            let t = evaluate_relation(&scene.objects, &rel, &target.id, Space::Image)?;
            if t != Truth::Holds {
                continue;
            }
            let others_fail = same
                .iter()
                .filter(|o| o.id != target.id)
                .map(|o| evaluate_relation(&scene.objects, &rel, &o.id, Space::Image))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .all(|t| t == Truth::Fails);
            if others_fail {
                out.push((kind, anchor.id.clone()));
            }
        }
    }
    Ok(out)
}

/// Pointing sample for one referenced object; returns the mask the points
/// were drawn from.
pub fn gen_pointing_sample(
    scene: &Scene,
    object_ref: &ObjectRef,
    ctx: &GenContext,
    style: PromptStyle,
    seed: u64,
) -> Result<Forged, SampleGenError> {
    let target = resolve_ref(&scene.objects, object_ref)?;
    let mut r = rng(seed);
    let (object, relation) = match style {
        PromptStyle::Direct => (object_ref.noun_phrase(), None),
        PromptStyle::Enhanced => {
            let refs = disambiguate_labels(&scene.objects)?;
            let options = unique_relations(scene, target)?;
            let (kind, anchor) = options.choose(&mut r).ok_or(SampleGenError::NoUnambiguousRelation)?;
            let phrase = format!(
                "{} {}",
                ctx.templates.qualifier(kind.as_str()),
                refs[anchor].noun_phrase()
            );
            (format!("the {}", target.label), Some(phrase))
        }
    };
    let mask = provider_mask(ctx, scene, &target.label, target.box2d.as_ref(), None)
        .map_err(|e| match e {
            SampleGenError::ProviderMiss(_) => SampleGenError::ProviderMiss(object_ref.render()),
            e => e,
        })?;
    let k = rand::Rng::gen_range(&mut r, 1..=MAX_POINTS);
    let points = sample_points_in_mask(&mask, k, derive_seed(seed, "points"))?;
    let mut vars = vec![("object", object.as_str())];
    if let Some(rel) = &relation {
        vars.push(("relation", rel.as_str()));
    }
    let prompt = ctx.prompt("points", style.as_str(), &vars, &mut r)?;
    let mut s = make_sample(
        SampleFamily::Points,
        &scene.episode,
        Some(scene.frame),
        prompt,
        vec![scene.image.clone()],
        Answer::Points(points),
        seed,
    );
    s.context.image_size = Some(scene.image_size);
    s.tags.meta.insert("style".into(), style.as_str().into());
    s.tags.meta.insert("object_id".into(), target.id.clone());
    s.tags.meta.insert("ref".into(), serde_json::to_string(object_ref).expect("ref serializes"));
    Ok(Forged {
        sample: s,
        mask: Some(mask),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplegen::provider::{Response, Transcript};
    use crate::samplegen::{FixtureProvider, NullProvider, TemplateTable};
    use std::collections::BTreeSet;

    #[test]
    fn full_mask_gives_distinct_points() {
        let m = Mask::from_fn(100, 100, |_, _| true);
        let ps = sample_points_in_mask(&m, 9, 1).unwrap();
        assert_eq!(ps.len(), 9);
        let uniq: BTreeSet<(i64, i64)> = ps.points.iter().map(|p| (p.x as i64, p.y as i64)).collect();
        assert_eq!(uniq.len(), 9);
        assert!(ps.points.iter().all(|p| m.contains(p) && p.in_image(100, 100)));
        assert_eq!(ps, sample_points_in_mask(&m, 9, 1).unwrap());
    }

    #[test]
    fn small_mask_is_rejected() {
        let mut m = Mask::empty(10, 10);
        for x in 0..3 {
            m.set(x, 0, true);
        }
        assert!(matches!(
            sample_points_in_mask(&m, 5, 0),
            Err(SampleGenError::MaskTooSmall { have: 3, need: 5 })
        ));
    }

    fn scene() -> Scene {
        let o = |id: &str, label: &str, x1: f64| SceneObject {
            id: id.into(),
            label: label.into(),
            box2d: Box2D::new(x1, 200.0, x1 + 60.0, 260.0),
            box3d: None,
            depth: None,
        };
        Scene {
            episode: "ep".into(),
            frame: 0,
            image: "ep/img.png".into(),
            image_size: (640, 480),
            objects: vec![o("a", "apple", 100.0), o("p", "plate", 300.0), o("c1", "cup", 450.0), o("c2", "cup", 20.0)],
        }
    }

    fn provider(scene: &Scene) -> FixtureProvider {
        let mut t = Transcript::default();
        for o in &scene.objects {
            let b = o.box2d.unwrap();
            t.insert(
                &crate::samplegen::provider::Request::Detect {
                    image: scene.image.clone(),
                    label: o.label.clone(),
                },
                Response::Boxes {
                    boxes: scene.objects.iter().filter(|x| x.label == o.label).map(|x| x.box2d.unwrap()).collect(),
                },
            );
            t.insert(
                &crate::samplegen::provider::Request::Segment {
                    image: scene.image.clone(),
                    bbox: b,
                    width: 640,
                    height: 480,
                },
                Response::FilledBox { fill_box: b },
            );
        }
        FixtureProvider::new(t, std::env::temp_dir())
    }

    #[test]
    fn direct_points_land_in_mask() {
        let sc = scene();
        let p = provider(&sc);
        let ctx = GenContext::new(&p, TemplateTable::builtin());
        let f = gen_pointing_sample(&sc, &ObjectRef::plain("apple"), &ctx, PromptStyle::Direct, 5).unwrap();
        let mask = f.mask.unwrap();
        let Answer::Points(ps) = &f.sample.answer else { panic!() };
        assert!(ps.points.iter().all(|q| mask.contains(q)));
        assert!(f.sample.prompt.contains("the apple"));
    }

    #[test]
    fn enhanced_prompt_uses_a_qualifier() {
        let sc = scene();
        let p = provider(&sc);
        let t = TemplateTable::builtin();
        let ctx = GenContext::new(&p, t);
        let refs = disambiguate_labels(&sc.objects).unwrap();
        let f = gen_pointing_sample(&sc, &refs["c1"], &ctx, PromptStyle::Enhanced, 2).unwrap();
        assert!(
            t.qualifiers.values().any(|q| f.sample.prompt.contains(q.as_str())),
            "{}",
            f.sample.prompt
        );
    }

    #[test]
    fn bare_duplicate_label_is_ambiguous() {
        let sc = scene();
        let ctx = GenContext::new(&NullProvider, TemplateTable::builtin());
        assert!(matches!(
            gen_pointing_sample(&sc, &ObjectRef::plain("cup"), &ctx, PromptStyle::Direct, 0),
            Err(SampleGenError::AmbiguousRef(_))
        ));
    }

    #[test]
    fn provider_miss_names_the_ref() {
        let sc = scene();
        let p = FixtureProvider::new(Transcript::default(), std::env::temp_dir());
        let ctx = GenContext::new(&p, TemplateTable::builtin());
        match gen_pointing_sample(&sc, &ObjectRef::plain("apple"), &ctx, PromptStyle::Direct, 0) {
            Err(SampleGenError::ProviderMiss(s)) => assert_eq!(s, "apple"),
            other => panic!("{other:?}"),
        }
    }
}
