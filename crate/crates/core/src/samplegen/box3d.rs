use rand::seq::SliceRandom;

use super::refs::disambiguate_labels;
use super::relations::{evaluate_relation, RelationKind, Space, SpatialRelation, Truth};
use super::{make_sample, pick, Forged, GenContext, SampleGenError, Scene, SceneObject};
use crate::sample::{Answer, SampleFamily};
use crate::seed::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoxQaMode {
    /// The prompt names the object.
    Direct,
    /// The prompt names an anchor and a direction from it.
    Refer,
}

impl BoxQaMode {
    pub fn style(self) -> &'static str {
        match self {
            BoxQaMode::Direct => "direct",
            BoxQaMode::Refer => "refer",
        }
    }
}

/// (target, anchor, direction) triples where the target holds the relation
/// and every other object of its label fails it.
pub(crate) fn refer_candidates<'a>(
    objects: &'a [SceneObject],
) -> Result<Vec<(&'a SceneObject, &'a SceneObject, RelationKind)>, SampleGenError> {
    let mut out = Vec::new();
    for anchor in objects {
        for kind in RelationKind::DIRECTIONAL {
            let rel = SpatialRelation::new(kind, vec![anchor.id.clone()])?;
            for target in objects.iter().filter(|o| o.id != anchor.id && o.label != anchor.label) {
                if evaluate_relation(objects, &rel, &target.id, Space::Camera)? != Truth::Holds {
                    continue;
                }
                let mut unique = true;
                for other in objects.iter().filter(|o| o.label == target.label && o.id != target.id) {
                    if evaluate_relation(objects, &rel, &other.id, Space::Camera)? != Truth::Fails {
                        unique = false;
                        break;
                    }
                }
                if unique {
                    out.push((target, anchor, kind));
                }
            }
        }
    }
    Ok(out)
}

/// 3D-box question over the objects of a scene that carry 3D boxes.
pub fn gen_3dbox_qa(scene: &Scene, mode: BoxQaMode, ctx: &GenContext, seed: u64) -> Result<Forged, SampleGenError> {
    let objects: Vec<SceneObject> = scene.objects.iter().filter(|o| o.box3d.is_some()).cloned().collect();
    if objects.is_empty() {
        return Err(SampleGenError::EmptyScene);
    }
    let refs = disambiguate_labels(&objects)?;
    let mut r = rng(seed);
    let (target, prompt, anchor) = match mode {
        BoxQaMode::Direct => {
            let target = pick(&objects, &mut r).expect("non-empty");
            let object = refs[&target.id].noun_phrase();
            let prompt = ctx.prompt("3dbox", "direct", &[("object", object.as_str())], &mut r)?;
            (target, prompt, None)
        }
        BoxQaMode::Refer => {
            let cands = refer_candidates(&objects)?;
            let &(target, anchor, kind) = cands.choose(&mut r).ok_or(SampleGenError::NoUnambiguousRelation)?;
            let object = format!("the {}", target.label);
            let relation = format!(
                "{} {}",
                ctx.templates.qualifier(kind.as_str()),
                refs[&anchor.id].noun_phrase()
            );
            let prompt = ctx.prompt(
                "3dbox",
                "refer",
                &[("object", object.as_str()), ("relation", relation.as_str())],
                &mut r,
            )?;
            (target, prompt, Some((anchor, kind)))
        }
    };
    let bbox = target.box3d.expect("filtered to 3D boxes");
    let mut s = make_sample(
        SampleFamily::Box3d,
        &scene.episode,
        Some(scene.frame),
        prompt,
        vec![scene.image.clone()],
        Answer::Box3d { bbox },
        seed,
    );
    s.tags.meta.insert("style".into(), mode.style().into());
    s.tags.meta.insert("object_id".into(), target.id.clone());
    if let Some((anchor, kind)) = anchor {
        s.context.anchor_box = anchor.box3d;
        s.context.direction = Some(kind.as_str().into());
        s.tags.meta.insert("anchor_id".into(), anchor.id.clone());
    } else {
        s.tags.meta.insert(
            "ref".into(),
            serde_json::to_string(&refs[&target.id]).expect("ref serializes"),
        );
    }
    Ok(Forged::bare(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplegen::{NullProvider, TemplateTable};
    use crate::types::Box3D;

    fn obj(id: &str, label: &str, v: [f64; 9]) -> SceneObject {
        SceneObject {
            id: id.into(),
            label: label.into(),
            box2d: None,
            box3d: Some(Box3D::from_array(v)),
            depth: Some(v[2]),
        }
    }

    fn scene(objects: Vec<SceneObject>) -> Scene {
        Scene {
            episode: "ep".into(),
            frame: 0,
            image: "ep/f.png".into(),
            image_size: (640, 480),
            objects,
        }
    }

    #[test]
    fn direct_answer_is_the_box() {
        let v = [1.0, 0.0, 2.0, 0.1, 0.1, 0.2, 0.0, 0.0, 0.0];
        let sc = scene(vec![obj("o", "apple", v)]);
        let ctx = GenContext::new(&NullProvider, TemplateTable::builtin());
        let f = gen_3dbox_qa(&sc, BoxQaMode::Direct, &ctx, 0).unwrap();
        let Answer::Box3d { bbox } = f.sample.answer else { panic!() };
        assert_eq!(bbox.to_array(), v);
        assert!(f.sample.prompt.contains("the apple"));
    }

    #[test]
    fn refer_answers_the_related_box() {
        // B spans x in [-0.6, -0.4], A spans [0.4, 0.6]; gap 0.8 > 0.02 margin.
        let a = [0.5, 0.0, 2.0, 0.2, 0.2, 0.2, 0.0, 0.0, 0.0];
        let b = [-0.5, 0.0, 2.0, 0.2, 0.2, 0.2, 0.0, 0.0, 0.0];
        let sc = scene(vec![obj("a", "box", a), obj("b", "cup", b)]);
        let ctx = GenContext::new(&NullProvider, TemplateTable::builtin());
        for seed in 0..8 {
            let f = gen_3dbox_qa(&sc, BoxQaMode::Refer, &ctx, seed).unwrap();
            let Answer::Box3d { bbox } = f.sample.answer else { panic!() };
            let dir = f.sample.context.direction.clone().unwrap();
            if dir == "left" {
                assert_eq!(bbox.to_array(), b);
                assert!(f.sample.prompt.contains("to the left of the box"));
            }
            if dir == "right" {
                assert_eq!(bbox.to_array(), a);
            }
        }
    }

    #[test]
    fn overlapping_extents_have_no_relation() {
        let a = [0.0, 0.0, 2.0, 0.4, 0.4, 0.4, 0.0, 0.0, 0.0];
        let b = [0.1, 0.05, 2.05, 0.4, 0.4, 0.4, 0.0, 0.0, 0.0];
        let sc = scene(vec![obj("a", "box", a), obj("b", "cup", b)]);
        let ctx = GenContext::new(&NullProvider, TemplateTable::builtin());
        assert!(matches!(
            gen_3dbox_qa(&sc, BoxQaMode::Refer, &ctx, 0),
            Err(SampleGenError::NoUnambiguousRelation)
        ));
    }

    #[test]
    fn empty_scene() {
        let ctx = GenContext::new(&NullProvider, TemplateTable::builtin());
        assert!(matches!(
            gen_3dbox_qa(&scene(vec![]), BoxQaMode::Direct, &ctx, 0),
            Err(SampleGenError::EmptyScene)
        ));
    }
}
