use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use super::refs::disambiguate_labels;
use super::relations::{evaluate_relation, RelationKind, Space, SpatialRelation, Truth};
use super::{make_sample, Forged, GenContext, SampleGenError, Scene};
use crate::sample::{Answer, SampleFamily};
use crate::seed::{derive_seed, rng};

/// Number of wrong options in choice questions.
pub const DISTRACTORS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QaFormat {
    SingleChoice,
    MultiChoice,
    Open,
    Caption,
}

impl QaFormat {
    pub const ALL: [QaFormat; 4] = [QaFormat::SingleChoice, QaFormat::MultiChoice, QaFormat::Open, QaFormat::Caption];

    pub fn style(self) -> &'static str {
        match self {
            QaFormat::SingleChoice => "single_choice",
            QaFormat::MultiChoice => "multi_choice",
            QaFormat::Open => "open",
            QaFormat::Caption => "caption",
        }
    }
}

fn space_for(kind: RelationKind) -> Space {
    match kind {
        RelationKind::InFrontOf | RelationKind::Behind => Space::Camera,
        _ => Space::Image,
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Question about which scene object stands in `relation`.
///
/// Answers are computed from geometry. Objects inside the margin band are
/// neither answers nor options. Choice formats show the answers among
/// three distractors: scene objects that clearly fail the relation first,
/// then vocabulary labels absent from the scene.
pub fn gen_spatial_relation_qa(
    scene: &Scene,
    relation: &SpatialRelation,
    format: QaFormat,
    ctx: &GenContext,
    seed: u64,
) -> Result<Forged, SampleGenError> {
    relation.check()?;
    let refs = disambiguate_labels(&scene.objects)?;
    let space = space_for(relation.kind);
    let candidates: Vec<&str> = if relation.is_superlative() {
        relation.anchors.iter().map(String::as_str).collect()
    } else {
        scene
            .objects
            .iter()
            .map(|o| o.id.as_str())
            .filter(|id| !relation.anchors.iter().any(|a| a == id))
            .collect()
    };
    let mut holders = Vec::new();
    let mut failing = Vec::new();
    for id in &candidates {
        match evaluate_relation(&scene.objects, relation, id, space)? {
            Truth::Holds => holders.push(*id),
            Truth::Fails => failing.push(*id),
            Truth::Borderline => {}
        }
    }
    if holders.is_empty() {
        return Err(SampleGenError::RelationUndecidable(format!(
            "no object is clearly {}",
            relation.kind.as_str()
        )));
    }
    if holders.len() > 1 && format != QaFormat::MultiChoice {
        return Err(SampleGenError::NoUnambiguousRelation);
    }

    let qualifier = ctx.templates.qualifier(relation.kind.as_str());
    let phrase = match relation.kind {
        RelationKind::Nearest | RelationKind::Farthest => qualifier.to_string(),
        RelationKind::Between => format!(
            "{} {} and {}",
            qualifier,
            refs[&relation.anchors[0]].noun_phrase(),
            refs[&relation.anchors[1]].noun_phrase()
        ),
        _ => format!("{} {}", qualifier, refs[&relation.anchors[0]].noun_phrase()),
    };

    let mut r = rng(seed);
    let name = |id: &str| refs[id].render();
    let (vars_object, options, answer) = match format {
        QaFormat::Open => (String::new(), Vec::new(), name(holders[0])),
        QaFormat::Caption => {
            let np = refs[holders[0]].noun_phrase();
            (np.clone(), Vec::new(), format!("{} is {}.", capitalize(&np), phrase))
        }
        QaFormat::SingleChoice | QaFormat::MultiChoice => {
            let mut pool: Vec<String> = failing.iter().map(|id| name(id)).collect();
            pool.shuffle(&mut r);
            let present: BTreeSet<&str> = scene.objects.iter().map(|o| o.label.as_str()).collect();
            let mut vocab: Vec<String> = ctx
                .templates
                .distractor_labels
                .iter()
                .filter(|l| !present.contains(l.as_str()))
                .cloned()
                .collect();
            vocab.shuffle(&mut r);
            pool.extend(vocab);
            if pool.len() < DISTRACTORS {
                return Err(SampleGenError::InsufficientDistractors { have: pool.len() });
            }
            let answers: Vec<String> = holders.iter().map(|id| name(id)).collect();
            let mut options: Vec<String> = answers.iter().cloned().chain(pool.into_iter().take(DISTRACTORS)).collect();
            let mut or = rng(derive_seed(seed, "options"));
            options.shuffle(&mut or);
            let shown: Vec<&String> = options.iter().filter(|o| answers.contains(o)).collect();
            let answer = shown.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ");
            (String::new(), options, answer)
        }
    };
    let options_text = options.join(", ");
    let vars = [
        ("relation", phrase.as_str()),
        ("options", options_text.as_str()),
        ("object", vars_object.as_str()),
    ];
    let prompt = ctx.prompt("relation", format.style(), &vars, &mut r)?;
    let mut s = make_sample(
        SampleFamily::Relation,
        &scene.episode,
        Some(scene.frame),
        prompt,
        vec![scene.image.clone()],
        Answer::Text { text: answer },
        seed,
    );
    s.context.options = options;
    s.tags.meta.insert("style".into(), format.style().into());
    s.tags.meta.insert("relation".into(), relation.kind.as_str().into());
    s.tags.meta.insert("anchors".into(), relation.anchors.join(","));
    s.tags.meta.insert("holders".into(), holders.join(","));
    Ok(Forged::bare(s))
}

/// Every well-formed relation over the scene, in a stable order.
pub fn scene_relations(scene: &Scene) -> Vec<SpatialRelation> {
    let ids: Vec<&String> = scene.objects.iter().map(|o| &o.id).collect();
    let mut out = Vec::new();
    if ids.len() >= 2 {
        for kind in [RelationKind::Nearest, RelationKind::Farthest] {
            out.push(SpatialRelation {
                kind,
                anchors: ids.iter().map(|s| s.to_string()).collect(),
            });
        }
    }
    for a in &ids {
        for kind in RelationKind::ALL {
            if matches!(kind, RelationKind::Between | RelationKind::Nearest | RelationKind::Farthest) {
                continue;
            }
            out.push(SpatialRelation {
                kind,
                anchors: vec![a.to_string()],
            });
        }
        for b in &ids {
            if a < b {
                out.push(SpatialRelation {
                    kind: RelationKind::Between,
                    anchors: vec![a.to_string(), b.to_string()],
                });
            }
        }
    }
    out
}

/// First relation question the scene supports, trying relations and
/// formats in seeded order.
pub fn gen_relation_qa_auto(scene: &Scene, ctx: &GenContext, seed: u64) -> Result<Forged, SampleGenError> {
    let mut r = rng(derive_seed(seed, "relation-order"));
    let mut rels = scene_relations(scene);
    rels.shuffle(&mut r);
    let mut formats = QaFormat::ALL;
    formats.shuffle(&mut r);
    let mut last = SampleGenError::NoUnambiguousRelation;
    for (i, rel) in rels.iter().enumerate() {
        let format = formats[i % formats.len()];
        for f in std::iter::once(format).chain(QaFormat::ALL.into_iter().filter(|f| *f != format)) {
            match gen_spatial_relation_qa(scene, rel, f, ctx, seed) {
                Ok(s) => return Ok(s),
                Err(e @ (SampleGenError::UnresolvableDuplicates(_) | SampleGenError::Provider(_))) => return Err(e),
                Err(e) => last = e,
            }
        }
    }
    Err(last)
}
