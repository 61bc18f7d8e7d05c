use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{SampleGenError, SceneObject};

/// Pixels below which two image centroids count as coincident.
pub const COINCIDENT_PX: f64 = 1.0;
/// Meters below which two 3D centroids count as coincident.
pub const COINCIDENT_M: f64 = 0.01;

/// Ordering direction for ordinal references.
///
/// X and Y use image centroids when every object of the label has a 2D box
/// and camera-frame 3D centers otherwise. Z is always camera depth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn phrase(self) -> &'static str {
        match self {
            Axis::X => "from the left",
            Axis::Y => "from the top",
            Axis::Z => "from the front",
        }
    }
}

/// A label, optionally narrowed by rank along an axis (1 = first).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectRef {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal: Option<(Axis, usize)>,
}

const ORDINALS: [&str; 10] = [
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth",
];

fn ordinal_word(rank: usize) -> String {
    match ORDINALS.get(rank.wrapping_sub(1)) {
        Some(w) => (*w).to_string(),
        None => format!("{rank}th"),
    }
}

impl ObjectRef {
    pub fn plain(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            ordinal: None,
        }
    }

    /// `"plate"` or `"the first cup from the left"`.
    pub fn render(&self) -> String {
        match self.ordinal {
            None => self.label.clone(),
            Some((axis, rank)) => format!("the {} {} {}", ordinal_word(rank), self.label, axis.phrase()),
        }
    }

    /// Rendered form usable in running text (`"the plate"`).
    pub fn noun_phrase(&self) -> String {
        match self.ordinal {
            None => format!("the {}", self.label),
            Some(_) => self.render(),
        }
    }
}

impl std::fmt::Display for ObjectRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.render())
    }
}

fn coord(o: &SceneObject, axis: Axis, image: bool) -> Option<f64> {
    match (axis, image) {
        (Axis::X, true) => o.box2d.map(|b| b.centroid().x),
        (Axis::Y, true) => o.box2d.map(|b| b.centroid().y),
        (Axis::X, false) => o.box3d.map(|b| b.cx),
        (Axis::Y, false) => o.box3d.map(|b| b.cy),
        (Axis::Z, _) => o.box3d.map(|b| b.cz).or(o.depth),
    }
}

fn uses_image(group: &[&SceneObject], axis: Axis) -> bool {
    axis != Axis::Z && group.iter().all(|o| o.box2d.is_some())
}

/// Group members sorted along `axis`, or `None` when a coordinate is
/// missing or two members coincide.
fn order_along<'a>(group: &[&'a SceneObject], axis: Axis) -> Option<Vec<&'a SceneObject>> {
    let image = uses_image(group, axis);
    let tol = if image { COINCIDENT_PX } else { COINCIDENT_M };
    let mut keyed: Vec<(f64, &SceneObject)> = group
        .iter()
        .map(|o| coord(o, axis, image).map(|c| (c, *o)))
        .collect::<Option<_>>()?;
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
    if keyed.windows(2).any(|w| w[1].0 - w[0].0 < tol) {
        return None;
    }
    Some(keyed.into_iter().map(|(_, o)| o).collect())
}

fn spread(group: &[&SceneObject], axis: Axis) -> f64 {
    let image = uses_image(group, axis);
    let cs: Vec<f64> = group.iter().filter_map(|o| coord(o, axis, image)).collect();
    let lo = cs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

/// Gives every object a reference that names it alone.
///
/// Labels seen once pass through. Repeated labels are ranked along the axis
/// with the widest centroid spread; if two members coincide on that axis
/// the next axis is tried, and depth comes last.
pub fn disambiguate_labels(objects: &[SceneObject]) -> Result<BTreeMap<String, ObjectRef>, SampleGenError> {
    let mut groups: BTreeMap<&str, Vec<&SceneObject>> = BTreeMap::new();
    for o in objects {
        groups.entry(o.label.as_str()).or_default().push(o);
    }
    let mut out = BTreeMap::new();
    for (label, group) in groups {
        if group.len() == 1 {
            out.insert(group[0].id.clone(), ObjectRef::plain(label));
            continue;
        }
        let mut planar = [Axis::X, Axis::Y];
        planar.sort_by(|a, b| spread(&group, *b).total_cmp(&spread(&group, *a)));
        let ordered = planar
            .into_iter()
            .chain([Axis::Z])
            .find_map(|axis| order_along(&group, axis).map(|o| (axis, o)));
        let (axis, ordered) = ordered.ok_or_else(|| SampleGenError::UnresolvableDuplicates(label.to_string()))?;
        for (i, o) in ordered.into_iter().enumerate() {
            out.insert(
                o.id.clone(),
                ObjectRef {
                    label: label.to_string(),
                    ordinal: Some((axis, i + 1)),
                },
            );
        }
    }
    Ok(out)
}

/// The single object `r` names in `objects`.
pub fn resolve_ref<'a>(objects: &'a [SceneObject], r: &ObjectRef) -> Result<&'a SceneObject, SampleGenError> {
    let group: Vec<&SceneObject> = objects.iter().filter(|o| o.label == r.label).collect();
    match r.ordinal {
        None => match group.len() {
            0 => Err(SampleGenError::UnknownRef(r.render())),
            1 => Ok(group[0]),
            _ => Err(SampleGenError::AmbiguousRef(r.render())),
        },
        Some((axis, rank)) => {
            let ordered = order_along(&group, axis).ok_or_else(|| SampleGenError::AmbiguousRef(r.render()))?;
            rank.checked_sub(1)
                .and_then(|i| ordered.get(i).copied())
                .ok_or_else(|| SampleGenError::UnknownRef(r.render()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Box2D, Box3D};

    fn obj2(id: &str, label: &str, cx: f64, cy: f64) -> SceneObject {
        SceneObject {
            id: id.into(),
            label: label.into(),
            box2d: Box2D::new(cx - 10.0, cy - 10.0, cx + 10.0, cy + 10.0),
            box3d: None,
            depth: None,
        }
    }

    #[test]
    fn two_cups_ranked_left_to_right() {
        let objs = vec![obj2("b", "cup", 400.0, 50.0), obj2("a", "cup", 100.0, 60.0), obj2("p", "plate", 0.0, 0.0)];
        let refs = disambiguate_labels(&objs).unwrap();
        assert_eq!(refs["a"].render(), "the first cup from the left");
        assert_eq!(refs["b"].render(), "the second cup from the left");
        assert_eq!(refs["p"].render(), "plate");
        assert_eq!(refs["p"].noun_phrase(), "the plate");
        for (id, r) in &refs {
            assert_eq!(&resolve_ref(&objs, r).unwrap().id, id);
        }
    }

    #[test]
    fn vertical_spread_picks_y_axis() {
        let objs = vec![obj2("a", "cup", 100.0, 50.0), obj2("b", "cup", 105.0, 300.0)];
        let refs = disambiguate_labels(&objs).unwrap();
        assert_eq!(refs["a"].render(), "the first cup from the top");
    }

    #[test]
    fn coincident_duplicates_fail() {
        let objs = vec![obj2("a", "cup", 100.0, 50.0), obj2("b", "cup", 100.5, 50.2)];
        assert!(matches!(
            disambiguate_labels(&objs),
            Err(SampleGenError::UnresolvableDuplicates(l)) if l == "cup"
        ));
    }

    #[test]
    fn depth_breaks_image_ties() {
        let mut a = obj2("a", "cup", 100.0, 50.0);
        let mut b = obj2("b", "cup", 100.0, 50.0);
        a.box3d = Some(Box3D::from_array([0.0, 0.0, 1.5, 0.1, 0.1, 0.1, 0.0, 0.0, 0.0]));
        b.box3d = Some(Box3D::from_array([0.0, 0.0, 0.8, 0.1, 0.1, 0.1, 0.0, 0.0, 0.0]));
        let objs = vec![a, b];
        let refs = disambiguate_labels(&objs).unwrap();
        assert_eq!(refs["b"].render(), "the first cup from the front");
    }

    #[test]
    fn bare_duplicate_is_ambiguous() {
        let objs = vec![obj2("a", "cup", 100.0, 50.0), obj2("b", "cup", 400.0, 50.0)];
        assert!(matches!(
            resolve_ref(&objs, &ObjectRef::plain("cup")),
            Err(SampleGenError::AmbiguousRef(_))
        ));
        assert!(matches!(
            resolve_ref(&objs, &ObjectRef::plain("bowl")),
            Err(SampleGenError::UnknownRef(_))
        ));
    }

    #[test]
    fn ordinal_words() {
        assert_eq!(ordinal_word(1), "first");
        assert_eq!(ordinal_word(10), "tenth");
        assert_eq!(ordinal_word(12), "12th");
    }
}
