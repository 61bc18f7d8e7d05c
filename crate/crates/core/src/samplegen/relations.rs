use serde::{Deserialize, Serialize};

use super::{SampleGenError, SceneObject};

/// Gap, as a fraction of the anchor's extent, a relation must clear.
pub const MARGIN_FRACTION: f64 = 0.1;

const CENTER_HOLDS: f64 = 0.2;
const CENTER_FAILS: f64 = 0.3;
const EDGE_LO: f64 = 0.4;
const EDGE_HI: f64 = 0.5;
const EDGE_FAILS_HI: f64 = 0.6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Left,
    Right,
    InFrontOf,
    Behind,
    Above,
    Under,
    Between,
    Nearest,
    Farthest,
    Center,
    Edge,
}

impl RelationKind {
    pub const ALL: [RelationKind; 11] = [
        RelationKind::Left,
        RelationKind::Right,
        RelationKind::InFrontOf,
        RelationKind::Behind,
        RelationKind::Above,
        RelationKind::Under,
        RelationKind::Between,
        RelationKind::Nearest,
        RelationKind::Farthest,
        RelationKind::Center,
        RelationKind::Edge,
    ];

    /// Directions usable for 3D refer questions.
    pub const DIRECTIONAL: [RelationKind; 6] = [
        RelationKind::Left,
        RelationKind::Right,
        RelationKind::InFrontOf,
        RelationKind::Behind,
        RelationKind::Above,
        RelationKind::Under,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::Left => "left",
            RelationKind::Right => "right",
            RelationKind::InFrontOf => "in_front_of",
            RelationKind::Behind => "behind",
            RelationKind::Above => "above",
            RelationKind::Under => "under",
            RelationKind::Between => "between",
            RelationKind::Nearest => "nearest",
            RelationKind::Farthest => "farthest",
            RelationKind::Center => "center",
            RelationKind::Edge => "edge",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Left and right swap under a horizontal flip; others are unchanged.
    pub fn mirrored(self) -> Self {
        match self {
            RelationKind::Left => RelationKind::Right,
            RelationKind::Right => RelationKind::Left,
            k => k,
        }
    }
}

/// A relation with its anchor object ids.
///
/// `between` names two anchors, `nearest` and `farthest` name the
/// candidate set (two or more), every other kind one anchor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialRelation {
    pub kind: RelationKind,
    pub anchors: Vec<String>,
}

impl SpatialRelation {
    pub fn new(kind: RelationKind, anchors: Vec<String>) -> Result<Self, SampleGenError> {
        let r = Self { kind, anchors };
        r.check()?;
        Ok(r)
    }

    pub fn check(&self) -> Result<(), SampleGenError> {
        let n = self.anchors.len();
        let ok = match self.kind {
            RelationKind::Between => n == 2 && self.anchors[0] != self.anchors[1],
            RelationKind::Nearest | RelationKind::Farthest => n >= 2,
            _ => n == 1,
        };
        if ok {
            Ok(())
        } else {
            Err(SampleGenError::BadRelation(format!(
                "{} takes {} anchors, got {n}",
                self.kind.as_str(),
                match self.kind {
                    RelationKind::Between => "2 distinct",
                    RelationKind::Nearest | RelationKind::Farthest => "at least 2",
                    _ => "1",
                }
            )))
        }
    }

    /// Whether the relation ranks a candidate set instead of comparing to an
    /// anchor.
    pub fn is_superlative(&self) -> bool {
        matches!(self.kind, RelationKind::Nearest | RelationKind::Farthest)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    Holds,
    Fails,
    /// Inside the margin band; neither a safe answer nor a safe distractor.
    Borderline,
}

/// Where left/right/above/under are measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    /// Image-plane boxes.
    Image,
    /// Camera-frame 3D boxes.
    Camera,
}

fn missing(o: &SceneObject, what: &str) -> SampleGenError {
    SampleGenError::MissingData(format!("{what} for object {}", o.id))
}

fn interval(o: &SceneObject, axis: usize, space: Space) -> Result<(f64, f64), SampleGenError> {
    match (space, axis) {
        (Space::Image, 0 | 1) => o.box2d.map(|b| b.interval(axis)).ok_or_else(|| missing(o, "2D box")),
        _ => o.box3d.map(|b| b.interval(axis)).ok_or_else(|| missing(o, "3D box")),
    }
}

/// Gap by which `s` lies on the low side of `a` along an axis.
fn low_gap(s: (f64, f64), a: (f64, f64)) -> f64 {
    a.0 - s.1
}

fn directional_truth(kind: RelationKind, s: &SceneObject, a: &SceneObject, space: Space) -> Result<Truth, SampleGenError> {
    // Axis and whether the relation points toward lower coordinates.
    let (axis, toward_low) = match kind {
        RelationKind::Left => (0, true),
        RelationKind::Right => (0, false),
        RelationKind::Above => (1, true),
        RelationKind::Under => (1, false),
        RelationKind::InFrontOf => (2, true),
        RelationKind::Behind => (2, false),
        _ => unreachable!("directional kinds only"),
    };
    if axis == 2 && (s.box3d.is_none() || a.box3d.is_none()) {
        return depth_truth(toward_low, s, a);
    }
    let si = interval(s, axis, space)?;
    let ai = interval(a, axis, space)?;
    let margin = MARGIN_FRACTION * (ai.1 - ai.0);
    let (fwd, back) = if toward_low {
        (low_gap(si, ai), low_gap(ai, si))
    } else {
        (low_gap(ai, si), low_gap(si, ai))
    };
    Ok(if fwd > margin {
        Truth::Holds
    } else if back > margin {
        Truth::Fails
    } else {
        Truth::Borderline
    })
}

fn depth_truth(toward_near: bool, s: &SceneObject, a: &SceneObject) -> Result<Truth, SampleGenError> {
    let ds = s.depth.ok_or_else(|| missing(s, "depth"))?;
    let da = a.depth.ok_or_else(|| missing(a, "depth"))?;
    let margin = MARGIN_FRACTION * da;
    let delta = if toward_near { da - ds } else { ds - da };
    Ok(if delta > margin {
        Truth::Holds
    } else if -delta > margin {
        Truth::Fails
    } else {
        Truth::Borderline
    })
}

fn between_truth(s: &SceneObject, a: &SceneObject, b: &SceneObject, space: Space) -> Result<Truth, SampleGenError> {
    let centers = |o: &SceneObject| -> Result<[f64; 2], SampleGenError> {
        let x = interval(o, 0, space)?;
        let y = interval(o, 1, space)?;
        Ok([(x.0 + x.1) / 2.0, (y.0 + y.1) / 2.0])
    };
    let (ca, cb) = (centers(a)?, centers(b)?);
    let axis = if (ca[0] - cb[0]).abs() >= (ca[1] - cb[1]).abs() { 0 } else { 1 };
    let (lo_o, hi_o) = if ca[axis] <= cb[axis] { (a, b) } else { (b, a) };
    let lo = interval(lo_o, axis, space)?.1;
    let hi = interval(hi_o, axis, space)?.0;
    if hi <= lo {
        return Ok(Truth::Borderline);
    }
    let band = MARGIN_FRACTION * (hi - lo);
    let cs = centers(s)?;
    let perp = 1 - axis;
    let pa = interval(a, perp, space)?;
    let pb = interval(b, perp, space)?;
    let (plo, phi) = (pa.0.min(pb.0), pa.1.max(pb.1));
    let along = cs[axis];
    let across = cs[perp];
    Ok(if along > lo + band && along < hi - band && across >= plo && across <= phi {
        Truth::Holds
    } else if along < lo || along > hi || across < plo || across > phi {
        Truth::Fails
    } else {
        Truth::Borderline
    })
}

fn placement_truth(kind: RelationKind, s: &SceneObject, a: &SceneObject, space: Space) -> Result<Truth, SampleGenError> {
    let ax = interval(a, 0, space)?;
    let ay = interval(a, 1, space)?;
    let sx = interval(s, 0, space)?;
    let sy = interval(s, 1, space)?;
    let u = ((sx.0 + sx.1) / 2.0 - ax.0) / (ax.1 - ax.0);
    let v = ((sy.0 + sy.1) / 2.0 - ay.0) / (ay.1 - ay.0);
    let d = (u - 0.5).abs().max((v - 0.5).abs());
    Ok(match kind {
        RelationKind::Center if d <= CENTER_HOLDS => Truth::Holds,
        RelationKind::Center if d >= CENTER_FAILS => Truth::Fails,
        RelationKind::Edge if (EDGE_LO..=EDGE_HI).contains(&d) => Truth::Holds,
        RelationKind::Edge if d <= CENTER_FAILS || d > EDGE_FAILS_HI => Truth::Fails,
        _ => Truth::Borderline,
    })
}

fn find<'a>(objects: &'a [SceneObject], id: &str) -> Result<&'a SceneObject, SampleGenError> {
    objects
        .iter()
        .find(|o| o.id == id)
        .ok_or_else(|| SampleGenError::UnknownRef(id.to_string()))
}

/// Truth of `subject <relation> anchors` on the scene geometry.
///
/// For `nearest`/`farthest` the subject must be one of the candidates; the
/// extreme candidate holds and the rest fail, unless the runner-up is
/// within the margin, which makes the relation undecidable.
pub fn evaluate_relation(
    objects: &[SceneObject],
    relation: &SpatialRelation,
    subject: &str,
    space: Space,
) -> Result<Truth, SampleGenError> {
    relation.check()?;
    let s = find(objects, subject)?;
    let anchor = |i: usize| find(objects, &relation.anchors[i]);
    match relation.kind {
        RelationKind::Between => between_truth(s, anchor(0)?, anchor(1)?, space),
        RelationKind::Center | RelationKind::Edge => placement_truth(relation.kind, s, anchor(0)?, space),
        RelationKind::Nearest | RelationKind::Farthest => {
            if !relation.anchors.iter().any(|a| a == subject) {
                return Err(SampleGenError::BadRelation(format!("{subject} is not a candidate")));
            }
            let winner = superlative_winner(objects, relation)?;
            Ok(if winner == subject { Truth::Holds } else { Truth::Fails })
        }
        kind => {
            let a = anchor(0)?;
            if a.id == s.id {
                return Ok(Truth::Borderline);
            }
            directional_truth(kind, s, a, space)
        }
    }
}

/// The unique nearest or farthest candidate.
pub fn superlative_winner<'a>(objects: &[SceneObject], relation: &'a SpatialRelation) -> Result<&'a str, SampleGenError> {
    let mut ds: Vec<(f64, &str)> = relation
        .anchors
        .iter()
        .map(|id| {
            let o = find(objects, id)?;
            o.depth.map(|d| (d, id.as_str())).ok_or_else(|| missing(o, "depth"))
        })
        .collect::<Result<_, _>>()?;
    ds.sort_by(|a, b| a.0.total_cmp(&b.0));
    if relation.kind == RelationKind::Farthest {
        ds.reverse();
    }
    let (d0, id0) = ds[0];
    let d1 = ds[1].0;
    let base = d0.min(d1);
    if (d1 - d0).abs() <= MARGIN_FRACTION * base {
        return Err(SampleGenError::RelationUndecidable(format!(
            "{} candidates {} and {} are within the margin",
            relation.kind.as_str(),
            id0,
            ds[1].1
        )));
    }
    Ok(id0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Box2D, Box3D};

    fn o2(id: &str, x1: f64, x2: f64) -> SceneObject {
        SceneObject {
            id: id.into(),
            label: id.into(),
            box2d: Box2D::new(x1, 100.0, x2, 200.0),
            box3d: None,
            depth: None,
        }
    }

    fn od(id: &str, depth: f64) -> SceneObject {
        SceneObject {
            id: id.into(),
            label: id.into(),
            box2d: None,
            box3d: None,
            depth: Some(depth),
        }
    }

    fn rel(kind: RelationKind, anchors: &[&str]) -> SpatialRelation {
        SpatialRelation::new(kind, anchors.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn left_right_with_margin() {
        let objs = vec![o2("a", 80.0, 120.0), o2("b", 380.0, 420.0), o2("c", 350.0, 400.0)];
        let left_b = rel(RelationKind::Left, &["b"]);
        assert_eq!(evaluate_relation(&objs, &left_b, "a", Space::Image).unwrap(), Truth::Holds);
        assert_eq!(evaluate_relation(&objs, &rel(RelationKind::Left, &["a"]), "b", Space::Image).unwrap(), Truth::Fails);
        // c overlaps b.
        assert_eq!(evaluate_relation(&objs, &left_b, "c", Space::Image).unwrap(), Truth::Borderline);
    }

    #[test]
    fn gap_inside_margin_is_borderline() {
        // Anchor width 100 -> margin 10; gap 5.
        let objs = vec![o2("s", 0.0, 95.0), o2("a", 100.0, 200.0)];
        let r = rel(RelationKind::Left, &["a"]);
        assert_eq!(evaluate_relation(&objs, &r, "s", Space::Image).unwrap(), Truth::Borderline);
        let objs = vec![o2("s", 0.0, 89.0), o2("a", 100.0, 200.0)];
        assert_eq!(evaluate_relation(&objs, &r, "s", Space::Image).unwrap(), Truth::Holds);
    }

    #[test]
    fn nearest_and_undecidable() {
        let objs = vec![od("a", 1.0), od("b", 0.5), od("c", 2.0)];
        let r = rel(RelationKind::Nearest, &["a", "b", "c"]);
        assert_eq!(superlative_winner(&objs, &r).unwrap(), "b");
        assert_eq!(evaluate_relation(&objs, &r, "a", Space::Image).unwrap(), Truth::Fails);
        let r = rel(RelationKind::Farthest, &["a", "b", "c"]);
        assert_eq!(superlative_winner(&objs, &r).unwrap(), "c");
        let objs = vec![od("a", 1.0), od("b", 1.05)];
        let r = rel(RelationKind::Nearest, &["a", "b"]);
        assert!(matches!(superlative_winner(&objs, &r), Err(SampleGenError::RelationUndecidable(_))));
    }

    #[test]
    fn equal_depth_front_behind_is_borderline() {
        let objs = vec![od("a", 1.0), od("b", 1.0)];
        for k in [RelationKind::InFrontOf, RelationKind::Behind] {
            assert_eq!(evaluate_relation(&objs, &rel(k, &["b"]), "a", Space::Image).unwrap(), Truth::Borderline);
        }
    }

    #[test]
    fn camera_space_uses_3d_intervals() {
        let b = |id: &str, cx: f64| SceneObject {
            id: id.into(),
            label: id.into(),
            box2d: None,
            box3d: Some(Box3D::from_array([cx, 0.0, 2.0, 0.2, 0.2, 0.2, 0.0, 0.0, 0.0])),
            depth: Some(2.0),
        };
        let objs = vec![b("a", 0.5), b("b", -0.5)];
        let r = rel(RelationKind::Left, &["a"]);
        assert_eq!(evaluate_relation(&objs, &r, "b", Space::Camera).unwrap(), Truth::Holds);
        assert_eq!(
            evaluate_relation(&objs, &rel(RelationKind::InFrontOf, &["a"]), "b", Space::Camera).unwrap(),
            Truth::Borderline
        );
    }

    #[test]
    fn between_along_dominant_axis() {
        let objs = vec![o2("a", 0.0, 50.0), o2("b", 350.0, 400.0), o2("s", 180.0, 220.0), o2("t", 420.0, 460.0)];
        let r = rel(RelationKind::Between, &["a", "b"]);
        assert_eq!(evaluate_relation(&objs, &r, "s", Space::Image).unwrap(), Truth::Holds);
        assert_eq!(evaluate_relation(&objs, &r, "t", Space::Image).unwrap(), Truth::Fails);
    }

    #[test]
    fn center_and_edge() {
        let table = SceneObject {
            id: "t".into(),
            label: "table".into(),
            box2d: Box2D::new(0.0, 0.0, 100.0, 100.0),
            box3d: None,
            depth: None,
        };
        let at = |id: &str, cx: f64, cy: f64| SceneObject {
            id: id.into(),
            label: id.into(),
            box2d: Box2D::new(cx - 2.0, cy - 2.0, cx + 2.0, cy + 2.0),
            box3d: None,
            depth: None,
        };
        let objs = vec![table, at("mid", 52.0, 45.0), at("rim", 95.0, 50.0)];
        let c = rel(RelationKind::Center, &["t"]);
        let e = rel(RelationKind::Edge, &["t"]);
        assert_eq!(evaluate_relation(&objs, &c, "mid", Space::Image).unwrap(), Truth::Holds);
        assert_eq!(evaluate_relation(&objs, &c, "rim", Space::Image).unwrap(), Truth::Fails);
        assert_eq!(evaluate_relation(&objs, &e, "rim", Space::Image).unwrap(), Truth::Holds);
        assert_eq!(evaluate_relation(&objs, &e, "mid", Space::Image).unwrap(), Truth::Fails);
    }

    #[test]
    fn anchor_arity_is_checked() {
        assert!(SpatialRelation::new(RelationKind::Between, vec!["a".into()]).is_err());
        assert!(SpatialRelation::new(RelationKind::Nearest, vec!["a".into()]).is_err());
        assert!(SpatialRelation::new(RelationKind::Left, vec!["a".into(), "b".into()]).is_err());
    }
}
