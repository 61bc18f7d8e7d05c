//! The atomic-skill vocabulary.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

const TABLE_JSON: &str = include_str!("../../data/skills_v1.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryRule {
    /// Ends once the gripper has closed and moved a lift distance.
    GraspThenLift,
    /// Ends once the gripper has opened and moved away.
    ReleaseThenRetreat,
    /// Segmented by keyframes only.
    Unspecified,
}

impl BoundaryRule {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryRule::GraspThenLift => "grasp-then-lift",
            BoundaryRule::ReleaseThenRetreat => "release-then-retreat",
            BoundaryRule::Unspecified => "unspecified",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicSkill {
    pub name: String,
    pub boundary_rule: BoundaryRule,
    pub description: String,
}

#[derive(Debug, Deserialize)]
pub struct SkillTable {
    pub version: u32,
    pub skills: Vec<AtomicSkill>,
}

pub fn table() -> &'static SkillTable {
    static TABLE: OnceLock<SkillTable> = OnceLock::new();
    TABLE.get_or_init(|| serde_json::from_str(TABLE_JSON).expect("embedded skill table parses"))
}

pub fn lookup(name: &str) -> Option<&'static AtomicSkill> {
    table().skills.iter().find(|s| s.name == name)
}

pub fn names() -> impl Iterator<Item = &'static str> {
    table().skills.iter().map(|s| s.name.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn thirty_unique_skills() {
        let t = table();
        assert_eq!(t.version, 1);
        assert_eq!(t.skills.len(), 30);
        let unique: HashSet<_> = names().collect();
        assert_eq!(unique.len(), 30);
    }

    #[test]
    fn pick_and_place_have_rules() {
        assert_eq!(lookup("pick").unwrap().boundary_rule, BoundaryRule::GraspThenLift);
        assert_eq!(lookup("place").unwrap().boundary_rule, BoundaryRule::ReleaseThenRetreat);
        assert_eq!(lookup("wipe").unwrap().boundary_rule, BoundaryRule::Unspecified);
        assert!(lookup("teleport").is_none());
    }
}
