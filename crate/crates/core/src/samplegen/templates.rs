use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SampleGenError;
use crate::seed::SampleRng;

const TABLE_JSON: &str = include_str!("../../data/templates_v1.json");

/// Versioned prompt templates, keyed by family and style.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateTable {
    pub version: u32,
    pub families: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    /// Relation kind to its English phrase.
    pub qualifiers: BTreeMap<String, String>,
    /// Labels used as wrong options when a scene has too few objects.
    pub distractor_labels: Vec<String>,
}

impl TemplateTable {
    /// The built-in table.
    pub fn builtin() -> &'static TemplateTable {
        static TABLE: OnceLock<TemplateTable> = OnceLock::new();
        TABLE.get_or_init(|| serde_json::from_str(TABLE_JSON).expect("embedded template table parses"))
    }

    pub fn templates(&self, family: &str, style: &str) -> Result<&[String], SampleGenError> {
        self.families
            .get(family)
            .and_then(|s| s.get(style))
            .filter(|t| !t.is_empty())
            .map(Vec::as_slice)
            .ok_or_else(|| SampleGenError::UnknownTemplate {
                family: family.into(),
                style: style.into(),
            })
    }

    pub fn qualifier<'a>(&'a self, kind: &'a str) -> &'a str {
        self.qualifiers.get(kind).map(String::as_str).unwrap_or(kind)
    }

    /// Picks one template of `family/style` and substitutes `{name}` slots.
    pub fn render(
        &self,
        family: &str,
        style: &str,
        vars: &[(&str, &str)],
        rng: &mut SampleRng,
    ) -> Result<String, SampleGenError> {
        let all = self.templates(family, style)?;
        let t = &all[rng.gen_range(0..all.len())];
        let mut out = t.clone();
        for (k, v) in vars {
            out = out.replace(&format!("{{{k}}}"), v);
        }
        Ok(out)
    }
}
