use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use vlmforge::samplegen::{TemplateTable, TrajParams};
use vlmforge::trajectory::{KeyframeParams, SegmentParams, MAX_RESAMPLED, MIN_RESAMPLED};

use crate::CliError;

/// Trajectory and keyframe thresholds. Missing fields take library defaults.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub open_thr: f64,
    pub closed_thr: f64,
    pub min_dwell: usize,
    pub lift_px: f64,
    pub min_len_px: f64,
    pub max_ratio: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub magnitude_px: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        let k = KeyframeParams::default();
        let s = SegmentParams::default();
        let t = TrajParams::default();
        Self {
            open_thr: k.open_thr,
            closed_thr: k.closed_thr,
            min_dwell: k.min_dwell,
            lift_px: s.lift_px,
            min_len_px: t.min_len_px,
            max_ratio: t.max_ratio,
            n_min: t.n_min,
            n_max: t.n_max,
            magnitude_px: t.magnitude_px,
        }
    }
}

impl Thresholds {
    pub fn keyframes(&self) -> KeyframeParams {
        KeyframeParams {
            open_thr: self.open_thr,
            closed_thr: self.closed_thr,
            min_dwell: self.min_dwell,
        }
    }

    pub fn segments(&self) -> SegmentParams {
        SegmentParams {
            lift_px: self.lift_px,
            ..SegmentParams::default()
        }
    }

    pub fn traj(&self) -> TrajParams {
        TrajParams {
            min_len_px: self.min_len_px,
            max_ratio: self.max_ratio,
            n_min: self.n_min,
            n_max: self.n_max,
            magnitude_px: self.magnitude_px,
        }
    }

    fn check(&self) -> Result<(), String> {
        self.keyframes().check().map_err(|e| e.to_string())?;
        if !(self.max_ratio > 1.0) {
            return Err(format!("max_ratio must exceed 1, got {}", self.max_ratio));
        }
        if !(self.min_len_px > 0.0) {
            return Err(format!("min_len_px must be positive, got {}", self.min_len_px));
        }
        if !(self.lift_px >= 0.0) {
            return Err(format!("lift_px must be non-negative, got {}", self.lift_px));
        }
        if !(self.magnitude_px > 0.0) {
            return Err(format!("magnitude_px must be positive, got {}", self.magnitude_px));
        }
        if self.n_min < MIN_RESAMPLED || self.n_max > MAX_RESAMPLED || self.n_min > self.n_max {
            return Err(format!(
                "n_min..n_max must lie within {MIN_RESAMPLED}..{MAX_RESAMPLED}, got {}..{}",
                self.n_min, self.n_max
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderConfig {
    Fixture { transcript: PathBuf },
    Live { endpoint: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForgeConfig {
    pub seed: u64,
    #[serde(default)]
    pub thresholds: Thresholds,
    pub provider: ProviderConfig,
    #[serde(default = "builtin_templates")]
    pub templates_version: u32,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Worker threads; 0 picks the core count.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub paraphrase: bool,
}

fn builtin_templates() -> u32 {
    TemplateTable::builtin().version
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Command-line values that override config fields of the same name.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub transcript: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub workers: Option<usize>,
    pub paraphrase: bool,
    pub min_len_px: Option<f64>,
    pub max_ratio: Option<f64>,
    pub magnitude_px: Option<f64>,
}

fn set(obj: &mut Map<String, Value>, key: &str, v: Value) {
    obj.insert(key.to_string(), v);
}

impl ForgeConfig {
    /// Merges `flags` over the JSON file at `path` (if any) over defaults,
    /// then validates.
    pub fn resolve(path: Option<&Path>, flags: &Overrides) -> Result<Self, CliError> {
        let mut doc = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str::<Value>(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Value::Object(Map::new()),
        };
        let obj = doc
            .as_object_mut()
            .ok_or_else(|| CliError::Config("config must be a JSON object".into()))?;
        if let Some(s) = flags.seed {
            set(obj, "seed", s.into());
        }
        if let Some(o) = &flags.output {
            set(obj, "output", o.display().to_string().into());
        }
        if let Some(w) = flags.workers {
            set(obj, "workers", w.into());
        }
        if flags.paraphrase {
            set(obj, "paraphrase", true.into());
        }
        match (&flags.transcript, &flags.endpoint) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("give either --transcript or --endpoint, not both".into()));
            }
            (Some(t), None) => set(obj, "provider", serde_json::json!({"fixture": {"transcript": t}})),
            (None, Some(e)) => set(obj, "provider", serde_json::json!({"live": {"endpoint": e}})),
            (None, None) => {}
        }
        let th = obj
            .entry("thresholds")
            .or_insert_with(|| Value::Object(Map::new()))
            .as_object_mut()
            .ok_or_else(|| CliError::Config("thresholds must be an object".into()))?;
        for (k, v) in [
            ("min_len_px", flags.min_len_px),
            ("max_ratio", flags.max_ratio),
            ("magnitude_px", flags.magnitude_px),
        ] {
            if let Some(v) = v {
                set(th, k, v.into());
            }
        }
        let cfg: ForgeConfig = serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), CliError> {
        self.thresholds.check().map_err(CliError::Config)?;
        let have = builtin_templates();
        if self.templates_version != have {
            return Err(CliError::Config(format!(
                "template table version {} is not available (built-in is {have})",
                self.templates_version
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_flags() -> Overrides {
        Overrides {
            seed: Some(7),
            transcript: Some("t.json".into()),
            ..Default::default()
        }
    }

    #[test]
    fn flags_override_file_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(
            &p,
            r#"{"seed": 1, "provider": {"live": {"endpoint": "http://x"}}, "thresholds": {"max_ratio": 3.0, "min_len_px": 5}}"#,
        )
        .unwrap();
        let c = ForgeConfig::resolve(Some(&p), &fixture_flags()).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.provider, ProviderConfig::Fixture { transcript: "t.json".into() });
        assert_eq!(c.thresholds.max_ratio, 3.0);
        assert_eq!(c.thresholds.min_len_px, 5.0);
        assert_eq!(c.thresholds.n_min, Thresholds::default().n_min);
        assert_eq!(c.output, PathBuf::from("out"));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad_ratio = Overrides {
            max_ratio: Some(1.0),
            ..fixture_flags()
        };
        assert!(matches!(ForgeConfig::resolve(None, &bad_ratio), Err(CliError::Config(_))));
        let no_seed = Overrides {
            seed: None,
            ..fixture_flags()
        };
        assert!(matches!(ForgeConfig::resolve(None, &no_seed), Err(CliError::Config(_))));
        let no_provider = Overrides {
            transcript: None,
            ..fixture_flags()
        };
        assert!(matches!(ForgeConfig::resolve(None, &no_provider), Err(CliError::Config(_))));
        let both = Overrides {
            endpoint: Some("http://x".into()),
            ..fixture_flags()
        };
        assert!(matches!(ForgeConfig::resolve(None, &both), Err(CliError::Config(_))));
    }

    #[test]
    fn two_backends_in_file_are_rejected() {
        let v = serde_json::json!({
            "seed": 1,
            "provider": {"fixture": {"transcript": "a"}, "live": {"endpoint": "b"}}
        });
        assert!(serde_json::from_value::<ForgeConfig>(v).is_err());
    }
}
