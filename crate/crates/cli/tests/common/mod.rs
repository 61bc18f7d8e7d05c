#![allow(dead_code)]

use std::path::{Path, PathBuf};

use vlmforge::sample::SampleFamily;
use vlmforge_cli::{run_forge, ForgeConfig, ForgeReport, ProviderConfig, Thresholds};

pub struct Fixtures {
    pub dir: tempfile::TempDir,
}

impl Fixtures {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        vlmforge::synth::write_fixture_set(dir.path()).unwrap();
        Self { dir }
    }

    pub fn root(&self) -> &Path {
        self.dir.path()
    }

    pub fn config(&self, seed: u64, output: PathBuf, workers: usize) -> ForgeConfig {
        ForgeConfig {
            seed,
            thresholds: Thresholds::default(),
            provider: ProviderConfig::Fixture {
                transcript: vlmforge::synth::transcript_path(self.root()),
            },
            templates_version: vlmforge::samplegen::TemplateTable::builtin().version,
            output,
            workers,
            paraphrase: false,
        }
    }

    pub fn forge_all(&self, cfg: &ForgeConfig) -> Vec<(SampleFamily, ForgeReport)> {
        SampleFamily::FORGE
            .iter()
            .map(|&f| (f, run_forge(cfg, f, self.root()).unwrap()))
            .collect()
    }
}
