use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde_json::{Map, Value};

use vlmforge::episode::{discover_episodes, load_episode, Episode};
use vlmforge::sample::{write_samples, Answer, QASample, SampleFamily};
use vlmforge::samplegen::{
    disambiguate_labels, gen_3dbox_qa, gen_grasp_sample, gen_negative_samples, gen_placement_sample,
    gen_planning_sample, gen_pointing_sample, gen_spatial_relation_qa, gen_trajectory_sample, scene_relations,
    trajectory_cot_steps, wrap_cot, BoxQaMode, FixtureProvider, Forged, GenContext, LiveProvider, MemoProvider,
    PlacementFamily, PromptStyle, Provider, QaFormat, SampleGenError, Scene, SceneObject, TemplateTable,
};
use vlmforge::seed::{derive_seed, episode_seed};
use vlmforge::trajectory::{detect_keyframes, segment_episode, skills, KeyframeSet, Segment, TrajectoryError};

use crate::config::{ForgeConfig, ProviderConfig};
use crate::CliError;

type Outcome = Result<Forged, SampleGenError>;

/// Counts of one forge run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ForgeStats {
    pub family: String,
    pub episodes: usize,
    pub emitted: usize,
    pub provider_misses: usize,
    /// Reason tag to count.
    pub filtered: BTreeMap<String, usize>,
    /// Hard errors (unloadable episodes, write failures).
    pub errors: Vec<String>,
}

impl ForgeStats {
    pub fn filtered_total(&self) -> usize {
        self.filtered.values().sum()
    }

    pub fn filtered(&self, reason: &str) -> usize {
        self.filtered.get(reason).copied().unwrap_or(0)
    }

    /// Flat JSON object; filter reasons appear as `filtered_<reason>`.
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("family".into(), self.family.clone().into());
        m.insert("episodes".into(), self.episodes.into());
        m.insert("emitted".into(), self.emitted.into());
        m.insert("provider_misses".into(), self.provider_misses.into());
        m.insert("filtered_total".into(), self.filtered_total().into());
        for (k, v) in &self.filtered {
            m.insert(format!("filtered_{k}"), (*v).into());
        }
        m.insert("errors".into(), self.errors.clone().into());
        Value::Object(m)
    }
}

#[derive(Clone, Debug)]
pub struct ForgeReport {
    pub jsonl: PathBuf,
    pub stats_path: PathBuf,
    pub stats: ForgeStats,
}

impl ForgeReport {
    pub fn ok(&self) -> bool {
        self.stats.errors.is_empty()
    }
}

pub fn build_provider(cfg: &ForgeConfig) -> Result<Box<dyn Provider>, CliError> {
    Ok(match &cfg.provider {
        ProviderConfig::Fixture { transcript } => {
            Box::new(FixtureProvider::open(transcript).map_err(|e| CliError::Config(e.to_string()))?)
        }
        ProviderConfig::Live { endpoint } => Box::new(MemoProvider::new(LiveProvider::new(
            endpoint.clone(),
            cfg.output.clone(),
        ))),
    })
}

fn keyframes(ep: &Episode, cfg: &ForgeConfig) -> Result<KeyframeSet, SampleGenError> {
    Ok(detect_keyframes(&ep.gripper, &cfg.thresholds.keyframes())?)
}

fn segments(ep: &Episode, cfg: &ForgeConfig) -> Result<Vec<Segment>, SampleGenError> {
    let kf = keyframes(ep, cfg)?;
    let sk = ep
        .steps
        .iter()
        .map(|s| {
            skills::lookup(&s.skill)
                .cloned()
                .ok_or_else(|| TrajectoryError::UnknownSkill(s.skill.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(segment_episode(ep, &kf, &sk, &cfg.thresholds.segments())?)
}

/// Scene of the last annotated frame at or before `frame`, else the first.
fn scene_near(ep: &Episode, frame: i64) -> Result<Scene, SampleGenError> {
    let frames = ep.annotated_frames();
    let f = frames
        .iter()
        .rev()
        .find(|&&f| f <= frame)
        .or(frames.first())
        .copied()
        .ok_or(SampleGenError::EmptyScene)?;
    Scene::from_episode(ep, f)
}

fn goal_object<'a>(ep: &Episode, index: usize, scene: &'a Scene) -> Option<&'a SceneObject> {
    let step = ep.steps.get(index)?;
    let label = step.target.as_ref().or(step.object.as_ref())?;
    let mut hits = scene.objects.iter().filter(|o| &o.label == label);
    let first = hits.next()?;
    hits.next().is_none().then_some(first)
}

fn cot_sample(
    ep: &Episode,
    segs: &[Segment],
    i: usize,
    ctx: &GenContext,
    cfg: &ForgeConfig,
    seed: u64,
) -> Outcome {
    let base = gen_trajectory_sample(ep, segs, i, ctx, &cfg.thresholds.traj(), seed)?;
    let Answer::Trajectory(traj) = &base.sample.answer else {
        unreachable!("trajectory generator returns trajectories")
    };
    let scene = scene_near(ep, segs[i].start_frame)?;
    let steps = trajectory_cot_steps(&scene.objects, &ep.task_text, goal_object(ep, i, &scene), traj);
    Ok(Forged::bare(wrap_cot(&base.sample, &steps)?))
}

fn per_frame(ep: &Episode, mut f: impl FnMut(Scene, &mut Vec<Outcome>)) -> Vec<Outcome> {
    let mut out = Vec::new();
    for frame in ep.annotated_frames() {
        match Scene::from_episode(ep, frame) {
            Ok(scene) => f(scene, &mut out),
            Err(e) => out.push(Err(e)),
        }
    }
    out
}

/// Every sample attempt of `family` on one episode, in a fixed order.
pub fn forge_episode(ep: &Episode, family: SampleFamily, cfg: &ForgeConfig, ctx: &GenContext) -> Vec<Outcome> {
    let seed = episode_seed(cfg.seed, &ep.id);
    let sub = |label: String| derive_seed(seed, &label);
    let traj = cfg.thresholds.traj();
    let segs = || segments(ep, cfg);
    match family {
        SampleFamily::Points => per_frame(ep, |scene, out| {
            let refs = match disambiguate_labels(&scene.objects) {
                Ok(r) => r,
                Err(e) => return out.push(Err(e)),
            };
            for (id, r) in &refs {
                for style in [PromptStyle::Direct, PromptStyle::Enhanced] {
                    let s = sub(format!("points/{}/{id}/{style:?}", scene.frame));
                    out.push(gen_pointing_sample(&scene, r, ctx, style, s));
                }
            }
        }),
        SampleFamily::Placement => match keyframes(ep, cfg) {
            Ok(kf) => [
                PlacementFamily::BetweenObjects,
                PlacementFamily::ObjectObserver,
                PlacementFamily::ObjectTableSide,
            ]
            .into_iter()
            .map(|p| gen_placement_sample(ep, &kf, ctx, Some(p), sub(format!("placement/{}", p.style()))))
            .collect(),
            Err(e) => vec![Err(e)],
        },
        SampleFamily::Grasp => vec![keyframes(ep, cfg).and_then(|kf| gen_grasp_sample(ep, &kf, ctx, sub("grasp".into())))],
        SampleFamily::Traj => match segs() {
            Ok(sg) => (0..sg.len())
                .map(|i| gen_trajectory_sample(ep, &sg, i, ctx, &traj, sub(format!("traj/{i}"))))
                .collect(),
            Err(e) => vec![Err(e)],
        },
        SampleFamily::TrajNeg => match segs() {
            Ok(sg) => {
                let mut out = Vec::new();
                for i in 0..sg.len() {
                    match gen_negative_samples(ep, &sg, i, ctx, &traj, sub(format!("traj-neg/{i}"))) {
                        Ok(v) => out.extend(v.into_iter().map(|(_, r)| r)),
                        Err(e) => out.push(Err(e)),
                    }
                }
                out
            }
            Err(e) => vec![Err(e)],
        },
        SampleFamily::Cot => match segs() {
            Ok(sg) => (0..sg.len())
                .map(|i| cot_sample(ep, &sg, i, ctx, cfg, sub(format!("cot/{i}"))))
                .collect(),
            Err(e) => vec![Err(e)],
        },
        SampleFamily::Plan => match segs() {
            Ok(sg) => (1..sg.len().max(2))
                .map(|after| gen_planning_sample(ep, &sg, after, ctx, &traj, sub(format!("plan/{after}"))))
                .collect(),
            Err(e) => vec![Err(e)],
        },
        SampleFamily::Box3d => per_frame(ep, |scene, out| {
            for mode in [BoxQaMode::Direct, BoxQaMode::Refer] {
                let s = sub(format!("3dbox/{}/{mode:?}", scene.frame));
                out.push(gen_3dbox_qa(&scene, mode, ctx, s));
            }
        }),
        SampleFamily::Relation => per_frame(ep, |scene, out| {
            for (i, rel) in scene_relations(&scene).iter().enumerate() {
                let s = sub(format!("relation/{}/{i}", scene.frame));
                let format = QaFormat::ALL[(s % QaFormat::ALL.len() as u64) as usize];
                out.push(gen_spatial_relation_qa(&scene, rel, format, ctx, s));
            }
        }),
    }
}

fn load_all(root: &Path) -> Result<Vec<Result<Episode, String>>, CliError> {
    let dirs = discover_episodes(root).map_err(|e| CliError::Data(format!("{}: {e}", root.display())))?;
    if dirs.is_empty() {
        return Err(CliError::Data(format!("no episodes under {}", root.display())));
    }
    Ok(dirs
        .par_iter()
        .map(|d| load_episode(d).map_err(|e| format!("{}: {e}", d.display())))
        .collect())
}

/// Forges `family` over every episode under `episodes` and writes
/// `<output>/<family>.jsonl`, `<output>/<family>.stats.json` and the answer
/// masks under `<output>/masks/<family>/`.
pub fn run_forge(cfg: &ForgeConfig, family: SampleFamily, episodes: &Path) -> Result<ForgeReport, CliError> {
    cfg.check()?;
    let provider = build_provider(cfg)?;
    let mut ctx = GenContext::new(provider.as_ref(), TemplateTable::builtin());
    ctx.paraphrase = cfg.paraphrase;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;

    let loaded = pool.install(|| load_all(episodes))?;
    let results: Vec<Result<Vec<Outcome>, String>> = pool.install(|| {
        loaded
            .par_iter()
            .map(|ep| ep.as_ref().map(|ep| forge_episode(ep, family, cfg, &ctx)).map_err(Clone::clone))
            .collect()
    });

    let mut stats = ForgeStats {
        family: family.name().into(),
        episodes: loaded.len(),
        ..Default::default()
    };
    let mut samples = Vec::new();
    let mut counters: BTreeMap<(SampleFamily, String), usize> = BTreeMap::new();
    for r in results {
        let outcomes = match r {
            Ok(o) => o,
            Err(e) => {
                warn!("{e}");
                stats.errors.push(e);
                continue;
            }
        };
        for o in outcomes {
            match o {
                Ok(f) => match store(f, &cfg.output, &mut counters) {
                    Ok(s) => samples.push(s),
                    Err(e) => stats.errors.push(e),
                },
                Err(e) if e.is_provider_miss() => stats.provider_misses += 1,
                Err(e) => *stats.filtered.entry(e.reason()).or_default() += 1,
            }
        }
    }
    stats.emitted = samples.len();

    let jsonl = cfg.output.join(format!("{}.jsonl", family.name()));
    write_samples(&samples, &jsonl).map_err(|e| CliError::Data(e.to_string()))?;
    let stats_path = cfg.output.join(format!("{}.stats.json", family.name()));
    let text = serde_json::to_string_pretty(&stats.to_json()).expect("stats serialize");
    fs::write(&stats_path, text + "\n").map_err(|e| CliError::Data(format!("{}: {e}", stats_path.display())))?;
    info!(
        "{}: {} emitted, {} filtered, {} provider misses",
        family,
        stats.emitted,
        stats.filtered_total(),
        stats.provider_misses
    );
    Ok(ForgeReport {
        jsonl,
        stats_path,
        stats,
    })
}

/// Assigns the final id and writes the answer mask, if any.
fn store(f: Forged, out: &Path, counters: &mut BTreeMap<(SampleFamily, String), usize>) -> Result<QASample, String> {
    let mut s = f.sample;
    let fam = s.tags.family;
    let n = counters.entry((fam, s.tags.episode.clone())).or_default();
    *n += 1;
    s.id = format!("{}/{}/{:05}", fam.name(), s.tags.episode, n);
    if let Some(mask) = f.mask {
        let rel = format!("masks/{}/{}/{:05}.png", fam.name(), s.tags.episode, n);
        let path = out.join(&rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        }
        mask.save_png(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        s.context.mask = Some(rel);
    }
    Ok(s)
}
