//! Benchmark suites: the episode × agent × seed cross product, aggregation
//! and result files.

pub mod metrics;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::env::{shortest_solution, EpisodeSpec, Solution, DEFAULT_SEARCH_CAP};
use crate::geodesics::{Geodesics, DEFAULT_DILATION};
use crate::num::mean_std;
use crate::policy::{run_episode, Agent, Backends, EpisodeRecord};
use crate::scene_graph::{SceneError, SceneGraph};
use crate::seeds;

pub use metrics::{spl, spl_steps, sr_curve, success_rate};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no episode records")]
    NoRecords,
    #[error("episode {episode} refers to unknown scene {scene}")]
    UnknownScene { episode: String, scene: String },
    #[error("duplicate scene id {0}")]
    DuplicateScene(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A loaded scene with its geodesic cache.
pub struct SceneEntry {
    pub graph: SceneGraph,
    pub geodesics: Geodesics,
}

impl SceneEntry {
    pub fn new(graph: SceneGraph, dilation: f64) -> Self {
        let geodesics = Geodesics::for_scene(&graph, dilation);
        Self { graph, geodesics }
    }
}

pub type SceneSet = BTreeMap<String, Arc<SceneEntry>>;

pub fn scene_set(scenes: impl IntoIterator<Item = SceneGraph>, dilation: f64) -> Result<SceneSet, HarnessError> {
    let mut out = SceneSet::new();
    for g in scenes {
        let id = g.scene_id().to_string();
        if out.insert(id.clone(), Arc::new(SceneEntry::new(g, dilation))).is_some() {
            return Err(HarnessError::DuplicateScene(id));
        }
    }
    Ok(out)
}

/// Loads every `*.json` scene in `dir` (with its occupancy grid, if any).
pub fn load_scene_dir(dir: impl AsRef<Path>, dilation: f64) -> Result<SceneSet, HarnessError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let scenes = paths.iter().map(SceneGraph::load).collect::<Result<Vec<_>, _>>()?;
    scene_set(scenes, dilation)
}

#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub global_seed: u64,
    /// Seed indices; each one re-draws spawns and agent randomness.
    pub seeds: Vec<u64>,
    pub search_cap: usize,
    pub dilation: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { global_seed: 0, seeds: (0..5).collect(), search_cap: DEFAULT_SEARCH_CAP, dilation: DEFAULT_DILATION }
    }
}

/// Episode as run under seed `seed`: the spawn is re-drawn per seed.
pub fn seeded_spec(spec: &EpisodeSpec, seed: u64) -> EpisodeSpec {
    EpisodeSpec { spawn_seed: seeds::mix(spec.spawn_seed, seed), ..spec.clone() }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgentSummary {
    pub agent: String,
    pub episodes: usize,
    pub errors: usize,
    pub sr_mean: f64,
    pub sr_std: f64,
    pub spl_mean: f64,
    pub spl_std: f64,
    pub spl_steps_mean: f64,
    pub spl_steps_std: f64,
    pub steps_mean: f64,
    pub steps_std: f64,
    pub inference_s_mean: f64,
    pub inference_s_std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub agents: Vec<AgentSummary>,
    /// Per agent, success fraction within ≤ k steps for k = 0..=n_max.
    pub curves: Vec<(String, Vec<f64>)>,
    pub n_max: usize,
}

impl SuiteReport {
    pub fn agent(&self, name: &str) -> Option<&AgentSummary> {
        self.agents.iter().find(|a| a.agent == name)
    }
}

pub struct SuiteResult {
    /// Ordered by (episode, agent, seed) in input order.
    pub records: Vec<EpisodeRecord>,
    pub report: SuiteReport,
}

/// Runs every (episode, agent, seed) combination in parallel. Per-episode
/// failures are recorded; the output order never depends on scheduling.
pub fn run_suite(
    scenes: &SceneSet,
    episodes: &[EpisodeSpec],
    agents: &[Agent],
    backends: &Backends,
    cfg: &SuiteConfig,
) -> Result<SuiteResult, HarnessError> {
    for e in episodes {
        if !scenes.contains_key(&e.scene_id) {
            return Err(HarnessError::UnknownScene { episode: e.id.clone(), scene: e.scene_id.clone() });
        }
    }
    let pairs: Vec<(usize, u64)> = (0..episodes.len()).flat_map(|e| cfg.seeds.iter().map(move |&s| (e, s))).collect();
    let oracles: BTreeMap<(usize, u64), Option<Solution>> = pairs
        .par_iter()
        .map(|&(e, s)| {
            let entry = &scenes[&episodes[e].scene_id];
            let spec = seeded_spec(&episodes[e], s);
            ((e, s), shortest_solution(&entry.graph, &entry.geodesics, &spec, cfg.search_cap).ok())
        })
        .collect();

    let jobs: Vec<(usize, usize, u64)> = (0..episodes.len())
        .flat_map(|e| (0..agents.len()).flat_map(move |a| cfg.seeds.iter().map(move |&s| (e, a, s))))
        .collect();
    let records: Vec<EpisodeRecord> = jobs
        .par_iter()
        .map(|&(e, a, s)| {
            let entry = &scenes[&episodes[e].scene_id];
            let spec = seeded_spec(&episodes[e], s);
            let rng_seed = seeds::mix(seeds::mix(cfg.global_seed, s), e as u64);
            let oracle = oracles[&(e, s)].as_ref();
            let mut rec = run_episode(&entry.graph, &entry.geodesics, &spec, &agents[a], backends, rng_seed, oracle).record;
            rec.seed = s;
            rec
        })
        .collect();
    let report = aggregate(&records, agents, episodes, &cfg.seeds)?;
    Ok(SuiteResult { records, report })
}

/// Per-agent mean ± population std over seeds, plus pooled SR curves.
pub fn aggregate(records: &[EpisodeRecord], agents: &[Agent], episodes: &[EpisodeSpec], seeds: &[u64]) -> Result<SuiteReport, HarnessError> {
    let n_max = episodes.iter().map(|e| e.n_max).max().unwrap_or(0);
    let mut summaries = Vec::new();
    let mut curves = Vec::new();
    for agent in agents {
        let mine: Vec<EpisodeRecord> = records.iter().filter(|r| r.agent == agent.name).cloned().collect();
        if mine.is_empty() {
            continue;
        }
        let mut per_seed: [Vec<f64>; 5] = Default::default();
        for &s in seeds {
            let rs: Vec<EpisodeRecord> = mine.iter().filter(|r| r.seed == s).cloned().collect();
            if rs.is_empty() {
                continue;
            }
            per_seed[0].push(success_rate(&rs)?);
            per_seed[1].push(spl(&rs)?);
            per_seed[2].push(spl_steps(&rs)?);
            per_seed[3].push(rs.iter().map(|r| r.steps as f64).sum::<f64>() / rs.len() as f64);
            per_seed[4].push(rs.iter().map(|r| r.inference_seconds).sum::<f64>() / rs.len() as f64);
        }
        let [sr, sp, sps, st, inf] = per_seed.map(|v| mean_std(&v));
        summaries.push(AgentSummary {
            agent: agent.name.clone(),
            episodes: mine.len(),
            errors: mine.iter().filter(|r| r.error.is_some()).count(),
            sr_mean: sr.0,
            sr_std: sr.1,
            spl_mean: sp.0,
            spl_std: sp.1,
            spl_steps_mean: sps.0,
            spl_steps_std: sps.1,
            steps_mean: st.0,
            steps_std: st.1,
            inference_s_mean: inf.0,
            inference_s_std: inf.1,
        });
        curves.push((agent.name.clone(), sr_curve(&mine, n_max)?));
    }
    Ok(SuiteReport { agents: summaries, curves, n_max })
}

/// One JSON object per line; contains no timing, so identical runs produce
/// identical bytes.
pub fn write_records_jsonl(records: &[EpisodeRecord], mut w: impl Write) -> Result<(), HarnessError> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_summary_csv(report: &SuiteReport, w: impl Write) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    for a in &report.agents {
        out.serialize(a)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_sr_curve_csv(report: &SuiteReport, w: impl Write) -> Result<(), HarnessError> {
    #[derive(Serialize)]
    struct Row<'a> {
        step: usize,
        agent: &'a str,
        fraction: f64,
    }
    let mut out = csv::Writer::from_writer(w);
    for (agent, curve) in &report.curves {
        for (step, &fraction) in curve.iter().enumerate() {
            out.serialize(Row { step, agent, fraction })?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes `records.jsonl`, `summary.csv` and `sr_curve.csv` into `dir`.
pub fn write_outputs(result: &SuiteResult, dir: impl AsRef<Path>) -> Result<(), HarnessError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_records_jsonl(&result.records, std::io::BufWriter::new(std::fs::File::create(dir.join("records.jsonl"))?))?;
    write_summary_csv(&result.report, std::fs::File::create(dir.join("summary.csv"))?)?;
    write_sr_curve_csv(&result.report, std::fs::File::create(dir.join("sr_curve.csv"))?)?;
    Ok(())
}
