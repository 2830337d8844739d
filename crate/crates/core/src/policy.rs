//! Node-selection policies and the episode loop that drives them.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::IteratorRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Env, EnvError, EpisodeSpec, Solution};
use crate::geodesics::Geodesics;
use crate::scene_graph::{NodeId, SceneGraph};
use crate::scoring::{score_all, ScorerBackend, ScoringConfig, ScoringError};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("bad agent spec {spec:?}: {msg}")]
    Spec { spec: String, msg: String },
    #[error("agent {0} needs a {1} backend, none was configured")]
    MissingBackend(String, BackendKind),
    #[error("no actionable nodes")]
    NothingActionable,
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Learned,
    Cosine,
    Table,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Learned => "learned",
            BackendKind::Cosine => "cosine",
            BackendKind::Table => "table",
        })
    }
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "learned" => Ok(Self::Learned),
            "cosine" => Ok(Self::Cosine),
            "table" => Ok(Self::Table),
            _ => Err(format!("unknown backend {s:?}")),
        }
    }
}

/// The scorer backends available to a run.
#[derive(Clone, Default)]
pub struct Backends {
    pub learned: Option<Arc<dyn ScorerBackend>>,
    pub cosine: Option<Arc<dyn ScorerBackend>>,
    pub table: Option<Arc<dyn ScorerBackend>>,
}

impl Backends {
    pub fn get(&self, kind: BackendKind) -> Option<&Arc<dyn ScorerBackend>> {
        match kind {
            BackendKind::Learned => self.learned.as_ref(),
            BackendKind::Cosine => self.cosine.as_ref(),
            BackendKind::Table => self.table.as_ref(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Selector {
    Scout { delta: f64 },
    Random,
}

/// A configured agent: its label as written, scoring setup and selection rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub name: String,
    pub config: ScoringConfig,
    pub backend: BackendKind,
    pub selector: Selector,
}

fn parse_switch(v: &str) -> Option<bool> {
    match v {
        "on" | "true" | "1" => Some(true),
        "off" | "false" | "0" => Some(false),
        _ => None,
    }
}

impl Agent {
    /// Parses one agent, e.g. `scout:delta=0,room_influence=off`,
    /// `greedy`, `random`, `similarity:preset=sbert`.
    pub fn parse(spec: &str) -> Result<Self, PolicyError> {
        let err = |msg: String| PolicyError::Spec { spec: spec.to_string(), msg };
        let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let mut params = BTreeMap::new();
        for kv in rest.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| err(format!("expected key=value, got {kv:?}")))?;
            if params.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(err(format!("{k} given twice")));
            }
        }
        let (mut config, mut backend, mut selector) = match kind.trim() {
            "scout" => (ScoringConfig::default(), BackendKind::Learned, None),
            "greedy" => (ScoringConfig { delta: 0.0, ..Default::default() }, BackendKind::Learned, None),
            "random" => (ScoringConfig::default(), BackendKind::Learned, Some(Selector::Random)),
            "similarity" => {
                let preset = params.remove("preset").unwrap_or_else(|| "hash".into());
                (ScoringConfig::preset(&preset).map_err(|e| err(e.to_string()))?, BackendKind::Cosine, None)
            }
            other => return Err(err(format!("unknown agent {other:?}"))),
        };
        if selector == Some(Selector::Random) && !params.is_empty() {
            return Err(err("random takes no parameters".into()));
        }
        for (k, v) in params {
            let bad = || err(format!("bad value {v:?} for {k}"));
            match k.as_str() {
                "delta" => config.delta = v.parse().map_err(|_| bad())?,
                "w" => config.w = v.parse().map_err(|_| bad())?,
                "room_influence" => config.room_influence = parse_switch(&v).ok_or_else(bad)?,
                "default_room_score" => config.default_room_score = v.parse().map_err(|_| bad())?,
                "default_frontier_score" => config.default_frontier_score = v.parse().map_err(|_| bad())?,
                "frontier_radius" => config.frontier_radius = v.parse().map_err(|_| bad())?,
                "backend" => backend = v.parse().map_err(|_| bad())?,
                _ => return Err(err(format!("unknown parameter {k:?}"))),
            }
        }
        config.validate().map_err(|e| err(e.to_string()))?;
        config.backend = backend.to_string();
        let selector = selector.get_or_insert(Selector::Scout { delta: config.delta });
        Ok(Self { name: spec.to_string(), config, backend, selector: *selector })
    }

    /// Splits a comma-separated agent list. A `key=value` token without an
    /// agent name continues the previous agent's parameters.
    pub fn parse_list(list: &str) -> Result<Vec<Self>, PolicyError> {
        let mut specs: Vec<String> = Vec::new();
        for tok in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let continues = match (tok.find('='), tok.find(':')) {
                (Some(eq), Some(colon)) => eq < colon,
                (Some(_), None) => true,
                _ => false,
            };
            match specs.last_mut() {
                Some(prev) if continues => {
                    prev.push(if prev.contains(':') { ',' } else { ':' });
                    prev.push_str(tok);
                }
                _ => specs.push(tok.to_string()),
            }
        }
        specs.iter().map(|s| Self::parse(s)).collect()
    }
}

/// One candidate for selection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub id: NodeId,
    pub utility: f64,
    /// `None` when unreachable.
    pub distance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub chosen: NodeId,
    pub u_max: f64,
    /// The margin set: candidates with utility ≥ U_max − Δ.
    pub margin_set: Vec<NodeId>,
    pub utility: f64,
    pub distance: Option<f64>,
}

/// Margin-set selection: among reachable candidates with `u ≥ U_max − Δ`
/// take the nearest (ties → higher utility → smaller id). When every margin
/// candidate is unreachable, fall back to the highest utility.
pub fn select_scout(candidates: &[Candidate], delta: f64) -> Option<Selection> {
    let u_max = candidates.iter().map(|c| c.utility).fold(f64::NEG_INFINITY, f64::max);
    let margin: Vec<&Candidate> = candidates.iter().filter(|c| c.utility >= u_max - delta).collect();
    let by_id = |a: &&Candidate, b: &&Candidate| a.id.cmp(&b.id);
    let chosen = margin
        .iter()
        .filter(|c| c.distance.is_some())
        .min_by(|a, b| {
            a.distance
                .unwrap()
                .total_cmp(&b.distance.unwrap())
                .then(b.utility.total_cmp(&a.utility))
                .then(by_id(a, b))
        })
        .or_else(|| margin.iter().min_by(|a, b| b.utility.total_cmp(&a.utility).then(by_id(a, b))))?;
    let mut margin_set: Vec<NodeId> = margin.iter().map(|c| c.id).collect();
    margin_set.sort();
    Some(Selection { chosen: chosen.id, u_max, margin_set, utility: chosen.utility, distance: chosen.distance })
}

pub fn select_random(actionable: impl IntoIterator<Item = NodeId>, rng: &mut impl rand::Rng) -> Option<NodeId> {
    actionable.into_iter().choose(rng)
}

/// Per-step decision record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub selection: Selection,
    /// Utility of every actionable node at decision time.
    pub utilities: BTreeMap<NodeId, f64>,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: String,
    pub scene_id: String,
    pub agent: String,
    pub seed: u64,
    pub success: bool,
    pub steps: usize,
    pub traveled: f64,
    pub oracle_steps: Option<usize>,
    pub oracle_traveled: Option<f64>,
    /// Mean wall-clock seconds per decision (scoring + selection). Not
    /// serialized so that record files stay byte-reproducible.
    #[serde(skip)]
    pub inference_seconds: f64,
    pub actions: Vec<NodeId>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl EpisodeRecord {
    /// Success weighted by traveled distance; `p = ℓ = 0` counts as 1.
    pub fn spl(&self) -> f64 {
        if !self.success {
            return 0.0;
        }
        let Some(l) = self.oracle_traveled else { return 0.0 };
        let denom = self.traveled.max(l);
        if denom <= 0.0 {
            1.0
        } else {
            l / denom
        }
    }

    /// Same with step counts.
    pub fn spl_steps(&self) -> f64 {
        if !self.success {
            return 0.0;
        }
        let Some(l) = self.oracle_steps else { return 0.0 };
        let denom = self.steps.max(l);
        if denom == 0 {
            1.0
        } else {
            l as f64 / denom as f64
        }
    }
}

pub struct EpisodeRun {
    pub record: EpisodeRecord,
    pub trace: Vec<TraceRow>,
}

/// Runs `agent` until the episode terminates. Failures inside the loop mark
/// the episode failed with a reason instead of aborting.
pub fn run_episode(
    scene: &SceneGraph,
    geo: &Geodesics,
    spec: &EpisodeSpec,
    agent: &Agent,
    backends: &Backends,
    seed: u64,
    oracle: Option<&Solution>,
) -> EpisodeRun {
    let mut record = EpisodeRecord {
        episode: spec.id.clone(),
        scene_id: spec.scene_id.clone(),
        agent: agent.name.clone(),
        seed,
        success: false,
        steps: 0,
        traveled: 0.0,
        oracle_steps: oracle.map(|o| o.steps),
        oracle_traveled: oracle.map(|o| o.traveled),
        inference_seconds: 0.0,
        actions: Vec::new(),
        error: None,
    };
    let mut trace = Vec::new();
    if let Err(e) = drive(scene, geo, spec, agent, backends, seed, &mut record, &mut trace) {
        record.error = Some(e.to_string());
        record.success = false;
    }
    if !trace.is_empty() {
        record.inference_seconds = trace.iter().map(|t| t.seconds).sum::<f64>() / trace.len() as f64;
    }
    EpisodeRun { record, trace }
}

#[allow(clippy::too_many_arguments)]
fn drive(
    scene: &SceneGraph,
    geo: &Geodesics,
    spec: &EpisodeSpec,
    agent: &Agent,
    backends: &Backends,
    seed: u64,
    record: &mut EpisodeRecord,
    trace: &mut Vec<TraceRow>,
) -> Result<(), PolicyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let backend = match agent.selector {
        Selector::Random => None,
        Selector::Scout { .. } => Some(
            backends.get(agent.backend).ok_or_else(|| PolicyError::MissingBackend(agent.name.clone(), agent.backend))?,
        ),
    };
    let mut env = Env::reset(scene, geo, spec.clone())?;
    record.success = env.success();
    while !env.is_terminal() {
        let actionable = env.actionable();
        if actionable.is_empty() {
            break;
        }
        let obs = env.observation();
        let t0 = Instant::now();
        let (selection, utilities) = match (agent.selector, backend) {
            (Selector::Scout { delta }, Some(backend)) => {
                let scores = score_all(backend.as_ref(), &spec.query, scene, obs, &agent.config)?;
                let mut candidates = Vec::with_capacity(actionable.len());
                for &id in &actionable {
                    let utility = scores.get(&id).map_or(0.0, |s| s.updated);
                    let pos = obs.position_of(scene, id).unwrap_or(obs.agent_position);
                    let distance = geo.distance(obs.agent_position, pos).map_err(EnvError::from)?;
                    candidates.push(Candidate { id, utility, distance });
                }
                let selection = select_scout(&candidates, delta).ok_or(PolicyError::NothingActionable)?;
                (selection, candidates.iter().map(|c| (c.id, c.utility)).collect())
            }
            _ => {
                let chosen = select_random(actionable.iter().copied(), &mut rng).ok_or(PolicyError::NothingActionable)?;
                let margin_set = actionable.iter().copied().collect();
                (Selection { chosen, u_max: 0.0, margin_set, utility: 0.0, distance: None }, BTreeMap::new())
            }
        };
        let seconds = t0.elapsed().as_secs_f64();
        let step = obs.steps_taken;
        let chosen = selection.chosen;
        trace.push(TraceRow { step, selection, utilities, seconds });
        env.step(chosen)?;
        record.actions.push(chosen);
        record.steps = env.observation().steps_taken;
        record.traveled = env.observation().traveled;
        record.success = env.success();
    }
    Ok(())
}
