//! Utility of observed nodes for a query: room containment, object
//! co-occurrence, room-influenced object scores and frontier aggregation.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine, Embedding, EmbeddingError, EmbeddingProvider};
use crate::env::Observation;
use crate::forge::PlantedWorld;
use crate::label::normalize;
use crate::num::Real;
use crate::relational::{Mlp, MlpError, Relation};
use crate::scene_graph::{NodeId, NodeKind, SceneGraph};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("config: {0}")]
    Config(String),
    #[error("no table entry for ({0}, {1})")]
    MissingEntry(String, String),
    #[error("node {node}: {source}")]
    Node { node: NodeId, source: Box<ScoringError> },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Model(#[from] MlpError),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    /// Room influence weight in the updated object score.
    pub w: f64,
    pub default_room_score: f64,
    pub default_frontier_score: f64,
    pub frontier_radius: f64,
    pub room_influence: bool,
    /// Utility margin used by the selection rule.
    pub delta: f64,
    pub aggregation: Aggregation,
    /// learned | cosine | table
    pub backend: String,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            w: 0.3,
            default_room_score: 0.7,
            default_frontier_score: 0.6,
            frontier_radius: 2.0,
            room_influence: true,
            delta: 0.1,
            aggregation: Aggregation::Max,
            backend: "learned".into(),
        }
    }
}

impl ScoringConfig {
    pub const PRESETS: [&'static str; 4] = ["default", "sbert", "clip", "hash"];

    /// Named parameter sets: the agent defaults and per-embedder retunings
    /// for similarity agents.
    pub fn preset(name: &str) -> Result<Self, ScoringError> {
        let base = Self::default();
        Ok(match name {
            "default" | "scout" => base,
            "sbert" => Self { default_room_score: 0.3, default_frontier_score: 0.25, delta: 0.05, backend: "cosine".into(), ..base },
            "clip" => Self { default_room_score: 0.7, default_frontier_score: 0.4, delta: 0.05, backend: "cosine".into(), ..base },
            // hash embeddings put unrelated labels near cos = 0, i.e. 0.5 after mapping
            "hash" => Self { default_room_score: 0.5, default_frontier_score: 0.45, delta: 0.05, backend: "cosine".into(), ..base },
            _ => return Err(ScoringError::Config(format!("unknown preset {name:?}; expected one of {:?}", Self::PRESETS))),
        })
    }

    pub fn validate(&self) -> Result<(), ScoringError> {
        let unit = [("w", self.w), ("default_room_score", self.default_room_score), ("default_frontier_score", self.default_frontier_score)];
        for (k, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(ScoringError::Config(format!("{k} = {v} is outside [0, 1]")));
            }
        }
        if !(self.frontier_radius >= 0.0 && self.frontier_radius.is_finite()) {
            return Err(ScoringError::Config(format!("frontier_radius = {} must be a finite value ≥ 0", self.frontier_radius)));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(ScoringError::Config(format!("delta = {} must be a finite value ≥ 0", self.delta)));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self, ScoringError> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScoringError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Object score after room influence (or unchanged when disabled).
    pub fn updated(&self, u_room: f64, u_obj: f64) -> f64 {
        if self.room_influence {
            update_object_score(u_room, u_obj, self.w)
        } else {
            u_obj
        }
    }
}

/// `u_room · (w + (1 − w) · u_obj)`.
pub fn update_object_score<T: Real>(u_room: T, u_obj: T, w: T) -> T {
    u_room * (w + (T::one() - w) * u_obj)
}

pub trait ScorerBackend: Send + Sync {
    fn name(&self) -> &str;
    /// Probability that a room of this category contains the query.
    fn score_room(&self, room: &str, query: &str) -> Result<f64, ScoringError>;
    /// Probability that the object co-occurs with the query.
    fn score_object(&self, object: &str, query: &str) -> Result<f64, ScoringError>;
}

/// Read-mostly memo of embeddings keyed by normalized text.
struct EmbeddingCache {
    provider: Arc<dyn EmbeddingProvider>,
    cache: RwLock<HashMap<String, Arc<Embedding>>>,
}

impl EmbeddingCache {
    fn new(provider: Arc<dyn EmbeddingProvider>) -> Self {
        Self { provider, cache: RwLock::new(HashMap::new()) }
    }

    fn get(&self, text: &str) -> Result<Arc<Embedding>, EmbeddingError> {
        let key = normalize(text);
        if let Some(e) = self.cache.read().get(&key) {
            return Ok(e.clone());
        }
        let e = Arc::new(self.provider.embed(&key)?);
        self.cache.write().insert(key, e.clone());
        Ok(e)
    }
}

/// Trained relational MLPs over embeddings.
pub struct LearnedBackend {
    embeddings: EmbeddingCache,
    contain: Mlp<f64>,
    cooccur: Mlp<f64>,
}

impl LearnedBackend {
    pub fn new(provider: Arc<dyn EmbeddingProvider>, contain: Mlp<f64>, cooccur: Mlp<f64>) -> Result<Self, ScoringError> {
        contain.check_compatible(Relation::Contain, provider.as_ref())?;
        cooccur.check_compatible(Relation::CoOccur, provider.as_ref())?;
        Ok(Self { embeddings: EmbeddingCache::new(provider), contain, cooccur })
    }

    fn pair(&self, model: &Mlp<f64>, a: &str, q: &str) -> Result<f64, ScoringError> {
        let (ea, eq) = (self.embeddings.get(a)?, self.embeddings.get(q)?);
        let mut x = Vec::with_capacity(ea.dim() * 2);
        x.extend_from_slice(ea.as_slice());
        x.extend_from_slice(eq.as_slice());
        Ok(model.forward(&x)?)
    }
}

impl ScorerBackend for LearnedBackend {
    fn name(&self) -> &str {
        "learned"
    }

    fn score_room(&self, room: &str, query: &str) -> Result<f64, ScoringError> {
        self.pair(&self.contain, room, query)
    }

    fn score_object(&self, object: &str, query: &str) -> Result<f64, ScoringError> {
        self.pair(&self.cooccur, object, query)
    }
}

/// `(1 + cos(E(a), E(q))) / 2` for both rooms and objects.
pub struct CosineBackend {
    embeddings: EmbeddingCache,
}

impl CosineBackend {
    pub fn new(provider: Arc<dyn EmbeddingProvider>) -> Self {
        Self { embeddings: EmbeddingCache::new(provider) }
    }

    fn sim(&self, a: &str, q: &str) -> Result<f64, ScoringError> {
        let c = cosine(&*self.embeddings.get(a)?, &*self.embeddings.get(q)?)?;
        Ok(((1.0 + c) / 2.0).clamp(0.0, 1.0))
    }
}

impl ScorerBackend for CosineBackend {
    fn name(&self) -> &str {
        "cosine"
    }

    fn score_room(&self, room: &str, query: &str) -> Result<f64, ScoringError> {
        self.sim(room, query)
    }

    fn score_object(&self, object: &str, query: &str) -> Result<f64, ScoringError> {
        self.sim(object, query)
    }
}

/// Exact lookups in planted tables; an object always co-occurs with itself.
#[derive(Clone, Debug, Default)]
pub struct TableBackend {
    contain: BTreeMap<(String, String), f64>,
    cooccur: BTreeMap<(String, String), f64>,
    fallback: Option<f64>,
}

impl TableBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_contain(mut self, room: &str, query: &str, p: f64) -> Self {
        self.contain.insert((normalize(room), normalize(query)), p);
        self
    }

    pub fn with_cooccur(mut self, object: &str, query: &str, p: f64) -> Self {
        self.cooccur.insert((normalize(object), normalize(query)), p);
        self
    }

    /// Score for pairs missing from the tables instead of an error.
    pub fn with_fallback(mut self, p: f64) -> Self {
        self.fallback = Some(p);
        self
    }

    pub fn from_world(world: &PlantedWorld) -> Self {
        let mut t = Self::new();
        for ((room, obj), p) in &world.contain {
            t.contain.insert((room.clone(), obj.clone()), *p);
        }
        for a in &world.objects {
            for b in &world.objects {
                t.cooccur.insert((a.clone(), b.clone()), world.cooccur(a, b).unwrap_or(0.0));
            }
        }
        t
    }

    fn lookup(&self, table: &BTreeMap<(String, String), f64>, a: &str, q: &str) -> Result<f64, ScoringError> {
        let (a, q) = (normalize(a), normalize(q));
        if let Some(p) = table.get(&(a.clone(), q.clone())) {
            return Ok(*p);
        }
        self.fallback.ok_or(ScoringError::MissingEntry(a, q))
    }
}

impl ScorerBackend for TableBackend {
    fn name(&self) -> &str {
        "table"
    }

    fn score_room(&self, room: &str, query: &str) -> Result<f64, ScoringError> {
        self.lookup(&self.contain, room, query)
    }

    fn score_object(&self, object: &str, query: &str) -> Result<f64, ScoringError> {
        if normalize(object) == normalize(query) {
            return Ok(1.0);
        }
        let (o, q) = (normalize(object), normalize(query));
        match self.cooccur.get(&(o.clone(), q.clone())).or_else(|| self.cooccur.get(&(q, o))) {
            Some(p) => Ok(*p),
            None => self.lookup(&self.cooccur, object, query),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    Room,
    Object,
    FrontierAggregate,
    DefaultRoom,
    DefaultFrontier,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeScore {
    pub node: NodeId,
    pub raw: f64,
    pub updated: f64,
    pub source: ScoreSource,
}

fn with_node<T>(node: NodeId, r: Result<T, ScoringError>) -> Result<T, ScoringError> {
    r.map_err(|e| ScoringError::Node { node, source: Box::new(e) })
}

/// Aggregate of nearby object scores, or the default when none is in range.
pub fn score_frontier(position: [f64; 2], objects: &[([f64; 2], f64)], cfg: &ScoringConfig) -> (f64, ScoreSource) {
    let r2 = cfg.frontier_radius * cfg.frontier_radius;
    let near: Vec<f64> = objects
        .iter()
        .filter(|(p, _)| (p[0] - position[0]).powi(2) + (p[1] - position[1]).powi(2) <= r2)
        .map(|&(_, u)| u)
        .collect();
    if near.is_empty() {
        return (cfg.default_frontier_score, ScoreSource::DefaultFrontier);
    }
    let v = match cfg.aggregation {
        Aggregation::Max => near.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Aggregation::Mean => near.iter().sum::<f64>() / near.len() as f64,
    };
    (v, ScoreSource::FrontierAggregate)
}

/// Scores every observed room, object, frontier and unexplored room.
pub fn score_all(
    backend: &dyn ScorerBackend,
    query: &str,
    scene: &SceneGraph,
    obs: &Observation,
    cfg: &ScoringConfig,
) -> Result<BTreeMap<NodeId, NodeScore>, ScoringError> {
    let mut out = BTreeMap::new();
    let mut room_scores: BTreeMap<NodeId, f64> = BTreeMap::new();
    for &id in &obs.revealed {
        let Some(n) = scene.node(id) else { continue };
        if n.kind == NodeKind::Room && n.room_category.is_some() {
            let u = with_node(id, backend.score_room(n.room_label(), query))?;
            room_scores.insert(id, u);
            out.insert(id, NodeScore { node: id, raw: u, updated: u, source: ScoreSource::Room });
        }
    }
    let mut object_scores = Vec::new();
    for &id in &obs.revealed {
        let Some(n) = scene.node(id) else { continue };
        if !matches!(n.kind, NodeKind::Object | NodeKind::NestedObject) {
            continue;
        }
        let raw = with_node(id, backend.score_object(&n.label, query))?;
        let u_room = scene
            .ancestor_of_kind(id, NodeKind::Room)
            .and_then(|r| room_scores.get(&r).copied())
            .unwrap_or(cfg.default_room_score);
        let updated = cfg.updated(u_room, raw);
        out.insert(id, NodeScore { node: id, raw, updated, source: ScoreSource::Object });
        if let Some(p) = n.xy() {
            object_scores.push((p, updated));
        }
    }
    for (&id, f) in &obs.frontiers {
        let (u, source) = score_frontier(f.position, &object_scores, cfg);
        out.insert(id, NodeScore { node: id, raw: u, updated: u, source });
    }
    for &id in obs.unexplored_rooms.keys() {
        let u = cfg.default_room_score;
        out.insert(id, NodeScore { node: id, raw: u, updated: u, source: ScoreSource::DefaultRoom });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashProvider;
    use crate::env::{EpisodeSpec, Env};
    use crate::geodesics::Geodesics;
    use crate::scene_graph::SceneBuilder;

    #[test]
    fn shipped_config_is_the_default() {
        let cfg = ScoringConfig::from_toml_str(include_str!("../config/default.toml")).unwrap();
        assert_eq!(cfg, ScoringConfig::default());
        assert_eq!((cfg.default_room_score, cfg.default_frontier_score, cfg.delta, cfg.w), (0.7, 0.6, 0.1, 0.3));
    }

    #[test]
    fn config_rejects_out_of_range() {
        assert!(ScoringConfig::from_toml_str("w = 1.5").is_err());
        assert!(ScoringConfig::from_toml_str("delta = -0.1").is_err());
        assert!(ScoringConfig::from_toml_str("nonsense = 1").is_err());
        assert_eq!(ScoringConfig::from_toml_str("delta = 0.0").unwrap().delta, 0.0);
    }

    #[test]
    fn presets() {
        let s = ScoringConfig::preset("sbert").unwrap();
        assert_eq!((s.default_room_score, s.default_frontier_score, s.delta, s.w), (0.3, 0.25, 0.05, 0.3));
        let c = ScoringConfig::preset("clip").unwrap();
        assert_eq!((c.default_room_score, c.default_frontier_score, c.delta, c.w), (0.7, 0.4, 0.05, 0.3));
        assert!(ScoringConfig::preset("bogus").is_err());
    }

    #[test]
    fn update_rule_examples() {
        assert!((update_object_score(0.78f64, 0.94, 0.3) - 0.74724).abs() < 1e-12);
        assert!((update_object_score(0.30f64, 0.94, 0.3) - 0.2874).abs() < 1e-12);
        assert_eq!(update_object_score(0.4, 0.123, 1.0), 0.4);
        let off = ScoringConfig { room_influence: false, ..Default::default() };
        assert_eq!(off.updated(0.1, 0.94), 0.94);
        assert!((update_object_score(0.78f32, 0.94, 0.3) - 0.74724).abs() < 1e-6);
    }

    #[test]
    fn table_backend_lookups() {
        let t = TableBackend::new().with_contain("kitchen", "plate", 0.78).with_cooccur("cabinet", "plate", 0.94);
        assert_eq!(t.score_room("Kitchen", "plate").unwrap(), 0.78);
        assert_eq!(t.score_object("cabinet", "plate").unwrap(), 0.94);
        assert_eq!(t.score_object("plate", "plate").unwrap(), 1.0);
        assert!(matches!(t.score_room("garage", "plate"), Err(ScoringError::MissingEntry(..))));
        assert_eq!(t.with_fallback(0.1).score_room("garage", "plate").unwrap(), 0.1);
    }

    #[test]
    fn cosine_backend() {
        let c = CosineBackend::new(Arc::new(HashProvider::new(1, 16)));
        assert!((c.score_room("kitchen", "kitchen").unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(c.score_object("cup", "plate").unwrap(), c.score_object("plate", "cup").unwrap());
    }

    #[test]
    fn untrained_learned_backend_is_half() {
        let p: Arc<dyn EmbeddingProvider> = Arc::new(HashProvider::new(1, 4));
        let b = LearnedBackend::new(
            p,
            Mlp::zeros(Relation::Contain, 4, &[3]),
            Mlp::zeros(Relation::CoOccur, 4, &[3]),
        )
        .unwrap();
        assert_eq!(b.score_room("kitchen", "plate").unwrap(), 0.5);
        assert_eq!(b.score_object("sofa", "plate").unwrap(), 0.5);
    }

    #[test]
    fn learned_backend_rejects_swapped_models() {
        let p: Arc<dyn EmbeddingProvider> = Arc::new(HashProvider::new(1, 4));
        let r = LearnedBackend::new(p, Mlp::zeros(Relation::CoOccur, 4, &[3]), Mlp::zeros(Relation::CoOccur, 4, &[3]));
        assert!(matches!(r, Err(ScoringError::Model(MlpError::TagMismatch { .. }))));
    }

    #[test]
    fn frontier_aggregation() {
        let cfg = ScoringConfig::default();
        assert_eq!(score_frontier([0.0, 0.0], &[([5.0, 0.0], 0.9)], &cfg), (0.6, ScoreSource::DefaultFrontier));
        assert_eq!(score_frontier([0.0, 0.0], &[([1.0, 0.0], 0.75)], &cfg).0, 0.75);
        let objs = [([1.0, 0.0], 0.3), ([0.0, 1.0], 0.9), ([1.0, 1.0], 0.5)];
        assert_eq!(score_frontier([0.0, 0.0], &objs, &cfg).0, 0.9);
        let mean = ScoringConfig { aggregation: Aggregation::Mean, ..cfg };
        assert!((score_frontier([0.0, 0.0], &objs, &mean).0 - 1.7 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn kitchen_with_cabinet_and_closed_door() {
        let mut b = SceneBuilder::new("k");
        let k = b.room("kitchen", [0.0, 0.0]);
        let l = b.room("living room", [6.0, 0.0]);
        let r = b.region(k);
        let cab = b.container(r, "cabinet", [1.0, 0.0]);
        let r2 = b.region(l);
        let sofa = b.object(r2, "sofa", [6.0, 0.0], &[]);
        b.door(1, k, l, [3.0, 0.0]);
        let s = b.build();
        let geo = Geodesics::euclidean();
        let base = EpisodeSpec { id: "e".into(), scene_id: "k".into(), goal: sofa, query: "plate".into(), spawn_seed: 0, n_max: 50, interactive: false };
        let spawn_seed = (0..100)
            .find(|&sd| Env::reset(&s, &geo, EpisodeSpec { spawn_seed: sd, ..base.clone() }).unwrap().observation().revealed.contains(&k))
            .unwrap();
        let spec = EpisodeSpec { spawn_seed, ..base };
        let env = Env::reset(&s, &geo, spec).unwrap();
        let t = TableBackend::new().with_contain("kitchen", "plate", 0.78).with_cooccur("cabinet", "plate", 0.94);
        let scores = score_all(&t, "plate", &s, env.observation(), &ScoringConfig::default()).unwrap();
        assert_eq!(scores.len(), 3);
        assert_eq!(scores[&k].updated, 0.78);
        assert!((scores[&cab].updated - 0.74724).abs() < 1e-12);
        assert_eq!(scores[&l].updated, 0.7);
        assert_eq!(scores[&l].source, ScoreSource::DefaultRoom);

        let off = ScoringConfig { room_influence: false, ..Default::default() };
        let scores = score_all(&t, "plate", &s, env.observation(), &off).unwrap();
        assert_eq!(scores[&cab].updated, 0.94);
    }

    #[test]
    fn backend_errors_name_the_node() {
        let mut b = SceneBuilder::new("k");
        let k = b.room("kitchen", [0.0, 0.0]);
        let r = b.region(k);
        let cup = b.object(r, "cup", [0.0, 0.0], &[]);
        let s = b.build();
        let geo = Geodesics::euclidean();
        let spec = EpisodeSpec { id: "e".into(), scene_id: "k".into(), goal: cup, query: "plate".into(), spawn_seed: 0, n_max: 50, interactive: false };
        let env = Env::reset(&s, &geo, spec).unwrap();
        let t = TableBackend::new().with_contain("kitchen", "plate", 0.5);
        let err = score_all(&t, "plate", &s, env.observation(), &ScoringConfig::default()).unwrap_err();
        assert!(err.to_string().starts_with(&format!("node {cup}")), "{err}");
    }
}
