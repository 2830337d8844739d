//! The episodic search environment: partial observation of a scene graph,
//! reveal-on-explore transitions and travel bookkeeping.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesics::Geodesics;
use crate::occupancy::GridError;
use crate::scene_graph::{NodeId, NodeKind, SceneGraph};

pub const DEFAULT_MAX_STEPS: usize = 50;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("scene has no room with regions to spawn in")]
    EmptyScene,
    #[error("goal {0} is not a node of the scene")]
    UnknownGoal(NodeId),
    #[error("node {0} is not actionable")]
    NotActionable(NodeId),
    #[error("episode already terminated")]
    Terminated,
    #[error("goal cannot be revealed from this start")]
    Unsolvable,
    #[error("search expanded more than {0} states")]
    SearchBudget(usize),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("episodes: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn default_n_max() -> usize {
    DEFAULT_MAX_STEPS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeSpec {
    pub id: String,
    pub scene_id: String,
    pub goal: NodeId,
    pub query: String,
    #[serde(default)]
    pub spawn_seed: u64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    /// True when the goal is hidden inside or on top of another object.
    #[serde(default)]
    pub interactive: bool,
}

impl EpisodeSpec {
    pub fn load_list(path: impl AsRef<Path>) -> Result<Vec<EpisodeSpec>, EnvError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save_list(specs: &[EpisodeSpec], path: impl AsRef<Path>) -> Result<(), EnvError> {
        let mut s = serde_json::to_string_pretty(specs)?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frontier {
    pub position: [f64; 2],
    region: NodeId,
}

/// What the agent knows. Frontier backing regions stay private so agents
/// cannot peek at hidden structure.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub revealed: BTreeSet<NodeId>,
    pub frontiers: BTreeMap<NodeId, Frontier>,
    /// Room id → door midpoint through which it was seen.
    pub unexplored_rooms: BTreeMap<NodeId, [f64; 2]>,
    /// Containers already opened or searched.
    pub explored: BTreeSet<NodeId>,
    pub agent_position: [f64; 2],
    pub steps_taken: usize,
    pub traveled: f64,
}

impl Observation {
    /// Kind of an observed id, or `None` if the agent does not know it.
    pub fn kind_of(&self, scene: &SceneGraph, id: NodeId) -> Option<NodeKind> {
        if self.frontiers.contains_key(&id) {
            Some(NodeKind::Frontier)
        } else if self.unexplored_rooms.contains_key(&id) {
            Some(NodeKind::UnexploredRoom)
        } else if self.revealed.contains(&id) {
            scene.node(id).map(|n| n.kind)
        } else {
            None
        }
    }

    /// Position of an observed node as seen by the agent.
    pub fn position_of(&self, scene: &SceneGraph, id: NodeId) -> Option<[f64; 2]> {
        if let Some(f) = self.frontiers.get(&id) {
            return Some(f.position);
        }
        if let Some(p) = self.unexplored_rooms.get(&id) {
            return Some(*p);
        }
        if self.revealed.contains(&id) {
            return scene.node(id).and_then(|n| n.xy());
        }
        None
    }

    /// Frontiers, unexplored rooms and unexplored revealed containers.
    pub fn actionable(&self, scene: &SceneGraph) -> BTreeSet<NodeId> {
        let mut out: BTreeSet<NodeId> = self.frontiers.keys().copied().collect();
        out.extend(self.unexplored_rooms.keys().copied());
        out.extend(self.revealed.iter().copied().filter(|id| {
            !self.explored.contains(id)
                && scene.node(*id).is_some_and(|n| n.kind == NodeKind::Object && n.is_container())
        }));
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub target: NodeId,
    pub newly_revealed: BTreeSet<NodeId>,
    pub position: [f64; 2],
    pub step_distance: f64,
    pub terminal: bool,
    pub success: bool,
}

/// Frontier id standing for `region`; disjoint from every scene id.
pub fn frontier_id(scene: &SceneGraph, region: NodeId) -> NodeId {
    NodeId(scene.max_id().map_or(0, |m| m.0) + 1 + region.0)
}

fn travel(geo: &Geodesics, from: [f64; 2], to: [f64; 2]) -> Result<f64, GridError> {
    Ok(match geo.distance(from, to)? {
        Some(d) => d,
        // teleport-equivalent fallback when the dilated grid disconnects the endpoints
        None => ((from[0] - to[0]).powi(2) + (from[1] - to[1]).powi(2)).sqrt(),
    })
}

fn reveal_region(scene: &SceneGraph, obs: &mut Observation, region: NodeId, new: &mut BTreeSet<NodeId>) {
    if obs.revealed.insert(region) {
        new.insert(region);
    }
    obs.frontiers.remove(&frontier_id(scene, region));
    for &c in scene.children_of(region) {
        if obs.revealed.insert(c) {
            new.insert(c);
        }
    }
}

/// Reveals `room`, adds frontiers for the given regions and unexplored
/// rooms for unseen neighbours.
fn reveal_room(scene: &SceneGraph, obs: &mut Observation, room: NodeId, skip_region: Option<NodeId>, new: &mut BTreeSet<NodeId>) {
    obs.unexplored_rooms.remove(&room);
    if obs.revealed.insert(room) {
        new.insert(room);
    }
    for region in scene.children_of_kind(room, NodeKind::Region) {
        if Some(region) != skip_region && !obs.revealed.contains(&region) {
            let position = scene.node(region).and_then(|n| n.xy()).unwrap_or(obs.agent_position);
            obs.frontiers.insert(frontier_id(scene, region), Frontier { position, region });
        }
    }
    for (other, door) in scene.adjacent_rooms(room) {
        if !obs.revealed.contains(&other) {
            obs.unexplored_rooms.entry(other).or_insert(door.midpoint);
        }
    }
}

/// Pure transition; returns the outcome without termination flags.
fn transition(
    scene: &SceneGraph,
    geo: &Geodesics,
    obs: &mut Observation,
    target: NodeId,
) -> Result<(BTreeSet<NodeId>, f64), EnvError> {
    let mut new = BTreeSet::new();
    let destination;
    if let Some(f) = obs.frontiers.get(&target).cloned() {
        reveal_region(scene, obs, f.region, &mut new);
        destination = f.position;
    } else if let Some(&door_mid) = obs.unexplored_rooms.get(&target) {
        // closest region by travel distance from the agent, ties → smaller id
        let mut best: Option<(bool, f64, NodeId, [f64; 2])> = None;
        for region in scene.children_of_kind(target, NodeKind::Region) {
            let Some(p) = scene.node(region).and_then(|n| n.xy()) else { continue };
            let (unreachable, d) = match geo.distance(obs.agent_position, p)? {
                Some(d) => (false, d),
                None => (true, ((p[0] - obs.agent_position[0]).powi(2) + (p[1] - obs.agent_position[1]).powi(2)).sqrt()),
            };
            let better = match &best {
                None => true,
                Some((bu, bd, _, _)) => (unreachable, d).partial_cmp(&(*bu, *bd)) == Some(Ordering::Less),
            };
            if better {
                best = Some((unreachable, d, region, p));
            }
        }
        reveal_room(scene, obs, target, best.map(|b| b.2), &mut new);
        match best {
            Some((_, _, region, p)) => {
                reveal_region(scene, obs, region, &mut new);
                destination = p;
            }
            None => destination = door_mid,
        }
    } else if obs.actionable(scene).contains(&target) {
        for &c in scene.children_of(target) {
            if obs.revealed.insert(c) {
                new.insert(c);
            }
        }
        obs.explored.insert(target);
        destination = scene.node(target).and_then(|n| n.xy()).unwrap_or(obs.agent_position);
    } else {
        return Err(EnvError::NotActionable(target));
    }
    let d = travel(geo, obs.agent_position, destination)?;
    obs.agent_position = destination;
    obs.steps_taken += 1;
    obs.traveled += d;
    Ok((new, d))
}

/// Seeded spawn: a room with regions, then one of its regions.
fn spawn(scene: &SceneGraph, seed: u64) -> Result<Observation, EnvError> {
    let rooms: Vec<NodeId> = scene
        .rooms()
        .map(|r| r.id)
        .filter(|&r| scene.children_of_kind(r, NodeKind::Region).next().is_some())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let &room = rooms.choose(&mut rng).ok_or(EnvError::EmptyScene)?;
    let regions: Vec<NodeId> = scene.children_of_kind(room, NodeKind::Region).collect();
    let &region = regions.choose(&mut rng).expect("room has regions");
    let position = scene.node(region).and_then(|n| n.xy()).unwrap_or([0.0, 0.0]);
    let mut obs = Observation {
        revealed: BTreeSet::new(),
        frontiers: BTreeMap::new(),
        unexplored_rooms: BTreeMap::new(),
        explored: BTreeSet::new(),
        agent_position: position,
        steps_taken: 0,
        traveled: 0.0,
    };
    let mut new = BTreeSet::new();
    reveal_room(scene, &mut obs, room, Some(region), &mut new);
    reveal_region(scene, &mut obs, region, &mut new);
    Ok(obs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub step: usize,
    pub target: NodeId,
    pub newly_revealed: Vec<NodeId>,
    pub position: [f64; 2],
    pub traveled: f64,
}

pub struct Env<'a> {
    scene: &'a SceneGraph,
    geo: &'a Geodesics,
    spec: EpisodeSpec,
    obs: Observation,
    terminal: bool,
    success: bool,
    log: Vec<ActionRecord>,
}

impl<'a> Env<'a> {
    pub fn reset(scene: &'a SceneGraph, geo: &'a Geodesics, spec: EpisodeSpec) -> Result<Self, EnvError> {
        if scene.node(spec.goal).is_none() {
            return Err(EnvError::UnknownGoal(spec.goal));
        }
        let obs = spawn(scene, spec.spawn_seed)?;
        let success = obs.revealed.contains(&spec.goal);
        let mut env = Self { scene, geo, spec, obs, terminal: success, success, log: Vec::new() };
        if !env.terminal && (env.spec.n_max == 0 || env.actionable().is_empty()) {
            env.terminal = true;
        }
        Ok(env)
    }

    pub fn scene(&self) -> &'a SceneGraph {
        self.scene
    }

    pub fn geodesics(&self) -> &'a Geodesics {
        self.geo
    }

    pub fn spec(&self) -> &EpisodeSpec {
        &self.spec
    }

    pub fn observation(&self) -> &Observation {
        &self.obs
    }

    pub fn actionable(&self) -> BTreeSet<NodeId> {
        self.obs.actionable(self.scene)
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    pub fn success(&self) -> bool {
        self.success
    }

    pub fn action_log(&self) -> &[ActionRecord] {
        &self.log
    }

    pub fn step(&mut self, target: NodeId) -> Result<StepOutcome, EnvError> {
        if self.terminal {
            return Err(EnvError::Terminated);
        }
        let (newly_revealed, d) = transition(self.scene, self.geo, &mut self.obs, target)?;
        self.success = self.obs.revealed.contains(&self.spec.goal);
        self.terminal = self.success || self.obs.steps_taken >= self.spec.n_max || self.actionable().is_empty();
        self.log.push(ActionRecord {
            step: self.obs.steps_taken,
            target,
            newly_revealed: newly_revealed.iter().copied().collect(),
            position: self.obs.agent_position,
            traveled: self.obs.traveled,
        });
        Ok(StepOutcome {
            target,
            newly_revealed,
            position: self.obs.agent_position,
            step_distance: d,
            terminal: self.terminal,
            success: self.success,
        })
    }
}

/// Optimal plan for an episode under the environment's own transitions.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub steps: usize,
    pub traveled: f64,
    pub actions: Vec<NodeId>,
}

pub const DEFAULT_SEARCH_CAP: usize = 200_000;

/// Lower bound on the steps still needed to reveal `goal`.
struct Heuristic {
    goal_room: NodeId,
    goal_region: Option<NodeId>,
    goal_parent_object: Option<NodeId>,
    room_adjacency: BTreeMap<NodeId, Vec<NodeId>>,
}

impl Heuristic {
    fn new(scene: &SceneGraph, goal: NodeId) -> Self {
        let kind = scene.node(goal).map(|n| n.kind);
        let goal_parent_object = match kind {
            Some(NodeKind::NestedObject) => scene.node(goal).and_then(|n| n.parent),
            _ => None,
        };
        let goal_region = if kind == Some(NodeKind::Region) { Some(goal) } else { scene.ancestor_of_kind(goal, NodeKind::Region) };
        let goal_room = if kind == Some(NodeKind::Room) { goal } else { scene.ancestor_of_kind(goal, NodeKind::Room).unwrap_or(goal) };
        let room_adjacency = scene.rooms().map(|r| (r.id, scene.adjacent_rooms(r.id).keys().copied().collect())).collect();
        Self { goal_room, goal_region, goal_parent_object, room_adjacency }
    }

    fn estimate(&self, obs: &Observation) -> Option<usize> {
        let nested = usize::from(self.goal_parent_object.is_some_and(|p| !obs.explored.contains(&p)));
        if obs.revealed.contains(&self.goal_room) {
            let region = usize::from(self.goal_region.is_some_and(|r| !obs.revealed.contains(&r)));
            return Some(region + nested);
        }
        // rooms to enter: BFS over the door graph from revealed rooms
        let mut dist: HashMap<NodeId, usize> = HashMap::new();
        let mut queue = VecDeque::new();
        for r in self.room_adjacency.keys().filter(|r| obs.revealed.contains(r)) {
            dist.insert(*r, 0);
            queue.push_back(*r);
        }
        while let Some(r) = queue.pop_front() {
            let d = dist[&r];
            if r == self.goal_room {
                return Some(d + nested);
            }
            for &n in self.room_adjacency.get(&r).into_iter().flatten() {
                if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(n) {
                    e.insert(d + 1);
                    queue.push_back(n);
                }
            }
        }
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Cost {
    f_steps: usize,
    steps: usize,
    traveled: f64,
}

struct Entry {
    cost: Cost,
    seq: usize,
    state: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    // min-heap on (f_steps, traveled, insertion order)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .f_steps
            .cmp(&self.cost.f_steps)
            .then_with(|| other.cost.traveled.total_cmp(&self.cost.traveled))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

type StateKey = (Vec<NodeId>, Vec<NodeId>, (u64, u64));

fn key(obs: &Observation) -> StateKey {
    (
        obs.revealed.iter().copied().collect(),
        obs.explored.iter().copied().collect(),
        (obs.agent_position[0].to_bits(), obs.agent_position[1].to_bits()),
    )
}

/// Minimum steps to reveal the goal and, among minimum-step plans, the
/// minimum traveled distance. A* over the environment's transition function
/// with lexicographic (steps, meters) cost; the step heuristic counts rooms,
/// frontiers and containers that must still be explored.
pub fn shortest_solution(scene: &SceneGraph, geo: &Geodesics, spec: &EpisodeSpec, cap: usize) -> Result<Solution, EnvError> {
    if scene.node(spec.goal).is_none() {
        return Err(EnvError::UnknownGoal(spec.goal));
    }
    let start = spawn(scene, spec.spawn_seed)?;
    if start.revealed.contains(&spec.goal) {
        return Ok(Solution { steps: 0, traveled: 0.0, actions: Vec::new() });
    }
    let h = Heuristic::new(scene, spec.goal);
    let h0 = h.estimate(&start).ok_or(EnvError::Unsolvable)?;

    let mut states: Vec<(Observation, Option<(usize, NodeId)>)> = vec![(start.clone(), None)];
    let mut best: HashMap<StateKey, (usize, f64)> = HashMap::new();
    best.insert(key(&start), (0, 0.0));
    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Entry { cost: Cost { f_steps: h0, steps: 0, traveled: 0.0 }, seq, state: 0 });
    let mut expanded = 0;

    while let Some(Entry { cost, state, .. }) = heap.pop() {
        let obs = states[state].0.clone();
        if best.get(&key(&obs)).is_some_and(|&(s, t)| (s, t) < (cost.steps, cost.traveled)) {
            continue;
        }
        if obs.revealed.contains(&spec.goal) {
            let mut actions = Vec::new();
            let mut cur = state;
            while let Some((prev, a)) = states[cur].1 {
                actions.push(a);
                cur = prev;
            }
            actions.reverse();
            return Ok(Solution { steps: cost.steps, traveled: cost.traveled, actions });
        }
        expanded += 1;
        if expanded > cap {
            return Err(EnvError::SearchBudget(cap));
        }
        for a in obs.actionable(scene) {
            let mut next = obs.clone();
            transition(scene, geo, &mut next, a)?;
            let Some(hn) = h.estimate(&next) else { continue };
            let c = Cost { f_steps: next.steps_taken + hn, steps: next.steps_taken, traveled: next.traveled };
            let k = key(&next);
            if best.get(&k).is_some_and(|&(s, t)| (s, t) <= (c.steps, c.traveled)) {
                continue;
            }
            best.insert(k, (c.steps, c.traveled));
            states.push((next, Some((state, a))));
            seq += 1;
            heap.push(Entry { cost: c, seq, state: states.len() - 1 });
        }
    }
    Err(EnvError::Unsolvable)
}
