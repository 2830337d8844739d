//! Hierarchical scene graph: root → rooms → regions → objects → nested
//! objects, plus door connectivity between rooms.
//!
//! A [`SceneGraph`] is immutable once built. Use [`SceneBuilder`] or
//! [`SceneGraph::from_parts`] to construct one and [`SceneGraph::validate`]
//! to check the structural rules.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label;
use crate::occupancy::{GridError, OccupancyGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub type DoorId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Root,
    Room,
    Region,
    Object,
    NestedObject,
    Frontier,
    UnexploredRoom,
}

impl NodeKind {
    /// Depth in the containment tree. Observation-only kinds sit on the layer
    /// of the element they stand in for.
    pub fn layer(self) -> u8 {
        match self {
            NodeKind::Root => 0,
            NodeKind::Room | NodeKind::UnexploredRoom => 1,
            NodeKind::Region | NodeKind::Frontier => 2,
            NodeKind::Object => 3,
            NodeKind::NestedObject => 4,
        }
    }

    pub fn observation_only(self) -> bool {
        matches!(self, NodeKind::Frontier | NodeKind::UnexploredRoom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Affordance {
    Openable,
    Explorable,
    Navigable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub label: String,
    pub position: Option<[f64; 3]>,
    pub parent: Option<NodeId>,
    pub affordances: BTreeSet<Affordance>,
    pub room_category: Option<String>,
}

impl SceneNode {
    pub fn xy(&self) -> Option<[f64; 2]> {
        self.position.map(|p| [p[0], p[1]])
    }

    /// Openable or explorable: exploring it can reveal nested objects.
    pub fn is_container(&self) -> bool {
        self.affordances.contains(&Affordance::Openable) || self.affordances.contains(&Affordance::Explorable)
    }

    /// The label used when scoring a room: its category, else its label.
    pub fn room_label(&self) -> &str {
        self.room_category.as_deref().unwrap_or(&self.label)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    Contains,
    ConnectsVia(DoorId),
    OnTopOf,
    Inside,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SceneEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Door {
    pub id: DoorId,
    pub midpoint: [f64; 2],
    pub rooms: [NodeId; 2],
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("scene {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("scene rejected with {} violation(s): {}", .0.len(), .0.join("; "))]
    Invalid(Vec<String>),
    #[error("occupancy grid {path}: {source}")]
    Grid { path: String, source: GridError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug)]
pub struct SceneGraph {
    scene_id: String,
    nodes: BTreeMap<NodeId, SceneNode>,
    edges: Vec<SceneEdge>,
    doors: Vec<Door>,
    occupancy_ref: String,
    occupancy: Option<Arc<OccupancyGrid>>,
    children: BTreeMap<NodeId, Vec<NodeId>>,
    duplicate_ids: Vec<NodeId>,
}

impl PartialEq for SceneGraph {
    fn eq(&self, other: &Self) -> bool {
        self.scene_id == other.scene_id
            && self.nodes == other.nodes
            && self.edges == other.edges
            && self.doors == other.doors
            && self.occupancy_ref == other.occupancy_ref
    }
}

impl SceneGraph {
    pub fn from_parts(
        scene_id: impl Into<String>,
        nodes: Vec<SceneNode>,
        edges: Vec<SceneEdge>,
        doors: Vec<Door>,
        occupancy_ref: impl Into<String>,
    ) -> Self {
        let mut map = BTreeMap::new();
        let mut duplicate_ids = Vec::new();
        for n in nodes {
            let id = n.id;
            if map.insert(id, n).is_some() {
                duplicate_ids.push(id);
            }
        }
        let mut children: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for e in edges.iter().filter(|e| e.kind == EdgeKind::Contains) {
            children.entry(e.src).or_default().push(e.dst);
        }
        for list in children.values_mut() {
            list.sort();
            list.dedup();
        }
        Self {
            scene_id: scene_id.into(),
            nodes: map,
            edges,
            doors,
            occupancy_ref: occupancy_ref.into(),
            occupancy: None,
            children,
            duplicate_ids,
        }
    }

    pub fn with_occupancy(mut self, grid: OccupancyGrid) -> Self {
        self.occupancy = Some(Arc::new(grid));
        self
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }
    pub fn nodes(&self) -> &BTreeMap<NodeId, SceneNode> {
        &self.nodes
    }
    pub fn edges(&self) -> &[SceneEdge] {
        &self.edges
    }
    pub fn doors(&self) -> &[Door] {
        &self.doors
    }
    pub fn occupancy_ref(&self) -> &str {
        &self.occupancy_ref
    }
    pub fn occupancy(&self) -> Option<&Arc<OccupancyGrid>> {
        self.occupancy.as_ref()
    }

    pub fn node(&self, id: NodeId) -> Option<&SceneNode> {
        self.nodes.get(&id)
    }

    pub fn get(&self, id: NodeId) -> Result<&SceneNode, SceneError> {
        self.nodes.get(&id).ok_or(SceneError::UnknownNode(id))
    }

    pub fn max_id(&self) -> Option<NodeId> {
        self.nodes.keys().next_back().copied()
    }

    pub fn root(&self) -> Option<NodeId> {
        self.nodes.values().find(|n| n.kind == NodeKind::Root).map(|n| n.id)
    }

    /// Contains-edge children, ascending by id.
    pub fn children(&self, id: NodeId) -> Result<Vec<NodeId>, SceneError> {
        self.get(id)?;
        Ok(self.children_of(id).to_vec())
    }

    /// Like [`children`](Self::children) without the existence check.
    pub fn children_of(&self, id: NodeId) -> &[NodeId] {
        self.children.get(&id).map_or(&[], Vec::as_slice)
    }

    pub fn children_of_kind(&self, id: NodeId, kind: NodeKind) -> impl Iterator<Item = NodeId> + '_ {
        self.children_of(id).iter().copied().filter(move |c| self.nodes.get(c).is_some_and(|n| n.kind == kind))
    }

    /// Sorted multiset of the non-empty labels strictly below `id` in the
    /// containment tree.
    pub fn subtree_labels(&self, id: NodeId) -> Result<Vec<String>, SceneError> {
        self.get(id)?;
        let mut out = Vec::new();
        let mut stack: Vec<NodeId> = self.children_of(id).to_vec();
        let mut seen = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                continue;
            }
            if let Some(node) = self.nodes.get(&n) {
                if !node.label.is_empty() {
                    out.push(node.label.clone());
                }
            }
            stack.extend(self.children_of(n).iter().copied());
        }
        out.sort();
        Ok(out)
    }

    /// Nearest ancestor-or-self of the given kind.
    pub fn ancestor_of_kind(&self, id: NodeId, kind: NodeKind) -> Option<NodeId> {
        let mut cur = self.nodes.get(&id)?;
        for _ in 0..8 {
            if cur.kind == kind {
                return Some(cur.id);
            }
            cur = self.nodes.get(&cur.parent?)?;
        }
        None
    }

    pub fn rooms(&self) -> impl Iterator<Item = &SceneNode> {
        self.nodes.values().filter(|n| n.kind == NodeKind::Room)
    }

    /// Rooms reachable through one door, with the connecting door. When two
    /// rooms share several doors the lowest door id wins.
    pub fn adjacent_rooms(&self, room: NodeId) -> BTreeMap<NodeId, &Door> {
        let mut out: BTreeMap<NodeId, &Door> = BTreeMap::new();
        for d in &self.doors {
            let other = if d.rooms[0] == room {
                d.rooms[1]
            } else if d.rooms[1] == room {
                d.rooms[0]
            } else {
                continue;
            };
            match out.get(&other) {
                Some(prev) if prev.id <= d.id => {}
                _ => {
                    out.insert(other, d);
                }
            }
        }
        out
    }

    /// Checks every structural rule; empty iff the graph is well-formed.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        for id in &self.duplicate_ids {
            v.push(format!("node {id}: duplicate id"));
        }
        let roots: Vec<_> = self.nodes.values().filter(|n| n.kind == NodeKind::Root).collect();
        if roots.len() != 1 {
            v.push(format!("scene: expected exactly one root, found {}", roots.len()));
        }
        for n in self.nodes.values() {
            self.validate_node(n, &mut v);
        }
        self.validate_edges(&mut v);
        self.validate_doors(&mut v);
        self.validate_room_connectivity(&mut v);
        v
    }

    fn validate_node(&self, n: &SceneNode, v: &mut Vec<String>) {
        let id = n.id;
        if n.kind.observation_only() {
            v.push(format!("node {id}: observation-only kind {:?} in a ground-truth scene", n.kind));
        }
        if !label::is_normalized(&n.label) {
            v.push(format!("node {id}: label {:?} is not normalized", n.label));
        }
        if n.room_category.is_some() && n.kind != NodeKind::Room {
            v.push(format!("node {id}: room_category on a non-room node"));
        }
        if let Some(p) = n.position {
            if p.iter().any(|c| !c.is_finite()) {
                v.push(format!("node {id}: non-finite position"));
            }
        }
        if n.kind == NodeKind::Root {
            if n.parent.is_some() {
                v.push(format!("node {id}: root has a parent"));
            }
            if n.position.is_some() {
                v.push(format!("node {id}: root has a position"));
            }
            return;
        }
        if n.label.is_empty() {
            v.push(format!("node {id}: empty label"));
        }
        if n.position.is_none() {
            v.push(format!("node {id}: missing position"));
        }
        let Some(pid) = n.parent else {
            v.push(format!("node {id}: missing parent"));
            return;
        };
        let Some(parent) = self.nodes.get(&pid) else {
            v.push(format!("node {id}: parent {pid} does not exist"));
            return;
        };
        let (own, up) = (n.kind.layer(), parent.kind.layer());
        if up + 1 < own {
            v.push(format!("node {id}: parent layer skip"));
        } else if up + 1 != own {
            v.push(format!("node {id}: parent {pid} is not one layer above"));
        }
        let contains_edges = self
            .edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Contains && e.dst == id)
            .count();
        if contains_edges != 1 {
            v.push(format!("node {id}: expected one contains edge from its parent, found {contains_edges}"));
        }
        if n.kind == NodeKind::NestedObject && !parent.is_container() {
            v.push(format!("node {id}: nested under {pid} which is neither openable nor explorable"));
        }
        if n.kind == NodeKind::Region {
            let members: Vec<[f64; 2]> = self
                .children_of_kind(id, NodeKind::Object)
                .filter_map(|c| self.nodes[&c].xy())
                .collect();
            if members.is_empty() {
                v.push(format!("node {id}: region has no objects"));
            } else if let Some(p) = n.position {
                let c = centroid(&members);
                if (p[0] - c[0]).abs() > 1e-6 || (p[1] - c[1]).abs() > 1e-6 || p[2] != 0.0 {
                    v.push(format!("node {id}: region position is not the centroid of its objects"));
                }
            }
        }
    }

    fn validate_edges(&self, v: &mut Vec<String>) {
        let connects: BTreeSet<(NodeId, NodeId, DoorId)> = self
            .edges
            .iter()
            .filter_map(|e| match e.kind {
                EdgeKind::ConnectsVia(d) => Some((e.src, e.dst, d)),
                _ => None,
            })
            .collect();
        for (i, e) in self.edges.iter().enumerate() {
            let tag = format!("edge {i} ({}->{})", e.src, e.dst);
            let (Some(src), Some(dst)) = (self.nodes.get(&e.src), self.nodes.get(&e.dst)) else {
                for end in [e.src, e.dst] {
                    if !self.nodes.contains_key(&end) {
                        v.push(format!("{tag}: unknown node {end}"));
                    }
                }
                continue;
            };
            match e.kind {
                EdgeKind::Contains => {
                    if dst.parent != Some(e.src) {
                        v.push(format!("{tag}: contains edge disagrees with the parent of {}", e.dst));
                    }
                    if dst.kind.layer() != src.kind.layer() + 1 {
                        v.push(format!("{tag}: contains edge skips or inverts a layer"));
                    }
                }
                EdgeKind::ConnectsVia(d) => {
                    if src.kind != NodeKind::Room || dst.kind != NodeKind::Room {
                        v.push(format!("{tag}: connects_via between non-room nodes"));
                    }
                    if !connects.contains(&(e.dst, e.src, d)) {
                        v.push(format!("{tag}: connects_via door {d} has no symmetric partner"));
                    }
                    let known = self.doors.iter().any(|door| {
                        door.id == d
                            && ((door.rooms[0] == e.src && door.rooms[1] == e.dst)
                                || (door.rooms[1] == e.src && door.rooms[0] == e.dst))
                    });
                    if !known {
                        v.push(format!("{tag}: door {d} is not listed for this room pair"));
                    }
                }
                EdgeKind::OnTopOf | EdgeKind::Inside => {
                    if src.kind != NodeKind::Object || dst.kind != NodeKind::NestedObject {
                        v.push(format!("{tag}: nesting edge must go from an object to a nested object"));
                    }
                    if dst.parent != Some(e.src) {
                        v.push(format!("{tag}: nesting edge disagrees with the containment tree"));
                    }
                }
            }
        }
    }

    fn validate_doors(&self, v: &mut Vec<String>) {
        for d in &self.doors {
            for r in d.rooms {
                if self.nodes.get(&r).map(|n| n.kind) != Some(NodeKind::Room) {
                    v.push(format!("door {}: endpoint {r} is not a room", d.id));
                }
            }
            if d.rooms[0] == d.rooms[1] {
                v.push(format!("door {}: connects a room to itself", d.id));
            }
            let has_edge = |a: NodeId, b: NodeId| {
                self.edges.iter().any(|e| e.src == a && e.dst == b && e.kind == EdgeKind::ConnectsVia(d.id))
            };
            if !has_edge(d.rooms[0], d.rooms[1]) || !has_edge(d.rooms[1], d.rooms[0]) {
                v.push(format!("door {}: missing connects_via edges", d.id));
            }
        }
    }

    fn validate_room_connectivity(&self, v: &mut Vec<String>) {
        let rooms: Vec<NodeId> = self.rooms().map(|r| r.id).collect();
        let Some(&start) = rooms.first() else { return };
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(r) = queue.pop_front() {
            for e in &self.edges {
                if e.src == r && matches!(e.kind, EdgeKind::ConnectsVia(_)) && seen.insert(e.dst) {
                    queue.push_back(e.dst);
                }
            }
        }
        let missing: Vec<String> = rooms.iter().filter(|r| !seen.contains(r)).map(|r| r.to_string()).collect();
        if !missing.is_empty() {
            v.push(format!("scene: rooms [{}] unreachable from room {start} via doors", missing.join(", ")));
        }
    }

    /// Parses scene JSON and rejects graphs that fail validation. The
    /// occupancy grid is not loaded; see [`SceneGraph::load`].
    pub fn from_json_str(text: &str) -> Result<Self, SceneError> {
        let raw: RawScene =
            serde_json::from_str(text).map_err(|source| SceneError::Parse { path: "<string>".into(), source })?;
        let graph = raw.into_graph()?;
        let violations = graph.validate();
        if !violations.is_empty() {
            return Err(SceneError::Invalid(violations));
        }
        Ok(graph)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&RawScene::from_graph(self)).expect("scene serializes");
        s.push('\n');
        s
    }

    /// Loads scene JSON and, when `occupancy_ref` is non-empty, the grid file
    /// it names (relative to the scene file's directory).
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SceneError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut graph = Self::from_json_str(&text).map_err(|e| match e {
            SceneError::Parse { source, .. } => SceneError::Parse { path: path.display().to_string(), source },
            other => other,
        })?;
        if !graph.occupancy_ref.is_empty() {
            let grid_path = path.parent().unwrap_or(Path::new(".")).join(&graph.occupancy_ref);
            let grid = OccupancyGrid::load(&grid_path)
                .map_err(|source| SceneError::Grid { path: grid_path.display().to_string(), source })?;
            graph.occupancy = Some(Arc::new(grid));
        }
        Ok(graph)
    }

    /// Writes scene JSON only; the grid file is the caller's concern.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SceneError> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

pub fn centroid(points: &[[f64; 2]]) -> [f64; 2] {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
    [sx / n, sy / n]
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    scene_id: String,
    nodes: Vec<RawNode>,
    edges: Vec<RawEdge>,
    doors: Vec<Door>,
    occupancy_ref: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: NodeId,
    kind: NodeKind,
    label: String,
    position: Option<[f64; 3]>,
    parent: Option<NodeId>,
    affordances: Vec<Affordance>,
    room_category: Option<String>,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawEdgeKind {
    Contains,
    ConnectsVia,
    OnTopOf,
    Inside,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    src: NodeId,
    dst: NodeId,
    kind: RawEdgeKind,
    door_id: Option<DoorId>,
}

impl RawScene {
    fn into_graph(self) -> Result<SceneGraph, SceneError> {
        let mut problems = Vec::new();
        let nodes = self
            .nodes
            .into_iter()
            .map(|n| SceneNode {
                id: n.id,
                kind: n.kind,
                label: n.label,
                position: n.position,
                parent: n.parent,
                affordances: n.affordances.into_iter().collect(),
                room_category: n.room_category,
            })
            .collect();
        let mut edges = Vec::with_capacity(self.edges.len());
        for (i, e) in self.edges.into_iter().enumerate() {
            let kind = match (e.kind, e.door_id) {
                (RawEdgeKind::ConnectsVia, Some(d)) => EdgeKind::ConnectsVia(d),
                (RawEdgeKind::ConnectsVia, None) => {
                    problems.push(format!("edge {i} ({}->{}): connects_via without door_id", e.src, e.dst));
                    continue;
                }
                (_, Some(_)) => {
                    problems.push(format!("edge {i} ({}->{}): door_id on a non-door edge", e.src, e.dst));
                    continue;
                }
                (RawEdgeKind::Contains, None) => EdgeKind::Contains,
                (RawEdgeKind::OnTopOf, None) => EdgeKind::OnTopOf,
                (RawEdgeKind::Inside, None) => EdgeKind::Inside,
            };
            edges.push(SceneEdge { src: e.src, dst: e.dst, kind });
        }
        if !problems.is_empty() {
            return Err(SceneError::Invalid(problems));
        }
        Ok(SceneGraph::from_parts(self.scene_id, nodes, edges, self.doors, self.occupancy_ref))
    }

    fn from_graph(g: &SceneGraph) -> Self {
        RawScene {
            scene_id: g.scene_id.clone(),
            nodes: g
                .nodes
                .values()
                .map(|n| RawNode {
                    id: n.id,
                    kind: n.kind,
                    label: n.label.clone(),
                    position: n.position,
                    parent: n.parent,
                    affordances: n.affordances.iter().copied().collect(),
                    room_category: n.room_category.clone(),
                })
                .collect(),
            edges: g
                .edges
                .iter()
                .map(|e| {
                    let (kind, door_id) = match e.kind {
                        EdgeKind::Contains => (RawEdgeKind::Contains, None),
                        EdgeKind::ConnectsVia(d) => (RawEdgeKind::ConnectsVia, Some(d)),
                        EdgeKind::OnTopOf => (RawEdgeKind::OnTopOf, None),
                        EdgeKind::Inside => (RawEdgeKind::Inside, None),
                    };
                    RawEdge { src: e.src, dst: e.dst, kind, door_id }
                })
                .collect(),
            doors: g.doors.clone(),
            occupancy_ref: g.occupancy_ref.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Nesting {
    OnTopOf,
    Inside,
}

/// Incremental scene construction with automatic ids, containment edges and
/// region centroids.
#[derive(Debug)]
pub struct SceneBuilder {
    scene_id: String,
    next_id: u32,
    nodes: Vec<SceneNode>,
    edges: Vec<SceneEdge>,
    doors: Vec<Door>,
    occupancy_ref: String,
    root: NodeId,
}

impl SceneBuilder {
    pub fn new(scene_id: impl Into<String>) -> Self {
        let root = NodeId(0);
        Self {
            scene_id: scene_id.into(),
            next_id: 1,
            nodes: vec![SceneNode {
                id: root,
                kind: NodeKind::Root,
                label: String::new(),
                position: None,
                parent: None,
                affordances: BTreeSet::new(),
                room_category: None,
            }],
            edges: Vec::new(),
            doors: Vec::new(),
            occupancy_ref: String::new(),
            root,
        }
    }

    pub fn occupancy_ref(mut self, r: impl Into<String>) -> Self {
        self.occupancy_ref = r.into();
        self
    }

    fn push(
        &mut self,
        kind: NodeKind,
        parent: NodeId,
        label: &str,
        position: [f64; 3],
        affordances: &[Affordance],
        room_category: Option<String>,
    ) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        self.nodes.push(SceneNode {
            id,
            kind,
            label: label::normalize(label),
            position: Some(position),
            parent: Some(parent),
            affordances: affordances.iter().copied().collect(),
            room_category,
        });
        self.edges.push(SceneEdge { src: parent, dst: id, kind: EdgeKind::Contains });
        id
    }

    /// Adds a room whose label and category are both `category`.
    pub fn room(&mut self, category: &str, center: [f64; 2]) -> NodeId {
        let cat = label::normalize(category);
        self.push(NodeKind::Room, self.root, &cat, [center[0], center[1], 0.0], &[Affordance::Navigable], Some(cat.clone()))
    }

    /// Adds a region; its position is recomputed from its objects on build.
    pub fn region(&mut self, room: NodeId) -> NodeId {
        self.push(NodeKind::Region, room, "region", [0.0, 0.0, 0.0], &[Affordance::Navigable], None)
    }

    pub fn object(&mut self, region: NodeId, label: &str, xy: [f64; 2], affordances: &[Affordance]) -> NodeId {
        let mut aff = vec![Affordance::Navigable];
        aff.extend_from_slice(affordances);
        self.push(NodeKind::Object, region, label, [xy[0], xy[1], 0.5], &aff, None)
    }

    /// Convenience for an openable container.
    pub fn container(&mut self, region: NodeId, label: &str, xy: [f64; 2]) -> NodeId {
        self.object(region, label, xy, &[Affordance::Openable])
    }

    pub fn nested(&mut self, object: NodeId, label: &str, how: Nesting) -> NodeId {
        let pos = self
            .nodes
            .iter()
            .find(|n| n.id == object)
            .and_then(|n| n.position)
            .unwrap_or([0.0; 3]);
        let id = self.push(NodeKind::NestedObject, object, label, pos, &[Affordance::Navigable], None);
        let kind = match how {
            Nesting::OnTopOf => EdgeKind::OnTopOf,
            Nesting::Inside => EdgeKind::Inside,
        };
        self.edges.push(SceneEdge { src: object, dst: id, kind });
        id
    }

    pub fn door(&mut self, id: DoorId, a: NodeId, b: NodeId, midpoint: [f64; 2]) {
        self.doors.push(Door { id, midpoint, rooms: [a, b] });
        self.edges.push(SceneEdge { src: a, dst: b, kind: EdgeKind::ConnectsVia(id) });
        self.edges.push(SceneEdge { src: b, dst: a, kind: EdgeKind::ConnectsVia(id) });
    }

    pub fn build(mut self) -> SceneGraph {
        let mut members: BTreeMap<NodeId, Vec<[f64; 2]>> = BTreeMap::new();
        for n in &self.nodes {
            if n.kind == NodeKind::Object {
                if let (Some(p), Some(parent)) = (n.position, n.parent) {
                    members.entry(parent).or_default().push([p[0], p[1]]);
                }
            }
        }
        for n in self.nodes.iter_mut().filter(|n| n.kind == NodeKind::Region) {
            if let Some(pts) = members.get(&n.id) {
                let c = centroid(pts);
                n.position = Some([c[0], c[1], 0.0]);
            }
        }
        SceneGraph::from_parts(self.scene_id, self.nodes, self.edges, self.doors, self.occupancy_ref)
    }
}
