//! Scene-graph extraction from annotated scenes: objects are assigned to room
//! polygons, rooms are linked through dilated door boxes, and each room's
//! objects are clustered into regions with a BIC-selected Gaussian mixture.

pub mod geometry;
pub mod gmm;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label;
use crate::occupancy::OccupancyGrid;
use crate::scene_graph::{
    centroid, Affordance, Door, DoorId, EdgeKind, NodeId, NodeKind, SceneEdge, SceneGraph, SceneNode,
};
use crate::seeds;
use geometry::{Point, Rect};
use gmm::{GmmConfig, GmmError};

pub use gmm::{fit_gmm, select_regions, GmmModel, RegionSelection};

pub type InstanceId = u32;
pub type RoomId = u32;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("annotated scene is invalid: {}", .0.join("; "))]
    InvalidScene(Vec<String>),
    #[error("room {room}: {source}")]
    Gmm { room: RoomId, source: GmmError },
    #[error("annotated scene parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NestRelation {
    OnTopOf,
    Inside,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedObject {
    pub instance: InstanceId,
    pub label: String,
    pub center: [f64; 3],
    #[serde(default)]
    pub affordances: Vec<Affordance>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomPolygon {
    pub room: RoomId,
    pub polygon: Vec<Point>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoorBox {
    pub door: DoorId,
    pub min: Point,
    pub max: Point,
}

impl DoorBox {
    pub fn rect(&self) -> Rect {
        Rect { min: self.min, max: self.max }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NestedEdge {
    pub parent: InstanceId,
    pub child: InstanceId,
    pub relation: NestRelation,
}

/// Annotated input scene. The occupancy grid travels beside the JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedScene {
    pub scene_id: String,
    pub objects: Vec<AnnotatedObject>,
    pub room_polygons: Vec<RoomPolygon>,
    pub door_boxes: Vec<DoorBox>,
    #[serde(default)]
    pub nested_edges: Vec<NestedEdge>,
    pub room_categories: BTreeMap<RoomId, String>,
    #[serde(skip)]
    pub occupancy: Option<OccupancyGrid>,
}

impl AnnotatedScene {
    pub fn from_json_str(text: &str) -> Result<Self, ExtractError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExtractError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("annotated scene serializes") + "\n"
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut ids = BTreeSet::new();
        for o in &self.objects {
            if !ids.insert(o.instance) {
                v.push(format!("object {}: duplicate instance id", o.instance));
            }
            if label::normalize(&o.label).is_empty() {
                v.push(format!("object {}: empty label", o.instance));
            }
        }
        let mut rooms = BTreeSet::new();
        for r in &self.room_polygons {
            if !rooms.insert(r.room) {
                v.push(format!("room {}: duplicate polygon", r.room));
            }
            if !geometry::is_simple(&r.polygon) {
                v.push(format!("room {}: polygon is not simple", r.room));
            }
            if !self.room_categories.contains_key(&r.room) {
                v.push(format!("room {}: no category", r.room));
            }
        }
        let mut parent_of = BTreeMap::new();
        for e in &self.nested_edges {
            for end in [e.parent, e.child] {
                if !ids.contains(&end) {
                    v.push(format!("nested edge {}->{}: unknown instance {end}", e.parent, e.child));
                }
            }
            if parent_of.insert(e.child, e.parent).is_some() {
                v.push(format!("object {}: nested under more than one parent", e.child));
            }
        }
        for e in &self.nested_edges {
            if parent_of.contains_key(&e.parent) {
                v.push(format!("nested edge {}->{}: parent is itself nested", e.parent, e.child));
            }
        }
        v
    }
}

#[derive(Clone, Debug)]
pub struct ExtractConfig {
    pub seed: u64,
    pub k_min: usize,
    pub k_max: usize,
    pub door_dilation: f64,
    pub gmm: GmmConfig,
    /// Written into the output scene's `occupancy_ref`.
    pub occupancy_ref: String,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self { seed: 0, k_min: 1, k_max: 5, door_dilation: 0.15, gmm: GmmConfig::default(), occupancy_ref: String::new() }
    }
}

/// Instance → room. Contained centers go to the lowest-id containing room;
/// others go to the room with the nearest polygon edge (ties → lower id).
pub fn assign_rooms(scene: &AnnotatedScene) -> BTreeMap<InstanceId, RoomId> {
    let mut polys: Vec<&RoomPolygon> = scene.room_polygons.iter().collect();
    polys.sort_by_key(|r| r.room);
    let mut out = BTreeMap::new();
    if polys.is_empty() {
        return out;
    }
    for o in &scene.objects {
        let p = [o.center[0], o.center[1]];
        let room = polys.iter().find(|r| geometry::contains(&r.polygon, p)).map(|r| r.room).unwrap_or_else(|| {
            let mut best = (f64::INFINITY, polys[0].room);
            for r in &polys {
                let d = geometry::boundary_distance(p, &r.polygon);
                if d < best.0 {
                    best = (d, r.room);
                }
            }
            best.1
        });
        out.insert(o.instance, room);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoomLink {
    pub a: RoomId,
    pub b: RoomId,
    pub door: DoorId,
}

#[derive(Clone, Debug, Default)]
pub struct Connectivity {
    pub links: Vec<RoomLink>,
    pub warnings: Vec<String>,
}

/// Every unordered pair of rooms touching a door box dilated by `dilation`
/// is linked through that door.
pub fn connect_rooms(scene: &AnnotatedScene, dilation: f64) -> Connectivity {
    let mut out = Connectivity::default();
    let mut doors: Vec<&DoorBox> = scene.door_boxes.iter().collect();
    doors.sort_by_key(|d| d.door);
    for d in doors {
        let rect = d.rect().dilate(dilation);
        let mut touching: Vec<RoomId> = scene
            .room_polygons
            .iter()
            .filter(|r| geometry::polygon_intersects_rect(&r.polygon, &rect))
            .map(|r| r.room)
            .collect();
        touching.sort();
        if touching.len() < 2 {
            out.warnings.push(format!("door {} touches {} room(s); no connection made", d.door, touching.len()));
            continue;
        }
        for i in 0..touching.len() {
            for j in i + 1..touching.len() {
                out.links.push(RoomLink { a: touching[i], b: touching[j], door: d.door });
            }
        }
    }
    out
}

#[derive(Debug)]
pub struct Extraction {
    pub graph: SceneGraph,
    pub warnings: Vec<String>,
}

struct RoomRegions {
    room: RoomId,
    /// Each region's member instances, ascending; regions ordered by their
    /// smallest member.
    regions: Vec<Vec<InstanceId>>,
}

fn cluster_room(
    room: RoomId,
    members: &[&AnnotatedObject],
    cfg: &ExtractConfig,
) -> Result<RoomRegions, ExtractError> {
    if members.is_empty() {
        return Ok(RoomRegions { room, regions: Vec::new() });
    }
    let pts: Vec<[f64; 2]> = members.iter().map(|o| [o.center[0], o.center[1]]).collect();
    let k_max = cfg.k_max.min(pts.len()).max(1);
    let k_min = cfg.k_min.clamp(1, k_max);
    let gcfg = GmmConfig { seed: seeds::mix(cfg.seed, room as u64), ..cfg.gmm.clone() };
    let sel = select_regions(&pts, k_min, k_max, &gcfg).map_err(|source| ExtractError::Gmm { room, source })?;
    let mut groups: BTreeMap<usize, Vec<InstanceId>> = BTreeMap::new();
    for (o, &a) in members.iter().zip(&sel.assignments) {
        groups.entry(a).or_default().push(o.instance);
    }
    let mut regions: Vec<Vec<InstanceId>> = groups
        .into_values()
        .map(|mut g| {
            g.sort();
            g
        })
        .collect();
    regions.sort_by_key(|g| g[0]);
    Ok(RoomRegions { room, regions })
}

/// Builds a validated-by-construction scene graph from annotations.
pub fn extract(scene: &AnnotatedScene, cfg: &ExtractConfig) -> Result<Extraction, ExtractError> {
    let problems = scene.validate();
    if !problems.is_empty() {
        return Err(ExtractError::InvalidScene(problems));
    }
    let mut warnings = Vec::new();
    let rooms_of = assign_rooms(scene);
    let nested_parent: BTreeMap<InstanceId, &NestedEdge> = scene.nested_edges.iter().map(|e| (e.child, e)).collect();
    let by_instance: BTreeMap<InstanceId, &AnnotatedObject> = scene.objects.iter().map(|o| (o.instance, o)).collect();

    let mut room_ids: Vec<RoomId> = scene.room_polygons.iter().map(|r| r.room).collect();
    room_ids.sort();
    let mut first_level: BTreeMap<RoomId, Vec<&AnnotatedObject>> = room_ids.iter().map(|&r| (r, Vec::new())).collect();
    for (inst, obj) in &by_instance {
        if nested_parent.contains_key(inst) {
            continue;
        }
        if let Some(r) = rooms_of.get(inst) {
            first_level.get_mut(r).expect("room exists").push(obj);
        }
    }

    let clustered: Vec<RoomRegions> = first_level
        .par_iter()
        .map(|(&room, members)| cluster_room(room, members, cfg))
        .collect::<Result<_, _>>()?;

    let mut children_of: BTreeMap<InstanceId, Vec<&NestedEdge>> = BTreeMap::new();
    for e in &scene.nested_edges {
        children_of.entry(e.parent).or_default().push(e);
    }
    for list in children_of.values_mut() {
        list.sort_by_key(|e| e.child);
    }

    let mut nodes = vec![SceneNode {
        id: NodeId(0),
        kind: NodeKind::Root,
        label: String::new(),
        position: None,
        parent: None,
        affordances: BTreeSet::new(),
        room_category: None,
    }];
    let mut edges = Vec::new();
    let mut next = 1u32;
    let mut alloc = || {
        let id = NodeId(next);
        next += 1;
        id
    };
    let mut room_node: BTreeMap<RoomId, NodeId> = BTreeMap::new();
    for poly in room_ids.iter().map(|r| scene.room_polygons.iter().find(|p| p.room == *r).unwrap()) {
        let id = alloc();
        let cat = label::normalize(&scene.room_categories[&poly.room]);
        let c = geometry::polygon_centroid(&poly.polygon);
        nodes.push(SceneNode {
            id,
            kind: NodeKind::Room,
            label: cat.clone(),
            position: Some([c[0], c[1], 0.0]),
            parent: Some(NodeId(0)),
            affordances: BTreeSet::from([Affordance::Navigable]),
            room_category: Some(cat),
        });
        edges.push(SceneEdge { src: NodeId(0), dst: id, kind: EdgeKind::Contains });
        room_node.insert(poly.room, id);
    }

    for rr in &clustered {
        let room_id = room_node[&rr.room];
        for members in &rr.regions {
            let region = alloc();
            let pts: Vec<[f64; 2]> = members.iter().map(|i| [by_instance[i].center[0], by_instance[i].center[1]]).collect();
            let c = centroid(&pts);
            nodes.push(SceneNode {
                id: region,
                kind: NodeKind::Region,
                label: "region".into(),
                position: Some([c[0], c[1], 0.0]),
                parent: Some(room_id),
                affordances: BTreeSet::from([Affordance::Navigable]),
                room_category: None,
            });
            edges.push(SceneEdge { src: room_id, dst: region, kind: EdgeKind::Contains });
            for inst in members {
                let obj = by_instance[inst];
                let id = alloc();
                let kids = children_of.get(inst).map(Vec::as_slice).unwrap_or(&[]);
                let mut aff: BTreeSet<Affordance> = obj.affordances.iter().copied().collect();
                aff.insert(Affordance::Navigable);
                for e in kids {
                    aff.insert(match e.relation {
                        NestRelation::Inside => Affordance::Openable,
                        NestRelation::OnTopOf => Affordance::Explorable,
                    });
                }
                nodes.push(SceneNode {
                    id,
                    kind: NodeKind::Object,
                    label: label::normalize(&obj.label),
                    position: Some(obj.center),
                    parent: Some(region),
                    affordances: aff,
                    room_category: None,
                });
                edges.push(SceneEdge { src: region, dst: id, kind: EdgeKind::Contains });
                for e in kids {
                    let child = by_instance[&e.child];
                    let cid = alloc();
                    nodes.push(SceneNode {
                        id: cid,
                        kind: NodeKind::NestedObject,
                        label: label::normalize(&child.label),
                        position: Some(child.center),
                        parent: Some(id),
                        affordances: BTreeSet::from([Affordance::Navigable]),
                        room_category: None,
                    });
                    edges.push(SceneEdge { src: id, dst: cid, kind: EdgeKind::Contains });
                    let kind = match e.relation {
                        NestRelation::Inside => EdgeKind::Inside,
                        NestRelation::OnTopOf => EdgeKind::OnTopOf,
                    };
                    edges.push(SceneEdge { src: id, dst: cid, kind });
                }
            }
        }
    }

    let conn = connect_rooms(scene, cfg.door_dilation);
    warnings.extend(conn.warnings);
    let door_boxes: BTreeMap<DoorId, &DoorBox> = scene.door_boxes.iter().map(|d| (d.door, d)).collect();
    let mut doors = Vec::new();
    for link in &conn.links {
        let (a, b) = (room_node[&link.a], room_node[&link.b]);
        doors.push(Door { id: link.door, midpoint: door_boxes[&link.door].rect().center(), rooms: [a, b] });
        edges.push(SceneEdge { src: a, dst: b, kind: EdgeKind::ConnectsVia(link.door) });
        edges.push(SceneEdge { src: b, dst: a, kind: EdgeKind::ConnectsVia(link.door) });
    }

    let mut graph = SceneGraph::from_parts(scene.scene_id.clone(), nodes, edges, doors, cfg.occupancy_ref.clone());
    if let Some(g) = &scene.occupancy {
        graph = graph.with_occupancy(g.clone());
    }
    for v in graph.validate() {
        warnings.push(format!("extracted scene: {v}"));
    }
    Ok(Extraction { graph, warnings })
}
