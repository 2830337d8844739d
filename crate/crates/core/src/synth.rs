//! Procedural benchmark suites with planted priors: multi-room houses on an
//! occupancy grid, target items hidden in containers, a ground-truth relation
//! table and an embedding table whose geometry only partly reflects it.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::embedding::{EmbeddingError, TableProvider};
use crate::env::EpisodeSpec;
use crate::forge::{ObjectList, OracleResponseSet};
use crate::label::normalize;
use crate::occupancy::{Cell, OccupancyGrid};
use crate::scene_graph::{Nesting, SceneBuilder, SceneGraph};
use crate::scoring::TableBackend;
use crate::seeds;

pub const ROOMS: [&str; 8] =
    ["kitchen", "bathroom", "bedroom", "living room", "office", "garage", "laundry room", "dining room"];

pub const CONTAINERS: [&str; 12] =
    ["cabinet", "drawer", "fridge", "wardrobe", "chest", "basket", "bin", "box", "crate", "locker", "cupboard", "trunk"];

const FILLERS: [&str; 8] = ["paper", "coin", "battery", "string", "rag", "button", "key", "envelope"];

/// (item, home room, home container)
pub const ITEMS: [(&str, &str, &str); 16] = [
    ("plate", "kitchen", "cupboard"),
    ("milk", "kitchen", "fridge"),
    ("toothpaste", "bathroom", "cabinet"),
    ("towel", "bathroom", "basket"),
    ("sock", "bedroom", "drawer"),
    ("jacket", "bedroom", "wardrobe"),
    ("remote", "living room", "drawer"),
    ("magazine", "living room", "basket"),
    ("stapler", "office", "drawer"),
    ("printer paper", "office", "cabinet"),
    ("wrench", "garage", "locker"),
    ("paint", "garage", "crate"),
    ("detergent", "laundry room", "cupboard"),
    ("clothespin", "laundry room", "bin"),
    ("napkin", "dining room", "drawer"),
    ("candle", "dining room", "chest"),
];

const HOME_CONTAIN: f64 = 0.9;
const AWAY_CONTAIN: f64 = 0.1;
const RESOLUTION: f64 = 0.25;
const ROOM_CELLS: usize = 24;

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub seed: u64,
    pub scenes: usize,
    pub episodes_per_scene: usize,
    /// Houses are `grid_rows × grid_cols` rooms.
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub regions_per_room: usize,
    pub containers_per_region: usize,
    pub n_max: usize,
    pub embed_dim: usize,
    /// Cosine between an item's embedding and its home room's.
    pub room_alignment: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scenes: 5,
            episodes_per_scene: 10,
            grid_rows: 2,
            grid_cols: 3,
            regions_per_room: 3,
            containers_per_region: 3,
            n_max: 12,
            embed_dim: 32,
            room_alignment: 0.5,
        }
    }
}

pub struct SynthSuite {
    pub scenes: Vec<SceneGraph>,
    pub episodes: Vec<EpisodeSpec>,
    /// Ground truth in response-set form (co-occurrence 0/1, containment 0.9/0.1).
    pub responses: OracleResponseSet,
    pub embeddings: TableProvider,
}

impl SynthSuite {
    /// Exact lookups of the planted relations.
    pub fn table_backend(&self) -> TableBackend {
        table_from_responses(&self.responses)
    }
}

/// Table backend over recorded responses; unlisted pairs score 0.
pub fn table_from_responses(r: &OracleResponseSet) -> TableBackend {
    let mut t = TableBackend::new().with_fallback(0.0);
    for (q, answers) in &r.contain {
        for (room, p) in answers {
            t = t.with_contain(room, q, *p);
        }
    }
    for (q, answers) in &r.cooccur {
        for (o, p) in answers {
            t = t.with_cooccur(o, q, *p);
        }
    }
    t
}

fn home_of(item: &str) -> (&'static str, &'static str) {
    let (_, room, container) = ITEMS.iter().find(|(i, _, _)| *i == item).expect("known item");
    (room, container)
}

pub fn planted_responses() -> OracleResponseSet {
    let mut r = OracleResponseSet { rooms: ROOMS.iter().map(|s| s.to_string()).collect(), ..Default::default() };
    for room in ROOMS {
        let items: Vec<String> = ITEMS.iter().filter(|(_, h, _)| *h == room).map(|(i, _, _)| i.to_string()).collect();
        r.categories.insert(room.into(), vec!["storage".into(), "items".into()]);
        r.objects.push(ObjectList { room: room.into(), category: "storage".into(), objects: CONTAINERS.iter().map(|c| c.to_string()).collect() });
        r.objects.push(ObjectList { room: room.into(), category: "items".into(), objects: items });
    }
    for (item, home_room, home_container) in ITEMS {
        r.contain.insert(
            item.into(),
            ROOMS.iter().map(|room| (room.to_string(), if *room == home_room { HOME_CONTAIN } else { AWAY_CONTAIN })).collect(),
        );
        r.cooccur.insert(
            item.into(),
            CONTAINERS.iter().map(|c| (c.to_string(), if *c == home_container { 1.0 } else { 0.0 })).collect(),
        );
    }
    r
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn gaussian(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    unit((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
}

/// Random unit vectors for every label, except that each item leans towards
/// its home room by `alignment` and is unrelated to its home container.
pub fn semantic_embeddings(seed: u64, dim: usize, alignment: f64) -> Result<TableProvider, EmbeddingError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for label in ROOMS.iter().chain(&CONTAINERS).chain(&FILLERS).chain(["table", "chair", "lamp"].iter()) {
        table.insert(normalize(label), gaussian(&mut rng, dim));
    }
    for (item, room, _) in ITEMS {
        let r = &table[&normalize(room)];
        let noise = gaussian(&mut rng, dim);
        // Remove the room direction so the cosine is exactly `alignment`.
        let dot: f64 = noise.iter().zip(r).map(|(a, b)| a * b).sum();
        let ortho = unit(noise.iter().zip(r).map(|(a, b)| a - dot * b).collect());
        let s = (1.0 - alignment * alignment).max(0.0).sqrt();
        table.insert(normalize(item), r.iter().zip(&ortho).map(|(a, b)| alignment * a + s * b).collect());
    }
    TableProvider::from_entries(dim, table)
}

/// Grid coordinates (row, col) of a room.
type RoomCell = (usize, usize);

fn house_grid(rows: usize, cols: usize, doors: &[(RoomCell, RoomCell)]) -> OccupancyGrid {
    let (h, w) = (rows * ROOM_CELLS + 1, cols * ROOM_CELLS + 1);
    let mut grid = OccupancyGrid::free(RESOLUTION, [0.0, 0.0], w, h).expect("valid grid");
    for r in 0..h {
        for c in 0..w {
            if r % ROOM_CELLS == 0 || c % ROOM_CELLS == 0 {
                grid.set(Cell::new(r, c), true);
            }
        }
    }
    let half = ROOM_CELLS / 2;
    for &((r0, c0), (r1, c1)) in doors {
        for k in half - 2..half + 2 {
            let cell = if r0 == r1 {
                Cell::new(r0 * ROOM_CELLS + k, c0.max(c1) * ROOM_CELLS)
            } else {
                Cell::new(r0.max(r1) * ROOM_CELLS, c0 * ROOM_CELLS + k)
            };
            grid.set(cell, false);
        }
    }
    grid
}

fn door_midpoint((r0, c0): (usize, usize), (r1, c1): (usize, usize)) -> [f64; 2] {
    let room = ROOM_CELLS as f64 * RESOLUTION;
    let wall = RESOLUTION / 2.0;
    if r0 == r1 {
        [c0.max(c1) as f64 * room + wall, (r0 as f64 + 0.5) * room]
    } else {
        [(c0 as f64 + 0.5) * room, r0.max(r1) as f64 * room + wall]
    }
}

/// Region anchors relative to the room's corner, kept within reach of each
/// other so frontiers see neighbouring objects.
fn region_anchor(i: usize, n: usize) -> [f64; 2] {
    let room = ROOM_CELLS as f64 * RESOLUTION;
    let angle = std::f64::consts::TAU * i as f64 / n.max(1) as f64;
    let r = if n == 1 { 0.0 } else { 1.3 };
    [room / 2.0 + r * angle.cos(), room / 2.0 + r * angle.sin()]
}

const CONTAINER_OFFSETS: [[f64; 2]; 4] = [[-0.6, -0.4], [0.6, -0.4], [0.0, 0.6], [0.0, -0.9]];

fn build_scene(cfg: &SynthConfig, index: usize, rng: &mut ChaCha8Rng) -> (SceneGraph, Vec<EpisodeSpec>) {
    let id = format!("synth_{index:02}");
    let n_rooms = cfg.grid_rows * cfg.grid_cols;
    let mut cats: Vec<&str> = ROOMS.to_vec();
    cats.shuffle(rng);
    cats.truncate(n_rooms.min(ROOMS.len()));
    let n_rooms = cats.len();

    let mut items: Vec<&str> = ITEMS.iter().filter(|(_, h, _)| cats.contains(h)).map(|(i, _, _)| *i).collect();
    items.shuffle(rng);
    items.truncate(cfg.episodes_per_scene);

    let mut b = SceneBuilder::new(&id).occupancy_ref(format!("{id}.occ"));
    let room_size = ROOM_CELLS as f64 * RESOLUTION;
    let per_room = cfg.regions_per_room * cfg.containers_per_region.min(CONTAINER_OFFSETS.len());
    let mut goals = BTreeMap::new();
    let mut room_ids = Vec::new();
    for (k, cat) in cats.iter().enumerate() {
        let (gr, gc) = (k / cfg.grid_cols, k % cfg.grid_cols);
        let corner = [gc as f64 * room_size, gr as f64 * room_size];
        let room = b.room(cat, [corner[0] + room_size / 2.0, corner[1] + room_size / 2.0]);
        room_ids.push(room);

        // Every homed item's container must exist here; the rest are drawn.
        let mine: Vec<&str> = items.iter().copied().filter(|i| home_of(i).0 == *cat).collect();
        let mut labels: Vec<&str> = Vec::new();
        for i in &mine {
            let c = home_of(i).1;
            if !labels.contains(&c) {
                labels.push(c);
            }
        }
        let mut pool: Vec<&str> = CONTAINERS.iter().copied().filter(|c| !labels.contains(c)).collect();
        pool.shuffle(rng);
        labels.extend(pool.into_iter().take(per_room.saturating_sub(labels.len())));
        labels.shuffle(rng);

        let mut slot = 0;
        for r in 0..cfg.regions_per_room {
            let region = b.region(room);
            let a = region_anchor(r, cfg.regions_per_room);
            for off in CONTAINER_OFFSETS.iter().take(cfg.containers_per_region) {
                let Some(label) = labels.get(slot) else { break };
                slot += 1;
                let xy = [corner[0] + a[0] + off[0], corner[1] + a[1] + off[1]];
                let obj = b.container(region, label, xy);
                let homed: Vec<&str> = mine.iter().copied().filter(|i| home_of(i).1 == *label).collect();
                if homed.is_empty() {
                    b.nested(obj, FILLERS[rng.gen_range(0..FILLERS.len())], Nesting::Inside);
                }
                for item in homed {
                    goals.insert(item, b.nested(obj, item, Nesting::Inside));
                }
            }
        }
    }

    // Doors along a spanning tree of the room grid, plus each remaining
    // adjacency with probability one half.
    let cell = |k: usize| (k / cfg.grid_cols, k % cfg.grid_cols);
    let mut adj: Vec<(usize, usize)> = Vec::new();
    for k in 0..n_rooms {
        let (r, c) = cell(k);
        if c + 1 < cfg.grid_cols && k + 1 < n_rooms {
            adj.push((k, k + 1));
        }
        if r + 1 < cfg.grid_rows && k + cfg.grid_cols < n_rooms {
            adj.push((k, k + cfg.grid_cols));
        }
    }
    adj.shuffle(rng);
    let mut comp: Vec<usize> = (0..n_rooms).collect();
    fn find(comp: &mut [usize], x: usize) -> usize {
        if comp[x] != x {
            let r = find(comp, comp[x]);
            comp[x] = r;
        }
        comp[x]
    }
    let mut doors = Vec::new();
    for (a, b2) in adj {
        let (ra, rb) = (find(&mut comp, a), find(&mut comp, b2));
        if ra != rb {
            comp[ra] = rb;
            doors.push((a, b2));
        } else if rng.gen_bool(0.5) {
            doors.push((a, b2));
        }
    }
    doors.sort();
    for (n, &(a, c)) in doors.iter().enumerate() {
        b.door(n as u32 + 1, room_ids[a], room_ids[c], door_midpoint(cell(a), cell(c)));
    }
    let grid = house_grid(cfg.grid_rows, cfg.grid_cols, &doors.iter().map(|&(a, c)| (cell(a), cell(c))).collect::<Vec<_>>());
    let scene = b.build().with_occupancy(grid);

    let episodes = items
        .iter()
        .enumerate()
        .map(|(e, item)| EpisodeSpec {
            id: format!("{id}_{e:02}"),
            scene_id: id.clone(),
            goal: goals[item],
            query: item.to_string(),
            spawn_seed: seeds::mix(seeds::mix(cfg.seed, index as u64), e as u64),
            n_max: cfg.n_max,
            interactive: true,
        })
        .collect();
    (scene, episodes)
}

pub fn synth_suite(cfg: &SynthConfig) -> Result<SynthSuite, EmbeddingError> {
    let mut scenes = Vec::new();
    let mut episodes = Vec::new();
    for i in 0..cfg.scenes {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(cfg.seed, i as u64));
        let (s, e) = build_scene(cfg, i, &mut rng);
        scenes.push(s);
        episodes.extend(e);
    }
    let embeddings = semantic_embeddings(seeds::mix(cfg.seed, u64::MAX), cfg.embed_dim, cfg.room_alignment)?;
    Ok(SynthSuite { scenes, episodes, responses: planted_responses(), embeddings })
}

/// Labels used by the synthetic suite.
pub fn vocabulary() -> BTreeSet<String> {
    ROOMS
        .iter()
        .chain(&CONTAINERS)
        .chain(&FILLERS)
        .map(|s| normalize(s))
        .chain(ITEMS.iter().map(|(i, _, _)| normalize(i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{cosine, EmbeddingProvider};
    use crate::env::{shortest_solution, DEFAULT_SEARCH_CAP};
    use crate::geodesics::Geodesics;
    use crate::scene_graph::NodeKind;

    #[test]
    fn suite_shape_and_validity() {
        let suite = synth_suite(&SynthConfig::default()).unwrap();
        assert_eq!(suite.scenes.len(), 5);
        assert_eq!(suite.episodes.len(), 50);
        for s in &suite.scenes {
            assert!(s.validate().is_empty(), "{:?}", s.validate());
            assert_eq!(s.rooms().count(), 6);
        }
        for e in &suite.episodes {
            let s = suite.scenes.iter().find(|s| s.scene_id() == e.scene_id).unwrap();
            let goal = s.node(e.goal).unwrap();
            assert_eq!(goal.kind, NodeKind::NestedObject);
            assert_eq!(goal.label, e.query);
            let (home_room, home_container) = home_of(&e.query);
            assert_eq!(s.node(goal.parent.unwrap()).unwrap().label, home_container);
            let room = s.ancestor_of_kind(e.goal, NodeKind::Room).unwrap();
            assert_eq!(s.node(room).unwrap().label, home_room);
        }
    }

    #[test]
    fn deterministic() {
        let a = synth_suite(&SynthConfig::default()).unwrap();
        let b = synth_suite(&SynthConfig::default()).unwrap();
        assert_eq!(a.scenes, b.scenes);
        assert_eq!(a.episodes, b.episodes);
        assert_eq!(a.embeddings.to_text(), b.embeddings.to_text());
    }

    #[test]
    fn rooms_connected_through_doors() {
        let suite = synth_suite(&SynthConfig::default()).unwrap();
        for s in &suite.scenes {
            let geo = Geodesics::for_scene(s, 0.2);
            let centers: Vec<[f64; 2]> = s.rooms().map(|r| r.xy().unwrap()).collect();
            for c in &centers[1..] {
                let d = geo.distance(centers[0], *c).unwrap().unwrap();
                let straight = ((c[0] - centers[0][0]).powi(2) + (c[1] - centers[0][1]).powi(2)).sqrt();
                assert!(d >= straight - 1e-9);
            }
        }
    }

    #[test]
    fn every_episode_solvable() {
        let suite = synth_suite(&SynthConfig { scenes: 2, ..Default::default() }).unwrap();
        for e in &suite.episodes {
            let s = suite.scenes.iter().find(|s| s.scene_id() == e.scene_id).unwrap();
            let geo = Geodesics::for_scene(s, 0.2);
            let sol = shortest_solution(s, &geo, e, DEFAULT_SEARCH_CAP).unwrap();
            assert!(sol.steps <= e.n_max, "{} needs {}", e.id, sol.steps);
        }
    }

    #[test]
    fn embedding_alignment() {
        let t = semantic_embeddings(3, 32, 0.7).unwrap();
        let c = cosine(&t.embed("sock").unwrap(), &t.embed("bedroom").unwrap()).unwrap();
        assert!((c - 0.7).abs() < 1e-9);
    }

    #[test]
    fn planted_table() {
        let t = planted_responses();
        let b = table_from_responses(&t);
        use crate::scoring::ScorerBackend;
        assert_eq!(b.score_room("bedroom", "sock").unwrap(), HOME_CONTAIN);
        assert_eq!(b.score_room("garage", "sock").unwrap(), AWAY_CONTAIN);
        assert_eq!(b.score_object("drawer", "sock").unwrap(), 1.0);
        assert_eq!(b.score_object("fridge", "sock").unwrap(), 0.0);
    }
}
