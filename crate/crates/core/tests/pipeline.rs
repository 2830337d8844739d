use std::sync::Arc;

use symsearch::embedding::HashProvider;
use symsearch::extraction::{extract, AnnotatedScene, ExtractConfig};
use symsearch::forge::{build_contain_dataset, build_cooccur_dataset, build_household_set, synth_oracle};
use symsearch::harness::{run_suite, scene_set, write_outputs, SuiteConfig};
use symsearch::occupancy::{Cell, OccupancyGrid};
use symsearch::relational::{Relation, TrainConfig};
use symsearch::scoring::{LearnedBackend, ScorerBackend, TableBackend};
use symsearch::{Agent, Backends, EmbeddingProvider, EpisodeSpec, Mlp, NodeKind, SceneGraph};

const FLAT: &str = r#"{
  "scene_id": "flat",
  "objects": [
    {"instance": 1, "label": "fridge", "center": [1.0, 1.0, 0.0], "affordances": ["openable"]},
    {"instance": 2, "label": "counter", "center": [1.2, 3.0, 0.0]},
    {"instance": 3, "label": "milk", "center": [1.0, 1.0, 1.0]},
    {"instance": 4, "label": "bed", "center": [6.0, 2.0, 0.0]},
    {"instance": 5, "label": "nightstand", "center": [7.0, 3.0, 0.0], "affordances": ["openable"]}
  ],
  "room_polygons": [
    {"room": 0, "polygon": [[0, 0], [4, 0], [4, 4], [0, 4]]},
    {"room": 1, "polygon": [[4, 0], [8, 0], [8, 4], [4, 4]]}
  ],
  "door_boxes": [{"door": 0, "min": [3.9, 1.5], "max": [4.1, 2.5]}],
  "nested_edges": [{"parent": 1, "child": 3, "relation": "inside"}],
  "room_categories": {"0": "kitchen", "1": "bedroom"}
}"#;

fn flat() -> SceneGraph {
    let mut ann = AnnotatedScene::from_json_str(FLAT).unwrap();
    // wall between the rooms with a 1 m gap at the door
    let mut grid = OccupancyGrid::free(0.25, [0.0, 0.0], 33, 17).unwrap();
    for row in 0..17 {
        if !(6..10).contains(&row) {
            grid.set(Cell::new(row, 16), true);
        }
    }
    ann.occupancy = Some(grid);
    extract(&ann, &ExtractConfig { seed: 4, k_max: 3, occupancy_ref: "flat.occ".into(), ..Default::default() }).unwrap().graph
}

fn node(g: &SceneGraph, label: &str) -> symsearch::NodeId {
    g.nodes().values().find(|n| n.label == label).map(|n| n.id).unwrap()
}

#[test]
fn extracted_scene_survives_a_disk_round_trip() {
    let g = flat();
    let dir = tempfile::tempdir().unwrap();
    g.save(dir.path().join("flat.json")).unwrap();
    g.occupancy().unwrap().save(dir.path().join("flat.occ")).unwrap();
    let back = SceneGraph::load(dir.path().join("flat.json")).unwrap();
    assert_eq!(back, g);
    assert_eq!(back.occupancy().map(|o| o.free_count()), g.occupancy().map(|o| o.free_count()));
    let milk = back.node(node(&back, "milk")).unwrap();
    assert_eq!(milk.kind, NodeKind::NestedObject);
    assert_eq!(milk.parent, Some(node(&back, "fridge")));
}

#[test]
fn informed_agent_finds_hidden_goal_through_the_whole_stack() {
    let g = flat();
    let goal = node(&g, "milk");
    let scenes = scene_set([g], 0.1).unwrap();
    let episodes: Vec<EpisodeSpec> = (0..4)
        .map(|i| EpisodeSpec {
            id: format!("milk_{i}"),
            scene_id: "flat".into(),
            goal,
            query: "milk".into(),
            spawn_seed: i,
            n_max: 8,
            interactive: true,
        })
        .collect();
    let table = TableBackend::new().with_contain("kitchen", "milk", 0.9).with_contain("bedroom", "milk", 0.1).with_cooccur("fridge", "milk", 1.0).with_fallback(0.0);
    let backends = Backends { table: Some(Arc::new(table)), ..Default::default() };
    let agents = Agent::parse_list("scout:backend=table,random").unwrap();
    let res = run_suite(&scenes, &episodes, &agents, &backends, &SuiteConfig { seeds: vec![0, 1, 2], ..Default::default() }).unwrap();

    let scout = res.report.agent("scout:backend=table").unwrap();
    assert_eq!(scout.sr_mean, 1.0);
    assert_eq!(scout.errors, 0);
    for s in &res.report.agents {
        assert!(s.spl_mean <= s.sr_mean + 1e-12);
    }
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&res, dir.path()).unwrap();
    let jsonl = std::fs::read_to_string(dir.path().join("records.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 2 * 4 * 3);
}

#[test]
fn trained_priors_rank_planted_relations() {
    let (responses, world) = synth_oracle(9, 3, 12).unwrap();
    let household = build_household_set(&responses);
    let provider: Arc<dyn EmbeddingProvider> = Arc::new(HashProvider::new(2, 16));
    let fit = |relation: Relation| {
        let forged = match relation {
            Relation::CoOccur => build_cooccur_dataset(&responses, &household, 1),
            Relation::Contain => build_contain_dataset(&responses, &household, 1),
        }
        .unwrap();
        let (mut tr, va) = forged.dataset.embed::<f64>(provider.as_ref()).unwrap();
        tr.extend(va);
        let mut m = Mlp::new(relation, provider.dim(), &[32, 16], 3).with_fingerprint(provider.fingerprint());
        m.train(&tr, &[], &TrainConfig { learning_rate: 0.05, max_epochs: 300, ..Default::default() }).unwrap();
        m
    };
    let backend = LearnedBackend::new(provider.clone(), fit(Relation::Contain), fit(Relation::CoOccur)).unwrap();
    for o in &world.objects {
        let home = &world.home[o];
        let at_home = backend.score_room(home, o).unwrap();
        for r in world.rooms.iter().filter(|r| *r != home) {
            assert!(at_home > backend.score_room(r, o).unwrap(), "{o}: {home} vs {r}");
        }
    }
}
