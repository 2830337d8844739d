use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use symsearch::occupancy::{Cell, OccupancyGrid};
use symsearch::SceneGraph;

fn symsearch(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_symsearch")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = symsearch(args, cwd);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const TWO_ROOMS: &str = r#"{
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

#[test]
fn extract_writes_a_loadable_scene() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("in");
    fs::create_dir(&src).unwrap();
    fs::write(src.join("flat.ann.json"), TWO_ROOMS).unwrap();
    let mut grid = OccupancyGrid::free(0.25, [0.0, 0.0], 32, 16).unwrap();
    for row in 0..16 {
        if !(6..10).contains(&row) {
            grid.set(Cell::new(row, 16), true);
        }
    }
    grid.save(src.join("flat.occ")).unwrap();

    fs::create_dir(dir.path().join("out")).unwrap();
    let args = ["extract", "--in", "in/flat.ann.json", "--occ", "in/flat.occ", "--out", "out/flat.json", "--seed", "1", "--kmax", "3", "--door-dilation", "0.2"];
    ok(&args, dir.path());
    let g = SceneGraph::load(dir.path().join("out/flat.json")).unwrap();
    assert_eq!(g.scene_id(), "flat");
    assert_eq!(g.doors().len(), 1);
    assert!(g.occupancy().is_some(), "grid copied beside the scene");
}

#[test]
fn forge_train_and_run_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth-suite", "--out", "suite", "--seed", "3", "--scenes", "2", "--episodes-per-scene", "4"], d);
    ok(&["forge", "--responses", "suite/responses.json", "--out-cooccur", "co.tsv", "--out-contain", "ct.tsv", "--seed", "2"], d);
    assert!(fs::read_to_string(d.join("co.tsv")).unwrap().starts_with("text_a\ttext_b\tlabel\tsplit\n"));
    for (rel, data, out) in [("cooccur", "co.tsv", "co.bin"), ("contain", "ct.tsv", "ct.bin")] {
        ok(&["train-priors", "--relation", rel, "--data", data, "--embeddings", "suite/embeddings.txt", "--out", out, "--seed", "4", "--epochs", "20"], d);
    }

    let run = [
        "run", "--scenes", "suite/scenes", "--episodes", "suite/episodes.json",
        "--agents", "scout:delta=0.1,random,similarity:preset=hash,scout:backend=table",
        "--seeds", "2", "--out", "results",
        "--embeddings", "suite/embeddings.txt", "--contain", "ct.bin", "--cooccur", "co.bin", "--table", "suite/responses.json",
    ];
    ok(&run, d);
    let records = fs::read_to_string(d.join("results/records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 8 * 4 * 2);
    let curve = fs::read_to_string(d.join("results/sr_curve.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("step,agent,fraction"));
    let summary = fs::read_to_string(d.join("results/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);

    // same inputs, same bytes
    let again = run.map(|a| if a == "results" { "again" } else { a });
    ok(&again, d);
    assert_eq!(records, fs::read_to_string(d.join("again/records.jsonl")).unwrap());
}

#[test]
fn forge_synth_generates_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["forge", "--synth", "7,3,12", "--out-cooccur", "co.tsv", "--out-contain", "ct.tsv", "--out-responses", "r.json"], dir.path());
    assert!(stdout.contains("contain: 36 rows"), "{stdout}");
    assert!(dir.path().join("r.json").exists());
    assert!(!symsearch(&["forge", "--synth", "7,3", "--out-cooccur", "x.tsv"], dir.path()).status.success());
}

#[test]
fn run_rejects_agents_without_their_backend() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth-suite", "--out", "suite", "--scenes", "1", "--episodes-per-scene", "1"], d);
    let out = symsearch(&["run", "--scenes", "suite/scenes", "--episodes", "suite/episodes.json", "--agents", "scout", "--out", "r"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learned backend"));
}
