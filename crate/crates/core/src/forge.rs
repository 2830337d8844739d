//! Relational datasets from recorded oracle responses, plus a synthetic
//! oracle with a planted ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::normalize;
use crate::relational::{Relation, RelationalDataset, Row, Split};

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("{relation} label {label} for ({a}, {q}) is out of range")]
    LabelRange { relation: Relation, a: String, q: String, label: f64 },
    #[error("conflicting labels {first} and {second} for pair ({a}, {q})")]
    Conflict { a: String, q: String, first: f64, second: f64 },
    #[error("synthetic oracle needs at least one room and one object")]
    EmptyWorld,
    #[error("responses: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectList {
    pub room: String,
    pub category: String,
    pub objects: Vec<String>,
}

/// Recorded answers of the Household → Rooms → Categories → Objects
/// prompting hierarchy and the two relation queries.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleResponseSet {
    pub rooms: Vec<String>,
    #[serde(default)]
    pub categories: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub objects: Vec<ObjectList>,
    /// query → (object, 0/1)
    #[serde(default)]
    pub cooccur: BTreeMap<String, Vec<(String, f64)>>,
    /// query → (room, score in [0,1])
    #[serde(default)]
    pub contain: BTreeMap<String, Vec<(String, f64)>>,
}

impl OracleResponseSet {
    pub fn from_json_str(s: &str) -> Result<Self, ForgeError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("response set serializes");
        s.push('\n');
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ForgeError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ForgeError> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

pub type HouseholdSet = BTreeSet<String>;

/// Union of all listed objects after normalization.
pub fn build_household_set(responses: &OracleResponseSet) -> HouseholdSet {
    responses
        .objects
        .iter()
        .flat_map(|l| l.objects.iter())
        .map(|o| normalize(o))
        .filter(|o| !o.is_empty())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forged {
    pub dataset: RelationalDataset,
    /// Labels referenced by the responses but missing from the household set.
    pub warnings: Vec<String>,
}

pub fn build_cooccur_dataset(responses: &OracleResponseSet, household: &HouseholdSet, seed: u64) -> Result<Forged, ForgeError> {
    let mut warnings = Vec::new();
    let mut pairs = Vec::new();
    for (q, answers) in &responses.cooccur {
        let q = normalize(q);
        if !household.contains(&q) {
            warnings.push(format!("query {q:?} is not in the household set"));
        }
        for (o, y) in answers {
            let o = normalize(o);
            if !household.contains(&o) {
                warnings.push(format!("object {o:?} (query {q:?}) is not in the household set"));
            }
            if *y != 0.0 && *y != 1.0 {
                return Err(ForgeError::LabelRange { relation: Relation::CoOccur, a: o, q, label: *y });
            }
            pairs.push((o, q.clone(), *y));
        }
    }
    Ok(Forged { dataset: assemble(Relation::CoOccur, pairs, seed)?, warnings })
}

pub fn build_contain_dataset(responses: &OracleResponseSet, household: &HouseholdSet, seed: u64) -> Result<Forged, ForgeError> {
    let rooms: BTreeSet<String> = responses.rooms.iter().map(|r| normalize(r)).collect();
    let mut warnings = Vec::new();
    let mut pairs = Vec::new();
    for (q, answers) in &responses.contain {
        let q = normalize(q);
        if !household.contains(&q) {
            warnings.push(format!("query {q:?} is not in the household set"));
        }
        for (r, y) in answers {
            let r = normalize(r);
            if !rooms.contains(&r) {
                warnings.push(format!("room {r:?} (query {q:?}) is not a listed room"));
            }
            if !(0.0..=1.0).contains(y) {
                return Err(ForgeError::LabelRange { relation: Relation::Contain, a: r, q, label: *y });
            }
            pairs.push((r, q.clone(), *y));
        }
    }
    Ok(Forged { dataset: assemble(Relation::Contain, pairs, seed)?, warnings })
}

/// Dedups pairs, sorts them canonically and tags a seeded 90/10 split.
fn assemble(relation: Relation, pairs: Vec<(String, String, f64)>, seed: u64) -> Result<RelationalDataset, ForgeError> {
    let mut unique: BTreeMap<(String, String), f64> = BTreeMap::new();
    for (a, q, y) in pairs {
        match unique.get(&(a.clone(), q.clone())) {
            Some(&prev) if prev != y => return Err(ForgeError::Conflict { a, q, first: prev, second: y }),
            Some(_) => {}
            None => {
                unique.insert((a, q), y);
            }
        }
    }
    let n = unique.len();
    let n_val = (n as f64 * 0.1).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val: BTreeSet<usize> = order[..n_val].iter().copied().collect();
    let rows = unique
        .into_iter()
        .enumerate()
        .map(|(i, ((text_a, text_b), label))| Row {
            text_a,
            text_b,
            label,
            split: if val.contains(&i) { Split::Val } else { Split::Train },
        })
        .collect();
    Ok(RelationalDataset { relation, rows })
}

/// Ground truth behind [`synth_oracle`]: every object lives in one home room.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedWorld {
    pub rooms: Vec<String>,
    pub objects: Vec<String>,
    pub home: BTreeMap<String, String>,
    /// (room, object) → containment probability.
    pub contain: BTreeMap<(String, String), f64>,
}

impl PlantedWorld {
    pub fn contain(&self, room: &str, object: &str) -> Option<f64> {
        self.contain.get(&(normalize(room), normalize(object))).copied()
    }

    /// 1 when both objects share a home room (so every object co-occurs with itself).
    pub fn cooccur(&self, a: &str, b: &str) -> Option<f64> {
        let (ha, hb) = (self.home.get(&normalize(a))?, self.home.get(&normalize(b))?);
        Some(if ha == hb { 1.0 } else { 0.0 })
    }
}

pub fn synth_oracle(seed: u64, n_rooms: usize, n_objects: usize) -> Result<(OracleResponseSet, PlantedWorld), ForgeError> {
    if n_rooms == 0 || n_objects == 0 {
        return Err(ForgeError::EmptyWorld);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rooms: Vec<String> = (0..n_rooms).map(|i| format!("room{i:02}")).collect();
    let objects: Vec<String> = (0..n_objects).map(|j| format!("obj{j:03}")).collect();
    // round-robin then shuffle so every room gets objects when possible
    let mut homes: Vec<usize> = (0..n_objects).map(|j| j % n_rooms).collect();
    homes.shuffle(&mut rng);
    let home: BTreeMap<String, String> = objects.iter().zip(&homes).map(|(o, &h)| (o.clone(), rooms[h].clone())).collect();

    let mut contain = BTreeMap::new();
    for o in &objects {
        for r in &rooms {
            let p = if home[o] == *r { rng.gen_range(0.8..=1.0) } else { rng.gen_range(0.0..0.3) };
            // two decimals, like recorded oracle answers
            contain.insert((r.clone(), o.clone()), (p * 100.0f64).round() / 100.0);
        }
    }
    let world = PlantedWorld { rooms: rooms.clone(), objects: objects.clone(), home, contain };

    let mut responses = OracleResponseSet { rooms: rooms.clone(), ..Default::default() };
    for r in &rooms {
        let category = format!("{r} things");
        responses.categories.insert(r.clone(), vec![category.clone()]);
        let listed = objects.iter().filter(|o| world.home[*o] == *r).cloned().collect();
        responses.objects.push(ObjectList { room: r.clone(), category, objects: listed });
    }
    for q in &objects {
        let co = objects.iter().filter(|o| *o != q).map(|o| (o.clone(), world.cooccur(o, q).unwrap())).collect();
        responses.cooccur.insert(q.clone(), co);
        let ct = rooms.iter().map(|r| (r.clone(), world.contain[&(r.clone(), q.clone())])).collect();
        responses.contain.insert(q.clone(), ct);
    }
    Ok((responses, world))
}
