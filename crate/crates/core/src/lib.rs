// `!(x > 0.0)` is the idiom here for rejecting NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod embedding;
pub mod env;
pub mod extraction;
pub mod forge;
pub mod geodesics;
pub mod harness;
pub mod label;
pub mod num;
pub mod occupancy;
pub mod policy;
pub mod relational;
pub mod scene_graph;
pub mod scoring;
pub mod seeds;
pub mod synth;

pub use embedding::{EmbeddingProvider, HashProvider, TableProvider};
pub use env::{Env, EpisodeSpec, Observation};
pub use occupancy::OccupancyGrid;
pub use policy::{Agent, Backends, EpisodeRecord};
pub use scene_graph::{NodeId, NodeKind, SceneGraph};
pub use scoring::ScoringConfig;

/// Double-precision instantiations of the scalar-generic types.
pub type Embedding = embedding::Embedding<f64>;
pub type Mlp = relational::Mlp<f64>;
pub type GmmModel = extraction::GmmModel<f64>;
pub type Sample = relational::Sample<f64>;
