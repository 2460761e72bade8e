//! Deterministic simulator and algorithm library for Byzantine-robust
//! federated learning over long-tailed data.
//!
//! The centerpiece is a two-layer aggregation rule: a distance-based
//! filter (the multi-Krum selection step) followed by a think-tank vote in
//! which every participant tests the rejected candidates on its own test
//! shard and majority approval readmits them. FedAvg, multi-Krum,
//! coordinate-wise median, and trimmed mean ship as baselines, and a
//! simulation harness reproduces the MNIST tail-class experiment at desk
//! scale: a tail class held by few participants at a fraction of the head
//! volume, plus a label-flipping Byzantine node.
//!
//! Modules:
//! - [`params`]: flat parameter vectors and the arithmetic over them
//! - [`data`]: IDX loading, synthetic blobs, long-tail partitioning, shards
//! - [`training`]: softmax / one-hidden-layer models, SGD, evaluation
//! - [`aggregation`]: the two-layer rule and all baselines
//! - [`byzantine`]: data, model, and vote attacks
//! - [`sim`]: round orchestration and experiment records
//! - [`cli`]: config files, the `fedtank` binary, metrics emission

pub mod aggregation;
pub mod byzantine;
pub mod cli;
pub mod data;
pub mod error;
pub mod params;
pub mod seeding;
pub mod sim;
pub mod training;

pub use error::{Error, Result};
pub use params::ModelParams;
