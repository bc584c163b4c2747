//! Synthetic GUI dynamics data engine.
//!
//! Generates GUI environments as state-transition graphs, harvests
//! transitions with a random-walk fleet, filters them through structural,
//! visual and semantic stages, and turns the survivors into dynamics training
//! samples and evaluation sets. Also scores agent action predictions.

pub mod action;
pub mod corpus;
pub mod dedup;
pub mod env;
pub mod eval;
pub mod explore;
pub mod hashing;
pub mod jsonl;
pub mod par;
pub mod pipeline;
pub mod raster;
pub mod remote;
pub mod semantic;
pub mod shards;
pub mod synth;
pub mod unionfind;
