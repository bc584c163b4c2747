//! Near-duplicate removal stages.
//!
//! Both stages cluster transitions with union-find and keep one
//! representative per cluster: the highest `source_priority`, ties broken by
//! the smallest `transition_id`. Survivors keep corpus order.

pub mod imagehash;
pub mod structural;
pub mod visual;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::EnvError;
use crate::explore::Transition;
use crate::unionfind::UnionFind;

#[derive(Debug, Error)]
pub enum DedupError {
    #[error("invalid dedup configuration: {0}")]
    Config(String),
    #[error("cannot sign an empty token set")]
    EmptyTokenSet,
    #[error("signatures were built with different configurations (k {0} vs {1}, seed {2} vs {3})")]
    SignatureMismatch(usize, usize, u64, u64),
    #[error("degenerate raster for {0}")]
    DegenerateRaster(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// One `(member, representative)` line of a cluster map.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub member_id: String,
    pub representative_id: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DedupOutcome {
    pub survivors: Vec<Transition>,
    /// member transition id → representative transition id
    pub clusters: BTreeMap<String, String>,
}

impl DedupOutcome {
    pub fn cluster_records(&self) -> Vec<ClusterRecord> {
        self.clusters
            .iter()
            .map(|(m, r)| ClusterRecord {
                member_id: m.clone(),
                representative_id: r.clone(),
            })
            .collect()
    }
}

/// Whether `a` beats `b` as a cluster representative.
pub fn outranks(a: &Transition, b: &Transition) -> bool {
    (a.source_priority, std::cmp::Reverse(&a.transition_id))
        > (b.source_priority, std::cmp::Reverse(&b.transition_id))
}

/// Builds the outcome for `items` partitioned by `uf`.
pub(crate) fn select_representatives(items: &[&Transition], uf: &mut UnionFind) -> DedupOutcome {
    let labels = uf.labels();
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, &label) in labels.iter().enumerate() {
        best.entry(label)
            .and_modify(|b| {
                if outranks(items[i], items[*b]) {
                    *b = i;
                }
            })
            .or_insert(i);
    }
    let clusters = labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            (
                items[i].transition_id.clone(),
                items[best[l]].transition_id.clone(),
            )
        })
        .collect();
    let survivors = (0..items.len())
        .filter(|&i| best[&labels[i]] == i)
        .map(|i| items[i].clone())
        .collect();
    DedupOutcome {
        survivors,
        clusters,
    }
}
