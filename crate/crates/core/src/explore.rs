//! Random-walk exploration fleet.
//!
//! Each worker walks one graph from its entry state, picking among the
//! state's affordances with a seeded policy, and records every step,
//! including inert ones. Terminal states send the walker back to the entry.
//! Workers share nothing; the fleet output is ordered by
//! `(app_id, worker_id, step_index)` so it does not depend on scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Action;
use crate::env::{enumerate_affordances, Affordance, EdgeFlag, EnvError, EnvGraph, GraphSet, StateId, StepOutcome, UiState};
use crate::hashing::{derive_seed, rng_for};
use crate::par::Executor;
use crate::shards::{read_shard, write_shard, ShardEntry, ShardError};

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error("graph {0} has no entry state")]
    NoEntry(String),
    #[error("exploration budget must be at least 1")]
    ZeroBudget,
    #[error("fleet needs at least one worker")]
    NoWorkers,
    #[error("fleet needs at least one graph")]
    NoGraphs,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Shard(#[from] ShardError),
}

/// Outcome class of a recorded step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionFlag {
    Valid,
    SystemError,
    RenderArtifact,
    NoOp,
}

impl From<EdgeFlag> for TransitionFlag {
    fn from(f: EdgeFlag) -> Self {
        match f {
            EdgeFlag::Valid => TransitionFlag::Valid,
            EdgeFlag::SystemError => TransitionFlag::SystemError,
            EdgeFlag::RenderArtifact => TransitionFlag::RenderArtifact,
        }
    }
}

impl TransitionFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            TransitionFlag::Valid => "valid",
            TransitionFlag::SystemError => "system_error",
            TransitionFlag::RenderArtifact => "render_artifact",
            TransitionFlag::NoOp => "no_op",
        }
    }

    pub fn is_fault(self) -> bool {
        matches!(self, TransitionFlag::SystemError | TransitionFlag::RenderArtifact)
    }
}

impl fmt::Display for TransitionFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One recorded `(pre, action, post)` step with provenance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub transition_id: String,
    pub app_id: String,
    pub worker_id: u32,
    pub step_index: u32,
    pub pre: StateId,
    pub action: Action,
    pub post: StateId,
    pub edge_flag: TransitionFlag,
    pub source_priority: u32,
}

/// Ids sort lexicographically in `(app, worker, step)` order.
pub fn transition_id(app_id: &str, worker_id: u32, step_index: u32) -> String {
    format!("{app_id}-w{worker_id:05}-s{step_index:07}")
}

impl Transition {
    pub fn resolve<'g>(&self, graphs: &'g GraphSet) -> Result<(&'g UiState, &'g UiState), EnvError> {
        Ok((
            graphs.state(&self.app_id, self.pre)?,
            graphs.state(&self.app_id, self.post)?,
        ))
    }
}

/// Chooses which affordance to take next.
pub trait Policy {
    fn choose(&mut self, state: &UiState, candidates: &[Affordance], rng: &mut ChaCha8Rng) -> usize;
}

/// Uniform choice over affordances.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformPolicy;

impl Policy for UniformPolicy {
    fn choose(&mut self, _state: &UiState, candidates: &[Affordance], rng: &mut ChaCha8Rng) -> usize {
        rng.gen_range(0..candidates.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WorkerSpec {
    pub worker_id: u32,
    pub seed: u64,
    pub source_priority: u32,
}

pub fn explore(graph: &EnvGraph, worker: WorkerSpec, budget: usize) -> Result<Vec<Transition>, ExploreError> {
    explore_with(graph, worker, budget, &mut UniformPolicy)
}

pub fn explore_with(
    graph: &EnvGraph,
    worker: WorkerSpec,
    budget: usize,
    policy: &mut dyn Policy,
) -> Result<Vec<Transition>, ExploreError> {
    if budget == 0 {
        return Err(ExploreError::ZeroBudget);
    }
    let entry = graph
        .entry
        .ok_or_else(|| ExploreError::NoEntry(graph.app_id.clone()))?;
    let mut rng = rng_for(worker.seed, 0);
    let mut cache: Vec<Option<Vec<Affordance>>> = vec![None; graph.states.len()];
    let mut current = entry;
    let mut out = Vec::with_capacity(budget);

    for step in 0..budget as u32 {
        let state = graph.state(current)?;
        let slot = &mut cache[current.0 as usize];
        let candidates = slot.get_or_insert_with(|| enumerate_affordances(state));
        let action = if candidates.is_empty() {
            Action::Wait
        } else {
            candidates[policy.choose(state, candidates, &mut rng)].action.clone()
        };
        let outcome = graph.step(current, &action)?;
        let post = outcome.next_state(current);
        let flag = match outcome {
            StepOutcome::Moved { flag, .. } => flag.into(),
            StepOutcome::NoOp => TransitionFlag::NoOp,
        };
        out.push(Transition {
            transition_id: transition_id(&graph.app_id, worker.worker_id, step),
            app_id: graph.app_id.clone(),
            worker_id: worker.worker_id,
            step_index: step,
            pre: current,
            action,
            post,
            edge_flag: flag,
            source_priority: worker.source_priority,
        });
        let stuck = candidates.is_empty();
        current = if graph.is_terminal(post) || stuck { entry } else { post };
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetSpec {
    pub n_workers: usize,
    pub budget_per_worker: usize,
    pub base_seed: u64,
    /// Workers are spread over this many source-priority tiers.
    #[serde(default = "default_priority_levels")]
    pub priority_levels: u32,
}

fn default_priority_levels() -> u32 {
    3
}

impl FleetSpec {
    pub fn new(n_workers: usize, budget_per_worker: usize, base_seed: u64) -> Self {
        Self {
            n_workers,
            budget_per_worker,
            base_seed,
            priority_levels: default_priority_levels(),
        }
    }

    pub fn worker(&self, i: usize) -> WorkerSpec {
        WorkerSpec {
            worker_id: i as u32,
            seed: derive_seed(self.base_seed, i as u64),
            source_priority: i as u32 % self.priority_levels.max(1),
        }
    }
}

/// Transitions produced by one worker.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shard {
    pub app_id: String,
    pub worker_id: u32,
    pub transitions: Vec<Transition>,
}

impl Shard {
    pub fn file_name(&self) -> String {
        format!("{}-w{:05}.jsonl", self.app_id, self.worker_id)
    }
}

/// Raw fleet output, shards ordered by `(app_id, worker_id)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawCorpus {
    pub shards: Vec<Shard>,
}

impl RawCorpus {
    pub fn from_shards(mut shards: Vec<Shard>) -> Self {
        shards.sort_by(|a, b| (&a.app_id, a.worker_id).cmp(&(&b.app_id, b.worker_id)));
        Self { shards }
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.shards.iter().flat_map(|s| s.transitions.iter())
    }

    pub fn to_vec(&self) -> Vec<Transition> {
        self.transitions().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.shards.iter().map(|s| s.transitions.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Tallies by outcome class plus the total under `raw`.
    pub fn counts(&self) -> BTreeMap<String, u64> {
        let mut c = BTreeMap::new();
        c.insert("raw".to_string(), self.len() as u64);
        for t in self.transitions() {
            *c.entry(t.edge_flag.as_str().to_string()).or_insert(0) += 1;
        }
        c
    }

    /// Writes one JSONL file per shard under `dir`.
    pub fn write(&self, dir: &Path, exec: &Executor) -> Result<Vec<ShardEntry>, ExploreError> {
        let entries = exec.try_map(&self.shards, |s| write_shard(dir, &s.file_name(), &s.transitions))?;
        Ok(entries)
    }

    pub fn read(dir: &Path, entries: &[ShardEntry], exec: &Executor) -> Result<Self, ExploreError> {
        let shards = exec.try_map(entries, |e| {
            let transitions: Vec<Transition> = read_shard(dir, e)?;
            let (app_id, worker_id) = transitions
                .first()
                .map(|t| (t.app_id.clone(), t.worker_id))
                .unwrap_or_default();
            Ok::<_, ExploreError>(Shard {
                app_id,
                worker_id,
                transitions,
            })
        })?;
        Ok(Self::from_shards(shards))
    }
}

/// Worker `i` explores graph `i mod |graphs|`.
pub fn run_fleet(graphs: &[EnvGraph], spec: &FleetSpec, exec: &Executor) -> Result<RawCorpus, ExploreError> {
    if graphs.is_empty() {
        return Err(ExploreError::NoGraphs);
    }
    if spec.n_workers == 0 {
        return Err(ExploreError::NoWorkers);
    }
    let shards = exec
        .map_range(spec.n_workers, |i| {
            let graph = &graphs[i % graphs.len()];
            let worker = spec.worker(i);
            explore(graph, worker, spec.budget_per_worker).map(|transitions| Shard {
                app_id: graph.app_id.clone(),
                worker_id: worker.worker_id,
                transitions,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RawCorpus::from_shards(shards))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_environment, GenerationSpec};
    use std::collections::BTreeSet;

    fn graphs(seed: u64, spec: GenerationSpec) -> Vec<EnvGraph> {
        generate_environment(seed, &spec, &Executor::sequential()).unwrap()
    }

    fn w(seed: u64) -> WorkerSpec {
        WorkerSpec { worker_id: 0, seed, source_priority: 0 }
    }

    #[test]
    fn small_walk_resolves() {
        let g = &graphs(1, GenerationSpec::new(1, 2, 1, 0.0))[0];
        let ts = explore(g, w(1), 5).unwrap();
        assert_eq!(ts.len(), 5);
        for t in &ts {
            assert!(g.state(t.pre).is_ok() && g.state(t.post).is_ok());
        }
        assert_eq!(ts, explore(g, w(1), 5).unwrap());
        assert!(matches!(explore(g, w(1), 0), Err(ExploreError::ZeroBudget)));
    }

    #[test]
    fn missing_entry_is_an_error() {
        let mut g = graphs(1, GenerationSpec::new(1, 2, 1, 0.0)).remove(0);
        g.entry = None;
        assert!(matches!(explore(&g, w(1), 3), Err(ExploreError::NoEntry(_))));
    }

    #[test]
    fn visited_flag_rate_tracks_edge_flags() {
        let g = &graphs(3, GenerationSpec::new(1, 60, 8, 0.1))[0];
        let ts = explore(g, w(3), 2000).unwrap();
        let moved: Vec<_> = ts.iter().filter(|t| t.edge_flag != TransitionFlag::NoOp).collect();
        let frac = moved.iter().filter(|t| t.edge_flag.is_fault()).count() as f64 / moved.len() as f64;
        assert!((frac - g.flagged_fraction()).abs() <= 0.05, "{frac} vs {}", g.flagged_fraction());
    }

    #[test]
    fn fleet_is_schedule_independent() {
        let gs = graphs(9, GenerationSpec::new(2, 30, 5, 0.1));
        let spec = FleetSpec::new(4, 100, 42);
        let a = run_fleet(&gs, &spec, &Executor::sequential()).unwrap();
        let b = run_fleet(&gs, &spec, &Executor::new(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 400);
        let order: Vec<_> = a.transitions().map(|t| t.transition_id.clone()).collect();
        let mut sorted = order.clone();
        sorted.sort();
        assert_eq!(order, sorted);
    }

    #[test]
    fn fleet_ids_are_unique() {
        let gs = graphs(4, GenerationSpec::new(3, 40, 6, 0.1));
        let c = run_fleet(&gs, &FleetSpec::new(50, 400, 1), &Executor::new(4)).unwrap();
        assert_eq!(c.len(), 20_000);
        let ids: BTreeSet<_> = c.transitions().map(|t| &t.transition_id).collect();
        assert_eq!(ids.len(), 20_000);
    }

    #[test]
    fn fleet_argument_errors() {
        let gs = graphs(1, GenerationSpec::new(1, 2, 1, 0.0));
        assert!(matches!(run_fleet(&[], &FleetSpec::new(1, 1, 1), &Executor::sequential()), Err(ExploreError::NoGraphs)));
        assert!(matches!(run_fleet(&gs, &FleetSpec::new(0, 1, 1), &Executor::sequential()), Err(ExploreError::NoWorkers)));
        assert_eq!(run_fleet(&gs, &FleetSpec::new(1, 10, 1), &Executor::sequential()).unwrap().len(), 10);
    }

    #[test]
    fn shard_files_round_trip() {
        let gs = graphs(2, GenerationSpec::new(2, 10, 3, 0.1));
        let c = run_fleet(&gs, &FleetSpec::new(3, 20, 5), &Executor::sequential()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let entries = c.write(dir.path(), &Executor::new(2)).unwrap();
        assert_eq!(entries.len(), 3);
        let back = RawCorpus::read(dir.path(), &entries, &Executor::sequential()).unwrap();
        assert_eq!(back, c);
    }
}
