//! Level 1 (single edge) and Level 2 (two chained edges) evaluation items.

use std::fmt;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::samples::{image_ref, SampleInput, INVERSE_PROMPT};
use super::{describe_action, SynthError};
use crate::action::Action;
use crate::env::{salient_texts, EdgeFlag, EnvGraph, StateId, StepOutcome};
use crate::hashing::{hash_strs, rng_for};

pub const FORWARD_L1_PROMPT: &str = include_str!("../../assets/prompts/forward_l1.txt");
pub const FORWARD_L2_PROMPT: &str = include_str!("../../assets/prompts/forward_l2.txt");
pub const INVERSE_L2_PROMPT: &str = include_str!("../../assets/prompts/inverse_l2.txt");

/// Number of elements a forward item asks for.
pub const FORWARD_ELEMENTS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    L1,
    L2,
}

impl Level {
    pub fn hops(self) -> usize {
        match self {
            Level::L1 => 1,
            Level::L2 => 2,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::L1 => "L1",
            Level::L2 => "L2",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeTask {
    Forward,
    Inverse,
}

impl ProbeTask {
    pub fn as_str(self) -> &'static str {
        match self {
            ProbeTask::Forward => "forward",
            ProbeTask::Inverse => "inverse",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneralizationItem {
    pub item_id: String,
    pub app_id: String,
    pub level: Level,
    pub task: ProbeTask,
    /// Visited states, start first; `hops + 1` entries.
    pub path: Vec<StateId>,
    pub actions: Vec<Action>,
    pub action_descs: Vec<String>,
    pub target_state: StateId,
    pub prompt: String,
    pub inputs: Vec<SampleInput>,
    /// Forward items: up to five salient texts of the target screen.
    pub gt_elements: Vec<String>,
    /// Inverse items: description of the first action.
    pub gt_action_desc: Option<String>,
}

/// Valid edges whose action, replayed with `step`, reaches their endpoint.
fn sound_edges(graph: &EnvGraph) -> Vec<usize> {
    (0..graph.edges.len())
        .filter(|&i| {
            let e = &graph.edges[i];
            e.flag == EdgeFlag::Valid
                && e.from != e.to
                && matches!(graph.step(e.from, &e.action), Ok(StepOutcome::Moved { edge, .. }) if edge == i)
        })
        .collect()
}

/// All edge chains of `level.hops()` sound edges, in edge order.
pub fn candidate_paths(graph: &EnvGraph, level: Level) -> Vec<Vec<usize>> {
    let edges = sound_edges(graph);
    match level {
        Level::L1 => edges.into_iter().map(|e| vec![e]).collect(),
        Level::L2 => {
            let mut by_from: Vec<Vec<usize>> = vec![Vec::new(); graph.states.len()];
            for &e in &edges {
                by_from[graph.edges[e].from.0 as usize].push(e);
            }
            edges
                .iter()
                .flat_map(|&e1| {
                    by_from[graph.edges[e1].to.0 as usize]
                        .iter()
                        .map(move |&e2| vec![e1, e2])
                })
                .collect()
        }
    }
}

/// Samples `n` distinct paths of the requested level and renders them as items.
pub fn build_generalization_items(
    graph: &EnvGraph,
    level: Level,
    task: ProbeTask,
    n: usize,
    seed: u64,
) -> Result<Vec<GeneralizationItem>, SynthError> {
    let paths = candidate_paths(graph, level);
    if paths.len() < n {
        return Err(SynthError::InsufficientPaths {
            app_id: graph.app_id.clone(),
            level,
            available: paths.len(),
            requested: n,
        });
    }
    let mut rng = rng_for(seed, hash_strs(&["generalization", &graph.app_id, &level.to_string(), task.as_str()]));
    let mut picked = sample(&mut rng, paths.len(), n).into_vec();
    picked.sort_unstable();

    picked
        .into_iter()
        .enumerate()
        .map(|(k, p)| {
            let chain = &paths[p];
            let mut path = vec![graph.edges[chain[0]].from];
            let mut actions = Vec::new();
            let mut action_descs = Vec::new();
            for &e in chain {
                let edge = &graph.edges[e];
                let at = graph.state(edge.from)?;
                actions.push(edge.action.clone());
                action_descs.push(describe_action(at, &edge.action, graph.screen));
                path.push(edge.to);
            }
            let start = path[0];
            let target = *path.last().expect("non-empty path");
            let img = |s: StateId| SampleInput::Image { path: image_ref(&graph.app_id, s) };
            let text = |s: &str| SampleInput::Text { text: s.to_string() };
            let (prompt, inputs) = match (task, level) {
                (ProbeTask::Forward, Level::L1) => (
                    FORWARD_L1_PROMPT.replace("{action_description}", &action_descs[0]),
                    vec![img(start), text(&action_descs[0])],
                ),
                (ProbeTask::Forward, Level::L2) => (
                    FORWARD_L2_PROMPT
                        .replace("{action_description_1}", &action_descs[0])
                        .replace("{action_description_2}", &action_descs[1]),
                    vec![img(start), text(&action_descs[0]), text(&action_descs[1])],
                ),
                (ProbeTask::Inverse, Level::L1) => (INVERSE_PROMPT.to_string(), vec![img(start), img(target)]),
                (ProbeTask::Inverse, Level::L2) => (INVERSE_L2_PROMPT.to_string(), vec![img(start), img(target)]),
            };
            let (gt_elements, gt_action_desc) = match task {
                ProbeTask::Forward => (salient_texts(graph.state(target)?.tree(), FORWARD_ELEMENTS, None), None),
                ProbeTask::Inverse => (Vec::new(), Some(action_descs[0].clone())),
            };
            Ok(GeneralizationItem {
                item_id: format!("{}-{}-{}-{:05}", graph.app_id, level, task.as_str(), k),
                app_id: graph.app_id.clone(),
                level,
                task,
                path,
                actions,
                action_descs,
                target_state: target,
                prompt,
                inputs,
                gt_elements,
                gt_action_desc,
            })
        })
        .collect()
}

/// Replays an item's actions from its start state; the reached state.
pub fn replay(graph: &EnvGraph, item: &GeneralizationItem) -> Result<StateId, SynthError> {
    let mut s = item.path[0];
    for a in &item.actions {
        s = graph.step(s, a)?.next_state(s);
    }
    Ok(s)
}
