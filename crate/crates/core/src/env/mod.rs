//! Synthetic GUI environments modelled as directed state-transition graphs.
//!
//! An [`EnvGraph`] is one app: a set of screens ([`UiState`]), each carrying an
//! accessibility tree and its rendered raster, plus action-labelled edges.
//! Graphs are generated from `(seed, GenerationSpec)` alone and are immutable
//! afterwards.

mod generate;
pub mod io;
mod render;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Action, Direction, ScreenDims};
use crate::hashing::hash_strs;
use crate::raster::Raster;

pub use generate::{generate_app, generate_environment, GenerationSpec};
pub use render::render;

/// Every generated screen is 256×512 grayscale.
pub const SCREEN: ScreenDims = ScreenDims::new(256, 512);

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid generation spec: {0}")]
    InvalidSpec(String),
    #[error("unknown state {state} in app {app}")]
    UnknownState { app: String, state: StateId },
    #[error("graph {0} has no entry state")]
    NoEntry(String),
    #[error("malformed graph document: {0}")]
    Malformed(String),
    #[error(transparent)]
    Raster(#[from] crate::raster::RasterError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Index of a state within its app.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub u32);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{:05}", self.0)
    }
}

/// Integer rectangle in screen pixels; contains points in `[x, x+w) × [y, y+h)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bounds {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Bounds {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn contains(&self, px: i64, py: i64) -> bool {
        px >= i64::from(self.x)
            && px < i64::from(self.x) + i64::from(self.w)
            && py >= i64::from(self.y)
            && py < i64::from(self.y) + i64::from(self.h)
    }

    pub fn center(&self) -> (i64, i64) {
        (
            i64::from(self.x) + i64::from(self.w) / 2,
            i64::from(self.y) + i64::from(self.h) / 2,
        )
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    pub fn fits(&self, screen: ScreenDims) -> bool {
        self.x + self.w <= screen.width && self.y + self.h <= screen.height
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Clickable,
    Editable,
    Scrollable,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Clickable => "clickable",
            EventKind::Editable => "editable",
            EventKind::Scrollable => "scrollable",
        }
    }
}

/// Supported interaction kinds of a node.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventSet(BTreeSet<EventKind>);

impl EventSet {
    pub fn of(kinds: &[EventKind]) -> Self {
        Self(kinds.iter().copied().collect())
    }

    pub fn contains(&self, kind: EventKind) -> bool {
        self.0.contains(&kind)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = EventKind> + '_ {
        self.0.iter().copied()
    }

    pub fn insert(&mut self, kind: EventKind) {
        self.0.insert(kind);
    }

    /// Canonical text form, e.g. `clickable+scrollable`; empty set is `none`.
    pub fn canonical(&self) -> String {
        if self.0.is_empty() {
            return "none".to_string();
        }
        self.iter().map(EventKind::as_str).collect::<Vec<_>>().join("+")
    }

    /// Whether an action of this shape is one the node supports.
    pub fn permits(&self, action: &Action) -> bool {
        match action {
            Action::Click { .. } => self.contains(EventKind::Clickable),
            Action::Input { .. } => self.contains(EventKind::Editable),
            Action::Scroll { .. } => self.contains(EventKind::Scrollable),
            Action::Finish | Action::Wait => false,
        }
    }
}

/// One accessibility-tree element.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AxNode {
    pub node_id: String,
    pub tag: String,
    pub xpath: String,
    pub text: String,
    pub bounds: Bounds,
    pub events: EventSet,
}

/// Everything about a screen except its pixels; `render` turns it into a raster.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDesc {
    pub state_id: StateId,
    pub template_id: u32,
    pub semantic_label: String,
    pub tree: Vec<AxNode>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UiState {
    pub desc: StateDesc,
    pub raster: Raster,
}

impl UiState {
    /// Renders `desc` into a complete state.
    pub fn from_desc(desc: StateDesc) -> Self {
        let raster = render(&desc, SCREEN);
        Self { desc, raster }
    }

    pub fn id(&self) -> StateId {
        self.desc.state_id
    }

    pub fn tree(&self) -> &[AxNode] {
        &self.desc.tree
    }

    pub fn node(&self, node_id: &str) -> Option<&AxNode> {
        self.desc.tree.iter().find(|n| n.node_id == node_id)
    }

    /// Innermost (last in document order) node containing the point that
    /// supports `action`'s kind.
    pub fn target_node(&self, action: &Action) -> Option<&AxNode> {
        let (x, y) = action.point()?;
        self.desc
            .tree
            .iter()
            .rev()
            .find(|n| n.bounds.contains(x, y) && n.events.permits(action))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeFlag {
    Valid,
    SystemError,
    RenderArtifact,
}

impl EdgeFlag {
    pub fn is_fault(self) -> bool {
        self != EdgeFlag::Valid
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: StateId,
    pub action: Action,
    pub target_node: String,
    pub to: StateId,
    pub flag: EdgeFlag,
}

impl Edge {
    /// Whether `action` taken at `from` fires this edge: same kind, same
    /// text/direction, and the point lies inside the target node.
    fn matches(&self, action: &Action, target: &AxNode) -> bool {
        let inside = |x: i64, y: i64| target.bounds.contains(x, y);
        match (&self.action, action) {
            (Action::Click { .. }, Action::Click { x, y }) => inside(*x, *y),
            (Action::Input { text: t0, .. }, Action::Input { x, y, text }) => {
                t0 == text && inside(*x, *y)
            }
            (
                Action::Scroll { direction: d0, .. },
                Action::Scroll { x, y, direction },
            ) => d0 == direction && inside(*x, *y),
            _ => false,
        }
    }
}

/// Result of executing an action.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Moved {
        next: StateId,
        flag: EdgeFlag,
        edge: usize,
    },
    /// Inert action; the screen does not change.
    NoOp,
}

impl StepOutcome {
    pub fn next_state(&self, current: StateId) -> StateId {
        match self {
            StepOutcome::Moved { next, .. } => *next,
            StepOutcome::NoOp => current,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EnvGraph {
    pub app_id: String,
    pub screen: ScreenDims,
    pub entry: Option<StateId>,
    pub terminals: BTreeSet<StateId>,
    pub states: Vec<UiState>,
    pub edges: Vec<Edge>,
    out_edges: Vec<Vec<usize>>,
}

impl EnvGraph {
    pub fn new(
        app_id: String,
        screen: ScreenDims,
        entry: Option<StateId>,
        terminals: BTreeSet<StateId>,
        states: Vec<UiState>,
        edges: Vec<Edge>,
    ) -> Result<Self, EnvError> {
        let n = states.len();
        for (i, s) in states.iter().enumerate() {
            if s.id().0 as usize != i {
                return Err(EnvError::Malformed(format!(
                    "state at position {i} has id {}",
                    s.id()
                )));
            }
        }
        let mut out_edges = vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            let (f, t) = (e.from.0 as usize, e.to.0 as usize);
            if f >= n || t >= n {
                return Err(EnvError::Malformed(format!("edge {i} references a missing state")));
            }
            if states[f].node(&e.target_node).is_none() {
                return Err(EnvError::Malformed(format!(
                    "edge {i} targets missing node {}",
                    e.target_node
                )));
            }
            out_edges[f].push(i);
        }
        if let Some(entry) = entry {
            if entry.0 as usize >= n {
                return Err(EnvError::Malformed("entry state out of range".into()));
            }
        }
        Ok(Self {
            app_id,
            screen,
            entry,
            terminals,
            states,
            edges,
            out_edges,
        })
    }

    pub fn state(&self, id: StateId) -> Result<&UiState, EnvError> {
        self.states
            .get(id.0 as usize)
            .ok_or_else(|| EnvError::UnknownState {
                app: self.app_id.clone(),
                state: id,
            })
    }

    pub fn out_edges(&self, id: StateId) -> impl Iterator<Item = (usize, &Edge)> {
        self.out_edges
            .get(id.0 as usize)
            .into_iter()
            .flatten()
            .map(move |&i| (i, &self.edges[i]))
    }

    pub fn is_terminal(&self, id: StateId) -> bool {
        self.terminals.contains(&id)
    }

    /// Executes `action` at `state`.
    pub fn step(&self, state: StateId, action: &Action) -> Result<StepOutcome, EnvError> {
        let ui = self.state(state)?;
        for (i, edge) in self.out_edges(state) {
            let Some(target) = ui.node(&edge.target_node) else {
                continue;
            };
            if edge.matches(action, target) {
                return Ok(StepOutcome::Moved {
                    next: edge.to,
                    flag: edge.flag,
                    edge: i,
                });
            }
        }
        Ok(StepOutcome::NoOp)
    }

    pub fn flagged_fraction(&self) -> f64 {
        if self.edges.is_empty() {
            return 0.0;
        }
        self.edges.iter().filter(|e| e.flag.is_fault()).count() as f64 / self.edges.len() as f64
    }
}

/// Graphs of a whole environment, addressable by app id.
#[derive(Clone, Debug, Default)]
pub struct GraphSet {
    graphs: Vec<EnvGraph>,
    index: std::collections::BTreeMap<String, usize>,
}

impl GraphSet {
    pub fn new(graphs: Vec<EnvGraph>) -> Self {
        let index = graphs
            .iter()
            .enumerate()
            .map(|(i, g)| (g.app_id.clone(), i))
            .collect();
        Self { graphs, index }
    }

    pub fn get(&self, app_id: &str) -> Option<&EnvGraph> {
        self.index.get(app_id).map(|&i| &self.graphs[i])
    }

    pub fn graphs(&self) -> &[EnvGraph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// State `id` of app `app_id`.
    pub fn state(&self, app_id: &str, id: StateId) -> Result<&UiState, EnvError> {
        self.get(app_id)
            .ok_or_else(|| EnvError::UnknownState {
                app: app_id.to_string(),
                state: id,
            })?
            .state(id)
    }
}

/// Up to `k` distinct non-empty node texts, largest node first (document
/// order breaks ties), skipping `exclude`.
pub fn salient_texts(tree: &[AxNode], k: usize, exclude: Option<&str>) -> Vec<String> {
    let mut order: Vec<usize> = (0..tree.len()).collect();
    order.sort_by(|&a, &b| tree[b].bounds.area().cmp(&tree[a].bounds.area()).then(a.cmp(&b)));
    let mut out: Vec<String> = Vec::new();
    for i in order {
        let t = tree[i].text.trim();
        if t.is_empty() || Some(t) == exclude || out.iter().any(|o| o == t) {
            continue;
        }
        out.push(t.to_string());
        if out.len() == k {
            break;
        }
    }
    out
}

/// Text typed into an editable node during exploration. Deterministic per node
/// so that input edges and explorer affordances agree.
pub fn seeded_input_text(node: &AxNode) -> String {
    const WORDS: [&str; 12] = [
        "coffee", "blue shirt", "hello", "order status", "pizza", "train ticket", "yoga mat",
        "weather", "headphones", "gift card", "noodles", "umbrella",
    ];
    let h = hash_strs(&["input", &node.xpath, &node.text]);
    WORDS[(h % WORDS.len() as u64) as usize].to_string()
}

/// A candidate action and the index of the tree node it addresses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Affordance {
    pub action: Action,
    pub node: usize,
}

/// Candidate actions at a state: one click per clickable node (at its
/// center), one input per editable node, one scroll per direction per
/// scrollable node; document order, then event kind.
pub fn enumerate_affordances(state: &UiState) -> Vec<Affordance> {
    let mut out = Vec::new();
    for (i, node) in state.tree().iter().enumerate() {
        let (x, y) = node.bounds.center();
        for ev in node.events.iter() {
            match ev {
                EventKind::Clickable => out.push(Affordance { action: Action::Click { x, y }, node: i }),
                EventKind::Editable => out.push(Affordance {
                    action: Action::Input { x, y, text: seeded_input_text(node) },
                    node: i,
                }),
                EventKind::Scrollable => {
                    for direction in Direction::ALL {
                        out.push(Affordance { action: Action::Scroll { x, y, direction }, node: i });
                    }
                }
            }
        }
    }
    out
}
