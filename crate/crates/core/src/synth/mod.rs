//! Grounded annotations and dynamics training samples.

pub mod generalize;
pub mod judge;
pub mod samples;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{convert_coords, Action, CoordSpace, ScreenDims};
use crate::env::{AxNode, EnvError, GraphSet, UiState};
use crate::explore::Transition;
use crate::par::Executor;
use crate::raster::Raster;
use crate::remote::{self, ImagePayload, ModelRequest, Transport};

pub use generalize::{build_generalization_items, GeneralizationItem, Level, ProbeTask};
pub use judge::{parse_judge_verdict, JudgeKind, JudgeVerdict};
pub use samples::{emit_samples, parse_kinds, SampleInput, SampleTarget, TaskKind, TrainingSample};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("action point ({x}, {y}) is outside the {space} range")]
    OutOfRange { x: i64, y: i64, space: &'static str },
    #[error("unknown task kind {0:?}")]
    UnknownKind(String),
    #[error("{app_id} has {available} candidate paths for {level}, {requested} requested")]
    InsufficientPaths {
        app_id: String,
        level: Level,
        available: usize,
        requested: usize,
    },
    #[error("invalid annotation for {0}: {1}")]
    InvalidAnnotation(String, String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Ring radius as a fraction of the screen diagonal.
pub const MARKER_RADIUS_FRACTION: f64 = 0.05;

pub fn marker_radius(screen: ScreenDims) -> i64 {
    (screen.diagonal() * MARKER_RADIUS_FRACTION).round() as i64
}

/// Overlays a ring (radius 5% of the diagonal, 3 px wide) at the action
/// point. Ring pixels are inverted to high contrast; all others are kept.
pub fn annotate_marker(raster: &Raster, action: &Action, space: CoordSpace) -> Result<Raster, SynthError> {
    let screen = ScreenDims::new(raster.width(), raster.height());
    let Some((x, y)) = action.point() else {
        return Ok(raster.clone());
    };
    if !space.contains(screen, x, y) {
        return Err(SynthError::OutOfRange { x, y, space: space.as_str() });
    }
    let (cx, cy) = convert_coords(action, space, CoordSpace::Absolute, screen)
        .ok()
        .and_then(|a| a.point())
        .ok_or(SynthError::OutOfRange { x, y, space: space.as_str() })?;
    let r = marker_radius(screen);
    let (inner, outer) = ((r - 1).pow(2), (r + 1).pow(2));
    let mut out = raster.clone();
    for py in (cy - r - 1).max(0)..=(cy + r + 1).min(i64::from(raster.height()) - 1) {
        for px in (cx - r - 1).max(0)..=(cx + r + 1).min(i64::from(raster.width()) - 1) {
            let d2 = (px - cx).pow(2) + (py - cy).pow(2);
            if (inner..=outer).contains(&d2) {
                let v = raster.get(px as u32, py as u32);
                out.set(px as u32, py as u32, if v < 128 { 255 } else { 0 });
            }
        }
    }
    Ok(out)
}

/// Observation, action and outcome descriptions of one transition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundedAnnotation {
    pub transition_id: String,
    pub obs_desc: String,
    pub action_desc: String,
    pub outcome_desc: String,
}

impl GroundedAnnotation {
    /// All fields non-empty and the action description free of the action's
    /// coordinates.
    pub fn validate(&self, action: &Action) -> Result<(), SynthError> {
        let bad = |why: &str| Err(SynthError::InvalidAnnotation(self.transition_id.clone(), why.into()));
        for (name, v) in [
            ("obs_desc", &self.obs_desc),
            ("action_desc", &self.action_desc),
            ("outcome_desc", &self.outcome_desc),
        ] {
            if v.trim().is_empty() {
                return bad(&format!("{name} is empty"));
            }
        }
        if let Some((x, y)) = action.point() {
            let norm: String = self.action_desc.split(|c: char| !c.is_ascii_digit()).collect::<Vec<_>>().join(" ");
            let mut nums = norm.split_whitespace();
            let (xs, ys) = (x.to_string(), y.to_string());
            let mut prev = nums.next();
            for cur in nums {
                if prev == Some(xs.as_str()) && cur == ys {
                    return bad("action_desc contains raw coordinates");
                }
                prev = Some(cur);
            }
        }
        Ok(())
    }
}

fn noun(tag: &str) -> &str {
    match tag {
        "input" => "text field",
        "item" => "list item",
        "switch" => "switch",
        "tabbar" => "tab bar",
        "list" => "list",
        "header" => "header",
        other => other,
    }
}

fn region(screen: ScreenDims, y: i64) -> &'static str {
    let third = i64::from(screen.height) / 3;
    match y {
        y if y < third => "top",
        y if y < 2 * third => "middle",
        _ => "bottom",
    }
}

fn element_phrase(node: &AxNode) -> String {
    let text = node.text.trim();
    if text.is_empty() {
        format!("the {}", noun(&node.tag))
    } else {
        format!("the \"{text}\" {}", noun(&node.tag))
    }
}

/// Natural-language rendering of `action` at `pre`, naming the element it
/// acted on.
pub fn describe_action(pre: &UiState, action: &Action, screen: ScreenDims) -> String {
    let target = pre.target_node(action);
    let place = |y: i64| match target {
        Some(n) => element_phrase(n),
        None => format!("an empty area at the {} of the screen", region(screen, y)),
    };
    match action {
        Action::Click { y, .. } => format!("Tap {}", place(*y)),
        Action::Input { y, text, .. } => format!("Type \"{}\" into {}", text.trim(), place(*y)),
        Action::Scroll { y, direction, .. } => format!("Scroll {} on {}", direction.as_str(), place(*y)),
        Action::Finish => "Finish the task".to_string(),
        Action::Wait => "Wait for the screen to respond".to_string(),
    }
}

fn describe_state(s: &UiState) -> String {
    format!("A {}.", s.desc.semantic_label)
}

pub trait Annotator: Sync {
    /// `Ok(None)` when this transition cannot be annotated and should be skipped.
    fn annotate(&self, t: &Transition) -> Result<Option<GroundedAnnotation>, SynthError>;
}

/// Deterministic templated annotator over ground-truth labels.
pub struct TemplateAnnotator<'g> {
    graphs: &'g GraphSet,
}

impl<'g> TemplateAnnotator<'g> {
    pub fn new(graphs: &'g GraphSet) -> Self {
        Self { graphs }
    }
}

impl Annotator for TemplateAnnotator<'_> {
    fn annotate(&self, t: &Transition) -> Result<Option<GroundedAnnotation>, SynthError> {
        synthesize_offline(t, self.graphs).map(Some)
    }
}

pub fn synthesize_offline(t: &Transition, graphs: &GraphSet) -> Result<GroundedAnnotation, SynthError> {
    let (pre, post) = t.resolve(graphs)?;
    let screen = graphs.get(&t.app_id).map(|g| g.screen).unwrap_or(crate::env::SCREEN);
    let outcome_desc = if t.pre == t.post {
        format!("The screen stays unchanged. {}", describe_state(post))
    } else {
        describe_state(post)
    };
    let ann = GroundedAnnotation {
        transition_id: t.transition_id.clone(),
        obs_desc: describe_state(pre),
        action_desc: describe_action(pre, &t.action, screen),
        outcome_desc,
    };
    ann.validate(&t.action)?;
    Ok(ann)
}

pub const SYNTH_PROMPT: &str = include_str!("../../assets/prompts/synthesize.txt");

pub fn synthesis_request(t: &Transition, graphs: &GraphSet) -> Result<ModelRequest, SynthError> {
    let (pre, post) = t.resolve(graphs)?;
    let marked = annotate_marker(&pre.raster, &t.action, CoordSpace::Absolute)?;
    Ok(ModelRequest {
        idempotency_key: t.transition_id.clone(),
        task: "annotate".to_string(),
        prompt: SYNTH_PROMPT.replace("{atomic_action}", &t.action.to_string()),
        images: vec![
            ImagePayload::from_raster("pre_marked", &marked),
            ImagePayload::from_raster("post", &post.raster),
        ],
    })
}

/// Parses the three-part `<observation>/<action>/<outcome>` reply.
pub fn parse_annotation_reply(transition_id: &str, text: &str) -> Option<GroundedAnnotation> {
    let get = |tag| remote::extract_tag(text, tag).map(|s| s.trim().to_string());
    Some(GroundedAnnotation {
        transition_id: transition_id.to_string(),
        obs_desc: get("observation")?,
        action_desc: get("action")?,
        outcome_desc: get("outcome")?,
    })
}

/// Endpoint-backed annotator. Unparseable or invalid replies skip the sample.
pub struct RemoteAnnotator<'g, T> {
    graphs: &'g GraphSet,
    transport: T,
    max_retries: u32,
}

impl<'g, T: Transport> RemoteAnnotator<'g, T> {
    pub fn new(graphs: &'g GraphSet, transport: T, max_retries: u32) -> Self {
        Self { graphs, transport, max_retries }
    }
}

impl<T: Transport> Annotator for RemoteAnnotator<'_, T> {
    fn annotate(&self, t: &Transition) -> Result<Option<GroundedAnnotation>, SynthError> {
        let req = synthesis_request(t, self.graphs)?;
        let body = match remote::send_with_retries(&self.transport, &req, self.max_retries) {
            Ok(b) => b,
            Err(e) => {
                tracing::warn!(id = %t.transition_id, "annotation skipped: {e}");
                return Ok(None);
            }
        };
        let Some(ann) = parse_annotation_reply(&t.transition_id, &body) else {
            tracing::warn!(id = %t.transition_id, "annotation skipped: unparseable reply");
            return Ok(None);
        };
        if let Err(e) = ann.validate(&t.action) {
            tracing::warn!(id = %t.transition_id, "annotation skipped: {e}");
            return Ok(None);
        }
        Ok(Some(ann))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SynthOutcome {
    /// Annotated transitions with their annotations, in input order.
    pub annotated: Vec<(Transition, GroundedAnnotation)>,
    pub skipped: Vec<String>,
}

pub fn synthesize_annotations(
    transitions: &[Transition],
    annotator: &dyn Annotator,
    exec: &Executor,
) -> Result<SynthOutcome, SynthError> {
    let anns = exec.try_map(transitions, |t| annotator.annotate(t))?;
    let mut out = SynthOutcome::default();
    for (t, a) in transitions.iter().zip(anns) {
        match a {
            Some(a) => out.annotated.push((t.clone(), a)),
            None => out.skipped.push(t.transition_id.clone()),
        }
    }
    Ok(out)
}
