//! The seven dynamics formulations.
//!
//! | kind         | inputs                    | target     |
//! |--------------|---------------------------|------------|
//! | `fwd_u`      | image(pre), text(u)       | text(D')   |
//! | `fwd_a`      | image(pre), action(a)     | text(D')   |
//! | `inv_img_u`  | image(pre), image(post)   | text(u)    |
//! | `inv_img_a`  | image(pre), image(post)   | action(a)  |
//! | `inv_desc_u` | image(pre), text(D')      | text(u)    |
//! | `inv_desc_a` | image(pre), text(D')      | action(a)  |
//! | `bwd`        | text(u), image(post)      | text(D)    |
//!
//! `D` and `D'` describe the pre and post screens, `u` is the action in
//! natural language and `a` the atomic action in absolute pixels.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{GroundedAnnotation, SynthError};
use crate::action::Action;
use crate::env::StateId;
use crate::explore::Transition;

pub const FORWARD_PROMPT: &str = include_str!("../../assets/prompts/forward.txt");
pub const INVERSE_PROMPT: &str = include_str!("../../assets/prompts/inverse.txt");
pub const INVERSE_DESC_PROMPT: &str = include_str!("../../assets/prompts/inverse_desc.txt");
pub const BACKWARD_PROMPT: &str = include_str!("../../assets/prompts/backward.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    FwdU,
    FwdA,
    InvImgU,
    InvImgA,
    InvDescU,
    InvDescA,
    Bwd,
}

impl TaskKind {
    pub const ALL: [TaskKind; 7] = [
        TaskKind::FwdU,
        TaskKind::FwdA,
        TaskKind::InvImgU,
        TaskKind::InvImgA,
        TaskKind::InvDescU,
        TaskKind::InvDescA,
        TaskKind::Bwd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::FwdU => "fwd_u",
            TaskKind::FwdA => "fwd_a",
            TaskKind::InvImgU => "inv_img_u",
            TaskKind::InvImgA => "inv_img_a",
            TaskKind::InvDescU => "inv_desc_u",
            TaskKind::InvDescA => "inv_desc_a",
            TaskKind::Bwd => "bwd",
        }
    }

    /// Input modality sequence and target modality.
    pub fn shape(self) -> (&'static [Modality], Modality) {
        use Modality::*;
        match self {
            TaskKind::FwdU => (&[Image, Text], Text),
            TaskKind::FwdA => (&[Image, Action], Text),
            TaskKind::InvImgU => (&[Image, Image], Text),
            TaskKind::InvImgA => (&[Image, Image], Action),
            TaskKind::InvDescU => (&[Image, Text], Text),
            TaskKind::InvDescA => (&[Image, Text], Action),
            TaskKind::Bwd => (&[Text, Image], Text),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = SynthError;
    fn from_str(s: &str) -> Result<Self, SynthError> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| SynthError::UnknownKind(s.to_string()))
    }
}

pub fn parse_kinds<S: AsRef<str>>(names: &[S]) -> Result<BTreeSet<TaskKind>, SynthError> {
    names.iter().map(|n| n.as_ref().parse()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modality {
    Image,
    Text,
    Action,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SampleInput {
    /// Path of a raster relative to the run directory.
    Image { path: String },
    Text { text: String },
    Action { action: Action },
}

impl SampleInput {
    pub fn modality(&self) -> Modality {
        match self {
            SampleInput::Image { .. } => Modality::Image,
            SampleInput::Text { .. } => Modality::Text,
            SampleInput::Action { .. } => Modality::Action,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SampleTarget {
    Text { text: String },
    Action { action: Action },
}

impl SampleTarget {
    pub fn modality(&self) -> Modality {
        match self {
            SampleTarget::Text { .. } => Modality::Text,
            SampleTarget::Action { .. } => Modality::Action,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub sample_id: String,
    pub task_kind: TaskKind,
    pub prompt: String,
    pub inputs: Vec<SampleInput>,
    pub target: SampleTarget,
    pub provenance: String,
}

impl TrainingSample {
    /// Whether inputs and target match the kind's shape exactly.
    pub fn shape_ok(&self) -> bool {
        let (ins, out) = self.task_kind.shape();
        self.inputs.len() == ins.len()
            && self.inputs.iter().zip(ins).all(|(i, m)| i.modality() == *m)
            && self.target.modality() == out
    }
}

/// Raster location of a state inside a run directory.
pub fn image_ref(app_id: &str, state: StateId) -> String {
    format!("env/{app_id}/rasters/{state}.gray")
}

/// One sample per requested kind, in kind order.
pub fn emit_samples(t: &Transition, ann: &GroundedAnnotation, kinds: &BTreeSet<TaskKind>) -> Vec<TrainingSample> {
    let pre = || SampleInput::Image { path: image_ref(&t.app_id, t.pre) };
    let post = || SampleInput::Image { path: image_ref(&t.app_id, t.post) };
    let text = |s: &str| SampleInput::Text { text: s.to_string() };
    let u = ann.action_desc.as_str();
    let a = t.action.to_string();
    let forward = |input: &str| FORWARD_PROMPT.replace("{action_summary} or {atomic_action}", input);
    let inv_desc = INVERSE_DESC_PROMPT.replace("{after_screenshot_summary}", &ann.outcome_desc);

    kinds
        .iter()
        .map(|&kind| {
            let (prompt, inputs, target) = match kind {
                TaskKind::FwdU => (forward(u), vec![pre(), text(u)], SampleTarget::Text { text: ann.outcome_desc.clone() }),
                TaskKind::FwdA => (
                    forward(&a),
                    vec![pre(), SampleInput::Action { action: t.action.clone() }],
                    SampleTarget::Text { text: ann.outcome_desc.clone() },
                ),
                TaskKind::InvImgU => (INVERSE_PROMPT.to_string(), vec![pre(), post()], SampleTarget::Text { text: u.to_string() }),
                TaskKind::InvImgA => (INVERSE_PROMPT.to_string(), vec![pre(), post()], SampleTarget::Action { action: t.action.clone() }),
                TaskKind::InvDescU => (
                    inv_desc.clone(),
                    vec![pre(), text(&ann.outcome_desc)],
                    SampleTarget::Text { text: u.to_string() },
                ),
                TaskKind::InvDescA => (
                    inv_desc.clone(),
                    vec![pre(), text(&ann.outcome_desc)],
                    SampleTarget::Action { action: t.action.clone() },
                ),
                TaskKind::Bwd => (
                    BACKWARD_PROMPT.replace("{action_summary}", u),
                    vec![text(u), post()],
                    SampleTarget::Text { text: ann.obs_desc.clone() },
                ),
            };
            TrainingSample {
                sample_id: format!("{}:{}", t.transition_id, kind),
                task_kind: kind,
                prompt,
                inputs,
                target,
                provenance: t.transition_id.clone(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explore::TransitionFlag;

    fn fixture() -> (Transition, GroundedAnnotation) {
        let t = Transition {
            transition_id: "app000-w00001-s0000007".into(),
            app_id: "app000".into(),
            worker_id: 1,
            step_index: 7,
            pre: StateId(3),
            action: Action::Click { x: 150, y: 230 },
            post: StateId(9),
            edge_flag: TransitionFlag::Valid,
            source_priority: 0,
        };
        let a = GroundedAnnotation {
            transition_id: t.transition_id.clone(),
            obs_desc: "A Cart page.".into(),
            action_desc: "Tap the \"Submit\" button".into(),
            outcome_desc: "A Order confirmation page.".into(),
        };
        (t, a)
    }

    #[test]
    fn fwd_a_shape() {
        let (t, a) = fixture();
        let s = emit_samples(&t, &a, &parse_kinds(&["fwd_a"]).unwrap());
        assert_eq!(s.len(), 1);
        assert_eq!(
            s[0].inputs,
            vec![
                SampleInput::Image { path: "env/app000/rasters/s00003.gray".into() },
                SampleInput::Action { action: t.action.clone() },
            ]
        );
        assert_eq!(s[0].target, SampleTarget::Text { text: a.outcome_desc.clone() });
        assert!(s[0].prompt.ends_with("Input: click 150 230\n"));
    }

    #[test]
    fn bwd_shape() {
        let (t, a) = fixture();
        let s = emit_samples(&t, &a, &[TaskKind::Bwd].into());
        assert_eq!(s[0].inputs[0], SampleInput::Text { text: a.action_desc.clone() });
        assert_eq!(s[0].inputs[1], SampleInput::Image { path: "env/app000/rasters/s00009.gray".into() });
        assert_eq!(s[0].target, SampleTarget::Text { text: a.obs_desc.clone() });
    }

    #[test]
    fn all_kinds_share_provenance_and_shapes() {
        let (t, a) = fixture();
        let s = emit_samples(&t, &a, &TaskKind::ALL.into());
        assert_eq!(s.len(), 7);
        assert!(s.iter().all(|x| x.provenance == t.transition_id && x.shape_ok()));
        for x in &s {
            let line = serde_json::to_string(x).unwrap();
            let back: TrainingSample = serde_json::from_str(&line).unwrap();
            assert_eq!(&back, x);
            assert_eq!(serde_json::to_string(&back).unwrap(), line);
        }
    }

    #[test]
    fn unknown_kind() {
        assert!(matches!(parse_kinds(&["fwd_b"]), Err(SynthError::UnknownKind(_))));
    }
}
