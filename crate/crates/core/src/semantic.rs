//! Action-feedback consistency filtering.
//!
//! A [`Verifier`] turns each transition into a binary [`Verdict`]. Verifier
//! failures (endpoint unavailable, malformed reply) are invalid verdicts too,
//! but they carry their own status so they never count as semantic rejections.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Action;
use crate::env::{EnvError, GraphSet};
use crate::explore::{Transition, TransitionFlag};
use crate::par::Executor;
use crate::remote::{self, ImagePayload, ModelRequest, Transport, TransportError};

#[derive(Debug, Error)]
pub enum SemanticError {
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Accepted,
    Rejected,
    /// Retries exhausted or a non-retryable endpoint error.
    Unavailable,
    /// The endpoint answered without a usable `<score>`.
    Malformed,
}

impl VerdictStatus {
    pub fn is_failure(self) -> bool {
        matches!(self, VerdictStatus::Unavailable | VerdictStatus::Malformed)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub transition_id: String,
    pub valid: bool,
    pub reason: String,
    pub status: VerdictStatus,
}

impl Verdict {
    pub fn accept(t: &Transition, reason: impl Into<String>) -> Self {
        Self::new(t, VerdictStatus::Accepted, reason)
    }

    pub fn reject(t: &Transition, reason: impl Into<String>) -> Self {
        Self::new(t, VerdictStatus::Rejected, reason)
    }

    fn new(t: &Transition, status: VerdictStatus, reason: impl Into<String>) -> Self {
        Self {
            transition_id: t.transition_id.clone(),
            valid: status == VerdictStatus::Accepted,
            reason: reason.into(),
            status,
        }
    }
}

pub trait Verifier: Sync {
    fn verify(&self, t: &Transition) -> Result<Verdict, SemanticError>;
}

/// Offline oracle: reads the ground-truth edge flag and the accessibility tree.
pub struct RuleVerifier<'g> {
    graphs: &'g GraphSet,
}

impl<'g> RuleVerifier<'g> {
    pub fn new(graphs: &'g GraphSet) -> Self {
        Self { graphs }
    }
}

impl Verifier for RuleVerifier<'_> {
    fn verify(&self, t: &Transition) -> Result<Verdict, SemanticError> {
        verify_rule_based(t, self.graphs)
    }
}

pub fn verify_rule_based(t: &Transition, graphs: &GraphSet) -> Result<Verdict, SemanticError> {
    let (pre, _) = t.resolve(graphs)?;
    let v = match t.edge_flag {
        TransitionFlag::SystemError | TransitionFlag::RenderArtifact | TransitionFlag::NoOp => {
            Verdict::reject(t, t.edge_flag.as_str())
        }
        TransitionFlag::Valid if pre.target_node(&t.action).is_none() => {
            Verdict::reject(t, "action_not_permitted")
        }
        TransitionFlag::Valid if t.pre == t.post => Verdict::reject(t, "no_state_change"),
        TransitionFlag::Valid => Verdict::accept(t, "consistent"),
    };
    Ok(v)
}

/// Instruction sent with every remote verification request.
pub const VERIFIER_PROMPT: &str = include_str!("../assets/prompts/verifier.txt");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteReply {
    pub score: bool,
    pub reason: Option<String>,
}

/// Parses `<score>0|1</score>` with an optional `<reason>`.
pub fn parse_verifier_reply(text: &str) -> Option<RemoteReply> {
    let score = match remote::extract_tag(text, "score")?.trim() {
        "1" => true,
        "0" => false,
        _ => return None,
    };
    let reason = remote::extract_tag(text, "reason").map(|r| r.trim().to_string());
    Some(RemoteReply { score, reason })
}

pub fn verification_request(t: &Transition, graphs: &GraphSet) -> Result<ModelRequest, SemanticError> {
    let (pre, post) = t.resolve(graphs)?;
    let prompt = VERIFIER_PROMPT.replace("{action}", &render_action(&t.action));
    Ok(ModelRequest {
        idempotency_key: t.transition_id.clone(),
        task: "verify".to_string(),
        prompt,
        images: vec![
            ImagePayload::from_raster("pre", &pre.raster),
            ImagePayload::from_raster("post", &post.raster),
        ],
    })
}

fn render_action(a: &Action) -> String {
    a.to_string()
}

/// Endpoint-backed verifier. Fails closed.
pub struct RemoteVerifier<'g, T> {
    graphs: &'g GraphSet,
    transport: T,
    max_retries: u32,
}

impl<'g, T: Transport> RemoteVerifier<'g, T> {
    pub fn new(graphs: &'g GraphSet, transport: T, max_retries: u32) -> Self {
        Self {
            graphs,
            transport,
            max_retries,
        }
    }
}

impl<T: Transport> Verifier for RemoteVerifier<'_, T> {
    fn verify(&self, t: &Transition) -> Result<Verdict, SemanticError> {
        let req = verification_request(t, self.graphs)?;
        let v = match remote::send_with_retries(&self.transport, &req, self.max_retries) {
            Ok(body) => match parse_verifier_reply(&body) {
                Some(RemoteReply { score: true, reason }) => {
                    Verdict::accept(t, reason.unwrap_or_else(|| "consistent".into()))
                }
                Some(RemoteReply { score: false, reason }) => {
                    Verdict::reject(t, reason.unwrap_or_else(|| "inconsistent".into()))
                }
                None => {
                    tracing::warn!(id = %t.transition_id, "malformed verifier reply");
                    Verdict::new(t, VerdictStatus::Malformed, "malformed_response")
                }
            },
            Err(e) => {
                if let TransportError::Fatal(msg) = &e {
                    tracing::warn!(id = %t.transition_id, "verifier error: {msg}");
                }
                Verdict::new(t, VerdictStatus::Unavailable, "verifier_unavailable")
            }
        };
        Ok(v)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticCounts {
    pub input: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub unavailable: u64,
    pub malformed: u64,
}

impl SemanticCounts {
    pub fn quarantined(&self) -> u64 {
        self.unavailable + self.malformed
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SemanticOutcome {
    /// One per input transition, in input order.
    pub verdicts: Vec<Verdict>,
    pub survivors: Vec<Transition>,
    /// Transitions dropped because the verifier failed on them.
    pub quarantine: Vec<Transition>,
    pub counts: SemanticCounts,
}

/// Verifies every transition; concurrency is bounded by `exec`.
pub fn filter_semantic(
    transitions: &[Transition],
    verifier: &dyn Verifier,
    exec: &Executor,
) -> Result<SemanticOutcome, SemanticError> {
    let verdicts = exec.try_map(transitions, |t| verifier.verify(t))?;
    Ok(apply_verdicts(transitions, verdicts))
}

/// Splits `transitions` by a verdict stream aligned with it.
pub fn apply_verdicts(transitions: &[Transition], verdicts: Vec<Verdict>) -> SemanticOutcome {
    assert_eq!(transitions.len(), verdicts.len());
    let mut out = SemanticOutcome {
        counts: SemanticCounts {
            input: transitions.len() as u64,
            ..Default::default()
        },
        ..Default::default()
    };
    for (t, v) in transitions.iter().zip(&verdicts) {
        debug_assert_eq!(t.transition_id, v.transition_id);
        match v.status {
            VerdictStatus::Accepted => {
                out.counts.accepted += 1;
                out.survivors.push(t.clone());
            }
            VerdictStatus::Rejected => out.counts.rejected += 1,
            VerdictStatus::Unavailable => {
                out.counts.unavailable += 1;
                out.quarantine.push(t.clone());
            }
            VerdictStatus::Malformed => {
                out.counts.malformed += 1;
                out.quarantine.push(t.clone());
            }
        }
    }
    out.verdicts = verdicts;
    out
}
