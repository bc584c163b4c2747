//! Judge reply parsing.
//!
//! Forward judges score element precision in fifths; inverse judges pass or
//! fail. Scores are accepted only in their plain decimal forms (`0.6`,
//! `0.60`, `1`, `1.0`); signs, exponents and other values are rejected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::remote::extract_tag;

pub const FORWARD_JUDGE_PROMPT: &str = include_str!("../../assets/prompts/judge_forward.txt");
pub const INVERSE_JUDGE_PROMPT: &str = include_str!("../../assets/prompts/judge_inverse.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKind {
    Forward,
    Inverse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub reason: String,
    pub score: f64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum JudgeParseError {
    #[error("missing or repeated <{0}> tag")]
    MissingTag(&'static str),
    #[error("score {0:?} is outside the allowed set")]
    OutOfSet(String),
}

/// Numerators over five for forward scores, or `{0, 5}` for inverse.
fn fifths(s: &str) -> Option<u32> {
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) if !f.is_empty() => (i, f),
        Some(_) => return None,
        None => (s, ""),
    };
    if !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let first = frac.bytes().next().map(|b| b - b'0');
    let rest_zero = frac.bytes().skip(1).all(|b| b == b'0');
    match (int, first) {
        ("0", None | Some(0)) if rest_zero => Some(0),
        ("1", None | Some(0)) if rest_zero => Some(5),
        ("0", Some(d @ (2 | 4 | 6 | 8))) if rest_zero => Some(u32::from(d) / 2),
        _ => None,
    }
}

pub fn parse_judge_verdict(text: &str, kind: JudgeKind) -> Result<JudgeVerdict, JudgeParseError> {
    let reason = extract_tag(text, "reason").ok_or(JudgeParseError::MissingTag("reason"))?;
    let raw = extract_tag(text, "score").ok_or(JudgeParseError::MissingTag("score"))?.trim();
    let out_of_set = || JudgeParseError::OutOfSet(raw.to_string());
    let n = fifths(raw).ok_or_else(out_of_set)?;
    if kind == JudgeKind::Inverse && n != 0 && n != 5 {
        return Err(out_of_set());
    }
    Ok(JudgeVerdict {
        reason: reason.trim().to_string(),
        score: f64::from(n) / 5.0,
    })
}
