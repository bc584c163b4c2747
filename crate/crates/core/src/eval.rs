//! Action prediction scoring.
//!
//! A prediction is either a bare action string (`click 150 230`) or a
//! chain-of-thought reply whose `<answer>` holds one. Exact match needs the
//! right kind and parameters; type match needs the right kind only. Parse
//! failures count as misses on both.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{convert_coords, Action, ActionKind, CoordSpace, Direction, ScreenDims};
use crate::env::{Bounds, StateId, SCREEN};
use crate::par::Executor;
use crate::synth::judge::{parse_judge_verdict, JudgeKind, JudgeParseError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty action")]
    Empty,
    #[error("unknown action kind {0:?}")]
    UnknownKind(String),
    #[error("{kind} takes {expected} arguments, got {got}")]
    Arity {
        kind: ActionKind,
        expected: &'static str,
        got: usize,
    },
    #[error("not an integer coordinate: {0:?}")]
    BadNumber(String),
    #[error("invalid scroll direction {0:?}")]
    BadDirection(String),
    #[error("point ({x}, {y}) outside the {space} range")]
    OutOfRange { x: i64, y: i64, space: &'static str },
    #[error("malformed reasoning output: {0}")]
    Cot(String),
}

impl ParseError {
    pub fn class(&self) -> &'static str {
        match self {
            ParseError::Empty => "empty",
            ParseError::UnknownKind(_) => "unknown_kind",
            ParseError::Arity { .. } => "arity",
            ParseError::BadNumber(_) | ParseError::BadDirection(_) => "bad_argument",
            ParseError::OutOfRange { .. } => "out_of_range",
            ParseError::Cot(_) => "cot_format",
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no records to evaluate")]
    Empty,
    #[error("judge verdict {index} unparseable: {source}")]
    Judge {
        index: usize,
        #[source]
        source: JudgeParseError,
    },
}

/// Parses the action grammar. Input text is everything after the
/// coordinates, trimmed.
pub fn parse_action(text: &str, space: CoordSpace, screen: ScreenDims) -> Result<Action, ParseError> {
    let text = text.trim();
    let mut toks = text.split_whitespace();
    let head = toks.next().ok_or(ParseError::Empty)?;
    let kind = ActionKind::parse(head).ok_or_else(|| ParseError::UnknownKind(head.to_string()))?;
    let args: Vec<&str> = toks.collect();
    let arity = |expected, ok: bool| {
        if ok {
            Ok(())
        } else {
            Err(ParseError::Arity { kind, expected, got: args.len() })
        }
    };
    let num = |s: &str| s.parse::<i64>().map_err(|_| ParseError::BadNumber(s.to_string()));
    let point = || -> Result<(i64, i64), ParseError> {
        let (x, y) = (num(args[0])?, num(args[1])?);
        if !space.contains(screen, x, y) {
            return Err(ParseError::OutOfRange { x, y, space: space.as_str() });
        }
        Ok((x, y))
    };
    match kind {
        ActionKind::Click => {
            arity("2", args.len() == 2)?;
            let (x, y) = point()?;
            Ok(Action::Click { x, y })
        }
        ActionKind::Input => {
            arity("3 or more", args.len() >= 3)?;
            let (x, y) = point()?;
            Ok(Action::Input { x, y, text: remainder_after(text, 3).to_string() })
        }
        ActionKind::Scroll => {
            arity("3", args.len() == 3)?;
            let (x, y) = point()?;
            let direction = Direction::parse(args[2]).ok_or_else(|| ParseError::BadDirection(args[2].to_string()))?;
            Ok(Action::Scroll { x, y, direction })
        }
        ActionKind::Finish | ActionKind::Wait => {
            arity("0", args.is_empty())?;
            Ok(if kind == ActionKind::Finish { Action::Finish } else { Action::Wait })
        }
    }
}

/// `text` after its first `n` whitespace-separated tokens, trimmed.
fn remainder_after(text: &str, n: usize) -> &str {
    let mut rest = text;
    for _ in 0..n {
        rest = rest.trim_start();
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        rest = &rest[end..];
    }
    rest.trim()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotOutput {
    pub think: String,
    pub sub_goal: String,
    pub answer: String,
}

/// Extracts `<think>`, `<sub_goal>` and `<answer>` bodies. Each tag must
/// open and close exactly once, in that order, without nesting.
pub fn parse_cot(text: &str) -> Result<CotOutput, ParseError> {
    let mut pos = 0;
    let mut bodies = Vec::with_capacity(3);
    for tag in ["think", "sub_goal", "answer"] {
        let (open, close) = (format!("<{tag}>"), format!("</{tag}>"));
        if text.matches(&open).count() != 1 || text.matches(&close).count() != 1 {
            return Err(ParseError::Cot(format!("<{tag}> must appear exactly once")));
        }
        let start = text.find(&open).expect("counted") + open.len();
        let end = text.find(&close).expect("counted");
        if start - open.len() < pos || end < start {
            return Err(ParseError::Cot(format!("<{tag}> out of order")));
        }
        bodies.push(text[start..end].trim().to_string());
        pos = end + close.len();
    }
    let answer = bodies.pop().expect("three bodies");
    let sub_goal = bodies.pop().expect("three bodies");
    let think = bodies.pop().expect("three bodies");
    Ok(CotOutput { think, sub_goal, answer })
}

/// Parses a raw prediction: the `<answer>` of a reasoning reply when one is
/// present, the whole text otherwise.
pub fn parse_prediction(text: &str, space: CoordSpace, screen: ScreenDims) -> Result<Action, ParseError> {
    if text.contains("<answer>") || text.contains("<think>") {
        let cot = parse_cot(text)?;
        parse_action(&cot.answer, space, screen)
    } else {
        parse_action(text, space, screen)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub item_id: String,
    /// Ground truth in `coord_space`.
    pub gt_action: Action,
    /// Bounds of the ground-truth target element, in absolute pixels.
    #[serde(default)]
    pub gt_target_node: Option<Bounds>,
    pub gt_state: StateId,
    pub prediction_text: String,
    pub coord_space: CoordSpace,
    #[serde(default = "default_screen")]
    pub screen: ScreenDims,
}

fn default_screen() -> ScreenDims {
    SCREEN
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringConfig {
    /// Use the target element's bounds when the record has them.
    pub use_bounds: bool,
    /// Hit radius as a fraction of the screen diagonal.
    pub radius_fraction: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self { use_bounds: true, radius_fraction: 0.07 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Score {
    pub item_id: String,
    pub em: bool,
    pub tm: bool,
    pub parse_error: Option<String>,
}

/// Trims and collapses internal whitespace runs; case is kept.
pub fn normalize_text(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn absolute_point(a: &Action, space: CoordSpace, screen: ScreenDims) -> Option<(i64, i64)> {
    convert_coords(a, space, CoordSpace::Absolute, screen).ok()?.point()
}

pub fn score(record: &EvalRecord, cfg: &ScoringConfig) -> Score {
    let pred = match parse_prediction(&record.prediction_text, record.coord_space, record.screen) {
        Ok(p) => p,
        Err(e) => {
            return Score {
                item_id: record.item_id.clone(),
                em: false,
                tm: false,
                parse_error: Some(e.class().to_string()),
            }
        }
    };
    let gt = &record.gt_action;
    let tm = pred.kind() == gt.kind();
    let point_ok = || {
        let (Some((px, py)), Some((gx, gy))) = (
            absolute_point(&pred, record.coord_space, record.screen),
            absolute_point(gt, record.coord_space, record.screen),
        ) else {
            return false;
        };
        match record.gt_target_node {
            Some(b) if cfg.use_bounds => b.contains(px, py),
            _ => {
                let r = cfg.radius_fraction * record.screen.diagonal();
                (((px - gx).pow(2) + (py - gy).pow(2)) as f64) <= r * r
            }
        }
    };
    let params_ok = match (gt, &pred) {
        (Action::Click { .. }, Action::Click { .. }) => point_ok(),
        (Action::Input { text: a, .. }, Action::Input { text: b, .. }) => {
            normalize_text(a) == normalize_text(b) && point_ok()
        }
        (Action::Scroll { direction: a, .. }, Action::Scroll { direction: b, .. }) => a == b,
        (Action::Finish, Action::Finish) | (Action::Wait, Action::Wait) => true,
        _ => false,
    };
    Score {
        item_id: record.item_id.clone(),
        em: tm && params_ok,
        tm,
        parse_error: None,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KindMetrics {
    pub n: u64,
    pub em: f64,
    pub tm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: u64,
    pub em: f64,
    pub tm: f64,
    pub parse_failure_rate: f64,
    /// Keyed by ground-truth kind.
    pub per_kind: BTreeMap<ActionKind, KindMetrics>,
}

/// Scores every record and micro-averages.
pub fn evaluate(records: &[EvalRecord], cfg: &ScoringConfig, exec: &Executor) -> Result<(Metrics, Vec<Score>), EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let scores = exec.map(records, |r| score(r, cfg));
    let mut per: BTreeMap<ActionKind, (u64, u64, u64)> = BTreeMap::new();
    let (mut em, mut tm, mut pf) = (0u64, 0u64, 0u64);
    for (r, s) in records.iter().zip(&scores) {
        let e = per.entry(r.gt_action.kind()).or_default();
        e.0 += 1;
        e.1 += u64::from(s.em);
        e.2 += u64::from(s.tm);
        em += u64::from(s.em);
        tm += u64::from(s.tm);
        pf += u64::from(s.parse_error.is_some());
    }
    let n = records.len() as u64;
    let frac = |k: u64, n: u64| k as f64 / n as f64;
    let metrics = Metrics {
        n,
        em: frac(em, n),
        tm: frac(tm, n),
        parse_failure_rate: frac(pf, n),
        per_kind: per
            .into_iter()
            .map(|(k, (n, e, t))| (k, KindMetrics { n, em: frac(e, n), tm: frac(t, n) }))
            .collect(),
    };
    Ok((metrics, scores))
}

/// Mean judge score; any unparseable verdict aborts.
pub fn aggregate_judged<S: AsRef<str>>(verdicts: &[S], kind: JudgeKind) -> Result<f64, EvalError> {
    if verdicts.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut sum = 0.0;
    for (index, v) in verdicts.iter().enumerate() {
        sum += parse_judge_verdict(v.as_ref(), kind)
            .map_err(|source| EvalError::Judge { index, source })?
            .score;
    }
    Ok(sum / verdicts.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: ScreenDims = SCREEN;

    #[test]
    fn grammar_examples() {
        let p = |t| parse_action(t, CoordSpace::Absolute, S);
        assert_eq!(p("click 150 230"), Ok(Action::Click { x: 150, y: 230 }));
        assert_eq!(
            p("input 40 80 hello world"),
            Ok(Action::Input { x: 40, y: 80, text: "hello world".into() })
        );
        assert_eq!(p("INPUT 1 2  a   b "), Ok(Action::Input { x: 1, y: 2, text: "a   b".into() }));
        assert!(matches!(p("scroll 10 10 diagonal"), Err(ParseError::BadDirection(_))));
        assert!(matches!(p("tap 1 2"), Err(ParseError::UnknownKind(_))));
        assert!(matches!(p("click 1"), Err(ParseError::Arity { .. })));
        assert!(matches!(p("click 300 2"), Err(ParseError::OutOfRange { .. })));
        assert!(matches!(p("finish now"), Err(ParseError::Arity { .. })));
        assert_eq!(p(" Wait "), Ok(Action::Wait));
        assert!(parse_action("click 900 900", CoordSpace::Normalized1000, S).is_ok());
    }

    #[test]
    fn cot_grammar() {
        let ok = "pre <think>a</think><sub_goal>b</sub_goal><answer>click 1 2</answer> post";
        let c = parse_cot(ok).unwrap();
        assert_eq!((c.think.as_str(), c.sub_goal.as_str(), c.answer.as_str()), ("a", "b", "click 1 2"));
        assert!(parse_cot("<think>a</think><sub_goal>b</sub_goal>").is_err());
        assert!(parse_cot("<think>a <think> b</think><sub_goal>b</sub_goal><answer>x</answer>").is_err());
        assert!(parse_cot("<sub_goal>b</sub_goal><think>a</think><answer>x</answer>").is_err());
    }

    fn rec(gt: Action, node: Option<Bounds>, pred: &str) -> EvalRecord {
        EvalRecord {
            item_id: "i".into(),
            gt_action: gt,
            gt_target_node: node,
            gt_state: StateId(0),
            prediction_text: pred.into(),
            coord_space: CoordSpace::Absolute,
            screen: S,
        }
    }

    #[test]
    fn scoring_examples() {
        let cfg = ScoringConfig::default();
        let b = Some(Bounds { x: 100, y: 200, w: 200, h: 60 });
        let s = score(&rec(Action::Click { x: 200, y: 230 }, b, "click 150 230"), &cfg);
        assert!(s.tm && s.em);
        let s = score(&rec(Action::Click { x: 200, y: 230 }, b, "scroll 150 230 up"), &cfg);
        assert!(!s.tm && !s.em);
        let gt = Action::Input { x: 150, y: 230, text: "ok".into() };
        assert!(score(&rec(gt, b, "input 200 230  ok "), &cfg).em);
    }

    #[test]
    fn evaluate_arithmetic() {
        let cfg = ScoringConfig::default();
        let c = Action::Click { x: 10, y: 10 };
        let recs = vec![
            rec(c.clone(), None, "click 10 10"),
            rec(c.clone(), None, "click 250 500"),
            rec(c.clone(), None, "wait"),
            rec(Action::Wait, None, "wait"),
        ];
        let (m, _) = evaluate(&recs, &cfg, &Executor::sequential()).unwrap();
        assert_eq!((m.em, m.tm), (0.5, 0.75));
        assert!(evaluate(&[], &cfg, &Executor::sequential()).is_err());
        let bad: Vec<_> = (0..3).map(|_| rec(Action::Wait, None, "???")).collect();
        let (m, _) = evaluate(&bad, &cfg, &Executor::sequential()).unwrap();
        assert_eq!((m.em, m.tm, m.parse_failure_rate), (0.0, 0.0, 1.0));
    }

    #[test]
    fn judged_means() {
        let f = |s: &str| format!("<reason>r</reason><score>{s}</score>");
        let fw: Vec<_> = ["1", "0.6", "0.2"].iter().map(|s| f(s)).collect();
        assert!((aggregate_judged(&fw, JudgeKind::Forward).unwrap() - 0.6).abs() < 1e-12);
        let inv: Vec<_> = ["1", "0", "1", "1"].iter().map(|s| f(s)).collect();
        assert_eq!(aggregate_judged(&inv, JudgeKind::Inverse).unwrap(), 0.75);
        let bad: Vec<_> = ["1", "0.3"].iter().map(|s| f(s)).collect();
        assert!(aggregate_judged(&bad, JudgeKind::Forward).is_err());
    }
}
