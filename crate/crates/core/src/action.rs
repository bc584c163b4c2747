//! The agent action space: click, input, scroll, finish and wait.
//!
//! Coordinates are interpreted in a [`CoordSpace`] declared alongside the
//! action: absolute screen pixels or integers normalized to `[0, 1000]`.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const NORMALIZED_MAX: i64 = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Up,
        Direction::Down,
        Direction::Left,
        Direction::Right,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "up" => Some(Direction::Up),
            "down" => Some(Direction::Down),
            "left" => Some(Direction::Left),
            "right" => Some(Direction::Right),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Click,
    Input,
    Scroll,
    Finish,
    Wait,
}

impl ActionKind {
    pub const ALL: [ActionKind; 5] = [
        ActionKind::Click,
        ActionKind::Input,
        ActionKind::Scroll,
        ActionKind::Finish,
        ActionKind::Wait,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Click => "click",
            ActionKind::Input => "input",
            ActionKind::Scroll => "scroll",
            ActionKind::Finish => "finish",
            ActionKind::Wait => "wait",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        ActionKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Screen size in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScreenDims {
    pub width: u32,
    pub height: u32,
}

impl ScreenDims {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn diagonal(&self) -> f64 {
        (f64::from(self.width).powi(2) + f64::from(self.height).powi(2)).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordSpace {
    /// Pixels in `[0, W] × [0, H]`.
    Absolute,
    /// Integers in `[0, 1000]` on both axes.
    #[serde(rename = "normalized_1000")]
    Normalized1000,
}

impl CoordSpace {
    pub fn as_str(self) -> &'static str {
        match self {
            CoordSpace::Absolute => "absolute",
            CoordSpace::Normalized1000 => "normalized_1000",
        }
    }

    /// Inclusive upper bounds `(x_max, y_max)` for this space.
    pub fn limits(self, screen: ScreenDims) -> (i64, i64) {
        match self {
            CoordSpace::Absolute => (i64::from(screen.width), i64::from(screen.height)),
            CoordSpace::Normalized1000 => (NORMALIZED_MAX, NORMALIZED_MAX),
        }
    }

    pub fn contains(self, screen: ScreenDims, x: i64, y: i64) -> bool {
        let (xm, ym) = self.limits(screen);
        (0..=xm).contains(&x) && (0..=ym).contains(&y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("screen dimension is zero")]
pub struct ZeroDimension;

/// `round(abs * 1000 / dim)` clamped to `[0, 1000]`, in exact integer arithmetic.
pub fn to_normalized(abs: i64, dim: u32) -> Result<i64, ZeroDimension> {
    if dim == 0 {
        return Err(ZeroDimension);
    }
    let d = i64::from(dim);
    Ok((2 * abs * NORMALIZED_MAX + d).div_euclid(2 * d).clamp(0, NORMALIZED_MAX))
}

/// `round(norm * dim / 1000)`, in exact integer arithmetic.
pub fn to_absolute(norm: i64, dim: u32) -> Result<i64, ZeroDimension> {
    if dim == 0 {
        return Err(ZeroDimension);
    }
    let d = i64::from(dim);
    Ok((2 * norm * d + NORMALIZED_MAX).div_euclid(2 * NORMALIZED_MAX))
}

/// Re-expresses `action`'s point in `to`. Kind-only actions are unchanged.
pub fn convert_coords(
    action: &Action,
    from: CoordSpace,
    to: CoordSpace,
    screen: ScreenDims,
) -> Result<Action, ZeroDimension> {
    if screen.width == 0 || screen.height == 0 {
        return Err(ZeroDimension);
    }
    let Some((x, y)) = action.point() else {
        return Ok(action.clone());
    };
    let (nx, ny) = match (from, to) {
        (CoordSpace::Absolute, CoordSpace::Normalized1000) => {
            (to_normalized(x, screen.width)?, to_normalized(y, screen.height)?)
        }
        (CoordSpace::Normalized1000, CoordSpace::Absolute) => {
            (to_absolute(x, screen.width)?, to_absolute(y, screen.height)?)
        }
        _ => (x, y),
    };
    Ok(action.with_point(nx, ny))
}

/// A typed operation with exactly the parameters its kind requires.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Action {
    Click { x: i64, y: i64 },
    Input { x: i64, y: i64, text: String },
    Scroll { x: i64, y: i64, direction: Direction },
    Finish,
    Wait,
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Click { .. } => ActionKind::Click,
            Action::Input { .. } => ActionKind::Input,
            Action::Scroll { .. } => ActionKind::Scroll,
            Action::Finish => ActionKind::Finish,
            Action::Wait => ActionKind::Wait,
        }
    }

    pub fn point(&self) -> Option<(i64, i64)> {
        match *self {
            Action::Click { x, y } | Action::Input { x, y, .. } | Action::Scroll { x, y, .. } => {
                Some((x, y))
            }
            Action::Finish | Action::Wait => None,
        }
    }

    /// Same action with its point replaced; kind-only actions are unchanged.
    pub fn with_point(&self, nx: i64, ny: i64) -> Action {
        match self {
            Action::Click { .. } => Action::Click { x: nx, y: ny },
            Action::Input { text, .. } => Action::Input {
                x: nx,
                y: ny,
                text: text.clone(),
            },
            Action::Scroll { direction, .. } => Action::Scroll {
                x: nx,
                y: ny,
                direction: *direction,
            },
            Action::Finish => Action::Finish,
            Action::Wait => Action::Wait,
        }
    }

    /// Whether the action's coordinates lie inside `space`.
    pub fn is_within(&self, space: CoordSpace, screen: ScreenDims) -> bool {
        self.point()
            .map_or(true, |(x, y)| space.contains(screen, x, y))
    }
}

/// Renders the textual action grammar, e.g. `click 150 230`.
impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Click { x, y } => write!(f, "click {x} {y}"),
            Action::Input { x, y, text } => write!(f, "input {x} {y} {text}"),
            Action::Scroll { x, y, direction } => {
                write!(f, "scroll {x} {y} {}", direction.as_str())
            }
            Action::Finish => f.write_str("finish"),
            Action::Wait => f.write_str("wait"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar_rendering() {
        assert_eq!(Action::Click { x: 150, y: 230 }.to_string(), "click 150 230");
        assert_eq!(
            Action::Input { x: 40, y: 80, text: "hello world".into() }.to_string(),
            "input 40 80 hello world"
        );
        assert_eq!(
            Action::Scroll { x: 1, y: 2, direction: Direction::Down }.to_string(),
            "scroll 1 2 down"
        );
        assert_eq!(Action::Finish.to_string(), "finish");
    }

    #[test]
    fn serde_shape_matches_kind() {
        let a = Action::Scroll { x: 3, y: 4, direction: Direction::Left };
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, r#"{"kind":"scroll","x":3,"y":4,"direction":"left"}"#);
        assert_eq!(serde_json::from_str::<Action>(&s).unwrap(), a);
        assert_eq!(serde_json::to_string(&Action::Wait).unwrap(), r#"{"kind":"wait"}"#);
    }

    #[test]
    fn coordinate_ranges() {
        let screen = ScreenDims::new(256, 512);
        assert!(Action::Click { x: 256, y: 512 }.is_within(CoordSpace::Absolute, screen));
        assert!(!Action::Click { x: 257, y: 0 }.is_within(CoordSpace::Absolute, screen));
        assert!(Action::Click { x: 1000, y: 1000 }.is_within(CoordSpace::Normalized1000, screen));
        assert!(!Action::Click { x: -1, y: 3 }.is_within(CoordSpace::Normalized1000, screen));
        assert!(Action::Finish.is_within(CoordSpace::Absolute, screen));
    }

    #[test]
    fn conversion_examples() {
        let s = ScreenDims::new(1080, 1920);
        let c = convert_coords(&Action::Click { x: 540, y: 960 }, CoordSpace::Absolute, CoordSpace::Normalized1000, s);
        assert_eq!(c, Ok(Action::Click { x: 500, y: 500 }));
        for (from, to) in [
            (CoordSpace::Absolute, CoordSpace::Normalized1000),
            (CoordSpace::Normalized1000, CoordSpace::Absolute),
        ] {
            assert_eq!(convert_coords(&Action::Click { x: 0, y: 0 }, from, to, s), Ok(Action::Click { x: 0, y: 0 }));
            assert_eq!(convert_coords(&Action::Wait, from, to, s), Ok(Action::Wait));
        }
        assert_eq!(to_normalized(5000, 256), Ok(1000));
        assert_eq!(to_normalized(-3, 256), Ok(0));
        assert!(convert_coords(&Action::Wait, CoordSpace::Absolute, CoordSpace::Absolute, ScreenDims::new(0, 5)).is_err());
    }
}
