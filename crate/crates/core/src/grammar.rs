//! Typed LOGO action programs.
//!
//! An action token is either `line_{style}_{length}-{turn}` or
//! `arc_{style}_{radius}_{sweep}-{turn}`. Every numeric field is a
//! normalized value in `[0, 1]` written with exactly three fraction digits.
//! Values are stored as integer thousandths so that a parsed token always
//! serializes back to the identical bytes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stroke styles that appear in the benchmark's programs.
pub const KNOWN_STYLES: [&str; 5] = ["normal", "zigzag", "triangle", "square", "circle"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrammarError {
    #[error("malformed action token {token:?} at byte {offset}: {reason}")]
    MalformedToken {
        token: String,
        offset: usize,
        reason: String,
    },
    #[error("normalized value {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("shape {shape} has no actions")]
    EmptyShape { shape: usize },
    #[error("image has no shapes")]
    EmptyImage,
    #[error("shape {shape}, action {action}: {source}")]
    InShape {
        shape: usize,
        action: usize,
        #[source]
        source: Box<GrammarError>,
    },
}

fn malformed(token: &str, offset: usize, reason: impl Into<String>) -> GrammarError {
    GrammarError::MalformedToken {
        token: token.to_string(),
        offset,
        reason: reason.into(),
    }
}

/// A normalized parameter in `[0, 1]`, held as thousandths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Norm(u16);

impl Norm {
    pub const MIDPOINT: Norm = Norm(500);

    pub fn from_thousandths(k: u16) -> Result<Self, GrammarError> {
        if k > 1000 {
            return Err(GrammarError::OutOfRange(f64::from(k) / 1000.0));
        }
        Ok(Norm(k))
    }

    /// Nearest representable thousandth.
    pub fn from_f64(x: f64) -> Result<Self, GrammarError> {
        if !x.is_finite() || !(0.0..=1.0).contains(&x) {
            return Err(GrammarError::OutOfRange(x));
        }
        Ok(Norm((x * 1000.0).round() as u16))
    }

    pub fn thousandths(self) -> u16 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 1000.0
    }

    /// Signed turn in degrees: `(v - 0.5) * 360`.
    pub fn turn_degrees(self) -> DegreeValue {
        // thousandths * 0.36 degrees, computed in hundredths of a degree
        DegreeValue::from_centidegrees((i32::from(self.0) - 500) * 36)
    }

    /// Signed arc sweep in degrees: `(v - 0.5) * 720`.
    pub fn sweep_degrees(self) -> DegreeValue {
        DegreeValue::from_centidegrees((i32::from(self.0) - 500) * 72)
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03}", self.0 / 1000, self.0 % 1000)
    }
}

/// Parses `d.ddd` with one integer digit and exactly three fraction digits.
fn parse_norm(token: &str, field: &str, offset: usize) -> Result<Norm, GrammarError> {
    let bytes = field.as_bytes();
    if bytes.len() != 5 || bytes[1] != b'.' {
        return Err(malformed(
            token,
            offset,
            format!("numeric field {field:?} must look like d.ddd"),
        ));
    }
    let mut value: u32 = 0;
    for (i, &b) in bytes.iter().enumerate() {
        if i == 1 {
            continue;
        }
        if !b.is_ascii_digit() {
            return Err(malformed(token, offset + i, format!("non-digit in {field:?}")));
        }
        value = value * 10 + u32::from(b - b'0');
    }
    if value > 1000 {
        return Err(malformed(token, offset, format!("{field} is outside [0, 1]")));
    }
    Ok(Norm(value as u16))
}

/// Signed angle in degrees. Positive is a left (counterclockwise) turn.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DegreeValue(f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TurnDirection {
    Left,
    Right,
    Straight,
}

impl DegreeValue {
    pub fn new(degrees: f64) -> Self {
        DegreeValue(degrees)
    }

    fn from_centidegrees(c: i32) -> Self {
        DegreeValue(f64::from(c) / 100.0)
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    pub fn direction(self) -> TurnDirection {
        if self.0 > 0.0 {
            TurnDirection::Left
        } else if self.0 < 0.0 {
            TurnDirection::Right
        } else {
            TurnDirection::Straight
        }
    }

    /// Magnitude with one decimal, rounded half away from zero.
    pub fn magnitude_one_decimal(self) -> String {
        crate::format_fixed(self.0.abs(), 1)
    }
}

/// Converts a normalized turn to degrees.
pub fn turn_to_degrees(turn_norm: f64) -> Result<DegreeValue, GrammarError> {
    if !turn_norm.is_finite() || !(0.0..=1.0).contains(&turn_norm) {
        return Err(GrammarError::OutOfRange(turn_norm));
    }
    Ok(DegreeValue((turn_norm - 0.5) * 360.0))
}

/// Converts a normalized arc sweep to degrees.
pub fn sweep_to_degrees(sweep_norm: f64) -> Result<DegreeValue, GrammarError> {
    if !sweep_norm.is_finite() || !(0.0..=1.0).contains(&sweep_norm) {
        return Err(GrammarError::OutOfRange(sweep_norm));
    }
    Ok(DegreeValue((sweep_norm - 0.5) * 720.0))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionStyle(String);

impl ActionStyle {
    pub fn new(token: &str) -> Result<Self, GrammarError> {
        if token.is_empty() || !token.bytes().all(|b| b.is_ascii_lowercase() || b == b'_') {
            return Err(malformed(token, 0, "style must be lowercase letters or '_'"));
        }
        Ok(ActionStyle(token.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_known(&self) -> bool {
        KNOWN_STYLES.contains(&self.0.as_str())
    }
}

impl fmt::Display for ActionStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BasicAction {
    Line {
        style: ActionStyle,
        length: Norm,
        turn: Norm,
    },
    Arc {
        style: ActionStyle,
        radius: Norm,
        sweep: Norm,
        turn: Norm,
    },
}

impl BasicAction {
    pub fn style(&self) -> &ActionStyle {
        match self {
            BasicAction::Line { style, .. } | BasicAction::Arc { style, .. } => style,
        }
    }

    pub fn turn(&self) -> Norm {
        match self {
            BasicAction::Line { turn, .. } | BasicAction::Arc { turn, .. } => *turn,
        }
    }

    pub fn turn_degrees(&self) -> DegreeValue {
        self.turn().turn_degrees()
    }
}

impl fmt::Display for BasicAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasicAction::Line {
                style,
                length,
                turn,
            } => write!(f, "line_{style}_{length}-{turn}"),
            BasicAction::Arc {
                style,
                radius,
                sweep,
                turn,
            } => write!(f, "arc_{style}_{radius}_{sweep}-{turn}"),
        }
    }
}

impl FromStr for BasicAction {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_action(s)
    }
}

/// Parses one action token.
pub fn parse_action(token: &str) -> Result<BasicAction, GrammarError> {
    let (kind, rest_at) = match token.find('_') {
        Some(i) => (&token[..i], i + 1),
        None => return Err(malformed(token, 0, "missing kind prefix")),
    };
    let arity = match kind {
        "line" => 1,
        "arc" => 2,
        _ => return Err(malformed(token, 0, format!("unknown kind {kind:?}"))),
    };

    let dash = token
        .rfind('-')
        .ok_or_else(|| malformed(token, token.len(), "missing '-' before turn field"))?;
    if dash < rest_at {
        return Err(malformed(token, dash, "'-' before style"));
    }
    let turn = parse_norm(token, &token[dash + 1..], dash + 1)?;

    // Peel `arity` numeric fields off the right end of the pre-dash part.
    let mut end = dash;
    let mut fields = Vec::with_capacity(arity);
    for _ in 0..arity {
        let us = token[rest_at..end]
            .rfind('_')
            .map(|i| i + rest_at)
            .ok_or_else(|| malformed(token, rest_at, "too few numeric fields"))?;
        fields.push(parse_norm(token, &token[us + 1..end], us + 1)?);
        end = us;
    }
    fields.reverse();

    let style_str = &token[rest_at..end];
    let style = ActionStyle::new(style_str).map_err(|_| {
        malformed(
            token,
            rest_at,
            format!("invalid style {style_str:?} (or wrong field count)"),
        )
    })?;

    Ok(match arity {
        1 => BasicAction::Line {
            style,
            length: fields[0],
            turn,
        },
        _ => BasicAction::Arc {
            style,
            radius: fields[0],
            sweep: fields[1],
            turn,
        },
    })
}

pub fn serialize_action(action: &BasicAction) -> String {
    action.to_string()
}

/// One pen-down stroke: a non-empty sequence of actions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OneStrokeShape {
    actions: Vec<BasicAction>,
}

impl OneStrokeShape {
    pub fn new(actions: Vec<BasicAction>) -> Result<Self, GrammarError> {
        if actions.is_empty() {
            return Err(GrammarError::EmptyShape { shape: 0 });
        }
        Ok(OneStrokeShape { actions })
    }

    pub fn actions(&self) -> &[BasicAction] {
        &self.actions
    }

    /// Replaces the action order. The caller guarantees the result is non-empty.
    pub(crate) fn actions_mut(&mut self) -> &mut Vec<BasicAction> {
        &mut self.actions
    }
}

/// A figure made of one or more strokes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<String>>", into = "Vec<Vec<String>>")]
pub struct BongardImage {
    shapes: Vec<OneStrokeShape>,
}

impl BongardImage {
    pub fn new(shapes: Vec<OneStrokeShape>) -> Result<Self, GrammarError> {
        if shapes.is_empty() {
            return Err(GrammarError::EmptyImage);
        }
        Ok(BongardImage { shapes })
    }

    pub fn shapes(&self) -> &[OneStrokeShape] {
        &self.shapes
    }

    pub(crate) fn shapes_mut(&mut self) -> &mut [OneStrokeShape] {
        &mut self.shapes
    }

    pub fn actions(&self) -> impl Iterator<Item = &BasicAction> {
        self.shapes.iter().flat_map(|s| s.actions.iter())
    }

    pub fn action_count(&self) -> usize {
        self.shapes.iter().map(|s| s.actions.len()).sum()
    }

    /// Serialized tokens in drawing order, ignoring shape boundaries.
    pub fn tokens(&self) -> Vec<String> {
        self.actions().map(|a| a.to_string()).collect()
    }

    /// Styles outside [`KNOWN_STYLES`].
    pub fn unknown_styles(&self) -> Vec<&ActionStyle> {
        let mut out: Vec<&ActionStyle> = self
            .actions()
            .map(BasicAction::style)
            .filter(|s| !s.is_known())
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

pub fn parse_image<S: AsRef<str>>(nested: &[Vec<S>]) -> Result<BongardImage, GrammarError> {
    if nested.is_empty() {
        return Err(GrammarError::EmptyImage);
    }
    let mut shapes = Vec::with_capacity(nested.len());
    for (si, tokens) in nested.iter().enumerate() {
        if tokens.is_empty() {
            return Err(GrammarError::EmptyShape { shape: si });
        }
        let actions = tokens
            .iter()
            .enumerate()
            .map(|(ai, t)| {
                parse_action(t.as_ref()).map_err(|e| GrammarError::InShape {
                    shape: si,
                    action: ai,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        shapes.push(OneStrokeShape { actions });
    }
    Ok(BongardImage { shapes })
}

pub fn serialize_image(image: &BongardImage) -> Vec<Vec<String>> {
    image
        .shapes
        .iter()
        .map(|s| s.actions.iter().map(ToString::to_string).collect())
        .collect()
}

impl TryFrom<Vec<Vec<String>>> for BongardImage {
    type Error = GrammarError;

    fn try_from(value: Vec<Vec<String>>) -> Result<Self, Self::Error> {
        parse_image(&value)
    }
}

impl From<BongardImage> for Vec<Vec<String>> {
    fn from(image: BongardImage) -> Self {
        serialize_image(&image)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_line_and_arc() {
        let line = parse_action("line_normal_0.300-0.500").unwrap();
        assert_eq!(
            line,
            BasicAction::Line {
                style: ActionStyle::new("normal").unwrap(),
                length: Norm(300),
                turn: Norm(500),
            }
        );
        let arc = parse_action("arc_zigzag_0.500_0.625-0.500").unwrap();
        assert_eq!(
            arc,
            BasicAction::Arc {
                style: ActionStyle::new("zigzag").unwrap(),
                radius: Norm(500),
                sweep: Norm(625),
                turn: Norm(500),
            }
        );
    }

    #[test]
    fn serializes_fixed_point() {
        let a = BasicAction::Line {
            style: ActionStyle::new("square").unwrap(),
            length: Norm::from_f64(0.2).unwrap(),
            turn: Norm::from_f64(0.5).unwrap(),
        };
        assert_eq!(serialize_action(&a), "line_square_0.200-0.500");
        let b = BasicAction::Line {
            style: ActionStyle::new("normal").unwrap(),
            length: Norm::from_f64(1.0).unwrap(),
            turn: Norm::from_f64(0.5).unwrap(),
        };
        assert_eq!(serialize_action(&b), "line_normal_1.000-0.500");
    }

    #[test]
    fn rejects_malformed() {
        for bad in [
            "line_normal_1.5-0.5",
            "line_normal_1.500-0.500",
            "line_normal_0.30-0.500",
            "line_normal_0.300",
            "line_normal_0.300_0.200-0.500",
            "arc_normal_0.300-0.500",
            "curve_normal_0.300-0.500",
            "line__0.300-0.500",
            "line_Normal_0.300-0.500",
            "line_normal_0.3a0-0.500",
            "line_normal_-0.300-0.500",
            "",
            "line",
        ] {
            assert!(
                matches!(parse_action(bad), Err(GrammarError::MalformedToken { .. })),
                "{bad:?} should be rejected"
            );
        }
    }

    #[test]
    fn error_offset_points_at_fault() {
        match parse_action("line_normal_0.3x0-0.500") {
            Err(GrammarError::MalformedToken { offset, .. }) => assert_eq!(offset, 15),
            other => panic!("unexpected {other:?}"),
        }
        match parse_action("line_normal_0.300-1.001") {
            Err(GrammarError::MalformedToken { offset, .. }) => assert_eq!(offset, 18),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn multi_word_style_is_carried() {
        let a = parse_action("line_right_angle_0.300-0.500").unwrap();
        assert_eq!(a.style().as_str(), "right_angle");
        assert!(!a.style().is_known());
        assert_eq!(a.to_string(), "line_right_angle_0.300-0.500");
    }

    #[test]
    fn conversions() {
        assert_eq!(turn_to_degrees(0.875).unwrap().degrees(), 135.0);
        assert_eq!(turn_to_degrees(0.5).unwrap().degrees(), 0.0);
        assert!((turn_to_degrees(0.167).unwrap().degrees() + 119.88).abs() < 1e-9);
        assert!((turn_to_degrees(0.086).unwrap().degrees() + 149.04).abs() < 1e-9);
        assert_eq!(sweep_to_degrees(0.625).unwrap().degrees(), 90.0);
        assert_eq!(sweep_to_degrees(0.5).unwrap().degrees(), 0.0);
        assert_eq!(sweep_to_degrees(0.75).unwrap().degrees(), 180.0);
        assert!(matches!(turn_to_degrees(1.2), Err(GrammarError::OutOfRange(_))));
        assert!(matches!(sweep_to_degrees(-0.1), Err(GrammarError::OutOfRange(_))));
    }

    #[test]
    fn exact_and_float_paths_agree() {
        for k in 0..=1000u16 {
            let n = Norm(k);
            let t = turn_to_degrees(n.value()).unwrap().degrees();
            assert!((n.turn_degrees().degrees() - t).abs() < 1e-9);
            let s = sweep_to_degrees(n.value()).unwrap().degrees();
            assert!((n.sweep_degrees().degrees() - s).abs() < 1e-9);
        }
    }

    #[test]
    fn image_errors() {
        let empty: Vec<Vec<String>> = vec![vec![]];
        assert_eq!(parse_image(&empty), Err(GrammarError::EmptyShape { shape: 0 }));
        let none: Vec<Vec<String>> = vec![];
        assert_eq!(parse_image(&none), Err(GrammarError::EmptyImage));
        let bad = vec![vec!["line_normal_0.300-0.500".to_string()], vec!["oops".to_string()]];
        match parse_image(&bad) {
            Err(GrammarError::InShape { shape, action, .. }) => {
                assert_eq!((shape, action), (1, 0))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn image_serde_is_nested_arrays() {
        let json = r#"[["line_normal_0.300-0.500","arc_zigzag_0.500_0.625-0.500"],["line_circle_0.200-0.750"]]"#;
        let img: BongardImage = serde_json::from_str(json).unwrap();
        assert_eq!(img.shapes().len(), 2);
        assert_eq!(img.action_count(), 3);
        assert_eq!(serde_json::to_string(&img).unwrap(), json);
    }
}
