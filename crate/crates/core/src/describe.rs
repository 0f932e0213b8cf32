//! Step-by-step English renderings of action programs ("action descriptions").

use std::fmt;

use thiserror::Error;

use crate::grammar::{ActionStyle, BasicAction, BongardImage, Norm, OneStrokeShape, TurnDirection};

pub const FOOTER: &str = "The figure is now complete.";
const STRAIGHT: &str = " Then, continue straight without turning.";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DescribeError {
    #[error("line {line}: {reason}")]
    TemplateMismatch { line: usize, reason: String },
}

fn mismatch(line: usize, reason: impl Into<String>) -> DescribeError {
    DescribeError::TemplateMismatch {
        line,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionDescription {
    pub figure_index: usize,
    pub lines: Vec<String>,
}

impl ActionDescription {
    /// Lines joined by `\n`, without a trailing newline.
    pub fn text(&self) -> String {
        self.lines.join("\n")
    }
}

impl fmt::Display for ActionDescription {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

pub fn header(figure_index: usize) -> String {
    format!("To draw figure {figure_index}, follow these steps:")
}

/// The sentence for one action, without the `Step k: ` prefix.
pub fn step_clause(action: &BasicAction) -> String {
    let mut s = match action {
        BasicAction::Line { style, length, .. } => {
            format!("draw a {style} line of {length} units.")
        }
        BasicAction::Arc {
            style,
            radius,
            sweep,
            ..
        } => format!(
            "draw a {style} arc with a radius of {radius} and sweeping {} degrees.",
            sweep.sweep_degrees().magnitude_one_decimal()
        ),
    };
    let turn = action.turn_degrees();
    match turn.direction() {
        TurnDirection::Straight => s.push_str(STRAIGHT),
        dir => {
            let side = if dir == TurnDirection::Left { "left" } else { "right" };
            s.push_str(&format!(
                " After that, turn {side} by {} degrees.",
                turn.magnitude_one_decimal()
            ));
        }
    }
    s
}

/// Renders an image; steps are numbered continuously across shapes.
pub fn render_description(image: &BongardImage, figure_index: usize) -> ActionDescription {
    let mut lines = Vec::with_capacity(image.action_count() + 2);
    lines.push(header(figure_index));
    for (k, action) in image.actions().enumerate() {
        lines.push(format!("Step {}: {}", k + 1, step_clause(action)));
    }
    lines.push(FOOTER.to_string());
    ActionDescription {
        figure_index,
        lines,
    }
}

/// Parses text produced by [`render_description`] back into a single-shape image.
pub fn parse_description(text: &str) -> Result<BongardImage, DescribeError> {
    parse_description_indexed(text).map(|(_, img)| img)
}

/// Like [`parse_description`], also returning the figure index from the header.
pub fn parse_description_indexed(text: &str) -> Result<(usize, BongardImage), DescribeError> {
    let text = text.strip_suffix('\n').unwrap_or(text);
    let lines: Vec<&str> = text
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect();

    let figure_index = lines
        .first()
        .and_then(|h| h.strip_prefix("To draw figure "))
        .and_then(|h| h.strip_suffix(", follow these steps:"))
        .and_then(|n| n.parse::<usize>().ok())
        .ok_or_else(|| mismatch(1, "expected header 'To draw figure N, follow these steps:'"))?;

    if lines.len() < 3 {
        return Err(mismatch(lines.len() + 1, "expected at least one step and the footer"));
    }
    let last = lines.len() - 1;
    if lines[last] != FOOTER {
        return Err(mismatch(last + 1, format!("expected footer {FOOTER:?}")));
    }

    let mut actions = Vec::with_capacity(last - 1);
    for (i, line) in lines[1..last].iter().enumerate() {
        let line_no = i + 2;
        actions.push(parse_step(line, i + 1).map_err(|r| mismatch(line_no, r))?);
    }
    let shape = OneStrokeShape::new(actions).map_err(|e| mismatch(2, e.to_string()))?;
    let image = BongardImage::new(vec![shape]).map_err(|e| mismatch(2, e.to_string()))?;
    Ok((figure_index, image))
}

fn parse_step(line: &str, expected_step: usize) -> Result<BasicAction, String> {
    let prefix = format!("Step {expected_step}: draw a ");
    let rest = line
        .strip_prefix(&prefix)
        .ok_or_else(|| format!("expected line to start with {prefix:?}"))?;

    let (body, turn) = if let Some(body) = rest.strip_suffix(STRAIGHT) {
        (body, Norm::MIDPOINT)
    } else {
        let (body, clause) = rest
            .split_once(" After that, turn ")
            .ok_or("missing turn clause")?;
        let clause = clause
            .strip_suffix(" degrees.")
            .ok_or("turn clause must end with ' degrees.'")?;
        let (side, deg) = clause.split_once(" by ").ok_or("malformed turn clause")?;
        let deg = parse_degrees(deg)?;
        let signed = match side {
            "left" => deg,
            "right" => -deg,
            _ => return Err(format!("unknown turn direction {side:?}")),
        };
        (body, norm_from_degrees(signed, 360.0)?)
    };

    if let Some(line_body) = body.strip_suffix(" units.") {
        let (style, length) = line_body
            .rsplit_once(" line of ")
            .ok_or("malformed line step")?;
        Ok(BasicAction::Line {
            style: parse_style(style)?,
            length: parse_three_decimals(length)?,
            turn,
        })
    } else if let Some(arc_body) = body.strip_suffix(" degrees.") {
        let (style, params) = arc_body
            .split_once(" arc with a radius of ")
            .ok_or("malformed arc step")?;
        let (radius, sweep) = params
            .split_once(" and sweeping ")
            .ok_or("malformed arc step")?;
        // only the magnitude is printed; recover a non-negative sweep
        let sweep = norm_from_degrees(parse_degrees(sweep)?, 720.0)?;
        Ok(BasicAction::Arc {
            style: parse_style(style)?,
            radius: parse_three_decimals(radius)?,
            sweep,
            turn,
        })
    } else {
        Err("step body is neither a line nor an arc".to_string())
    }
}

fn parse_style(s: &str) -> Result<ActionStyle, String> {
    ActionStyle::new(s).map_err(|_| format!("invalid style {s:?}"))
}

fn parse_three_decimals(s: &str) -> Result<Norm, String> {
    let ok = s.len() == 5 && s.as_bytes()[1] == b'.' && s.bytes().filter(u8::is_ascii_digit).count() == 4;
    if !ok {
        return Err(format!("expected a d.ddd value, got {s:?}"));
    }
    let v: f64 = s.parse().map_err(|_| format!("bad number {s:?}"))?;
    Norm::from_f64(v).map_err(|e| e.to_string())
}

fn parse_degrees(s: &str) -> Result<f64, String> {
    let ok = matches!(s.split_once('.'), Some((i, f)) if !i.is_empty() && f.len() == 1
        && i.bytes().all(|b| b.is_ascii_digit()) && f.bytes().all(|b| b.is_ascii_digit()));
    if !ok {
        return Err(format!("expected degrees with one decimal, got {s:?}"));
    }
    s.parse().map_err(|_| format!("bad degrees {s:?}"))
}

/// Inverts `(v - 0.5) * scale` to the nearest thousandth.
fn norm_from_degrees(degrees: f64, scale: f64) -> Result<Norm, String> {
    Norm::from_f64(0.5 + degrees / scale).map_err(|e| e.to_string())
}
