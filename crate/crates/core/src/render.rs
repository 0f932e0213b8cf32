//! Turtle interpreter that draws action programs as SVG.
//!
//! The turtle starts at the canvas centre heading up. Headings are in
//! degrees, counterclockwise positive. A line advances `length * scale`
//! pixels; an arc of radius `radius * scale` turns the heading by its sweep
//! (positive sweeps curve left). After every action the turtle rotates by the
//! action's turn angle. Stroke styles are not drawn as glyphs; each path
//! carries the style name as a CSS class.

use std::fmt::Write;

use thiserror::Error;

use crate::grammar::{BasicAction, BongardImage};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error("canvas size must be positive")]
    EmptyCanvas,
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurtleState {
    pub x: f64,
    pub y: f64,
    /// Degrees; 0 points up the screen, counterclockwise positive.
    pub heading: f64,
}

impl TurtleState {
    /// Unit vector of `heading` in screen coordinates (y grows downward).
    fn dir(heading: f64) -> (f64, f64) {
        let r = heading.to_radians();
        (-r.sin(), -r.cos())
    }
}

/// One drawn primitive in screen coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    Line {
        from: (f64, f64),
        to: (f64, f64),
    },
    Arc {
        from: (f64, f64),
        to: (f64, f64),
        center: (f64, f64),
        radius: f64,
        /// Signed sweep in degrees; positive is counterclockwise on screen.
        sweep: f64,
    },
    /// Zero-radius arc with a nonzero sweep.
    Point { at: (f64, f64) },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrokeTrace {
    pub segments: Vec<(String, Segment)>,
    pub start: (f64, f64),
    pub end: TurtleState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub strokes: Vec<StrokeTrace>,
    pub warnings: Vec<String>,
}

impl Trace {
    /// Axis-aligned bounds `(min_x, min_y, max_x, max_y)`; arcs are sampled.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut add = |(x, y): (f64, f64)| {
            b.0 = b.0.min(x);
            b.1 = b.1.min(y);
            b.2 = b.2.max(x);
            b.3 = b.3.max(y);
        };
        for stroke in &self.strokes {
            add(stroke.start);
            for (_, seg) in &stroke.segments {
                match *seg {
                    Segment::Line { from, to } => {
                        add(from);
                        add(to);
                    }
                    Segment::Point { at } => add(at),
                    Segment::Arc {
                        from,
                        center,
                        radius,
                        sweep,
                        ..
                    } => {
                        let a0 = (from.1 - center.1).atan2(from.0 - center.0);
                        for i in 0..=32 {
                            // counterclockwise on screen is a decreasing atan2 angle
                            let a = a0 - sweep.to_radians() * f64::from(i) / 32.0;
                            add((center.0 + radius * a.cos(), center.1 + radius * a.sin()));
                        }
                    }
                }
            }
        }
        b
    }
}

/// Runs the turtle over every stroke of `image`.
pub fn trace(image: &BongardImage, origin: (f64, f64), scale: f64) -> Trace {
    let mut turtle = TurtleState {
        x: origin.0,
        y: origin.1,
        heading: 0.0,
    };
    let mut strokes = Vec::with_capacity(image.shapes().len());
    let mut warnings = Vec::new();

    for (si, shape) in image.shapes().iter().enumerate() {
        let start = (turtle.x, turtle.y);
        let mut segments = Vec::with_capacity(shape.actions().len());
        for (ai, action) in shape.actions().iter().enumerate() {
            let from = (turtle.x, turtle.y);
            let seg = match action {
                BasicAction::Line { length, .. } => {
                    let (dx, dy) = TurtleState::dir(turtle.heading);
                    let d = length.value() * scale;
                    turtle.x += dx * d;
                    turtle.y += dy * d;
                    Segment::Line {
                        from,
                        to: (turtle.x, turtle.y),
                    }
                }
                BasicAction::Arc { radius, sweep, .. } => {
                    let theta = sweep.sweep_degrees().degrees();
                    let r = radius.value() * scale;
                    if r == 0.0 {
                        if theta != 0.0 {
                            warnings.push(format!(
                                "shape {si}, action {ai}: zero-radius arc drawn as a point"
                            ));
                        }
                        turtle.heading += theta;
                        Segment::Point { at: from }
                    } else {
                        let side = if theta >= 0.0 { 90.0 } else { -90.0 };
                        let (cx, cy) = TurtleState::dir(turtle.heading + side);
                        let center = (turtle.x + r * cx, turtle.y + r * cy);
                        turtle.heading += theta;
                        let (ex, ey) = TurtleState::dir(turtle.heading - side);
                        turtle.x = center.0 + r * ex;
                        turtle.y = center.1 + r * ey;
                        Segment::Arc {
                            from,
                            to: (turtle.x, turtle.y),
                            center,
                            radius: r,
                            sweep: theta,
                        }
                    }
                }
            };
            turtle.heading += action.turn_degrees().degrees();
            segments.push((action.style().to_string(), seg));
        }
        strokes.push(StrokeTrace {
            segments,
            start,
            end: turtle,
        });
    }
    Trace { strokes, warnings }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvgOutput {
    pub svg: String,
    pub warnings: Vec<String>,
    pub bounding_box: (f64, f64, f64, f64),
}

fn num(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".to_string()
    } else {
        s
    }
}

fn pt((x, y): (f64, f64)) -> String {
    format!("{} {}", num(x), num(y))
}

/// Renders `image` as an SVG 1.1 document.
pub fn render_svg(image: &BongardImage, canvas_size: u32, scale: f64) -> Result<SvgOutput, RenderError> {
    if canvas_size == 0 {
        return Err(RenderError::EmptyCanvas);
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(RenderError::InvalidScale(scale));
    }
    let c = f64::from(canvas_size) / 2.0;
    let tr = trace(image, (c, c), scale);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{canvas_size}" height="{canvas_size}" viewBox="0 0 {canvas_size} {canvas_size}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<g fill="none" stroke="black" stroke-width="2" stroke-linecap="round" stroke-linejoin="round">"#
    );
    for (si, stroke) in tr.strokes.iter().enumerate() {
        let _ = writeln!(svg, r#"<g class="shape" id="shape-{si}">"#);
        for (style, seg) in &stroke.segments {
            let d = match *seg {
                Segment::Line { from, to } => format!("M {} L {}", pt(from), pt(to)),
                Segment::Point { at } => format!("M {} l 0 0", pt(at)),
                Segment::Arc {
                    from,
                    to,
                    center,
                    radius,
                    sweep,
                } => {
                    // SVG arcs cannot close a full circle; split through the midpoint.
                    let sweep_flag = if sweep >= 0.0 { 0 } else { 1 };
                    let a0 = (from.1 - center.1).atan2(from.0 - center.0);
                    let am = a0 - (sweep / 2.0).to_radians();
                    let mid = (center.0 + radius * am.cos(), center.1 + radius * am.sin());
                    let r = num(radius);
                    format!(
                        "M {} A {r} {r} 0 0 {sweep_flag} {} A {r} {r} 0 0 {sweep_flag} {}",
                        pt(from),
                        pt(mid),
                        pt(to)
                    )
                }
            };
            let _ = writeln!(svg, r#"<path class="action {style}" d="{d}"/>"#);
        }
        let _ = writeln!(svg, "</g>");
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, "</svg>");

    Ok(SvgOutput {
        svg,
        bounding_box: tr.bounding_box(),
        warnings: tr.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_image;

    fn img(shapes: &[&[&str]]) -> BongardImage {
        let nested: Vec<Vec<&str>> = shapes.iter().map(|s| s.to_vec()).collect();
        parse_image(&nested).unwrap()
    }

    #[test]
    fn square_closes() {
        let sq = img(&[&["line_normal_0.300-0.750"; 4]]);
        let t = trace(&sq, (0.0, 0.0), 100.0);
        let s = &t.strokes[0];
        assert_eq!(s.segments.len(), 4);
        assert!((s.end.x - s.start.0).abs() < 1e-6);
        assert!((s.end.y - s.start.1).abs() < 1e-6);
        assert!((s.end.heading - 360.0).abs() < 1e-9);
        // first leg goes up, then the turtle turns left
        match s.segments[0].1 {
            Segment::Line { to, .. } => assert!((to.1 + 30.0).abs() < 1e-9),
            _ => unreachable!(),
        }
        match s.segments[1].1 {
            Segment::Line { from, to } => assert!(to.0 < from.0),
            _ => unreachable!(),
        }
    }

    #[test]
    fn full_circle_arc_returns_to_start() {
        let c = img(&[&["arc_normal_0.250_1.000-0.500"]]);
        let t = trace(&c, (10.0, 10.0), 100.0);
        let end = t.strokes[0].end;
        assert!((end.x - 10.0).abs() < 1e-6 && (end.y - 10.0).abs() < 1e-6);
        let (x0, y0, x1, y1) = t.bounding_box();
        // circle of radius 25 to the left of an upward heading
        assert!((x0 + 40.0).abs() < 1e-6 && (x1 - 10.0).abs() < 1e-6);
        assert!((y0 + 15.0).abs() < 1e-6 && (y1 - 35.0).abs() < 1e-6);
    }

    #[test]
    fn quarter_arcs_left_and_right() {
        let left = trace(&img(&[&["arc_normal_1.000_0.625-0.500"]]), (0.0, 0.0), 1.0);
        let e = left.strokes[0].end;
        assert!((e.x + 1.0).abs() < 1e-9 && (e.y + 1.0).abs() < 1e-9);
        assert!((e.heading - 90.0).abs() < 1e-9);
        let right = trace(&img(&[&["arc_normal_1.000_0.375-0.500"]]), (0.0, 0.0), 1.0);
        let e = right.strokes[0].end;
        assert!((e.x - 1.0).abs() < 1e-9 && (e.y + 1.0).abs() < 1e-9);
        assert!((e.heading + 90.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_arc_warns() {
        let out = render_svg(&img(&[&["arc_normal_0.000_0.750-0.500"]]), 64, 10.0).unwrap();
        assert_eq!(out.warnings.len(), 1);
        assert!(out.svg.contains("l 0 0"));
    }

    #[test]
    fn preconditions() {
        let one = img(&[&["line_normal_0.300-0.500"]]);
        assert_eq!(render_svg(&one, 0, 1.0), Err(RenderError::EmptyCanvas));
        assert!(matches!(render_svg(&one, 10, 0.0), Err(RenderError::InvalidScale(_))));
    }

    #[test]
    fn shapes_are_separate_groups_and_output_is_stable() {
        let two = img(&[&["line_zigzag_0.300-0.500"], &["arc_circle_0.200_0.625-0.500"]]);
        let a = render_svg(&two, 200, 50.0).unwrap();
        let b = render_svg(&two, 200, 50.0).unwrap();
        assert_eq!(a.svg, b.svg);
        assert_eq!(a.svg.matches(r#"class="shape""#).count(), 2);
        assert!(a.svg.contains(r#"class="action zigzag""#));
        assert!(a.svg.contains(r#"class="action circle""#));
    }
}
