//! Lowercase stroke glyphs for the tracing task.
//!
//! Glyphs are built from line and circular-arc primitives inside a
//! 0.09 m × 0.15 m box (x-height 0.075 m). Coordinates are meters on the
//! whiteboard: x to the board's right, y up.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use super::ScenarioError;

pub const GLYPH_WIDTH: f64 = 0.09;
pub const GLYPH_HEIGHT: f64 = 0.15;
pub const GLYPH_GAP: f64 = 0.03;
const X_HEIGHT: f64 = 0.075;
/// Arc flattening step, rad.
const ARC_STEP: f64 = 5.0 * PI / 180.0;

pub type Point2 = [f64; 2];
pub type Polyline = Vec<Point2>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub center: Point2,
    pub radius: f64,
    pub start: f64,
    /// Signed sweep, rad (positive is counter-clockwise).
    pub sweep: f64,
}

impl Arc {
    fn points(&self) -> Vec<Point2> {
        let n = ((self.sweep.abs() / ARC_STEP).ceil() as usize).max(1);
        (0..=n)
            .map(|i| {
                let a = self.start + self.sweep * i as f64 / n as f64;
                [self.center[0] + self.radius * a.cos(), self.center[1] + self.radius * a.sin()]
            })
            .collect()
    }

    fn shifted(&self, dx: f64, dy: f64) -> Arc {
        Arc { center: [self.center[0] + dx, self.center[1] + dy], ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Prim {
    Line(Point2, Point2),
    Arc(Arc),
}

fn arc(cx: f64, cy: f64, r: f64, start: f64, sweep: f64) -> Prim {
    Prim::Arc(Arc { center: [cx, cy], radius: r, start, sweep })
}

fn line(a: Point2, b: Point2) -> Prim {
    Prim::Line(a, b)
}

/// Each inner list is one pen stroke made of connected primitives.
fn glyph_prims(c: char) -> Option<Vec<Vec<Prim>>> {
    let h = GLYPH_HEIGHT;
    let x = X_HEIGHT;
    let w = GLYPH_WIDTH;
    let prims = match c {
        'h' => vec![
            vec![line([0.0, h], [0.0, 0.0])],
            vec![arc(w / 2.0, 0.045, w / 2.0, PI, -PI), line([w, 0.045], [w, 0.0])],
        ],
        'r' => vec![vec![line([0.0, x], [0.0, 0.0])], vec![arc(0.045, 0.03, 0.045, PI, -3.0 * FRAC_PI_4)]],
        'i' => vec![vec![line([w / 2.0, x], [w / 2.0, 0.0])], vec![line([w / 2.0, 0.1], [w / 2.0, 0.11])]],
        'o' => vec![vec![arc(w / 2.0, x / 2.0, x / 2.0, FRAC_PI_2, TAU)]],
        's' => {
            let r = x / 4.0;
            vec![vec![arc(w / 2.0, 3.0 * r, r, 0.5, 1.5 * PI - 0.5), arc(w / 2.0, r, r, FRAC_PI_2, -(4.0 * PI / 3.0))]]
        }
        'l' => vec![vec![line([w / 2.0, h], [w / 2.0, 0.0])]],
        'a' => vec![
            vec![arc(0.04, x / 2.0, x / 2.0, 0.0, TAU)],
            vec![line([0.04 + x / 2.0, x], [0.04 + x / 2.0, 0.0])],
        ],
        'b' => vec![vec![line([0.0, h], [0.0, 0.0])], vec![arc(x / 2.0, x / 2.0, x / 2.0, PI, TAU)]],
        _ => return None,
    };
    Some(prims)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Glyph {
    pub letter: char,
    /// Lower-left corner of the glyph box.
    pub origin: Point2,
    pub size: [f64; 2],
    pub strokes: Vec<Polyline>,
    /// Arc primitives the strokes were generated from, placed.
    pub arcs: Vec<Arc>,
}

impl Glyph {
    pub fn contains(&self, p: &Point2, tol: f64) -> bool {
        p[0] >= self.origin[0] - tol
            && p[0] <= self.origin[0] + self.size[0] + tol
            && p[1] >= self.origin[1] - tol
            && p[1] <= self.origin[1] + self.size[1] + tol
    }
}

fn push_unique(out: &mut Polyline, p: Point2) {
    if out.last().is_none_or(|q| (q[0] - p[0]).hypot(q[1] - p[1]) > 1e-12) {
        out.push(p);
    }
}

fn build_glyph(letter: char, origin: Point2) -> Option<Glyph> {
    let (dx, dy) = (origin[0], origin[1]);
    let mut strokes = Vec::new();
    let mut arcs = Vec::new();
    for stroke in glyph_prims(letter)? {
        let mut poly = Polyline::new();
        for prim in stroke {
            match prim {
                Prim::Line(a, b) => {
                    push_unique(&mut poly, [a[0] + dx, a[1] + dy]);
                    push_unique(&mut poly, [b[0] + dx, b[1] + dy]);
                }
                Prim::Arc(a) => {
                    let placed = a.shifted(dx, dy);
                    for p in placed.points() {
                        push_unique(&mut poly, p);
                    }
                    arcs.push(placed);
                }
            }
        }
        strokes.push(poly);
    }
    Some(Glyph { letter, origin, size: [GLYPH_WIDTH, GLYPH_HEIGHT], strokes, arcs })
}

/// Known letter sets.
pub const LETTER_SETS: [&str; 3] = ["hri", "ros", "lab"];

/// Glyphs of a letter set laid out left to right and centered on the board
/// origin.
pub fn letter_paths(set: &str) -> Result<Vec<Glyph>, ScenarioError> {
    if !LETTER_SETS.contains(&set) {
        return Err(ScenarioError::UnknownSet(set.to_string()));
    }
    let n = set.chars().count() as f64;
    let width = n * GLYPH_WIDTH + (n - 1.0) * GLYPH_GAP;
    set.chars()
        .enumerate()
        .map(|(i, c)| {
            let origin = [-width / 2.0 + i as f64 * (GLYPH_WIDTH + GLYPH_GAP), -GLYPH_HEIGHT / 2.0];
            build_glyph(c, origin).ok_or_else(|| ScenarioError::UnknownSet(set.to_string()))
        })
        .collect()
}

/// All strokes of a set joined into one continuous pen path.
pub fn target_curve(set: &str) -> Result<Polyline, ScenarioError> {
    let mut out = Polyline::new();
    for glyph in letter_paths(set)? {
        for stroke in glyph.strokes {
            for p in stroke {
                push_unique(&mut out, p);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hri_contract() {
        let glyphs = letter_paths("hri").unwrap();
        assert_eq!(glyphs.len(), 3);
        let strokes: usize = glyphs.iter().map(|g| g.strokes.len()).sum();
        assert!(strokes >= 2);
        for g in &glyphs {
            for s in &g.strokes {
                assert!(s.len() >= 2);
                assert!(s.iter().all(|p| g.contains(p, 1e-12)), "{}", g.letter);
            }
        }
    }

    #[test]
    fn arc_points_on_circle() {
        for set in LETTER_SETS {
            for g in letter_paths(set).unwrap() {
                for a in &g.arcs {
                    for p in a.points() {
                        let r = (p[0] - a.center[0]).hypot(p[1] - a.center[1]);
                        assert!((r - a.radius).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn unknown_set() {
        assert!(matches!(letter_paths("xyz"), Err(ScenarioError::UnknownSet(_))));
    }

    #[test]
    fn sets_fit_in_glyph_boxes_and_are_centered() {
        for set in LETTER_SETS {
            let curve = target_curve(set).unwrap();
            assert!(curve.len() > 10);
            let min_x = curve.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let max_x = curve.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            assert!(min_x >= -0.21 && max_x <= 0.21, "{set}: {min_x} {max_x}");
            assert!(curve.iter().all(|p| p[1].abs() <= GLYPH_HEIGHT / 2.0 + 1e-12));
        }
    }
}
