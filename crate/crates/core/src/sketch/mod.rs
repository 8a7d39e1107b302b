//! Vector sketches in the five-element point representation.
//!
//! A sketch is an ordered list of points `(x, y, pen)` where `pen` is the
//! one-hot pen state: touching the canvas ([`PenState::Down`]), lifted
//! ([`PenState::Up`]) or end of drawing ([`PenState::End`]).

mod format;

pub use format::{
    parse_labeled_ndjson, parse_vector_sketch, stroke3_to_stroke5, LabeledSketch, SketchFormat,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_CANVAS: u32 = 256;
pub const DEFAULT_MARGIN: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SketchError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("invalid sketch: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PenState {
    Down,
    Up,
    End,
}

impl PenState {
    /// One-hot `(q1, q2, q3)` encoding.
    pub fn one_hot(self) -> [u8; 3] {
        match self {
            PenState::Down => [1, 0, 0],
            PenState::Up => [0, 1, 0],
            PenState::End => [0, 0, 1],
        }
    }

    pub fn from_one_hot(q: [f64; 3]) -> Option<PenState> {
        match q {
            [a, b, c] if a == 1.0 && b == 0.0 && c == 0.0 => Some(PenState::Down),
            [a, b, c] if a == 0.0 && b == 1.0 && c == 0.0 => Some(PenState::Up),
            [a, b, c] if a == 0.0 && b == 0.0 && c == 1.0 => Some(PenState::End),
            _ => None,
        }
    }

    pub fn is_down(self) -> bool {
        self == PenState::Down
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub pen: PenState,
}

impl Point {
    pub fn new(x: f64, y: f64, pen: PenState) -> Self {
        Point { x, y, pen }
    }

    pub fn down(x: f64, y: f64) -> Self {
        Point::new(x, y, PenState::Down)
    }

    pub fn up(x: f64, y: f64) -> Self {
        Point::new(x, y, PenState::Up)
    }

    pub fn end(x: f64, y: f64) -> Self {
        Point::new(x, y, PenState::End)
    }

    pub fn xy(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

/// A validated vector sketch on a `canvas_w x canvas_h` canvas.
///
/// Invariants: at least one point, at least one `Down` point, at most one
/// `End` point and only in last position, all coordinates finite.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSketch {
    points: Vec<Point>,
    canvas_w: u32,
    canvas_h: u32,
}

impl VectorSketch {
    pub fn new(points: Vec<Point>, canvas_w: u32, canvas_h: u32) -> Result<Self, SketchError> {
        if canvas_w == 0 || canvas_h == 0 {
            return Err(SketchError::Validation("canvas dimensions must be positive".into()));
        }
        if points.is_empty() {
            return Err(SketchError::Validation("empty drawing".into()));
        }
        if let Some(i) = points.iter().position(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(SketchError::Validation(format!("point {i} has a non-finite coordinate")));
        }
        if let Some(i) = points.iter().position(|p| p.pen == PenState::End) {
            if i + 1 != points.len() {
                return Err(SketchError::Validation(format!(
                    "end-of-drawing marker at point {i} is not the last point"
                )));
            }
        }
        if !points.iter().any(|p| p.pen.is_down()) {
            return Err(SketchError::Validation("no pen-down point, nothing to draw".into()));
        }
        Ok(VectorSketch { points, canvas_w, canvas_h })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn canvas_w(&self) -> u32 {
        self.canvas_w
    }

    pub fn canvas_h(&self) -> u32 {
        self.canvas_h
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.canvas_w as usize, self.canvas_h as usize)
    }

    pub fn has_end(&self) -> bool {
        self.points.last().map(|p| p.pen == PenState::End).unwrap_or(false)
    }

    /// Points up to but excluding the end-of-drawing marker.
    pub fn drawing_points(&self) -> &[Point] {
        if self.has_end() {
            &self.points[..self.points.len() - 1]
        } else {
            &self.points
        }
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    /// Segment `t` joins points `t - 1` and `t`, for `t` in `1..T`.
    pub fn segment_count(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn split_strokes(&self) -> Vec<Stroke> {
        split_strokes(self)
    }

    pub fn normalize(&self, target_w: u32, target_h: u32, margin: f64) -> Result<Self, SketchError> {
        normalize(self, target_w, target_h, margin)
    }

    /// Rebuilds a sketch from strokes in drawing order, appending `end` when given.
    pub fn from_strokes(
        strokes: &[Stroke],
        end: Option<Point>,
        canvas_w: u32,
        canvas_h: u32,
    ) -> Result<Self, SketchError> {
        let mut points: Vec<Point> = strokes.iter().flat_map(|s| s.points.iter().copied()).collect();
        if let Some(e) = end {
            points.push(Point::end(e.x, e.y));
        }
        VectorSketch::new(points, canvas_w, canvas_h)
    }

    /// Copy of the sketch without the strokes whose indices are in `drop`.
    pub fn without_strokes(&self, drop: &[usize]) -> Result<Self, SketchError> {
        let kept: Vec<Stroke> =
            self.split_strokes().into_iter().filter(|s| !drop.contains(&s.index)).collect();
        let end = if self.has_end() { self.points.last().copied() } else { None };
        VectorSketch::from_strokes(&kept, end, self.canvas_w, self.canvas_h)
    }

    /// Copy with the given point indices deleted.
    ///
    /// When a deleted point terminated its stroke (pen `Up`), the last surviving
    /// point of that stroke takes over the `Up` state so the stroke does not get
    /// joined to the next one. `End` markers cannot be removed.
    pub fn without_points(&self, drop: &[usize]) -> Result<Self, SketchError> {
        let mut removed = vec![false; self.points.len()];
        for &i in drop {
            if i >= self.points.len() {
                return Err(SketchError::Validation(format!("point index {i} out of range")));
            }
            if self.points[i].pen == PenState::End {
                return Err(SketchError::Validation("end-of-drawing marker cannot be removed".into()));
            }
            removed[i] = true;
        }
        let mut out: Vec<Point> = Vec::with_capacity(self.points.len());
        // index in `out` of the last kept point that is still inside an open stroke
        let mut open_stroke_tail: Option<usize> = None;
        for (i, p) in self.points.iter().enumerate() {
            if removed[i] {
                if p.pen == PenState::Up {
                    if let Some(j) = open_stroke_tail.take() {
                        out[j].pen = PenState::Up;
                    }
                }
                continue;
            }
            out.push(*p);
            open_stroke_tail = if p.pen.is_down() { Some(out.len() - 1) } else { None };
        }
        VectorSketch::new(out, self.canvas_w, self.canvas_h)
    }

    /// Whether at least one segment starts from a pen-down point.
    pub fn has_drawable_segment(&self) -> bool {
        self.points.windows(2).any(|w| w[0].pen.is_down())
    }

    /// Axis-aligned bounding box `(min_x, min_y, max_x, max_y)` over all points.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.points.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(x0, y0, x1, y1), p| (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y)),
        )
    }
}

/// A contiguous run of points drawn between a pen-down and the next pen-up.
#[derive(Debug, Clone, PartialEq)]
pub struct Stroke {
    /// Ordinal position in drawing order.
    pub index: usize,
    /// Index of the first point within the owning sketch.
    pub start: usize,
    pub points: Vec<Point>,
    pub length_points: usize,
    pub length_px: f64,
}

impl Stroke {
    fn from_points(index: usize, start: usize, points: Vec<Point>) -> Self {
        let length_px = points
            .windows(2)
            .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
            .sum();
        Stroke { index, start, length_points: points.len(), length_px, points }
    }

    /// Sketch-level point indices covered by this stroke.
    pub fn point_range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.length_points
    }
}

/// Splits a sketch into strokes in drawing order.
///
/// A stroke is a maximal run of `Down` points together with the `Up` point that
/// terminates it. An `Up` point with no open stroke forms a one-point stroke.
/// The `End` marker belongs to no stroke.
pub fn split_strokes(sketch: &VectorSketch) -> Vec<Stroke> {
    let mut strokes = Vec::new();
    let mut current: Vec<Point> = Vec::new();
    let mut start = 0;
    for (i, p) in sketch.drawing_points().iter().enumerate() {
        if current.is_empty() {
            start = i;
        }
        current.push(*p);
        if p.pen == PenState::Up {
            strokes.push(Stroke::from_points(strokes.len(), start, std::mem::take(&mut current)));
        }
    }
    if !current.is_empty() {
        strokes.push(Stroke::from_points(strokes.len(), start, current));
    }
    strokes
}

/// Affinely maps the sketch so its bounding box fits the target canvas with a
/// fractional `margin` on every side, preserving aspect ratio and centering the
/// content. A sketch whose points all coincide lands at the canvas center.
pub fn normalize(
    sketch: &VectorSketch,
    target_w: u32,
    target_h: u32,
    margin: f64,
) -> Result<VectorSketch, SketchError> {
    if target_w == 0 || target_h == 0 {
        return Err(SketchError::Validation("target dimensions must be positive".into()));
    }
    if !(0.0..0.5).contains(&margin) {
        return Err(SketchError::Validation(format!("margin {margin} outside [0, 0.5)")));
    }
    let (tw, th) = (target_w as f64, target_h as f64);
    let (x0, y0, x1, y1) = sketch.bounds();
    let (bw, bh) = (x1 - x0, y1 - y0);
    let (avail_w, avail_h) = (tw * (1.0 - 2.0 * margin), th * (1.0 - 2.0 * margin));
    let scale = match (bw > 0.0, bh > 0.0) {
        (true, true) => (avail_w / bw).min(avail_h / bh),
        (true, false) => avail_w / bw,
        (false, true) => avail_h / bh,
        (false, false) => 0.0,
    };
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let points = sketch
        .points()
        .iter()
        .map(|p| Point::new(tw / 2.0 + (p.x - cx) * scale, th / 2.0 + (p.y - cy) * scale, p.pen))
        .collect();
    VectorSketch::new(points, target_w, target_h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use PenState::*;

    fn sk(pens: &[PenState]) -> VectorSketch {
        let pts = pens.iter().enumerate().map(|(i, &p)| Point::new(i as f64, i as f64, p)).collect();
        VectorSketch::new(pts, 16, 16).unwrap()
    }

    fn sizes(s: &VectorSketch) -> Vec<usize> {
        s.split_strokes().iter().map(|s| s.length_points).collect()
    }

    #[test]
    fn split_terminating_up_belongs_to_stroke() {
        assert_eq!(sizes(&sk(&[Down, Down, Up, Down, Down, End])), vec![3, 2]);
        assert_eq!(sizes(&sk(&[Down, Down, Down])), vec![3]);
        assert_eq!(sizes(&sk(&[Down, Up, Down, Up])), vec![2, 2]);
    }

    #[test]
    fn stray_up_is_its_own_stroke() {
        let s = sk(&[Up, Down, Down, Up]);
        assert_eq!(sizes(&s), vec![1, 3]);
        let starts: Vec<usize> = s.split_strokes().iter().map(|s| s.start).collect();
        assert_eq!(starts, vec![0, 1]);
    }

    #[test]
    fn end_must_be_last() {
        let pts = vec![Point::down(0.0, 0.0), Point::end(1.0, 1.0), Point::down(2.0, 2.0)];
        assert!(matches!(VectorSketch::new(pts, 8, 8), Err(SketchError::Validation(_))));
    }

    #[test]
    fn needs_a_down_point() {
        let pts = vec![Point::up(0.0, 0.0), Point::end(1.0, 1.0)];
        assert!(VectorSketch::new(pts, 8, 8).is_err());
        assert!(VectorSketch::new(vec![], 8, 8).is_err());
    }

    #[test]
    fn normalize_maps_bbox_into_margin() {
        let s = VectorSketch::new(vec![Point::down(0.0, 0.0), Point::up(100.0, 100.0)], 100, 100)
            .unwrap();
        let n = s.normalize(256, 256, 0.05).unwrap();
        let (x0, y0, x1, y1) = n.bounds();
        for (got, want) in [(x0, 12.8), (y0, 12.8), (x1, 243.2), (y1, 243.2)] {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn normalize_degenerate_goes_to_center() {
        let s = VectorSketch::new(vec![Point::down(3.0, 7.0)], 10, 10).unwrap();
        let n = s.normalize(256, 256, 0.05).unwrap();
        assert_eq!(n.points()[0].xy(), (128.0, 128.0));
    }

    #[test]
    fn normalize_vertical_line_keeps_aspect() {
        let s = VectorSketch::new(vec![Point::down(5.0, 0.0), Point::up(5.0, 10.0)], 10, 10)
            .unwrap();
        let n = s.normalize(100, 100, 0.1).unwrap();
        assert_eq!(n.points()[0].xy(), (50.0, 10.0));
        assert_eq!(n.points()[1].xy(), (50.0, 90.0));
    }

    #[test]
    fn without_points_repairs_stroke_terminator() {
        let pts = vec![
            Point::down(0.0, 0.0),
            Point::down(1.0, 0.0),
            Point::up(2.0, 0.0),
            Point::down(5.0, 5.0),
            Point::up(6.0, 5.0),
        ];
        let s = VectorSketch::new(pts, 8, 8).unwrap();
        let r = s.without_points(&[2]).unwrap();
        let pens: Vec<PenState> = r.points().iter().map(|p| p.pen).collect();
        assert_eq!(pens, vec![Down, Up, Down, Up]);
        assert_eq!(sizes(&r), vec![2, 2]);
    }

    #[test]
    fn without_points_rejects_end() {
        let s = sk(&[Down, Down, End]);
        assert!(s.without_points(&[2]).is_err());
    }

    #[test]
    fn without_strokes_keeps_end_marker() {
        let s = sk(&[Down, Down, Up, Down, Down, End]);
        let r = s.without_strokes(&[0]).unwrap();
        assert_eq!(r.len(), 3);
        assert!(r.has_end());
    }

    #[test]
    fn stroke_lengths() {
        let pts = vec![Point::down(0.0, 0.0), Point::down(3.0, 4.0), Point::up(3.0, 10.0)];
        let s = VectorSketch::new(pts, 16, 16).unwrap();
        let st = &s.split_strokes()[0];
        assert_eq!(st.length_points, 3);
        assert!((st.length_px - 11.0).abs() < 1e-12);
    }
}
