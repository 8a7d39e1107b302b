//! Non-differentiable rasterisation, per-stroke images and weight maps.
//!
//! A segment `(v_{t-1}, v_t)` is inked only when both endpoints are pen-down,
//! and traversal stops at the end-of-drawing marker. Strokes that contain no
//! such segment (a lone tap) are rendered as one pixel at their first point.

use thiserror::Error;

use crate::image::{Grid, RasterImage};
use crate::sketch::{PenState, Point, Stroke, VectorSketch};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("stroke images and weight maps disagree: {0}")]
    Mismatch(String),
    #[error("cannot compose an empty stroke list")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RasterWarning {
    /// The stroke has no pixel inside the canvas.
    OffCanvas { stroke: usize },
}

/// Integer line between two pixels, 8-connected, both endpoints included.
///
/// The trace is always computed from the lexicographically smaller endpoint so
/// that swapping the endpoints yields the same pixel set.
pub fn bresenham(p0: (i64, i64), p1: (i64, i64)) -> Vec<(i64, i64)> {
    if p1 < p0 {
        let mut line = bresenham_directed(p1, p0);
        line.reverse();
        return line;
    }
    bresenham_directed(p0, p1)
}

fn bresenham_directed((x0, y0): (i64, i64), (x1, y1): (i64, i64)) -> Vec<(i64, i64)> {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (x0, y0);
    let mut out = Vec::with_capacity((dx.max(-dy) + 1) as usize);
    loop {
        out.push((x, y));
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

/// Clips the segment to the pixel-center rectangle `[-0.5, w-0.5] x [-0.5, h-0.5]`
/// (Liang-Barsky). Returns `None` when nothing of it lies on the canvas.
fn clip_segment(a: (f64, f64), b: (f64, f64), w: usize, h: usize) -> Option<((f64, f64), (f64, f64))> {
    let (xmin, xmax, ymin, ymax) = (-0.5, w as f64 - 0.5, -0.5, h as f64 - 0.5);
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for (p, q) in [(-dx, a.0 - xmin), (dx, xmax - a.0), (-dy, a.1 - ymin), (dy, ymax - a.1)] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return None;
            }
        }
    }
    Some(((a.0 + t0 * dx, a.1 + t0 * dy), (a.0 + t1 * dx, a.1 + t1 * dy)))
}

fn to_pixel((x, y): (f64, f64), w: usize, h: usize) -> (i64, i64) {
    (
        (x.round() as i64).clamp(0, w as i64 - 1),
        (y.round() as i64).clamp(0, h as i64 - 1),
    )
}

/// Pixels of the clipped Bresenham trace between two vector points.
pub fn segment_pixels(a: &Point, b: &Point, w: usize, h: usize) -> Vec<(usize, usize)> {
    match clip_segment(a.xy(), b.xy(), w, h) {
        Some((ca, cb)) => bresenham(to_pixel(ca, w, h), to_pixel(cb, w, h))
            .into_iter()
            .map(|(x, y)| (x as usize, y as usize))
            .collect(),
        None => Vec::new(),
    }
}

fn dot_pixel(p: &Point, w: usize, h: usize) -> Option<(usize, usize)> {
    segment_pixels(p, p, w, h).first().copied()
}

/// Walks the point list once, inking every pen-down to pen-down segment.
pub fn rasterise(sketch: &VectorSketch) -> RasterImage {
    let (w, h) = sketch.dims();
    let mut img = RasterImage::blank(w, h);
    let pts = sketch.points();
    let mut prev = pts[0];
    for cur in &pts[1..] {
        if prev.pen.is_down() && cur.pen.is_down() {
            for (x, y) in segment_pixels(&prev, cur, w, h) {
                img.set(x, y, 1.0);
            }
        }
        prev = *cur;
        if cur.pen == PenState::End {
            break;
        }
    }
    // strokes without a drawable segment leave a dot at their first point
    let drawing = sketch.drawing_points();
    for (i, p) in drawing.iter().enumerate() {
        let starts_stroke = i == 0 || drawing[i - 1].pen == PenState::Up;
        let has_segment = p.pen.is_down() && drawing.get(i + 1).is_some_and(|n| n.pen.is_down());
        if starts_stroke && !has_segment {
            if let Some((x, y)) = dot_pixel(p, w, h) {
                img.set(x, y, 1.0);
            }
        }
    }
    img
}

/// Pixels covered by one stroke, in drawing order, possibly with repeats.
pub fn stroke_trace(stroke: &Stroke, w: usize, h: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut has_segment = false;
    for pair in stroke.points.windows(2) {
        if pair[0].pen.is_down() && pair[1].pen.is_down() {
            has_segment = true;
            out.extend(segment_pixels(&pair[0], &pair[1], w, h));
        }
    }
    if !has_segment {
        out.extend(dot_pixel(&stroke.points[0], w, h));
    }
    out
}

pub fn rasterise_stroke(stroke: &Stroke, w: usize, h: usize) -> RasterImage {
    let mut img = RasterImage::blank(w, h);
    for (x, y) in stroke_trace(stroke, w, h) {
        img.set(x, y, 1.0);
    }
    img
}

/// Binary mask of the pixels lying on a stroke's trace.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    w: usize,
    h: usize,
    mask: Vec<bool>,
    warning: Option<RasterWarning>,
}

impl WeightMap {
    /// Mask of ones everywhere: disables stroke weighting.
    pub fn ones(w: usize, h: usize) -> Self {
        WeightMap { w, h, mask: vec![true; w * h], warning: None }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.w, self.h)
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.w + x]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn warning(&self) -> Option<&RasterWarning> {
        self.warning.as_ref()
    }

    pub fn to_grid(&self) -> Grid {
        Grid::from_vec(self.w, self.h, self.mask.iter().map(|&m| m as u8 as f64).collect())
            .expect("mask has w*h entries")
    }
}

pub fn weight_map(stroke: &Stroke, w: usize, h: usize) -> WeightMap {
    let mut mask = vec![false; w * h];
    for (x, y) in stroke_trace(stroke, w, h) {
        mask[y * w + x] = true;
    }
    let warning = if mask.iter().any(|&m| m) {
        None
    } else {
        log::warn!("stroke {} lies entirely outside the {w}x{h} canvas", stroke.index);
        Some(RasterWarning::OffCanvas { stroke: stroke.index })
    };
    WeightMap { w, h, mask, warning }
}

/// Per-stroke raster images with their weight maps, in drawing order.
pub fn stroke_layers(sketch: &VectorSketch) -> Vec<(Stroke, RasterImage, WeightMap)> {
    let (w, h) = sketch.dims();
    sketch
        .split_strokes()
        .into_iter()
        .map(|s| {
            let img = rasterise_stroke(&s, w, h);
            let wm = weight_map(&s, w, h);
            (s, img, wm)
        })
        .collect()
}

/// `X(p) = min(1, sum_k w_k(p) * S_k(p))`.
pub fn compose(stroke_images: &[RasterImage], weights: &[WeightMap]) -> Result<RasterImage, RasterError> {
    let first = stroke_images.first().ok_or(RasterError::Empty)?;
    if stroke_images.len() != weights.len() {
        return Err(RasterError::Mismatch(format!(
            "{} images vs {} weight maps",
            stroke_images.len(),
            weights.len()
        )));
    }
    let (w, h) = first.dims();
    for (img, wm) in stroke_images.iter().zip(weights) {
        if img.dims() != (w, h) || wm.dims() != (w, h) {
            return Err(RasterError::Mismatch(format!(
                "expected {w}x{h}, got image {:?} and mask {:?}",
                img.dims(),
                wm.dims()
            )));
        }
    }
    let mut out = vec![0.0; w * h];
    for (img, wm) in stroke_images.iter().zip(weights) {
        for (i, (o, &s)) in out.iter_mut().zip(img.pixels()).enumerate() {
            if wm.mask[i] {
                *o += s;
            }
        }
    }
    out.iter_mut().for_each(|v| *v = v.min(1.0));
    Ok(RasterImage::from_vec(w, h, out).expect("clamped sum stays in [0, 1]"))
}

/// Rasterises the given strokes only, via composition of their layers.
pub fn compose_strokes(strokes: &[Stroke], w: usize, h: usize) -> RasterImage {
    if strokes.is_empty() {
        return RasterImage::blank(w, h);
    }
    let imgs: Vec<RasterImage> = strokes.iter().map(|s| rasterise_stroke(s, w, h)).collect();
    let wms: Vec<WeightMap> = strokes.iter().map(|s| weight_map(s, w, h)).collect();
    compose(&imgs, &wms).expect("layers share canvas dims")
}
