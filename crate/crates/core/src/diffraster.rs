//! Differentiable rendering through a soft-thresholded distance field.
//!
//! Every pixel takes the intensity `sigmoid(a - b * d)` where `d` is its
//! distance to the nearest drawn segment of the sketch. Segments that start at
//! a pen-up point are pushed away by a large additive offset so they never win
//! the minimum. Gradients with respect to point coordinates are analytic: the
//! sigmoid, the minimum (routed to the winning segment, lowest index on ties)
//! and the point-to-segment distance are all differentiated in closed form.

use rayon::prelude::*;
use thiserror::Error;

use crate::image::{Grid, ImageError, RasterImage};
use crate::sketch::VectorSketch;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffRasterError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("invalid render parameters: {0}")]
    Params(String),
}

/// Soft-threshold constants. Distances are in canvas pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderParams {
    /// Offset of the sigmoid argument.
    pub a: f64,
    /// Slope; larger values give thinner strokes.
    pub b: f64,
    /// Added to the distance of segments that start at a pen-up point.
    pub mask_offset: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams { a: 2.0, b: 5.0, mask_offset: 1e6 }
    }
}

impl RenderParams {
    pub fn new(a: f64, b: f64) -> Result<Self, DiffRasterError> {
        let p = RenderParams { a, b, ..Default::default() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DiffRasterError> {
        if !(self.b > 0.0) || !self.a.is_finite() || !self.b.is_finite() {
            return Err(DiffRasterError::Params(format!("need finite a and b > 0, got a={} b={}", self.a, self.b)));
        }
        if self.mask_offset < 1e3 * (self.a.abs() / self.b).max(1.0) {
            return Err(DiffRasterError::Params(format!("mask offset {} too small", self.mask_offset)));
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Euclidean distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    distance_with_grad(p, a, b).d
}

/// Distance together with its partial derivatives in the segment endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceGrad {
    pub d: f64,
    pub d_start: (f64, f64),
    pub d_end: (f64, f64),
}

pub fn distance_with_grad(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> DistanceGrad {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let endpoint = |q: (f64, f64)| {
        let (ex, ey) = (q.0 - p.0, q.1 - p.1);
        let d = ex.hypot(ey);
        let g = if d > 0.0 { (ex / d, ey / d) } else { (0.0, 0.0) };
        (d, g)
    };
    if len2 == 0.0 {
        // moving either end of a zero-length segment moves half of the point
        let (d, g) = endpoint(a);
        let half = (g.0 / 2.0, g.1 / 2.0);
        return DistanceGrad { d, d_start: half, d_end: half };
    }
    let u = ((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2;
    if u <= 0.0 {
        let (d, g) = endpoint(a);
        return DistanceGrad { d, d_start: g, d_end: (0.0, 0.0) };
    }
    if u >= 1.0 {
        let (d, g) = endpoint(b);
        return DistanceGrad { d, d_start: (0.0, 0.0), d_end: g };
    }
    let (qx, qy) = (a.0 + u * dx, a.1 + u * dy);
    let d = (qx - p.0).hypot(qy - p.1);
    if d == 0.0 {
        return DistanceGrad { d, d_start: (0.0, 0.0), d_end: (0.0, 0.0) };
    }
    // d = |c| / L with c = (p - a) x (b - a), L = |b - a|
    let len = len2.sqrt();
    let c = (p.0 - a.0) * dy - (p.1 - a.1) * dx;
    let s = c.signum();
    let dc_a = (p.1 - b.1, b.0 - p.0);
    let dc_b = (a.1 - p.1, p.0 - a.0);
    let dl_a = (-dx / len, -dy / len);
    let dl_b = (dx / len, dy / len);
    let part = |dc: (f64, f64), dl: (f64, f64)| (s * dc.0 / len - d * dl.0 / len, s * dc.1 / len - d * dl.1 / len);
    DistanceGrad { d, d_start: part(dc_a, dl_a), d_end: part(dc_b, dl_b) }
}

/// Minimum masked distance of every pixel to the sketch's segments.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    w: usize,
    h: usize,
    d: Vec<f64>,
    argmin: Vec<Option<usize>>,
}

impl DistanceField {
    pub fn dims(&self) -> (usize, usize) {
        (self.w, self.h)
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.d[y * self.w + x]
    }

    /// Segment index `t` (joining points `t-1` and `t`) that attains the minimum.
    pub fn argmin(&self, x: usize, y: usize) -> Option<usize> {
        self.argmin[y * self.w + x]
    }

    pub fn values(&self) -> &[f64] {
        &self.d
    }

    /// Row-major little-endian `f32` dump.
    pub fn to_f32_le_bytes(&self) -> Vec<u8> {
        self.d.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
    }
}

fn segment_offsets(sketch: &VectorSketch, params: &RenderParams) -> Vec<f64> {
    let pts = sketch.points();
    (1..pts.len())
        .map(|t| if pts[t - 1].pen.is_down() { 0.0 } else { params.mask_offset })
        .collect()
}

fn pixel_min(sketch: &VectorSketch, offsets: &[f64], p: (f64, f64)) -> (f64, Option<usize>) {
    let pts = sketch.points();
    let mut best = (f64::INFINITY, None);
    for t in 1..pts.len() {
        let d = point_segment_distance(p, pts[t - 1].xy(), pts[t].xy()) + offsets[t - 1];
        if d < best.0 {
            best = (d, Some(t));
        }
    }
    best
}

pub fn min_distance_field(sketch: &VectorSketch, params: &RenderParams) -> DistanceField {
    let (w, h) = sketch.dims();
    let offsets = segment_offsets(sketch, params);
    let rows: Vec<Vec<(f64, Option<usize>)>> = (0..h)
        .into_par_iter()
        .map(|y| (0..w).map(|x| pixel_min(sketch, &offsets, (x as f64, y as f64))).collect())
        .collect();
    let (d, argmin) = rows.into_iter().flatten().unzip();
    DistanceField { w, h, d, argmin }
}

pub fn soft_render(sketch: &VectorSketch, params: &RenderParams) -> RasterImage {
    let field = min_distance_field(sketch, params);
    render_field(&field, params)
}

pub fn render_field(field: &DistanceField, params: &RenderParams) -> RasterImage {
    let data = field.d.iter().map(|&d| sigmoid(params.a - params.b * d)).collect();
    RasterImage::from_vec(field.w, field.h, data).expect("sigmoid output lies in [0, 1]")
}

/// Chains an upstream pixel gradient through the renderer to every point:
/// returns `sum_p upstream(p) * dX(p)/d(x_t, y_t)` for each point `t`.
pub fn render_gradient(
    sketch: &VectorSketch,
    params: &RenderParams,
    upstream: &Grid,
) -> Result<Vec<(f64, f64)>, DiffRasterError> {
    let (w, h) = sketch.dims();
    upstream.ensure_dims(w, h)?;
    let field = min_distance_field(sketch, params);
    Ok(gradient_from_field(sketch, params, &field, upstream))
}

pub(crate) fn gradient_from_field(
    sketch: &VectorSketch,
    params: &RenderParams,
    field: &DistanceField,
    upstream: &Grid,
) -> Vec<(f64, f64)> {
    let (w, h) = field.dims();
    let pts = sketch.points();
    let n = pts.len();
    // per-row partial sums, reduced in row order for bitwise determinism
    let partials: Vec<Vec<(f64, f64)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut acc = vec![(0.0, 0.0); n];
            for x in 0..w {
                let up = upstream.get(x, y);
                if up == 0.0 {
                    continue;
                }
                let Some(t) = field.argmin(x, y) else { continue };
                if !pts[t - 1].pen.is_down() {
                    continue;
                }
                let g = distance_with_grad((x as f64, y as f64), pts[t - 1].xy(), pts[t].xy());
                let s = sigmoid(params.a - params.b * g.d);
                let coeff = up * -params.b * s * (1.0 - s);
                acc[t - 1].0 += coeff * g.d_start.0;
                acc[t - 1].1 += coeff * g.d_start.1;
                acc[t].0 += coeff * g.d_end.0;
                acc[t].1 += coeff * g.d_end.1;
            }
            acc
        })
        .collect();
    let mut out = vec![(0.0, 0.0); n];
    for row in partials {
        for (o, r) in out.iter_mut().zip(row) {
            o.0 += r.0;
            o.1 += r.1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::{Point, VectorSketch};

    #[test]
    fn distance_cases() {
        assert_eq!(point_segment_distance((1.0, 0.0), (0.0, -1.0), (0.0, 1.0)), 1.0);
        assert_eq!(point_segment_distance((3.0, 0.0), (0.0, 0.0), (1.0, 0.0)), 2.0);
        assert_eq!(point_segment_distance((4.0, 4.0), (4.0, 4.0), (4.0, 4.0)), 0.0);
        assert_eq!(point_segment_distance((-3.0, 4.0), (0.0, 0.0), (1.0, 0.0)), 5.0);
    }

    #[test]
    fn distance_grad_matches_fd() {
        let p = (2.3, 1.7);
        let segs = [((0.1, 0.2), (4.2, 3.9)), ((3.0, 3.0), (5.0, 4.0)), ((0.0, 0.0), (1.0, -0.5))];
        let h = 1e-6;
        for (a, b) in segs {
            let g = distance_with_grad(p, a, b);
            let f = |a: (f64, f64), b: (f64, f64)| point_segment_distance(p, a, b);
            let fd = [
                (f((a.0 + h, a.1), b) - f((a.0 - h, a.1), b)) / (2.0 * h),
                (f((a.0, a.1 + h), b) - f((a.0, a.1 - h), b)) / (2.0 * h),
                (f(a, (b.0 + h, b.1)) - f(a, (b.0 - h, b.1))) / (2.0 * h),
                (f(a, (b.0, b.1 + h)) - f(a, (b.0, b.1 - h))) / (2.0 * h),
            ];
            let an = [g.d_start.0, g.d_start.1, g.d_end.0, g.d_end.1];
            for (x, y) in an.iter().zip(fd) {
                assert!((x - y).abs() < 1e-6, "{an:?} vs {fd:?}");
            }
        }
    }

    #[test]
    fn render_constants() {
        let s = VectorSketch::new(vec![Point::down(2.0, 4.0), Point::down(10.0, 4.0)], 16, 16).unwrap();
        let img = soft_render(&s, &RenderParams::default());
        assert_eq!(img.get(5, 4), sigmoid(2.0));
        assert!((sigmoid(2.0) - 0.8808).abs() < 1e-4);
        let shifted = VectorSketch::new(vec![Point::down(2.0, 4.4), Point::down(10.0, 4.4)], 16, 16).unwrap();
        let img = soft_render(&shifted, &RenderParams::default());
        assert!((img.get(5, 4) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn masked_segment_renders_nothing() {
        let s = VectorSketch::new(
            vec![Point::down(1.0, 1.0), Point::up(1.0, 2.0), Point::down(12.0, 12.0), Point::down(12.0, 14.0)],
            16,
            16,
        )
        .unwrap();
        let img = soft_render(&s, &RenderParams::default());
        let field = min_distance_field(&s, &RenderParams::default());
        assert!(img.get(1, 2) > 0.8);
        let on_move = point_segment_distance((6.0, 7.0), (1.0, 2.0), (12.0, 12.0));
        assert!(on_move < 0.5);
        assert!(field.get(6, 7) > 5.0);
        assert!(img.get(6, 7) < 1e-6);
    }

    #[test]
    fn tie_goes_to_lowest_segment() {
        let s = VectorSketch::new(
            vec![Point::down(0.0, 0.0), Point::down(4.0, 0.0), Point::down(8.0, 0.0)],
            9,
            3,
        )
        .unwrap();
        let f = min_distance_field(&s, &RenderParams::default());
        assert_eq!(f.argmin(4, 2), Some(1));
        assert_eq!(f.argmin(6, 2), Some(2));
    }

    #[test]
    fn zero_upstream_zero_gradient() {
        let s = VectorSketch::new(vec![Point::down(2.0, 3.0), Point::down(9.0, 7.0)], 12, 12).unwrap();
        let g = render_gradient(&s, &RenderParams::default(), &Grid::zeros(12, 12)).unwrap();
        assert!(g.iter().all(|&(x, y)| x == 0.0 && y == 0.0));
        assert!(render_gradient(&s, &RenderParams::default(), &Grid::zeros(11, 12)).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(RenderParams::new(2.0, 0.0).is_err());
        assert!(RenderParams::new(2.0, 5.0).is_ok());
    }

    #[test]
    fn field_dump_size() {
        let s = VectorSketch::new(vec![Point::down(2.0, 3.0), Point::down(9.0, 7.0)], 5, 4).unwrap();
        let f = min_distance_field(&s, &RenderParams::default());
        let bytes = f.to_f32_le_bytes();
        assert_eq!(bytes.len(), 5 * 4 * 4);
        assert_eq!(f32::from_le_bytes(bytes[0..4].try_into().unwrap()), f.get(0, 0) as f32);
    }
}
