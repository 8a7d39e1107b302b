//! Stroke-level (SLA) and point-level (P-SLA) attribution.

use serde::Serialize;
use thiserror::Error;

use crate::diffraster::{self, DiffRasterError, RenderParams};
use crate::image::Grid;
use crate::raster::{self, WeightMap};
use crate::scorer::{ScoreTarget, Scorer, ScorerError};
use crate::sketch::VectorSketch;

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Render(#[from] DiffRasterError),
    #[error("expected a {expected:?}-level result")]
    Granularity { expected: Granularity },
    #[error("invalid ranking: {0}")]
    Ranking(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Stroke,
    Point,
}

/// Which pixels count towards a stroke's score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightMode {
    /// Pixels on the stroke's own trace.
    #[default]
    Trace,
    /// Every pixel for every stroke, so all strokes score the same.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    #[default]
    Signed,
    /// Sum of absolute pixel gradients, for visualisation.
    Absolute,
}

/// Gradient of the `min(1, .)` clamp at pixels covered by several strokes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverlapGrad {
    /// Every covering stroke receives the pixel's gradient.
    #[default]
    PassThrough,
    /// Saturated pixels (coverage above one) pass no gradient.
    Saturate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SlaOptions {
    pub weights: WeightMode,
    pub reduction: Reduction,
    pub overlap: OverlapGrad,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionResult {
    pub granularity: Granularity,
    /// One entry per stroke or per point.
    pub scores: Vec<f64>,
    /// Indices by descending score, ties by ascending index.
    pub ranking: Vec<usize>,
    /// Gradient of the scorer output with respect to each pixel.
    pub pixel_grad: Grid,
    /// Scorer value on the rendered sketch.
    pub score: f64,
    /// Signed `(d/dx, d/dy)` per point; `None` for stroke-level results.
    pub point_grads: Option<Vec<(f64, f64)>>,
}

/// Indices sorted by descending value; ties keep ascending index order.
pub fn rank_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Stroke-level attribution: the pixel gradient of the scorer on the composed
/// raster, summed over each stroke's weight map.
pub fn sla(scorer: &Scorer, target: &ScoreTarget, sketch: &VectorSketch) -> Result<AttributionResult, AttributionError> {
    sla_with(scorer, target, sketch, SlaOptions::default())
}

pub fn sla_with(
    scorer: &Scorer,
    target: &ScoreTarget,
    sketch: &VectorSketch,
    opts: SlaOptions,
) -> Result<AttributionResult, AttributionError> {
    let (w, h) = sketch.dims();
    let layers = raster::stroke_layers(sketch);
    let (images, maps): (Vec<_>, Vec<_>) = layers.into_iter().map(|(_, img, wm)| (img, wm)).unzip();
    let composed = raster::compose(&images, &maps).expect("a valid sketch has at least one stroke");
    let (score, pixel_grad) = scorer.score_and_gradient(&composed, target)?;

    let mut grad = pixel_grad.clone();
    if opts.overlap == OverlapGrad::Saturate {
        let mut coverage = vec![0u32; w * h];
        for wm in &maps {
            wm.mask().iter().zip(coverage.iter_mut()).for_each(|(&m, c)| *c += m as u32);
        }
        for (g, &c) in grad.as_mut_slice().iter_mut().zip(&coverage) {
            if c > 1 {
                *g = 0.0;
            }
        }
    }
    let reduce = |g: f64| match opts.reduction {
        Reduction::Signed => g,
        Reduction::Absolute => g.abs(),
    };
    let masked_sum = |wm: &WeightMap| -> f64 {
        wm.mask().iter().zip(grad.as_slice()).filter(|(&m, _)| m).map(|(_, &g)| reduce(g)).sum()
    };
    let scores: Vec<f64> = match opts.weights {
        WeightMode::Trace => maps.iter().map(masked_sum).collect(),
        WeightMode::Uniform => {
            let total = masked_sum(&WeightMap::ones(w, h));
            vec![total; maps.len()]
        }
    };
    Ok(AttributionResult {
        granularity: Granularity::Stroke,
        ranking: rank_desc(&scores),
        scores,
        pixel_grad,
        score,
        point_grads: None,
    })
}

/// Point-level attribution through the differentiable renderer: each point
/// scores the L2 norm of the scorer's gradient with respect to its coordinates.
pub fn psla(
    scorer: &Scorer,
    target: &ScoreTarget,
    sketch: &VectorSketch,
    params: &RenderParams,
) -> Result<AttributionResult, AttributionError> {
    params.validate()?;
    let field = diffraster::min_distance_field(sketch, params);
    let image = diffraster::render_field(&field, params);
    let (score, pixel_grad) = scorer.score_and_gradient(&image, target)?;
    let grads = diffraster::gradient_from_field(sketch, params, &field, &pixel_grad);
    let scores: Vec<f64> = grads.iter().map(|(gx, gy)| gx.hypot(*gy)).collect();
    Ok(AttributionResult {
        granularity: Granularity::Point,
        ranking: rank_desc(&scores),
        scores,
        pixel_grad,
        score,
        point_grads: Some(grads),
    })
}

/// Mean member-point score per stroke.
pub fn stroke_order_from_points(result: &AttributionResult, sketch: &VectorSketch) -> Result<Vec<f64>, AttributionError> {
    if result.granularity != Granularity::Point || result.scores.len() != sketch.len() {
        return Err(AttributionError::Granularity { expected: Granularity::Point });
    }
    Ok(sketch
        .split_strokes()
        .iter()
        .map(|s| {
            let r = s.point_range();
            result.scores[r.clone()].iter().sum::<f64>() / r.len() as f64
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrMethod {
    #[default]
    Spearman,
    Kendall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reliability {
    High,
    Mid,
    Low,
    NotApplicable,
}

impl Reliability {
    pub fn from_corr(corr: f64) -> Reliability {
        if corr >= 0.5 {
            Reliability::High
        } else if corr <= 0.1 {
            Reliability::Low
        } else {
            Reliability::Mid
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrReport {
    /// `None` when there are fewer than two strokes.
    pub corr: Option<f64>,
    pub reliable: Reliability,
    pub n_strokes: usize,
}

/// Rank correlation between an attribution ranking (most important stroke
/// first) and drawing order (first-drawn stroke first).
pub fn temporal_correlation(ranking: &[usize], method: CorrMethod) -> Result<CorrReport, AttributionError> {
    let n = ranking.len();
    let mut rank_of = vec![usize::MAX; n];
    for (pos, &s) in ranking.iter().enumerate() {
        if s >= n || rank_of[s] != usize::MAX {
            return Err(AttributionError::Ranking(format!("{ranking:?} is not a permutation of 0..{n}")));
        }
        rank_of[s] = pos;
    }
    if n < 2 {
        return Ok(CorrReport { corr: None, reliable: Reliability::NotApplicable, n_strokes: n });
    }
    let corr = match method {
        CorrMethod::Spearman => {
            let d2: f64 = rank_of.iter().enumerate().map(|(i, &r)| ((i as f64) - r as f64).powi(2)).sum();
            let nf = n as f64;
            1.0 - 6.0 * d2 / (nf * (nf * nf - 1.0))
        }
        CorrMethod::Kendall => {
            let mut s = 0i64;
            for i in 0..n {
                for j in i + 1..n {
                    s += if rank_of[i] < rank_of[j] { 1 } else { -1 };
                }
            }
            s as f64 / (n * (n - 1) / 2) as f64
        }
    };
    Ok(CorrReport { corr: Some(corr), reliable: Reliability::from_corr(corr), n_strokes: n })
}
