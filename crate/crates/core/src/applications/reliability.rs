use serde::Serialize;

use super::ApplicationError;
use crate::attribution::{psla, rank_desc, sla, stroke_order_from_points, temporal_correlation, CorrMethod, CorrReport, Granularity};
use crate::diffraster::RenderParams;
use crate::raster::rasterise;
use crate::scorer::{cosine, ScoreTarget, Scorer};
use crate::sketch::VectorSketch;

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityOptions {
    pub granularity: Granularity,
    pub method: CorrMethod,
    pub params: RenderParams,
}

impl Default for ReliabilityOptions {
    fn default() -> Self {
        ReliabilityOptions { granularity: Granularity::Stroke, method: CorrMethod::Spearman, params: RenderParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityReport {
    pub corr: CorrReport,
    pub stroke_scores: Vec<f64>,
    pub ranking: Vec<usize>,
    /// Cosine similarity of the query to every gallery item.
    pub similarities: Vec<f64>,
    /// Best-matching gallery item, used as the attribution target.
    pub top1: usize,
    /// One-based rank of the true match, when known.
    pub true_rank: Option<usize>,
}

/// `1 + ` the number of gallery items strictly more similar than the true match.
pub fn true_match_rank(similarities: &[f64], true_index: usize) -> usize {
    let s = similarities[true_index];
    1 + similarities.iter().filter(|&&v| v > s).count()
}

/// Correlates the attribution order of the query's strokes, taken against its
/// best gallery match, with the order in which they were drawn.
pub fn retrieval_reliability(
    sketch: &VectorSketch,
    scorer: &Scorer,
    gallery: &[Vec<f64>],
    true_index: Option<usize>,
    opts: &ReliabilityOptions,
) -> Result<ReliabilityReport, ApplicationError> {
    if gallery.is_empty() {
        return Err(ApplicationError::Config("gallery is empty".into()));
    }
    if let Some(t) = true_index.filter(|&t| t >= gallery.len()) {
        return Err(ApplicationError::Config(format!("true match {t} outside gallery of {}", gallery.len())));
    }
    let query = scorer.embed(&rasterise(sketch))?;
    let similarities: Vec<f64> = gallery.iter().map(|g| cosine(&query, g)).collect();
    let top1 = rank_desc(&similarities)[0];
    let target = ScoreTarget::CosineSim(gallery[top1].clone());
    let stroke_scores = match opts.granularity {
        Granularity::Stroke => sla(scorer, &target, sketch)?.scores,
        Granularity::Point => {
            let attr = psla(scorer, &target, sketch, &opts.params)?;
            stroke_order_from_points(&attr, sketch)?
        }
    };
    let ranking = rank_desc(&stroke_scores);
    let corr = temporal_correlation(&ranking, opts.method)?;
    Ok(ReliabilityReport {
        corr,
        stroke_scores,
        ranking,
        true_rank: true_index.map(|t| true_match_rank(&similarities, t)),
        similarities,
        top1,
    })
}
