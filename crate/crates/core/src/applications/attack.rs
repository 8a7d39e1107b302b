use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ApplicationError;
use crate::attribution::psla;
use crate::diffraster::{soft_render, RenderParams};
use crate::image::RasterImage;
use crate::raster::rasterise;
use crate::scorer::{ScoreTarget, Scorer, ScorerError, ScorerKind};
use crate::sketch::VectorSketch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    /// Remove the one stroke of at most `epsilon` points that maximizes the loss.
    SlaRemoveStroke,
    /// Remove the `epsilon` points with the largest leave-one-out loss.
    PslaRemovePoints,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub epsilon: usize,
    pub mode: AttackMode,
    /// Rank points by attribution magnitude instead of leave-one-out re-renders.
    pub gradient_fast_path: bool,
    pub params: RenderParams,
}

impl AttackConfig {
    pub fn new(mode: AttackMode, epsilon: usize) -> Self {
        AttackConfig { epsilon, mode, gradient_fast_path: false, params: RenderParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackOutcome {
    pub adversarial_sketch: VectorSketch,
    pub mode: AttackMode,
    pub epsilon: usize,
    /// Removed stroke index (SLA) or point indices (P-SLA), ascending.
    pub removed: Vec<usize>,
    pub pred_before: usize,
    pub pred_after: usize,
    pub loss_before: f64,
    pub loss_after: f64,
    pub success: bool,
}

fn check_classifier(scorer: &Scorer, label: usize) -> Result<(), ApplicationError> {
    if scorer.kind() == ScorerKind::Embedding {
        return Err(ScorerError::WrongKind { expected: "classifier", got: scorer.kind() }.into());
    }
    if label >= scorer.output_dim() {
        return Err(ScorerError::InvalidTarget(format!("label {label} out of range")).into());
    }
    Ok(())
}

fn loss_and_pred(scorer: &Scorer, image: &RasterImage, label: usize) -> Result<(f64, usize), ScorerError> {
    let loss = scorer.score(image, &ScoreTarget::ClassLoss(label))?;
    Ok((loss, scorer.predict(image)?))
}

/// First index holding the largest value.
fn argmax_first(values: &[(usize, f64)]) -> Option<(usize, f64)> {
    values.iter().copied().fold(None, |best, c| match best {
        Some(b) if c.1 <= b.1 => Some(b),
        _ => Some(c),
    })
}

/// Untargeted stroke-removal attack on the hard raster.
pub fn sla_attack(
    classifier: &Scorer,
    sketch: &VectorSketch,
    label: usize,
    cfg: &AttackConfig,
) -> Result<AttackOutcome, ApplicationError> {
    check_classifier(classifier, label)?;
    if cfg.epsilon == 0 {
        return Err(ApplicationError::Config("epsilon must be at least 1".into()));
    }
    let strokes = sketch.split_strokes();
    if strokes.len() < 2 {
        return Err(ApplicationError::TooFewStrokes(strokes.len()));
    }
    let candidates: Vec<usize> =
        strokes.iter().filter(|s| s.length_points <= cfg.epsilon).map(|s| s.index).collect();
    if candidates.is_empty() {
        return Err(ApplicationError::NoCandidate { epsilon: cfg.epsilon });
    }
    let (loss_before, pred_before) = loss_and_pred(classifier, &rasterise(sketch), label)?;
    let losses = candidates
        .par_iter()
        .map(|&j| {
            let s = sketch.without_strokes(&[j])?;
            Ok((j, classifier.score(&rasterise(&s), &ScoreTarget::ClassLoss(label))?))
        })
        .collect::<Result<Vec<_>, ApplicationError>>()?;
    let (j, _) = argmax_first(&losses).expect("non-empty candidates");
    let adversarial_sketch = sketch.without_strokes(&[j])?;
    let (loss_after, pred_after) = loss_and_pred(classifier, &rasterise(&adversarial_sketch), label)?;
    Ok(AttackOutcome {
        adversarial_sketch,
        mode: AttackMode::SlaRemoveStroke,
        epsilon: cfg.epsilon,
        removed: vec![j],
        pred_before,
        pred_after,
        loss_before,
        loss_after,
        success: pred_after != pred_before,
    })
}

/// Indices of the `k` largest values, ties to the lower index, returned ascending.
pub(crate) fn top_k(values: &[(usize, f64)], k: usize) -> Vec<usize> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut out: Vec<usize> = v.into_iter().take(k).map(|(i, _)| i).collect();
    out.sort_unstable();
    out
}

/// Untargeted point-removal attack on the soft render. Every drawing point is
/// scored by the loss of the sketch rendered without it; the top `epsilon`
/// points are removed together.
pub fn psla_attack(
    classifier: &Scorer,
    sketch: &VectorSketch,
    label: usize,
    cfg: &AttackConfig,
) -> Result<AttackOutcome, ApplicationError> {
    check_classifier(classifier, label)?;
    cfg.params.validate()?;
    let n = sketch.drawing_points().len();
    if cfg.epsilon == 0 || cfg.epsilon + 2 > n {
        return Err(ApplicationError::Budget(format!(
            "removing {} of {n} points would leave fewer than 2",
            cfg.epsilon
        )));
    }
    let (loss_before, pred_before) = loss_and_pred(classifier, &soft_render(sketch, &cfg.params), label)?;
    let scored: Vec<(usize, f64)> = if cfg.gradient_fast_path {
        let attr = psla(classifier, &ScoreTarget::ClassLoss(label), sketch, &cfg.params)?;
        attr.scores[..n].iter().copied().enumerate().collect()
    } else {
        (0..n)
            .into_par_iter()
            .map(|t| {
                let loss = match sketch.without_points(&[t]) {
                    Ok(s) if s.has_drawable_segment() => {
                        classifier.score(&soft_render(&s, &cfg.params), &ScoreTarget::ClassLoss(label))?
                    }
                    _ => f64::NEG_INFINITY,
                };
                Ok((t, loss))
            })
            .collect::<Result<Vec<_>, ApplicationError>>()?
    };
    let removed = top_k(&scored, cfg.epsilon);
    let adversarial_sketch = sketch.without_points(&removed)?;
    if !adversarial_sketch.has_drawable_segment() {
        return Err(ApplicationError::Budget("no drawable segment would remain".into()));
    }
    let (loss_after, pred_after) =
        loss_and_pred(classifier, &soft_render(&adversarial_sketch, &cfg.params), label)?;
    Ok(AttackOutcome {
        adversarial_sketch,
        mode: AttackMode::PslaRemovePoints,
        epsilon: cfg.epsilon,
        removed,
        pred_before,
        pred_after,
        loss_before,
        loss_after,
        success: pred_after != pred_before,
    })
}

pub fn run_attack(
    classifier: &Scorer,
    sketch: &VectorSketch,
    label: usize,
    cfg: &AttackConfig,
) -> Result<AttackOutcome, ApplicationError> {
    match cfg.mode {
        AttackMode::SlaRemoveStroke => sla_attack(classifier, sketch, label, cfg),
        AttackMode::PslaRemovePoints => psla_attack(classifier, sketch, label, cfg),
    }
}
