use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::ApplicationError;
use crate::attribution::{psla, rank_desc, sla, Granularity};
use crate::diffraster::{soft_render, RenderParams};
use crate::raster::rasterise;
use crate::scorer::{cosine, ScoreTarget, Scorer, ScorerError, ScorerKind};
use crate::sketch::{PenState, VectorSketch};

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub granularity: Granularity,
    /// Slack added to each normalized score before the 0.5 keep threshold.
    pub delta: f64,
    pub gumbel_temperature: f64,
    /// Sample keep decisions with Gumbel noise instead of thresholding.
    pub stochastic: bool,
    pub seed: u64,
    /// Renderer for point-level attribution.
    pub params: RenderParams,
}

impl FilterConfig {
    pub fn strokes() -> Self {
        FilterConfig {
            granularity: Granularity::Stroke,
            delta: 0.3,
            gumbel_temperature: 1.0,
            stochastic: false,
            seed: 0,
            params: RenderParams::default(),
        }
    }

    pub fn points() -> Self {
        FilterConfig { granularity: Granularity::Point, delta: 0.1, ..Self::strokes() }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn validate(&self) -> Result<(), ApplicationError> {
        if !(0.0..0.5).contains(&self.delta) {
            return Err(ApplicationError::Config(format!("delta {} outside [0, 0.5)", self.delta)));
        }
        if !(self.gumbel_temperature > 0.0 && self.gumbel_temperature.is_finite()) {
            return Err(ApplicationError::Config("gumbel temperature must be positive".into()));
        }
        Ok(self.params.validate()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterReport {
    pub granularity: Granularity,
    pub raw_scores: Vec<f64>,
    pub normalized: Vec<f64>,
    /// Indices of kept strokes or points.
    pub kept: Vec<usize>,
    /// Indices of removed strokes, or of points whose incoming segment was cut.
    pub removed: Vec<usize>,
    /// Soft keep probability; only filled for stochastic runs.
    pub keep_probability: Option<Vec<f64>>,
    pub similarity_before: f64,
    pub similarity_after: f64,
}

/// Negative scores floored at zero, then scaled to sum to one. All-zero input
/// gives uniform weights.
pub fn normalize_scores(scores: &[f64]) -> Vec<f64> {
    let floored: Vec<f64> = scores.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = floored.iter().sum();
    if total > 0.0 {
        floored.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / scores.len() as f64; scores.len()]
    }
}

/// Keep decisions. The hard rule keeps `a + delta >= 0.5`; the stochastic rule
/// draws a Gumbel-max sample between keep (`p = clamp(a + delta)`) and drop.
fn decide(normalized: &[f64], cfg: &FilterConfig) -> (Vec<bool>, Option<Vec<f64>>) {
    if !cfg.stochastic {
        return (normalized.iter().map(|a| a + cfg.delta >= 0.5).collect(), None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut gumbel = || -(-(rng.gen_range(f64::EPSILON..1.0f64)).ln()).ln();
    let (mut keep, mut soft) = (Vec::new(), Vec::new());
    for a in normalized {
        let p = (a + cfg.delta).clamp(1e-12, 1.0 - 1e-12);
        let (lk, ld) = (p.ln() + gumbel(), (1.0 - p).ln() + gumbel());
        keep.push(lk >= ld);
        soft.push(1.0 / (1.0 + ((ld - lk) / cfg.gumbel_temperature).exp()));
    }
    (keep, Some(soft))
}

fn require_embedding(scorer: &Scorer) -> Result<(), ApplicationError> {
    if scorer.kind() != ScorerKind::Embedding {
        return Err(ScorerError::WrongKind { expected: "embedding", got: scorer.kind() }.into());
    }
    Ok(())
}

/// Drops strokes whose normalized SLA score against the reference embedding
/// falls below `0.5 - delta`. The top-ranked stroke is always kept.
pub fn filter_noisy_strokes(
    sketch: &VectorSketch,
    scorer: &Scorer,
    reference: &[f64],
    cfg: &FilterConfig,
) -> Result<(VectorSketch, FilterReport), ApplicationError> {
    cfg.validate()?;
    require_embedding(scorer)?;
    let target = ScoreTarget::CosineSim(reference.to_vec());
    let attr = sla(scorer, &target, sketch)?;
    let normalized = normalize_scores(&attr.scores);
    let (mut keep, keep_probability) = decide(&normalized, cfg);
    keep[rank_desc(&normalized)[0]] = true;
    let removed: Vec<usize> = (0..keep.len()).filter(|&i| !keep[i]).collect();
    let kept = (0..keep.len()).filter(|&i| keep[i]).collect();
    let filtered = sketch.without_strokes(&removed)?;
    let similarity_after = cosine(&scorer.embed(&rasterise(&filtered))?, reference);
    Ok((
        filtered,
        FilterReport {
            granularity: Granularity::Stroke,
            raw_scores: attr.scores,
            normalized,
            kept,
            removed,
            keep_probability,
            similarity_before: attr.score,
            similarity_after,
        },
    ))
}

/// Cuts the incoming segment of every point whose P-SLA score, divided by the
/// largest score, falls below `0.5 - delta`: the preceding point's pen goes
/// from down to up. The segment into the top-ranked point is never cut and the
/// end marker is never touched.
pub fn filter_noisy_points(
    sketch: &VectorSketch,
    scorer: &Scorer,
    reference: &[f64],
    cfg: &FilterConfig,
) -> Result<(VectorSketch, FilterReport), ApplicationError> {
    cfg.validate()?;
    require_embedding(scorer)?;
    let target = ScoreTarget::CosineSim(reference.to_vec());
    let attr = psla(scorer, &target, sketch, &cfg.params)?;
    let max = attr.scores.iter().cloned().fold(0.0, f64::max);
    let normalized: Vec<f64> =
        if max > 0.0 { attr.scores.iter().map(|v| v / max).collect() } else { vec![1.0; attr.scores.len()] };
    let (mut keep, keep_probability) = decide(&normalized, cfg);
    let top = attr.ranking[0];
    keep[top] = true;
    let protected = top.saturating_sub(1);

    let mut points = sketch.points().to_vec();
    let mut removed = Vec::new();
    for t in 1..points.len() {
        if !keep[t] && points[t].pen != PenState::End {
            removed.push(t);
            if t - 1 != protected && points[t - 1].pen == PenState::Down {
                points[t - 1].pen = PenState::Up;
            }
        }
    }
    let kept = (0..keep.len()).filter(|&i| keep[i]).collect();
    let filtered = match VectorSketch::new(points, sketch.canvas_w(), sketch.canvas_h()) {
        Ok(s) if s.has_drawable_segment() => s,
        // every drawable segment was cut: leave the sketch as it was
        _ => {
            removed.clear();
            sketch.clone()
        }
    };
    let similarity_after = cosine(&scorer.embed(&soft_render(&filtered, &cfg.params))?, reference);
    Ok((
        filtered,
        FilterReport {
            granularity: Granularity::Point,
            raw_scores: attr.scores,
            normalized,
            kept,
            removed,
            keep_probability,
            similarity_before: attr.score,
            similarity_after,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Grid;
    use crate::sketch::Point;

    fn two_strokes() -> VectorSketch {
        VectorSketch::new(
            vec![
                Point::down(2.0, 2.0),
                Point::down(12.0, 2.0),
                Point::up(12.0, 2.0),
                Point::down(2.0, 10.0),
                Point::down(12.0, 10.0),
                Point::up(12.0, 10.0),
            ],
            16,
            16,
        )
        .unwrap()
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_scores(&[1.0, -2.0, 3.0]), vec![0.25, 0.0, 0.75]);
        assert_eq!(normalize_scores(&[-1.0, 0.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn keep_rule_arithmetic() {
        let cfg = FilterConfig::strokes();
        assert_eq!(decide(&[0.5, 0.5], &cfg).0, vec![true, true]);
        let m = 10;
        let uniform = vec![1.0 / m as f64; m];
        assert!(decide(&uniform, &cfg.clone().with_delta(0.49)).0.iter().all(|&k| k));
        // delta = 0.5 - 1/m keeps all m uniform strokes
        for m in 2..12 {
            let u = vec![1.0 / m as f64; m];
            let c = cfg.clone().with_delta(0.5 - 1.0 / m as f64);
            assert!(decide(&u, &c).0.iter().all(|&k| k), "m = {m}");
        }
    }

    #[test]
    fn config_checks() {
        assert!(FilterConfig::strokes().with_delta(0.5).validate().is_err());
        assert!(FilterConfig::strokes().with_delta(-0.1).validate().is_err());
        assert!(FilterConfig::points().validate().is_ok());
    }

    #[test]
    fn requires_embedding() {
        let s = two_strokes();
        let lin = Scorer::linear_single(Grid::filled(16, 16, 1.0));
        let r = filter_noisy_strokes(&s, &lin, &[1.0], &FilterConfig::strokes());
        assert!(matches!(r, Err(ApplicationError::Scorer(ScorerError::WrongKind { .. }))));
    }

    #[test]
    fn stochastic_is_seeded() {
        let s = two_strokes();
        let e = Scorer::embedding(16, 16, 8, 3);
        let reference = e.embed(&rasterise(&s)).unwrap();
        let cfg = FilterConfig { stochastic: true, seed: 5, ..FilterConfig::strokes() };
        let a = filter_noisy_strokes(&s, &e, &reference, &cfg).unwrap();
        let b = filter_noisy_strokes(&s, &e, &reference, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(!a.1.kept.is_empty());
        assert_eq!(a.1.keep_probability.as_ref().unwrap().len(), 2);
    }

    #[test]
    fn point_filter_without_low_points_is_identity() {
        let s = two_strokes();
        let e = Scorer::embedding(16, 16, 8, 3);
        let reference = e.embed(&rasterise(&s)).unwrap();
        // delta close to 0.5 keeps every point with a positive normalized score
        let cfg = FilterConfig::points().with_delta(0.4999999);
        let (out, rep) = filter_noisy_points(&s, &e, &reference, &cfg).unwrap();
        if rep.normalized.iter().all(|&a| a > 1e-6) {
            assert_eq!(out, s);
        }
    }

    #[test]
    fn cutting_mid_stroke_point_splits_stroke() {
        let s = VectorSketch::new(
            vec![
                Point::down(1.0, 1.0),
                Point::down(5.0, 1.0),
                Point::down(9.0, 1.0),
                Point::down(13.0, 1.0),
                Point::up(13.0, 1.0),
            ],
            16,
            16,
        )
        .unwrap();
        let mut pts = s.points().to_vec();
        pts[1].pen = PenState::Up;
        let cut = VectorSketch::new(pts, 16, 16).unwrap();
        assert_eq!(s.split_strokes().len(), 1);
        assert_eq!(cut.split_strokes().len(), 2);
    }
}
