//! Differentiable scalar scorers over raster sketches.
//!
//! A [`Scorer`] maps an image to an output vector (class logits or a unit
//! embedding); a [`ScoreTarget`] reduces that vector to the scalar whose pixel
//! gradient drives attribution.

mod model_file;
mod net;
mod train;

pub use model_file::{MODEL_MAGIC, MODEL_VERSION};
pub use train::{
    train_embedding, train_tiny_classifier, EmbeddingExample, EmbeddingReport, TrainConfig, TrainReport,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::image::{Grid, RasterImage};
use net::{ConvCache, ConvNet, LinearNet};

pub const DEFAULT_EMBEDDING_DIM: usize = 32;

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("input is {got:?} but the scorer expects {expected:?}")]
    DimensionMismatch { expected: (usize, usize), got: (usize, usize) },
    #[error("scorer parameters contain non-finite values")]
    NonFinite,
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("operation requires a {expected} scorer, got {got}")]
    WrongKind { expected: &'static str, got: ScorerKind },
    #[error("corpus too small: {0}")]
    CorpusTooSmall(String),
    #[error("malformed model file: {0}")]
    ModelFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Linear,
    TinyConvClassifier,
    Embedding,
}

impl std::fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScorerKind::Linear => "linear",
            ScorerKind::TinyConvClassifier => "tiny-conv-classifier",
            ScorerKind::Embedding => "embedding",
        })
    }
}

/// Which scalar of the scorer output is differentiated.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreTarget {
    /// Raw output `c`.
    ClassLogit(usize),
    /// Cross-entropy of the softmax over outputs against class `c`.
    ClassLoss(usize),
    /// Cosine similarity between the output and a reference vector.
    CosineSim(Vec<f64>),
    /// Sum of all outputs.
    EmbeddingSum,
}

#[derive(Debug, Clone, PartialEq)]
enum Net {
    Linear(LinearNet),
    Conv(ConvNet),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scorer {
    kind: ScorerKind,
    net: Net,
    labels: Vec<String>,
}

impl Scorer {
    /// Linear scorer with one weight image per output and a bias per output.
    pub fn linear(weights: &[Grid], bias: &[f64]) -> Result<Scorer, ScorerError> {
        let first = weights.first().ok_or_else(|| ScorerError::InvalidTarget("no weight image".into()))?;
        let (w, h) = first.dims();
        if bias.len() != weights.len() {
            return Err(ScorerError::InvalidTarget(format!("{} biases for {} outputs", bias.len(), weights.len())));
        }
        let mut weight = Vec::with_capacity(weights.len() * w * h);
        for g in weights {
            if g.dims() != (w, h) {
                return Err(ScorerError::DimensionMismatch { expected: (w, h), got: g.dims() });
            }
            weight.extend_from_slice(g.as_slice());
        }
        Ok(Scorer {
            kind: ScorerKind::Linear,
            net: Net::Linear(LinearNet { in_w: w, in_h: h, out_dim: weights.len(), weight, bias: bias.to_vec() }),
            labels: Vec::new(),
        })
    }

    /// Single-output linear scorer `sum_p weight(p) * X(p)`.
    pub fn linear_single(weight: Grid) -> Scorer {
        Scorer::linear(&[weight], &[0.0]).expect("one weight image with one bias")
    }

    /// Randomly initialised classifier (He-normal weights, zero biases).
    pub fn tiny_conv_classifier(w: usize, h: usize, classes: usize, seed: u64) -> Scorer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Scorer {
            kind: ScorerKind::TinyConvClassifier,
            net: Net::Conv(ConvNet::init(w, h, classes, false, &mut rng)),
            labels: Vec::new(),
        }
    }

    /// Randomly initialised embedding network producing unit vectors of `dim` entries.
    pub fn embedding(w: usize, h: usize, dim: usize, seed: u64) -> Scorer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Scorer {
            kind: ScorerKind::Embedding,
            net: Net::Conv(ConvNet::init(w, h, dim, true, &mut rng)),
            labels: Vec::new(),
        }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        self.labels = labels;
        self
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn kind(&self) -> ScorerKind {
        self.kind
    }

    /// `(w, h)` of accepted images.
    pub fn input_dims(&self) -> (usize, usize) {
        match &self.net {
            Net::Linear(n) => (n.in_w, n.in_h),
            Net::Conv(n) => (n.in_w, n.in_h),
        }
    }

    pub fn output_dim(&self) -> usize {
        match &self.net {
            Net::Linear(n) => n.out_dim,
            Net::Conv(n) => n.out_dim,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    fn check_finite(&self) -> Result<(), ScorerError> {
        let finite = match &self.net {
            Net::Linear(n) => n.weight.iter().chain(&n.bias).all(|v| v.is_finite()),
            Net::Conv(n) => n.params.tensors.iter().flatten().all(|v| v.is_finite()),
        };
        if finite {
            Ok(())
        } else {
            Err(ScorerError::NonFinite)
        }
    }

    fn check_input(&self, image: &RasterImage) -> Result<(), ScorerError> {
        if image.dims() != self.input_dims() {
            return Err(ScorerError::DimensionMismatch { expected: self.input_dims(), got: image.dims() });
        }
        self.check_finite()
    }

    fn check_target(&self, target: &ScoreTarget) -> Result<(), ScorerError> {
        let n = self.output_dim();
        match target {
            ScoreTarget::ClassLogit(c) | ScoreTarget::ClassLoss(c) if *c >= n => {
                Err(ScorerError::InvalidTarget(format!("class {c} out of range for {n} outputs")))
            }
            ScoreTarget::CosineSim(r) if r.len() != n => {
                Err(ScorerError::InvalidTarget(format!("reference has {} entries, outputs have {n}", r.len())))
            }
            ScoreTarget::CosineSim(r) if r.iter().map(|v| v * v).sum::<f64>() == 0.0 => {
                Err(ScorerError::InvalidTarget("reference vector is zero".into()))
            }
            _ => Ok(()),
        }
    }

    /// Output vector: logits for classifiers, a unit vector for embeddings.
    pub fn outputs(&self, image: &RasterImage) -> Result<Vec<f64>, ScorerError> {
        self.check_input(image)?;
        Ok(match &self.net {
            Net::Linear(n) => n.forward(image.pixels()),
            Net::Conv(n) => n.forward(image.pixels()).out,
        })
    }

    pub fn predict(&self, image: &RasterImage) -> Result<usize, ScorerError> {
        Ok(argmax(&self.outputs(image)?))
    }

    pub fn embed(&self, image: &RasterImage) -> Result<Vec<f64>, ScorerError> {
        if self.kind != ScorerKind::Embedding {
            return Err(ScorerError::WrongKind { expected: "embedding", got: self.kind });
        }
        self.outputs(image)
    }

    pub fn score(&self, image: &RasterImage, target: &ScoreTarget) -> Result<f64, ScorerError> {
        self.check_target(target)?;
        let y = self.outputs(image)?;
        Ok(reduce_target(&y, target).0)
    }

    pub fn pixel_gradient(&self, image: &RasterImage, target: &ScoreTarget) -> Result<Grid, ScorerError> {
        Ok(self.score_and_gradient(image, target)?.1)
    }

    /// Score and its gradient with respect to every pixel intensity.
    pub fn score_and_gradient(&self, image: &RasterImage, target: &ScoreTarget) -> Result<(f64, Grid), ScorerError> {
        self.check_target(target)?;
        self.check_input(image)?;
        let (w, h) = self.input_dims();
        let (score, dx) = match &self.net {
            Net::Linear(n) => {
                let y = n.forward(image.pixels());
                let (s, dy) = reduce_target(&y, target);
                (s, n.backward_input(&dy))
            }
            Net::Conv(n) => {
                let cache: ConvCache = n.forward(image.pixels());
                let (s, dy) = reduce_target(&cache.out, target);
                (s, n.backward(&cache, &dy, true, None).expect("input gradient requested"))
            }
        };
        Ok((score, Grid::from_vec(w, h, dx).expect("gradient has one entry per pixel")))
    }

    /// Named parameter tensors with their shapes.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        match &self.net {
            Net::Linear(n) => vec![
                ("weight".into(), vec![n.out_dim, n.in_h, n.in_w], &n.weight[..]),
                ("bias".into(), vec![n.out_dim], &n.bias[..]),
            ],
            Net::Conv(n) => {
                let shapes = ConvNet::shapes(n.in_w, n.in_h, n.out_dim);
                net::CONV_TENSOR_NAMES
                    .iter()
                    .zip(shapes)
                    .zip(&n.params.tensors)
                    .map(|((name, shape), data)| (name.to_string(), shape, &data[..]))
                    .collect()
            }
        }
    }

    /// Rounds every parameter to the nearest `f32` so that the model file stores it exactly.
    pub(crate) fn quantize_f32(&mut self) {
        let q = |v: &mut f64| *v = *v as f32 as f64;
        match &mut self.net {
            Net::Linear(n) => n.weight.iter_mut().chain(n.bias.iter_mut()).for_each(q),
            Net::Conv(n) => n.params.tensors.iter_mut().flatten().for_each(q),
        }
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Scalar value and its gradient with respect to the output vector.
fn reduce_target(y: &[f64], target: &ScoreTarget) -> (f64, Vec<f64>) {
    match target {
        ScoreTarget::ClassLogit(c) => {
            let mut dy = vec![0.0; y.len()];
            dy[*c] = 1.0;
            (y[*c], dy)
        }
        ScoreTarget::ClassLoss(c) => {
            let p = softmax(y);
            let m = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + y.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            let mut dy = p;
            dy[*c] -= 1.0;
            (lse - y[*c], dy)
        }
        ScoreTarget::CosineSim(r) => {
            let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nr = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if ny == 0.0 {
                return (0.0, vec![0.0; y.len()]);
            }
            let s = y.iter().zip(r).map(|(a, b)| a * b).sum::<f64>() / (ny * nr);
            let dy = y.iter().zip(r).map(|(a, b)| b / (ny * nr) - s * a / (ny * ny)).collect();
            (s, dy)
        }
        ScoreTarget::EmbeddingSum => (y.iter().sum(), vec![1.0; y.len()]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(w: usize, h: usize, seed: u64) -> RasterImage {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RasterImage::from_vec(w, h, (0..w * h).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    #[test]
    fn zero_linear_scores_zero() {
        let s = Scorer::linear_single(Grid::zeros(6, 5));
        assert_eq!(s.score(&image(6, 5, 1), &ScoreTarget::ClassLogit(0)).unwrap(), 0.0);
    }

    #[test]
    fn linear_gradient_is_weight() {
        let wimg = Grid::from_vec(3, 2, vec![1.0, -2.0, 0.5, 0.0, 3.0, -1.0]).unwrap();
        let s = Scorer::linear_single(wimg.clone());
        let g = s.pixel_gradient(&image(3, 2, 2), &ScoreTarget::ClassLogit(0)).unwrap();
        assert_eq!(g, wimg);
    }

    #[test]
    fn cosine_with_self_is_one() {
        let s = Scorer::embedding(16, 16, DEFAULT_EMBEDDING_DIM, 4);
        let x = image(16, 16, 3);
        let e = s.embed(&x).unwrap();
        let norm: f64 = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        let sim = s.score(&x, &ScoreTarget::CosineSim(e)).unwrap();
        assert!((sim - 1.0).abs() < 1e-12);
    }

    #[test]
    fn embed_requires_embedding_kind() {
        let s = Scorer::tiny_conv_classifier(16, 16, 3, 1);
        assert!(matches!(s.embed(&image(16, 16, 1)), Err(ScorerError::WrongKind { .. })));
    }

    #[test]
    fn errors() {
        let s = Scorer::tiny_conv_classifier(16, 16, 3, 1);
        assert!(matches!(
            s.score(&image(8, 16, 1), &ScoreTarget::ClassLogit(0)),
            Err(ScorerError::DimensionMismatch { .. })
        ));
        assert!(matches!(s.score(&image(16, 16, 1), &ScoreTarget::ClassLogit(3)), Err(ScorerError::InvalidTarget(_))));
        assert!(s.score(&image(16, 16, 1), &ScoreTarget::CosineSim(vec![1.0; 2])).is_err());
        let bad = Scorer::linear_single(Grid::filled(2, 2, f64::NAN));
        assert!(matches!(bad.score(&image(2, 2, 1), &ScoreTarget::ClassLogit(0)), Err(ScorerError::NonFinite)));
    }

    #[test]
    fn constant_image_gradient_reproducible() {
        let s = Scorer::tiny_conv_classifier(24, 24, 3, 9);
        let x = RasterImage::from_grid(Grid::filled(24, 24, 0.3)).unwrap();
        let a = s.pixel_gradient(&x, &ScoreTarget::ClassLogit(1)).unwrap();
        let b = s.pixel_gradient(&x, &ScoreTarget::ClassLogit(1)).unwrap();
        assert!(a.as_slice().iter().all(|v| v.is_finite()));
        assert_eq!(a.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn cross_entropy_value() {
        let (s, dy) = reduce_target(&[0.0, 0.0], &ScoreTarget::ClassLoss(1));
        assert!((s - 2f64.ln()).abs() < 1e-15);
        assert_eq!(dy, vec![0.5, -0.5]);
    }
}
