//! Seeded single-process training for the toy scorers.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::net::{ConvNet, ConvParams};
use super::{argmax, softmax, Net, Scorer, ScorerError, ScorerKind};
use crate::image::RasterImage;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub val_fraction: f64,
    /// Triplet margin on cosine similarity (embedding training only).
    pub margin: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 6, learning_rate: 2e-3, batch_size: 16, seed: 7, val_fraction: 0.2, margin: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub n_train: usize,
    pub n_val: usize,
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingReport {
    pub n_train: usize,
    pub n_val: usize,
    pub final_loss: f64,
    /// Fraction of held-out (anchor, positive, negative) triplets ranked correctly.
    pub val_triplet_accuracy: f64,
}

struct Adam {
    m: ConvParams,
    v: ConvParams,
    step: i32,
    lr: f64,
}

impl Adam {
    fn new(params: &ConvParams, lr: f64) -> Adam {
        Adam { m: ConvParams::zeros_like(params), v: ConvParams::zeros_like(params), step: 0, lr }
    }

    fn update(&mut self, params: &mut ConvParams, grads: &ConvParams) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.step += 1;
        let c1 = 1.0 - B1.powi(self.step);
        let c2 = 1.0 - B2.powi(self.step);
        for i in 0..8 {
            let (p, g, m, v) = (&mut params.tensors[i], &grads.tensors[i], &mut self.m.tensors[i], &mut self.v.tensors[i]);
            for j in 0..p.len() {
                m[j] = B1 * m[j] + (1.0 - B1) * g[j];
                v[j] = B2 * v[j] + (1.0 - B2) * g[j] * g[j];
                p[j] -= self.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + 1e-8);
            }
        }
    }
}

fn split_indices(n: usize, val_fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_val = ((n as f64) * val_fraction).round() as usize;
    let val = idx[..n_val].to_vec();
    let train = idx[n_val..].to_vec();
    (train, val)
}

fn check_dims(images: impl Iterator<Item = (usize, usize)>) -> Result<(usize, usize), ScorerError> {
    let mut dims = None;
    for d in images {
        match dims {
            None => dims = Some(d),
            Some(e) if e != d => return Err(ScorerError::DimensionMismatch { expected: e, got: d }),
            _ => {}
        }
    }
    dims.ok_or_else(|| ScorerError::CorpusTooSmall("empty corpus".into()))
}

/// Trains the small convolutional classifier with cross-entropy and Adam.
///
/// Requires at least two classes with 20 examples each. Deterministic for a
/// fixed seed; parameters are rounded to `f32` at the end so that saving and
/// reloading the model is lossless.
pub fn train_tiny_classifier(
    corpus: &[(RasterImage, usize)],
    labels: Vec<String>,
    config: &TrainConfig,
) -> Result<(Scorer, TrainReport), ScorerError> {
    let n_classes = corpus.iter().map(|(_, c)| c + 1).max().unwrap_or(0);
    if n_classes < 2 {
        return Err(ScorerError::CorpusTooSmall(format!("need at least 2 classes, found {n_classes}")));
    }
    let mut counts = vec![0usize; n_classes];
    corpus.iter().for_each(|(_, c)| counts[*c] += 1);
    if let Some((c, n)) = counts.iter().enumerate().find(|(_, &n)| n < 20) {
        return Err(ScorerError::CorpusTooSmall(format!("class {c} has {n} examples, need 20")));
    }
    let (w, h) = check_dims(corpus.iter().map(|(img, _)| img.dims()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = ConvNet::init(w, h, n_classes, false, &mut rng);
    let (mut train, val) = split_indices(corpus.len(), config.val_fraction, &mut rng);
    let mut adam = Adam::new(&net.params, config.learning_rate);
    let mut final_loss = f64::NAN;
    for _ in 0..config.epochs {
        train.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in train.chunks(config.batch_size.max(1)) {
            let per_example: Vec<(f64, ConvParams)> = batch
                .par_iter()
                .map(|&i| {
                    let (img, label) = &corpus[i];
                    let cache = net.forward(img.pixels());
                    let p = softmax(&cache.out);
                    let loss = -p[*label].max(1e-300).ln();
                    let mut dy = p;
                    dy[*label] -= 1.0;
                    let mut g = ConvParams::zeros_like(&net.params);
                    net.backward(&cache, &dy, false, Some(&mut g));
                    (loss, g)
                })
                .collect();
            let mut grads = ConvParams::zeros_like(&net.params);
            for (loss, g) in &per_example {
                epoch_loss += loss;
                grads.add_assign(g);
            }
            grads.scale(1.0 / batch.len() as f64);
            adam.update(&mut net.params, &grads);
        }
        final_loss = epoch_loss / train.len().max(1) as f64;
    }
    let mut scorer = Scorer { kind: ScorerKind::TinyConvClassifier, net: Net::Conv(net), labels };
    scorer.quantize_f32();
    let accuracy = |idx: &[usize]| -> f64 {
        if idx.is_empty() {
            return f64::NAN;
        }
        let hits: usize = idx
            .par_iter()
            .map(|&i| (scorer.outputs(&corpus[i].0).map(|y| argmax(&y)).ok() == Some(corpus[i].1)) as usize)
            .sum();
        hits as f64 / idx.len() as f64
    };
    let report = TrainReport {
        n_train: train.len(),
        n_val: val.len(),
        final_loss,
        train_accuracy: accuracy(&train),
        val_accuracy: accuracy(&val),
    };
    Ok((scorer, report))
}

/// One sketch/photo pair for embedding training. `corrupted` holds degraded
/// versions of the sketch (a missing stroke, an extra scribble) that must sit
/// further from the photo than the sketch itself.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingExample {
    pub sketch: RasterImage,
    pub photo: RasterImage,
    pub corrupted: Vec<RasterImage>,
}

impl EmbeddingExample {
    pub fn pair(sketch: RasterImage, photo: RasterImage) -> Self {
        EmbeddingExample { sketch, photo, corrupted: Vec::new() }
    }
}

/// Trains a siamese embedding with the cosine triplet loss
/// `max(0, margin - cos(a, p) + cos(a, n))`. Each sketch is an anchor against
/// the hardest other photo in its batch, and each photo is an anchor against
/// the corrupted versions of its own sketch.
pub fn train_embedding(
    examples: &[EmbeddingExample],
    dim: usize,
    config: &TrainConfig,
) -> Result<(Scorer, EmbeddingReport), ScorerError> {
    if examples.len() < 20 {
        return Err(ScorerError::CorpusTooSmall(format!("{} pairs, need 20", examples.len())));
    }
    let (w, h) = check_dims(
        examples.iter().flat_map(|e| [&e.sketch, &e.photo].into_iter().chain(&e.corrupted).map(RasterImage::dims)),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = ConvNet::init(w, h, dim, true, &mut rng);
    let (mut train, val) = split_indices(examples.len(), config.val_fraction, &mut rng);
    let mut adam = Adam::new(&net.params, config.learning_rate);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut final_loss = f64::NAN;
    for _ in 0..config.epochs {
        train.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in train.chunks(config.batch_size.max(2)) {
            if batch.len() < 2 {
                continue;
            }
            let sketch_caches: Vec<_> = batch.par_iter().map(|&i| net.forward(examples[i].sketch.pixels())).collect();
            let photo_caches: Vec<_> = batch.par_iter().map(|&i| net.forward(examples[i].photo.pixels())).collect();
            let corrupt_caches: Vec<Vec<_>> = batch
                .par_iter()
                .map(|&i| examples[i].corrupted.iter().map(|c| net.forward(c.pixels())).collect())
                .collect();
            let mut d_sketch = vec![vec![0.0; dim]; batch.len()];
            let mut d_photo = vec![vec![0.0; dim]; batch.len()];
            let mut d_corrupt: Vec<Vec<Vec<f64>>> = corrupt_caches.iter().map(|c| vec![vec![0.0; dim]; c.len()]).collect();
            for i in 0..batch.len() {
                let a = &sketch_caches[i].out;
                let p = &photo_caches[i].out;
                let pos = dot(a, p);
                let (j, neg) = (0..batch.len())
                    .filter(|&j| j != i)
                    .map(|j| (j, dot(a, &photo_caches[j].out)))
                    .fold((usize::MAX, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best });
                let loss = config.margin - pos + neg;
                if loss > 0.0 {
                    epoch_loss += loss;
                    for k in 0..dim {
                        d_sketch[i][k] += photo_caches[j].out[k] - p[k];
                        d_photo[i][k] -= a[k];
                        d_photo[j][k] += a[k];
                    }
                }
                for (c, cache) in corrupt_caches[i].iter().enumerate() {
                    let loss = config.margin - pos + dot(p, &cache.out);
                    if loss > 0.0 {
                        epoch_loss += loss;
                        for k in 0..dim {
                            d_photo[i][k] += cache.out[k] - a[k];
                            d_sketch[i][k] -= p[k];
                            d_corrupt[i][c][k] += p[k];
                        }
                    }
                }
            }
            let grads_list: Vec<ConvParams> = (0..batch.len())
                .into_par_iter()
                .map(|i| {
                    let mut g = ConvParams::zeros_like(&net.params);
                    net.backward(&sketch_caches[i], &d_sketch[i], false, Some(&mut g));
                    net.backward(&photo_caches[i], &d_photo[i], false, Some(&mut g));
                    for (cache, d) in corrupt_caches[i].iter().zip(&d_corrupt[i]) {
                        net.backward(cache, d, false, Some(&mut g));
                    }
                    g
                })
                .collect();
            let mut grads = ConvParams::zeros_like(&net.params);
            grads_list.iter().for_each(|g| grads.add_assign(g));
            grads.scale(1.0 / batch.len() as f64);
            adam.update(&mut net.params, &grads);
        }
        final_loss = epoch_loss / train.len().max(1) as f64;
    }
    let mut scorer = Scorer { kind: ScorerKind::Embedding, net: Net::Conv(net), labels: Vec::new() };
    scorer.quantize_f32();
    let sk: Vec<Vec<f64>> = val.par_iter().map(|&i| scorer.embed(&examples[i].sketch).expect("dims checked")).collect();
    let ph: Vec<Vec<f64>> = val.par_iter().map(|&i| scorer.embed(&examples[i].photo).expect("dims checked")).collect();
    let (mut good, mut total) = (0usize, 0usize);
    for i in 0..val.len() {
        let pos = super::cosine(&sk[i], &ph[i]);
        for j in (0..val.len()).filter(|&j| j != i) {
            total += 1;
            good += (pos > super::cosine(&sk[i], &ph[j])) as usize;
        }
    }
    let report = EmbeddingReport {
        n_train: train.len(),
        n_val: val.len(),
        final_loss,
        val_triplet_accuracy: if total == 0 { f64::NAN } else { good as f64 / total as f64 },
    };
    Ok((scorer, report))
}
