//! Seeded toy corpora: parametric circles, rectangles and triangles drawn as
//! multi-stroke polylines, with optional noise scribbles and paired "photos".
//!
//! Every stroke is a run of pen-down points closed by a pen-up point that
//! repeats the last coordinate, so hard and soft renders ink the same segments.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::diffraster::{self, RenderParams};
use crate::image::RasterImage;
use crate::raster;
use crate::scorer::EmbeddingExample;
use crate::sketch::{Point, VectorSketch};

pub const TOY_CANVAS: u32 = 64;

/// Sample spacing along outlines, in pixels.
const SPACING: f64 = 4.0;
const MAX_DOWN_POINTS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeClass {
    Circle,
    Square,
    Triangle,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 3] = [ShapeClass::Circle, ShapeClass::Square, ShapeClass::Triangle];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Circle => "circle",
            ShapeClass::Square => "square",
            ShapeClass::Triangle => "triangle",
        }
    }

    pub fn labels() -> Vec<String> {
        Self::ALL.iter().map(|c| c.name().to_string()).collect()
    }
}

/// Geometry of one clean shape.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeInstance {
    pub class: ShapeClass,
    pub center: (f64, f64),
    pub radius: f64,
    pub aspect: f64,
    pub rotation: f64,
    /// Per-vertex radius factors (triangles) or arc split fractions (circles).
    pub shape_params: Vec<f64>,
}

type Polyline = Vec<(f64, f64)>;

impl ShapeInstance {
    pub fn sample(class: ShapeClass, radius: (f64, f64), rng: &mut impl Rng) -> ShapeInstance {
        let c = TOY_CANVAS as f64 / 2.0;
        let shape_params = match class {
            ShapeClass::Circle => {
                let mut cuts = [rng.gen_range(0.25..0.42), rng.gen_range(0.58..0.8)];
                cuts.sort_by(f64::total_cmp);
                vec![rng.gen_range(0.0..1.0), cuts[0], cuts[1]]
            }
            ShapeClass::Square => vec![],
            ShapeClass::Triangle => (0..3).map(|_| rng.gen_range(0.8..1.1)).collect(),
        };
        ShapeInstance {
            class,
            center: (c + rng.gen_range(-4.0..4.0), c + rng.gen_range(-4.0..4.0)),
            radius: rng.gen_range(radius.0..radius.1),
            aspect: rng.gen_range(0.6..1.0),
            rotation: rng.gen_range(-0.4..0.4),
            shape_params,
        }
    }

    fn place(&self, (u, v): (f64, f64)) -> (f64, f64) {
        let (s, c) = self.rotation.sin_cos();
        let (u, v) = (u * self.radius, v * self.radius * self.aspect);
        (self.center.0 + c * u - s * v, self.center.1 + s * u + c * v)
    }

    /// Clean outline, one polyline per stroke.
    pub fn outline(&self) -> Vec<Polyline> {
        match self.class {
            ShapeClass::Circle => {
                let p = &self.shape_params;
                let bounds = [0.0, p[1], p[2], 1.0];
                bounds
                    .windows(2)
                    .map(|b| {
                        let arc = |f: f64| {
                            let a = 2.0 * PI * (p[0] + f);
                            self.place((a.cos(), a.sin()))
                        };
                        sample_curve(arc, b[0], b[1])
                    })
                    .collect()
            }
            ShapeClass::Square => {
                let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)].map(|c| self.place(c));
                (0..4).map(|i| sample_line(corners[i], corners[(i + 1) % 4])).collect()
            }
            ShapeClass::Triangle => {
                let v: Vec<(f64, f64)> = (0..3)
                    .map(|i| {
                        let a = -PI / 2.0 + 2.0 * PI * i as f64 / 3.0;
                        let r = self.shape_params[i];
                        self.place((r * a.cos(), r * a.sin()))
                    })
                    .collect();
                (0..3).map(|i| sample_line(v[i], v[(i + 1) % 3])).collect()
            }
        }
    }

    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.outline().iter().flatten().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), &(x, y)| (a.min(x), b.min(y), c.max(x), d.max(y)),
        )
    }

    pub fn clean_sketch(&self) -> VectorSketch {
        strokes_to_sketch(&self.outline())
    }

    /// Thick, smooth rendering of the clean outline that stands in for a photo.
    pub fn photo(&self) -> RasterImage {
        let params = RenderParams::new(2.0, 2.0).expect("positive slope");
        diffraster::soft_render(&self.clean_sketch(), &params)
    }
}

fn n_samples(len: f64) -> usize {
    ((len / SPACING).round() as usize + 1).clamp(2, MAX_DOWN_POINTS)
}

fn sample_line(a: (f64, f64), b: (f64, f64)) -> Polyline {
    let n = n_samples((b.0 - a.0).hypot(b.1 - a.1));
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
        })
        .collect()
}

fn sample_curve(f: impl Fn(f64) -> (f64, f64), t0: f64, t1: f64) -> Polyline {
    let len: f64 = (0..16)
        .map(|i| {
            let (a, b) = (f(t0 + (t1 - t0) * i as f64 / 16.0), f(t0 + (t1 - t0) * (i + 1) as f64 / 16.0));
            (b.0 - a.0).hypot(b.1 - a.1)
        })
        .sum();
    let n = n_samples(len);
    (0..n).map(|i| f(t0 + (t1 - t0) * i as f64 / (n - 1) as f64)).collect()
}

fn clamp_xy((x, y): (f64, f64)) -> (f64, f64) {
    let m = TOY_CANVAS as f64 - 1.0;
    (x.clamp(0.0, m), y.clamp(0.0, m))
}

/// Each polyline becomes pen-down points plus a closing pen-up duplicate; an
/// end marker follows the last stroke.
pub fn strokes_to_sketch(strokes: &[Polyline]) -> VectorSketch {
    let mut pts = Vec::new();
    for s in strokes {
        for &p in s {
            let (x, y) = clamp_xy(p);
            pts.push(Point::down(x, y));
        }
        let (x, y) = clamp_xy(*s.last().expect("non-empty stroke"));
        pts.push(Point::up(x, y));
    }
    let last = pts.last().expect("at least one stroke").xy();
    pts.push(Point::end(last.0, last.1));
    VectorSketch::new(pts, TOY_CANVAS, TOY_CANVAS).expect("generated sketch is valid")
}

/// How a simulated person draws an instance.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawStyle {
    /// Standard deviation of per-point jitter, in pixels.
    pub jitter: f64,
    /// Random scribbles placed away from the shape.
    pub noise_strokes: usize,
    /// Short 3 to 5 point marks placed anywhere on the canvas.
    pub detail_strokes: usize,
    /// Long strokes first when set, random order otherwise.
    pub salient_first: bool,
    /// Chance that an outline stroke is drawn as a short piece of 2 to 4
    /// pen-down points followed by the rest.
    pub split_prob: f64,
}

impl Default for DrawStyle {
    fn default() -> Self {
        DrawStyle { jitter: 0.6, noise_strokes: 0, detail_strokes: 0, salient_first: true, split_prob: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrawnSketch {
    pub sketch: VectorSketch,
    /// Stroke indices of injected noise scribbles.
    pub noise: Vec<usize>,
    /// Stroke indices of short detail marks.
    pub details: Vec<usize>,
}

fn jittered(line: &Polyline, sigma: f64, rng: &mut impl Rng) -> Polyline {
    let n = Normal::new(0.0, sigma.max(1e-9)).expect("finite sigma");
    let (ox, oy) = (n.sample(rng) * 0.5, n.sample(rng) * 0.5);
    line.iter().map(|&(x, y)| (x + ox + n.sample(rng), y + oy + n.sample(rng))).collect()
}

fn polyline_len(l: &Polyline) -> f64 {
    l.windows(2).map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1)).sum()
}

/// Zigzag scribble whose bounding box keeps a gap to `avoid` when possible.
pub fn scribble(avoid: (f64, f64, f64, f64), rng: &mut impl Rng) -> Polyline {
    let m = TOY_CANVAS as f64;
    let n = rng.gen_range(4..=7);
    let ext = rng.gen_range(6.0..11.0);
    let mut best = None;
    for _ in 0..60 {
        let (x0, y0) = (rng.gen_range(1.0..m - ext - 1.0), rng.gen_range(1.0..m - ext - 1.0));
        let gap_x = (avoid.0 - (x0 + ext)).max(x0 - avoid.2);
        let gap_y = (avoid.1 - (y0 + ext)).max(y0 - avoid.3);
        let gap = gap_x.max(gap_y);
        if best.map_or(true, |(g, _)| gap > g) {
            best = Some((gap, (x0, y0)));
        }
        if gap >= 4.0 {
            break;
        }
    }
    let (x0, y0) = best.expect("at least one candidate").1;
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            (x0 + rng.gen_range(0.0..ext), y0 + t * ext)
        })
        .collect()
}

fn detail_mark(rng: &mut impl Rng) -> Polyline {
    let m = TOY_CANVAS as f64;
    let n = rng.gen_range(2..=4);
    let (x, y) = (rng.gen_range(6.0..m - 6.0), rng.gen_range(6.0..m - 6.0));
    let a = rng.gen_range(0.0..2.0 * PI);
    let len = rng.gen_range(3.0..8.0);
    (0..n)
        .map(|i| {
            let t = len * i as f64 / (n - 1) as f64;
            (x + t * a.cos(), y + t * a.sin())
        })
        .collect()
}

pub fn draw(inst: &ShapeInstance, style: &DrawStyle, rng: &mut impl Rng) -> DrawnSketch {
    let mut main: Vec<Polyline> = Vec::new();
    for line in inst.outline() {
        let line = jittered(&line, style.jitter, rng);
        if line.len() >= 6 && rng.gen_bool(style.split_prob) {
            // the short piece has k points and shares one endpoint with the rest
            let k = rng.gen_range(2..=4);
            let cut = if rng.gen_bool(0.5) { k } else { line.len() - k + 1 };
            main.push(line[..cut].to_vec());
            main.push(line[cut - 1..].to_vec());
        } else {
            main.push(line);
        }
    }
    if style.salient_first {
        main.sort_by(|a, b| polyline_len(b).total_cmp(&polyline_len(a)));
    }
    // 0 = main, 1 = noise, 2 = detail
    let mut strokes: Vec<(u8, Polyline)> = main.into_iter().map(|l| (0, l)).collect();
    let bounds = inst.bounds();
    strokes.extend((0..style.noise_strokes).map(|_| (1, scribble(bounds, rng))));
    strokes.extend((0..style.detail_strokes).map(|_| (2, detail_mark(rng))));
    if !style.salient_first {
        strokes.shuffle(rng);
    }
    let kinds: Vec<u8> = strokes.iter().map(|(k, _)| *k).collect();
    let lines: Vec<Polyline> = strokes.into_iter().map(|(_, l)| l).collect();
    let of = |k| kinds.iter().enumerate().filter(|(_, &x)| x == k).map(|(i, _)| i).collect();
    DrawnSketch { sketch: strokes_to_sketch(&lines), noise: of(1), details: of(2) }
}

/// Labelled sketches, `n_per_class` per shape, each with 0 to 2 detail marks.
pub fn classification_corpus(n_per_class: usize, seed: u64) -> Vec<(VectorSketch, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(3 * n_per_class);
    for _ in 0..n_per_class {
        for class in ShapeClass::ALL {
            let inst = ShapeInstance::sample(class, (12.0, 24.0), &mut rng);
            let style = DrawStyle {
                jitter: rng.gen_range(0.3..1.2),
                detail_strokes: rng.gen_range(0..=2),
                split_prob: 0.5,
                ..Default::default()
            };
            out.push((draw(&inst, &style, &mut rng).sketch, class.index()));
        }
    }
    out
}

/// Hard rasters and soft renders of every sketch, for training a classifier
/// that is used on both renderers.
pub fn classifier_images(corpus: &[(VectorSketch, usize)], params: &RenderParams) -> Vec<(RasterImage, usize)> {
    corpus
        .iter()
        .flat_map(|(s, c)| [(raster::rasterise(s), *c), (diffraster::soft_render(s, params), *c)])
        .collect()
}

/// Attack test set drawn like the classification corpus.
pub fn attack_corpus(n: usize, seed: u64) -> Vec<(VectorSketch, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let class = ShapeClass::ALL[i % 3];
            let inst = ShapeInstance::sample(class, (12.0, 24.0), &mut rng);
            let style = DrawStyle {
                jitter: rng.gen_range(0.3..1.2),
                detail_strokes: rng.gen_range(0..=1),
                split_prob: 0.5,
                ..Default::default()
            };
            (draw(&inst, &style, &mut rng).sketch, class.index())
        })
        .collect()
}

/// Sketch/photo pairs for embedding training. Each sketch comes with two
/// corrupted copies: one outline stroke dropped, and one scribble added.
pub fn embedding_examples(n: usize, seed: u64) -> Vec<EmbeddingExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let inst = ShapeInstance::sample(ShapeClass::ALL[i % 3], (10.0, 24.0), &mut rng);
            let style = DrawStyle {
                jitter: rng.gen_range(0.3..1.5),
                noise_strokes: 1,
                salient_first: rng.gen_bool(0.5),
                split_prob: 0.3,
                ..Default::default()
            };
            let drawn = draw(&inst, &style, &mut rng);
            let clean = drawn.sketch.without_strokes(&drawn.noise).expect("outline strokes remain");
            let n_clean = clean.split_strokes().len();
            let missing = clean.without_strokes(&[rng.gen_range(0..n_clean)]).expect("shapes have several strokes");
            EmbeddingExample {
                sketch: raster::rasterise(&clean),
                photo: inst.photo(),
                corrupted: vec![raster::rasterise(&missing), raster::rasterise(&drawn.sketch)],
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyExample {
    pub instance: ShapeInstance,
    pub drawn: DrawnSketch,
}

/// Clean sketches with 1 or 2 injected noise scribbles.
pub fn noisy_corpus(n: usize, seed: u64) -> Vec<NoisyExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let instance = ShapeInstance::sample(ShapeClass::ALL[i % 3], (10.0, 18.0), &mut rng);
            let style = DrawStyle { noise_strokes: rng.gen_range(1..=2), ..Default::default() };
            let drawn = draw(&instance, &style, &mut rng);
            NoisyExample { instance, drawn }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalQuery {
    pub sketch: VectorSketch,
    /// Index of the matching gallery photo.
    pub target: usize,
    /// Simulated drawing skill in `[0, 1]`.
    pub skill: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalCorpus {
    pub instances: Vec<ShapeInstance>,
    pub photos: Vec<RasterImage>,
    pub queries: Vec<RetrievalQuery>,
}

/// One query per gallery instance. Skilled drawers jitter less, add fewer
/// scribbles and draw long strokes first; unskilled ones draw in random order.
pub fn retrieval_corpus(n: usize, seed: u64) -> RetrievalCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances: Vec<ShapeInstance> =
        (0..n).map(|i| ShapeInstance::sample(ShapeClass::ALL[i % 3], (10.0, 24.0), &mut rng)).collect();
    let photos = instances.iter().map(ShapeInstance::photo).collect();
    let queries = instances
        .iter()
        .enumerate()
        .map(|(target, inst)| {
            let skill: f64 = rng.gen_range(0.0..1.0);
            let style = DrawStyle {
                jitter: 0.4 + 2.0 * (1.0 - skill),
                noise_strokes: ((1.0 - skill) * 2.5).floor() as usize,
                detail_strokes: 0,
                salient_first: rng.gen_range(0.0..1.0) < skill,
                split_prob: 0.0,
            };
            RetrievalQuery { sketch: draw(inst, &style, &mut rng).sketch, target, skill }
        })
        .collect();
    RetrievalCorpus { instances, photos, queries }
}
