//! JSON job handling shared by the command line and the HTTP service.
//!
//! A [`JobRequest`] names an operation, carries a stroke-5 sketch and an
//! optional model reference, and [`handle_job`] turns it into a
//! [`JobResponse`] or a [`ServiceError`] with a stable code.

mod http;
mod registry;

pub use http::{serve, spawn, ServeOptions, ServerHandle};
pub use registry::{Gallery, GalleryItem, ModelEntry, ModelRegistry, MODELS_DIR_ENV};

use std::sync::Arc;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::applications::{
    filter_noisy_points, filter_noisy_strokes, retrieval_reliability, run_attack, ApplicationError, AttackConfig,
    AttackMode, FilterConfig, ReliabilityOptions,
};
use crate::attribution::{psla, sla_with, AttributionError, AttributionResult, CorrMethod, Granularity, SlaOptions, WeightMode};
use crate::diffraster::{soft_render, RenderParams};
use crate::export;
use crate::raster::rasterise;
use crate::scorer::{self, ScoreTarget, Scorer, ScorerError, ScorerKind, TrainConfig};
use crate::sketch::{SketchError, VectorSketch};
use crate::synthetic;

pub const MAX_REQUEST_BYTES: usize = 1 << 20;
pub const MAX_POINTS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Render,
    Attribute,
    Filter,
    Attack,
    Reliability,
    Train,
}

impl std::str::FromStr for Operation {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, ServiceError> {
        serde_json::from_value(Value::String(s.to_string()))
            .map_err(|_| ServiceError::not_found(format!("unknown operation `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRequest {
    pub operation: Operation,
    /// Stroke-5 JSON document.
    #[serde(default)]
    pub sketch: Option<Value>,
    /// Registry id, or a file path when the registry allows it.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub params: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Artifact {
    pub name: String,
    pub media_type: &'static str,
    /// Base64 of the artifact bytes.
    pub data: String,
}

impl Artifact {
    fn new(name: &str, media_type: &'static str, bytes: &[u8]) -> Artifact {
        Artifact { name: name.into(), media_type, data: base64::engine::general_purpose::STANDARD.encode(bytes) }
    }

    pub fn bytes(&self) -> Vec<u8> {
        base64::engine::general_purpose::STANDARD.decode(&self.data).expect("artifact data is our own base64")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobResponse {
    pub status: &'static str,
    pub payload: Value,
    pub artifacts: Vec<Artifact>,
}

impl JobResponse {
    fn ok(payload: Value, artifacts: Vec<Artifact>) -> Self {
        JobResponse { status: "ok", payload, artifacts }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("response serializes")
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ServiceError {
    pub http_status: u16,
    pub code: &'static str,
    pub message: String,
}

impl ServiceError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        ServiceError { http_status: 400, code: "bad_request", message: message.into() }
    }

    pub fn unknown_model(message: impl Into<String>) -> Self {
        ServiceError { http_status: 404, code: "unknown_model", message: message.into() }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        ServiceError { http_status: 404, code: "not_found", message: message.into() }
    }

    pub fn too_large(message: impl Into<String>) -> Self {
        ServiceError { http_status: 413, code: "payload_too_large", message: message.into() }
    }

    pub fn unprocessable(code: &'static str, message: impl Into<String>) -> Self {
        ServiceError { http_status: 422, code, message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ServiceError { http_status: 500, code: "internal", message: message.into() }
    }

    pub fn timeout(message: impl Into<String>) -> Self {
        ServiceError { http_status: 504, code: "timeout", message: message.into() }
    }

    pub fn to_json(&self) -> String {
        json!({"status": "error", "error": {"code": self.code, "message": self.message}}).to_string()
    }
}

impl From<SketchError> for ServiceError {
    fn from(e: SketchError) -> Self {
        ServiceError::bad_request(e.to_string())
    }
}

impl From<ScorerError> for ServiceError {
    fn from(e: ScorerError) -> Self {
        match e {
            ScorerError::DimensionMismatch { .. } | ScorerError::InvalidTarget(_) | ScorerError::WrongKind { .. } => {
                ServiceError::bad_request(e.to_string())
            }
            ScorerError::CorpusTooSmall(_) => ServiceError::bad_request(e.to_string()),
            ScorerError::Io(_) | ScorerError::ModelFormat(_) => ServiceError::unknown_model(e.to_string()),
            ScorerError::NonFinite => ServiceError::internal(e.to_string()),
        }
    }
}

impl From<AttributionError> for ServiceError {
    fn from(e: AttributionError) -> Self {
        match e {
            AttributionError::Scorer(s) => s.into(),
            other => ServiceError::bad_request(other.to_string()),
        }
    }
}

impl From<ApplicationError> for ServiceError {
    fn from(e: ApplicationError) -> Self {
        match e {
            ApplicationError::Scorer(s) => s.into(),
            ApplicationError::Attribution(a) => a.into(),
            ApplicationError::NoCandidate { .. } => ServiceError::unprocessable("no_candidate", e.to_string()),
            ApplicationError::TooFewStrokes(_) | ApplicationError::Budget(_) => {
                ServiceError::unprocessable("budget", e.to_string())
            }
            other => ServiceError::bad_request(other.to_string()),
        }
    }
}

/// Typed access to the free-form `params` map.
struct Params<'a>(&'a Map<String, Value>);

impl Params<'_> {
    fn str(&self, key: &str) -> Result<Option<&str>, ServiceError> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(ServiceError::bad_request(format!("param `{key}` must be a string"))),
        }
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, ServiceError> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v.as_f64().map(Some).ok_or_else(|| ServiceError::bad_request(format!("param `{key}` must be a number"))),
        }
    }

    fn usize(&self, key: &str) -> Result<Option<usize>, ServiceError> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v
                .as_u64()
                .map(|n| Some(n as usize))
                .ok_or_else(|| ServiceError::bad_request(format!("param `{key}` must be a non-negative integer"))),
        }
    }

    fn bool(&self, key: &str) -> Result<Option<bool>, ServiceError> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v.as_bool().map(Some).ok_or_else(|| ServiceError::bad_request(format!("param `{key}` must be a boolean"))),
        }
    }

    fn vec(&self, key: &str) -> Result<Option<Vec<f64>>, ServiceError> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|_| ServiceError::bad_request(format!("param `{key}` must be an array of numbers"))),
        }
    }

    fn render_params(&self) -> Result<RenderParams, ServiceError> {
        let d = RenderParams::default();
        RenderParams::new(self.f64("a")?.unwrap_or(d.a), self.f64("b")?.unwrap_or(d.b))
            .map_err(|e| ServiceError::bad_request(e.to_string()))
    }

    fn granularity(&self, key: &str, default: Granularity) -> Result<Granularity, ServiceError> {
        match self.str(key)? {
            None => Ok(default),
            Some("sla" | "stroke") => Ok(Granularity::Stroke),
            Some("psla" | "point") => Ok(Granularity::Point),
            Some(other) => Err(ServiceError::bad_request(format!("unknown {key} `{other}`"))),
        }
    }
}

/// Parses the request's sketch, enforcing the point cap.
pub fn request_sketch(req: &JobRequest) -> Result<VectorSketch, ServiceError> {
    let doc = req.sketch.as_ref().ok_or_else(|| ServiceError::bad_request("missing `sketch`"))?;
    if let Some(n) = doc.get("points").and_then(Value::as_array).map(Vec::len) {
        if n > MAX_POINTS {
            return Err(ServiceError::too_large(format!("{n} points exceed the limit of {MAX_POINTS}")));
        }
    }
    let bytes = serde_json::to_vec(doc).expect("a JSON value serializes");
    Ok(VectorSketch::from_stroke5_json(&bytes)?)
}

/// Parses a target spec: `predicted`, `class:N`, `loss:N`, `embedding_sum`,
/// `gallery:ID` or `cosine` (with a `reference` vector param).
fn parse_target(
    spec: &str,
    scorer: &Scorer,
    entry: &ModelEntry,
    image: &crate::image::RasterImage,
    params: &Params,
) -> Result<ScoreTarget, ServiceError> {
    let class = |s: &str| -> Result<usize, ServiceError> {
        s.parse()
            .ok()
            .or_else(|| scorer.labels().iter().position(|l| l == s))
            .ok_or_else(|| ServiceError::bad_request(format!("unknown class `{s}`")))
    };
    Ok(match spec.split_once(':') {
        None if spec == "predicted" => match scorer.kind() {
            ScorerKind::Embedding => ScoreTarget::EmbeddingSum,
            _ => ScoreTarget::ClassLogit(scorer.predict(image)?),
        },
        None if spec == "embedding_sum" => ScoreTarget::EmbeddingSum,
        None if spec == "cosine" => ScoreTarget::CosineSim(
            params.vec("reference")?.ok_or_else(|| ServiceError::bad_request("target `cosine` needs `reference`"))?,
        ),
        Some(("class", c)) => ScoreTarget::ClassLogit(class(c)?),
        Some(("loss", c)) => ScoreTarget::ClassLoss(class(c)?),
        Some(("gallery", id)) => ScoreTarget::CosineSim(entry.gallery_embedding(id)?.to_vec()),
        _ => return Err(ServiceError::bad_request(format!("unknown target `{spec}`"))),
    })
}

fn attribution_payload(result: &AttributionResult, target: &ScoreTarget) -> Value {
    let target = match target {
        ScoreTarget::ClassLogit(c) => json!({"kind": "class_logit", "class": c}),
        ScoreTarget::ClassLoss(c) => json!({"kind": "class_loss", "class": c}),
        ScoreTarget::CosineSim(_) => json!({"kind": "cosine_sim"}),
        ScoreTarget::EmbeddingSum => json!({"kind": "embedding_sum"}),
    };
    json!({
        "granularity": result.granularity,
        "target": target,
        "score": result.score,
        "scores": result.scores,
        "ranking": result.ranking,
        "point_grads": result.point_grads.as_ref().map(|g| g.iter().map(|(x, y)| [*x, *y]).collect::<Vec<_>>()),
    })
}

fn reference_vector(entry: &ModelEntry, params: &Params) -> Result<Vec<f64>, ServiceError> {
    if let Some(Value::String(spec)) = params.0.get("reference") {
        let id = spec.strip_prefix("gallery:").unwrap_or(spec);
        return Ok(entry.gallery_embedding(id)?.to_vec());
    }
    match params.vec("reference")? {
        Some(v) => Ok(v),
        None => Err(ServiceError::bad_request("missing `reference` (vector or gallery:ID)")),
    }
}

fn need_model(registry: &ModelRegistry, req: &JobRequest) -> Result<Arc<ModelEntry>, ServiceError> {
    let id = req.model.as_deref().ok_or_else(|| ServiceError::bad_request("missing `model`"))?;
    registry.get(id)
}

/// Runs one job. Identical requests against the same registry give identical
/// responses.
pub fn handle_job(registry: &ModelRegistry, req: &JobRequest) -> Result<JobResponse, ServiceError> {
    let params = Params(&req.params);
    match req.operation {
        Operation::Render => {
            let sketch = request_sketch(req)?;
            let (image, renderer) = match params.str("renderer")?.unwrap_or("hard") {
                "hard" => (rasterise(&sketch), "hard"),
                "soft" => (soft_render(&sketch, &params.render_params()?), "soft"),
                other => return Err(ServiceError::bad_request(format!("unknown renderer `{other}`"))),
            };
            let png = export::png_gray(&image).map_err(|e| ServiceError::internal(e.to_string()))?;
            let payload = json!({
                "renderer": renderer,
                "width": image.w(),
                "height": image.h(),
                "ink_pixels_at_half": image.binarize(0.5).iter().filter(|&&b| b).count(),
                "strokes": sketch.split_strokes().len(),
            });
            Ok(JobResponse::ok(payload, vec![Artifact::new("render.png", "image/png", &png)]))
        }
        Operation::Attribute => {
            let sketch = request_sketch(req)?;
            let entry = need_model(registry, req)?;
            let scorer = &entry.scorer;
            let granularity = params.granularity("mode", Granularity::Stroke)?;
            let render = params.render_params()?;
            let image = match granularity {
                Granularity::Stroke => rasterise(&sketch),
                Granularity::Point => soft_render(&sketch, &render),
            };
            let target = parse_target(params.str("target")?.unwrap_or("predicted"), scorer, &entry, &image, &params)?;
            let result = match granularity {
                Granularity::Stroke => {
                    let weights = if params.bool("uniform_weights")?.unwrap_or(false) { WeightMode::Uniform } else { WeightMode::Trace };
                    sla_with(scorer, &target, &sketch, SlaOptions { weights, ..Default::default() })?
                }
                Granularity::Point => psla(scorer, &target, &sketch, &render)?,
            };
            let svg = export::overlay_svg(&sketch, granularity, &result.scores)
                .map_err(|e| ServiceError::internal(e.to_string()))?;
            let heat = export::heatmap_png(&result.pixel_grad).map_err(|e| ServiceError::internal(e.to_string()))?;
            let payload = attribution_payload(&result, &target);
            Ok(JobResponse::ok(
                payload.clone(),
                vec![
                    Artifact::new("scores.json", "application/json", serde_json::to_string_pretty(&payload).expect("json").as_bytes()),
                    Artifact::new("overlay.svg", "image/svg+xml", svg.as_bytes()),
                    Artifact::new("heatmap.png", "image/png", &heat),
                ],
            ))
        }
        Operation::Filter => {
            let sketch = request_sketch(req)?;
            let entry = need_model(registry, req)?;
            let granularity = params.granularity("granularity", Granularity::Stroke)?;
            let mut cfg = match granularity {
                Granularity::Stroke => FilterConfig::strokes(),
                Granularity::Point => FilterConfig::points(),
            };
            cfg.delta = params.f64("delta")?.unwrap_or(cfg.delta);
            cfg.gumbel_temperature = params.f64("temperature")?.unwrap_or(cfg.gumbel_temperature);
            cfg.stochastic = params.bool("stochastic")?.unwrap_or(false);
            cfg.seed = params.usize("seed")?.unwrap_or(0) as u64;
            cfg.params = params.render_params()?;
            let reference = reference_vector(&entry, &params)?;
            let (filtered, report) = match granularity {
                Granularity::Stroke => filter_noisy_strokes(&sketch, &entry.scorer, &reference, &cfg)?,
                Granularity::Point => filter_noisy_points(&sketch, &entry.scorer, &reference, &cfg)?,
            };
            let payload = json!({"report": report, "sketch": filtered});
            Ok(JobResponse::ok(
                payload,
                vec![Artifact::new("filtered.json", "application/json", filtered.to_stroke5_json().as_bytes())],
            ))
        }
        Operation::Attack => {
            let sketch = request_sketch(req)?;
            let entry = need_model(registry, req)?;
            let mode = match params.str("mode")?.unwrap_or("sla") {
                "sla" => AttackMode::SlaRemoveStroke,
                "psla" => AttackMode::PslaRemovePoints,
                other => return Err(ServiceError::bad_request(format!("unknown attack mode `{other}`"))),
            };
            let epsilon = params.usize("epsilon")?.unwrap_or(5);
            let mut cfg = AttackConfig::new(mode, epsilon);
            cfg.gradient_fast_path = params.bool("fast")?.unwrap_or(false);
            cfg.params = params.render_params()?;
            let label = match params.0.get("label") {
                None | Some(Value::Null) => {
                    let clean = match mode {
                        AttackMode::SlaRemoveStroke => rasterise(&sketch),
                        AttackMode::PslaRemovePoints => soft_render(&sketch, &cfg.params),
                    };
                    entry.scorer.predict(&clean)?
                }
                Some(Value::String(s)) => entry
                    .scorer
                    .labels()
                    .iter()
                    .position(|l| l == s)
                    .ok_or_else(|| ServiceError::bad_request(format!("unknown label `{s}`")))?,
                Some(_) => params.usize("label")?.expect("present"),
            };
            let out = run_attack(&entry.scorer, &sketch, label, &cfg)?;
            let payload = json!({
                "mode": out.mode,
                "epsilon": out.epsilon,
                "label": label,
                "removed": out.removed,
                "pred_before": out.pred_before,
                "pred_after": out.pred_after,
                "loss_before": out.loss_before,
                "loss_after": out.loss_after,
                "success": out.success,
                "adversarial_sketch": out.adversarial_sketch,
            });
            Ok(JobResponse::ok(payload, vec![]))
        }
        Operation::Reliability => {
            let sketch = request_sketch(req)?;
            let entry = need_model(registry, req)?;
            let gallery = entry.gallery.as_ref().ok_or_else(|| ServiceError::bad_request("model has no gallery"))?;
            let embeddings: Vec<Vec<f64>> = gallery.items.iter().map(|g| g.embedding.clone()).collect();
            let true_index = match params.str("true_id")? {
                Some(id) => Some(
                    gallery
                        .items
                        .iter()
                        .position(|g| g.id == id)
                        .ok_or_else(|| ServiceError::bad_request(format!("unknown gallery item `{id}`")))?,
                ),
                None => params.usize("true_index")?,
            };
            let opts = ReliabilityOptions {
                granularity: params.granularity("mode", Granularity::Stroke)?,
                method: match params.str("corr")?.unwrap_or("spearman") {
                    "spearman" => CorrMethod::Spearman,
                    "kendall" => CorrMethod::Kendall,
                    other => return Err(ServiceError::bad_request(format!("unknown correlation `{other}`"))),
                },
                params: params.render_params()?,
            };
            let report = retrieval_reliability(&sketch, &entry.scorer, &embeddings, true_index, &opts)?;
            let top1_id = gallery.items[report.top1].id.clone();
            Ok(JobResponse::ok(json!({"report": report, "top1_id": top1_id}), vec![]))
        }
        Operation::Train => {
            let kind = params.str("kind")?.unwrap_or("classifier");
            let cfg = TrainConfig {
                epochs: params.usize("epochs")?.unwrap_or(TrainConfig::default().epochs),
                seed: params.usize("seed")?.unwrap_or(7) as u64,
                ..TrainConfig::default()
            };
            let n = params.usize("n")?.unwrap_or(200);
            let (model, report) = match kind {
                "classifier" => {
                    let corpus = synthetic::classification_corpus(n, cfg.seed);
                    let images = synthetic::classifier_images(&corpus, &RenderParams::default());
                    let (m, r) = scorer::train_tiny_classifier(&images, synthetic::ShapeClass::labels(), &cfg)?;
                    (m, serde_json::to_value(r).expect("report serializes"))
                }
                "embedding" => {
                    let examples = synthetic::embedding_examples(n * 3, cfg.seed);
                    let (m, r) = scorer::train_embedding(&examples, scorer::DEFAULT_EMBEDDING_DIM, &cfg)?;
                    (m, serde_json::to_value(r).expect("report serializes"))
                }
                other => return Err(ServiceError::bad_request(format!("unknown model kind `{other}`"))),
            };
            let mut artifacts = vec![Artifact::new("model.bin", "application/octet-stream", &model.to_bytes())];
            if let Some(g) = params.usize("gallery")?.filter(|_| model.kind() == ScorerKind::Embedding) {
                let corpus = synthetic::retrieval_corpus(g, cfg.seed.wrapping_add(1));
                let items = corpus
                    .photos
                    .iter()
                    .enumerate()
                    .map(|(i, p)| Ok(GalleryItem { id: format!("photo-{i}"), embedding: model.embed(p)? }))
                    .collect::<Result<Vec<_>, ScorerError>>()?;
                let json = serde_json::to_string_pretty(&Gallery { items }).expect("gallery serializes");
                artifacts.push(Artifact::new("gallery.json", "application/json", json.as_bytes()));
            }
            Ok(JobResponse::ok(json!({"kind": model.kind(), "report": report}), artifacts))
        }
    }
}
