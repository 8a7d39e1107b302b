use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::ServiceError;
use crate::scorer::Scorer;

pub const MODELS_DIR_ENV: &str = "STROKESCOPE_MODELS_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryItem {
    pub id: String,
    pub embedding: Vec<f64>,
}

/// Reference embeddings stored next to a model as `<id>.gallery.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gallery {
    pub items: Vec<GalleryItem>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelEntry {
    pub id: String,
    pub scorer: Scorer,
    pub gallery: Option<Gallery>,
}

impl ModelEntry {
    pub fn gallery_embedding(&self, id: &str) -> Result<&[f64], ServiceError> {
        self.gallery
            .as_ref()
            .and_then(|g| g.items.iter().find(|i| i.id == id))
            .map(|i| &i.embedding[..])
            .ok_or_else(|| ServiceError::bad_request(format!("model `{}` has no gallery item `{id}`", self.id)))
    }

    fn describe(&self) -> Value {
        let (w, h) = self.scorer.input_dims();
        json!({
            "id": self.id,
            "kind": self.scorer.kind(),
            "input": [w, h],
            "output_dim": self.scorer.output_dim(),
            "labels": self.scorer.labels(),
            "gallery": self.gallery.as_ref().map(|g| g.items.iter().map(|i| i.id.clone()).collect::<Vec<_>>()),
        })
    }
}

/// Models loaded once and shared read-only between requests.
#[derive(Debug, Clone, Default)]
pub struct ModelRegistry {
    models: BTreeMap<String, Arc<ModelEntry>>,
    /// Accept file paths as model references (command line use).
    allow_paths: bool,
}

fn read_gallery(path: &Path) -> Result<Option<Gallery>, ServiceError> {
    if !path.exists() {
        return Ok(None);
    }
    let bytes = std::fs::read(path).map_err(|e| ServiceError::internal(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes)
        .map(Some)
        .map_err(|e| ServiceError::internal(format!("{}: {e}", path.display())))
}

fn gallery_path(model: &Path) -> PathBuf {
    model.with_extension("gallery.json")
}

impl ModelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn allow_paths(mut self, allow: bool) -> Self {
        self.allow_paths = allow;
        self
    }

    pub fn insert(&mut self, id: impl Into<String>, scorer: Scorer, gallery: Option<Gallery>) {
        let id = id.into();
        self.models.insert(id.clone(), Arc::new(ModelEntry { id, scorer, gallery }));
    }

    /// Loads every `*.bin` in `dir`; the id is the file stem and an optional
    /// `<stem>.gallery.json` supplies reference embeddings.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let dir = dir.as_ref();
        let mut reg = ModelRegistry::new();
        let entries = std::fs::read_dir(dir).map_err(|e| ServiceError::internal(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "bin"))
            .collect();
        paths.sort();
        for p in paths {
            let id = p.file_stem().expect("file has a name").to_string_lossy().into_owned();
            let scorer = Scorer::load(&p).map_err(|e| ServiceError::internal(format!("{}: {e}", p.display())))?;
            log::info!("loaded model `{id}` from {}", p.display());
            reg.insert(id, scorer, read_gallery(&gallery_path(&p))?);
        }
        Ok(reg)
    }

    /// Registry from the directory named by the environment variable, or empty.
    pub fn from_env() -> Result<Self, ServiceError> {
        match std::env::var_os(MODELS_DIR_ENV) {
            Some(dir) => Self::load_dir(dir),
            None => Ok(Self::new()),
        }
    }

    pub fn get(&self, reference: &str) -> Result<Arc<ModelEntry>, ServiceError> {
        if let Some(m) = self.models.get(reference) {
            return Ok(m.clone());
        }
        let path = Path::new(reference);
        if self.allow_paths && path.is_file() {
            let scorer = Scorer::load(path).map_err(|e| ServiceError::unknown_model(format!("{reference}: {e}")))?;
            return Ok(Arc::new(ModelEntry { id: reference.into(), scorer, gallery: read_gallery(&gallery_path(path))? }));
        }
        Err(ServiceError::unknown_model(format!("no model `{reference}`")))
    }

    pub fn describe(&self) -> Value {
        json!({"models": self.models.values().map(|m| m.describe()).collect::<Vec<_>>()})
    }
}
