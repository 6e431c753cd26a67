use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::lda::{DEFAULT_BETA, DEFAULT_BURN_IN, DEFAULT_ITERATIONS, DEFAULT_K};
use crate::store::Backend;
use crate::textprep::DEFAULT_TARGET_LEN;

/// The pipeline configuration file (TOML). Relative paths are resolved
/// against the directory of the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub store: PathBuf,
    pub sources: Option<PathBuf>,
    pub persons: Option<PathBuf>,
    /// One word per line; the built-in English list when absent.
    pub stopwords: Option<PathBuf>,
    #[serde(default = "default_backend")]
    pub backend: Backend,
    #[serde(default)]
    pub textprep: TextprepSection,
    #[serde(default)]
    pub lda: LdaSection,
    #[serde(default)]
    pub hybrid: HybridSection,
    #[serde(default)]
    pub service: ServiceSection,
}

fn default_backend() -> Backend {
    Backend::Lda
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextprepSection {
    pub target_len: usize,
    pub min_count: u64,
    pub max_doc_fraction: f64,
}

impl Default for TextprepSection {
    fn default() -> Self {
        Self {
            target_len: DEFAULT_TARGET_LEN,
            min_count: 2,
            max_doc_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LdaSection {
    pub k: usize,
    /// `50 / K` when absent.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    /// Sweeps per paragraph when folding in new documents.
    pub infer_iterations: usize,
}

impl Default for LdaSection {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            alpha: None,
            beta: DEFAULT_BETA,
            iterations: DEFAULT_ITERATIONS,
            burn_in: DEFAULT_BURN_IN,
            infer_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HybridSection {
    /// Word-vector file; required by the hybrid backend.
    pub embeddings: Option<PathBuf>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub negative_samples: usize,
    pub window: usize,
    pub lambda: f64,
    pub alpha_prior: f64,
    /// Epochs per paragraph when folding in new documents.
    pub infer_epochs: usize,
}

impl Default for HybridSection {
    fn default() -> Self {
        let d = crate::hybrid::HybridTrainConfig::new(0);
        Self {
            embeddings: None,
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            negative_samples: d.negative_samples,
            window: d.window,
            lambda: d.lambda,
            alpha_prior: d.alpha_prior,
            infer_epochs: 20,
        }
    }
}

impl HybridSection {
    pub fn train_config(&self, seed: u64) -> crate::hybrid::HybridTrainConfig {
        crate::hybrid::HybridTrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            negative_samples: self.negative_samples,
            window: self.window,
            lambda: self.lambda,
            alpha_prior: self.alpha_prior,
            seed,
        }
    }
}

pub const DEFAULT_CORS_ORIGIN: &str = "http://localhost:5173";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceSection {
    pub bind: String,
    pub port: u16,
    pub default_model: Option<String>,
    pub cors_allow: Vec<String>,
    pub topic_labels: Option<PathBuf>,
}

impl Default for ServiceSection {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
            default_model: None,
            cors_allow: vec![DEFAULT_CORS_ORIGIN.into()],
            topic_labels: None,
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, String> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        resolve(&mut cfg.store);
        for p in [
            &mut cfg.sources,
            &mut cfg.persons,
            &mut cfg.stopwords,
            &mut cfg.hybrid.embeddings,
            &mut cfg.service.topic_labels,
        ]
        .into_iter()
        .flatten()
        {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| format!("{}: {e}", path.display()))
    }

    fn validate(&self) -> Result<(), String> {
        let t = &self.textprep;
        if t.target_len < 1 {
            return Err("textprep.target_len must be at least 1".into());
        }
        if t.min_count < 1 {
            return Err("textprep.min_count must be at least 1".into());
        }
        if !(t.max_doc_fraction > 0.0 && t.max_doc_fraction <= 1.0) {
            return Err("textprep.max_doc_fraction must lie in (0, 1]".into());
        }
        if self.lda.infer_iterations < 1 {
            return Err("lda.infer_iterations must be at least 1".into());
        }
        if self.service.port == 0 {
            return Err("service.port must lie in 1..65535".into());
        }
        for (name, p) in [
            ("stopwords", &self.stopwords),
            ("hybrid.embeddings", &self.hybrid.embeddings),
            ("service.topic_labels", &self.service.topic_labels),
        ] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(format!("{name}: {} does not exist", p.display()));
                }
            }
        }
        Ok(())
    }

    /// The sources and persons files, which ingestion requires.
    pub fn ingest_files(&self) -> Result<(&Path, &Path), String> {
        let sources = self
            .sources
            .as_deref()
            .ok_or("missing field `sources` (required by ingest)")?;
        let persons = self
            .persons
            .as_deref()
            .ok_or("missing field `persons` (required by ingest)")?;
        for (name, p) in [("sources", sources), ("persons", persons)] {
            if !p.is_file() {
                return Err(format!("{name}: {} does not exist", p.display()));
            }
        }
        Ok((sources, persons))
    }
}
