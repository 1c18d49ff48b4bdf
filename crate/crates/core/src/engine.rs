//! Wiring: loads configuration, backends and data, and runs the three
//! stages end to end.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentError, AgentRegistry};
use crate::domain::{load_prescription_db, tqs_items, DomainError, MedicalRecord, TqsConfig};
use crate::dsrs::{DsrsConfig, DsrsError, Recommendation, Retriever, SparseIndex};
use crate::gateway::{
    ChatBackend, Embedder, GatewayError, HashedBigramEmbedder, HttpBackend, HttpConfig, ScriptedBackend,
};
use crate::maccm::{Consultant, SessionConfig};
use crate::syndrome::{
    differentiate, label_space, load_labeled_corpus, KnnClassifier, LlmClassifier, SyndromeClassifier, SyndromeError,
    SyndromePrediction,
};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Dsrs(#[from] DsrsError),
    #[error(transparent)]
    Syndrome(#[from] SyndromeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Scripted,
    Http,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scripted" => Ok(Self::Scripted),
            "http" => Ok(Self::Http),
            other => Err(format!("unknown backend {other:?} (expected scripted or http)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierConfig {
    /// Prompted classifier; the label space comes from `labels` or from the
    /// gold labels of `label_corpus`.
    Llm {
        #[serde(default)]
        labels: Vec<String>,
        #[serde(default)]
        label_corpus: Option<PathBuf>,
    },
    Knn {
        corpus: PathBuf,
        k: usize,
    },
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self::Llm { labels: Vec::new(), label_corpus: None }
    }
}

/// On-disk engine configuration (JSON). Relative paths resolve against the
/// directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    #[serde(default)]
    pub backend: BackendKind,
    /// Scripted backend spec, required for the scripted backend.
    #[serde(default)]
    pub script: Option<PathBuf>,
    pub prescriptions: PathBuf,
    /// Prebuilt sparse index snapshot; rebuilt from the database if absent.
    #[serde(default)]
    pub index: Option<PathBuf>,
    #[serde(default)]
    pub agents: Option<PathBuf>,
    #[serde(default)]
    pub tqs: Option<PathBuf>,
    #[serde(default)]
    pub session: SessionConfig,
    #[serde(default)]
    pub dsrs: DsrsConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub seed: u64,
}

impl EngineConfig {
    /// Reads the file and makes every path absolute.
    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let raw = fs::read_to_string(path)
            .map_err(|e| EngineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: EngineConfig =
            serde_json::from_str(&raw).map_err(|e| EngineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.prescriptions);
        for p in [&mut self.script, &mut self.index, &mut self.agents, &mut self.tqs].into_iter().flatten() {
            fix(p);
        }
        match &mut self.classifier {
            ClassifierConfig::Llm { label_corpus: Some(p), .. } => fix(p),
            ClassifierConfig::Knn { corpus, .. } => fix(corpus),
            _ => {}
        }
    }
}

pub struct Engine {
    pub chat: Arc<dyn ChatBackend>,
    pub embedder: Arc<dyn Embedder>,
    pub registry: AgentRegistry,
    pub tqs: TqsConfig,
    pub session: SessionConfig,
    pub dsrs: DsrsConfig,
    pub retriever: Retriever,
    pub classifier: Box<dyn SyndromeClassifier>,
    pub seed: u64,
}

/// Finalized record plus everything derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub syndrome: SyndromePrediction,
    pub recommendation: Recommendation,
}

/// Chat backend and embedder, possibly the same object.
pub type Backends = (Arc<dyn ChatBackend>, Arc<dyn Embedder>);

pub fn backends(kind: BackendKind, script: Option<&Path>) -> Result<Backends, EngineError> {
    match kind {
        BackendKind::Scripted => {
            let script =
                script.ok_or_else(|| EngineError::Config("the scripted backend needs a script file".into()))?;
            let chat = ScriptedBackend::load(script)?;
            Ok((Arc::new(chat), Arc::new(HashedBigramEmbedder::default())))
        }
        BackendKind::Http => {
            let http = Arc::new(HttpBackend::new(HttpConfig::from_env())?);
            Ok((http.clone(), http))
        }
    }
}

impl Engine {
    pub fn load(path: &Path) -> Result<Self, EngineError> {
        Self::from_config(&EngineConfig::load(path)?)
    }

    pub fn from_config(config: &EngineConfig) -> Result<Self, EngineError> {
        let (chat, embedder) = backends(config.backend, config.script.as_deref())?;
        Self::with_backends(config, chat, embedder)
    }

    pub fn with_backends(
        config: &EngineConfig,
        chat: Arc<dyn ChatBackend>,
        embedder: Arc<dyn Embedder>,
    ) -> Result<Self, EngineError> {
        config.session.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        config.dsrs.validate()?;
        let tqs = tqs_items(config.tqs.as_deref())?;
        let registry = match &config.agents {
            Some(path) => AgentRegistry::load(path)?,
            None => AgentRegistry::default(),
        };
        let db = load_prescription_db(&config.prescriptions)?;
        let retriever = match &config.index {
            Some(path) if path.exists() => Retriever::with_index(db, SparseIndex::load(path)?, embedder.clone())?,
            _ => Retriever::new(db, embedder.clone())?,
        };
        let classifier: Box<dyn SyndromeClassifier> = match &config.classifier {
            ClassifierConfig::Llm { labels, label_corpus } => {
                let mut labels = labels.clone();
                if let Some(path) = label_corpus {
                    labels.extend(label_space(&load_labeled_corpus(path, &tqs)?));
                    labels.sort();
                    labels.dedup();
                }
                Box::new(LlmClassifier::new(labels))
            }
            ClassifierConfig::Knn { corpus, k } => {
                Box::new(KnnClassifier::new(load_labeled_corpus(corpus, &tqs)?, *k, embedder.clone())?)
            }
        };
        Ok(Self {
            chat,
            embedder,
            registry,
            tqs,
            session: config.session.clone(),
            dsrs: config.dsrs.clone(),
            retriever,
            classifier,
            seed: config.seed,
        })
    }

    pub fn consultant(&self) -> Consultant<'_> {
        Consultant {
            gateway: self.chat.as_ref(),
            embedder: self.embedder.as_ref(),
            registry: &self.registry,
            tqs: &self.tqs,
            config: &self.session,
        }
    }

    pub fn differentiate(&self, record: &MedicalRecord) -> Result<SyndromePrediction, SyndromeError> {
        differentiate(record, self.classifier.as_ref(), self.chat.as_ref(), &self.tqs)
    }

    pub fn recommend(
        &self,
        record: &MedicalRecord,
        prediction: &SyndromePrediction,
    ) -> Result<Recommendation, DsrsError> {
        self.retriever.recommend(record, prediction, self.chat.as_ref(), &self.tqs, &self.dsrs)
    }

    /// Differentiation followed by retrieval.
    pub fn diagnose(&self, record: &MedicalRecord) -> Result<Diagnosis, EngineError> {
        let syndrome = self.differentiate(record)?;
        let recommendation = self.recommend(record, &syndrome)?;
        Ok(Diagnosis { syndrome, recommendation })
    }
}
