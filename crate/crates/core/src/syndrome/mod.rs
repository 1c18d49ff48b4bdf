//! Syndrome differentiation over a finalized record, and the weighted
//! classification metrics used to score it.

mod knn;
mod llm;
mod metrics;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use knn::{knn_classify, KnnClassifier, LabeledText};
pub use llm::LlmClassifier;
pub use metrics::{weighted_metrics, write_metrics_report, ClassMetrics, WeightedMetrics};

use crate::domain::{load_cases, DomainError, MedicalRecord, TqsConfig};
use crate::gateway::{ChatBackend, GatewayError};

#[derive(Debug, thiserror::Error)]
pub enum SyndromeError {
    #[error("record is not finalized")]
    UnfinalizedRecord,
    #[error("classifier failed: {0}")]
    ClassifierFailure(String),
    #[error("labeled corpus is empty")]
    EmptyCorpus,
    #[error("k = {k} exceeds corpus size {size}")]
    KTooLarge { k: usize, size: usize },
    #[error("k must be positive")]
    ZeroK,
    #[error("{predictions} predictions but {gold} gold labels")]
    LengthMismatch { predictions: usize, gold: usize },
    #[error("no samples")]
    EmptyInput,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyndromePrediction {
    pub label: String,
    pub confidence: f64,
    pub rationale: String,
    pub classifier_id: String,
    /// Set when the label is not in the configured label space.
    #[serde(default)]
    pub out_of_vocabulary: bool,
}

pub trait SyndromeClassifier: Send + Sync {
    fn id(&self) -> &str;
    fn classify(&self, record_text: &str, gateway: &dyn ChatBackend) -> Result<SyndromePrediction, SyndromeError>;
}

pub fn differentiate(
    record: &MedicalRecord,
    classifier: &dyn SyndromeClassifier,
    gateway: &dyn ChatBackend,
    tqs: &TqsConfig,
) -> Result<SyndromePrediction, SyndromeError> {
    if !record.finalized {
        return Err(SyndromeError::UnfinalizedRecord);
    }
    classifier.classify(&record.to_text(tqs), gateway)
}

/// Cases with a gold syndrome, as classifier training/evaluation text.
pub fn load_labeled_corpus(path: &Path, tqs: &TqsConfig) -> Result<Vec<LabeledText>, SyndromeError> {
    let corpus: Vec<LabeledText> = load_cases(path)?
        .into_iter()
        .filter_map(|case| {
            let label = case.gold_syndrome.clone()?;
            Some(LabeledText { text: case.classification_text(tqs), label })
        })
        .collect();
    if corpus.is_empty() {
        return Err(SyndromeError::EmptyCorpus);
    }
    Ok(corpus)
}

/// Distinct labels, sorted.
pub fn label_space(corpus: &[LabeledText]) -> Vec<String> {
    let mut labels: Vec<String> = corpus.iter().map(|c| c.label.clone()).collect();
    labels.sort();
    labels.dedup();
    labels
}

pub(crate) fn normalize_label(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}
