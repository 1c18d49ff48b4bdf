//! Dual-stage prescription retrieval.
//!
//! Stage 1 narrows the database to entries whose syndrome attributes match
//! the prediction. Stage 2 ranks the candidates with BM25 and with dense
//! cosine similarity, fuses both lists with reciprocal rank fusion and keeps
//! the top three.

mod fusion;
mod sparse;

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use fusion::{rrf_fuse, FusedHit, DEFAULT_RRF_K};
pub use sparse::{tokenize, Posting, SparseHit, SparseIndex, BM25_B, BM25_K1};

use crate::domain::{MedicalRecord, PrescriptionEntry, TqsConfig};
use crate::gateway::{cosine, ChatBackend, ChatExchange, Embedder, EmbeddingVector, GatewayError};
use crate::prompts;
use crate::syndrome::SyndromePrediction;

#[derive(Debug, thiserror::Error)]
pub enum DsrsError {
    #[error("prescription database is empty")]
    EmptyDatabase,
    #[error("no candidates to rank")]
    EmptyCandidates,
    #[error("query has no indexable tokens")]
    EmptyQuery,
    #[error("record is not finalized")]
    UnfinalizedRecord,
    #[error("malformed ranking: {0}")]
    MalformedRanking(String),
    #[error("duplicate document id {0}")]
    DuplicateId(String),
    #[error("bad index snapshot: {0}")]
    BadSnapshot(String),
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DsrsConfig {
    pub rrf_k: f64,
    /// Depth of each ranked list before fusion.
    pub depth: usize,
    pub top: usize,
}

impl Default for DsrsConfig {
    fn default() -> Self {
        Self { rrf_k: DEFAULT_RRF_K, depth: 50, top: 3 }
    }
}

impl DsrsConfig {
    pub fn validate(&self) -> Result<(), DsrsError> {
        if !(self.rrf_k.is_finite() && self.rrf_k > 0.0) || self.depth == 0 || self.top == 0 {
            return Err(DsrsError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyndromeAttributes {
    pub syndrome_type: Option<String>,
    pub etiology: Option<String>,
    pub affected_organ: Option<String>,
    /// The extractor call failed and only the syndrome type is set.
    #[serde(default)]
    pub degraded: bool,
}

impl SyndromeAttributes {
    pub fn is_empty(&self) -> bool {
        self.syndrome_type.is_none() && self.etiology.is_none() && self.affected_organ.is_none()
    }
}

fn present(value: &str) -> Option<String> {
    let v = value.trim();
    let lower = v.to_lowercase();
    if v.is_empty() || ["none", "unknown", "n/a", "not stated"].contains(&lower.as_str()) {
        None
    } else {
        Some(v.to_string())
    }
}

/// Syndrome type comes from the prediction; etiology and organ are asked of
/// the model. A failed call keeps the syndrome type and sets `degraded`.
pub fn extract_syndrome_attributes(
    record: &MedicalRecord,
    prediction: &SyndromePrediction,
    gateway: &dyn ChatBackend,
    tqs: &TqsConfig,
) -> Result<SyndromeAttributes, DsrsError> {
    if !record.finalized {
        return Err(DsrsError::UnfinalizedRecord);
    }
    let mut attrs = SyndromeAttributes { syndrome_type: present(&prediction.label), ..Default::default() };
    let exchange = ChatExchange::new(
        prompts::attributes_system(),
        prompts::attributes_user(&record.to_text(tqs), &prediction.label),
    );
    match gateway.chat(exchange) {
        Ok(reply) => {
            for (key, value) in prompts::parse_keyed(reply.response_text()) {
                match key.as_str() {
                    "etiology" | "cause" => attrs.etiology = present(&value),
                    "affected_organ" | "organ" => attrs.affected_organ = present(&value),
                    _ => {}
                }
            }
        }
        Err(e) => {
            log::warn!("attribute extraction failed, keeping syndrome type only: {e}");
            attrs.degraded = true;
        }
    }
    Ok(attrs)
}

fn fold(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Stage-1 result: indices into the database.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub indices: Vec<usize>,
    /// Nothing matched, so the full database is used.
    pub fallback: bool,
    /// No attribute was present, so nothing was filtered.
    pub vacuous: bool,
}

impl CandidateSet {
    pub fn entries<'a>(&'a self, db: &'a [PrescriptionEntry]) -> impl Iterator<Item = &'a PrescriptionEntry> + 'a {
        self.indices.iter().map(move |&i| &db[i])
    }
}

pub fn entry_matches(entry: &PrescriptionEntry, attrs: &SyndromeAttributes) -> bool {
    let checks = [
        (&attrs.syndrome_type, &entry.syndrome_type),
        (&attrs.etiology, &entry.etiology),
        (&attrs.affected_organ, &entry.affected_organ),
    ];
    checks.iter().all(|(want, have)| want.as_ref().is_none_or(|w| fold(w) == fold(have)))
}

/// Keeps entries matching every present attribute under case- and
/// whitespace-folded equality; falls back to the full database when none
/// match.
pub fn filter_candidates(db: &[PrescriptionEntry], attrs: &SyndromeAttributes) -> CandidateSet {
    let all = || (0..db.len()).collect();
    if attrs.is_empty() {
        return CandidateSet { indices: all(), fallback: false, vacuous: true };
    }
    let indices: Vec<usize> = (0..db.len()).filter(|&i| entry_matches(&db[i], attrs)).collect();
    if indices.is_empty() {
        CandidateSet { indices: all(), fallback: true, vacuous: false }
    } else {
        CandidateSet { indices, fallback: false, vacuous: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseHit {
    pub id: String,
    pub similarity: f64,
}

fn rank_dense<'a>(
    query: &EmbeddingVector,
    items: impl Iterator<Item = (&'a str, &'a EmbeddingVector)>,
    n: usize,
) -> Result<Vec<DenseHit>, DsrsError> {
    let mut hits = Vec::new();
    for (id, v) in items {
        hits.push(DenseHit { id: id.to_string(), similarity: cosine(query, v)? });
    }
    hits.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then_with(|| a.id.cmp(&b.id)));
    hits.truncate(n);
    Ok(hits)
}

/// Top `n` candidates by cosine against each entry's retrieval text.
pub fn dense_search(
    query: &str,
    candidates: &[PrescriptionEntry],
    embedder: &dyn Embedder,
    n: usize,
) -> Result<Vec<DenseHit>, DsrsError> {
    if candidates.is_empty() {
        return Err(DsrsError::EmptyCandidates);
    }
    let texts: Vec<String> = candidates.iter().map(PrescriptionEntry::retrieval_text).collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let vectors = embedder.embed(&refs)?;
    let q = embedder.embed_one(query)?;
    rank_dense(&q, candidates.iter().map(|c| c.id.as_str()).zip(&vectors), n)
}

pub fn sparse_search(query: &str, index: &SparseIndex, n: usize) -> Result<Vec<SparseHit>, DsrsError> {
    index.search(query, n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPrescription {
    pub entry_id: String,
    pub representative_formula: String,
    pub syndrome_type: String,
    pub sparse_rank: Option<usize>,
    pub dense_rank: Option<usize>,
    pub rrf_score: f64,
    pub final_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub attributes: SyndromeAttributes,
    pub candidates: usize,
    pub fallback: bool,
    pub vacuous_filter: bool,
    pub prescriptions: Vec<RankedPrescription>,
    pub rationale: String,
}

impl Recommendation {
    pub fn write_report(&self, path: &Path) -> Result<(), DsrsError> {
        std::fs::write(path, serde_json::to_string_pretty(self).expect("report serializes") + "\n")?;
        Ok(())
    }
}

/// Text the stage-2 legs search with.
pub fn query_text(record: &MedicalRecord, tqs: &TqsConfig) -> String {
    record.to_text(tqs)
}

/// A loaded database with its full sparse index and entry embeddings.
pub struct Retriever {
    db: Vec<PrescriptionEntry>,
    vectors: Vec<EmbeddingVector>,
    index: SparseIndex,
    embedder: Arc<dyn Embedder>,
}

/// BM25 index over the retrieval text of each entry.
pub fn build_index<'a, I>(entries: I) -> Result<SparseIndex, DsrsError>
where
    I: IntoIterator<Item = &'a PrescriptionEntry>,
{
    let entries: Vec<&PrescriptionEntry> = entries.into_iter().collect();
    let texts: Vec<String> = entries.iter().map(|e| e.retrieval_text()).collect();
    SparseIndex::build(entries.iter().map(|e| e.id.as_str()).zip(texts.iter().map(String::as_str)))
}

impl Retriever {
    pub fn new(db: Vec<PrescriptionEntry>, embedder: Arc<dyn Embedder>) -> Result<Self, DsrsError> {
        let index = build_index(&db)?;
        Self::with_index(db, index, embedder)
    }

    /// Uses a prebuilt index, which must cover exactly the database ids in
    /// order.
    pub fn with_index(
        db: Vec<PrescriptionEntry>,
        index: SparseIndex,
        embedder: Arc<dyn Embedder>,
    ) -> Result<Self, DsrsError> {
        if db.is_empty() {
            return Err(DsrsError::EmptyDatabase);
        }
        if !index.ids().iter().map(String::as_str).eq(db.iter().map(|e| e.id.as_str())) {
            return Err(DsrsError::BadSnapshot("index ids do not match the database".into()));
        }
        let texts: Vec<String> = db.iter().map(PrescriptionEntry::retrieval_text).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let vectors = embedder.embed(&refs)?;
        Ok(Self { db, vectors, index, embedder })
    }

    pub fn db(&self) -> &[PrescriptionEntry] {
        &self.db
    }

    pub fn index(&self) -> &SparseIndex {
        &self.index
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    /// Sparse and dense legs over a candidate set, fused.
    pub fn rank_candidates(
        &self,
        query: &str,
        candidates: &CandidateSet,
        config: &DsrsConfig,
    ) -> Result<Vec<FusedHit>, DsrsError> {
        config.validate()?;
        if candidates.indices.is_empty() {
            return Err(DsrsError::EmptyCandidates);
        }
        let q = self.embedder.embed_one(query)?;
        let (sparse, dense) = std::thread::scope(|s| {
            let sparse = s.spawn(|| -> Result<Vec<SparseHit>, DsrsError> {
                let sub;
                let index = if candidates.indices.len() == self.db.len() {
                    &self.index
                } else {
                    sub = build_index(candidates.entries(&self.db))?;
                    &sub
                };
                match index.search(query, config.depth) {
                    Err(DsrsError::EmptyQuery) => Ok(Vec::new()),
                    other => other,
                }
            });
            let dense = rank_dense(
                &q,
                candidates.indices.iter().map(|&i| (self.db[i].id.as_str(), &self.vectors[i])),
                config.depth,
            );
            (sparse.join().unwrap_or_else(|p| std::panic::resume_unwind(p)), dense)
        });
        let sparse_ids: Vec<String> = sparse?.into_iter().map(|h| h.id).collect();
        let dense_ids: Vec<String> = dense?.into_iter().map(|h| h.id).collect();
        rrf_fuse(&sparse_ids, &dense_ids, config.rrf_k)
    }

    pub fn recommend(
        &self,
        record: &MedicalRecord,
        prediction: &SyndromePrediction,
        gateway: &dyn ChatBackend,
        tqs: &TqsConfig,
        config: &DsrsConfig,
    ) -> Result<Recommendation, DsrsError> {
        let attributes = extract_syndrome_attributes(record, prediction, gateway, tqs)?;
        let candidates = filter_candidates(&self.db, &attributes);
        let query = query_text(record, tqs);
        let fused = self.rank_candidates(&query, &candidates, config)?;

        let by_id: HashMap<&str, &PrescriptionEntry> = self.db.iter().map(|e| (e.id.as_str(), e)).collect();
        let prescriptions: Vec<RankedPrescription> = fused
            .into_iter()
            .take(config.top)
            .enumerate()
            .map(|(i, hit)| {
                let entry = by_id[hit.id.as_str()];
                RankedPrescription {
                    representative_formula: entry.representative_formula.clone(),
                    syndrome_type: entry.syndrome_type.clone(),
                    entry_id: hit.id,
                    sparse_rank: hit.sparse_rank,
                    dense_rank: hit.dense_rank,
                    rrf_score: hit.rrf_score,
                    final_rank: i + 1,
                }
            })
            .collect();
        let rationale = treatment_rationale(&query, &prediction.label, &prescriptions, gateway);
        Ok(Recommendation {
            attributes,
            candidates: candidates.indices.len(),
            fallback: candidates.fallback,
            vacuous_filter: candidates.vacuous,
            prescriptions,
            rationale,
        })
    }

    /// Dense search over the whole database, no filtering and no sparse leg.
    pub fn single_stage(&self, query: &str, n: usize) -> Result<Vec<DenseHit>, DsrsError> {
        let q = self.embedder.embed_one(query)?;
        rank_dense(&q, self.db.iter().map(|e| e.id.as_str()).zip(&self.vectors), n)
    }
}

fn treatment_rationale(
    record_text: &str,
    syndrome: &str,
    prescriptions: &[RankedPrescription],
    gateway: &dyn ChatBackend,
) -> String {
    let listed: Vec<String> = prescriptions
        .iter()
        .map(|p| format!("{}. {} ({})", p.final_rank, p.representative_formula, p.syndrome_type))
        .collect();
    let user = format!("Syndrome: {syndrome}\nRecord:\n{record_text}\nPrescriptions:\n{}", listed.join("\n"));
    match gateway.chat(ChatExchange::new(prompts::treatment_system(), user)) {
        Ok(reply) => reply.response_text().trim().to_string(),
        Err(e) => {
            log::warn!("treatment rationale unavailable: {e}");
            format!("Ranked for syndrome {syndrome}: {}", listed.join("; "))
        }
    }
}

pub fn recommend(
    record: &MedicalRecord,
    prediction: &SyndromePrediction,
    db: &[PrescriptionEntry],
    gateway: &dyn ChatBackend,
    embedder: Arc<dyn Embedder>,
    tqs: &TqsConfig,
    config: &DsrsConfig,
) -> Result<Recommendation, DsrsError> {
    Retriever::new(db.to_vec(), embedder)?.recommend(record, prediction, gateway, tqs, config)
}

pub fn single_stage_search(
    record: &MedicalRecord,
    db: &[PrescriptionEntry],
    embedder: &dyn Embedder,
    tqs: &TqsConfig,
    n: usize,
) -> Result<Vec<DenseHit>, DsrsError> {
    if db.is_empty() {
        return Err(DsrsError::EmptyDatabase);
    }
    dense_search(&query_text(record, tqs), db, embedder, n)
}
