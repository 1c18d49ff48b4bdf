use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::dsrs::tokenize;
use crate::gateway::{cosine, Embedder};

/// Clipped unigram precision times the brevity penalty, over the retrieval
/// tokenizer. An empty candidate scores 0.
pub fn bleu1(candidate: &str, reference: &str) -> Result<f64, EvalError> {
    let reference = tokenize(reference);
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let candidate = tokenize(candidate);
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let mut ref_counts: HashMap<&str, usize> = HashMap::new();
    for t in &reference {
        *ref_counts.entry(t).or_default() += 1;
    }
    let mut cand_counts: HashMap<&str, usize> = HashMap::new();
    for t in &candidate {
        *cand_counts.entry(t).or_default() += 1;
    }
    let clipped: usize = cand_counts.iter().map(|(t, &n)| n.min(ref_counts.get(t).copied().unwrap_or(0))).sum();
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let precision = clipped as f64 / c;
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    Ok(precision * bp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub bleu1: f64,
    pub per_case: Vec<f64>,
}

pub fn similarity_stats(
    transcripts: &[String],
    references: &[String],
    embedder: &dyn Embedder,
) -> Result<SimilarityReport, EvalError> {
    if transcripts.len() != references.len() {
        return Err(EvalError::LengthMismatch { left: transcripts.len(), right: references.len() });
    }
    if transcripts.is_empty() {
        return Err(EvalError::InsufficientData { needed: 1, got: 0 });
    }
    let mut sims = Vec::with_capacity(transcripts.len());
    let mut bleu = 0.0;
    for (t, r) in transcripts.iter().zip(references) {
        sims.push(cosine(&embedder.embed_one(t)?, &embedder.embed_one(r)?)?);
        bleu += bleu1(t, r)?;
    }
    let n = sims.len() as f64;
    let mean = sims.iter().sum::<f64>() / n;
    let var = sims.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let min = sims.iter().copied().fold(f64::INFINITY, f64::min);
    let max = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SimilarityReport {
        n: sims.len(),
        // Summation rounding can push the mean a hair outside [min, max].
        mean: mean.clamp(min, max),
        std: var.sqrt(),
        min,
        max,
        bleu1: bleu / n,
        per_case: sims,
    })
}
