//! Consultation question evaluation.
//!
//! Comprehensiveness is the best similarity between a question and any TQS
//! item; pertinence is the best similarity against the specialists' core
//! questions and the current record's section texts. Both maxima start at 0
//! and only move on a strictly greater similarity, so a question unrelated to
//! every reference item scores 0 rather than a negative value.

use serde::{Deserialize, Serialize};

use super::MaccmError;
use crate::domain::{MedicalRecord, Question, TqsConfig};
use crate::gateway::{cosine, Embedder, EmbeddingVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredQuestion {
    pub question: Question,
    pub com_score: f64,
    pub per_score: f64,
    pub total_score: f64,
}

fn best(query: &EmbeddingVector, items: &[EmbeddingVector]) -> Result<f64, MaccmError> {
    let mut best = 0.0;
    for item in items {
        let score = cosine(query, item)?;
        if score > best {
            best = score;
        }
    }
    Ok(best)
}

fn embed_all(embedder: &dyn Embedder, texts: &[String]) -> Result<Vec<EmbeddingVector>, MaccmError> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    Ok(embedder.embed(&refs)?)
}

/// Scores every question; output order matches input order.
pub fn score_questions(
    questions: &[Question],
    tqs: &TqsConfig,
    core_questions: &[String],
    record: &MedicalRecord,
    embedder: &dyn Embedder,
) -> Result<Vec<ScoredQuestion>, MaccmError> {
    if questions.is_empty() {
        return Err(MaccmError::EmptyQuestionList);
    }
    let tqs_vecs = embed_all(embedder, &tqs.canonical_texts())?;
    let pertinence_texts: Vec<String> =
        core_questions.iter().cloned().chain(record.section_texts(tqs).map(|(_, text)| text.to_string())).collect();
    let per_vecs = embed_all(embedder, &pertinence_texts)?;
    let texts: Vec<String> = questions.iter().map(|q| q.text.clone()).collect();
    let q_vecs = embed_all(embedder, &texts)?;

    questions
        .iter()
        .zip(&q_vecs)
        .map(|(question, qv)| {
            let com_score = best(qv, &tqs_vecs)?;
            let per_score = best(qv, &per_vecs)?;
            Ok(ScoredQuestion { question: question.clone(), com_score, per_score, total_score: com_score + per_score })
        })
        .collect()
}
