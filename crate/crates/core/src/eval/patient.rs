use std::sync::Arc;

use chrono::{DateTime, Utc};

use crate::domain::{CaseRecord, ChiefComplaint, ConsultationState, DomainError, Question};
use crate::gateway::{cosine, ChatBackend, ChatExchange, Embedder};
use crate::maccm::{AnswerError, AnswerSource};
use crate::prompts::{self, UNKNOWN_ANSWER};

pub const DEFAULT_EXTRACTIVE_THRESHOLD: f64 = 0.25;

#[derive(Clone)]
pub enum PatientMode {
    /// A model role-plays the patient from the narrative.
    Llm(Arc<dyn ChatBackend>),
    /// Answers with the narrative clause most similar to the question, or
    /// the unknown marker below `threshold`. Every answer is a verbatim
    /// piece of the narrative.
    Extractive { embedder: Arc<dyn Embedder>, threshold: f64 },
}

#[derive(Clone)]
pub struct SimulatedPatient {
    case: CaseRecord,
    mode: PatientMode,
}

/// Narrative split on sentence and clause punctuation.
pub fn narrative_clauses(narrative: &str) -> Vec<&str> {
    narrative.split(['.', ';', '\n', '。', '；', '，', ',']).map(str::trim).filter(|c| !c.is_empty()).collect()
}

/// The first clause of the narrative, stamped at the epoch so batch runs
/// stay reproducible.
pub fn chief_complaint_for(case: &CaseRecord) -> Result<ChiefComplaint, DomainError> {
    let first =
        case.narrative.split(['.', '\n', '。']).map(str::trim).find(|s| !s.is_empty()).unwrap_or(case.narrative.trim());
    ChiefComplaint::new(first, DateTime::<Utc>::UNIX_EPOCH)
}

impl SimulatedPatient {
    pub fn new(case: CaseRecord, mode: PatientMode) -> Self {
        Self { case, mode }
    }

    pub fn case(&self) -> &CaseRecord {
        &self.case
    }

    fn extractive(&self, question: &str, embedder: &dyn Embedder, threshold: f64) -> Result<String, AnswerError> {
        let q = embedder.embed_one(question).map_err(|e| AnswerError::Failure(e.to_string()))?;
        let mut best: Option<(&str, f64)> = None;
        for clause in narrative_clauses(&self.case.narrative) {
            let v = embedder.embed_one(clause).map_err(|e| AnswerError::Failure(e.to_string()))?;
            let sim = cosine(&q, &v).map_err(|e| AnswerError::Failure(e.to_string()))?;
            if best.is_none_or(|(_, b)| sim > b) {
                best = Some((clause, sim));
            }
        }
        Ok(match best {
            Some((clause, sim)) if sim >= threshold => clause.to_string(),
            _ => UNKNOWN_ANSWER.to_string(),
        })
    }
}

pub fn simulate_patient_answer(patient: &SimulatedPatient, question: &Question) -> Result<String, AnswerError> {
    if question.text.trim().is_empty() {
        return Err(AnswerError::Failure("empty question".into()));
    }
    match &patient.mode {
        PatientMode::Llm(gateway) => gateway
            .chat(ChatExchange::new(prompts::patient_system(&patient.case.narrative), question.text.clone()))
            .map(|r| r.response_text().trim().to_string())
            .map_err(|e| match e {
                crate::gateway::GatewayError::Timeout { .. } => AnswerError::Timeout,
                other => AnswerError::Failure(other.to_string()),
            }),
        PatientMode::Extractive { embedder, threshold } => {
            patient.extractive(&question.text, embedder.as_ref(), *threshold)
        }
    }
}

impl AnswerSource for SimulatedPatient {
    fn answer(&self, question: &Question, _state: &ConsultationState) -> Result<String, AnswerError> {
        simulate_patient_answer(self, question)
    }
}
