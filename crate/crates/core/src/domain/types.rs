//! Value types shared by every stage of the pipeline.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::DomainError;
use crate::domain::tqs::TqsConfig;

/// The patient's opening statement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChiefComplaint {
    pub text: String,
    pub submitted_at: DateTime<Utc>,
}

impl ChiefComplaint {
    pub fn new(text: impl Into<String>, submitted_at: DateTime<Utc>) -> Result<Self, DomainError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(DomainError::Invalid("chief complaint is empty".into()));
        }
        Ok(Self { text, submitted_at })
    }

    /// Complaint stamped with the current time.
    pub fn now(text: impl Into<String>) -> Result<Self, DomainError> {
        Self::new(text, Utc::now())
    }

    /// Short stable digest used to tag the team formed for this complaint.
    pub fn digest(&self) -> String {
        format!("{:016x}", crate::gateway::fnv1a64(self.text.trim().as_bytes()))
    }
}

/// One question/answer exchange with the patient.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsultationTurn {
    pub index: usize,
    pub question: String,
    pub answer: String,
}

/// Everything the patient has been asked so far, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsultationState {
    pub chief_complaint: ChiefComplaint,
    turns: Vec<ConsultationTurn>,
}

impl ConsultationState {
    pub fn new(chief_complaint: ChiefComplaint) -> Self {
        Self { chief_complaint, turns: Vec::new() }
    }

    /// Rebuilds a state from stored turns, checking that indices run 0..n.
    pub fn from_turns(chief_complaint: ChiefComplaint, turns: Vec<ConsultationTurn>) -> Result<Self, DomainError> {
        for (expected, turn) in turns.iter().enumerate() {
            if turn.index != expected {
                return Err(DomainError::Invalid(format!(
                    "turn index {} out of sequence, expected {expected}",
                    turn.index
                )));
            }
            if turn.question.trim().is_empty() {
                return Err(DomainError::Invalid(format!("turn {expected} has an empty question")));
            }
        }
        Ok(Self { chief_complaint, turns })
    }

    pub fn turns(&self) -> &[ConsultationTurn] {
        &self.turns
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    /// Returns a new state with the exchanges appended; `self` is untouched.
    pub fn with_exchanges<I>(&self, exchanges: I) -> Result<Self, DomainError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut turns = self.turns.clone();
        for (question, answer) in exchanges {
            if question.trim().is_empty() {
                return Err(DomainError::Invalid("question is empty".into()));
            }
            let index = turns.len();
            turns.push(ConsultationTurn { index, question, answer });
        }
        Ok(Self { chief_complaint: self.chief_complaint.clone(), turns })
    }

    /// Plain-text rendering used inside prompts.
    pub fn render(&self) -> String {
        let mut out = format!("Chief complaint: {}\n", self.chief_complaint.text.trim());
        for turn in &self.turns {
            out.push_str(&format!(
                "Q{}: {}\nA{}: {}\n",
                turn.index,
                turn.question.trim(),
                turn.index,
                turn.answer.trim()
            ));
        }
        out
    }
}

/// Structured summary of the consultation, sectioned by TQS category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedicalRecord {
    pub sections: BTreeMap<String, String>,
    pub raw_summary: String,
    pub round: usize,
    #[serde(default)]
    pub finalized: bool,
}

impl MedicalRecord {
    pub fn new(
        sections: BTreeMap<String, String>,
        raw_summary: impl Into<String>,
        round: usize,
        tqs: &TqsConfig,
    ) -> Result<Self, DomainError> {
        if let Some(bad) = sections.keys().find(|k| !tqs.contains(k)) {
            return Err(DomainError::Invalid(format!("record section {bad:?} is not a TQS category")));
        }
        Ok(Self { sections, raw_summary: raw_summary.into(), round, finalized: false })
    }

    pub fn finalize(mut self) -> Self {
        self.finalized = true;
        self
    }

    /// Non-empty section texts in TQS order.
    pub fn section_texts<'a>(&'a self, tqs: &'a TqsConfig) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        tqs.items().iter().filter_map(move |item| {
            self.sections.get(&item.name).map(|s| s.trim()).filter(|s| !s.is_empty()).map(|s| (item.name.as_str(), s))
        })
    }

    /// Flat text used by classifiers and retrieval queries.
    pub fn to_text(&self, tqs: &TqsConfig) -> String {
        let lines: Vec<String> = self.section_texts(tqs).map(|(name, text)| format!("{name}: {text}")).collect();
        if lines.is_empty() {
            self.raw_summary.trim().to_string()
        } else {
            lines.join("\n")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Specialist,
    General,
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentRole::Specialist => f.write_str("specialist"),
            AgentRole::General => f.write_str("general"),
        }
    }
}

/// A candidate consultation question and the agent that proposed it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub text: String,
    pub rationale: String,
    pub source: String,
    pub kind: AgentRole,
}

impl Question {
    pub fn new(
        text: impl Into<String>,
        rationale: impl Into<String>,
        source: impl Into<String>,
        kind: AgentRole,
    ) -> Result<Self, DomainError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(DomainError::Invalid("question text is empty".into()));
        }
        Ok(Self { text, rationale: rationale.into(), source: source.into(), kind })
    }
}

/// A raw clinical case, optionally labelled and preprocessed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: String,
    pub narrative: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_syndrome: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_formula: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tqs_extract: Option<BTreeMap<String, String>>,
}

impl CaseRecord {
    pub fn validate(&self, tqs: Option<&TqsConfig>) -> Result<(), DomainError> {
        if self.narrative.trim().is_empty() {
            return Err(DomainError::Invalid(format!("case {} has an empty narrative", self.id)));
        }
        if let (Some(extract), Some(tqs)) = (&self.tqs_extract, tqs) {
            if let Some(bad) = extract.keys().find(|k| !tqs.contains(k)) {
                return Err(DomainError::Invalid(format!(
                    "case {} extract key {bad:?} is not a TQS category",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Text a classifier should see: the TQS extract when present, else the narrative.
    pub fn classification_text(&self, tqs: &TqsConfig) -> String {
        match &self.tqs_extract {
            Some(extract) if !extract.is_empty() => tqs
                .items()
                .iter()
                .filter_map(|item| extract.get(&item.name).map(|v| format!("{}: {}", item.name, v)))
                .collect::<Vec<_>>()
                .join("\n"),
            _ => self.narrative.clone(),
        }
    }
}
