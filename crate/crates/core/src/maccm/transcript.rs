use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Modification, ScoredQuestion};
use crate::domain::{ConsultationTurn, MedicalRecord, Question};

/// Ordered record of everything that happened in a consultation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TranscriptEvent {
    Selection {
        specialists: Vec<String>,
        justification: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        warning: Option<String>,
    },
    Team {
        members: Vec<String>,
        digest: String,
    },
    Record {
        record: MedicalRecord,
    },
    Proposal {
        round: usize,
        agent_id: String,
        questions: Vec<Question>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        clamped_from: Option<usize>,
    },
    Merged {
        round: usize,
        questions: Vec<Question>,
    },
    Refinement {
        round: usize,
        sub_iteration: usize,
        scores: Vec<ScoredQuestion>,
        summary: String,
        modifications: Vec<Modification>,
        optimized: Vec<Question>,
        consensus: bool,
    },
    FinalQuestions {
        round: usize,
        questions: Vec<ScoredQuestion>,
    },
    Answers {
        round: usize,
        turns: Vec<ConsultationTurn>,
    },
    Sufficiency {
        round: usize,
        stop: bool,
        reply: String,
    },
    Finalized {
        record: MedicalRecord,
    },
    Aborted {
        stage: String,
        error: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub events: Vec<TranscriptEvent>,
}

impl Transcript {
    pub fn push(&mut self, event: TranscriptEvent) {
        self.events.push(event);
    }

    /// One JSON object per event.
    pub fn to_jsonl(&self) -> String {
        self.events.iter().map(|e| serde_json::to_string(e).expect("transcript events serialize") + "\n").collect()
    }

    pub fn from_jsonl(raw: &str) -> Result<Self, serde_json::Error> {
        let events =
            raw.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect::<Result<Vec<_>, _>>()?;
        Ok(Self { events })
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut file = fs::File::create(path)?;
        file.write_all(self.to_jsonl().as_bytes())
    }

    /// Number of rounds in which the patient answered.
    pub fn rounds(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, TranscriptEvent::Answers { .. })).count()
    }

    pub fn refinement_turns(&self, round: usize) -> usize {
        self.events.iter().filter(|e| matches!(e, TranscriptEvent::Refinement { round: r, .. } if *r == round)).count()
    }

    pub fn merged_sets(&self) -> impl Iterator<Item = &[Question]> {
        self.events.iter().filter_map(|e| match e {
            TranscriptEvent::Merged { questions, .. } => Some(questions.as_slice()),
            _ => None,
        })
    }

    /// Questions actually asked, in order.
    pub fn asked_questions(&self) -> Vec<String> {
        self.events
            .iter()
            .filter_map(|e| match e {
                TranscriptEvent::Answers { turns, .. } => Some(turns.iter().map(|t| t.question.clone())),
                _ => None,
            })
            .flatten()
            .collect()
    }

    pub fn is_aborted(&self) -> bool {
        self.events.iter().any(|e| matches!(e, TranscriptEvent::Aborted { .. }))
    }
}
