//! Multi-agent collaborative consultation.
//!
//! One consultation round runs: record summary → question proposals from
//! every team member → merge → evaluate/optimize refinement → ask the
//! patient. Rounds repeat until the sufficiency rule fires or the round cap
//! is hit, and the last summary becomes the finalized record.

mod cqea;
mod propose;
mod record;
mod refine;
mod session;
mod transcript;

use serde::{Deserialize, Serialize};

pub use cqea::{score_questions, ScoredQuestion};
pub use propose::{merge_initial_questions, propose_questions, Proposal};
pub use record::summarize_record;
pub use refine::{
    evaluate_questions, optimize_questions, refine_to_final, select_final, Evaluation, Modification, Optimization,
    Refinement, RefinementRound,
};
pub use session::{
    conduct_round, run_consultation, Aborted, AnswerError, AnswerSource, Consultant, ConsultationOutcome,
    ConsultationSession, FixedAnswers, Progress,
};
pub use transcript::{Transcript, TranscriptEvent};

use crate::agents::{AgentError, SelectionConfig};
use crate::domain::DomainError;
use crate::gateway::GatewayError;

#[derive(Debug, thiserror::Error)]
pub enum MaccmError {
    #[error("gateway failure: {0}")]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("agent {0} produced no questions after a retry")]
    EmptyGeneration(String),
    #[error("both specialist and general question lists are empty")]
    BothEmpty,
    #[error("no questions to score")]
    EmptyQuestionList,
    #[error("timed out waiting for the patient's answer")]
    AnswerTimeout,
    #[error("simulated patient failed: {0}")]
    SimulatorFailure(String),
    #[error("expected {expected} answers, got {got}")]
    AnswerCountMismatch { expected: usize, got: usize },
    #[error("consultation already finished")]
    SessionFinished,
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
}

/// When the consultation has gathered enough.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "rounds")]
pub enum SufficiencyRule {
    /// Ask the model after each round; `STOP` ends the consultation.
    LlmJudge,
    /// Stop after exactly this many rounds (bounded by `max_rounds`).
    FixedRounds(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub max_rounds: usize,
    pub max_feedback_turns: usize,
    pub questions_per_agent: usize,
    pub sufficiency_rule: SufficiencyRule,
    /// When false the general agent is left out of proposals and reviews.
    pub include_general: bool,
    pub selection: SelectionConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            max_rounds: 10,
            max_feedback_turns: 3,
            questions_per_agent: 2,
            sufficiency_rule: SufficiencyRule::LlmJudge,
            include_general: true,
            selection: SelectionConfig::default(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), MaccmError> {
        if self.max_rounds == 0 || self.max_feedback_turns == 0 {
            return Err(MaccmError::InvalidConfig("round and feedback bounds must be positive".into()));
        }
        if !(1..=2).contains(&self.questions_per_agent) {
            return Err(MaccmError::InvalidConfig("questions_per_agent must be 1 or 2".into()));
        }
        if let SufficiencyRule::FixedRounds(0) = self.sufficiency_rule {
            return Err(MaccmError::InvalidConfig("fixed round count must be positive".into()));
        }
        if self.selection.max_specialists == 0 {
            return Err(MaccmError::InvalidConfig("max_specialists must be positive".into()));
        }
        Ok(())
    }
}

/// Runs `f` for every agent on scoped threads and returns results in agent
/// order, regardless of completion order. The first error (by agent order)
/// wins.
pub(crate) fn fan_out<T, F>(agents: &[crate::agents::AgentProfile], f: F) -> Result<Vec<T>, MaccmError>
where
    T: Send,
    F: Fn(&crate::agents::AgentProfile) -> Result<T, MaccmError> + Sync,
{
    if agents.len() <= 1 {
        return agents.iter().map(&f).collect();
    }
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = agents.iter().map(|a| scope.spawn(move || f(a))).collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p))).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fan_out_preserves_agent_order() {
        let registry = crate::agents::AgentRegistry::default();
        let agents = registry.profiles();
        let ids = fan_out(agents, |a| {
            std::thread::sleep(std::time::Duration::from_millis(
                (agents.len() - agents.iter().position(|x| x.id == a.id).unwrap()) as u64 * 3,
            ));
            Ok(a.id.clone())
        })
        .unwrap();
        let expected: Vec<_> = agents.iter().map(|a| a.id.clone()).collect();
        assert_eq!(ids, expected);
    }

    #[test]
    fn config_bounds() {
        assert!(SessionConfig::default().validate().is_ok());
        let bad = SessionConfig { questions_per_agent: 3, ..SessionConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SessionConfig { max_rounds: 0, ..SessionConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sufficiency_rule_serde() {
        let json = serde_json::to_string(&SufficiencyRule::FixedRounds(4)).unwrap();
        assert_eq!(json, r#"{"kind":"fixed_rounds","rounds":4}"#);
        let back: SufficiencyRule = serde_json::from_str(r#"{"kind":"llm_judge"}"#).unwrap();
        assert_eq!(back, SufficiencyRule::LlmJudge);
    }
}
