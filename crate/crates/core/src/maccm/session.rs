//! Round-by-round driver for a consultation.
//!
//! [`Consultant`] methods take a session by reference and return the next
//! session value, so a failed step never leaves a half-updated session
//! behind. The HTTP service drives these steps one request at a time;
//! [`run_consultation`] drives them to completion against an
//! [`AnswerSource`].

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{
    fan_out, merge_initial_questions, propose_questions, refine_to_final, summarize_record, MaccmError, SessionConfig,
    SufficiencyRule, Transcript, TranscriptEvent,
};
use crate::agents::{select_specialists, AgentProfile, AgentRegistry, AgentTeam, TeamSlot};
use crate::domain::{AgentRole, ChiefComplaint, ConsultationState, MedicalRecord, Question, TqsConfig};
use crate::gateway::{ChatBackend, ChatExchange, Embedder};
use crate::prompts;

#[derive(Debug, thiserror::Error)]
pub enum AnswerError {
    #[error("timed out")]
    Timeout,
    #[error("{0}")]
    Failure(String),
}

/// Whoever answers the questions: a live patient or a simulator.
pub trait AnswerSource: Send + Sync {
    fn answer(&self, question: &Question, state: &ConsultationState) -> Result<String, AnswerError>;
}

/// Answers looked up by exact question text, with a fallback.
#[derive(Debug, Clone, Default)]
pub struct FixedAnswers {
    answers: HashMap<String, String>,
    fallback: Option<String>,
}

impl FixedAnswers {
    pub fn new(answers: HashMap<String, String>, fallback: Option<String>) -> Self {
        Self { answers, fallback }
    }

    /// Pairs `questions[i]` with `answers[i]`.
    pub fn positional(questions: &[Question], answers: &[String]) -> Self {
        let answers = questions.iter().map(|q| q.text.clone()).zip(answers.iter().cloned()).collect();
        Self { answers, fallback: None }
    }
}

impl AnswerSource for FixedAnswers {
    fn answer(&self, question: &Question, _state: &ConsultationState) -> Result<String, AnswerError> {
        self.answers
            .get(&question.text)
            .or(self.fallback.as_ref())
            .cloned()
            .ok_or_else(|| AnswerError::Failure(format!("no answer for {:?}", question.text)))
    }
}

/// Asks every question and appends the answers as new turns, in question
/// order. Any failure leaves `state` as it was.
pub fn conduct_round(
    questions: &[Question],
    state: &ConsultationState,
    source: &dyn AnswerSource,
) -> Result<ConsultationState, MaccmError> {
    let mut exchanges = Vec::with_capacity(questions.len());
    for q in questions {
        let answer = source.answer(q, state).map_err(|e| match e {
            AnswerError::Timeout => MaccmError::AnswerTimeout,
            AnswerError::Failure(msg) => MaccmError::SimulatorFailure(msg),
        })?;
        exchanges.push((q.text.clone(), answer));
    }
    Ok(state.with_exchanges(exchanges)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsultationSession {
    pub complaint: ChiefComplaint,
    pub team: AgentTeam,
    pub state: ConsultationState,
    /// Latest record summary.
    pub record: MedicalRecord,
    /// Questions awaiting answers; empty once finished.
    pub pending: Vec<Question>,
    pub rounds_done: usize,
    pub transcript: Transcript,
    pub final_record: Option<MedicalRecord>,
}

impl ConsultationSession {
    pub fn is_finished(&self) -> bool {
        self.final_record.is_some()
    }

    /// Round whose questions are pending.
    pub fn current_round(&self) -> usize {
        self.rounds_done + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Progress {
    Questions(Vec<Question>),
    Finished(MedicalRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsultationOutcome {
    pub record: MedicalRecord,
    pub transcript: Transcript,
    pub team: AgentTeam,
    pub rounds: usize,
}

/// Error from a consultation run plus the transcript up to the failure.
#[derive(Debug, thiserror::Error)]
#[error("consultation aborted: {error}")]
pub struct Aborted {
    pub error: MaccmError,
    pub transcript: Transcript,
}

/// Everything a consultation step needs.
#[derive(Clone, Copy)]
pub struct Consultant<'a> {
    pub gateway: &'a dyn ChatBackend,
    pub embedder: &'a dyn Embedder,
    pub registry: &'a AgentRegistry,
    pub tqs: &'a TqsConfig,
    pub config: &'a SessionConfig,
}

impl<'a> Consultant<'a> {
    /// Selects the team, summarizes the complaint and plans round 1.
    pub fn start(&self, complaint: ChiefComplaint) -> Result<ConsultationSession, Aborted> {
        let mut transcript = Transcript::default();
        match self.try_start(complaint, &mut transcript) {
            Ok(session) => Ok(session),
            Err(error) => {
                transcript.push(TranscriptEvent::Aborted { stage: "start".into(), error: error.to_string() });
                Err(Aborted { error, transcript })
            }
        }
    }

    fn try_start(
        &self,
        complaint: ChiefComplaint,
        transcript: &mut Transcript,
    ) -> Result<ConsultationSession, MaccmError> {
        self.config.validate()?;
        let selection = select_specialists(&complaint, self.registry, self.gateway, &self.config.selection)?;
        transcript.push(TranscriptEvent::Selection {
            specialists: selection.specialists.iter().map(|s| s.id.clone()).collect(),
            justification: selection.justification.clone(),
            warning: selection.warning.clone(),
        });
        let general = self.registry.general().ok_or(crate::agents::AgentError::NoGeneralAgent)?;
        let mut slot = TeamSlot::new();
        let team = slot.form(&selection.specialists, general, &complaint)?.clone();
        transcript.push(TranscriptEvent::Team {
            members: team.members().map(|m| m.id.clone()).collect(),
            digest: team.digest(),
        });

        let state = ConsultationState::new(complaint.clone());
        let record = summarize_record(&state, 0, self.gateway, self.tqs)?;
        transcript.push(TranscriptEvent::Record { record: record.clone() });

        let session = ConsultationSession {
            complaint,
            team,
            state,
            record,
            pending: Vec::new(),
            rounds_done: 0,
            transcript: std::mem::take(transcript),
            final_record: None,
        };
        let planned = self.plan_round(&session);
        if let Err(e) = planned {
            *transcript = session.transcript;
            return Err(e);
        }
        planned
    }

    fn active_members(&self, team: &AgentTeam) -> Vec<AgentProfile> {
        team.members().filter(|m| self.config.include_general || m.role != AgentRole::General).cloned().collect()
    }

    /// Propose → merge → refine for the next round; fills `pending`.
    pub fn plan_round(&self, session: &ConsultationSession) -> Result<ConsultationSession, MaccmError> {
        let mut next = session.clone();
        let round = session.current_round();
        let members = self.active_members(&session.team);
        let per_agent = self.config.questions_per_agent;

        let proposals = fan_out(&members, |agent| propose_questions(agent, &session.state, self.gateway, per_agent))?;
        let mut spec = Vec::new();
        let mut gen = Vec::new();
        for (agent, proposal) in members.iter().zip(&proposals) {
            next.transcript.push(TranscriptEvent::Proposal {
                round,
                agent_id: proposal.agent_id.clone(),
                questions: proposal.questions.clone(),
                clamped_from: proposal.clamped_from,
            });
            match agent.role {
                AgentRole::Specialist => spec.extend(proposal.questions.iter().cloned()),
                AgentRole::General => gen.extend(proposal.questions.iter().cloned()),
            }
        }
        let merged = merge_initial_questions(&spec, &gen)?;
        next.transcript.push(TranscriptEvent::Merged { round, questions: merged.clone() });

        let refinement = refine_to_final(
            &merged,
            &session.record,
            &session.team,
            &members,
            self.tqs,
            self.gateway,
            self.embedder,
            self.config,
        )?;
        for r in refinement.rounds {
            next.transcript.push(TranscriptEvent::Refinement {
                round,
                sub_iteration: r.sub_iteration,
                scores: r.evaluated,
                summary: r.summary,
                modifications: r.modifications,
                optimized: r.optimized,
                consensus: r.consensus,
            });
        }
        next.transcript.push(TranscriptEvent::FinalQuestions { round, questions: refinement.final_questions.clone() });
        next.pending = refinement.final_questions.into_iter().map(|s| s.question).collect();
        Ok(next)
    }

    /// Answers the pending questions, updates the record, and either plans
    /// the next round or finalizes.
    pub fn submit(
        &self,
        session: &ConsultationSession,
        source: &dyn AnswerSource,
    ) -> Result<(ConsultationSession, Progress), MaccmError> {
        if session.is_finished() {
            return Err(MaccmError::SessionFinished);
        }
        let mut next = session.clone();
        let round = session.current_round();
        let new_state = conduct_round(&session.pending, &session.state, source)?;
        next.transcript
            .push(TranscriptEvent::Answers { round, turns: new_state.turns()[session.state.len()..].to_vec() });
        next.state = new_state;
        next.rounds_done = round;

        let record = summarize_record(&next.state, round, self.gateway, self.tqs)?;
        next.transcript.push(TranscriptEvent::Record { record: record.clone() });
        next.record = record;

        let (stop, reply) = self.should_stop(&next)?;
        next.transcript.push(TranscriptEvent::Sufficiency { round, stop, reply });
        if stop {
            let final_record = next.record.clone().finalize();
            next.transcript.push(TranscriptEvent::Finalized { record: final_record.clone() });
            next.final_record = Some(final_record.clone());
            next.pending.clear();
            return Ok((next, Progress::Finished(final_record)));
        }
        let next = self.plan_round(&next)?;
        let pending = next.pending.clone();
        Ok((next, Progress::Questions(pending)))
    }

    /// Convenience for callers holding answers in question order.
    pub fn submit_answers(
        &self,
        session: &ConsultationSession,
        answers: &[String],
    ) -> Result<(ConsultationSession, Progress), MaccmError> {
        if answers.len() != session.pending.len() {
            return Err(MaccmError::AnswerCountMismatch { expected: session.pending.len(), got: answers.len() });
        }
        self.submit(session, &FixedAnswers::positional(&session.pending, answers))
    }

    fn should_stop(&self, session: &ConsultationSession) -> Result<(bool, String), MaccmError> {
        if session.rounds_done >= self.config.max_rounds {
            return Ok((true, format!("round cap {} reached", self.config.max_rounds)));
        }
        match self.config.sufficiency_rule {
            SufficiencyRule::FixedRounds(n) => {
                Ok((session.rounds_done >= n, format!("fixed rule: {} of {n} rounds", session.rounds_done)))
            }
            SufficiencyRule::LlmJudge => {
                let reply = self
                    .gateway
                    .chat(ChatExchange::new(
                        prompts::sufficiency_system(),
                        prompts::sufficiency_user(&session.record, self.tqs),
                    ))?
                    .response_text()
                    .to_string();
                let stop = prompts::parse_stop(&reply).unwrap_or_else(|| {
                    log::warn!("unparseable sufficiency reply {reply:?}; continuing");
                    false
                });
                Ok((stop, reply))
            }
        }
    }

    /// Runs a whole consultation against `source`.
    pub fn run(&self, complaint: ChiefComplaint, source: &dyn AnswerSource) -> Result<ConsultationOutcome, Aborted> {
        let mut session = self.start(complaint)?;
        loop {
            match self.submit(&session, source) {
                Ok((next, Progress::Questions(_))) => session = next,
                Ok((next, Progress::Finished(record))) => {
                    return Ok(ConsultationOutcome {
                        record,
                        rounds: next.rounds_done,
                        team: next.team,
                        transcript: next.transcript,
                    })
                }
                Err(error) => {
                    let mut transcript = session.transcript;
                    transcript.push(TranscriptEvent::Aborted {
                        stage: format!("round {}", session.rounds_done + 1),
                        error: error.to_string(),
                    });
                    return Err(Aborted { error, transcript });
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn run_consultation(
    complaint: ChiefComplaint,
    registry: &AgentRegistry,
    config: &SessionConfig,
    answer_source: &dyn AnswerSource,
    gateway: &dyn ChatBackend,
    embedder: &dyn Embedder,
    tqs: &TqsConfig,
) -> Result<ConsultationOutcome, Aborted> {
    Consultant { gateway, embedder, registry, tqs, config }.run(complaint, answer_source)
}
