//! The evaluate → optimize loop that turns the merged initial questions into
//! the one or two questions actually put to the patient.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{fan_out, score_questions, MaccmError, ScoredQuestion, SessionConfig};
use crate::agents::{AgentProfile, AgentTeam};
use crate::domain::{MedicalRecord, Question, TqsConfig};
use crate::gateway::{ChatBackend, ChatExchange, Embedder};
use crate::prompts;

/// Evaluation agent output for one sub-iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub sub_iteration: usize,
    pub scored: Vec<ScoredQuestion>,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Modification {
    pub agent_id: String,
    pub text: String,
    pub no_change: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimization {
    pub questions: Vec<Question>,
    pub consensus: bool,
    pub modifications: Vec<Modification>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementRound {
    pub sub_iteration: usize,
    pub evaluated: Vec<ScoredQuestion>,
    pub summary: String,
    pub modifications: Vec<Modification>,
    pub optimized: Vec<Question>,
    pub consensus: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub rounds: Vec<RefinementRound>,
    pub final_questions: Vec<ScoredQuestion>,
}

/// Numeric scores come from [`score_questions`] alone; the model only writes
/// the summary.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_questions(
    previous: &[Question],
    record: &MedicalRecord,
    team: &AgentTeam,
    tqs: &TqsConfig,
    gateway: &dyn ChatBackend,
    embedder: &dyn Embedder,
    sub_iteration: usize,
) -> Result<Evaluation, MaccmError> {
    let scored = score_questions(previous, tqs, &team.core_questions(), record, embedder)?;
    let rows: Vec<_> =
        scored.iter().map(|s| (s.question.text.clone(), s.com_score, s.per_score, s.total_score)).collect();
    let summary = gateway
        .chat(ChatExchange::new(prompts::eval_system(), prompts::eval_user(&rows, record)))?
        .response_text()
        .to_string();
    Ok(Evaluation { sub_iteration, scored, summary })
}

/// Collects one modification per member, then lets the optimization agent
/// rewrite the list. Consensus holds when every member answers the no-change
/// marker, or when the rewritten list has the same question texts as before.
pub fn optimize_questions(
    evaluation: &Evaluation,
    record: &MedicalRecord,
    members: &[AgentProfile],
    gateway: &dyn ChatBackend,
) -> Result<Optimization, MaccmError> {
    let previous: Vec<Question> = evaluation.scored.iter().map(|s| s.question.clone()).collect();
    let texts: Vec<String> = previous.iter().map(|q| q.text.clone()).collect();

    let modifications = fan_out(members, |agent| {
        let reply = gateway.chat(ChatExchange::new(
            prompts::modify_system(agent),
            prompts::modify_user(&evaluation.summary, &texts, record),
        ))?;
        let text = reply.response_text().trim().to_string();
        Ok(Modification { agent_id: agent.id.clone(), no_change: prompts::is_no_change(&text), text })
    })?;

    if modifications.iter().all(|m| m.no_change) {
        return Ok(Optimization { questions: previous, consensus: true, modifications });
    }

    let suggestions: Vec<String> = modifications.iter().filter(|m| !m.no_change).map(|m| m.text.clone()).collect();
    let reply =
        gateway.chat(ChatExchange::new(prompts::opt_system(), prompts::opt_user(&texts, &suggestions, record)))?;
    let parsed = prompts::parse_questions(reply.response_text());
    if parsed.is_empty() {
        log::warn!("optimizer reply had no questions; keeping the evaluated list");
        return Ok(Optimization { questions: previous, consensus: true, modifications });
    }

    // New texts are credited to the first member that asked for a change.
    let author = modifications
        .iter()
        .find(|m| !m.no_change)
        .and_then(|m| members.iter().find(|a| a.id == m.agent_id))
        .unwrap_or(&members[0]);
    let mut questions: Vec<Question> = Vec::with_capacity(parsed.len());
    for (text, rationale) in parsed {
        if questions.iter().any(|q| q.text.trim() == text.trim()) {
            continue;
        }
        let q = match previous.iter().find(|p| p.text.trim() == text.trim()) {
            Some(existing) => existing.clone(),
            None => Question::new(
                text,
                rationale.unwrap_or_else(|| "Revised by the optimization agent from team suggestions.".into()),
                author.id.clone(),
                author.role,
            )?,
        };
        questions.push(q);
    }

    let before: BTreeSet<&str> = previous.iter().map(|q| q.text.trim()).collect();
    let after: BTreeSet<&str> = questions.iter().map(|q| q.text.trim()).collect();
    let consensus = before == after;
    Ok(Optimization { questions, consensus, modifications })
}

/// Highest total score first; equal scores keep their list order.
pub fn select_final(scored: &[ScoredQuestion], count: usize) -> Vec<ScoredQuestion> {
    let mut ranked: Vec<&ScoredQuestion> = scored.iter().collect();
    ranked.sort_by(|a, b| b.total_score.total_cmp(&a.total_score));
    ranked.into_iter().take(count).cloned().collect()
}

#[allow(clippy::too_many_arguments)]
pub fn refine_to_final(
    initial: &[Question],
    record: &MedicalRecord,
    team: &AgentTeam,
    members: &[AgentProfile],
    tqs: &TqsConfig,
    gateway: &dyn ChatBackend,
    embedder: &dyn Embedder,
    config: &SessionConfig,
) -> Result<Refinement, MaccmError> {
    if initial.is_empty() {
        return Err(MaccmError::EmptyQuestionList);
    }
    let mut current = initial.to_vec();
    let mut rounds = Vec::new();
    let mut last_scored: Option<Vec<ScoredQuestion>> = None;

    for j in 1..=config.max_feedback_turns {
        let evaluation = evaluate_questions(&current, record, team, tqs, gateway, embedder, j)?;
        let opt = optimize_questions(&evaluation, record, members, gateway)?;
        let consensus = opt.consensus;
        rounds.push(RefinementRound {
            sub_iteration: j,
            evaluated: evaluation.scored.clone(),
            summary: evaluation.summary,
            modifications: opt.modifications,
            optimized: opt.questions.clone(),
            consensus,
        });
        if consensus && opt.questions == current {
            last_scored = Some(evaluation.scored);
        }
        current = opt.questions;
        if consensus {
            break;
        }
    }

    let scored = match last_scored {
        Some(s) => s,
        None => score_questions(&current, tqs, &team.core_questions(), record, embedder)?,
    };
    let final_questions = select_final(&scored, config.questions_per_agent);
    Ok(Refinement { rounds, final_questions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{form_team, AgentRegistry};
    use crate::domain::{AgentRole, ChiefComplaint};
    use crate::gateway::{HashedBigramEmbedder, ScriptedBackend, ScriptedEntry};
    use chrono::{DateTime, Utc};
    use std::collections::BTreeMap;

    fn team() -> (AgentTeam, Vec<AgentProfile>) {
        let reg = AgentRegistry::default();
        let complaint = ChiefComplaint::new("child diarrhea", DateTime::<Utc>::UNIX_EPOCH).unwrap();
        let team =
            form_team(&[reg.by_specialty("pediatrics").unwrap().clone()], reg.general().unwrap(), &complaint).unwrap();
        let members = team.members().cloned().collect();
        (team, members)
    }

    fn record() -> MedicalRecord {
        MedicalRecord::new(BTreeMap::new(), "child with loose stools", 0, &TqsConfig::default()).unwrap()
    }

    fn q(text: &str) -> Question {
        Question::new(text, "r", "pediatrics", AgentRole::Specialist).unwrap()
    }

    fn backend(entries: Vec<ScriptedEntry>) -> ScriptedBackend {
        ScriptedBackend::new(entries, None).unwrap()
    }

    fn initial() -> Vec<Question> {
        let tqs = TqsConfig::default();
        vec![q("zzz unrelated"), q(&tqs.items()[3].canonical_text), q(&tqs.items()[4].canonical_text), q("qqq other")]
    }

    #[test]
    fn evaluation_keeps_every_question_and_summary() {
        let (team, _) = team();
        let b = backend(vec![ScriptedEntry::contains("ROLE: eval", "prioritize sleep pattern")]);
        let eval = evaluate_questions(
            &initial(),
            &record(),
            &team,
            &TqsConfig::default(),
            &b,
            &HashedBigramEmbedder::default(),
            1,
        )
        .unwrap();
        assert_eq!(eval.scored.len(), 4);
        assert_eq!(eval.summary, "prioritize sleep pattern");
    }

    #[test]
    fn summary_text_never_changes_scores() {
        let (team, _) = team();
        let run = |summary: &str| {
            let b = backend(vec![ScriptedEntry::contains("ROLE: eval", summary)]);
            evaluate_questions(
                &initial(),
                &record(),
                &team,
                &TqsConfig::default(),
                &b,
                &HashedBigramEmbedder::default(),
                1,
            )
            .unwrap()
            .scored
        };
        assert_eq!(run("summary A"), run("something else entirely"));
    }

    fn eval_of(questions: Vec<Question>) -> Evaluation {
        Evaluation {
            sub_iteration: 1,
            scored: questions
                .into_iter()
                .map(|question| ScoredQuestion { question, com_score: 0.0, per_score: 0.0, total_score: 0.0 })
                .collect(),
            summary: "s".into(),
        }
    }

    #[test]
    fn unanimous_no_change_is_consensus() {
        let (_, members) = team();
        let b = backend(vec![ScriptedEntry::contains("ROLE: modify", "NO_CHANGE")]);
        let opt = optimize_questions(&eval_of(vec![q("a?"), q("b?")]), &record(), &members, &b).unwrap();
        assert!(opt.consensus);
        assert_eq!(opt.questions.len(), 2);
        assert_eq!(opt.modifications.len(), members.len());
    }

    #[test]
    fn suggested_thirst_question_breaks_consensus() {
        let (_, members) = team();
        let b = backend(vec![
            ScriptedEntry::all_of(["ROLE: modify", "AGENT: general"], "Add a question about thirst."),
            ScriptedEntry::contains("ROLE: modify", "NO_CHANGE"),
            ScriptedEntry::contains("ROLE: opt", "Q: a?\nQ: Are you thirsty?\nR: thirst pattern"),
        ]);
        let opt = optimize_questions(&eval_of(vec![q("a?")]), &record(), &members, &b).unwrap();
        assert!(!opt.consensus);
        let added = opt.questions.iter().find(|q| q.text == "Are you thirsty?").unwrap();
        assert_eq!(added.source, "general");
        assert_eq!(added.kind, AgentRole::General);
    }

    #[test]
    fn textual_fixed_point_is_consensus() {
        let (_, members) = team();
        let b = backend(vec![
            ScriptedEntry::contains("ROLE: modify", "Reword the second question."),
            ScriptedEntry::contains("ROLE: opt", "Q: b?\nQ: a?"),
        ]);
        let opt = optimize_questions(&eval_of(vec![q("a?"), q("b?")]), &record(), &members, &b).unwrap();
        assert!(opt.consensus);
    }

    fn config(turns: usize, per_agent: usize) -> SessionConfig {
        SessionConfig { max_feedback_turns: turns, questions_per_agent: per_agent, ..SessionConfig::default() }
    }

    #[test]
    fn early_consensus_selects_top_initial_questions() {
        let (team, members) = team();
        let b = backend(vec![
            ScriptedEntry::contains("ROLE: eval", "ok"),
            ScriptedEntry::contains("ROLE: modify", "NO_CHANGE"),
        ]);
        let r = refine_to_final(
            &initial(),
            &record(),
            &team,
            &members,
            &TqsConfig::default(),
            &b,
            &HashedBigramEmbedder::default(),
            &config(3, 2),
        )
        .unwrap();
        assert_eq!(r.rounds.len(), 1);
        let expected = select_final(&r.rounds[0].evaluated, 2);
        assert_eq!(r.final_questions, expected);
        let tqs = TqsConfig::default();
        let picked: BTreeSet<_> = r.final_questions.iter().map(|s| s.question.text.clone()).collect();
        assert!(picked.contains(&tqs.items()[3].canonical_text));
        assert!(picked.contains(&tqs.items()[4].canonical_text));
    }

    #[test]
    fn never_consenting_runs_exactly_max_turns() {
        let (team, members) = team();
        let b = backend(vec![
            ScriptedEntry::contains("ROLE: eval", "ok"),
            ScriptedEntry::contains("ROLE: modify", "change everything"),
            ScriptedEntry::all_of(["ROLE: opt", "Q: v1"], "Q: v2"),
            ScriptedEntry::all_of(["ROLE: opt", "Q: v2"], "Q: v3"),
            ScriptedEntry::contains("ROLE: opt", "Q: v1"),
        ]);
        let r = refine_to_final(
            &initial(),
            &record(),
            &team,
            &members,
            &TqsConfig::default(),
            &b,
            &HashedBigramEmbedder::default(),
            &config(3, 1),
        )
        .unwrap();
        assert_eq!(r.rounds.len(), 3);
        assert!(r.rounds.iter().all(|round| !round.consensus));
        assert_eq!(r.final_questions.len(), 1);
        assert_eq!(r.final_questions[0].question.text, "v3");
    }

    #[test]
    fn ties_go_to_earlier_position() {
        let scored: Vec<_> = ["first", "second", "third"]
            .iter()
            .enumerate()
            .map(|(i, t)| ScoredQuestion {
                question: q(t),
                com_score: 0.5,
                per_score: if i == 2 { 0.1 } else { 0.3 },
                total_score: if i == 2 { 0.6 } else { 0.8 },
            })
            .collect();
        let picked = select_final(&scored, 1);
        assert_eq!(picked[0].question.text, "first");
        let picked = select_final(&scored, 2);
        assert_eq!(picked[1].question.text, "second");
    }
}
