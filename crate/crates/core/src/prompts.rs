//! Prompt templates for every agent call and parsers for their replies.
//!
//! Each system prompt opens with a `### ROLE: <tag>` header line so that
//! scripted backends can route on it; specialist-facing prompts also carry an
//! `AGENT: <id>` line. The reply formats are deliberately line-oriented so a
//! scripted fixture can produce them by hand.

use serde::Deserialize;

use crate::agents::AgentProfile;
use crate::domain::{ConsultationState, MedicalRecord, TqsConfig};

pub const NO_CHANGE: &str = "NO_CHANGE";
pub const UNKNOWN_ANSWER: &str = "I don't know";

pub const ROLE_SELECT: &str = "select";
pub const ROLE_RECORD: &str = "record";
pub const ROLE_SPEC: &str = "spec";
pub const ROLE_GEN: &str = "gen";
pub const ROLE_EVAL: &str = "eval";
pub const ROLE_MODIFY: &str = "modify";
pub const ROLE_OPT: &str = "opt";
pub const ROLE_SUFFICIENCY: &str = "sufficiency";
pub const ROLE_SYNDROME: &str = "sy";
pub const ROLE_TREATMENT: &str = "tr";
pub const ROLE_ATTRIBUTES: &str = "attributes";
pub const ROLE_PREPROCESS: &str = "preprocess";
pub const ROLE_PATIENT: &str = "patient";
pub const ROLE_JUDGE: &str = "judge";

pub fn header(role: &str) -> String {
    format!("### ROLE: {role}\n")
}

fn agent_header(role: &str, agent: &AgentProfile) -> String {
    format!("{}AGENT: {}\n", header(role), agent.id)
}

pub fn select_system(max: usize) -> String {
    format!(
        "{}You are the manager of a team of Traditional Chinese Medicine specialists. \
         Read the patient's chief complaint and choose between 1 and {max} specialties best \
         suited to conduct the consultation. Reply with one specialty name per line, \
         followed by an optional line starting with `Reason:`.",
        header(ROLE_SELECT)
    )
}

pub fn select_user(complaint: &str, specialties: &[&str]) -> String {
    format!("Chief complaint: {}\nAvailable specialties: {}", complaint.trim(), specialties.join(", "))
}

pub fn record_system(tqs: &TqsConfig) -> String {
    format!(
        "{}You are the record agent. Summarize what is known about the patient. Write one line \
         per category in the form `category: findings`, using only these categories: {}. Only \
         report what the patient actually said.",
        header(ROLE_RECORD),
        tqs.names().collect::<Vec<_>>().join(", ")
    )
}

pub fn record_user(state: &ConsultationState) -> String {
    state.render()
}

pub fn propose_system(agent: &AgentProfile, per_agent: usize) -> String {
    let (role, instructions) = match agent.role {
        crate::domain::AgentRole::Specialist => (
            ROLE_SPEC,
            format!(
                "You are a TCM specialist in {}. Using your specialty knowledge, propose up to \
                 {per_agent} patient-targeted follow-up questions.",
                agent.specialty
            ),
        ),
        crate::domain::AgentRole::General => (
            ROLE_GEN,
            format!(
                "You are a general TCM practitioner. Propose up to {per_agent} broad but \
                 comprehensive follow-up questions grounded in fundamental TCM knowledge."
            ),
        ),
    };
    format!(
        "{}{instructions}\nKnowledge:\n{}\nFor each question write a line `Q: <question>` followed \
         by a line `R: <explanation and theoretical guidance>`.",
        agent_header(role, agent),
        agent.knowledge_pack.trim()
    )
}

pub fn consultation_user(state: &ConsultationState) -> String {
    format!("Consultation so far:\n{}", state.render())
}

pub fn eval_system() -> String {
    format!(
        "{}You are the evaluation agent. The candidate questions below carry comprehensiveness \
         and pertinence scores. Write a short summary and evaluation of the candidates.",
        header(ROLE_EVAL)
    )
}

pub fn eval_user(scored: &[(String, f64, f64, f64)], record: &MedicalRecord) -> String {
    let mut out = format!("Patient record:\n{}\nCandidates:\n", record.raw_summary.trim());
    for (text, com, per, total) in scored {
        out.push_str(&format!("- {text} [com={com:.4} per={per:.4} total={total:.4}]\n"));
    }
    out
}

pub fn modify_system(agent: &AgentProfile) -> String {
    format!(
        "{}You are a member of the consultation team ({}). Review the evaluated questions. \
         Suggest modifications, or reply exactly `{NO_CHANGE}` if they need none.",
        agent_header(ROLE_MODIFY, agent),
        agent.specialty
    )
}

pub fn modify_user(evaluation: &str, questions: &[String], record: &MedicalRecord) -> String {
    format!(
        "Patient record:\n{}\nEvaluation:\n{}\nQuestions:\n{}",
        record.raw_summary.trim(),
        evaluation.trim(),
        render_question_lines(questions)
    )
}

pub fn opt_system() -> String {
    format!(
        "{}You are the optimization agent. Integrate the team's suggestions and rewrite the \
         question list. Reply with lines `Q: <question>` and `R: <rationale>`.",
        header(ROLE_OPT)
    )
}

pub fn opt_user(questions: &[String], suggestions: &[String], record: &MedicalRecord) -> String {
    let mut out = format!(
        "Patient record:\n{}\nCurrent questions:\n{}Suggestions:\n",
        record.raw_summary.trim(),
        render_question_lines(questions)
    );
    for s in suggestions {
        out.push_str(&format!("- {}\n", s.trim()));
    }
    out
}

fn render_question_lines(questions: &[String]) -> String {
    questions.iter().map(|q| format!("Q: {}\n", q.trim())).collect()
}

pub fn sufficiency_system() -> String {
    format!(
        "{}Decide whether enough information has been collected for syndrome differentiation. \
         Reply `STOP` or `CONTINUE`.",
        header(ROLE_SUFFICIENCY)
    )
}

pub fn sufficiency_user(record: &MedicalRecord, tqs: &TqsConfig) -> String {
    format!("Round {}\n{}", record.round, record.to_text(tqs))
}

pub fn syndrome_system(labels: &[String]) -> String {
    let space = if labels.is_empty() { String::new() } else { format!(" Choose one of: {}.", labels.join("; ")) };
    format!(
        "{}You are the TCM syndrome agent. Infer the most probable syndrome type from the final \
         medical record.{space} Reply with lines `label: <syndrome>`, `confidence: <0..1>` and \
         `rationale: <reasoning>`.",
        header(ROLE_SYNDROME)
    )
}

pub fn attributes_system() -> String {
    format!(
        "{}Extract the syndrome attributes from the record. Reply with lines `etiology: ...` and \
         `affected_organ: ...`; write `none` when the record does not state one.",
        header(ROLE_ATTRIBUTES)
    )
}

pub fn attributes_user(record_text: &str, syndrome: &str) -> String {
    format!("Syndrome: {syndrome}\nRecord:\n{record_text}")
}

pub fn treatment_system() -> String {
    format!(
        "{}You are the TCM treatment agent. Explain briefly why the retrieved prescriptions suit \
         the patient's syndrome.",
        header(ROLE_TREATMENT)
    )
}

pub fn preprocess_system(tqs: &TqsConfig, blocklist: &[String]) -> String {
    format!(
        "{}Extract the key clinical information from the case using the Ten Questions \
         categories: {}. Write one line per category as `category: findings`. Omit \
         administrative statements and instrumental examinations (e.g. {}).",
        header(ROLE_PREPROCESS),
        tqs.names().collect::<Vec<_>>().join(", "),
        blocklist.join(", ")
    )
}

pub fn preprocess_user(narrative: &str) -> String {
    format!("Case:\n{}", narrative.trim())
}

pub fn patient_system(narrative: &str) -> String {
    format!(
        "{}You are a patient. Answer the doctor's question using only the facts in your case. If \
         the case does not say, reply `{UNKNOWN_ANSWER}`.\nCase:\n{}",
        header(ROLE_PATIENT),
        narrative.trim()
    )
}

pub fn judge_system(dimension: &str) -> String {
    format!(
        "{}Compare two consultation outputs on the dimension `{dimension}`. Reply with exactly one \
         of `A`, `B` or `TIE`.",
        header(ROLE_JUDGE)
    )
}

pub fn judge_user(first: &str, second: &str) -> String {
    format!("Output A:\n{}\n\nOutput B:\n{}", first.trim(), second.trim())
}

/// `key: value` lines, or a flat JSON object.
pub fn parse_keyed(text: &str) -> Vec<(String, String)> {
    let trimmed = text.trim();
    if trimmed.starts_with('{') {
        if let Ok(map) = serde_json::from_str::<serde_json::Map<String, serde_json::Value>>(trimmed) {
            return map
                .into_iter()
                .filter_map(|(k, v)| match v {
                    serde_json::Value::String(s) => Some((k, s)),
                    serde_json::Value::Null => None,
                    other => Some((k, other.to_string())),
                })
                .collect();
        }
    }
    trimmed
        .lines()
        .filter_map(|line| {
            let line = line.trim().trim_start_matches(['-', '*']).trim();
            let idx = line.find([':', '：'])?;
            let (key, rest) = line.split_at(idx);
            let value = rest.chars().skip(1).collect::<String>();
            let (key, value) = (key.trim(), value.trim());
            (!key.is_empty() && !value.is_empty()).then(|| (key.to_string(), value.to_string()))
        })
        .collect()
}

#[derive(Deserialize)]
struct JsonQuestion {
    question: String,
    #[serde(default)]
    rationale: Option<String>,
}

/// `Q:`/`R:` line pairs, or a JSON array of `{question, rationale}`.
pub fn parse_questions(text: &str) -> Vec<(String, Option<String>)> {
    let trimmed = text.trim();
    if trimmed.starts_with('[') {
        if let Ok(list) = serde_json::from_str::<Vec<JsonQuestion>>(trimmed) {
            return list
                .into_iter()
                .filter(|q| !q.question.trim().is_empty())
                .map(|q| (q.question.trim().to_string(), q.rationale.map(|r| r.trim().to_string())))
                .collect();
        }
    }
    let mut out: Vec<(String, Option<String>)> = Vec::new();
    for line in trimmed.lines() {
        let line = line.trim();
        if let Some(q) = strip_tag(line, &["Q:", "Question:"]) {
            if !q.is_empty() {
                out.push((q.to_string(), None));
            }
        } else if let Some(r) = strip_tag(line, &["R:", "Rationale:", "Why:"]) {
            if let Some(last) = out.last_mut() {
                if last.1.is_none() && !r.is_empty() {
                    last.1 = Some(r.to_string());
                }
            }
        }
    }
    out
}

fn strip_tag<'a>(line: &'a str, tags: &[&str]) -> Option<&'a str> {
    tags.iter().find_map(|tag| {
        line.get(..tag.len()).filter(|head| head.eq_ignore_ascii_case(tag)).map(|_| line[tag.len()..].trim())
    })
}

pub fn is_no_change(text: &str) -> bool {
    text.trim().trim_matches(['.', '`']).eq_ignore_ascii_case(NO_CHANGE)
}

/// `Some(true)` for stop, `Some(false)` for continue.
pub fn parse_stop(text: &str) -> Option<bool> {
    let first = text.split_whitespace().next()?.trim_matches(|c: char| !c.is_alphanumeric());
    if first.eq_ignore_ascii_case("STOP") {
        Some(true)
    } else if first.eq_ignore_ascii_case("CONTINUE") {
        Some(false)
    } else {
        None
    }
}
