use serde::{Deserialize, Serialize};

use super::MaccmError;
use crate::agents::AgentProfile;
use crate::domain::{ConsultationState, Question};
use crate::gateway::{ChatBackend, ChatExchange, GatewayError};
use crate::prompts;

/// One agent's proposed questions for the next round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub agent_id: String,
    pub questions: Vec<Question>,
    /// Number of questions the agent produced before clamping, when it exceeded the budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamped_from: Option<usize>,
}

fn generate(
    agent: &AgentProfile,
    state: &ConsultationState,
    gateway: &dyn ChatBackend,
    per_agent: usize,
) -> Result<Vec<(String, Option<String>)>, MaccmError> {
    let exchange = ChatExchange::new(prompts::propose_system(agent, per_agent), prompts::consultation_user(state));
    match gateway.chat(exchange) {
        Ok(reply) => Ok(prompts::parse_questions(reply.response_text())),
        Err(GatewayError::EmptyResponse) => Ok(Vec::new()),
        Err(e) => Err(e.into()),
    }
}

pub fn propose_questions(
    agent: &AgentProfile,
    state: &ConsultationState,
    gateway: &dyn ChatBackend,
    per_agent: usize,
) -> Result<Proposal, MaccmError> {
    let per_agent = per_agent.clamp(1, 2);
    let mut parsed = generate(agent, state, gateway, per_agent)?;
    if parsed.is_empty() {
        log::warn!("agent {} produced no questions, retrying once", agent.id);
        parsed = generate(agent, state, gateway, per_agent)?;
    }
    if parsed.is_empty() {
        return Err(MaccmError::EmptyGeneration(agent.id.clone()));
    }
    let produced = parsed.len();
    let clamped_from = (produced > per_agent).then(|| {
        log::info!("agent {} proposed {produced} questions, clamped to {per_agent}", agent.id);
        produced
    });
    let questions = parsed
        .into_iter()
        .take(per_agent)
        .map(|(text, rationale)| {
            let rationale =
                rationale.unwrap_or_else(|| format!("Proposed by {} from {} knowledge.", agent.name, agent.specialty));
            Question::new(text, rationale, agent.id.clone(), agent.role)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Proposal { agent_id: agent.id.clone(), questions, clamped_from })
}

/// Specialist questions first, then general ones; repeated texts keep their
/// first occurrence.
pub fn merge_initial_questions(spec: &[Question], gen: &[Question]) -> Result<Vec<Question>, MaccmError> {
    if spec.is_empty() && gen.is_empty() {
        return Err(MaccmError::BothEmpty);
    }
    let mut out: Vec<Question> = Vec::with_capacity(spec.len() + gen.len());
    for q in spec.iter().chain(gen) {
        if !out.iter().any(|o| o.text.trim() == q.text.trim()) {
            out.push(q.clone());
        }
    }
    Ok(out)
}
