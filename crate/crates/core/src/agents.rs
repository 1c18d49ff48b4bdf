//! The agent group, patient-based specialist selection and team formation.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{AgentRole, ChiefComplaint};
use crate::gateway::{fnv1a64, ChatBackend, ChatExchange, GatewayError};
use crate::prompts;

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("invalid agent profile {id}: {reason}")]
    InvalidProfile { id: String, reason: String },
    #[error("registry has no specialists")]
    NoSpecialists,
    #[error("registry has no general agent")]
    NoGeneralAgent,
    #[error("no specialist matched and fallback specialty {0:?} is not registered")]
    NoSpecialistMatched(String),
    #[error("team already formed for this session")]
    TeamAlreadyFormed,
    #[error("general member must have the general role")]
    GeneralRoleMissing,
    #[error("team needs at least one specialist")]
    EmptySelection,
    #[error("duplicate specialist {0} in team")]
    DuplicateMember(String),
    #[error("gateway failure: {0}")]
    Gateway(#[from] GatewayError),
    #[error("cannot read agent config: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad agent config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub id: String,
    pub name: String,
    pub role: AgentRole,
    pub specialty: String,
    #[serde(default)]
    pub knowledge_pack: String,
    #[serde(default)]
    pub core_questions: Vec<String>,
}

impl AgentProfile {
    pub fn validate(&self) -> Result<(), AgentError> {
        let invalid = |reason: &str| AgentError::InvalidProfile { id: self.id.clone(), reason: reason.into() };
        if self.id.trim().is_empty() {
            return Err(invalid("empty id"));
        }
        match self.role {
            AgentRole::General if self.specialty != "general" => {
                Err(invalid("general agent must have specialty \"general\""))
            }
            AgentRole::Specialist if self.core_questions.is_empty() => {
                Err(invalid("specialist needs at least one core question"))
            }
            _ => Ok(()),
        }
    }
}

/// Profile as written in the config file; the knowledge pack may live in a
/// separate file, resolved relative to the config.
#[derive(Deserialize)]
struct ProfileRecord {
    #[serde(flatten)]
    profile: AgentProfile,
    #[serde(default)]
    knowledge_file: Option<PathBuf>,
}

/// The agent group: every specialist plus the general agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgentRegistry {
    profiles: Vec<AgentProfile>,
}

impl AgentRegistry {
    pub fn new(profiles: Vec<AgentProfile>) -> Result<Self, AgentError> {
        let mut ids = HashSet::new();
        for p in &profiles {
            p.validate()?;
            if !ids.insert(p.id.clone()) {
                return Err(AgentError::Config(format!("duplicate agent id {}", p.id)));
            }
        }
        let registry = Self { profiles };
        if registry.specialists().next().is_none() {
            return Err(AgentError::NoSpecialists);
        }
        if registry.general().is_none() {
            return Err(AgentError::NoGeneralAgent);
        }
        Ok(registry)
    }

    /// JSON array of profiles.
    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let raw = fs::read_to_string(path)?;
        let records: Vec<ProfileRecord> = serde_json::from_str(&raw).map_err(|e| AgentError::Config(e.to_string()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let profiles = records
            .into_iter()
            .map(|r| {
                let mut profile = r.profile;
                if let Some(file) = r.knowledge_file {
                    profile.knowledge_pack = fs::read_to_string(base.join(file))?;
                }
                Ok(profile)
            })
            .collect::<Result<Vec<_>, AgentError>>()?;
        Self::new(profiles)
    }

    pub fn profiles(&self) -> &[AgentProfile] {
        &self.profiles
    }

    pub fn specialists(&self) -> impl Iterator<Item = &AgentProfile> {
        self.profiles.iter().filter(|p| p.role == AgentRole::Specialist)
    }

    pub fn general(&self) -> Option<&AgentProfile> {
        self.profiles.iter().find(|p| p.role == AgentRole::General)
    }

    pub fn by_specialty(&self, name: &str) -> Option<&AgentProfile> {
        let wanted = fold(name);
        self.specialists().find(|p| fold(&p.specialty) == wanted || fold(&p.id) == wanted)
    }
}

impl Default for AgentRegistry {
    fn default() -> Self {
        let spec = |id: &str, name: &str, knowledge: &str, core: &[&str]| AgentProfile {
            id: id.into(),
            name: name.into(),
            role: AgentRole::Specialist,
            specialty: id.into(),
            knowledge_pack: knowledge.into(),
            core_questions: core.iter().map(|s| s.to_string()).collect(),
        };
        let profiles = vec![
            spec(
                "internal_medicine",
                "TCM Internal Medicine Agent",
                "Zang-fu disorders, qi and blood, damp-heat and phlegm patterns of adults.",
                &[
                    "How are your stool and urine, any burning or urgency?",
                    "Do you have bitter taste in the mouth or a heavy body?",
                    "How is your sleep and your energy during the day?",
                ],
            ),
            spec(
                "surgery",
                "TCM Surgery Agent",
                "Sores, swellings, skin lesions and external injuries.",
                &[
                    "Where is the swelling or sore, is it red, hot or painful?",
                    "Is there any discharge or pus, and what does it look like?",
                ],
            ),
            spec(
                "gynecology",
                "TCM Gynecology Agent",
                "Menstruation, leukorrhea, pregnancy and postpartum conditions.",
                &[
                    "How is your menstrual cycle, its color, amount and timing?",
                    "Do you have abnormal vaginal discharge and what color is it?",
                ],
            ),
            spec(
                "pediatrics",
                "TCM Pediatrics Agent",
                "Children's spleen and kidney insufficiency, feeding disorders and diarrhea.",
                &[
                    "How is the child's appetite and stool, is there undigested food?",
                    "Are the child's hands and feet cold, and is the child easily tired?",
                    "When did the diarrhea start and how many times a day?",
                ],
            ),
            AgentProfile {
                id: "general".into(),
                name: "TCM General Agent".into(),
                role: AgentRole::General,
                specialty: "general".into(),
                knowledge_pack: "Fundamental TCM theory: yin-yang, five phases, eight principles, the ten questions."
                    .into(),
                core_questions: vec![],
            },
        ];
        Self::new(profiles).expect("built-in registry is valid")
    }
}

fn fold(s: &str) -> String {
    s.trim().to_lowercase().replace([' ', '-'], "_")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub max_specialists: usize,
    pub fallback_specialty: String,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { max_specialists: 2, fallback_specialty: "internal_medicine".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub specialists: Vec<AgentProfile>,
    /// Raw manager reply, kept for audit.
    pub justification: String,
    /// Set when the reply named no registered specialist and the fallback was used.
    pub warning: Option<String>,
}

pub fn select_specialists(
    complaint: &ChiefComplaint,
    registry: &AgentRegistry,
    gateway: &dyn ChatBackend,
    config: &SelectionConfig,
) -> Result<Selection, AgentError> {
    let max = config.max_specialists.max(1);
    let names: Vec<&str> = registry.specialists().map(|p| p.specialty.as_str()).collect();
    let reply = gateway
        .chat(ChatExchange::new(prompts::select_system(max), prompts::select_user(&complaint.text, &names)))?
        .response_text()
        .to_string();

    let mut chosen: Vec<AgentProfile> = Vec::new();
    for line in reply.lines() {
        let line = line.trim();
        if line.to_ascii_lowercase().starts_with("reason") {
            continue;
        }
        for part in line.split([',', ';', '、', '，']) {
            let part = part.trim().trim_start_matches(['-', '*']).trim();
            if let Some(p) = registry.by_specialty(part) {
                if chosen.len() < max && !chosen.iter().any(|c| c.id == p.id) {
                    chosen.push(p.clone());
                }
            }
        }
    }

    if chosen.is_empty() {
        let fallback = registry
            .by_specialty(&config.fallback_specialty)
            .ok_or_else(|| AgentError::NoSpecialistMatched(config.fallback_specialty.clone()))?;
        log::warn!("no registered specialist in selection reply; falling back to {}", fallback.id);
        return Ok(Selection {
            specialists: vec![fallback.clone()],
            justification: reply,
            warning: Some(format!("no specialist matched; fell back to {}", fallback.id)),
        });
    }
    Ok(Selection { specialists: chosen, justification: reply, warning: None })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTeam {
    specialists: Vec<AgentProfile>,
    general: AgentProfile,
    formed_for: String,
}

impl AgentTeam {
    pub fn specialists(&self) -> &[AgentProfile] {
        &self.specialists
    }

    pub fn general(&self) -> &AgentProfile {
        &self.general
    }

    pub fn formed_for(&self) -> &str {
        &self.formed_for
    }

    /// Members in team order: specialists first, then the general agent.
    pub fn members(&self) -> impl Iterator<Item = &AgentProfile> {
        self.specialists.iter().chain(std::iter::once(&self.general))
    }

    pub fn len(&self) -> usize {
        self.specialists.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Union of specialist core questions, in team order.
    pub fn core_questions(&self) -> Vec<String> {
        self.specialists.iter().flat_map(|s| s.core_questions.iter().cloned()).collect()
    }

    pub fn digest(&self) -> String {
        let mut key = self.formed_for.clone();
        for m in self.members() {
            key.push('|');
            key.push_str(&m.id);
        }
        format!("{:016x}", fnv1a64(key.as_bytes()))
    }
}

/// Per-session holder that lets a team be formed exactly once.
#[derive(Debug, Default, Clone)]
pub struct TeamSlot(Option<AgentTeam>);

impl TeamSlot {
    pub fn new() -> Self {
        Self(None)
    }

    pub fn get(&self) -> Option<&AgentTeam> {
        self.0.as_ref()
    }

    pub fn form(
        &mut self,
        selected: &[AgentProfile],
        general: &AgentProfile,
        complaint: &ChiefComplaint,
    ) -> Result<&AgentTeam, AgentError> {
        if self.0.is_some() {
            return Err(AgentError::TeamAlreadyFormed);
        }
        let team = form_team(selected, general, complaint)?;
        Ok(self.0.insert(team))
    }
}

pub fn form_team(
    selected: &[AgentProfile],
    general: &AgentProfile,
    complaint: &ChiefComplaint,
) -> Result<AgentTeam, AgentError> {
    if general.role != AgentRole::General {
        return Err(AgentError::GeneralRoleMissing);
    }
    if selected.is_empty() {
        return Err(AgentError::EmptySelection);
    }
    let mut seen = HashSet::new();
    for s in selected {
        if s.role != AgentRole::Specialist {
            return Err(AgentError::InvalidProfile { id: s.id.clone(), reason: "not a specialist".into() });
        }
        if !seen.insert(s.id.as_str()) {
            return Err(AgentError::DuplicateMember(s.id.clone()));
        }
    }
    Ok(AgentTeam { specialists: selected.to_vec(), general: general.clone(), formed_for: complaint.digest() })
}
