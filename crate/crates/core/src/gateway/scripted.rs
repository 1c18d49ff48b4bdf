use std::fs;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ChatBackend, GatewayError};

/// How a scripted entry is matched against `system + "\n" + user`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    Contains(String),
    AllOf(Vec<String>),
    Regex(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedEntry {
    pub when: Matcher,
    pub response: String,
}

impl ScriptedEntry {
    pub fn new(when: Matcher, response: impl Into<String>) -> Self {
        Self { when, response: response.into() }
    }

    pub fn contains(needle: impl Into<String>, response: impl Into<String>) -> Self {
        Self::new(Matcher::Contains(needle.into()), response)
    }

    pub fn all_of<I, S>(needles: I, response: impl Into<String>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(Matcher::AllOf(needles.into_iter().map(Into::into).collect()), response)
    }
}

/// On-disk form of a scripted backend.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedBackendSpec {
    #[serde(default)]
    pub entries: Vec<ScriptedEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
    #[serde(default = "default_embedding_mode")]
    pub embedding_mode: String,
}

fn default_embedding_mode() -> String {
    "hashed-bigram".into()
}

impl ScriptedBackendSpec {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let raw = fs::read_to_string(path)?;
        serde_json::from_str(&raw).map_err(|e| GatewayError::InvalidSpec(e.to_string()))
    }
}

enum Compiled {
    Contains(String),
    AllOf(Vec<String>),
    Regex(Regex),
}

impl Compiled {
    fn is_match(&self, haystack: &str) -> bool {
        match self {
            Compiled::Contains(s) => haystack.contains(s.as_str()),
            Compiled::AllOf(all) => all.iter().all(|s| haystack.contains(s.as_str())),
            Compiled::Regex(r) => r.is_match(haystack),
        }
    }
}

/// Deterministic chat backend: the first entry whose matcher accepts the
/// prompt wins, otherwise the default response, otherwise `NoScriptMatch`.
/// Holds no mutable state, so equal prompts always give equal responses.
pub struct ScriptedBackend {
    entries: Vec<(Compiled, String)>,
    default: Option<String>,
    id: String,
}

impl std::fmt::Debug for ScriptedBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScriptedBackend").field("entries", &self.entries.len()).finish()
    }
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptedEntry>, default: Option<String>) -> Result<Self, GatewayError> {
        Self::from_spec(ScriptedBackendSpec { entries, default, embedding_mode: default_embedding_mode() })
    }

    pub fn from_spec(spec: ScriptedBackendSpec) -> Result<Self, GatewayError> {
        if spec.entries.is_empty() && spec.default.is_none() {
            return Err(GatewayError::InvalidSpec("needs at least one entry or a default".into()));
        }
        if spec.embedding_mode != "hashed-bigram" {
            return Err(GatewayError::InvalidSpec(format!("unsupported embedding mode {:?}", spec.embedding_mode)));
        }
        let entries = spec
            .entries
            .into_iter()
            .map(|e| {
                let compiled = match e.when {
                    Matcher::Contains(s) => Compiled::Contains(s),
                    Matcher::AllOf(v) => Compiled::AllOf(v),
                    Matcher::Regex(r) => {
                        Compiled::Regex(Regex::new(&r).map_err(|err| GatewayError::InvalidSpec(err.to_string()))?)
                    }
                };
                Ok((compiled, e.response))
            })
            .collect::<Result<Vec<_>, GatewayError>>()?;
        Ok(Self { entries, default: spec.default, id: "scripted".into() })
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        Self::from_spec(ScriptedBackendSpec::load(path)?)
    }
}

impl ChatBackend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, system: &str, user: &str) -> Result<String, GatewayError> {
        let haystack = format!("{system}\n{user}");
        self.entries
            .iter()
            .find(|(m, _)| m.is_match(&haystack))
            .map(|(_, r)| r.clone())
            .or_else(|| self.default.clone())
            .ok_or_else(|| GatewayError::NoScriptMatch(haystack.chars().take(80).collect()))
    }
}
