//! Ten Questions Song categories.
//!
//! The ten categories serve two purposes: they are the reference items for
//! comprehensiveness scoring of candidate questions, and they are the section
//! keys of every [`MedicalRecord`](super::MedicalRecord).

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DomainError;

pub const TQS_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TqsItem {
    pub name: String,
    pub canonical_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TqsFile", into = "TqsFile")]
pub struct TqsConfig {
    items: Vec<TqsItem>,
}

#[derive(Serialize, Deserialize)]
struct TqsFile {
    items: Vec<TqsItem>,
}

impl TryFrom<TqsFile> for TqsConfig {
    type Error = DomainError;

    fn try_from(file: TqsFile) -> Result<Self, Self::Error> {
        TqsConfig::new(file.items)
    }
}

impl From<TqsConfig> for TqsFile {
    fn from(cfg: TqsConfig) -> Self {
        TqsFile { items: cfg.items }
    }
}

const DEFAULT_ITEMS: [(&str, &str); TQS_LEN] = [
    ("chills_fever", "Do you feel cold or feverish, and do chills and fever alternate?"),
    ("sweating", "Do you sweat, when do you sweat, and do you have night sweats?"),
    ("head_body", "Do you have headache, dizziness or aching in the head and body?"),
    ("excretion", "How are your stool and urine, their color, frequency and consistency?"),
    ("diet", "How is your appetite and diet, and what tastes do you prefer?"),
    ("chest_abdomen", "Do you have fullness, pain or discomfort in the chest or abdomen?"),
    ("hearing", "Do you have ringing in the ears or reduced hearing?"),
    ("thirst", "Are you thirsty, and do you prefer warm or cold drinks?"),
    ("past_history", "What illnesses have you had before and what treatment did you receive?"),
    ("cause", "What do you think caused this illness and how did it begin?"),
];

impl Default for TqsConfig {
    fn default() -> Self {
        let items = DEFAULT_ITEMS
            .iter()
            .map(|(name, text)| TqsItem { name: (*name).into(), canonical_text: (*text).into() })
            .collect();
        Self { items }
    }
}

impl TqsConfig {
    pub fn new(items: Vec<TqsItem>) -> Result<Self, DomainError> {
        if items.len() != TQS_LEN {
            return Err(DomainError::BadTqsFile(format!("expected {TQS_LEN} items, found {}", items.len())));
        }
        let mut seen = HashSet::new();
        for item in &items {
            if item.name.trim().is_empty() {
                return Err(DomainError::BadTqsFile("item with empty name".into()));
            }
            if !seen.insert(item.name.as_str()) {
                return Err(DomainError::BadTqsFile(format!("duplicate item name {:?}", item.name)));
            }
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[TqsItem] {
        &self.items
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|i| i.name.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.items.iter().any(|i| i.name == name)
    }

    /// Case- and separator-insensitive lookup ("Chest Abdomen" finds `chest_abdomen`).
    pub fn resolve(&self, key: &str) -> Option<&str> {
        let wanted = normalize_key(key);
        self.items.iter().find(|i| normalize_key(&i.name) == wanted).map(|i| i.name.as_str())
    }

    pub fn canonical_texts(&self) -> Vec<String> {
        self.items.iter().map(|i| i.canonical_text.clone()).collect()
    }
}

fn normalize_key(key: &str) -> String {
    key.trim().chars().map(|c| if c == ' ' || c == '-' || c == '/' { '_' } else { c.to_ascii_lowercase() }).collect()
}

/// Loads the categories from `path`, or returns the built-in default.
pub fn tqs_items(path: Option<&Path>) -> Result<TqsConfig, DomainError> {
    match path {
        None => Ok(TqsConfig::default()),
        Some(path) => {
            let raw = fs::read_to_string(path)?;
            serde_json::from_str::<TqsConfig>(&raw).map_err(|e| DomainError::BadTqsFile(e.to_string()))
        }
    }
}
