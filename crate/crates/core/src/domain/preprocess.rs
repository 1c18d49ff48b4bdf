//! LLM-driven extraction of TQS-keyed findings from raw case narratives.
//!
//! The model is asked to keep only patient-reported findings; a post-filter
//! then drops any clause that mentions an instrumental or administrative term
//! from the configured blocklist, so the guarantee does not rest on the model.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use regex::Regex;

use super::{CaseRecord, DomainError, TqsConfig};
use crate::gateway::{ChatBackend, ChatExchange, GatewayError};
use crate::prompts;

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("gateway failure: {0}")]
    GatewayFailure(#[from] GatewayError),
    #[error("no TQS-mappable content extracted from case {0}")]
    ExtractionEmpty(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

pub const DEFAULT_BLOCKLIST: &[&str] =
    &["CT", "MRI", "ultrasound", "admission number", "X-ray", "amylase", "integrated treatment"];

/// Terms whose presence removes a clause from extracted findings.
#[derive(Debug, Clone)]
pub struct Blocklist {
    terms: Vec<String>,
    patterns: Vec<Regex>,
}

impl Default for Blocklist {
    fn default() -> Self {
        Self::new(DEFAULT_BLOCKLIST.iter().map(|s| s.to_string()))
    }
}

impl Blocklist {
    pub fn new<I: IntoIterator<Item = String>>(terms: I) -> Self {
        let terms: Vec<String> = terms.into_iter().map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect();
        let patterns = terms.iter().map(|t| term_pattern(t)).collect();
        Self { terms, patterns }
    }

    /// One term per line; `#` starts a comment.
    pub fn load(path: &Path) -> Result<Self, DomainError> {
        let raw = fs::read_to_string(path)?;
        Ok(Self::new(
            raw.lines().map(|l| l.split('#').next().unwrap_or("").to_string()).filter(|l| !l.trim().is_empty()),
        ))
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn matches(&self, text: &str) -> bool {
        self.patterns.iter().any(|p| p.is_match(text))
    }

    /// Removes every clause that mentions a blocked term.
    pub fn scrub(&self, text: &str) -> String {
        split_clauses(text).into_iter().filter(|c| !self.matches(c)).collect::<Vec<_>>().join("; ")
    }
}

// ASCII terms need word boundaries so "CT" does not hit "doctor".
fn term_pattern(term: &str) -> Regex {
    let escaped = regex::escape(term);
    let starts_word = term.chars().next().is_some_and(|c| c.is_ascii_alphanumeric());
    let ends_word = term.chars().last().is_some_and(|c| c.is_ascii_alphanumeric());
    let pattern =
        format!("(?i){}{}{}", if starts_word { r"\b" } else { "" }, escaped, if ends_word { r"\b" } else { "" });
    Regex::new(&pattern).expect("escaped blocklist term is a valid pattern")
}

fn split_clauses(text: &str) -> Vec<&str> {
    text.split([';', '；', '.', '。', ',', '，', '\n']).map(str::trim).filter(|c| !c.is_empty()).collect()
}

pub fn preprocess_case_record(
    raw: &CaseRecord,
    gateway: &dyn ChatBackend,
    tqs: &TqsConfig,
    blocklist: &Blocklist,
) -> Result<CaseRecord, PreprocessError> {
    raw.validate(None)?;
    let exchange =
        ChatExchange::new(prompts::preprocess_system(tqs, blocklist.terms()), prompts::preprocess_user(&raw.narrative));
    let response = gateway.chat(exchange)?.response_text().to_string();

    let mut extract = BTreeMap::new();
    for (key, value) in prompts::parse_keyed(&response) {
        let Some(name) = tqs.resolve(&key) else { continue };
        let cleaned = blocklist.scrub(&value);
        if cleaned.is_empty() {
            continue;
        }
        extract
            .entry(name.to_string())
            .and_modify(|v: &mut String| {
                v.push_str("; ");
                v.push_str(&cleaned);
            })
            .or_insert(cleaned);
    }
    if extract.is_empty() {
        return Err(PreprocessError::ExtractionEmpty(raw.id.clone()));
    }
    Ok(CaseRecord { tqs_extract: Some(extract), ..raw.clone() })
}
