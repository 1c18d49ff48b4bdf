//! Prescription knowledge base and case corpora, stored as JSON lines.
//!
//! One JSON object per line. Blank lines are skipped; every other line is
//! either a valid record or an error naming its 1-based line number.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{CaseRecord, DomainError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrescriptionEntry {
    pub id: String,
    #[serde(default)]
    pub disease_category: String,
    pub syndrome_type: String,
    #[serde(default)]
    pub etiology: String,
    #[serde(default)]
    pub affected_organ: String,
    pub clinical_manifestations: String,
    #[serde(default)]
    pub syndrome_mechanism: String,
    #[serde(default)]
    pub treatment_methods: String,
    pub representative_formula: String,
    #[serde(default)]
    pub herbs: Vec<String>,
}

impl PrescriptionEntry {
    pub fn validate(&self) -> Result<(), String> {
        let required = [
            ("id", &self.id),
            ("syndrome_type", &self.syndrome_type),
            ("clinical_manifestations", &self.clinical_manifestations),
            ("representative_formula", &self.representative_formula),
        ];
        for (field, value) in required {
            if value.trim().is_empty() {
                return Err(format!("field `{field}` is empty"));
            }
        }
        Ok(())
    }

    /// Text embedded for dense retrieval and indexed for sparse retrieval.
    pub fn retrieval_text(&self) -> String {
        format!("{} {}", self.syndrome_type.trim(), self.clinical_manifestations.trim())
    }
}

fn parse_lines<T, F>(raw: &str, mut check: F) -> Result<Vec<T>, DomainError>
where
    T: DeserializeOwned,
    F: FnMut(&T, usize) -> Result<(), DomainError>,
{
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(line)
            .map_err(|e| DomainError::MalformedRecord { line: line_no, reason: e.to_string() })?;
        check(&record, line_no)?;
        out.push(record);
    }
    Ok(out)
}

pub fn parse_prescription_db(raw: &str) -> Result<Vec<PrescriptionEntry>, DomainError> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    parse_lines(raw, |entry: &PrescriptionEntry, line| {
        entry.validate().map_err(|reason| DomainError::MalformedRecord { line, reason })?;
        if seen.insert(entry.id.clone(), line).is_some() {
            return Err(DomainError::DuplicateId { id: entry.id.clone(), line });
        }
        Ok(())
    })
}

pub fn load_prescription_db(path: &Path) -> Result<Vec<PrescriptionEntry>, DomainError> {
    parse_prescription_db(&fs::read_to_string(path)?)
}

pub fn write_prescription_db(path: &Path, entries: &[PrescriptionEntry]) -> Result<(), DomainError> {
    write_lines(path, entries)
}

pub fn parse_cases(raw: &str) -> Result<Vec<CaseRecord>, DomainError> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    parse_lines(raw, |case: &CaseRecord, line| {
        case.validate(None).map_err(|e| DomainError::MalformedRecord { line, reason: e.to_string() })?;
        if seen.insert(case.id.clone(), line).is_some() {
            return Err(DomainError::DuplicateId { id: case.id.clone(), line });
        }
        Ok(())
    })
}

pub fn load_cases(path: &Path) -> Result<Vec<CaseRecord>, DomainError> {
    parse_cases(&fs::read_to_string(path)?)
}

pub fn write_cases(path: &Path, cases: &[CaseRecord]) -> Result<(), DomainError> {
    write_lines(path, cases)
}

fn write_lines<T: Serialize>(path: &Path, records: &[T]) -> Result<(), DomainError> {
    let mut file = fs::File::create(path)?;
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| DomainError::Invalid(e.to_string()))?;
        writeln!(file, "{line}")?;
    }
    Ok(())
}
