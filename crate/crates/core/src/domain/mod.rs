//! Shared domain types, the prescription knowledge base, TQS configuration
//! and case-record preprocessing.

mod preprocess;
mod prescription;
mod tqs;
mod types;

pub use preprocess::{preprocess_case_record, Blocklist, PreprocessError, DEFAULT_BLOCKLIST};
pub use prescription::{
    load_cases, load_prescription_db, parse_cases, parse_prescription_db, write_cases, write_prescription_db,
    PrescriptionEntry,
};
pub use tqs::{tqs_items, TqsConfig, TqsItem, TQS_LEN};
pub use types::{AgentRole, CaseRecord, ChiefComplaint, ConsultationState, ConsultationTurn, MedicalRecord, Question};

#[derive(Debug, thiserror::Error)]
pub enum DomainError {
    #[error("malformed record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate id {id:?} on line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("bad TQS file: {0}")]
    BadTqsFile(String),
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}
