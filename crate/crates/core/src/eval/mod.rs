//! Offline evaluation: simulated patients, text similarity, pairwise
//! judging, bootstrap intervals, batch runs and the two ablations.

mod ablation;
mod batch;
mod bootstrap;
mod confounder;
mod judge;
mod patient;
mod text;

pub use ablation::{
    ablate_dsrs, ablate_general_agent, record_from_case, tqs_categories, ArmSummary, DsrsAblationCase,
    DsrsAblationReport, GeneralAblationCase, GeneralAblationReport, PredictionSource, SelectionCounts,
};
pub use batch::{run_batch, run_simulated_consultation, BatchReport, CaseRun, CaseStatus};
pub use bootstrap::{bootstrap_means, confidence_interval, quantile_sorted, ConfidenceInterval, BOOTSTRAP_RESAMPLES};
pub use confounder::{confounder_ablation, confounder_corpus, CONFOUNDER_CASES_PER_GROUP};
pub use judge::{pairwise_judge, Dimension, PairwiseOutcome, Verdict, WinTieLoss};
pub use patient::{
    chief_complaint_for, narrative_clauses, simulate_patient_answer, PatientMode, SimulatedPatient,
    DEFAULT_EXTRACTIVE_THRESHOLD,
};
pub use text::{bleu1, similarity_stats, SimilarityReport};

use crate::domain::DomainError;
use crate::dsrs::DsrsError;
use crate::gateway::GatewayError;
use crate::syndrome::SyndromeError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("reference text has no tokens")]
    EmptyReference,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("confidence level must be in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("judge reply could not be parsed: {0:?}")]
    UnparseableVerdict(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Dsrs(#[from] DsrsError),
    #[error(transparent)]
    Syndrome(#[from] SyndromeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
