use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::patient::{chief_complaint_for, PatientMode, SimulatedPatient};
use super::EvalError;
use crate::domain::{CaseRecord, MedicalRecord};
use crate::maccm::{Aborted, Consultant, ConsultationOutcome, MaccmError, Transcript, TranscriptEvent};

/// One full consultation with the case's simulated patient answering.
pub fn run_simulated_consultation(
    case: &CaseRecord,
    consultant: &Consultant<'_>,
    mode: &PatientMode,
) -> Result<ConsultationOutcome, Aborted> {
    let complaint = chief_complaint_for(case).map_err(|e| {
        let error = MaccmError::from(e);
        let mut transcript = Transcript::default();
        transcript.push(TranscriptEvent::Aborted { stage: "complaint".into(), error: error.to_string() });
        Aborted { error, transcript }
    })?;
    let patient = SimulatedPatient::new(case.clone(), mode.clone());
    consultant.run(complaint, &patient)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStatus {
    Completed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRun {
    pub case_id: String,
    pub status: CaseStatus,
    pub rounds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<MedicalRecord>,
    #[serde(skip)]
    pub transcript: Transcript,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub completed: usize,
    pub aborted: usize,
    pub cases: Vec<CaseRun>,
}

impl BatchReport {
    pub fn get(&self, case_id: &str) -> Option<&CaseRun> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }

    /// `report.json` plus one transcript file per case.
    pub fn write(&self, dir: &Path) -> Result<(), EvalError> {
        fs::create_dir_all(dir.join("transcripts"))?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(self).expect("report serializes") + "\n")?;
        for case in &self.cases {
            case.transcript.write(&dir.join("transcripts").join(format!("{}.jsonl", case.case_id)))?;
        }
        Ok(())
    }
}

fn run_one(case: &CaseRecord, consultant: &Consultant<'_>, mode: &PatientMode) -> CaseRun {
    match run_simulated_consultation(case, consultant, mode) {
        Ok(outcome) => CaseRun {
            case_id: case.id.clone(),
            status: CaseStatus::Completed,
            rounds: outcome.rounds,
            error: None,
            record: Some(outcome.record),
            transcript: outcome.transcript,
        },
        Err(aborted) => CaseRun {
            case_id: case.id.clone(),
            status: CaseStatus::Aborted,
            rounds: aborted.transcript.rounds(),
            error: Some(aborted.error.to_string()),
            record: None,
            transcript: aborted.transcript,
        },
    }
}

/// Runs every case, up to `parallelism` at a time. A failing case is
/// recorded as aborted and does not affect the others. Results are ordered
/// by case id.
pub fn run_batch(
    cases: &[CaseRecord],
    consultant: &Consultant<'_>,
    mode: &PatientMode,
    parallelism: usize,
) -> BatchReport {
    let width = parallelism.max(1);
    let mut runs = Vec::with_capacity(cases.len());
    for chunk in cases.chunks(width) {
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|c| s.spawn(move || run_one(c, consultant, mode))).collect();
            runs.extend(handles.into_iter().map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p))));
        });
    }
    runs.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    let completed = runs.iter().filter(|r| r.status == CaseStatus::Completed).count();
    BatchReport { completed, aborted: runs.len() - completed, cases: runs }
}
