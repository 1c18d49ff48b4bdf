use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::batch::{run_batch, BatchReport, CaseStatus};
use super::judge::{pairwise_judge, Dimension, Verdict};
use super::patient::PatientMode;
use super::EvalError;
use crate::domain::{AgentRole, CaseRecord, MedicalRecord, PrescriptionEntry, TqsConfig};
use crate::dsrs::{query_text, DsrsConfig, Retriever};
use crate::gateway::{cosine, ChatBackend, Embedder};
use crate::maccm::{Consultant, SessionConfig};
use crate::syndrome::{SyndromeClassifier, SyndromePrediction};

/// TQS categories a set of questions touches: each question counts toward
/// the category whose canonical question it is most similar to (earlier
/// category on ties), provided the similarity is positive.
pub fn tqs_categories(
    questions: &[String],
    tqs: &TqsConfig,
    embedder: &dyn Embedder,
) -> Result<BTreeSet<String>, EvalError> {
    let items = tqs.items();
    let mut canon = Vec::with_capacity(items.len());
    for item in items {
        canon.push(embedder.embed_one(&item.canonical_text)?);
    }
    let mut out = BTreeSet::new();
    for q in questions {
        let v = embedder.embed_one(q)?;
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in canon.iter().enumerate() {
            let sim = cosine(&v, c)?;
            if sim > best.map_or(0.0, |b| b.1) {
                best = Some((i, sim));
            }
        }
        if let Some((i, _)) = best {
            out.insert(items[i].name.clone());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub completed: usize,
    pub aborted: usize,
    pub mean_rounds: f64,
    pub mean_tqs_categories: f64,
    /// Questions from the general agent across all merged sets.
    pub general_questions_merged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralAblationCase {
    pub case_id: String,
    pub full_rounds: usize,
    pub without_general_rounds: usize,
    pub full_categories: Vec<String>,
    pub without_general_categories: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionCounts {
    pub full: usize,
    pub without_general: usize,
    pub tie: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralAblationReport {
    pub cases: usize,
    pub full: ArmSummary,
    pub without_general: ArmSummary,
    /// Judge preferences between the two final records, when a judge is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionCounts>,
    pub per_case: Vec<GeneralAblationCase>,
}

fn summarize_arm(
    batch: &BatchReport,
    tqs: &TqsConfig,
    embedder: &dyn Embedder,
) -> Result<(ArmSummary, BTreeMap<String, BTreeSet<String>>), EvalError> {
    let mut categories = BTreeMap::new();
    let mut general = 0;
    let mut rounds = 0;
    let mut cat_total = 0;
    for run in batch.cases.iter().filter(|c| c.status == CaseStatus::Completed) {
        let cats = tqs_categories(&run.transcript.asked_questions(), tqs, embedder)?;
        cat_total += cats.len();
        rounds += run.rounds;
        general += run.transcript.merged_sets().flatten().filter(|q| q.kind == AgentRole::General).count();
        categories.insert(run.case_id.clone(), cats);
    }
    let n = batch.completed.max(1) as f64;
    Ok((
        ArmSummary {
            completed: batch.completed,
            aborted: batch.aborted,
            mean_rounds: rounds as f64 / n,
            mean_tqs_categories: cat_total as f64 / n,
            general_questions_merged: general,
        },
        categories,
    ))
}

/// Runs every case with the full team and again without the general agent.
pub fn ablate_general_agent(
    cases: &[CaseRecord],
    consultant: &Consultant<'_>,
    mode: &PatientMode,
    judge: Option<&dyn ChatBackend>,
    parallelism: usize,
) -> Result<GeneralAblationReport, EvalError> {
    let reduced = SessionConfig { include_general: false, ..consultant.config.clone() };
    let without = Consultant { config: &reduced, ..*consultant };
    let full_batch = run_batch(cases, consultant, mode, parallelism);
    let reduced_batch = run_batch(cases, &without, mode, parallelism);

    let (full, full_cats) = summarize_arm(&full_batch, consultant.tqs, consultant.embedder)?;
    let (without_general, reduced_cats) = summarize_arm(&reduced_batch, consultant.tqs, consultant.embedder)?;

    let mut per_case = Vec::new();
    let mut selection = judge.map(|_| SelectionCounts::default());
    for run in &full_batch.cases {
        let (Some(other), Some(a)) = (reduced_batch.get(&run.case_id), full_cats.get(&run.case_id)) else {
            continue;
        };
        let Some(b) = reduced_cats.get(&run.case_id) else { continue };
        per_case.push(GeneralAblationCase {
            case_id: run.case_id.clone(),
            full_rounds: run.rounds,
            without_general_rounds: other.rounds,
            full_categories: a.iter().cloned().collect(),
            without_general_categories: b.iter().cloned().collect(),
        });
        if let (Some(judge), Some(counts), Some(ra), Some(rb)) = (judge, selection.as_mut(), &run.record, &other.record)
        {
            let outcome = pairwise_judge(
                &run.case_id,
                &ra.to_text(consultant.tqs),
                &rb.to_text(consultant.tqs),
                Dimension::Overall,
                judge,
            )?;
            match outcome.verdict {
                Verdict::Win => counts.full += 1,
                Verdict::Loss => counts.without_general += 1,
                Verdict::Tie => counts.tie += 1,
            }
        }
    }
    Ok(GeneralAblationReport { cases: cases.len(), full, without_general, selection, per_case })
}

/// Where the syndrome label for retrieval comes from.
#[derive(Clone, Copy)]
pub enum PredictionSource<'a> {
    /// The case's gold syndrome, isolating retrieval from classification.
    Gold,
    Classifier(&'a dyn SyndromeClassifier),
}

/// Finalized record built from a case's TQS extract, or its narrative.
pub fn record_from_case(case: &CaseRecord, tqs: &TqsConfig) -> Result<MedicalRecord, EvalError> {
    let mut sections = BTreeMap::new();
    for (key, value) in case.tqs_extract.iter().flatten() {
        if let Some(name) = tqs.resolve(key) {
            sections.insert(name.to_string(), value.clone());
        }
    }
    Ok(MedicalRecord::new(sections, case.narrative.clone(), 0, tqs)?.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsrsAblationCase {
    pub case_id: String,
    pub gold_formula: String,
    pub dsrs_top: Vec<String>,
    pub single_stage_top: Vec<String>,
    pub dsrs_hit: bool,
    pub single_stage_hit: bool,
    /// Cosine between the top entry and the gold formula's entry.
    pub dsrs_similarity: Option<f64>,
    pub single_stage_similarity: Option<f64>,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsrsAblationReport {
    pub evaluated: usize,
    pub skipped_missing_gold: usize,
    pub dsrs_hit_rate: f64,
    pub single_stage_hit_rate: f64,
    /// Cases where the top dense similarity favours DSRS, the baseline, or neither.
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    pub per_case: Vec<DsrsAblationCase>,
}

impl DsrsAblationReport {
    pub fn write(&self, path: &Path) -> Result<(), EvalError> {
        std::fs::write(path, serde_json::to_string_pretty(self).expect("report serializes") + "\n")?;
        Ok(())
    }
}

fn same_formula(a: &str, b: &str) -> bool {
    a.trim().eq_ignore_ascii_case(b.trim())
}

fn similarity_to_gold(
    top: Option<&str>,
    gold: Option<&PrescriptionEntry>,
    by_id: &BTreeMap<&str, &PrescriptionEntry>,
    embedder: &dyn Embedder,
) -> Result<Option<f64>, EvalError> {
    let (Some(top), Some(gold)) = (top.and_then(|id| by_id.get(id)), gold) else {
        return Ok(None);
    };
    Ok(Some(cosine(&embedder.embed_one(&top.retrieval_text())?, &embedder.embed_one(&gold.retrieval_text())?)?))
}

/// DSRS Top-k against single-stage dense Top-k on cases with a gold formula.
pub fn ablate_dsrs(
    cases: &[CaseRecord],
    retriever: &Retriever,
    gateway: &dyn ChatBackend,
    tqs: &TqsConfig,
    config: &DsrsConfig,
    prediction: PredictionSource<'_>,
) -> Result<DsrsAblationReport, EvalError> {
    let db = retriever.db();
    let by_id: BTreeMap<&str, &PrescriptionEntry> = db.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut per_case = Vec::new();
    let mut skipped = 0;

    for case in cases {
        let Some(gold_formula) = case.gold_formula.clone() else {
            skipped += 1;
            continue;
        };
        let record = record_from_case(case, tqs)?;
        let predicted = match prediction {
            PredictionSource::Gold => match &case.gold_syndrome {
                Some(label) => SyndromePrediction {
                    label: label.clone(),
                    confidence: 1.0,
                    rationale: "gold label".into(),
                    classifier_id: "gold".into(),
                    out_of_vocabulary: false,
                },
                None => {
                    skipped += 1;
                    continue;
                }
            },
            PredictionSource::Classifier(c) => c.classify(&record.to_text(tqs), gateway)?,
        };
        let rec = retriever.recommend(&record, &predicted, gateway, tqs, config)?;
        let single = retriever.single_stage(&query_text(&record, tqs), config.top)?;

        let dsrs_top: Vec<String> = rec.prescriptions.iter().map(|p| p.entry_id.clone()).collect();
        let single_top: Vec<String> = single.iter().map(|h| h.id.clone()).collect();
        let hit = |ids: &[String]| {
            ids.iter().any(|id| same_formula(&by_id[id.as_str()].representative_formula, &gold_formula))
        };
        let gold_entry = db.iter().find(|e| same_formula(&e.representative_formula, &gold_formula));
        let embedder = retriever.embedder();
        per_case.push(DsrsAblationCase {
            case_id: case.id.clone(),
            dsrs_hit: hit(&dsrs_top),
            single_stage_hit: hit(&single_top),
            dsrs_similarity: similarity_to_gold(dsrs_top.first().map(String::as_str), gold_entry, &by_id, embedder)?,
            single_stage_similarity: similarity_to_gold(
                single_top.first().map(String::as_str),
                gold_entry,
                &by_id,
                embedder,
            )?,
            gold_formula,
            dsrs_top,
            single_stage_top: single_top,
            fallback: rec.fallback,
        });
    }

    let n = per_case.len();
    let rate = |f: fn(&DsrsAblationCase) -> bool| {
        if n == 0 {
            0.0
        } else {
            per_case.iter().filter(|c| f(c)).count() as f64 / n as f64
        }
    };
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for c in &per_case {
        match (c.dsrs_similarity, c.single_stage_similarity) {
            (Some(a), Some(b)) if a > b => wins += 1,
            (Some(a), Some(b)) if a < b => losses += 1,
            _ => ties += 1,
        }
    }
    Ok(DsrsAblationReport {
        evaluated: n,
        skipped_missing_gold: skipped,
        dsrs_hit_rate: rate(|c| c.dsrs_hit),
        single_stage_hit_rate: rate(|c| c.single_stage_hit),
        wins,
        losses,
        ties,
        per_case,
    })
}
