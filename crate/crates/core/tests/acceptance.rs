//! Acceptance checks. Each criterion prints one `PASS`/`FAIL` line with its
//! measured detail; the binary exits non-zero if any criterion fails.
//!
//! Oracles here are written independently of the library: brute-force
//! maxima, direct sums, closed-form scores and exhaustive distance rankings.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use jingfang::agents::AgentRegistry;
use jingfang::domain::{load_cases, AgentRole, ChiefComplaint, MedicalRecord, Question, TqsConfig};
use jingfang::dsrs::{filter_candidates, rrf_fuse, tokenize, DsrsConfig, SparseIndex, SyndromeAttributes};
use jingfang::engine::Engine;
use jingfang::eval::{
    ablate_general_agent, bleu1, confounder_ablation, confounder_corpus, run_simulated_consultation, PatientMode,
    DEFAULT_EXTRACTIVE_THRESHOLD,
};
use jingfang::gateway::{fnv1a64, ChatBackend, Embedder, GatewayError, HashedBigramEmbedder};
use jingfang::maccm::{score_questions, Consultant, FixedAnswers, SessionConfig, SufficiencyRule};
use jingfang::syndrome::{knn_classify, weighted_metrics, LabeledText};

const SEED: u64 = 20_241_019;
const RRF_TOL: f64 = 1e-12;
const METRIC_TOL: f64 = 1e-9;
const BM25_TOL: f64 = 1e-12;
const CQEA_BUDGET: Duration = Duration::from_secs(5);
const RRF_BUDGET: Duration = Duration::from_secs(2);
const SESSION_BUDGET: Duration = Duration::from_secs(10);

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

const VOCAB: &[&str] = &[
    "cold", "fever", "sweat", "night", "stool", "urine", "dark", "thirst", "appetite", "pain", "chest", "head", "ache",
    "dizzy", "ringing", "ears", "loose", "burning", "heavy", "tired", "bitter", "mouth", "drink", "warm", "spicy",
];

fn words(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn hand_cosine(u: &[f64], v: &[f64]) -> f64 {
    let (mut dot, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for i in 0..u.len() {
        dot += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    if uu == 0.0 || vv == 0.0 {
        return 0.0;
    }
    (dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0)
}

fn vectors(embedder: &HashedBigramEmbedder, texts: &[String]) -> Vec<Vec<f64>> {
    texts.iter().map(|t| embedder.embed_one(t).unwrap().values().to_vec()).collect()
}

fn max_over(q: &[f64], refs: &[Vec<f64>]) -> f64 {
    refs.iter().map(|r| hand_cosine(q, r)).fold(0.0, |best, s| if s > best { s } else { best })
}

fn cqea_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let embedder = HashedBigramEmbedder::default();
    let tqs = TqsConfig::default();
    let names: Vec<String> = tqs.names().map(String::from).collect();
    let tqs_vecs = vectors(&embedder, &tqs.canonical_texts());
    let start = Instant::now();
    let mut pairs = 0usize;
    for case in 0..1000 {
        let questions: Vec<Question> = (0..rng.gen_range(1..=10))
            .map(|_| Question::new(words(&mut rng, 1, 8), "r", "general", AgentRole::General).unwrap())
            .collect();
        let core: Vec<String> = (0..rng.gen_range(0..=10)).map(|_| words(&mut rng, 1, 8)).collect();
        let mut sections = BTreeMap::new();
        for name in &names {
            if rng.gen_bool(0.4) {
                let text = if rng.gen_bool(0.1) { "   ".to_string() } else { words(&mut rng, 1, 6) };
                sections.insert(name.clone(), text);
            }
        }
        let record = MedicalRecord::new(sections.clone(), "summary", 1, &tqs).unwrap();
        let scored = score_questions(&questions, &tqs, &core, &record, &embedder).map_err(|e| e.to_string())?;

        let mut per_texts = core.clone();
        for name in &names {
            if let Some(t) = sections.get(name).map(|s| s.trim()).filter(|s| !s.is_empty()) {
                per_texts.push(t.to_string());
            }
        }
        let per_vecs = vectors(&embedder, &per_texts);
        for (q, s) in questions.iter().zip(&scored) {
            let qv = embedder.embed_one(&q.text).unwrap().values().to_vec();
            let com = max_over(&qv, &tqs_vecs);
            let per = max_over(&qv, &per_vecs);
            pairs += tqs_vecs.len() + per_vecs.len();
            ensure!(s.question == *q, "case {case}: output order differs");
            ensure!(s.com_score == com, "case {case}: com {} vs oracle {com}", s.com_score);
            ensure!(s.per_score == per, "case {case}: per {} vs oracle {per}", s.per_score);
            ensure!(
                (s.com_score + s.per_score).to_bits() == s.total_score.to_bits(),
                "case {case}: total is not com+per"
            );
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < CQEA_BUDGET, "took {elapsed:?}");
    Ok(format!("1000 inputs, {pairs} pairs, exact, {elapsed:.2?}"))
}

fn rrf_oracle() -> Outcome {
    let ids = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let known = rrf_fuse(&ids(&["a", "b"]), &ids(&["a", "c"]), 60.0).map_err(|e| e.to_string())?;
    let score = |id: &str| known.iter().find(|h| h.id == id).map(|h| h.rrf_score).unwrap();
    ensure!((score("a") - 2.0 / 61.0).abs() < RRF_TOL, "a scored {}", score("a"));
    ensure!((score("c") - 1.0 / 62.0).abs() < RRF_TOL, "c scored {}", score("c"));
    let single = rrf_fuse(&ids(&["x"]), &[], 60.0).map_err(|e| e.to_string())?;
    ensure!((single[0].rrf_score - 1.0 / 61.0).abs() < RRF_TOL, "single list scored {}", single[0].rrf_score);

    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let pool: Vec<String> = (0..rng.gen_range(1..=20)).map(|i| format!("d{i}")).collect();
        let mut sparse = pool.clone();
        sparse.shuffle(&mut rng);
        sparse.truncate(rng.gen_range(0..=pool.len()));
        let mut dense = pool.clone();
        dense.shuffle(&mut rng);
        dense.truncate(rng.gen_range(0..=pool.len()));
        let k = rng.gen_range(1..=100) as f64;
        let fused = rrf_fuse(&sparse, &dense, k).map_err(|e| e.to_string())?;
        for id in &pool {
            let mut want = 0.0;
            for list in [&sparse, &dense] {
                for (i, d) in list.iter().enumerate() {
                    if d == id {
                        want += 1.0 / (k + (i + 1) as f64);
                    }
                }
            }
            let got = fused.iter().find(|h| &h.id == id).map_or(0.0, |h| h.rrf_score);
            worst = worst.max((got - want).abs());
            ensure!((got - want).abs() <= RRF_TOL, "case {case}: {id} {got} vs {want}");
        }
        ensure!(fused.windows(2).all(|w| w[0].rrf_score >= w[1].rrf_score), "case {case}: not sorted");
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < RRF_BUDGET, "took {elapsed:?}");
    Ok(format!("2/61 and 1/61 reproduced, 1000 pairs, max err {worst:.1e}, {elapsed:.2?}"))
}

fn bm25_reference(docs: &[String], query: &str) -> Vec<(String, f64)> {
    let (k1, b) = (1.2, 0.75);
    let toks: Vec<Vec<String>> = docs.iter().map(|d| tokenize(d)).collect();
    let n = docs.len() as f64;
    let avg = toks.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut terms = tokenize(query);
    terms.sort();
    terms.dedup();
    let mut out: Vec<(String, f64)> = Vec::new();
    for (i, doc) in toks.iter().enumerate() {
        let mut score = 0.0;
        for t in &terms {
            let tf = doc.iter().filter(|x| *x == t).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let df = toks.iter().filter(|d| d.contains(t)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * doc.len() as f64 / avg));
        }
        if score > 0.0 {
            out.push((format!("d{i:02}"), score));
        }
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

fn bm25_hand_fixture() -> Outcome {
    let docs = [
        ("d1", "cold cold fever"),
        ("d2", "cold sweat"),
        ("d3", "fever thirst"),
        ("d4", "thirst thirst thirst"),
        ("d5", "sweat"),
    ];
    let index = SparseIndex::build(docs.iter().copied()).map_err(|e| e.to_string())?;
    let hits = index.search("cold fever", 10).map_err(|e| e.to_string())?;
    // N = 5, avgdl = 11/5; "cold" and "fever" both have df = 2, so idf = ln 2.4.
    // d1: tf 2 and 1 at |d| = 3; d2, d3: tf 1 at |d| = 2.
    let idf = 2.4f64.ln();
    let norm = |len: f64| 1.0 - 0.75 + 0.75 * len / 2.2;
    let term = |tf: f64, len: f64| idf * tf * 2.2 / (tf + 1.2 * norm(len));
    let expected = [("d1", term(2.0, 3.0) + term(1.0, 3.0)), ("d2", term(1.0, 2.0)), ("d3", term(1.0, 2.0))];
    ensure!(hits.len() == 3, "expected 3 hits, got {}", hits.len());
    for (hit, (id, score)) in hits.iter().zip(expected) {
        ensure!(hit.id == id, "ranking {:?}", hits.iter().map(|h| &h.id).collect::<Vec<_>>());
        ensure!((hit.score - score).abs() < BM25_TOL, "{id}: {} vs {score}", hit.score);
    }
    Ok(format!("d1 {:.6} > d2 = d3 {:.6}", expected[0].1, expected[1].1))
}

fn bm25_oracle() -> Outcome {
    let fixture = bm25_hand_fixture()?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    for case in 0..200 {
        let docs: Vec<String> = (0..rng.gen_range(1..=50)).map(|_| words(&mut rng, 1, 12)).collect();
        let ids: Vec<String> = (0..docs.len()).map(|i| format!("d{i:02}")).collect();
        let index = SparseIndex::build(ids.iter().map(String::as_str).zip(docs.iter().map(String::as_str)))
            .map_err(|e| e.to_string())?;
        let query = words(&mut rng, 1, 5);
        let hits = index.search(&query, docs.len()).map_err(|e| e.to_string())?;
        let want = bm25_reference(&docs, &query);
        ensure!(hits.len() == want.len(), "case {case}: {} hits vs {}", hits.len(), want.len());
        for (h, (id, s)) in hits.iter().zip(&want) {
            ensure!(&h.id == id, "case {case}: order differs at {id}");
            ensure!((h.score - s).abs() < BM25_TOL, "case {case}: {id} {} vs {s}", h.score);
        }
    }
    Ok(format!("hand fixture {fixture}; 200 random corpora agree"))
}

fn labels(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn weighted_metrics_fixture() -> Outcome {
    let m =
        weighted_metrics(&labels(&["A", "B", "B", "C"]), &labels(&["A", "A", "B", "C"])).map_err(|e| e.to_string())?;
    ensure!((m.precision_w - 0.875).abs() < METRIC_TOL, "P_w {}", m.precision_w);
    ensure!((m.recall_w - 0.75).abs() < METRIC_TOL, "R_w {}", m.recall_w);
    ensure!((m.f1_w - 0.75).abs() < METRIC_TOL, "F1_w {}", m.f1_w);
    let gold = labels(&["A", "B", "C", "C", "A"]);
    let perfect = weighted_metrics(&gold, &gold).map_err(|e| e.to_string())?;
    ensure!(perfect.precision_w == 1.0 && perfect.recall_w == 1.0 && perfect.f1_w == 1.0, "all-correct {perfect:?}");

    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let pool = ["A", "B", "C", "D"];
    let pred: Vec<String> = (0..12).map(|_| pool.choose(&mut rng).unwrap().to_string()).collect();
    let gold: Vec<String> = (0..12).map(|_| pool.choose(&mut rng).unwrap().to_string()).collect();
    let base = weighted_metrics(&pred, &gold).map_err(|e| e.to_string())?;
    let mut pairs: Vec<(String, String)> = pred.into_iter().zip(gold).collect();
    for i in 0..100 {
        pairs.shuffle(&mut rng);
        let (p, g): (Vec<String>, Vec<String>) = pairs.iter().cloned().unzip();
        let m = weighted_metrics(&p, &g).map_err(|e| e.to_string())?;
        ensure!(
            (m.precision_w - base.precision_w).abs() < METRIC_TOL
                && (m.recall_w - base.recall_w).abs() < METRIC_TOL
                && (m.f1_w - base.f1_w).abs() < METRIC_TOL,
            "shuffle {i} changed the metrics"
        );
    }
    Ok("0.875/0.75/0.75, all-correct 1.0, 100 shuffles invariant".into())
}

fn bleu_fixtures() -> Outcome {
    let cases = [("a b c d", "a b c d", 1.0), ("a b x d", "a b c d", 0.75), ("a", "a b b b", (-3.0f64).exp())];
    for (cand, reference, want) in cases {
        let got = bleu1(cand, reference).map_err(|e| e.to_string())?;
        ensure!((got - want).abs() < METRIC_TOL, "{cand:?} vs {reference:?}: {got} != {want}");
    }
    Ok("1.0, 0.75, e^-3".into())
}

struct Run {
    transcript: String,
    record: String,
    label: String,
    top3: Vec<String>,
}

fn damp_heat_run() -> Result<Run, String> {
    let engine = Engine::load(&common::fixture("damp_heat/engine.json")).map_err(|e| e.to_string())?;
    let case = load_cases(&common::fixture("damp_heat/case.jsonl")).map_err(|e| e.to_string())?.remove(0);
    let mode = PatientMode::Extractive { embedder: engine.embedder.clone(), threshold: DEFAULT_EXTRACTIVE_THRESHOLD };
    let outcome = run_simulated_consultation(&case, &engine.consultant(), &mode).map_err(|e| e.to_string())?;
    let diagnosis = engine.diagnose(&outcome.record).map_err(|e| e.to_string())?;
    Ok(Run {
        transcript: outcome.transcript.to_jsonl(),
        record: serde_json::to_string(&outcome.record).unwrap(),
        label: diagnosis.syndrome.label,
        top3: diagnosis.recommendation.prescriptions.iter().map(|p| p.entry_id.clone()).collect(),
    })
}

fn cli_consult(dir: &Path, tag: &str) -> Result<(Vec<u8>, Vec<u8>), String> {
    let transcript = dir.join(format!("{tag}.jsonl"));
    let out = Command::new(env!("CARGO_BIN_EXE_jingfang"))
        .env_remove("JINGFANG_CONFIG")
        .arg("--config")
        .arg(common::fixture("damp_heat/engine.json"))
        .args(["consult", "--simulate"])
        .arg(common::fixture("damp_heat/case.jsonl"))
        .arg("--transcript")
        .arg(&transcript)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "cli failed: {}", String::from_utf8_lossy(&out.stderr));
    Ok((out.stdout, std::fs::read(&transcript).map_err(|e| e.to_string())?))
}

fn end_to_end_determinism() -> Outcome {
    let start = Instant::now();
    let first = damp_heat_run()?;
    let single = start.elapsed();
    ensure!(single < SESSION_BUDGET, "one session took {single:?}");
    ensure!(first.top3.len() == 3, "top-3 has {} entries", first.top3.len());
    for i in 1..10 {
        let again = damp_heat_run()?;
        ensure!(again.transcript == first.transcript, "run {i}: transcript differs");
        ensure!(again.record == first.record, "run {i}: record differs");
        ensure!(again.label == first.label, "run {i}: label differs");
        ensure!(again.top3 == first.top3, "run {i}: top-3 differs");
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (out_a, tr_a) = cli_consult(dir.path(), "a")?;
    let (out_b, tr_b) = cli_consult(dir.path(), "b")?;
    ensure!(out_a == out_b, "stdout differs across processes");
    ensure!(tr_a == tr_b, "transcript differs across processes");
    ensure!(tr_a == first.transcript.as_bytes(), "process transcript differs from the in-process one");
    Ok(format!(
        "10 runs + 2 processes identical, label {:?}, top-3 {:?}, {single:.2?}/session",
        first.label, first.top3
    ))
}

/// Chat backend whose replies are a pure function of the prompt and a seed.
/// The optimizer flips between two question sets so consensus never comes
/// from the optimizer itself; only the turn cap or unanimous `NO_CHANGE`
/// ends refinement.
struct Chaotic {
    seed: u64,
}

impl Chaotic {
    fn roll(&self, system: &str, user: &str, modulo: u64) -> u64 {
        let mut bytes = self.seed.to_le_bytes().to_vec();
        bytes.extend_from_slice(system.as_bytes());
        bytes.extend_from_slice(user.as_bytes());
        fnv1a64(&bytes) % modulo
    }
}

const SPECIALTIES: [&str; 4] = ["internal medicine", "surgery", "gynecology", "pediatrics"];
const ALPHA: &str = "Q: Is the alpha pain sharp or dull?\nQ: Does the alpha pain wake you at night?";
const BETA: &str = "Q: Is the beta discomfort constant?\nQ: Does the beta discomfort ease after eating?";

impl ChatBackend for Chaotic {
    fn id(&self) -> &str {
        "chaotic"
    }

    fn complete(&self, system: &str, user: &str) -> Result<String, GatewayError> {
        let role = system.lines().next().unwrap_or_default();
        let reply = if role.contains("ROLE: select") {
            SPECIALTIES[self.roll(system, user, 4) as usize].to_string()
        } else if role.contains("ROLE: record") {
            format!("chest_abdomen: discomfort\ncause: {}", self.roll(system, user, 1000))
        } else if role.contains("ROLE: spec") || role.contains("ROLE: gen") {
            let n = self.roll(system, user, 3);
            format!("Q: How long has it lasted {n}?\nQ: What makes it worse {n}?\nQ: Any fever {n}?")
        } else if role.contains("ROLE: eval") {
            "Broad coverage; pertinence varies.".to_string()
        } else if role.contains("ROLE: modify") {
            match self.roll(system, user, 3) {
                0 => "NO_CHANGE".to_string(),
                _ => "Ask about the pain character instead.".to_string(),
            }
        } else if role.contains("ROLE: opt") {
            match self.roll(system, user, 10) {
                0 => "nothing parseable here".to_string(),
                _ if user.contains("alpha") => BETA.to_string(),
                _ => ALPHA.to_string(),
            }
        } else if role.contains("ROLE: sufficiency") {
            ["STOP", "CONTINUE", "CONTINUE", "perhaps?", "{\"garbage\": true}"][self.roll(system, user, 5) as usize]
                .to_string()
        } else {
            "ok".to_string()
        };
        Ok(reply)
    }
}

fn loop_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let registry = AgentRegistry::default();
    let tqs = TqsConfig::default();
    let embedder = HashedBigramEmbedder::default();
    let answers = FixedAnswers::new(HashMap::new(), Some("It has been like this for a while.".into()));
    let (mut capped_refinement, mut capped_rounds, mut llm_stops) = (0, 0, 0);
    for n in 0..500 {
        let config = SessionConfig {
            max_rounds: rng.gen_range(1..=6),
            max_feedback_turns: rng.gen_range(1..=4),
            questions_per_agent: rng.gen_range(1..=2),
            sufficiency_rule: if rng.gen_bool(0.5) {
                SufficiencyRule::LlmJudge
            } else {
                SufficiencyRule::FixedRounds(rng.gen_range(1..=8))
            },
            include_general: rng.gen_bool(0.8),
            ..SessionConfig::default()
        };
        config.validate().map_err(|e| e.to_string())?;
        let gateway = Chaotic { seed: rng.gen() };
        let consultant =
            Consultant { gateway: &gateway, embedder: &embedder, registry: &registry, tqs: &tqs, config: &config };
        let complaint = ChiefComplaint::new(words(&mut rng, 2, 6), DateTime::<Utc>::UNIX_EPOCH).unwrap();
        let outcome = consultant.run(complaint, &answers).map_err(|e| format!("session {n}: {e}"))?;
        let t = &outcome.transcript;
        ensure!(outcome.record.finalized, "session {n}: not finalized");
        ensure!(t.rounds() == outcome.rounds, "session {n}: round count mismatch");
        ensure!(
            outcome.rounds >= 1 && outcome.rounds <= config.max_rounds,
            "session {n}: {} rounds with cap {}",
            outcome.rounds,
            config.max_rounds
        );
        for round in 1..=outcome.rounds {
            let turns = t.refinement_turns(round);
            ensure!(
                (1..=config.max_feedback_turns).contains(&turns),
                "session {n} round {round}: {turns} refinement turns with cap {}",
                config.max_feedback_turns
            );
            if turns == config.max_feedback_turns {
                capped_refinement += 1;
            }
        }
        if outcome.rounds == config.max_rounds {
            capped_rounds += 1;
        }
        if config.sufficiency_rule == SufficiencyRule::LlmJudge && outcome.rounds < config.max_rounds {
            llm_stops += 1;
        }
    }
    ensure!(capped_refinement > 0 && capped_rounds > 0, "caps never exercised");
    Ok(format!(
        "500 sessions terminated; {capped_refinement} rounds hit the refinement cap, {capped_rounds} sessions hit the round cap, {llm_stops} stopped by the judge"
    ))
}

fn dsrs_direction() -> Outcome {
    let (db, cases) = confounder_corpus();
    ensure!(db.len() == 20 && cases.len() == 50, "corpus is {} entries, {} cases", db.len(), cases.len());
    for case in &cases {
        let attrs = SyndromeAttributes { syndrome_type: case.gold_syndrome.clone(), ..Default::default() };
        let set = filter_candidates(&db, &attrs);
        let formulas: Vec<&str> = set.entries(&db).map(|e| e.representative_formula.as_str()).collect();
        ensure!(!set.fallback && set.indices.len() == 2, "{}: {} candidates", case.id, set.indices.len());
        ensure!(formulas.contains(&case.gold_formula.as_deref().unwrap()), "{}: gold formula filtered out", case.id);
    }
    let report = confounder_ablation(&DsrsConfig::default()).map_err(|e| e.to_string())?;
    ensure!(
        report.dsrs_hit_rate > report.single_stage_hit_rate,
        "dsrs {} vs single-stage {}",
        report.dsrs_hit_rate,
        report.single_stage_hit_rate
    );
    Ok(format!(
        "attributes isolate gold in 50/50; top-3 hit rate {} vs {} ({} wins)",
        report.dsrs_hit_rate, report.single_stage_hit_rate, report.wins
    ))
}

fn general_agent_direction() -> Outcome {
    let engine = Engine::load(&common::fixture("general_ablation/engine.json")).map_err(|e| e.to_string())?;
    let cases = load_cases(&common::fixture("general_ablation/cases.jsonl")).map_err(|e| e.to_string())?;
    let mode = PatientMode::Extractive { embedder: engine.embedder.clone(), threshold: DEFAULT_EXTRACTIVE_THRESHOLD };
    let report = ablate_general_agent(&cases, &engine.consultant(), &mode, None, 3).map_err(|e| e.to_string())?;
    ensure!(
        report.without_general.completed == cases.len(),
        "reduced arm completed {}",
        report.without_general.completed
    );
    ensure!(report.without_general.general_questions_merged == 0, "general questions leaked into the reduced arm");
    ensure!(
        report.without_general.mean_tqs_categories < report.full.mean_tqs_categories,
        "categories {} vs {}",
        report.without_general.mean_tqs_categories,
        report.full.mean_tqs_categories
    );
    Ok(format!(
        "0 general questions without GD; mean categories {:.2} -> {:.2}",
        report.full.mean_tqs_categories, report.without_general.mean_tqs_categories
    ))
}

fn knn_reference(query: &[f64], corpus: &[(Vec<f64>, String)], k: usize) -> (String, usize) {
    let mut order: Vec<(usize, f64)> =
        corpus.iter().enumerate().map(|(i, (v, _))| (i, hand_cosine(query, v))).collect();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut seen: Vec<(String, usize, f64, usize)> = Vec::new();
    for &(i, sim) in &order[..k] {
        let label = &corpus[i].1;
        match seen.iter_mut().find(|s| &s.0 == label) {
            Some(s) => {
                s.1 += 1;
                s.2 += 1.0 - sim;
                s.3 = s.3.min(i);
            }
            None => seen.push((label.clone(), 1, 1.0 - sim, i)),
        }
    }
    let mean = |s: &(String, usize, f64, usize)| s.2 / s.1 as f64;
    let mut best = seen[0].clone();
    for s in &seen[1..] {
        let better =
            s.1 > best.1 || (s.1 == best.1 && (mean(s) < mean(&best) || (mean(s) == mean(&best) && s.3 < best.3)));
        if better {
            best = s.clone();
        }
    }
    (best.0, best.1)
}

fn knn_oracle() -> Outcome {
    let embedder = HashedBigramEmbedder::default();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 5);
    let tags = ["damp-heat", "yang deficiency", "qi stagnation", "blood stasis"];
    for case in 0..300 {
        let size = rng.gen_range(1..=50);
        let corpus: Vec<LabeledText> = (0..size)
            .map(|_| LabeledText { text: words(&mut rng, 1, 6), label: tags.choose(&mut rng).unwrap().to_string() })
            .collect();
        let k = rng.gen_range(1..=size.min(9));
        let query = words(&mut rng, 1, 6);
        let got = knn_classify(&query, &corpus, k, &embedder).map_err(|e| e.to_string())?;
        let vecs: Vec<(Vec<f64>, String)> =
            corpus.iter().map(|c| (embedder.embed_one(&c.text).unwrap().values().to_vec(), c.label.clone())).collect();
        let qv = embedder.embed_one(&query).unwrap();
        let (label, votes) = knn_reference(qv.values(), &vecs, k);
        ensure!(got.label == label, "case {case}: {} vs oracle {label}", got.label);
        ensure!(got.confidence == votes as f64 / k as f64, "case {case}: confidence {}", got.confidence);
    }

    // Three classes with disjoint alphabets, classified leave-one-out.
    let alphabets = [("damp-heat", "abcdefg"), ("yang deficiency", "hijklmn"), ("qi stagnation", "opqrstu")];
    let mut corpus = Vec::new();
    for (label, letters) in alphabets {
        let letters: Vec<char> = letters.chars().collect();
        for _ in 0..10 {
            let text: Vec<String> = (0..5)
                .map(|_| (0..rng.gen_range(3..7)).map(|_| *letters.choose(&mut rng).unwrap()).collect())
                .collect();
            corpus.push(LabeledText { text: text.join(" "), label: label.to_string() });
        }
    }
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    for i in 0..corpus.len() {
        let rest: Vec<LabeledText> =
            corpus.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, c)| c.clone()).collect();
        pred.push(knn_classify(&corpus[i].text, &rest, 3, &embedder).map_err(|e| e.to_string())?.label);
        gold.push(corpus[i].label.clone());
    }
    let m = weighted_metrics(&pred, &gold).map_err(|e| e.to_string())?;
    ensure!(m.f1_w == 1.0, "separable corpus F1_w {}", m.f1_w);
    Ok("300 random corpora agree with the oracle; separable F1_w 1.0".into())
}

fn service_state_machine() -> Outcome {
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().map_err(|e| e.to_string())?;
    rt.block_on(async {
        let stats = common::fuzz_service(1000, SEED).await?;
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let (_, first) = common::app(Some(dir.path()), None);
        let before = common::populate(&first).await;
        let mut transcripts = Vec::new();
        for (id, _) in &before {
            transcripts.push(common::call(&first, "GET", &format!("/v1/sessions/{id}/transcript"), None).await.1);
        }
        drop(first);
        let (_, second) = common::app(Some(dir.path()), None);
        for ((id, view), transcript) in before.iter().zip(&transcripts) {
            let (_, again) = common::call(&second, "GET", &format!("/v1/sessions/{id}"), None).await;
            ensure!(&again == view, "view of {id} changed across restart");
            let (_, t) = common::call(&second, "GET", &format!("/v1/sessions/{id}/transcript"), None).await;
            ensure!(&t == transcript, "transcript of {id} changed across restart");
        }
        Ok(format!(
            "1000 sequences, {} requests, {} rejected without state change, {} done, {} aborted; {} sessions restored byte-exact",
            stats.requests,
            stats.rejected,
            stats.done,
            stats.aborted,
            before.len()
        ))
    })
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("cqea-oracle", cqea_oracle),
        ("rrf-oracle", rrf_oracle),
        ("bm25-oracle", bm25_oracle),
        ("weighted-metrics", weighted_metrics_fixture),
        ("bleu1", bleu_fixtures),
        ("end-to-end-determinism", end_to_end_determinism),
        ("loop-bounds", loop_bounds),
        ("dsrs-direction", dsrs_direction),
        ("general-agent-direction", general_agent_direction),
        ("knn-oracle", knn_oracle),
        ("service-state-machine", service_state_machine),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
