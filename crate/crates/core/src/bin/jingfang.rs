use std::io::{self, BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use chrono::Utc;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use jingfang::domain::{load_cases, load_prescription_db, ChiefComplaint, DomainError, MedicalRecord};
use jingfang::dsrs::{build_index, DsrsError};
use jingfang::engine::{BackendKind, Engine, EngineConfig, EngineError};
use jingfang::eval::{
    ablate_dsrs, ablate_general_agent, confidence_interval, confounder_ablation, run_batch, run_simulated_consultation,
    EvalError, PatientMode, PredictionSource, DEFAULT_EXTRACTIVE_THRESHOLD,
};
use jingfang::gateway::GatewayError;
use jingfang::maccm::{MaccmError, Progress};
use jingfang::service::{self, AppState, SessionStore};
use jingfang::syndrome::{weighted_metrics, SyndromeError};

#[derive(Parser)]
#[command(name = "jingfang", version, about = "TCM consultation, syndrome differentiation and prescription retrieval")]
struct Cli {
    /// Engine configuration (JSON).
    #[arg(long, global = true, env = "JINGFANG_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the backend in the configuration.
    #[arg(long, global = true)]
    backend: Option<BackendKind>,
    /// Overrides the scripted backend file.
    #[arg(long, global = true)]
    script: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = ErrorFormat::Text)]
    error_format: ErrorFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ErrorFormat {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    DsrsAblation,
    GeneralAblation,
    Batch,
    Classify,
}

#[derive(Clone, Copy, ValueEnum)]
enum Predict {
    Gold,
    Classifier,
}

#[derive(Subcommand)]
enum Command {
    /// Validates a prescription database and writes its sparse index.
    Ingest {
        /// Prescription database (JSONL).
        #[arg(long)]
        db: PathBuf,
        /// Where to write the index snapshot.
        #[arg(long)]
        index_out: PathBuf,
    },
    /// Interactive consultation: questions go to stdout, one answer per
    /// line is read from stdin. Ends with the diagnosis as JSON.
    Consult {
        /// Chief complaint; read from the first stdin line when omitted.
        #[arg(long)]
        complaint: Option<String>,
        /// Let the first case in this file answer instead of stdin.
        #[arg(long)]
        simulate: Option<PathBuf>,
        /// Write the session transcript here as JSONL.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Syndrome prediction for a medical record (JSON).
    Differentiate {
        /// Medical record file.
        #[arg(long)]
        record: PathBuf,
    },
    /// Syndrome prediction plus prescription ranking for a record.
    Recommend {
        /// Medical record file.
        #[arg(long)]
        record: PathBuf,
        /// Also write the recommendation report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluation suites. `dsrs-ablation` without `--cases` runs the
    /// built-in confounder corpus and needs no configuration.
    Eval {
        #[arg(long, value_enum)]
        suite: Suite,
        /// Case file (JSONL).
        #[arg(long)]
        cases: Option<PathBuf>,
        /// Report file, or the output directory for `batch`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Syndrome source for retrieval ablations.
        #[arg(long, value_enum, default_value_t = Predict::Gold)]
        predict: Predict,
        /// Cases run concurrently.
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
    },
    /// Runs the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Persist sessions here and recover them on start.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Require this bearer token on every session route.
        #[arg(long, env = "JINGFANG_TOKEN")]
        token: Option<String>,
    },
}

/// Bad input that is not tied to a library error type.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct InputError(String);

fn exit_code(err: &anyhow::Error) -> u8 {
    const GENERAL: u8 = 1;
    const INPUT: u8 = 3;
    const BACKEND: u8 = 4;
    for cause in err.chain() {
        if cause.is::<GatewayError>() {
            return BACKEND;
        }
        if cause.is::<InputError>()
            || cause.is::<DomainError>()
            || cause.is::<io::Error>()
            || cause.is::<serde_json::Error>()
        {
            return INPUT;
        }
        if let Some(e) = cause.downcast_ref::<EngineError>() {
            return match e {
                EngineError::Gateway(_) => BACKEND,
                EngineError::Config(_) | EngineError::Domain(_) | EngineError::Io(_) => INPUT,
                EngineError::Dsrs(DsrsError::Gateway(_)) | EngineError::Syndrome(SyndromeError::Gateway(_)) => BACKEND,
                _ => GENERAL,
            };
        }
        if let Some(MaccmError::Gateway(_)) = cause.downcast_ref::<MaccmError>() {
            return BACKEND;
        }
        if let Some(DsrsError::Gateway(_)) = cause.downcast_ref::<DsrsError>() {
            return BACKEND;
        }
        if let Some(SyndromeError::Gateway(_)) = cause.downcast_ref::<SyndromeError>() {
            return BACKEND;
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            return match e {
                EvalError::Gateway(_)
                | EvalError::Dsrs(DsrsError::Gateway(_))
                | EvalError::Syndrome(SyndromeError::Gateway(_)) => BACKEND,
                EvalError::Domain(_) | EvalError::Io(_) => INPUT,
                _ => GENERAL,
            };
        }
    }
    GENERAL
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let format = cli.error_format;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            match format {
                ErrorFormat::Text => eprintln!("error: {err:#}"),
                ErrorFormat::Json => eprintln!(
                    "{}",
                    serde_json::json!({ "error": { "exit_code": code, "message": format!("{err:#}") } })
                ),
            }
            ExitCode::from(code)
        }
    }
}

fn load_engine(cli: &Cli) -> anyhow::Result<Engine> {
    let path = cli.config.as_deref().ok_or_else(|| InputError("--config (or JINGFANG_CONFIG) is required".into()))?;
    let mut config = EngineConfig::load(path)?;
    if let Some(kind) = cli.backend {
        config.backend = kind;
    }
    if let Some(script) = &cli.script {
        config.script = Some(script.clone());
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(Engine::from_config(&config)?)
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_or_print<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
                .with_context(|| format!("writing {}", path.display()))?;
            Ok(())
        }
        None => print_json(value),
    }
}

fn load_record(path: &Path) -> anyhow::Result<MedicalRecord> {
    let raw = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let record: MedicalRecord = serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))?;
    // A record handed over on disk is treated as the final one.
    Ok(record.finalize())
}

fn cases_arg(cases: Option<&Path>) -> anyhow::Result<&Path> {
    cases.ok_or_else(|| InputError("--cases is required for this suite".into()).into())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Ingest { db, index_out } => {
            let entries = load_prescription_db(db)?;
            let index = build_index(&entries)?;
            index.save(index_out)?;
            print_json(&serde_json::json!({ "entries": entries.len(), "terms": index.terms().count() }))
        }
        Command::Consult { complaint, simulate, transcript } => {
            consult(&cli, complaint.clone(), simulate.as_deref(), transcript.as_deref())
        }
        Command::Differentiate { record } => {
            let engine = load_engine(&cli)?;
            print_json(&engine.differentiate(&load_record(record)?)?)
        }
        Command::Recommend { record, out } => {
            let engine = load_engine(&cli)?;
            let diagnosis = engine.diagnose(&load_record(record)?)?;
            write_or_print(&diagnosis, out.as_deref())
        }
        Command::Eval { suite, cases, out, predict, parallelism } => {
            eval(&cli, *suite, cases.as_deref(), out.as_deref(), *predict, *parallelism)
        }
        Command::Serve { addr, data_dir, token } => {
            let engine = load_engine(&cli)?;
            let store = data_dir.as_deref().map(SessionStore::open).transpose()?;
            let state = Arc::new(AppState::new(engine, store, token.clone())?);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(service::serve(*addr, state))?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct ConsultReport<'a> {
    rounds: usize,
    team: Vec<String>,
    record: &'a MedicalRecord,
    diagnosis: jingfang::engine::Diagnosis,
}

fn consult(
    cli: &Cli,
    complaint: Option<String>,
    simulate: Option<&Path>,
    transcript: Option<&Path>,
) -> anyhow::Result<()> {
    let engine = load_engine(cli)?;
    let consultant = engine.consultant();

    let outcome = if let Some(path) = simulate {
        let case = load_cases(path)?
            .into_iter()
            .next()
            .ok_or_else(|| InputError(format!("{} has no cases", path.display())))?;
        let mode =
            PatientMode::Extractive { embedder: engine.embedder.clone(), threshold: DEFAULT_EXTRACTIVE_THRESHOLD };
        run_simulated_consultation(&case, &consultant, &mode).map_err(|a| anyhow!(a.error))?
    } else {
        let stdin = io::stdin();
        let mut lines = stdin.lock().lines();
        let text = match complaint {
            Some(c) => c,
            None => lines.next().transpose()?.ok_or_else(|| InputError("no chief complaint on stdin".into()))?,
        };
        let mut session = consultant.start(ChiefComplaint::new(text, Utc::now())?).map_err(|a| anyhow!(a.error))?;
        loop {
            let mut answers = Vec::new();
            for q in &session.pending {
                println!("Q: {}", q.text);
                io::stdout().flush()?;
                let answer = lines
                    .next()
                    .transpose()?
                    .ok_or_else(|| InputError("stdin closed before all questions were answered".into()))?;
                answers.push(answer);
            }
            let (next, progress) = consultant.submit_answers(&session, &answers)?;
            session = next;
            if let Progress::Finished(_) = progress {
                break;
            }
        }
        jingfang::maccm::ConsultationOutcome {
            record: session.final_record.clone().expect("finished session has a record"),
            rounds: session.rounds_done,
            team: session.team.clone(),
            transcript: session.transcript.clone(),
        }
    };

    if let Some(path) = transcript {
        outcome.transcript.write(path)?;
    }
    let diagnosis = engine.diagnose(&outcome.record)?;
    print_json(&ConsultReport {
        rounds: outcome.rounds,
        team: outcome.team.members().map(|m| m.id.clone()).collect(),
        record: &outcome.record,
        diagnosis,
    })
}

fn eval(
    cli: &Cli,
    suite: Suite,
    cases: Option<&Path>,
    out: Option<&Path>,
    predict: Predict,
    parallelism: usize,
) -> anyhow::Result<()> {
    match suite {
        Suite::DsrsAblation => {
            let report = match cases {
                None => confounder_ablation(&Default::default())?,
                Some(path) => {
                    let engine = load_engine(cli)?;
                    let source = match predict {
                        Predict::Gold => PredictionSource::Gold,
                        Predict::Classifier => PredictionSource::Classifier(engine.classifier.as_ref()),
                    };
                    ablate_dsrs(
                        &load_cases(path)?,
                        &engine.retriever,
                        engine.chat.as_ref(),
                        &engine.tqs,
                        &engine.dsrs,
                        source,
                    )?
                }
            };
            write_or_print(&report, out)
        }
        Suite::GeneralAblation => {
            let engine = load_engine(cli)?;
            let cases = load_cases(cases_arg(cases)?)?;
            let mode =
                PatientMode::Extractive { embedder: engine.embedder.clone(), threshold: DEFAULT_EXTRACTIVE_THRESHOLD };
            let report =
                ablate_general_agent(&cases, &engine.consultant(), &mode, Some(engine.chat.as_ref()), parallelism)?;
            write_or_print(&report, out)
        }
        Suite::Batch => {
            let engine = load_engine(cli)?;
            let cases = load_cases(cases_arg(cases)?)?;
            let dir = out.ok_or_else(|| InputError("--out <dir> is required for batch".into()))?;
            let mode =
                PatientMode::Extractive { embedder: engine.embedder.clone(), threshold: DEFAULT_EXTRACTIVE_THRESHOLD };
            let report = run_batch(&cases, &engine.consultant(), &mode, parallelism);
            report.write(dir)?;
            print_json(&serde_json::json!({ "completed": report.completed, "aborted": report.aborted }))
        }
        Suite::Classify => {
            let engine = load_engine(cli)?;
            let cases = load_cases(cases_arg(cases)?)?;
            let mut predictions = Vec::new();
            let mut gold = Vec::new();
            for case in cases.iter().filter(|c| c.gold_syndrome.is_some()) {
                let p = engine.classifier.classify(&case.classification_text(&engine.tqs), engine.chat.as_ref())?;
                predictions.push(p.label);
                gold.extend(case.gold_syndrome.clone());
            }
            if gold.is_empty() {
                bail!(InputError("no case carries a gold syndrome".into()));
            }
            let metrics = weighted_metrics(&predictions, &gold)?;
            let correct: Vec<f64> = predictions.iter().zip(&gold).map(|(p, g)| f64::from(u8::from(p == g))).collect();
            let accuracy_ci = confidence_interval(&correct, 0.95, engine.seed).ok();
            write_or_print(&serde_json::json!({ "metrics": metrics, "accuracy_ci": accuracy_ci }), out)
        }
    }
}
