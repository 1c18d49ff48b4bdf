#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

use jingfang::engine::{Engine, EngineConfig};
use jingfang::gateway::{ChatBackend, GatewayError, HashedBigramEmbedder, ScriptedBackend};
use jingfang::maccm::SufficiencyRule;
use jingfang::service::{router, AppState, SessionStore};

pub const EXPLODE: &str = "EXPLODE";

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

/// Scripted backend that fails any call whose prompt mentions [`EXPLODE`].
pub struct Flaky(pub ScriptedBackend);

impl ChatBackend for Flaky {
    fn id(&self) -> &str {
        "flaky"
    }

    fn complete(&self, system: &str, user: &str) -> Result<String, GatewayError> {
        if user.contains(EXPLODE) {
            return Err(GatewayError::Http { status: Some(500), attempts: 1, message: "upstream down".into() });
        }
        self.0.complete(system, user)
    }
}

/// The damp-heat engine, stopping after two rounds, over a flaky backend.
pub fn service_engine() -> Engine {
    let mut config = EngineConfig::load(&fixture("damp_heat/engine.json")).unwrap();
    config.session.sufficiency_rule = SufficiencyRule::FixedRounds(2);
    let chat = Flaky(ScriptedBackend::load(config.script.as_ref().unwrap()).unwrap());
    Engine::with_backends(&config, Arc::new(chat), Arc::new(HashedBigramEmbedder::default())).unwrap()
}

pub fn app(store: Option<&Path>, token: Option<&str>) -> (Arc<AppState>, Router) {
    let store = store.map(|p| SessionStore::open(p).unwrap());
    let state = Arc::new(AppState::new(service_engine(), store, token.map(String::from)).unwrap());
    let r = router(state.clone());
    (state, r)
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body.map(|b| b.to_string())).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

pub fn error_code(v: &Value) -> &str {
    v["error"]["code"].as_str().unwrap_or("")
}

const ANSWERS: [&str; 6] = [
    "The stools are loose and yellow",
    "My urine is scanty and dark yellow",
    "I don't know",
    "I feel thirsty",
    "My appetite is poor",
    "No fever",
];

#[derive(Debug, Clone, Copy, PartialEq)]
enum Model {
    Awaiting(usize),
    Done,
    Aborted,
}

fn check_view(v: &Value, model: Model, turns: usize) -> Result<(), String> {
    let phase = v["phase"].as_str().unwrap_or("");
    let got_turns = v["turns"].as_array().map_or(0, Vec::len);
    if got_turns != turns {
        return Err(format!("expected {turns} turns, got {got_turns}"));
    }
    match model {
        Model::Awaiting(n) => {
            if phase != "awaiting_answer" || v["questions"].as_array().map_or(0, Vec::len) != n {
                return Err(format!("expected awaiting with {n} questions: {v}"));
            }
            if !(1..=2).contains(&n) {
                return Err(format!("pending count {n} out of bounds"));
            }
        }
        Model::Done => {
            if phase != "done" || v["syndrome"].is_null() || v["recommendation"].is_null() {
                return Err(format!("expected done with results: {v}"));
            }
            if v["record"]["finalized"] != json!(true) {
                return Err("final record not finalized".into());
            }
        }
        Model::Aborted => {
            if phase != "aborted" || v["error"].is_null() {
                return Err(format!("expected aborted with error: {v}"));
            }
        }
    }
    Ok(())
}

/// Summary of a fuzz run.
#[derive(Debug, Default)]
pub struct FuzzStats {
    pub sequences: usize,
    pub requests: usize,
    pub done: usize,
    pub aborted: usize,
    pub rejected: usize,
}

/// Drives `sequences` random request sequences against a fresh service and
/// compares every response with a small state model.
pub async fn fuzz_service(sequences: usize, seed: u64) -> Result<FuzzStats, String> {
    let (state, app) = app(None, None);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = FuzzStats { sequences, ..FuzzStats::default() };
    for seq in 0..sequences {
        let ctx = |e: String| format!("sequence {seq}: {e}");
        let before = state.session_count();
        let roll: f64 = rng.gen();
        let complaint = if roll < 0.08 {
            "   ".to_string()
        } else if roll < 0.14 {
            format!("{EXPLODE} stomach pain")
        } else {
            "Diarrhea with a burning feeling at the anus for three days".to_string()
        };
        let (status, v) = call_json(&app, "POST", "/v1/sessions", Some(json!({ "complaint": complaint }))).await;
        stats.requests += 1;
        if roll < 0.08 {
            if status != StatusCode::UNPROCESSABLE_ENTITY || error_code(&v) != "validation" {
                return Err(ctx(format!("blank complaint gave {status} {v}")));
            }
            continue;
        }
        if roll < 0.14 {
            if status != StatusCode::SERVICE_UNAVAILABLE || state.session_count() != before {
                return Err(ctx(format!("failing create gave {status}, sessions {}", state.session_count())));
            }
            continue;
        }
        if status != StatusCode::CREATED {
            return Err(ctx(format!("create gave {status} {v}")));
        }
        let id = v["id"].as_str().unwrap().to_string();
        let uri = format!("/v1/sessions/{id}/answers");
        let mut model = Model::Awaiting(v["questions"].as_array().unwrap().len());
        let mut turns = 0;
        let mut last_key: Option<String> = None;
        check_view(&v, model, turns).map_err(ctx)?;

        for step in 0..rng.gen_range(1..12) {
            stats.requests += 1;
            let op = rng.gen_range(0..8);
            let view_uri = format!("/v1/sessions/{id}");
            let (_, snapshot) = call(&app, "GET", &view_uri, None).await;
            let mut rejected = false;
            let pending = match model {
                Model::Awaiting(n) => Some(n),
                _ => None,
            };
            let answers = |rng: &mut ChaCha8Rng, n: usize| -> Vec<String> {
                (0..n).map(|_| ANSWERS[rng.gen_range(0..ANSWERS.len())].to_string()).collect()
            };
            match op {
                0 => {
                    let (status, v) = call_json(&app, "GET", &format!("/v1/sessions/{id}"), None).await;
                    if status != StatusCode::OK {
                        return Err(ctx(format!("get gave {status}")));
                    }
                    check_view(&v, model, turns).map_err(ctx)?;
                }
                1 | 2 => {
                    let n = pending.unwrap_or(1);
                    let key = (op == 2).then(|| format!("k{seq}-{step}"));
                    let body = json!({ "answers": answers(&mut rng, n), "idempotency_key": key });
                    let (status, v) = call_json(&app, "POST", &uri, Some(body)).await;
                    match pending {
                        Some(n) => {
                            if status != StatusCode::OK {
                                return Err(ctx(format!("answer gave {status} {v}")));
                            }
                            turns += n;
                            model = if v["phase"] == "done" {
                                Model::Done
                            } else {
                                Model::Awaiting(v["questions"].as_array().map_or(0, Vec::len))
                            };
                            last_key = key;
                            check_view(&v, model, turns).map_err(ctx)?;
                        }
                        None if status != StatusCode::CONFLICT || error_code(&v) != "phase_violation" => {
                            return Err(ctx(format!("answer after end gave {status}")));
                        }
                        None => rejected = true,
                    }
                }
                3 => {
                    let n = pending.unwrap_or(1) + 1;
                    let (status, v) =
                        call_json(&app, "POST", &uri, Some(json!({ "answers": answers(&mut rng, n) }))).await;
                    let want = if pending.is_some() { "answer_count_mismatch" } else { "phase_violation" };
                    if error_code(&v) != want {
                        return Err(ctx(format!("wrong count gave {status} {v}")));
                    }
                    rejected = true;
                }
                4 => {
                    let mut a = answers(&mut rng, pending.unwrap_or(1));
                    a[0] = " ".into();
                    let (status, v) = call_json(&app, "POST", &uri, Some(json!({ "answers": a }))).await;
                    let want = if pending.is_some() { "validation" } else { "phase_violation" };
                    if error_code(&v) != want {
                        return Err(ctx(format!("blank answer gave {status} {v}")));
                    }
                    rejected = true;
                }
                5 => {
                    let mut a = answers(&mut rng, pending.unwrap_or(1));
                    a[0] = format!("{EXPLODE} pain");
                    let (status, v) = call_json(&app, "POST", &uri, Some(json!({ "answers": a }))).await;
                    if pending.is_some() {
                        if status != StatusCode::BAD_GATEWAY {
                            return Err(ctx(format!("engine failure gave {status} {v}")));
                        }
                        model = Model::Aborted;
                        last_key = None;
                    } else if error_code(&v) != "phase_violation" {
                        return Err(ctx(format!("failing answer after end gave {status}")));
                    } else {
                        rejected = true;
                    }
                }
                6 => {
                    let Some(key) = last_key.clone() else { continue };
                    let (_, current) = call_json(&app, "GET", &format!("/v1/sessions/{id}"), None).await;
                    let body = json!({ "answers": ["replayed"], "idempotency_key": key });
                    let (status, v) = call_json(&app, "POST", &uri, Some(body)).await;
                    if status != StatusCode::OK || v != current {
                        return Err(ctx(format!("replay gave {status}")));
                    }
                }
                _ => {
                    let (status, v) = call_json(&app, "GET", "/v1/sessions/nope", None).await;
                    if status != StatusCode::NOT_FOUND || error_code(&v) != "unknown_session" {
                        return Err(ctx(format!("unknown session gave {status}")));
                    }
                    let (status, v) = call(&app, "POST", &uri, Some("{not json".into())).await;
                    let v: Value = serde_json::from_slice(&v).unwrap_or(Value::Null);
                    if status != StatusCode::UNPROCESSABLE_ENTITY || error_code(&v) != "validation" {
                        return Err(ctx(format!("malformed body gave {status}")));
                    }
                    rejected = true;
                }
            }
            if rejected {
                let (_, after) = call(&app, "GET", &view_uri, None).await;
                if after != snapshot {
                    return Err(ctx(format!("rejected op {op} changed the session")));
                }
                stats.rejected += 1;
            }
        }
        match model {
            Model::Done => stats.done += 1,
            Model::Aborted => stats.aborted += 1,
            Model::Awaiting(_) => {}
        }
    }
    Ok(stats)
}

/// Drives a few sessions into every stable phase, then returns the raw
/// bytes of each session's GET response.
pub async fn populate(app: &Router) -> Vec<(String, Vec<u8>)> {
    let mut ids = Vec::new();
    for script in [0usize, 1, 2, 3] {
        let (_, v) = call_json(
            app,
            "POST",
            "/v1/sessions",
            Some(json!({ "complaint": "Diarrhea with a burning feeling at the anus for three days" })),
        )
        .await;
        let id = v["id"].as_str().unwrap().to_string();
        let uri = format!("/v1/sessions/{id}/answers");
        for round in 0..[0, 1, 2, 1][script] {
            let (_, v) = call_json(app, "GET", &format!("/v1/sessions/{id}"), None).await;
            let n = v["questions"].as_array().unwrap().len();
            let answers: Vec<String> = (0..n).map(|i| ANSWERS[(round + i) % ANSWERS.len()].to_string()).collect();
            call_json(app, "POST", &uri, Some(json!({ "answers": answers, "idempotency_key": format!("r{round}") })))
                .await;
        }
        if script == 3 {
            let (_, v) = call_json(app, "GET", &format!("/v1/sessions/{id}"), None).await;
            let n = v["questions"].as_array().unwrap().len();
            call_json(app, "POST", &uri, Some(json!({ "answers": vec![EXPLODE; n] }))).await;
        }
        ids.push(id);
    }
    let mut out = Vec::new();
    for id in ids {
        let (_, bytes) = call(app, "GET", &format!("/v1/sessions/{id}"), None).await;
        out.push((id, bytes));
    }
    out
}
