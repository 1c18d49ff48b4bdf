use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, GatewayError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedExchange {
    pub system: String,
    pub user: String,
    pub response: String,
}

/// Wraps a backend and keeps every successful exchange, in call order.
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<Vec<RecordedExchange>>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, log: Mutex::new(Vec::new()) }
    }

    pub fn exchanges(&self) -> Vec<RecordedExchange> {
        self.log.lock().expect("recording lock").clone()
    }

    /// Writes the recording as JSON lines.
    pub fn save(&self, path: &Path) -> Result<(), GatewayError> {
        let mut file = fs::File::create(path)?;
        for ex in self.exchanges() {
            let line = serde_json::to_string(&ex).map_err(|e| GatewayError::InvalidSpec(e.to_string()))?;
            writeln!(file, "{line}")?;
        }
        Ok(())
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, system: &str, user: &str) -> Result<String, GatewayError> {
        let response = self.inner.complete(system, user)?;
        self.log.lock().expect("recording lock").push(RecordedExchange {
            system: system.to_string(),
            user: user.to_string(),
            response: response.clone(),
        });
        Ok(response)
    }
}

/// Serves responses from a recording, keyed by the exact prompt pair.
pub struct ReplayBackend {
    responses: HashMap<(String, String), String>,
}

impl ReplayBackend {
    pub fn new(exchanges: impl IntoIterator<Item = RecordedExchange>) -> Self {
        let responses = exchanges.into_iter().map(|ex| ((ex.system, ex.user), ex.response)).collect();
        Self { responses }
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let raw = fs::read_to_string(path)?;
        let exchanges = raw
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| GatewayError::InvalidSpec(e.to_string())))
            .collect::<Result<Vec<RecordedExchange>, _>>()?;
        Ok(Self::new(exchanges))
    }
}

impl ChatBackend for ReplayBackend {
    fn id(&self) -> &str {
        "replay"
    }

    fn complete(&self, system: &str, user: &str) -> Result<String, GatewayError> {
        self.responses
            .get(&(system.to_string(), user.to_string()))
            .cloned()
            .ok_or_else(|| GatewayError::ReplayMiss(user.chars().take(80).collect()))
    }
}
