//! OpenAI-compatible HTTP backend for chat completion and embeddings.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{ChatBackend, Embedder, EmbeddingVector, GatewayError};

pub const ENV_BASE_URL: &str = "JINGFANG_API_BASE";
pub const ENV_API_KEY: &str = "JINGFANG_API_KEY";
pub const ENV_CHAT_MODEL: &str = "JINGFANG_CHAT_MODEL";
pub const ENV_EMBED_MODEL: &str = "JINGFANG_EMBED_MODEL";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub chat_model: String,
    pub embed_model: String,
    pub timeout: Duration,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    /// Requests per second; `None` disables rate limiting.
    pub rate_limit: Option<f64>,
    pub burst: u32,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            api_key: None,
            chat_model: "gpt-4o".into(),
            embed_model: "text-embedding-3-small".into(),
            timeout: Duration::from_secs(30),
            max_attempts: 3,
            initial_backoff: Duration::from_millis(250),
            rate_limit: None,
            burst: 1,
        }
    }
}

impl HttpConfig {
    /// Defaults overridden by `JINGFANG_API_*` environment variables.
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        if let Ok(v) = std::env::var(ENV_BASE_URL) {
            cfg.base_url = v;
        }
        cfg.api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        if let Ok(v) = std::env::var(ENV_CHAT_MODEL) {
            cfg.chat_model = v;
        }
        if let Ok(v) = std::env::var(ENV_EMBED_MODEL) {
            cfg.embed_model = v;
        }
        cfg
    }
}

/// Blocking token bucket.
#[derive(Debug)]
pub struct TokenBucket {
    rate: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(rate_per_sec: f64, burst: u32) -> Self {
        let capacity = f64::from(burst.max(1));
        Self { rate: rate_per_sec, capacity, state: Mutex::new((capacity, Instant::now())) }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut guard = self.state.lock().expect("token bucket lock");
                let (tokens, last) = &mut *guard;
                let now = Instant::now();
                *tokens = (*tokens + now.duration_since(*last).as_secs_f64() * self.rate).min(self.capacity);
                *last = now;
                if *tokens >= 1.0 {
                    *tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - *tokens) / self.rate)
            };
            thread::sleep(wait);
        }
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    bucket: Option<TokenBucket>,
    id: String,
}

enum Attempt {
    Retryable(Option<u16>, String, bool),
    Fatal(Option<u16>, String),
}

impl HttpBackend {
    /// Must not be called from inside an async runtime.
    pub fn new(config: HttpConfig) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GatewayError::InvalidSpec(e.to_string()))?;
        let bucket = config.rate_limit.map(|r| TokenBucket::new(r, config.burst));
        let id = format!("http:{}", config.chat_model);
        Ok(Self { config, client, bucket, id })
    }

    fn post(&self, endpoint: &str, body: &Value) -> Result<Value, GatewayError> {
        let url = format!("{}/{}", self.config.base_url.trim_end_matches('/'), endpoint);
        let mut backoff = self.config.initial_backoff;
        let attempts = self.config.max_attempts.max(1);
        let mut last: Option<(Option<u16>, String, bool)> = None;
        for attempt in 1..=attempts {
            if let Some(bucket) = &self.bucket {
                bucket.acquire();
            }
            match self.try_post(&url, body) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(status, message)) => {
                    return Err(GatewayError::Http { status, attempts: attempt, message })
                }
                Err(Attempt::Retryable(status, message, timed_out)) => {
                    log::warn!("{url} attempt {attempt}/{attempts} failed: {message}");
                    last = Some((status, message, timed_out));
                    if attempt < attempts {
                        thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        match last {
            Some((_, _, true)) => Err(GatewayError::Timeout { attempts }),
            Some((status, message, false)) => Err(GatewayError::Http { status, attempts, message }),
            None => unreachable!("at least one attempt is made"),
        }
    }

    fn try_post(&self, url: &str, body: &Value) -> Result<Value, Attempt> {
        let mut req = self.client.post(url).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Attempt::Retryable(None, e.to_string(), e.is_timeout()))?;
        let status = resp.status();
        if status.is_success() {
            return resp.json::<Value>().map_err(|e| Attempt::Fatal(Some(status.as_u16()), e.to_string()));
        }
        let text = resp.text().unwrap_or_default();
        if status.as_u16() == 429 || status.is_server_error() {
            Err(Attempt::Retryable(Some(status.as_u16()), text, false))
        } else {
            Err(Attempt::Fatal(Some(status.as_u16()), text))
        }
    }
}

impl ChatBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, system: &str, user: &str) -> Result<String, GatewayError> {
        let body = json!({
            "model": self.config.chat_model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let value = self.post("chat/completions", &body)?;
        value["choices"][0]["message"]["content"].as_str().map(str::to_string).ok_or_else(|| GatewayError::Http {
            status: None,
            attempts: 1,
            message: "response has no choices[0].message.content".into(),
        })
    }
}

impl Embedder for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        Ok(self.embed(&[text])?.remove(0))
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::EmptyInput);
        }
        let body = json!({ "model": self.config.embed_model, "input": texts });
        let value = self.post("embeddings", &body)?;
        let data = value["data"].as_array().ok_or_else(|| GatewayError::Http {
            status: None,
            attempts: 1,
            message: "response has no data array".into(),
        })?;
        let mut out = Vec::with_capacity(data.len());
        for item in data {
            let values: Vec<f64> =
                item["embedding"].as_array().map(|a| a.iter().filter_map(Value::as_f64).collect()).unwrap_or_default();
            out.push(EmbeddingVector::normalized(values));
        }
        if out.len() != texts.len() {
            return Err(GatewayError::Http {
                status: None,
                attempts: 1,
                message: format!("expected {} embeddings, got {}", texts.len(), out.len()),
            });
        }
        let dim = out[0].dim();
        if let Some(bad) = out.iter().find(|v| v.dim() != dim) {
            return Err(GatewayError::DimensionMismatch { left: dim, right: bad.dim() });
        }
        Ok(out)
    }
}
