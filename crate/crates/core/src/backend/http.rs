//! Vendor-neutral chat-completion client over HTTP.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, BackendConfig, BackendError};
use crate::prompt::RenderedPrompt;

pub struct HttpBackend {
    config: BackendConfig,
    api_key: String,
    agent: ureq::Agent,
    in_flight: Mutex<usize>,
    slot_freed: Condvar,
}

enum Attempt {
    Done(String),
    Retry(String),
    Fatal(String),
}

impl HttpBackend {
    /// Reads the API key from the configured environment variable.
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        let key = std::env::var(&config.api_key_env)
            .map_err(|_| BackendError::Config(format!("environment variable {} is not set", config.api_key_env)))?;
        Self::with_api_key(config, key)
    }

    pub fn with_api_key(config: BackendConfig, api_key: impl Into<String>) -> Result<Self, BackendError> {
        if config.endpoint.is_empty() {
            return Err(BackendError::Config("http backend needs an endpoint".into()));
        }
        config.validate().map_err(BackendError::Config)?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpBackend { config, api_key: api_key.into(), agent, in_flight: Mutex::new(0), slot_freed: Condvar::new() })
    }

    fn acquire(&self) {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.config.max_in_flight {
            n = self.slot_freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
    }

    fn release(&self) {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.slot_freed.notify_one();
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let result = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", format!("Bearer {}", self.api_key))
            .send_json(body);
        let mut resp = match result {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        if status == 429 || status >= 500 {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        if !(200..300).contains(&status) {
            return Attempt::Fatal(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()));
        }
        match serde_json::from_str::<Value>(&text) {
            Ok(v) => match extract(&v, &self.config.response_path) {
                Some(s) => Attempt::Done(s),
                None => Attempt::Fatal(format!("reply has no value at {}", self.config.response_path)),
            },
            Err(e) => Attempt::Fatal(format!("reply is not JSON: {e}")),
        }
    }

    /// POSTs `{model, messages, temperature}` with exponential backoff.
    pub fn chat(&self, system: &str, user: &str) -> Result<String, BackendError> {
        let body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": self.config.temperature,
        });
        self.acquire();
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut attempts = 0;
        let outcome = loop {
            attempts += 1;
            match self.attempt(&body) {
                Attempt::Done(s) => break Ok(s),
                Attempt::Fatal(m) => break Err(BackendError::Transport { attempts, message: m }),
                Attempt::Retry(m) if attempts > self.config.max_retries => {
                    break Err(BackendError::Transport { attempts, message: m })
                }
                Attempt::Retry(_) => {
                    std::thread::sleep(delay);
                    delay *= 2;
                }
            }
        };
        self.release();
        outcome
    }
}

/// Follows a dotted path; numeric segments index arrays.
fn extract(v: &Value, path: &str) -> Option<String> {
    let mut cur = v;
    for seg in path.split('.').filter(|s| !s.is_empty()) {
        cur = match seg.parse::<usize>() {
            Ok(i) if cur.is_array() => cur.get(i)?,
            _ => cur.get(seg)?,
        };
    }
    Some(match cur {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    })
}

impl Backend for HttpBackend {
    fn complete(&self, prompt: &RenderedPrompt) -> Result<String, BackendError> {
        self.chat(&prompt.system_text, &prompt.user_text)
    }

    fn intent_reply(&self, question: &str) -> Option<String> {
        if !self.config.infer_intents {
            return None;
        }
        self.chat("You classify the current intent of a city visitor.", question).ok()
    }
}
