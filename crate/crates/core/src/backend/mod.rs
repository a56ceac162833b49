//! Completion backends: an HTTP JSON client for hosted models and a
//! deterministic simulated oracle, plus intent inference and the synthetic
//! world generator the oracle is built on.

mod http;
mod sim;
mod world;

use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::CheckIn;
use crate::prompt::RenderedPrompt;
use crate::taxonomy::{category_group, IntentVocabulary, TimeSlot};

pub use http::HttpBackend;
pub use sim::{parse_prompt, OracleParams, ParsedPrompt, SimOracle};
pub use world::{generate_synthetic_world, HiddenPreference, SimPoi, SimUser, SimWorld, WorldConfig};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    #[default]
    Sim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_s: f64,
    pub max_retries: u32,
    /// First backoff delay; doubles per retry.
    pub backoff_ms: u64,
    /// Dotted path to the completion text in the reply JSON.
    pub response_path: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub max_in_flight: usize,
    /// Ask the model for intents instead of using the rule table.
    pub infer_intents: bool,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Sim,
            endpoint: String::new(),
            model: "gpt-4o-mini".into(),
            temperature: 0.0,
            timeout_s: 30.0,
            max_retries: 3,
            backoff_ms: 500,
            response_path: "choices.0.message.content".into(),
            api_key_env: "LLM_API_KEY".into(),
            max_in_flight: 4,
            infer_intents: true,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(format!("backend.timeout_s must be > 0, got {}", self.timeout_s));
        }
        if self.max_in_flight == 0 {
            return Err("backend.max_in_flight must be >= 1".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("backend.temperature must be in [0, 2], got {}", self.temperature));
        }
        if self.kind == BackendKind::Http && self.endpoint.is_empty() {
            return Err("backend.endpoint is required for the http backend".into());
        }
        Ok(())
    }
}

/// A frozen language model.
pub trait Backend: Send + Sync {
    fn complete(&self, prompt: &RenderedPrompt) -> Result<String, BackendError>;

    /// Free-text reply to the intent question, or `None` when the backend
    /// does not answer it (the rule table is used instead).
    fn intent_reply(&self, _question: &str) -> Option<String> {
        None
    }
}

/// The intent question sent to hosted models.
pub const INTENT_PROMPT: &str = include_str!("intent_prompt.txt");

pub fn intent_question(last: &CheckIn, slot: TimeSlot, vocab: &IntentVocabulary) -> String {
    INTENT_PROMPT
        .replace("{labels}", &vocab.labels.join(", "))
        .replace("{category}", &last.category)
        .replace("{slot}", &slot.label())
}

/// Up to two vocabulary labels from a free-text reply, in reply order.
pub fn parse_intents(reply: &str, vocab: &IntentVocabulary) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for word in reply.split(|c: char| !c.is_alphanumeric()) {
        if let Some(label) = vocab.labels.iter().find(|l| l.eq_ignore_ascii_case(word)) {
            if !out.contains(label) {
                out.push(label.clone());
            }
        }
        if out.len() == 2 {
            break;
        }
    }
    out
}

/// Current intents: the model's answer when it names vocabulary labels,
/// otherwise the rule table keyed by the last venue group and time slot.
pub fn infer_intent(backend: &dyn Backend, last: &CheckIn, slot: TimeSlot, vocab: &IntentVocabulary) -> Vec<String> {
    if let Some(reply) = backend.intent_reply(&intent_question(last, slot, vocab)) {
        let labels = parse_intents(&reply, vocab);
        if !labels.is_empty() {
            return labels;
        }
    }
    vocab.fallback(category_group(&last.category), slot)
}

/// Wraps a backend and counts completion calls.
pub struct CountingBackend<'a> {
    inner: &'a dyn Backend,
    calls: AtomicUsize,
}

impl<'a> CountingBackend<'a> {
    pub fn new(inner: &'a dyn Backend) -> Self {
        CountingBackend { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(AtomicOrdering::SeqCst)
    }
}

impl Backend for CountingBackend<'_> {
    fn complete(&self, prompt: &RenderedPrompt) -> Result<String, BackendError> {
        self.calls.fetch_add(1, AtomicOrdering::SeqCst);
        self.inner.complete(prompt)
    }

    fn intent_reply(&self, question: &str) -> Option<String> {
        self.calls.fetch_add(1, AtomicOrdering::SeqCst);
        self.inner.intent_reply(question)
    }
}
