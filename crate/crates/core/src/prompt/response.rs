use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingResponse {
    pub ranking: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationReason {
    Malformed,
    MissingKey,
    WrongType,
    DuplicateId,
    OutOfCandidate,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub reason: ViolationReason,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.reason, self.detail)
    }
}

fn violation(reason: ViolationReason, detail: impl Into<String>) -> Violation {
    Violation { reason, detail: detail.into() }
}

/// Strict validation of `{"ranking": [...]}`. The object must hold exactly
/// that key; ids may be strings or integers and are normalized to strings.
pub fn parse_response<S: AsRef<str>>(text: &str, candidates: &[S]) -> Result<RankingResponse, Violation> {
    use ViolationReason::*;
    let value: Value = serde_json::from_str(text.trim()).map_err(|e| violation(Malformed, e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(violation(Malformed, "reply is not a JSON object"));
    };
    let Some(list) = obj.get("ranking") else {
        return Err(violation(MissingKey, "no \"ranking\" key"));
    };
    if obj.len() != 1 {
        return Err(violation(Malformed, "unexpected keys besides \"ranking\""));
    }
    let Value::Array(items) = list else {
        return Err(violation(WrongType, "\"ranking\" is not an array"));
    };
    if items.is_empty() {
        return Err(violation(Empty, "empty ranking"));
    }
    let allowed: HashSet<&str> = candidates.iter().map(|c| c.as_ref()).collect();
    let mut seen = HashSet::new();
    let mut ranking = Vec::with_capacity(items.len());
    for item in items {
        let id = match item {
            Value::String(s) => s.clone(),
            Value::Number(n) if n.is_i64() || n.is_u64() => n.to_string(),
            other => return Err(violation(WrongType, format!("id {other} is not a string or integer"))),
        };
        if !seen.insert(id.clone()) {
            return Err(violation(DuplicateId, id));
        }
        if !allowed.contains(id.as_str()) {
            return Err(violation(OutOfCandidate, id));
        }
        ranking.push(id);
    }
    Ok(RankingResponse { ranking })
}
