//! Wire protocol v1.
//!
//! Request line: `{"id","source","hypothesis","reference","mode"}` in exactly
//! that key order, `reference` may be `null`. Response line:
//! `{"id","score","is_density","spans"}`, with `spans` either `null` or a list of
//! `{"start","end","severity","dimension"}`. A line that begins with
//! `{"error":` aborts the batch. Lines are compact UTF-8 JSON terminated by
//! `\n`. The HTTP variant POSTs a JSON array of requests to `/score` and gets
//! back an array of responses.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perturb::{Dimension, MqmAnnotation, Severity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Qe,
    Ref,
    Hybrid,
}

impl Mode {
    pub fn needs_reference(self) -> bool {
        !matches!(self, Mode::Qe)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Qe => "qe",
            Mode::Ref => "ref",
            Mode::Hybrid => "hybrid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub id: String,
    pub source: String,
    pub hypothesis: String,
    pub reference: Option<String>,
    pub mode: Mode,
}

impl ScoreRequest {
    pub fn new(
        id: impl Into<String>,
        source: impl Into<String>,
        hypothesis: impl Into<String>,
        reference: Option<String>,
        mode: Mode,
    ) -> Self {
        Self {
            id: id.into(),
            source: source.into(),
            hypothesis: hypothesis.into(),
            reference,
            mode,
        }
    }

    /// Request with the reference attached only when the mode uses it.
    pub fn for_mode(id: impl Into<String>, source: &str, hypothesis: &str, reference: &str, mode: Mode) -> Self {
        let reference = mode.needs_reference().then(|| reference.to_string());
        Self::new(id, source, hypothesis, reference, mode)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireSpan {
    pub start: usize,
    pub end: usize,
    pub severity: Severity,
    pub dimension: Dimension,
}

impl From<&WireSpan> for MqmAnnotation {
    fn from(s: &WireSpan) -> Self {
        MqmAnnotation {
            span: [s.start, s.end],
            severity: s.severity,
            dimension: s.dimension,
            note: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub id: String,
    pub score: f64,
    pub is_density: bool,
    pub spans: Option<Vec<WireSpan>>,
}

impl ScoreResponse {
    pub fn annotations(&self) -> Vec<MqmAnnotation> {
        self.spans.iter().flatten().map(MqmAnnotation::from).collect()
    }
}

pub fn encode_request(req: &ScoreRequest) -> Result<String> {
    let mut line = serde_json::to_string(req)?;
    line.push('\n');
    Ok(line)
}

pub fn encode_response(resp: &ScoreResponse) -> Result<String> {
    let mut line = serde_json::to_string(resp)?;
    line.push('\n');
    Ok(line)
}

pub fn is_error_line(line: &str) -> bool {
    line.starts_with("{\"error\":")
}

/// Extract the message of an `{"error": ...}` line, falling back to the raw line.
pub fn error_message(line: &str) -> String {
    #[derive(Deserialize)]
    struct ErrorLine {
        error: serde_json::Value,
    }
    match serde_json::from_str::<ErrorLine>(line) {
        Ok(ErrorLine {
            error: serde_json::Value::String(s),
        }) => s,
        Ok(ErrorLine { error }) => error.to_string(),
        Err(_) => line.to_string(),
    }
}

pub fn decode_response(line: &str) -> Result<ScoreResponse> {
    if is_error_line(line) {
        return Err(Error::Adapter(error_message(line)));
    }
    let resp: ScoreResponse =
        serde_json::from_str(line).map_err(|e| Error::Protocol(format!("malformed response line: {e}")))?;
    if !resp.score.is_finite() {
        return Err(Error::Protocol(format!("non-finite score for id {}", resp.id)));
    }
    Ok(resp)
}

/// Request-side preconditions: unique ids, references present where the mode needs one.
pub fn validate_requests(requests: &[ScoreRequest]) -> Result<()> {
    let mut ids = BTreeSet::new();
    for r in requests {
        if !ids.insert(r.id.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate request id {}", r.id)));
        }
        if r.mode.needs_reference() && r.reference.is_none() {
            return Err(Error::InvalidInput(format!(
                "request {}: mode {} requires a reference",
                r.id,
                r.mode.as_str()
            )));
        }
    }
    Ok(())
}

/// Collects responses that may arrive in any order and releases them in request order.
pub struct Reorder<'a> {
    requests: &'a [ScoreRequest],
    slots: HashMap<&'a str, usize>,
    filled: Vec<Option<ScoreResponse>>,
    count: usize,
}

impl<'a> Reorder<'a> {
    pub fn new(requests: &'a [ScoreRequest]) -> Self {
        Self {
            requests,
            slots: requests.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect(),
            filled: vec![None; requests.len()],
            count: 0,
        }
    }

    pub fn accept(&mut self, resp: ScoreResponse) -> Result<()> {
        let Some(&slot) = self.slots.get(resp.id.as_str()) else {
            return Err(Error::Protocol(format!("unknown response id {}", resp.id)));
        };
        if self.filled[slot].is_some() {
            return Err(Error::Protocol(format!("duplicate response id {}", resp.id)));
        }
        self.filled[slot] = Some(resp);
        self.count += 1;
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.count == self.requests.len()
    }

    pub fn first_missing(&self) -> Option<&str> {
        self.filled
            .iter()
            .position(Option::is_none)
            .map(|i| self.requests[i].id.as_str())
    }

    pub fn finish(self) -> Result<Vec<ScoreResponse>> {
        if let Some(id) = self.first_missing() {
            return Err(Error::Protocol(format!("missing response for id {id}")));
        }
        Ok(self.filled.into_iter().map(|r| r.expect("complete")).collect())
    }
}
