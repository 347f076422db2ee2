//! Uniform scoring over built-in scorers and external adapters.
//!
//! [`score_batch`] returns one response per request in request order, or an
//! error and nothing else.

pub mod builtin;
pub mod conformance;
pub mod protocol;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::TokenCounter;
use crate::error::{Error, Result};
use crate::normalize;
use crate::process::{describe_exit, LineEvent, LineProcess};

pub use builtin::{lexical_overlap_score, synthetic_biased_score, SyntheticParams};
pub use protocol::{Mode, ScoreRequest, ScoreResponse, WireSpan};

pub const DEFAULT_TIMEOUT_SECS: u64 = 120;

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_SECS
}

fn default_workers() -> usize {
    1
}

/// Which direction of the score scale means better quality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Larger is better: MQM-style negative penalties, CometKiwi-style probabilities.
    #[default]
    HigherBetter,
    /// Smaller is better, e.g. a positive 0-25 error scale. Negated on ingestion.
    LowerBetter,
}

impl Orientation {
    /// Map a raw score onto the internal higher-is-better scale.
    pub fn orient(self, score: f64) -> f64 {
        match self {
            Orientation::HigherBetter => score,
            Orientation::LowerBetter => -score,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Orientation::HigherBetter => Orientation::LowerBetter,
            Orientation::LowerBetter => Orientation::HigherBetter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ScorerKind {
    SyntheticBiased(SyntheticParams),
    LexicalOverlap,
    ExternalSubprocess {
        command: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
        /// Number of adapter processes; the batch is split into contiguous sub-batches.
        #[serde(default = "default_workers")]
        workers: usize,
    },
    ExternalHttp {
        url: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
    /// Rescales an inner density scorer back to ratings.
    DensityWrapped {
        inner: Box<ScorerSpec>,
        counter: TokenCounter,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ScorerKind,
    #[serde(default)]
    pub declared_orientation: Orientation,
}

impl ScorerSpec {
    pub fn new(name: impl Into<String>, kind: ScorerKind) -> Self {
        Self {
            name: name.into(),
            kind,
            declared_orientation: Orientation::HigherBetter,
        }
    }

    pub fn synthetic(name: impl Into<String>, params: SyntheticParams) -> Self {
        Self::new(name, ScorerKind::SyntheticBiased(params))
    }

    pub fn subprocess(name: impl Into<String>, command: impl Into<String>, timeout_secs: u64) -> Self {
        Self::new(
            name,
            ScorerKind::ExternalSubprocess {
                command: command.into(),
                timeout_secs,
                workers: 1,
            },
        )
    }

    pub fn http(name: impl Into<String>, url: impl Into<String>, timeout_secs: u64) -> Self {
        Self::new(
            name,
            ScorerKind::ExternalHttp {
                url: url.into(),
                timeout_secs,
            },
        )
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.declared_orientation = orientation;
        self
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ScorerKind::SyntheticBiased(_) => "synthetic_biased",
            ScorerKind::LexicalOverlap => "lexical_overlap",
            ScorerKind::ExternalSubprocess { .. } => "external_subprocess",
            ScorerKind::ExternalHttp { .. } => "external_http",
            ScorerKind::DensityWrapped { .. } => "density_wrapped",
        }
    }

    /// Scorers that cannot run without a reference translation.
    pub fn requires_reference(&self) -> bool {
        match &self.kind {
            ScorerKind::LexicalOverlap => true,
            ScorerKind::DensityWrapped { inner, .. } => inner.requires_reference(),
            _ => false,
        }
    }

    /// Override the per-request timeout of external scorers, recursively.
    pub fn set_timeout(&mut self, secs: u64) {
        match &mut self.kind {
            ScorerKind::ExternalSubprocess { timeout_secs, .. } | ScorerKind::ExternalHttp { timeout_secs, .. } => {
                *timeout_secs = secs
            }
            ScorerKind::DensityWrapped { inner, .. } => inner.set_timeout(secs),
            _ => {}
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.+".contains(c))
        {
            return Err(Error::Config(format!(
                "scorer name {:?} must be non-empty and use only [A-Za-z0-9-_.+]",
                self.name
            )));
        }
        match &self.kind {
            ScorerKind::SyntheticBiased(p) => p.validate(),
            ScorerKind::LexicalOverlap => Ok(()),
            ScorerKind::ExternalSubprocess { command, workers, .. } => {
                if command.trim().is_empty() || *workers == 0 {
                    Err(Error::Config(format!(
                        "scorer {}: needs a command and >= 1 worker",
                        self.name
                    )))
                } else {
                    Ok(())
                }
            }
            ScorerKind::ExternalHttp { url, .. } => {
                if url.starts_with("http://") || url.starts_with("https://") {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "scorer {}: url must start with http://",
                        self.name
                    )))
                }
            }
            ScorerKind::DensityWrapped { inner, .. } => inner.validate(),
        }
    }
}

/// Score a batch. The result is aligned with `requests`.
pub fn score_batch(scorer: &ScorerSpec, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>> {
    protocol::validate_requests(requests)?;
    if requests.is_empty() {
        return Ok(Vec::new());
    }
    match &scorer.kind {
        ScorerKind::SyntheticBiased(params) => {
            params.validate()?;
            let counts = params
                .counter
                .count_many(&requests.iter().map(|r| r.hypothesis.as_str()).collect::<Vec<_>>())?;
            Ok(requests
                .iter()
                .zip(counts)
                .map(|(r, n)| ScoreResponse {
                    id: r.id.clone(),
                    score: builtin::synthetic_from_tokens(params, &r.id, n),
                    is_density: params.emit_density,
                    spans: None,
                })
                .collect())
        }
        ScorerKind::LexicalOverlap => requests
            .iter()
            .map(|r| {
                Ok(ScoreResponse {
                    id: r.id.clone(),
                    score: lexical_overlap_score(r)?,
                    is_density: false,
                    spans: None,
                })
            })
            .collect(),
        ScorerKind::ExternalSubprocess {
            command,
            timeout_secs,
            workers,
        } => score_subprocess(command, requests, Duration::from_secs(*timeout_secs), *workers),
        ScorerKind::ExternalHttp { url, timeout_secs } => score_http(url, requests, Duration::from_secs(*timeout_secs)),
        ScorerKind::DensityWrapped { inner, counter } => {
            let inner_responses = score_batch(inner, requests)?;
            normalize::rescale_density_responses(inner_responses, requests, counter)
        }
    }
}

fn score_subprocess(
    command: &str,
    requests: &[ScoreRequest],
    timeout: Duration,
    workers: usize,
) -> Result<Vec<ScoreResponse>> {
    let workers = workers.clamp(1, requests.len());
    if workers == 1 {
        return score_one_process(command, requests, timeout);
    }
    let chunk = requests.len().div_ceil(workers);
    let results: Vec<Result<Vec<ScoreResponse>>> = std::thread::scope(|s| {
        let handles: Vec<_> = requests
            .chunks(chunk)
            .map(|part| s.spawn(move || score_one_process(command, part, timeout)))
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::Adapter("adapter worker panicked".into())))
            })
            .collect()
    });
    let mut out = Vec::with_capacity(requests.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

fn score_one_process(command: &str, requests: &[ScoreRequest], timeout: Duration) -> Result<Vec<ScoreResponse>> {
    let mut input = String::new();
    for r in requests {
        input.push_str(&protocol::encode_request(r)?);
    }
    let mut proc = LineProcess::spawn(command, input)?;
    let mut reorder = protocol::Reorder::new(requests);
    loop {
        match proc.next_line(timeout)? {
            LineEvent::Eof => break,
            LineEvent::Line(line) => {
                if line.trim().is_empty() {
                    continue;
                }
                let resp = match protocol::decode_response(&line) {
                    Ok(r) => r,
                    Err(e) => {
                        proc.kill();
                        return Err(e);
                    }
                };
                if let Err(e) = reorder.accept(resp) {
                    proc.kill();
                    return Err(e);
                }
            }
        }
    }
    if let Some(missing) = reorder.first_missing().map(str::to_string) {
        let (status, tail) = proc.finish()?;
        return Err(if status.success() {
            Error::Protocol(format!("missing response for id {missing}"))
        } else {
            Error::Adapter(format!(
                "{} before answering id {missing}",
                describe_exit(status, &tail)
            ))
        });
    }
    let (status, tail) = proc.finish()?;
    if !status.success() {
        return Err(Error::Adapter(describe_exit(status, &tail)));
    }
    reorder.finish()
}

fn score_http(url: &str, requests: &[ScoreRequest], timeout: Duration) -> Result<Vec<ScoreResponse>> {
    let endpoint = if url.trim_end_matches('/').ends_with("/score") {
        url.to_string()
    } else {
        format!("{}/score", url.trim_end_matches('/'))
    };
    let body = serde_json::to_string(requests)?;
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let mut resp = agent
        .post(&endpoint)
        .header("content-type", "application/json")
        .send(body)
        .map_err(|e| Error::Adapter(format!("POST {endpoint}: {e}")))?;
    let status = resp.status();
    let text = resp
        .body_mut()
        .with_config()
        .limit(u64::MAX)
        .read_to_string()
        .map_err(|e| Error::Adapter(format!("POST {endpoint}: {e}")))?;
    let trimmed = text.trim_start();
    if protocol::is_error_line(trimmed) {
        return Err(Error::Adapter(protocol::error_message(trimmed.trim_end())));
    }
    if !status.is_success() {
        return Err(Error::Adapter(format!("POST {endpoint}: HTTP {}", status.as_u16())));
    }
    let responses: Vec<ScoreResponse> =
        serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("malformed response array: {e}")))?;
    let mut reorder = protocol::Reorder::new(requests);
    for r in responses {
        if !r.score.is_finite() {
            return Err(Error::Protocol(format!("non-finite score for id {}", r.id)));
        }
        reorder.accept(r)?;
    }
    reorder.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_json_shape() {
        let spec = ScorerSpec::synthetic("bias", SyntheticParams::biased(0.01, 0.0, 3));
        let json = serde_json::to_value(&spec).unwrap();
        assert_eq!(json["kind"], "synthetic_biased");
        assert_eq!(json["params"]["alpha"], 0.01);
        assert_eq!(json["declared_orientation"], "higher_better");
        let back: ScorerSpec = serde_json::from_value(json).unwrap();
        assert_eq!(back, spec);

        let lex: ScorerSpec = serde_json::from_str(r#"{"name":"lex","kind":"lexical_overlap"}"#).unwrap();
        assert_eq!(lex.kind, ScorerKind::LexicalOverlap);
        let ext: ScorerSpec = serde_json::from_str(
            r#"{"name":"mx","kind":"external_subprocess","params":{"command":"python3 a.py"},"declared_orientation":"lower_better"}"#,
        )
        .unwrap();
        assert_eq!(ext.declared_orientation, Orientation::LowerBetter);
        assert!(matches!(
            ext.kind,
            ScorerKind::ExternalSubprocess {
                timeout_secs: 120,
                workers: 1,
                ..
            }
        ));
    }

    #[test]
    fn empty_batch() {
        let spec = ScorerSpec::subprocess("never-run", "false", 1);
        assert!(score_batch(&spec, &[]).unwrap().is_empty());
    }

    #[test]
    fn names_validated() {
        assert!(ScorerSpec::new("a b", ScorerKind::LexicalOverlap).validate().is_err());
        assert!(ScorerSpec::new("ok-1.2", ScorerKind::LexicalOverlap).validate().is_ok());
        assert!(ScorerSpec::http("h", "localhost:80", 1).validate().is_err());
    }

    #[test]
    fn orientation_negates() {
        assert_eq!(Orientation::LowerBetter.orient(3.0), -3.0);
        assert_eq!(Orientation::HigherBetter.orient(3.0), 3.0);
        assert_eq!(Orientation::LowerBetter.flipped(), Orientation::HigherBetter);
    }

    #[test]
    fn builtin_batch_preserves_order() {
        let reqs: Vec<_> = (0..5)
            .map(|i| ScoreRequest::new(format!("r{i}"), "s", vec!["w"; i + 1].join(" "), None, Mode::Qe))
            .collect();
        let spec = ScorerSpec::synthetic("b", SyntheticParams::biased(1.0, 0.0, 0));
        let out = score_batch(&spec, &reqs).unwrap();
        let scores: Vec<f64> = out.iter().map(|r| r.score).collect();
        assert_eq!(scores, vec![-1.0, -2.0, -3.0, -4.0, -5.0]);
        assert!(out.iter().zip(&reqs).all(|(a, b)| a.id == b.id));
    }

    #[test]
    fn lexical_batch_fails_atomically_in_qe_mode() {
        let reqs = vec![
            ScoreRequest::new("a", "s", "x", Some("x".into()), Mode::Ref),
            ScoreRequest::new("b", "s", "x", None, Mode::Qe),
        ];
        let spec = ScorerSpec::new("lex", ScorerKind::LexicalOverlap);
        assert!(matches!(score_batch(&spec, &reqs), Err(Error::Scorer(_))));
    }
}
