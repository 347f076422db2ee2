//! Protocol conformance runner for scorer adapters.
//!
//! Each vector case is sent to a fresh adapter process. Cases that expect
//! `ok` must get back exactly one response per request id, in any order,
//! followed by a clean exit. Ids carry multi-script text, so echoing them back
//! also checks UTF-8 fidelity. Cases that expect `error` must produce a
//! `{"error": ...}` line and a nonzero exit.

use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::protocol::{self, ScoreRequest};
use crate::process::{LineEvent, LineProcess};

pub const BUILTIN_VECTORS: &str = include_str!("../../conformance/vectors.jsonl");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expectation {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceCase {
    pub name: String,
    pub requests: Vec<ScoreRequest>,
    pub expect: Expectation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConformanceReport {
    pub cases: Vec<CaseOutcome>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
    }
}

pub fn parse_vectors(text: &str) -> Result<Vec<ConformanceCase>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::MalformedRecord {
                path: "conformance vectors".into(),
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

pub fn builtin_vectors() -> Vec<ConformanceCase> {
    parse_vectors(BUILTIN_VECTORS).expect("shipped vectors parse")
}

pub fn run_conformance(command: &str, cases: &[ConformanceCase], timeout: Duration) -> ConformanceReport {
    let cases = cases
        .iter()
        .map(|case| {
            let (passed, detail) = match run_case(command, case, timeout) {
                Ok(()) => (true, "ok".to_string()),
                Err(msg) => (false, msg),
            };
            CaseOutcome {
                name: case.name.clone(),
                passed,
                detail,
            }
        })
        .collect();
    ConformanceReport { cases }
}

fn run_case(command: &str, case: &ConformanceCase, timeout: Duration) -> std::result::Result<(), String> {
    let mut input = String::new();
    for r in &case.requests {
        input.push_str(&protocol::encode_request(r).map_err(|e| e.to_string())?);
    }
    let mut proc = LineProcess::spawn(command, input).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    loop {
        match proc.next_line(timeout).map_err(|e| e.to_string())? {
            LineEvent::Eof => break,
            LineEvent::Line(l) if l.trim().is_empty() => {}
            LineEvent::Line(l) => lines.push(l),
        }
    }
    let (status, _) = proc.finish().map_err(|e| e.to_string())?;

    match case.expect {
        Expectation::Error => {
            if !lines.iter().any(|l| protocol::is_error_line(l)) {
                return Err("expected an error line".into());
            }
            if status.success() {
                return Err("expected a nonzero exit after the error line".into());
            }
            Ok(())
        }
        Expectation::Ok => {
            let wanted: BTreeSet<&str> = case.requests.iter().map(|r| r.id.as_str()).collect();
            let mut seen = BTreeSet::new();
            for line in &lines {
                let resp = protocol::decode_response(line).map_err(|e| e.to_string())?;
                if !wanted.contains(resp.id.as_str()) {
                    return Err(format!("unknown id {:?}", resp.id));
                }
                if !seen.insert(resp.id.clone()) {
                    return Err(format!("duplicate id {:?}", resp.id));
                }
            }
            if let Some(missing) = case.requests.iter().find(|r| !seen.contains(&r.id)) {
                return Err(format!("missing id {:?}", missing.id));
            }
            if !status.success() {
                return Err(format!("adapter exited with {status}"));
            }
            Ok(())
        }
    }
}
