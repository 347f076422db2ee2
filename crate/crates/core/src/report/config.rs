//! Audit configuration: a single JSON document.
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{CorpusFormat, TokenCounter};
use crate::error::{Error, Result};
use crate::gateway::{Mode, ScorerSpec};
use crate::perturb::{Dimension, PerturbAdapter, Rule, Severity};
use crate::suite::{validate_thresholds, SuiteParams, DEFAULT_THRESHOLDS};

/// Environment variable consulted when `--config` is not given.
pub const CONFIG_ENV: &str = "LENBIAS_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusInput {
    pub path: PathBuf,
    /// Inferred from the extension when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<CorpusFormat>,
    /// Language label in tables; defaults to the corpus lang_pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// JSONL file of chunk candidates (`chunk_id`, `source`, `reference`, `candidates`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkInput {
    pub path: PathBuf,
    /// Translation direction label, e.g. `en-de`.
    pub direction: String,
}

fn d_max_segments() -> usize {
    5
}
fn d_window() -> usize {
    500
}
fn d_min_chunk() -> usize {
    200
}
fn d_max_chunk() -> usize {
    500
}
fn d_thresholds() -> Vec<f64> {
    DEFAULT_THRESHOLDS.to_vec()
}
fn d_separator() -> String {
    " ".into()
}
fn d_ci_level() -> f64 {
    0.95
}
fn d_bin_width() -> f64 {
    1.0
}
fn d_lo() -> f64 {
    -25.0
}
fn d_hi() -> f64 {
    0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default = "d_max_segments")]
    pub max_segments: usize,
    #[serde(default = "d_window")]
    pub window_tokens: usize,
    #[serde(default = "d_min_chunk")]
    pub min_chunk_tokens: usize,
    #[serde(default = "d_max_chunk")]
    pub max_chunk_tokens: usize,
    #[serde(default = "d_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default = "d_separator")]
    pub separator: String,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            max_segments: d_max_segments(),
            window_tokens: d_window(),
            min_chunk_tokens: d_min_chunk(),
            max_chunk_tokens: d_max_chunk(),
            thresholds: d_thresholds(),
            separator: d_separator(),
        }
    }
}

impl SuiteConfig {
    pub fn passage_params(&self) -> SuiteParams {
        SuiteParams {
            max_segments: self.max_segments,
            window_tokens: self.window_tokens,
            separator: self.separator.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    #[serde(flatten)]
    pub spec: ScorerSpec,
    /// Mode for hypothesis-pair requests. Passage requests are always `qe`.
    #[serde(default)]
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbConfig {
    pub severity: Severity,
    pub dimension: Dimension,
    /// Fixed rule; otherwise the first applicable rule of the category is used per group.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<Rule>,
    /// Defaults to the audit seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adapter: Option<PerturbAdapter>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramConfig {
    #[serde(default = "d_bin_width")]
    pub bin_width: f64,
    #[serde(default = "d_lo")]
    pub lo: f64,
    #[serde(default = "d_hi")]
    pub hi: f64,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self {
            bin_width: d_bin_width(),
            lo: d_lo(),
            hi: d_hi(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default)]
    pub corpora: Vec<CorpusInput>,
    #[serde(default)]
    pub chunks: Vec<ChunkInput>,
    #[serde(default)]
    pub counter: TokenCounter,
    #[serde(default)]
    pub suite: SuiteConfig,
    pub scorers: Vec<ScorerConfig>,
    #[serde(default)]
    pub perturbations: Vec<PerturbConfig>,
    #[serde(default)]
    pub histogram: HistogramConfig,
    #[serde(default = "d_ci_level")]
    pub ci_level: f64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl AuditConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parse a config file and resolve relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.corpora.iter_mut().for_each(|c| fix(&mut c.path));
        self.chunks.iter_mut().for_each(|c| fix(&mut c.path));
        if let Some(d) = self.out_dir.as_mut() {
            fix(d);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scorers.is_empty() {
            return Err(Error::Config("at least one scorer is required".into()));
        }
        self.validate_inputs()
    }

    /// Everything except the scorer list.
    pub fn validate_inputs(&self) -> Result<()> {
        if self.corpora.is_empty() && self.chunks.is_empty() {
            return Err(Error::Config("no corpora or chunk files given".into()));
        }
        for p in self
            .corpora
            .iter()
            .map(|c| &c.path)
            .chain(self.chunks.iter().map(|c| &c.path))
        {
            if !p.is_file() {
                return Err(Error::Config(format!("input {} does not exist", p.display())));
            }
        }
        let mut names = std::collections::BTreeSet::new();
        for s in &self.scorers {
            s.spec.validate()?;
            if !names.insert(s.spec.name.as_str()) {
                return Err(Error::Config(format!("duplicate scorer name {}", s.spec.name)));
            }
        }
        let mut dirs = std::collections::BTreeSet::new();
        for c in &self.chunks {
            if !dirs.insert(c.direction.as_str()) {
                return Err(Error::Config(format!("duplicate chunk direction {}", c.direction)));
            }
        }
        let s = &self.suite;
        if s.max_segments == 0 || s.window_tokens == 0 {
            return Err(Error::Config("max_segments and window_tokens must be >= 1".into()));
        }
        if s.min_chunk_tokens > s.max_chunk_tokens {
            return Err(Error::Config("min_chunk_tokens exceeds max_chunk_tokens".into()));
        }
        validate_thresholds(&s.thresholds).map_err(|e| Error::Config(e.to_string()))?;
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::Config(format!("ci_level {} outside (0, 1)", self.ci_level)));
        }
        let h = &self.histogram;
        if !(h.bin_width > 0.0 && h.lo < h.hi) {
            return Err(Error::Config("histogram needs bin_width > 0 and lo < hi".into()));
        }
        for p in &self.perturbations {
            if let Some(rule) = p.rule {
                if rule.category() != (p.severity, p.dimension) {
                    return Err(Error::Config(format!(
                        "rule {} does not belong to {} {}",
                        rule.name(),
                        p.severity.as_str(),
                        p.dimension.as_str()
                    )));
                }
            }
        }
        if self.counter.scheme == crate::corpus::CounterScheme::External && self.counter.external_command.is_none() {
            return Err(Error::Config("external counter needs external_command".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 over the canonical JSON serialization of the config,
    /// excluding `out_dir` so the output location does not change the report.
    pub fn digest(&self) -> Result<String> {
        let mut c = self.clone();
        c.out_dir = None;
        Ok(sha256_hex(&serde_json::to_vec(&c)?))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
