//! Probe suites: cumulative passage groups and shorter/longer hypothesis pairs.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TokenCounter};
use crate::error::{Error, Result};

/// Default relative-length thresholds, 2.5% to 15% in 2.5% steps.
pub const DEFAULT_THRESHOLDS: [f64; 6] = [0.025, 0.05, 0.075, 0.10, 0.125, 0.15];

/// Description of the relative length difference, carried into report metadata.
pub const REL_DIFF_CONVENTION: &str = "(longer_tokens - shorter_tokens) / shorter_tokens";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    /// 1-based: passage `i` holds the first `i` segments.
    pub index: usize,
    pub source_text: String,
    pub hypothesis_text: String,
    pub source_tokens: usize,
    pub hypothesis_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageGroup {
    pub doc_id: String,
    pub lang_pair: String,
    pub passages: Vec<Passage>,
}

impl PassageGroup {
    /// Request id of passage `index` (1-based) within a scoring batch.
    pub fn passage_id(&self, index: usize) -> String {
        passage_id(&self.doc_id, index)
    }
}

pub fn passage_id(doc_id: &str, index: usize) -> String {
    format!("{doc_id}/p{index}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteParams {
    pub max_segments: usize,
    pub window_tokens: usize,
    pub separator: String,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self {
            max_segments: 5,
            window_tokens: 500,
            separator: " ".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassageSuite {
    pub groups: Vec<PassageGroup>,
    pub discarded: usize,
}

/// Build `p_1..p_k` for every document, `k = min(max_segments, #segments)`.
///
/// A document is dropped when its final passage exceeds `window_tokens` on
/// either the source or the hypothesis side.
pub fn build_passage_groups(corpus: &Corpus, params: &SuiteParams, counter: &TokenCounter) -> Result<PassageSuite> {
    if corpus.documents.is_empty() {
        return Err(Error::InvalidInput("empty corpus".into()));
    }
    if params.max_segments == 0 || params.window_tokens == 0 {
        return Err(Error::InvalidInput(
            "max_segments and window_tokens must be at least 1".into(),
        ));
    }

    let mut texts: Vec<(String, String)> = Vec::new();
    let mut spans = Vec::with_capacity(corpus.documents.len());
    for doc in &corpus.documents {
        let k = params.max_segments.min(doc.segments.len());
        let start = texts.len();
        let mut src = String::new();
        let mut hyp = String::new();
        for (i, seg) in doc.segments[..k].iter().enumerate() {
            if i > 0 {
                src.push_str(&params.separator);
                hyp.push_str(&params.separator);
            }
            src.push_str(&seg.source_text);
            hyp.push_str(&seg.target_text);
            texts.push((src.clone(), hyp.clone()));
        }
        spans.push(start..texts.len());
    }

    let flat: Vec<&str> = texts.iter().flat_map(|(s, h)| [s.as_str(), h.as_str()]).collect();
    let counts = counter.count_many(&flat)?;

    let mut groups = Vec::new();
    let mut discarded = 0;
    for (doc, span) in corpus.documents.iter().zip(spans) {
        let last = span.end - 1;
        if counts[2 * last] > params.window_tokens || counts[2 * last + 1] > params.window_tokens {
            discarded += 1;
            continue;
        }
        let passages = span
            .enumerate()
            .map(|(i, t)| Passage {
                index: i + 1,
                source_text: texts[t].0.clone(),
                hypothesis_text: texts[t].1.clone(),
                source_tokens: counts[2 * t],
                hypothesis_tokens: counts[2 * t + 1],
            })
            .collect();
        groups.push(PassageGroup {
            doc_id: doc.doc_id.clone(),
            lang_pair: doc.lang_pair.clone(),
            passages,
        });
    }
    Ok(PassageSuite { groups, discarded })
}

/// One source chunk with externally produced candidate translations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkCandidates {
    pub chunk_id: String,
    pub source: String,
    pub reference: String,
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizedText {
    pub text: String,
    pub tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisPair {
    pub chunk_id: String,
    pub source_text: String,
    pub reference_text: String,
    pub shorter: SizedText,
    pub longer: SizedText,
    pub rel_diff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairMember {
    Shorter,
    Longer,
}

impl HypothesisPair {
    pub fn member_id(&self, member: PairMember) -> String {
        pair_member_id(&self.chunk_id, member)
    }
}

pub fn pair_member_id(chunk_id: &str, member: PairMember) -> String {
    match member {
        PairMember::Shorter => format!("{chunk_id}/shorter"),
        PairMember::Longer => format!("{chunk_id}/longer"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSuite {
    pub pairs: Vec<HypothesisPair>,
    /// Chunks whose reference length fell outside the token bounds.
    pub dropped: usize,
}

/// Keep chunks whose reference has `min_tokens..=max_tokens` tokens and pair
/// the shortest and longest candidates (first in input order on ties).
pub fn build_hypothesis_pairs(
    chunks: &[ChunkCandidates],
    min_tokens: usize,
    max_tokens: usize,
    counter: &TokenCounter,
) -> Result<PairSuite> {
    if min_tokens > max_tokens {
        return Err(Error::InvalidInput(format!(
            "min_tokens {min_tokens} > max_tokens {max_tokens}"
        )));
    }
    for chunk in chunks {
        if chunk.candidates.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "chunk {} has {} candidate(s); at least 2 required",
                chunk.chunk_id,
                chunk.candidates.len()
            )));
        }
        if let Some(i) = chunk.candidates.iter().position(|c| c.trim().is_empty()) {
            return Err(Error::InvalidInput(format!(
                "chunk {} candidate {i} is empty",
                chunk.chunk_id
            )));
        }
    }

    let ref_counts = counter.count_many(&chunks.iter().map(|c| c.reference.as_str()).collect::<Vec<_>>())?;
    let mut pairs = Vec::new();
    let mut dropped = 0;
    for (chunk, ref_tokens) in chunks.iter().zip(ref_counts) {
        if ref_tokens < min_tokens || ref_tokens > max_tokens {
            dropped += 1;
            continue;
        }
        let lens = counter.count_many(&chunk.candidates)?;
        let mut lo = 0;
        let mut hi = 0;
        for (i, &n) in lens.iter().enumerate() {
            if n < lens[lo] {
                lo = i;
            }
            if n > lens[hi] {
                hi = i;
            }
        }
        if lens[lo] == 0 {
            return Err(Error::InvalidInput(format!(
                "chunk {}: candidate {lo} counts zero tokens",
                chunk.chunk_id
            )));
        }
        let rel_diff = (lens[hi] - lens[lo]) as f64 / lens[lo] as f64;
        pairs.push(HypothesisPair {
            chunk_id: chunk.chunk_id.clone(),
            source_text: chunk.source.clone(),
            reference_text: chunk.reference.clone(),
            shorter: SizedText {
                text: chunk.candidates[lo].clone(),
                tokens: lens[lo],
            },
            longer: SizedText {
                text: chunk.candidates[hi].clone(),
                tokens: lens[hi],
            },
            rel_diff,
        });
    }
    Ok(PairSuite { pairs, dropped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBin {
    pub threshold: f64,
    pub pairs: Vec<HypothesisPair>,
}

/// Bin `t` holds every pair with `rel_diff >= t`, so bins are nested.
pub fn bin_pairs(pairs: &[HypothesisPair], thresholds: &[f64]) -> Result<Vec<LengthBin>> {
    validate_thresholds(thresholds)?;
    Ok(thresholds
        .iter()
        .map(|&t| LengthBin {
            threshold: t,
            pairs: pairs.iter().filter(|p| p.rel_diff >= t).cloned().collect(),
        })
        .collect())
}

pub fn validate_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::InvalidInput("thresholds must be finite and > 0".into()));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("thresholds must be strictly increasing".into()));
    }
    Ok(())
}
