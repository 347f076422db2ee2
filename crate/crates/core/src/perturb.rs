//! Controlled MQM error insertion into the first segment of a passage group.
//!
//! Each rule edits `s_1` (the hypothesis text of passage 1) once. The same
//! edited `s_1` then replaces the prefix of every passage, so text from `s_2`
//! onward is untouched. Words are whitespace tokens. When `s_1` has fewer
//! than three words (scripts written without spaces), the rules fall back to
//! editing a three-character window.
//!
//! All choices come from [`SplitMix64`] keyed by `(seed, doc_id)`.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{describe_exit, LineEvent, LineProcess};
use crate::rng::SplitMix64;
use crate::suite::PassageGroup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Minor,
    Major,
}

impl Severity {
    /// MQM penalty: minor -1, major -5.
    pub fn penalty(self) -> i64 {
        match self {
            Severity::Minor => -1,
            Severity::Major => -5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Minor => "minor",
            Severity::Major => "major",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Accuracy,
    Fluency,
}

impl Dimension {
    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Accuracy => "accuracy",
            Dimension::Fluency => "fluency",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Major accuracy: add or remove a negation after an auxiliary verb.
    Negation,
    /// Major accuracy: swap a content word for an unrelated decoy.
    DecoyReplacement,
    /// Minor accuracy: move one number up or down by one.
    NumeralShift,
    /// Minor accuracy: change one interior letter of a capitalised name.
    ProperNounLetter,
    /// Major fluency: reverse the word order of the first clause.
    ClauseReversal,
    /// Minor fluency: repeat one function word.
    FunctionWordDuplication,
    /// Minor fluency: drop sentence-final punctuation.
    DropFinalPunctuation,
}

impl Rule {
    pub fn category(self) -> (Severity, Dimension) {
        match self {
            Rule::Negation | Rule::DecoyReplacement => (Severity::Major, Dimension::Accuracy),
            Rule::NumeralShift | Rule::ProperNounLetter => (Severity::Minor, Dimension::Accuracy),
            Rule::ClauseReversal => (Severity::Major, Dimension::Fluency),
            Rule::FunctionWordDuplication | Rule::DropFinalPunctuation => (Severity::Minor, Dimension::Fluency),
        }
    }

    /// Rules of one category, in fallback order.
    pub fn for_category(severity: Severity, dimension: Dimension) -> &'static [Rule] {
        match (severity, dimension) {
            (Severity::Major, Dimension::Accuracy) => &[Rule::Negation, Rule::DecoyReplacement],
            (Severity::Minor, Dimension::Accuracy) => &[Rule::NumeralShift, Rule::ProperNounLetter],
            (Severity::Major, Dimension::Fluency) => &[Rule::ClauseReversal],
            (Severity::Minor, Dimension::Fluency) => &[Rule::FunctionWordDuplication, Rule::DropFinalPunctuation],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Rule::Negation => "negation",
            Rule::DecoyReplacement => "decoy_replacement",
            Rule::NumeralShift => "numeral_shift",
            Rule::ProperNounLetter => "proper_noun_letter",
            Rule::ClauseReversal => "clause_reversal",
            Rule::FunctionWordDuplication => "function_word_duplication",
            Rule::DropFinalPunctuation => "drop_final_punctuation",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub severity: Severity,
    pub dimension: Dimension,
    pub seed: u64,
    pub rule: Rule,
}

impl PerturbationSpec {
    /// Spec using the first rule of the category.
    pub fn new(severity: Severity, dimension: Dimension, seed: u64) -> Self {
        Self {
            severity,
            dimension,
            seed,
            rule: Rule::for_category(severity, dimension)[0],
        }
    }

    pub fn with_rule(rule: Rule, seed: u64) -> Self {
        let (severity, dimension) = rule.category();
        Self {
            severity,
            dimension,
            seed,
            rule,
        }
    }

    pub fn category(&self) -> String {
        category_label(self.severity, self.dimension)
    }

    fn validate(&self) -> Result<()> {
        if self.rule.category() != (self.severity, self.dimension) {
            return Err(Error::InvalidInput(format!(
                "rule {} does not produce {} errors",
                self.rule,
                self.category()
            )));
        }
        Ok(())
    }
}

pub fn category_label(severity: Severity, dimension: Dimension) -> String {
    format!("{}_{}", severity.as_str(), dimension.as_str())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MqmAnnotation {
    /// Character (Unicode scalar) range in the hypothesis, end exclusive.
    pub span: [usize; 2],
    pub severity: Severity,
    pub dimension: Dimension,
    pub note: String,
}

/// Sum of MQM penalties: minor -1, major -5.
pub fn mqm_score(annotations: &[MqmAnnotation]) -> f64 {
    annotations.iter().map(|a| a.severity.penalty()).sum::<i64>() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedGroup {
    pub base: PassageGroup,
    pub spec: PerturbationSpec,
    /// Perturbed hypothesis text of each passage, aligned with `base.passages`.
    pub hypotheses: Vec<String>,
    pub annotations: Vec<MqmAnnotation>,
    pub gold_rating: f64,
}

impl PerturbedGroup {
    pub fn request_id(&self, index: usize) -> String {
        perturbed_id(&self.base.doc_id, &self.spec.category(), index)
    }
}

pub fn perturbed_id(doc_id: &str, category: &str, index: usize) -> String {
    format!("{doc_id}/{category}/p{index}")
}

const AUXILIARIES: &[&str] = &[
    "is", "are", "was", "were", "am", "be", "been", "will", "would", "can", "could", "shall", "should", "may", "might",
    "must", "has", "have", "had", "do", "does", "did",
];

const FUNCTION_WORDS: &[&str] = &[
    "the", "a", "an", "of", "to", "in", "on", "at", "for", "with", "by", "from", "and", "or", "but", "that", "this",
    "der", "die", "das", "und", "le", "la", "les", "de", "el", "los", "y", "et",
];

const DECOYS: &[&str] = &[
    "volcano",
    "penguin",
    "violin",
    "glacier",
    "umbrella",
    "cathedral",
    "submarine",
    "orchard",
    "lantern",
    "meteor",
    "saxophone",
    "dolphin",
];

const WINDOW_DECOYS: &[&str] = &["火山口", "企鹅群", "小提琴", "潜水艇", "大教堂", "流星雨"];

const FINAL_PUNCT: &[char] = &['.', '!', '?', ';', '。', '！', '？', '…', '؟', '।'];

#[derive(Debug, Clone, Copy)]
struct Word {
    start: usize,
    end: usize,
    core_start: usize,
    core_end: usize,
}

impl Word {
    fn text<'a>(&self, s: &'a str) -> &'a str {
        &s[self.start..self.end]
    }
    fn core<'a>(&self, s: &'a str) -> &'a str {
        &s[self.core_start..self.core_end]
    }
}

fn words(text: &str) -> Vec<Word> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices().chain(std::iter::once((text.len(), ' '))) {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push(make_word(text, s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    out
}

fn make_word(text: &str, start: usize, end: usize) -> Word {
    let tok = &text[start..end];
    let lead = tok.len() - tok.trim_start_matches(|c: char| !c.is_alphanumeric()).len();
    let trail = tok.len() - tok.trim_end_matches(|c: char| !c.is_alphanumeric()).len();
    let (core_start, core_end) = if lead + trail >= tok.len() {
        (start, start)
    } else {
        (start + lead, end - trail)
    };
    Word {
        start,
        end,
        core_start,
        core_end,
    }
}

/// Result of one rule: new `s_1`, byte span of the error in it, and a note.
struct Edit {
    text: String,
    span: (usize, usize),
    note: String,
}

fn splice(text: &str, range: std::ops::Range<usize>, replacement: &str) -> String {
    let mut out = String::with_capacity(text.len() + replacement.len());
    out.push_str(&text[..range.start]);
    out.push_str(replacement);
    out.push_str(&text[range.end..]);
    out
}

fn char_offset(text: &str, byte: usize) -> usize {
    text[..byte].chars().count()
}

fn match_case(model: &str, word: &str) -> String {
    if model.chars().next().is_some_and(char::is_uppercase) {
        let mut chars = word.chars();
        chars
            .next()
            .map(|f| f.to_uppercase().chain(chars).collect())
            .unwrap_or_default()
    } else {
        word.to_string()
    }
}

/// Byte offsets where three consecutive alphanumeric characters start.
fn windows3(text: &str) -> Vec<usize> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    chars
        .windows(3)
        .filter(|w| w.iter().all(|(_, c)| c.is_alphanumeric()))
        .map(|w| w[0].0)
        .collect()
}

fn window_range(text: &str, start: usize) -> std::ops::Range<usize> {
    let end = text[start..]
        .char_indices()
        .nth(3)
        .map(|(i, _)| start + i)
        .unwrap_or(text.len());
    start..end
}

struct RuleContext<'a> {
    text: &'a str,
    words: Vec<Word>,
    window_mode: bool,
    rng: SplitMix64,
}

impl RuleContext<'_> {
    fn inapplicable(&self, rule: Rule, reason: &str) -> Error {
        Error::RuleInapplicable {
            rule: rule.name().into(),
            reason: reason.into(),
        }
    }

    fn pick<T: Copy>(&mut self, items: &[T]) -> T {
        items[self.rng.below(items.len())]
    }

    fn apply(&mut self, rule: Rule) -> Result<Edit> {
        match rule {
            Rule::Negation => self.negation(),
            Rule::DecoyReplacement => self.decoy(),
            Rule::NumeralShift => self.numeral(),
            Rule::ProperNounLetter => self.proper_noun(),
            Rule::ClauseReversal => self.clause_reversal(),
            Rule::FunctionWordDuplication => self.duplication(),
            Rule::DropFinalPunctuation => self.drop_punct(),
        }
    }

    fn negation(&mut self) -> Result<Edit> {
        let t = self.text;
        if self.window_mode {
            return Err(self.inapplicable(Rule::Negation, "no auxiliary verbs without word boundaries"));
        }
        let cands: Vec<usize> = (0..self.words.len())
            .filter(|&i| {
                let core = self.words[i].core(t).to_lowercase();
                AUXILIARIES.contains(&core.as_str()) || core.ends_with("n't") || core.ends_with("n’t")
            })
            .collect();
        if cands.is_empty() {
            return Err(self.inapplicable(Rule::Negation, "no auxiliary verb found"));
        }
        let i = self.pick(&cands);
        let w = self.words[i];
        let core = w.core(t);
        let lower = core.to_lowercase();
        if let Some(stem) = lower.strip_suffix("n't").or_else(|| lower.strip_suffix("n’t")) {
            let base = match stem {
                "wo" => "will",
                "ca" => "can",
                "sha" => "shall",
                other => other,
            };
            let base = match_case(core, base);
            let text = splice(t, w.core_start..w.core_end, &base);
            return Ok(Edit {
                span: (w.core_start, w.core_start + base.len()),
                note: format!("removed negation from {core:?}"),
                text,
            });
        }
        if let Some(next) = self.words.get(i + 1) {
            if next.core(t).eq_ignore_ascii_case("not") && w.end == w.core_end {
                let text = splice(t, w.core_end..next.core_end, "");
                return Ok(Edit {
                    span: (w.core_start, w.core_end),
                    note: format!("removed negation after {core:?}"),
                    text,
                });
            }
        }
        let text = splice(t, w.core_end..w.core_end, " not");
        Ok(Edit {
            span: (w.core_end + 1, w.core_end + 4),
            note: format!("inserted negation after {core:?}"),
            text,
        })
    }

    fn decoy(&mut self) -> Result<Edit> {
        let t = self.text;
        if self.window_mode {
            let cands = windows3(t);
            if cands.is_empty() {
                return Err(self.inapplicable(Rule::DecoyReplacement, "no three-character window"));
            }
            let start = self.pick(&cands);
            let range = window_range(t, start);
            let mut k = self.rng.below(WINDOW_DECOYS.len());
            if WINDOW_DECOYS[k] == &t[range.clone()] {
                k = (k + 1) % WINDOW_DECOYS.len();
            }
            let decoy = WINDOW_DECOYS[k];
            return Ok(Edit {
                text: splice(t, range.clone(), decoy),
                span: (start, start + decoy.len()),
                note: format!("replaced {:?} with {decoy:?}", &t[range]),
            });
        }
        let cands: Vec<usize> = (0..self.words.len())
            .filter(|&i| {
                let core = self.words[i].core(t);
                let lower = core.to_lowercase();
                core.chars().count() >= 4
                    && core.chars().all(char::is_alphabetic)
                    && !FUNCTION_WORDS.contains(&lower.as_str())
                    && !AUXILIARIES.contains(&lower.as_str())
            })
            .collect();
        if cands.is_empty() {
            return Err(self.inapplicable(Rule::DecoyReplacement, "no content word of 4+ letters"));
        }
        let k = self.pick(&cands);
        let w = self.words[k];
        let core = w.core(t);
        let mut k = self.rng.below(DECOYS.len());
        if DECOYS[k] == core.to_lowercase() {
            k = (k + 1) % DECOYS.len();
        }
        let decoy = match_case(core, DECOYS[k]);
        Ok(Edit {
            text: splice(t, w.core_start..w.core_end, &decoy),
            span: (w.core_start, w.core_start + decoy.len()),
            note: format!("replaced {core:?} with {decoy:?}"),
        })
    }

    fn numeral(&mut self) -> Result<Edit> {
        let t = self.text;
        let bytes = t.as_bytes();
        let mut runs = Vec::new();
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i].is_ascii_digit() {
                let s = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i - s <= 18 {
                    runs.push((s, i));
                }
            } else {
                i += 1;
            }
        }
        if runs.is_empty() {
            return Err(self.inapplicable(Rule::NumeralShift, "no digit present"));
        }
        let (s, e) = self.pick(&runs);
        let digits = &t[s..e];
        let value: u64 = digits.parse().expect("ascii digit run");
        let shifted = if value == 0 || self.rng.next_u64() & 1 == 0 {
            value + 1
        } else {
            value - 1
        };
        let replacement = if digits.len() > 1 && digits.starts_with('0') {
            format!("{shifted:0width$}", width = digits.len())
        } else {
            shifted.to_string()
        };
        Ok(Edit {
            text: splice(t, s..e, &replacement),
            span: (s, s + replacement.len()),
            note: format!("changed {digits} to {replacement}"),
        })
    }

    fn proper_noun(&mut self) -> Result<Edit> {
        let t = self.text;
        if self.window_mode {
            return Err(self.inapplicable(Rule::ProperNounLetter, "no capitalisation without word boundaries"));
        }
        let cands: Vec<usize> = (1..self.words.len())
            .filter(|&i| {
                let prev = self.words[i - 1].text(t);
                let core = self.words[i].core(t);
                let chars: Vec<char> = core.chars().collect();
                !prev.ends_with(FINAL_PUNCT)
                    && chars.len() >= 3
                    && chars[0].is_uppercase()
                    && chars.iter().all(|c| c.is_alphabetic())
                    && chars[1..chars.len() - 1].iter().any(char::is_ascii_alphabetic)
            })
            .collect();
        if cands.is_empty() {
            return Err(self.inapplicable(Rule::ProperNounLetter, "no mid-sentence capitalised name"));
        }
        let k = self.pick(&cands);
        let w = self.words[k];
        let core = w.core(t);
        let chars: Vec<char> = core.chars().collect();
        let positions: Vec<usize> = (1..chars.len() - 1)
            .filter(|&k| chars[k].is_ascii_alphabetic())
            .collect();
        let k = self.pick(&positions);
        let c = chars[k];
        let base = if c.is_ascii_uppercase() { b'A' } else { b'a' };
        let next = (base + (c as u8 - base + 1) % 26) as char;
        let mut changed = chars.clone();
        changed[k] = next;
        let replacement: String = changed.into_iter().collect();
        Ok(Edit {
            text: splice(t, w.core_start..w.core_end, &replacement),
            span: (w.core_start, w.core_start + replacement.len()),
            note: format!("changed name {core:?} to {replacement:?}"),
        })
    }

    fn clause_reversal(&mut self) -> Result<Edit> {
        let t = self.text;
        if self.window_mode {
            let cands: Vec<usize> = windows3(t)
                .into_iter()
                .filter(|&s| {
                    let w: Vec<char> = t[window_range(t, s)].chars().collect();
                    w[0] != w[2]
                })
                .collect();
            if cands.is_empty() {
                return Err(self.inapplicable(Rule::ClauseReversal, "no reversible three-character window"));
            }
            let start = self.pick(&cands);
            let range = window_range(t, start);
            let reversed: String = t[range.clone()].chars().rev().collect();
            return Ok(Edit {
                text: splice(t, range.clone(), &reversed),
                span: (start, start + reversed.len()),
                note: format!("reversed {:?}", &t[range]),
            });
        }
        let n = self.words.len();
        let last = (1..n - 1)
            .find(|&k| self.words[k].text(t).ends_with([',', '，', '、', '،']))
            .unwrap_or(n.div_ceil(2) - 1)
            .max(1);
        let clause = &self.words[..=last];
        let tail = clause[last];
        let trailing = &t[tail.core_end.max(tail.start)..tail.end];
        let mut tokens: Vec<&str> = clause.iter().map(|w| w.text(t)).collect();
        tokens[last] = &t[tail.start..tail.end - trailing.len()];
        tokens.reverse();
        let reversed = format!("{}{}", tokens.join(" "), trailing);
        let range = clause[0].start..tail.end;
        if reversed == t[range.clone()] {
            return Err(self.inapplicable(Rule::ClauseReversal, "clause reads the same reversed"));
        }
        Ok(Edit {
            text: splice(t, range.clone(), &reversed),
            span: (range.start, range.start + reversed.len()),
            note: format!("reversed word order of {:?}", &t[range]),
        })
    }

    fn duplication(&mut self) -> Result<Edit> {
        let t = self.text;
        if self.window_mode {
            let cands = windows3(t);
            if cands.is_empty() {
                return Err(self.inapplicable(Rule::FunctionWordDuplication, "no three-character window"));
            }
            let start = self.pick(&cands);
            let ch = t[start..].chars().next().expect("window char");
            let at = start + ch.len_utf8();
            return Ok(Edit {
                text: splice(t, at..at, &ch.to_string()),
                span: (at, at + ch.len_utf8()),
                note: format!("duplicated {ch:?}"),
            });
        }
        let cands: Vec<usize> = (0..self.words.len())
            .filter(|&i| FUNCTION_WORDS.contains(&self.words[i].core(t).to_lowercase().as_str()))
            .collect();
        if cands.is_empty() {
            return Err(self.inapplicable(Rule::FunctionWordDuplication, "no function word found"));
        }
        let k = self.pick(&cands);
        let w = self.words[k];
        let core = w.core(t);
        let insert = format!(" {core}");
        Ok(Edit {
            text: splice(t, w.core_end..w.core_end, &insert),
            span: (w.core_end + 1, w.core_end + insert.len()),
            note: format!("duplicated {core:?}"),
        })
    }

    fn drop_punct(&mut self) -> Result<Edit> {
        let t = self.text;
        let trimmed = t.trim_end();
        let Some(last) = trimmed.chars().next_back().filter(|c| FINAL_PUNCT.contains(c)) else {
            return Err(self.inapplicable(Rule::DropFinalPunctuation, "no sentence-final punctuation"));
        };
        let at = trimmed.len() - last.len_utf8();
        let text = splice(t, at..trimmed.len(), "");
        let prev = text[..at].chars().next_back().map(char::len_utf8).unwrap_or(0);
        Ok(Edit {
            span: (at - prev, at),
            note: format!("dropped final {last:?}"),
            text,
        })
    }
}

fn first_segment(group: &PassageGroup) -> Result<&str> {
    let first = group
        .passages
        .first()
        .ok_or_else(|| Error::InvalidInput(format!("group {} has no passages", group.doc_id)))?;
    let s1 = first.hypothesis_text.as_str();
    if let Some(p) = group.passages.iter().find(|p| !p.hypothesis_text.starts_with(s1)) {
        return Err(Error::InvalidInput(format!(
            "group {}: passage {} does not start with the first segment",
            group.doc_id, p.index
        )));
    }
    Ok(s1)
}

fn rebuild(group: &PassageGroup, s1: &str, new_s1: &str) -> Vec<String> {
    group
        .passages
        .iter()
        .map(|p| format!("{new_s1}{}", &p.hypothesis_text[s1.len()..]))
        .collect()
}

/// Insert exactly one error into `s_1` of every passage using `spec.rule`.
pub fn apply_perturbation(group: &PassageGroup, spec: &PerturbationSpec) -> Result<PerturbedGroup> {
    spec.validate()?;
    let s1 = first_segment(group)?;
    let ws = words(s1);
    let window_mode = ws.len() < 3;
    if window_mode && s1.chars().filter(|c| !c.is_whitespace()).count() < 3 {
        return Err(Error::RuleInapplicable {
            rule: spec.rule.name().into(),
            reason: "first segment has fewer than 3 words or characters".into(),
        });
    }
    let mut ctx = RuleContext {
        text: s1,
        words: ws,
        window_mode,
        rng: SplitMix64::keyed(spec.seed, &group.doc_id),
    };
    let edit = ctx.apply(spec.rule)?;
    let annotation = MqmAnnotation {
        span: [
            char_offset(&edit.text, edit.span.0),
            char_offset(&edit.text, edit.span.1),
        ],
        severity: spec.severity,
        dimension: spec.dimension,
        note: edit.note,
    };
    let annotations = vec![annotation];
    Ok(PerturbedGroup {
        base: group.clone(),
        spec: spec.clone(),
        hypotheses: rebuild(group, s1, &edit.text),
        gold_rating: mqm_score(&annotations),
        annotations,
    })
}

/// Try the rules of `(severity, dimension)` in order and keep the first that applies.
pub fn apply_first_applicable(
    group: &PassageGroup,
    severity: Severity,
    dimension: Dimension,
    seed: u64,
) -> Result<PerturbedGroup> {
    let mut last_err = None;
    for &rule in Rule::for_category(severity, dimension) {
        match apply_perturbation(group, &PerturbationSpec::with_rule(rule, seed)) {
            Ok(p) => return Ok(p),
            Err(e @ Error::RuleInapplicable { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("every category has at least one rule"))
}

/// External perturbation adapter speaking the line protocol
/// `{id, text, severity, dimension}` -> `{id, text, span, note}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbAdapter {
    pub command: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    120
}

#[derive(Serialize)]
struct PerturbRequest<'a> {
    id: &'a str,
    text: &'a str,
    severity: Severity,
    dimension: Dimension,
}

#[derive(Deserialize)]
struct PerturbResponse {
    id: String,
    text: String,
    span: Option<[usize; 2]>,
    #[serde(default)]
    note: Option<String>,
}

pub fn external_perturb(
    adapter: &PerturbAdapter,
    group: &PassageGroup,
    spec: &PerturbationSpec,
) -> Result<PerturbedGroup> {
    external_perturb_batch(adapter, std::slice::from_ref(group), spec)?
        .pop()
        .expect("one group in, one result out")
}

/// Perturb many groups through one adapter process. The outer error is a
/// transport/protocol failure; inner errors are per-group rejections.
pub fn external_perturb_batch(
    adapter: &PerturbAdapter,
    groups: &[PassageGroup],
    spec: &PerturbationSpec,
) -> Result<Vec<Result<PerturbedGroup>>> {
    if groups.is_empty() {
        return Ok(Vec::new());
    }
    let mut input = String::new();
    for g in groups {
        let last = g
            .passages
            .last()
            .ok_or_else(|| Error::InvalidInput(format!("group {} has no passages", g.doc_id)))?;
        input.push_str(&serde_json::to_string(&PerturbRequest {
            id: &g.doc_id,
            text: &last.hypothesis_text,
            severity: spec.severity,
            dimension: spec.dimension,
        })?);
        input.push('\n');
    }
    let timeout = Duration::from_secs(adapter.timeout_secs.max(1));
    let mut proc = LineProcess::spawn(&adapter.command, input)?;
    let mut responses: BTreeMap<String, PerturbResponse> = BTreeMap::new();
    let wanted: std::collections::BTreeSet<&str> = groups.iter().map(|g| g.doc_id.as_str()).collect();
    loop {
        match proc.next_line(timeout)? {
            LineEvent::Eof => break,
            LineEvent::Line(line) => {
                if line.trim().is_empty() {
                    continue;
                }
                if line.starts_with("{\"error\":") {
                    proc.kill();
                    return Err(Error::Adapter(crate::gateway::protocol::error_message(&line)));
                }
                let resp: PerturbResponse = serde_json::from_str(&line)
                    .map_err(|e| Error::Protocol(format!("malformed perturbation response: {e}")))?;
                if !wanted.contains(resp.id.as_str()) {
                    return Err(Error::Protocol(format!("unknown response id {}", resp.id)));
                }
                if responses.contains_key(&resp.id) {
                    return Err(Error::Protocol(format!("duplicate response id {}", resp.id)));
                }
                responses.insert(resp.id.clone(), resp);
            }
        }
    }
    if let Some(missing) = groups.iter().find(|g| !responses.contains_key(&g.doc_id)) {
        let (status, tail) = proc.finish()?;
        let mut msg = format!("missing response for id {}", missing.doc_id);
        if !status.success() {
            msg = format!("{msg}: {}", describe_exit(status, &tail));
        }
        return Err(Error::Protocol(msg));
    }
    drop(proc);
    Ok(groups
        .iter()
        .map(|g| {
            let resp = responses.remove(&g.doc_id).expect("checked above");
            accept_external_edit(g, spec, resp)
        })
        .collect())
}

fn accept_external_edit(
    group: &PassageGroup,
    spec: &PerturbationSpec,
    resp: PerturbResponse,
) -> Result<PerturbedGroup> {
    let s1 = first_segment(group)?;
    let original = &group.passages.last().expect("non-empty").hypothesis_text;
    let rest = &original[s1.len()..];
    let Some(span) = resp.span.filter(|_| resp.text != *original) else {
        return Err(Error::PerturbationRejected(format!(
            "{}: no error inserted",
            group.doc_id
        )));
    };
    if !resp.text.ends_with(rest) {
        return Err(Error::PerturbationRejected(format!(
            "{}: edit outside first segment",
            group.doc_id
        )));
    }
    let new_s1 = &resp.text[..resp.text.len() - rest.len()];
    if span[0] >= span[1] || span[1] > new_s1.chars().count() {
        return Err(Error::PerturbationRejected(format!(
            "{}: span {:?} outside first segment",
            group.doc_id, span
        )));
    }
    let annotations = vec![MqmAnnotation {
        span,
        severity: spec.severity,
        dimension: spec.dimension,
        note: resp.note.unwrap_or_default(),
    }];
    Ok(PerturbedGroup {
        base: group.clone(),
        spec: spec.clone(),
        hypotheses: rebuild(group, s1, new_s1),
        gold_rating: mqm_score(&annotations),
        annotations,
    })
}
