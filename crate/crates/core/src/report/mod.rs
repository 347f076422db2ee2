//! Pipeline orchestration and report emission.
//!
//! [`SuiteData`] is the scorer-independent part of an audit (passage groups,
//! hypothesis pairs, perturbed groups). Each scorer turns it into one
//! [`ScorerSection`]; a scorer failure is recorded in its section and does not
//! abort the others.

pub mod charts;
pub mod config;
pub mod tables;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{load_corpus, CorpusFormat};
use crate::error::{Error, Result};
use crate::gateway::{score_batch, Mode, Orientation, ScoreRequest, ScoreResponse, ScorerSpec};
use crate::io::{read_jsonl, write_atomic, write_jsonl};
use crate::perturb::{
    apply_first_applicable, apply_perturbation, category_label, external_perturb_batch, PerturbationSpec,
    PerturbedGroup,
};
use crate::stats::{
    bias_estimate, delta_curve_from_series, group_series, perturbed_series, preference_indicators, score_histogram,
    shorter_preference_rate, slope_of_score_changes, trend_from_series, BiasEstimate, DeltaCurve, Histogram,
    PreferenceResult, ScoreTable, TrendResult, DECREASING_RULE, TIE_RULE,
};
use crate::suite::{
    bin_pairs, build_hypothesis_pairs, build_passage_groups, ChunkCandidates, HypothesisPair, PairMember, PassageGroup,
    REL_DIFF_CONVENTION,
};

pub use charts::emit_charts;
pub use config::{AuditConfig, CONFIG_ENV};
pub use tables::emit_tables;

pub const DOCUMENT_WEIGHTING: &str = "documents weighted equally";
pub const ORIENTATION_NOTE: &str = "statistics use oriented scores (higher is better); histograms use raw scores";

/// Passage groups of one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageSuite {
    pub language: String,
    pub groups: Vec<PassageGroup>,
    pub discarded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSet {
    pub direction: String,
    pub pairs: Vec<HypothesisPair>,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedSet {
    pub category: String,
    pub language: String,
    pub groups: Vec<PerturbedGroup>,
    pub rejected: usize,
}

/// Scorer-independent audit inputs; persisted as the `build-suite` / `perturb` outputs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SuiteData {
    pub languages: Vec<LanguageSuite>,
    pub pair_sets: Vec<PairSet>,
    pub perturbed: Vec<PerturbedSet>,
    pub thresholds: Vec<f64>,
    pub max_segments: usize,
    pub length_unit: String,
}

const PASSAGES_FILE: &str = "passages.jsonl";
const PAIRS_FILE: &str = "pairs.jsonl";
const PERTURBED_FILE: &str = "perturbed.jsonl";
const SUITE_META_FILE: &str = "suite_meta.json";

#[derive(Serialize, Deserialize)]
struct PassageRecord {
    language: String,
    group: PassageGroup,
}

#[derive(Serialize, Deserialize)]
struct PairRecord {
    direction: String,
    pair: HypothesisPair,
}

#[derive(Serialize, Deserialize)]
struct PerturbedRecord {
    language: String,
    group: PerturbedGroup,
}

#[derive(Serialize, Deserialize)]
struct SuiteMeta {
    thresholds: Vec<f64>,
    max_segments: usize,
    length_unit: String,
    discarded: BTreeMap<String, usize>,
    dropped: BTreeMap<String, usize>,
    rejected: BTreeMap<String, usize>,
}

impl SuiteData {
    /// Load corpora and chunk files and build every passage group, pair and perturbation.
    pub fn build(config: &AuditConfig) -> Result<Self> {
        let counter = &config.counter;
        let params = config.suite.passage_params();
        let mut languages = Vec::new();
        let mut seen_docs = BTreeMap::new();
        for input in &config.corpora {
            let format = input.format.unwrap_or_else(|| CorpusFormat::from_path(&input.path));
            let corpus = load_corpus(&input.path, format)?;
            let language = input.label.clone().unwrap_or_else(|| corpus.lang_pair.clone());
            for d in &corpus.documents {
                if let Some(other) = seen_docs.insert(d.doc_id.clone(), language.clone()) {
                    return Err(Error::InvalidInput(format!(
                        "doc_id {} appears in both {other} and {language}",
                        d.doc_id
                    )));
                }
            }
            let suite = build_passage_groups(&corpus, &params, counter)?;
            languages.push(LanguageSuite {
                language,
                groups: suite.groups,
                discarded: suite.discarded,
            });
        }

        let mut pair_sets = Vec::new();
        for input in &config.chunks {
            let chunks: Vec<ChunkCandidates> = read_jsonl(&input.path)?;
            let ps = build_hypothesis_pairs(
                &chunks,
                config.suite.min_chunk_tokens,
                config.suite.max_chunk_tokens,
                counter,
            )?;
            pair_sets.push(PairSet {
                direction: input.direction.clone(),
                pairs: ps.pairs,
                dropped: ps.dropped,
            });
        }

        let mut data = SuiteData {
            languages,
            pair_sets,
            perturbed: Vec::new(),
            thresholds: config.suite.thresholds.clone(),
            max_segments: config.suite.max_segments,
            length_unit: counter.unit(),
        };
        for p in &config.perturbations {
            data.add_perturbation(p, config.seed)?;
        }
        Ok(data)
    }

    /// Perturb every passage group of every language and append the result.
    /// Groups whose text admits no rule of the category are counted as rejected.
    pub fn add_perturbation(&mut self, p: &config::PerturbConfig, default_seed: u64) -> Result<()> {
        let seed = p.seed.unwrap_or(default_seed);
        let category = category_label(p.severity, p.dimension);
        if self.perturbed.iter().any(|s| s.category == category) {
            return Err(Error::Config(format!("perturbation {category} given twice")));
        }
        let sets = match (&p.adapter, p.rule) {
            (Some(adapter), rule) => {
                let spec = match rule {
                    Some(r) => PerturbationSpec::with_rule(r, seed),
                    None => PerturbationSpec::new(p.severity, p.dimension, seed),
                };
                self.perturb_with(&category, |groups| external_perturb_batch(adapter, groups, &spec))?
            }
            (None, Some(rule)) => {
                let spec = PerturbationSpec::with_rule(rule, seed);
                self.perturb_with(&category, |groups| {
                    Ok(groups.iter().map(|g| apply_perturbation(g, &spec)).collect())
                })?
            }
            (None, None) => self.perturb_with(&category, |groups| {
                Ok(groups
                    .iter()
                    .map(|g| apply_first_applicable(g, p.severity, p.dimension, seed))
                    .collect())
            })?,
        };
        self.perturbed.extend(sets);
        Ok(())
    }

    fn perturb_with<F>(&self, category: &str, f: F) -> Result<Vec<PerturbedSet>>
    where
        F: Fn(&[PassageGroup]) -> Result<Vec<Result<PerturbedGroup>>>,
    {
        let mut out = Vec::new();
        for lang in &self.languages {
            let mut groups = Vec::new();
            let mut rejected = 0;
            for r in f(&lang.groups)? {
                match r {
                    Ok(g) => groups.push(g),
                    Err(Error::RuleInapplicable { .. }) | Err(Error::PerturbationRejected(_)) => rejected += 1,
                    Err(e) => return Err(e),
                }
            }
            out.push(PerturbedSet {
                category: category.to_string(),
                language: lang.language.clone(),
                groups,
                rejected,
            });
        }
        Ok(out)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        crate::io::create_dir(dir)?;
        let passages: Vec<PassageRecord> = self
            .languages
            .iter()
            .flat_map(|l| {
                l.groups.iter().map(|g| PassageRecord {
                    language: l.language.clone(),
                    group: g.clone(),
                })
            })
            .collect();
        write_jsonl(&dir.join(PASSAGES_FILE), &passages)?;
        let pairs: Vec<PairRecord> = self
            .pair_sets
            .iter()
            .flat_map(|s| {
                s.pairs.iter().map(|p| PairRecord {
                    direction: s.direction.clone(),
                    pair: p.clone(),
                })
            })
            .collect();
        write_jsonl(&dir.join(PAIRS_FILE), &pairs)?;
        self.save_perturbed(dir)?;
        self.save_meta(dir)
    }

    pub fn save_perturbed(&self, dir: &Path) -> Result<()> {
        let perturbed: Vec<PerturbedRecord> = self
            .perturbed
            .iter()
            .flat_map(|s| {
                s.groups.iter().map(|g| PerturbedRecord {
                    language: s.language.clone(),
                    group: g.clone(),
                })
            })
            .collect();
        write_jsonl(&dir.join(PERTURBED_FILE), &perturbed)?;
        self.save_meta(dir)
    }

    fn save_meta(&self, dir: &Path) -> Result<()> {
        let meta = SuiteMeta {
            thresholds: self.thresholds.clone(),
            max_segments: self.max_segments,
            length_unit: self.length_unit.clone(),
            discarded: self
                .languages
                .iter()
                .map(|l| (l.language.clone(), l.discarded))
                .collect(),
            dropped: self
                .pair_sets
                .iter()
                .map(|s| (s.direction.clone(), s.dropped))
                .collect(),
            rejected: self
                .perturbed
                .iter()
                .map(|s| (format!("{}\t{}", s.category, s.language), s.rejected))
                .collect(),
        };
        write_atomic(
            &dir.join(SUITE_META_FILE),
            serde_json::to_string_pretty(&meta)?.as_bytes(),
        )
    }

    /// Read a suite directory written by [`SuiteData::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(SUITE_META_FILE);
        let meta_text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: SuiteMeta = serde_json::from_str(&meta_text)?;
        let mut data = SuiteData {
            thresholds: meta.thresholds,
            max_segments: meta.max_segments,
            length_unit: meta.length_unit,
            ..Default::default()
        };

        let read_opt = |name: &str| -> Option<std::path::PathBuf> {
            let p = dir.join(name);
            p.is_file().then_some(p)
        };
        let mut by_lang: BTreeMap<String, Vec<PassageGroup>> = BTreeMap::new();
        if let Some(p) = read_opt(PASSAGES_FILE) {
            for r in read_jsonl::<PassageRecord>(&p)? {
                by_lang.entry(r.language).or_default().push(r.group);
            }
        }
        for (language, discarded) in &meta.discarded {
            data.languages.push(LanguageSuite {
                language: language.clone(),
                groups: by_lang.remove(language).unwrap_or_default(),
                discarded: *discarded,
            });
        }
        let mut by_dir: BTreeMap<String, Vec<HypothesisPair>> = BTreeMap::new();
        if let Some(p) = read_opt(PAIRS_FILE) {
            for r in read_jsonl::<PairRecord>(&p)? {
                by_dir.entry(r.direction).or_default().push(r.pair);
            }
        }
        for (direction, dropped) in &meta.dropped {
            data.pair_sets.push(PairSet {
                direction: direction.clone(),
                pairs: by_dir.remove(direction).unwrap_or_default(),
                dropped: *dropped,
            });
        }
        let mut by_cat: BTreeMap<(String, String), Vec<PerturbedGroup>> = BTreeMap::new();
        if let Some(p) = read_opt(PERTURBED_FILE) {
            for r in read_jsonl::<PerturbedRecord>(&p)? {
                by_cat
                    .entry((r.group.spec.category(), r.language))
                    .or_default()
                    .push(r.group);
            }
        }
        for (key, rejected) in &meta.rejected {
            let (category, language) = key.split_once('\t').unwrap_or((key.as_str(), ""));
            let k = (category.to_string(), language.to_string());
            data.perturbed.push(PerturbedSet {
                category: k.0.clone(),
                language: k.1.clone(),
                groups: by_cat.remove(&k).unwrap_or_default(),
                rejected: *rejected,
            });
        }
        Ok(data)
    }

    /// All requests one scorer must answer. Passage and perturbed requests use
    /// `qe` and are only included when `with_passages`; pair requests use `pair_mode`.
    pub fn requests(&self, pair_mode: Mode, with_passages: bool) -> Vec<ScoreRequest> {
        let mut out = Vec::new();
        if with_passages {
            for lang in &self.languages {
                for g in &lang.groups {
                    for p in &g.passages {
                        out.push(ScoreRequest::new(
                            g.passage_id(p.index),
                            &*p.source_text,
                            &*p.hypothesis_text,
                            None,
                            Mode::Qe,
                        ));
                    }
                }
            }
            for set in &self.perturbed {
                for g in &set.groups {
                    for (p, h) in g.base.passages.iter().zip(&g.hypotheses) {
                        out.push(ScoreRequest::new(
                            g.request_id(p.index),
                            &*p.source_text,
                            &**h,
                            None,
                            Mode::Qe,
                        ));
                    }
                }
            }
        }
        for set in &self.pair_sets {
            for pair in &set.pairs {
                for (member, text) in [
                    (PairMember::Shorter, &pair.shorter.text),
                    (PairMember::Longer, &pair.longer.text),
                ] {
                    out.push(ScoreRequest::for_mode(
                        pair.member_id(member),
                        &pair.source_text,
                        text,
                        &pair.reference_text,
                        pair_mode,
                    ));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerIdentity {
    pub name: String,
    pub kind: String,
    pub orientation: Orientation,
    pub mode: Mode,
    /// False for `ref`-mode and reference-only scorers: passages carry no reference.
    pub scores_passages: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub tool_version: String,
    pub config_digest: String,
    pub seed: u64,
    pub scorers: Vec<ScorerIdentity>,
    pub rel_diff_convention: String,
    pub tie_rule: String,
    pub trend_rule: String,
    pub length_unit: String,
    pub orientation_note: String,
    pub document_weighting: String,
    pub ci_level: f64,
    pub thresholds: Vec<f64>,
    pub trend_indices: [usize; 2],
}

/// Delta curve, trend and bias of one series of passage groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSection {
    pub language: String,
    pub n_docs: usize,
    /// Documents discarded (window) or groups rejected (perturbation).
    pub excluded: usize,
    pub curve: DeltaCurve,
    pub slope: Option<f64>,
    pub trend: TrendResult,
    /// Against θ = 0 for clean passages, the gold rating for perturbed ones.
    pub bias: Option<BiasEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSection {
    pub category: String,
    pub gold_rating: f64,
    pub section: CurveSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSection {
    pub direction: String,
    pub n_pairs: usize,
    pub dropped: usize,
    pub results: Vec<PreferenceResult>,
    /// Preference indicators of the lowest-threshold bin against θ = 0.5.
    pub bias: Option<BiasEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectionStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerSection {
    pub scorer: ScorerIdentity,
    pub status: SectionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub passages: Vec<CurveSection>,
    pub perturbations: Vec<PerturbationSection>,
    pub preferences: Vec<PreferenceSection>,
    pub histogram: Option<Histogram>,
}

impl ScorerSection {
    fn failed(scorer: ScorerIdentity, error: String) -> Self {
        Self {
            scorer,
            status: SectionStatus::Failed,
            error: Some(error),
            passages: Vec::new(),
            perturbations: Vec::new(),
            preferences: Vec::new(),
            histogram: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub metadata: ReportMetadata,
    pub scorers: Vec<ScorerSection>,
}

impl BiasReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Analysis settings that are not part of [`SuiteData`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSettings {
    pub ci_level: f64,
    pub histogram: config::HistogramConfig,
    pub config_digest: String,
    pub seed: u64,
}

/// Outcome of scoring one scorer's requests.
#[derive(Debug, Clone)]
pub struct ScorerRun {
    pub identity: ScorerIdentity,
    pub responses: std::result::Result<Vec<ScoreResponse>, String>,
}

impl ScorerIdentity {
    pub fn of(spec: &ScorerSpec, mode: Mode) -> Self {
        Self {
            name: spec.name.clone(),
            kind: spec.kind_name().to_string(),
            orientation: spec.declared_orientation,
            mode,
            scores_passages: mode != Mode::Ref && !spec.requires_reference(),
        }
    }
}

fn curve_section(
    language: &str,
    series: &[Vec<f64>],
    excluded: usize,
    last: usize,
    theta: f64,
) -> Result<CurveSection> {
    let curve = delta_curve_from_series(series)?;
    let slope = slope_of_score_changes(&curve).ok();
    let trend = trend_from_series(series, 1, last)?;
    let all: Vec<f64> = series.iter().flatten().copied().collect();
    let bias = bias_estimate(&all, theta).ok();
    Ok(CurveSection {
        language: language.to_string(),
        n_docs: series.len(),
        excluded,
        curve,
        slope,
        trend,
        bias,
    })
}

fn analyze_scorer(
    data: &SuiteData,
    settings: &AnalysisSettings,
    identity: &ScorerIdentity,
    responses: &[ScoreResponse],
) -> Result<ScorerSection> {
    let table = ScoreTable::from_responses(responses, identity.orientation);
    let last = data.max_segments;
    let mut passages = Vec::new();
    let mut raw_passage_scores = Vec::new();
    let mut perturbations = Vec::new();
    if identity.scores_passages {
        let raw: BTreeMap<&str, f64> = responses.iter().map(|r| (r.id.as_str(), r.score)).collect();
        for lang in &data.languages {
            let series = group_series(&lang.groups, &table)?;
            passages.push(curve_section(&lang.language, &series, lang.discarded, last, 0.0)?);
            for g in &lang.groups {
                for p in &g.passages {
                    raw_passage_scores.push(raw[g.passage_id(p.index).as_str()]);
                }
            }
        }
        for set in &data.perturbed {
            let series = perturbed_series(&set.groups, &table)?;
            let gold = set.groups.first().map(|g| g.gold_rating).unwrap_or(0.0);
            perturbations.push(PerturbationSection {
                category: set.category.clone(),
                gold_rating: gold,
                section: curve_section(&set.language, &series, set.rejected, last, gold)?,
            });
        }
    }
    let mut preferences = Vec::new();
    for set in &data.pair_sets {
        let bins = bin_pairs(&set.pairs, &data.thresholds)?;
        let results = bins
            .iter()
            .map(|b| shorter_preference_rate(b, &table, settings.ci_level))
            .collect::<Result<Vec<_>>>()?;
        let bias = match bins.first() {
            Some(b) => bias_estimate(&preference_indicators(b, &table)?, 0.5).ok(),
            None => None,
        };
        preferences.push(PreferenceSection {
            direction: set.direction.clone(),
            n_pairs: set.pairs.len(),
            dropped: set.dropped,
            results,
            bias,
        });
    }
    let histogram = if raw_passage_scores.is_empty() {
        None
    } else {
        let h = &settings.histogram;
        Some(score_histogram(&raw_passage_scores, h.bin_width, h.lo, h.hi)?)
    };
    Ok(ScorerSection {
        scorer: identity.clone(),
        status: SectionStatus::Ok,
        error: None,
        passages,
        perturbations,
        preferences,
        histogram,
    })
}

/// Build the report from suite data and per-scorer responses.
pub fn analyze(data: &SuiteData, settings: &AnalysisSettings, runs: &[ScorerRun]) -> Result<BiasReport> {
    let scorers: Vec<ScorerSection> = runs
        .iter()
        .map(|run| match &run.responses {
            Err(e) => ScorerSection::failed(run.identity.clone(), e.clone()),
            Ok(responses) => analyze_scorer(data, settings, &run.identity, responses)
                .unwrap_or_else(|e| ScorerSection::failed(run.identity.clone(), e.to_string())),
        })
        .collect();
    if !scorers.is_empty() && scorers.iter().all(|s| s.status == SectionStatus::Failed) {
        let detail: Vec<String> = scorers
            .iter()
            .map(|s| format!("{}: {}", s.scorer.name, s.error.as_deref().unwrap_or("")))
            .collect();
        return Err(Error::Scorer(format!("all scorers failed ({})", detail.join("; "))));
    }
    Ok(BiasReport {
        metadata: ReportMetadata {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: settings.config_digest.clone(),
            seed: settings.seed,
            scorers: runs.iter().map(|r| r.identity.clone()).collect(),
            rel_diff_convention: REL_DIFF_CONVENTION.to_string(),
            tie_rule: TIE_RULE.to_string(),
            trend_rule: DECREASING_RULE.to_string(),
            length_unit: data.length_unit.clone(),
            orientation_note: ORIENTATION_NOTE.to_string(),
            document_weighting: DOCUMENT_WEIGHTING.to_string(),
            ci_level: settings.ci_level,
            thresholds: data.thresholds.clone(),
            trend_indices: [1, data.max_segments],
        },
        scorers,
    })
}

/// Score `data` with every scorer concurrently. Results are in scorer order.
pub fn score_all(data: &SuiteData, scorers: &[(ScorerSpec, Mode)]) -> Vec<ScorerRun> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = scorers
            .iter()
            .map(|(spec, mode)| {
                scope.spawn(move || {
                    let identity = ScorerIdentity::of(spec, *mode);
                    let requests = data.requests(*mode, identity.scores_passages);
                    ScorerRun {
                        responses: score_batch(spec, &requests).map_err(|e| e.to_string()),
                        identity,
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scorer thread panicked"))
            .collect()
    })
}

/// Validate the config, build the suite, score and analyze.
pub fn run_audit(config: &AuditConfig) -> Result<BiasReport> {
    config.validate()?;
    let data = SuiteData::build(config)?;
    let scorers: Vec<(ScorerSpec, Mode)> = config.scorers.iter().map(|s| (s.spec.clone(), s.mode)).collect();
    let runs = score_all(&data, &scorers);
    analyze(&data, &settings_for(config)?, &runs)
}

pub fn settings_for(config: &AuditConfig) -> Result<AnalysisSettings> {
    Ok(AnalysisSettings {
        ci_level: config.ci_level,
        histogram: config.histogram.clone(),
        config_digest: config.digest()?,
        seed: config.seed,
    })
}

const SCORES_PREFIX: &str = "scores_";
const SCORER_PREFIX: &str = "scorer_";

/// Persist one scorer's raw responses as `scores_{name}.jsonl` next to its
/// configuration `scorer_{name}.json`.
pub fn save_scores(dir: &Path, scorer: &config::ScorerConfig, responses: &[ScoreResponse]) -> Result<()> {
    crate::io::create_dir(dir)?;
    let name = &scorer.spec.name;
    write_jsonl(&dir.join(format!("{SCORES_PREFIX}{name}.jsonl")), responses)?;
    let mut json = serde_json::to_string_pretty(scorer)?;
    json.push('\n');
    write_atomic(&dir.join(format!("{SCORER_PREFIX}{name}.json")), json.as_bytes())
}

/// Read every scorer saved by [`save_scores`], sorted by scorer name.
pub fn load_scores(dir: &Path) -> Result<Vec<(config::ScorerConfig, Vec<ScoreResponse>)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let file = entry.file_name().to_string_lossy().into_owned();
        if let Some(name) = file.strip_prefix(SCORER_PREFIX).and_then(|f| f.strip_suffix(".json")) {
            names.push(name.to_string());
        }
    }
    names.sort();
    names
        .into_iter()
        .map(|name| {
            let cfg_path = dir.join(format!("{SCORER_PREFIX}{name}.json"));
            let text = std::fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
            let cfg: config::ScorerConfig = serde_json::from_str(&text)?;
            let responses = read_jsonl(&dir.join(format!("{SCORES_PREFIX}{name}.jsonl")))?;
            Ok((cfg, responses))
        })
        .collect()
}

/// Write `report.json`, the CSV/JSON tables and the SVG charts into `dir`.
pub fn write_report(report: &BiasReport, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    crate::io::create_dir(dir)?;
    let report_path = dir.join("report.json");
    report.save(&report_path)?;
    let mut files = vec![report_path];
    files.extend(emit_tables(report, dir)?);
    files.extend(emit_charts(report, dir)?);
    Ok(files)
}
