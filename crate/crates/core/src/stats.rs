//! Bias statistics over oriented score tables.
//!
//! Every statistic works on scores where higher means better. A
//! [`ScoreTable`] applies the scorer's declared orientation when it is built.
//! Documents are weighted equally and accumulation follows input order, so
//! results are reproducible bit for bit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::gateway::{Orientation, ScoreResponse};
use crate::normalize::group_normalize;
use crate::perturb::PerturbedGroup;
use crate::suite::{LengthBin, PairMember, PassageGroup};

/// Tie rule for preference counting, recorded in report metadata.
pub const TIE_RULE: &str = "ties count 0.5";
/// Trend rule, recorded in report metadata.
pub const DECREASING_RULE: &str = "decreasing iff score(last) < score(first) strictly";

/// Oriented scores keyed by request id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    scores: BTreeMap<String, f64>,
}

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_responses(responses: &[ScoreResponse], orientation: Orientation) -> Self {
        Self {
            scores: responses
                .iter()
                .map(|r| (r.id.clone(), orientation.orient(r.score)))
                .collect(),
        }
    }

    /// Insert an already-oriented score.
    pub fn insert(&mut self, id: impl Into<String>, score: f64) {
        self.scores.insert(id.into(), score);
    }

    pub fn get(&self, id: &str) -> Result<f64> {
        self.scores
            .get(id)
            .copied()
            .ok_or_else(|| Error::MissingScore(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.scores.values().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasEstimate {
    pub mean_prediction: f64,
    pub true_quality: f64,
    pub bias: f64,
    pub n: usize,
}

/// `bias = mean(predictions) - true_quality`.
pub fn bias_estimate(predictions: &[f64], true_quality: f64) -> Result<BiasEstimate> {
    if predictions.is_empty() {
        return Err(Error::InvalidInput(
            "bias_estimate needs at least one prediction".into(),
        ));
    }
    let mean = predictions.iter().sum::<f64>() / predictions.len() as f64;
    Ok(BiasEstimate {
        mean_prediction: mean,
        true_quality,
        bias: mean - true_quality,
        n: predictions.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaPoint {
    /// 1-based passage index.
    pub index: usize,
    pub mean_delta: f64,
    /// Sample standard deviation across documents; 0 for a single document.
    pub stddev: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DeltaCurve {
    pub points: Vec<DeltaPoint>,
}

impl DeltaCurve {
    pub fn means(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_delta).collect()
    }
}

/// Per-group oriented scores in passage order.
pub fn group_series(groups: &[PassageGroup], table: &ScoreTable) -> Result<Vec<Vec<f64>>> {
    groups
        .iter()
        .map(|g| g.passages.iter().map(|p| table.get(&g.passage_id(p.index))).collect())
        .collect()
}

pub fn perturbed_series(groups: &[PerturbedGroup], table: &ScoreTable) -> Result<Vec<Vec<f64>>> {
    groups
        .iter()
        .map(|g| {
            g.base
                .passages
                .iter()
                .map(|p| table.get(&g.request_id(p.index)))
                .collect()
        })
        .collect()
}

pub fn delta_curve(groups: &[PassageGroup], table: &ScoreTable) -> Result<DeltaCurve> {
    delta_curve_from_series(&group_series(groups, table)?)
}

/// Mean and spread of `score(p_i) - score(p_1)` per passage index. Groups
/// shorter than `i` do not contribute to index `i`.
pub fn delta_curve_from_series(series: &[Vec<f64>]) -> Result<DeltaCurve> {
    let normalized: Vec<Vec<f64>> = series.iter().map(|s| group_normalize(s)).collect::<Result<_>>()?;
    let max_len = normalized.iter().map(Vec::len).max().unwrap_or(0);
    let points = (0..max_len)
        .map(|i| {
            let vals: Vec<f64> = normalized.iter().filter_map(|d| d.get(i).copied()).collect();
            let n = vals.len();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let stddev = if n > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            DeltaPoint {
                index: i + 1,
                mean_delta: if i == 0 { 0.0 } else { mean },
                stddev,
                n,
            }
        })
        .collect();
    Ok(DeltaCurve { points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendResult {
    pub n_docs: usize,
    pub n_decreasing: usize,
    /// `n_decreasing / n_docs`; 0 when no document qualifies.
    pub proportion: f64,
    /// Groups lacking a passage at `first` or `last`.
    pub n_skipped: usize,
}

impl TrendResult {
    pub fn from_counts(n_docs: usize, n_decreasing: usize, n_skipped: usize) -> Self {
        Self {
            n_docs,
            n_decreasing,
            proportion: if n_docs == 0 {
                0.0
            } else {
                n_decreasing as f64 / n_docs as f64
            },
            n_skipped,
        }
    }
}

pub fn decreasing_trend_proportion(
    groups: &[PassageGroup],
    table: &ScoreTable,
    first: usize,
    last: usize,
) -> Result<TrendResult> {
    trend_from_series(&group_series(groups, table)?, first, last)
}

/// A document is decreasing when its score at passage `last` is strictly
/// below its score at passage `first` (both 1-based).
pub fn trend_from_series(series: &[Vec<f64>], first: usize, last: usize) -> Result<TrendResult> {
    if first == 0 || last == 0 {
        return Err(Error::InvalidInput("passage indices are 1-based".into()));
    }
    let mut n_docs = 0;
    let mut n_dec = 0;
    let mut skipped = 0;
    for s in series {
        match (s.get(first - 1), s.get(last - 1)) {
            (Some(a), Some(b)) => {
                n_docs += 1;
                if b < a {
                    n_dec += 1;
                }
            }
            _ => skipped += 1,
        }
    }
    Ok(TrendResult::from_counts(n_docs, n_dec, skipped))
}

/// Mean absolute change between consecutive points of the curve.
pub fn slope_of_score_changes(curve: &DeltaCurve) -> Result<f64> {
    if curve.points.len() < 2 {
        return Err(Error::InvalidInput("slope needs at least two curve points".into()));
    }
    let diffs: Vec<f64> = curve
        .points
        .windows(2)
        .map(|w| (w[1].mean_delta - w[0].mean_delta).abs())
        .collect();
    Ok(diffs.iter().sum::<f64>() / diffs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceResult {
    pub threshold: f64,
    pub n_pairs: usize,
    pub shorter_wins: f64,
    /// `None` for an empty bin.
    pub rate: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

impl PreferenceResult {
    pub fn from_counts(threshold: f64, shorter_wins: f64, n_pairs: usize, level: f64) -> Result<Self> {
        let (rate, ci) = if n_pairs == 0 {
            (None, None)
        } else {
            (
                Some(shorter_wins / n_pairs as f64),
                Some(wilson_ci(shorter_wins, n_pairs, level)?),
            )
        };
        Ok(Self {
            threshold,
            n_pairs,
            shorter_wins,
            rate,
            ci_low: ci.map(|c| c.0),
            ci_high: ci.map(|c| c.1),
        })
    }
}

/// Per-pair outcome: 1 if the shorter member scores higher, 0.5 on ties, else 0.
pub fn preference_indicators(bin: &LengthBin, table: &ScoreTable) -> Result<Vec<f64>> {
    bin.pairs
        .iter()
        .map(|p| {
            let s = table.get(&p.member_id(PairMember::Shorter))?;
            let l = table.get(&p.member_id(PairMember::Longer))?;
            Ok(if s > l {
                1.0
            } else if s == l {
                0.5
            } else {
                0.0
            })
        })
        .collect()
}

pub fn shorter_preference_rate(bin: &LengthBin, table: &ScoreTable, level: f64) -> Result<PreferenceResult> {
    let wins: f64 = preference_indicators(bin, table)?.iter().sum();
    PreferenceResult::from_counts(bin.threshold, wins, bin.pairs.len(), level)
}

/// Wilson score interval for `successes / n` (successes may be fractional
/// because ties count one half).
pub fn wilson_ci(successes: f64, n: usize, level: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidInput("wilson_ci needs n >= 1".into()));
    }
    if !(0.0..=n as f64).contains(&successes) {
        return Err(Error::InvalidInput(format!("successes {successes} outside [0, {n}]")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("confidence level {level} outside (0, 1)")));
    }
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - (1.0 - level) / 2.0);
    let nf = n as f64;
    let p = successes / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let low = if successes == 0.0 {
        0.0
    } else {
        (center - half).clamp(0.0, 1.0)
    };
    let high = if successes == nf {
        1.0
    } else {
        (center + half).clamp(0.0, 1.0)
    };
    Ok((low.min(p), high.max(p)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub bin_width: f64,
    /// Bin `k` covers `[lo + k*w, lo + (k+1)*w)`; the last bin is closed at `hi`.
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn edge(&self, k: usize) -> f64 {
        if k >= self.counts.len() {
            self.hi
        } else {
            self.lo + k as f64 * self.bin_width
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }
}

pub fn score_histogram(scores: &[f64], bin_width: f64, lo: f64, hi: f64) -> Result<Histogram> {
    if !(bin_width > 0.0 && bin_width.is_finite()) || lo >= hi || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidInput(
            "histogram needs bin_width > 0 and finite lo < hi".into(),
        ));
    }
    let span = (hi - lo) / bin_width;
    let nbins = if (span - span.round()).abs() < 1e-9 {
        span.round()
    } else {
        span.ceil()
    }
    .max(1.0) as usize;
    let mut h = Histogram {
        lo,
        hi,
        bin_width,
        counts: vec![0; nbins],
        underflow: 0,
        overflow: 0,
    };
    for &x in scores {
        if x < lo {
            h.underflow += 1;
        } else if x > hi {
            h.overflow += 1;
        } else {
            let mut k = (((x - lo) / bin_width).floor() as usize).min(nbins - 1);
            while k > 0 && x < h.edge(k) {
                k -= 1;
            }
            while k + 1 < nbins && x >= h.edge(k + 1) {
                k += 1;
            }
            h.counts[k] += 1;
        }
    }
    Ok(h)
}
