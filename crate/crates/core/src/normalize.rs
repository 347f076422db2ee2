//! Error-density normalization and group-relative scores.
//!
//! A density is a rating divided by hypothesis length, `D = R / |h|`. A
//! density scorer is turned back into a rating scorer by `R = D * |h|`, where
//! `|h|` is counted on the hypothesis with the configured [`TokenCounter`].

use serde::{Deserialize, Serialize};

use crate::corpus::TokenCounter;
use crate::error::{Error, Result};
use crate::gateway::{ScoreRequest, ScoreResponse, ScorerKind, ScorerSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityRecord {
    pub density: f64,
    pub length_tokens: usize,
    pub rating: f64,
}

impl DensityRecord {
    pub fn from_rating(rating: f64, length_tokens: usize) -> Result<Self> {
        Ok(Self {
            density: to_density(rating, length_tokens)?,
            length_tokens,
            rating,
        })
    }
}

fn check_length(length_tokens: usize) -> Result<()> {
    if length_tokens == 0 {
        return Err(Error::InvalidInput("hypothesis length must be at least 1 token".into()));
    }
    Ok(())
}

pub fn to_density(rating: f64, length_tokens: usize) -> Result<f64> {
    check_length(length_tokens)?;
    Ok(rating / length_tokens as f64)
}

pub fn from_density(density: f64, length_tokens: usize) -> Result<f64> {
    check_length(length_tokens)?;
    Ok(density * length_tokens as f64)
}

/// Derived scorer whose responses are `from_density(inner, tokens(hypothesis))`.
pub fn wrap_density_scorer(scorer: ScorerSpec, counter: TokenCounter) -> ScorerSpec {
    let name = format!("{}+density", scorer.name);
    let orientation = scorer.declared_orientation;
    ScorerSpec {
        name,
        kind: ScorerKind::DensityWrapped {
            inner: Box::new(scorer),
            counter,
        },
        declared_orientation: orientation,
    }
}

pub(crate) fn rescale_density_responses(
    inner: Vec<ScoreResponse>,
    requests: &[ScoreRequest],
    counter: &TokenCounter,
) -> Result<Vec<ScoreResponse>> {
    if let Some(r) = inner.iter().find(|r| !r.is_density) {
        return Err(Error::Scorer(format!(
            "scorer does not emit densities (response {})",
            r.id
        )));
    }
    let lengths = counter.count_many(&requests.iter().map(|r| r.hypothesis.as_str()).collect::<Vec<_>>())?;
    inner
        .into_iter()
        .zip(lengths)
        .map(|(resp, len)| {
            let score = from_density(resp.score, len)
                .map_err(|_| Error::Scorer(format!("response {}: hypothesis has zero tokens", resp.id)))?;
            Ok(ScoreResponse {
                score,
                is_density: false,
                ..resp
            })
        })
        .collect()
}

/// Subtract the first score from every score; the first output is exactly 0.
pub fn group_normalize(scores: &[f64]) -> Result<Vec<f64>> {
    let Some(&first) = scores.first() else {
        return Err(Error::InvalidInput("group_normalize needs at least one score".into()));
    };
    let mut out: Vec<f64> = scores.iter().map(|s| s - first).collect();
    out[0] = 0.0;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{score_batch, Mode, SyntheticParams};
    use proptest::prelude::*;

    #[test]
    fn density_examples() {
        assert_eq!(to_density(-5.0, 100).unwrap(), -0.05);
        assert_eq!(to_density(0.0, 37).unwrap(), 0.0);
        assert!(to_density(-1.0, 0).is_err());
        assert!((from_density(-0.05, 100).unwrap() + 5.0).abs() < 1e-12);
        assert_eq!(from_density(0.0, 250).unwrap(), 0.0);
        assert!(from_density(1.0, 0).is_err());
        for r in [-25.0, -1.0, 0.0] {
            for l in [1, 100, 500] {
                let back = from_density(to_density(r, l).unwrap(), l).unwrap();
                assert!((back - r).abs() <= 1e-12 * r.abs().max(1.0));
            }
        }
        let rec = DensityRecord::from_rating(-3.0, 150).unwrap();
        assert!((rec.density * rec.length_tokens as f64 - rec.rating).abs() < 1e-12);
    }

    #[test]
    fn group_normalize_examples() {
        let out = group_normalize(&[-1.0, -1.5, -2.2]).unwrap();
        let expected = [0.0, -0.5, -1.2];
        for (a, b) in out.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(group_normalize(&[3.3, 3.3, 3.3]).unwrap(), vec![0.0, 0.0, 0.0]);
        assert_eq!(group_normalize(&[7.0]).unwrap(), vec![0.0]);
        assert!(group_normalize(&[]).is_err());
    }

    fn density_scorer(c: f64) -> ScorerSpec {
        ScorerSpec::synthetic(
            "dens",
            SyntheticParams {
                base: c,
                emit_density: true,
                ..SyntheticParams::default()
            },
        )
    }

    fn words(n: usize) -> String {
        vec!["w"; n].join(" ")
    }

    #[test]
    fn wrapped_density_example() {
        let wrapped = wrap_density_scorer(density_scorer(-0.02), TokenCounter::whitespace());
        assert_eq!(wrapped.name, "dens+density");
        let reqs = vec![ScoreRequest::new("a", "s", words(150), None, Mode::Qe)];
        let out = score_batch(&wrapped, &reqs).unwrap();
        assert!((out[0].score + 3.0).abs() < 1e-12);
        assert!(!out[0].is_density);

        let zero = wrap_density_scorer(density_scorer(0.0), TokenCounter::whitespace());
        let reqs: Vec<_> = [1, 10, 400]
            .iter()
            .map(|&n| ScoreRequest::new(format!("r{n}"), "s", words(n), None, Mode::Qe))
            .collect();
        assert!(score_batch(&zero, &reqs).unwrap().iter().all(|r| r.score == 0.0));
    }

    #[test]
    fn wrapping_a_rating_scorer_is_refused() {
        let wrapped = wrap_density_scorer(
            ScorerSpec::synthetic("raw", SyntheticParams::constant(-1.0)),
            TokenCounter::whitespace(),
        );
        let err = score_batch(&wrapped, &[ScoreRequest::new("a", "s", "h", None, Mode::Qe)]).unwrap_err();
        assert!(err.to_string().contains("scorer does not emit densities"), "{err}");
    }

    #[test]
    fn constant_density_is_linear_in_length() {
        let c = -0.013;
        let wrapped = wrap_density_scorer(density_scorer(c), TokenCounter::whitespace());
        let lens = [3usize, 10, 41, 200];
        let reqs: Vec<_> = lens
            .iter()
            .map(|&n| ScoreRequest::new(format!("r{n}"), "s", words(n), None, Mode::Qe))
            .collect();
        let out = score_batch(&wrapped, &reqs).unwrap();
        for (r, &n) in out.iter().zip(&lens) {
            assert!((r.score - c * n as f64).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn density_round_trip(r in -25.0f64..=0.0, len in 1usize..=5000) {
            let back = from_density(to_density(r, len).unwrap(), len).unwrap();
            prop_assert!((back - r).abs() <= 1e-12 * r.abs().max(1.0));
        }

        #[test]
        fn group_normalize_keeps_differences(xs in proptest::collection::vec(-25.0f64..25.0, 1..8)) {
            let out = group_normalize(&xs).unwrap();
            prop_assert_eq!(out[0], 0.0);
            for i in 0..xs.len() {
                for j in 0..xs.len() {
                    prop_assert!(((out[i] - out[j]) - (xs[i] - xs[j])).abs() < 1e-12);
                }
            }
        }
    }
}
