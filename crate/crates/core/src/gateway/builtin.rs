//! Deterministic in-process scorers.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::TokenCounter;
use crate::error::{Error, Result};
use crate::gateway::protocol::ScoreRequest;
use crate::rng::SplitMix64;

/// Parameters of the synthetic length-biased scorer:
/// `score = clamp(base - alpha * tokens(hypothesis) + eps)`, `eps ~ N(0, sigma^2)`
/// drawn from splitmix64 keyed by `(seed, request id)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    #[serde(default)]
    pub base: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp: Option<[f64; 2]>,
    #[serde(default)]
    pub counter: TokenCounter,
    /// Mark responses as error densities (`is_density = true`).
    #[serde(default)]
    pub emit_density: bool,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            base: 0.0,
            alpha: 0.0,
            sigma: 0.0,
            seed: 0,
            clamp: None,
            counter: TokenCounter::whitespace(),
            emit_density: false,
        }
    }
}

impl SyntheticParams {
    pub fn constant(value: f64) -> Self {
        Self {
            base: value,
            ..Self::default()
        }
    }

    pub fn biased(alpha: f64, sigma: f64, seed: u64) -> Self {
        Self {
            alpha,
            sigma,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some([lo, hi]) = self.clamp {
            if lo > hi {
                return Err(Error::Config(format!(
                    "clamp lower bound {lo} exceeds upper bound {hi}"
                )));
            }
        }
        if !(self.base.is_finite() && self.alpha.is_finite() && self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::Config(
                "synthetic scorer parameters must be finite, sigma >= 0".into(),
            ));
        }
        Ok(())
    }
}

pub fn synthetic_biased_score(params: &SyntheticParams, request: &ScoreRequest, counter: &TokenCounter) -> Result<f64> {
    let tokens = counter.count(&request.hypothesis)?;
    Ok(synthetic_from_tokens(params, &request.id, tokens))
}

pub(crate) fn synthetic_from_tokens(params: &SyntheticParams, id: &str, tokens: usize) -> f64 {
    let noise = if params.sigma > 0.0 {
        params.sigma * SplitMix64::keyed(params.seed, id).next_normal()
    } else {
        0.0
    };
    let raw = params.base - params.alpha * tokens as f64 + noise;
    match params.clamp {
        Some([lo, hi]) => raw.clamp(lo, hi),
        None => raw,
    }
}

/// Token-level multiset F1 between hypothesis and reference, mapped to the
/// MQM range as `25 * (F1 - 1)`: identical token bags give 0, disjoint give -25.
pub fn lexical_overlap_score(request: &ScoreRequest) -> Result<f64> {
    let reference = request
        .reference
        .as_deref()
        .filter(|_| request.mode.needs_reference())
        .ok_or_else(|| {
            Error::Scorer(format!(
                "lexical_overlap needs a reference; request {} is in {} mode",
                request.id,
                request.mode.as_str()
            ))
        })?;
    let hyp: Vec<&str> = request.hypothesis.split_whitespace().collect();
    let refs: Vec<&str> = reference.split_whitespace().collect();
    if hyp.is_empty() && refs.is_empty() {
        return Ok(0.0);
    }
    let mut bag: HashMap<&str, usize> = HashMap::new();
    for t in &refs {
        *bag.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &hyp {
        if let Some(n) = bag.get_mut(t) {
            if *n > 0 {
                *n -= 1;
                overlap += 1;
            }
        }
    }
    let f1 = if overlap == 0 {
        0.0
    } else {
        2.0 * overlap as f64 / (hyp.len() + refs.len()) as f64
    };
    Ok(25.0 * (f1 - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::protocol::Mode;

    fn words(n: usize) -> String {
        vec!["w"; n].join(" ")
    }

    fn req(hyp: &str) -> ScoreRequest {
        ScoreRequest::new("r1", "src", hyp, None, Mode::Qe)
    }

    #[test]
    fn linear_length_penalty() {
        let p = SyntheticParams::biased(0.01, 0.0, 0);
        let s = synthetic_biased_score(&p, &req(&words(200)), &TokenCounter::whitespace()).unwrap();
        assert!((s - (-2.0)).abs() < 1e-12);
    }

    #[test]
    fn no_length_term_returns_base() {
        let p = SyntheticParams::constant(-3.5);
        for n in [1, 17, 400] {
            assert_eq!(
                synthetic_biased_score(&p, &req(&words(n)), &TokenCounter::whitespace()).unwrap(),
                -3.5
            );
        }
    }

    #[test]
    fn clamped() {
        let p = SyntheticParams {
            alpha: 1.0,
            clamp: Some([-25.0, 0.0]),
            ..SyntheticParams::default()
        };
        assert_eq!(
            synthetic_biased_score(&p, &req(&words(100)), &TokenCounter::whitespace()).unwrap(),
            -25.0
        );
        let bad = SyntheticParams {
            clamp: Some([1.0, 0.0]),
            ..SyntheticParams::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn noise_is_keyed_by_id() {
        let p = SyntheticParams::biased(0.0, 0.5, 42);
        let a = synthetic_biased_score(
            &p,
            &ScoreRequest::new("a", "", "x", None, Mode::Qe),
            &TokenCounter::whitespace(),
        )
        .unwrap();
        let a2 = synthetic_biased_score(
            &p,
            &ScoreRequest::new("a", "", "y y y", None, Mode::Qe),
            &TokenCounter::whitespace(),
        )
        .unwrap();
        let b = synthetic_biased_score(
            &p,
            &ScoreRequest::new("b", "", "x", None, Mode::Qe),
            &TokenCounter::whitespace(),
        )
        .unwrap();
        assert_eq!(a.to_bits(), a2.to_bits());
        assert_ne!(a, b);
        // 0.5 * N(0,1) from seed 42 ^ fnv("a"), computed through the documented algorithm
        let expected = 0.5 * SplitMix64::keyed(42, "a").next_normal();
        assert_eq!(a.to_bits(), expected.to_bits());
    }

    fn ref_req(hyp: &str, reference: &str) -> ScoreRequest {
        ScoreRequest::new("r", "s", hyp, Some(reference.into()), Mode::Ref)
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(lexical_overlap_score(&ref_req("a b c", "a b c")).unwrap(), 0.0);
        assert_eq!(lexical_overlap_score(&ref_req("a b c", "x y z")).unwrap(), -25.0);
        let s = lexical_overlap_score(&ref_req("a b c", "a b d")).unwrap();
        assert!((s - 25.0 * (2.0 / 3.0 - 1.0)).abs() < 1e-12);
        assert!((s + 8.333333333333334).abs() < 1e-12);
    }

    #[test]
    fn overlap_counts_multiset() {
        // hyp "a a", ref "a b": overlap 1, F1 = 2*1/4 = 0.5
        let s = lexical_overlap_score(&ref_req("a a", "a b")).unwrap();
        assert!((s + 12.5).abs() < 1e-12);
    }

    #[test]
    fn overlap_refuses_qe() {
        assert!(lexical_overlap_score(&req("a")).is_err());
    }
}
