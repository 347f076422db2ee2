//! Length-bias audit harness for translation quality-estimation scorers.
//!
//! The pipeline loads a parallel corpus, builds cumulative passage groups and
//! length-binned hypothesis pairs, optionally inserts controlled MQM errors,
//! scores everything through a pluggable gateway, and reports how strongly a
//! scorer's output tracks hypothesis length.

pub mod corpus;
pub mod error;
pub mod gateway;
pub mod io;
pub mod normalize;
pub mod perturb;
pub mod process;
pub mod report;
pub mod rng;
pub mod stats;
pub mod suite;

pub use corpus::{load_corpus, save_corpus, Corpus, CorpusFormat, Document, Segment, TokenCounter};
pub use error::{Error, Result};
pub use gateway::{
    score_batch, Mode, Orientation, ScoreRequest, ScoreResponse, ScorerKind, ScorerSpec, SyntheticParams,
};
pub use normalize::{from_density, group_normalize, to_density, wrap_density_scorer};
pub use perturb::{
    apply_perturbation, mqm_score, Dimension, MqmAnnotation, PerturbationSpec, PerturbedGroup, Severity,
};
pub use report::{run_audit, AuditConfig, BiasReport};
pub use suite::{
    bin_pairs, build_hypothesis_pairs, build_passage_groups, HypothesisPair, LengthBin, PassageGroup, SuiteParams,
};
