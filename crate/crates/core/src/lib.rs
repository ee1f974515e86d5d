//! Query-conditioned multi-agent workflow search.
//!
//! The engine maintains a layered probability distribution over an evolving
//! pool of agent operators, samples per-query architectures from it, executes
//! them against a pluggable backend, scores the outcome with a dynamic
//! multi-dimensional cost model, and feeds the result back into both the
//! sampling distribution and the operator pool itself. A deterministic
//! simulated world makes the whole loop reproducible at desk scale.

pub mod costmodel;
pub mod error;
pub mod executor;
pub mod explain;
pub mod feedback;
pub mod harness;
pub mod lifecycle;
pub mod operators;
pub mod par;
pub mod seeded;
pub mod supernet;

pub use error::{Error, Result};
pub use operators::{OperatorId, OperatorRegistry, OperatorSpec, Provenance};
pub use supernet::{
    featurize, Architecture, Choice, ChoiceRewards, FeatureVocab, QueryFeatures, QueryMeta,
    SupernetState, Termination,
};
