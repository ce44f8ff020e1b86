//! Transducer decoding with external language-model fusion.
//!
//! The crate pairs a transducer step-posterior interface with two ways of
//! folding external LM scores into beam search: shallow fusion, which adds a
//! scaled target-domain LM score to every label emission, and density-ratio
//! fusion, which additionally subtracts a scaled source-domain LM score so the
//! source model's posterior is re-weighted by `P_target(W) / P_source(W)`.
//!
//! Everything is exercised against [`synthworld::SynthWorld`], a two-domain
//! generative world small enough that every posterior, marginal and argmax is
//! computable exactly.

pub mod cli;
pub mod dataset;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod lm;
pub mod synthworld;
pub mod transducer;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    count_alignments, labels, log_add, Alignment, Domain, LogProb, Observation, Step, Symbol,
    Utterance, Vocabulary,
};
