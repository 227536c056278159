//! Toolkit for mining rare grammatical constructions from dependency-parsed
//! text with a mix of subtree filtering, LLM classification and human
//! annotation, plus a verb-substitution probe of LLM understanding of the
//! caused-motion construction.
//!
//! Stages:
//!
//! - [`conllu`]: read pre-parsed CoNLL-U into [`conllu::Sentence`]s.
//! - [`pattern`]: compile subtree patterns and extract candidates.
//! - [`gateway`]: render classification prompts, call a text-generation
//!   backend, parse and vote on the replies.
//! - [`cost`]: cost per true positive, prompt selection and corpus sizing.
//! - [`store`]: event-sourced annotation store with the diversity sampler and
//!   4-tuple extrapolation.
//! - [`probe`]: the "is X moving?" question pair and outcome taxonomy.

pub mod conllu;
pub mod cost;
pub mod gateway;
pub mod jsonl;
pub mod pattern;
pub mod pool;
pub mod probe;
pub mod samples;
pub mod store;

pub use conllu::{Sentence, Token};
pub use pattern::{CandidateInstance, Pattern, PatternSpec, QuadKey};
