//! Core algorithms for studying how entity unlearning damages retained
//! knowledge, organized around syntactic similarity between questions.
//!
//! This crate provides:
//! - Entity masking and normalized Levenshtein similarity ([`textsim`])
//! - Neighbor-set construction: similarity clustering, candidate selection,
//!   template-filling generation, and probe filtering ([`neighborset`])
//! - The evaluation metric stack: ROUGE-L recall, answer probability,
//!   floored cosine similarity, entailment, and the model-utility /
//!   forget-efficacy / relative-utility-drop aggregates ([`metrics`])
//! - Unlearning objectives (gradient ascent, NPO, DPO, IDK fine-tuning)
//!   with gradient-descent and KL regularizers ([`losses`])
//! - A small additive-logit softmax language model over templated facts,
//!   with hand-derived gradients, for running the full unlearning loop at
//!   desk scale ([`toylab`])
//! - Port traits for external capabilities (generation, scoring,
//!   embedding, NLI, masking, QA generation) ([`ports`])
//!
//! Everything here is pure computation over in-memory data; IO, wire
//! adapters, and the command-line surface live in the companion
//! `unlearn-lab` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod losses;
pub mod metrics;
pub mod neighborset;
pub mod ports;
pub mod textsim;
pub mod toylab;

pub use neighborset::{Category, QAPair, SetKind, SyntacticCluster, Thresholds};
pub use textsim::{MaskedSentence, SimilarityScore};
