//! Port traits for capabilities the pipeline obtains from external models:
//! text generation, token scoring, embedding, NLI judging, entity masking,
//! and QA generation.
//!
//! Adapters (HTTP, replay fixtures) live in the companion crate; this module
//! only fixes the contracts so the core algorithms stay IO-free.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::textsim::MaskedSentence;

/// Errors surfaced by any port.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PortError {
    #[error("request timed out")]
    Timeout,
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("no recorded fixture for request {0}")]
    FixtureMiss(String),
    #[error("port unavailable: {0}")]
    Unavailable(String),
    #[error("target must be non-empty")]
    EmptyTarget,
}

/// What a port implementation is able to promise its callers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    /// Highest number of in-flight requests the port tolerates; 1 means the
    /// port must be called serially.
    pub max_concurrency: u32,
    /// Same request always yields the same response.
    pub deterministic: bool,
}

impl Default for Capabilities {
    fn default() -> Self {
        Self {
            max_concurrency: 1,
            deterministic: true,
        }
    }
}

/// Three-way natural-language-inference verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NliLabel {
    Entailment,
    Neutral,
    Contradiction,
}

/// One generated question/answer pair with accepted answer variants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedQa {
    pub question: String,
    pub answer: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

/// Free-form completion for a prompt.
pub trait TextGenerator {
    fn generate(&self, prompt: &str, max_tokens: usize) -> Result<String, PortError>;

    fn capabilities(&self) -> Capabilities {
        Capabilities::default()
    }
}

/// Per-token probabilities of a target continuation given a prompt.
/// Every returned probability lies in `(0, 1]`, one per target token.
pub trait TokenScorer {
    fn score(&self, prompt: &str, target: &str) -> Result<Vec<f64>, PortError>;

    fn capabilities(&self) -> Capabilities {
        Capabilities::default()
    }
}

/// Dense embedding of a text.
pub trait Embedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, PortError>;

    fn capabilities(&self) -> Capabilities {
        Capabilities::default()
    }
}

/// Entailment judgment of a hypothesis against a premise.
pub trait NliJudge {
    fn judge(&self, premise: &str, hypothesis: &str) -> Result<NliLabel, PortError>;

    fn capabilities(&self) -> Capabilities {
        Capabilities::default()
    }
}

/// Replaces entity spans in a sentence with the mask token.
pub trait EntityMasker {
    fn mask(&self, text: &str) -> Result<MaskedSentence, PortError>;

    fn capabilities(&self) -> Capabilities {
        Capabilities::default()
    }
}

/// Fills a masked question template with an entity and supplies the answer.
///
/// `Ok(None)` means the generator has no answer for this template/entity
/// combination; the caller moves on to the next candidate.
pub trait QaGenerator {
    fn generate_qa(
        &self,
        masked_template: &str,
        entity: &str,
    ) -> Result<Option<GeneratedQa>, PortError>;

    fn capabilities(&self) -> Capabilities {
        Capabilities::default()
    }
}
