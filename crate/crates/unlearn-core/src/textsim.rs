//! Entity masking and normalized Levenshtein similarity between sentences.
//!
//! Similarity between two questions is measured on their *masked* forms:
//! named entities are replaced by the literal token `{X}` so that the score
//! reflects sentence structure rather than entity content. The score is
//! `1 - dist / max_len`, where `dist` is the character-level edit distance
//! between the masked strings after case folding and whitespace collapsing.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::ports::{EntityMasker, PortError};

/// The literal placeholder substituted for every masked entity span.
pub const MASK_TOKEN: &str = "{X}";

/// A sentence together with its entity-masked form.
///
/// `mask_spans` are `[start, end)` character offsets into `original`; each
/// span corresponds to one `{X}` occurrence in `masked`, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedSentence {
    pub original: String,
    pub masked: String,
    pub mask_spans: Vec<(usize, usize)>,
}

/// Errors from masking operations.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MaskError {
    #[error("mask span {start}..{end} is invalid for a sentence of {len} characters")]
    InvalidSpan { start: usize, end: usize, len: usize },
    #[error("mask spans must be sorted and non-overlapping")]
    OverlappingSpans,
    #[error("masker unavailable: {0}")]
    MaskerUnavailable(PortError),
    #[error("masker returned an inconsistent sentence: {0}")]
    InconsistentMask(String),
}

impl MaskedSentence {
    /// A sentence with no masked spans; `masked` equals `original`.
    pub fn unmasked(text: &str) -> Self {
        Self {
            original: String::from(text),
            masked: String::from(text),
            mask_spans: Vec::new(),
        }
    }

    /// Builds the masked form by replacing each span with [`MASK_TOKEN`].
    ///
    /// Spans must be sorted, non-overlapping, non-empty, and within bounds.
    pub fn new(original: &str, mask_spans: &[(usize, usize)]) -> Result<Self, MaskError> {
        let chars: Vec<char> = original.chars().collect();
        let len = chars.len();
        let mut prev_end = 0usize;
        for &(start, end) in mask_spans {
            if start >= end || end > len {
                return Err(MaskError::InvalidSpan { start, end, len });
            }
            if start < prev_end {
                return Err(MaskError::OverlappingSpans);
            }
            prev_end = end;
        }

        let mut masked = String::new();
        let mut cursor = 0usize;
        for &(start, end) in mask_spans {
            masked.extend(chars[cursor..start].iter());
            masked.push_str(MASK_TOKEN);
            cursor = end;
        }
        masked.extend(chars[cursor..].iter());

        Ok(Self {
            original: String::from(original),
            masked,
            mask_spans: mask_spans.to_vec(),
        })
    }

    /// Re-inserts the original spans in place of each `{X}`; the result must
    /// equal `original` for a well-formed sentence.
    pub fn reconstruct(&self) -> String {
        let chars: Vec<char> = self.original.chars().collect();
        let mut out = String::new();
        let mut rest = self.masked.as_str();
        for &(start, end) in &self.mask_spans {
            match rest.split_once(MASK_TOKEN) {
                Some((before, after)) => {
                    out.push_str(before);
                    out.extend(chars[start..end].iter());
                    rest = after;
                }
                None => return out,
            }
        }
        out.push_str(rest);
        out
    }

    /// True when the mask token count matches the span list and
    /// reconstruction round-trips to the original sentence.
    pub fn is_consistent(&self) -> bool {
        self.masked.matches(MASK_TOKEN).count() == self.mask_spans.len()
            && self.reconstruct() == self.original
    }
}

/// A normalized similarity in `[0, 1]` with the raw edit distance behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub value: f64,
    pub distance: usize,
    pub max_len: usize,
}

/// Character-level Levenshtein distance (insertions, deletions,
/// substitutions), computed with a rolling two-row table.
pub fn levenshtein_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }

    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = alloc::vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            cur[j + 1] = (prev[j + 1] + 1).min(cur[j] + 1).min(prev[j] + cost);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Case folds and collapses runs of whitespace to a single space.
pub fn normalize(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut pending_space = false;
    for c in s.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.extend(c.to_lowercase());
        }
    }
    out
}

/// Normalized Levenshtein similarity between two already-masked strings.
///
/// Both inputs are normalized (see [`normalize`]) before the distance is
/// taken. Two empty strings score 1.0: identical strings are maximally
/// similar even when the length normalizer vanishes.
pub fn similarity(a: &str, b: &str) -> SimilarityScore {
    let a = normalize(a);
    let b = normalize(b);
    let distance = levenshtein_distance(&a, &b);
    let max_len = a.chars().count().max(b.chars().count());
    let value = if max_len == 0 {
        1.0
    } else {
        1.0 - distance as f64 / max_len as f64
    };
    SimilarityScore {
        value,
        distance,
        max_len,
    }
}

/// Similarity between two sentences on their masked forms.
pub fn levenshtein_similarity(a: &MaskedSentence, b: &MaskedSentence) -> SimilarityScore {
    similarity(&a.masked, &b.masked)
}

/// Masks `s` through the given port and validates the result.
///
/// An empty input passes through as an empty masked sentence. Port failures
/// surface as [`MaskError::MaskerUnavailable`] so the caller can fall back
/// to [`RuleMasker`].
pub fn mask_entities(s: &str, masker: &dyn EntityMasker) -> Result<MaskedSentence, MaskError> {
    if s.is_empty() {
        return Ok(MaskedSentence::unmasked(""));
    }
    let masked = masker.mask(s).map_err(MaskError::MaskerUnavailable)?;
    if masked.original != s {
        return Err(MaskError::InconsistentMask(String::from(
            "original text was altered",
        )));
    }
    if !masked.is_consistent() {
        return Err(MaskError::InconsistentMask(String::from(
            "mask spans do not reconstruct the original",
        )));
    }
    Ok(masked)
}

/// Words that never start an entity span on their own.
const STOPWORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "but", "if", "in", "on", "at", "of", "for", "to", "from", "by",
    "with", "when", "where", "what", "who", "whom", "whose", "which", "why", "how", "did", "do",
    "does", "is", "are", "was", "were", "will", "would", "can", "could", "should", "shall", "may",
    "might", "must", "has", "have", "had", "name", "list", "tell", "give", "describe", "explain",
    "identify", "state", "mention", "summarize", "during", "while", "whilst", "after", "before",
];

/// Deterministic offline masker: exact dictionary matches, capitalized word
/// runs, and digit runs, merged into maximal spans.
///
/// The dictionary takes precedence and matches whole words, longest entry
/// first. The capitalization heuristic drops sentence-initial stopwords
/// ("When", "Did", ...) so question scaffolding survives masking.
#[derive(Debug, Clone, Default)]
pub struct RuleMasker {
    entities: Vec<String>,
}

impl RuleMasker {
    pub fn new() -> Self {
        Self::default()
    }

    /// A masker whose dictionary contains the given entity surface forms.
    pub fn with_entities<I, S>(entities: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut entities: Vec<String> =
            entities.into_iter().map(Into::into).filter(|e| !e.is_empty()).collect();
        // longest-first so "Robert Downey Jr." wins over "Downey Jr."
        entities.sort_by(|a, b| b.chars().count().cmp(&a.chars().count()).then(a.cmp(b)));
        entities.dedup();
        Self { entities }
    }

    /// Computes mask spans over `text` (character offsets).
    pub fn spans(&self, text: &str) -> Vec<(usize, usize)> {
        let chars: Vec<char> = text.chars().collect();
        let mut covered = alloc::vec![false; chars.len()];
        let mut spans: Vec<(usize, usize)> = Vec::new();

        self.dictionary_spans(&chars, &mut covered, &mut spans);
        self.capitalized_spans(&chars, &mut covered, &mut spans);
        digit_spans(&chars, &mut covered, &mut spans);

        spans.sort_unstable();
        merge_spans(&chars, spans)
    }

    fn dictionary_spans(
        &self,
        chars: &[char],
        covered: &mut [bool],
        spans: &mut Vec<(usize, usize)>,
    ) {
        for entity in &self.entities {
            let needle: Vec<char> = entity.chars().collect();
            if needle.is_empty() || needle.len() > chars.len() {
                continue;
            }
            let mut i = 0;
            while i + needle.len() <= chars.len() {
                let end = i + needle.len();
                let hit = chars[i..end] == needle[..]
                    && !covered[i..end].iter().any(|&c| c)
                    && (i == 0 || !chars[i - 1].is_alphanumeric())
                    && (end == chars.len() || !chars[end].is_alphanumeric());
                if hit {
                    covered[i..end].iter_mut().for_each(|c| *c = true);
                    spans.push((i, end));
                    i = end;
                } else {
                    i += 1;
                }
            }
        }
    }

    fn capitalized_spans(
        &self,
        chars: &[char],
        covered: &mut [bool],
        spans: &mut Vec<(usize, usize)>,
    ) {
        let words = word_tokens(chars);
        let mut run: Vec<&WordToken> = Vec::new();
        let flush = |run: &mut Vec<&WordToken>, spans: &mut Vec<(usize, usize)>,
                     covered: &mut [bool]| {
            if run.is_empty() {
                return;
            }
            let mut words = run.as_slice();
            // sentence-initial stopwords are scaffolding, not entity parts
            while let Some((first, rest)) = words.split_first() {
                if first.sentence_initial && first.is_stopword {
                    words = rest;
                } else {
                    break;
                }
            }
            let keep = match words {
                [] => false,
                [only] => !only.is_stopword && !only.sentence_initial,
                _ => true,
            };
            if keep {
                let start = words[0].start;
                let end = words[words.len() - 1].end;
                if !covered[start..end].iter().any(|&c| c) {
                    covered[start..end].iter_mut().for_each(|c| *c = true);
                    spans.push((start, end));
                }
            }
            run.clear();
        };

        for word in &words {
            let capitalized = chars[word.start].is_uppercase();
            let overlaps_existing = covered[word.start..word.end].iter().any(|&c| c);
            if capitalized && !overlaps_existing {
                run.push(word);
            } else {
                flush(&mut run, spans, covered);
            }
        }
        flush(&mut run, spans, covered);
    }
}

impl EntityMasker for RuleMasker {
    fn mask(&self, text: &str) -> Result<MaskedSentence, PortError> {
        let spans = self.spans(text);
        MaskedSentence::new(text, &spans)
            .map_err(|e| PortError::Protocol(alloc::format!("rule masker: {e}")))
    }
}

struct WordToken {
    start: usize,
    end: usize,
    is_stopword: bool,
    sentence_initial: bool,
}

fn word_tokens(chars: &[char]) -> Vec<WordToken> {
    let mut words = Vec::new();
    let mut i = 0;
    let mut sentence_start = true;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let raw_start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        let mut start = raw_start;
        let mut end = i;
        while start < end && !chars[start].is_alphanumeric() {
            start += 1;
        }
        while end > start && !chars[end - 1].is_alphanumeric() {
            end -= 1;
        }
        // keep the period of a single-letter initial: "J." in "J. K. Rowling"
        if end - start == 1 && chars[start].is_alphabetic() && end < chars.len() && chars[end] == '.'
        {
            end += 1;
        }
        let mut word: String = chars[start..end].iter().collect();
        word = word.to_lowercase();
        let ends_sentence = chars[end.min(chars.len() - 1)..i]
            .iter()
            .any(|&c| c == '.' || c == '?' || c == '!');
        if start < end {
            words.push(WordToken {
                start,
                end,
                is_stopword: STOPWORDS.contains(&word.trim_end_matches('.')),
                sentence_initial: sentence_start,
            });
            sentence_start = ends_sentence;
        }
    }
    words
}

fn digit_spans(chars: &[char], covered: &mut [bool], spans: &mut Vec<(usize, usize)>) {
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_ascii_digit() && !covered[i] {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() && !covered[i] {
                i += 1;
            }
            covered[start..i].iter_mut().for_each(|c| *c = true);
            spans.push((start, i));
        } else {
            i += 1;
        }
    }
}

/// Merges overlapping spans and spans separated only by spaces or commas,
/// so "July 18, 1918" masks as one entity rather than three.
fn merge_spans(chars: &[char], spans: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(spans.len());
    for (start, end) in spans {
        if let Some(last) = merged.last_mut() {
            let gap_joins = start >= last.1
                && chars[last.1..start].iter().all(|&c| c == ' ' || c == ',');
            if start <= last.1 || gap_joins {
                last.1 = last.1.max(end);
                continue;
            }
        }
        merged.push((start, end));
    }
    merged
}
