//! Per-example evaluation metrics and their aggregates.
//!
//! Four per-example scores (ROUGE-L recall, answer probability, floored
//! cosine similarity, entailment) are averaged into Model Utility on retain
//! data and Forget Efficacy (the complement) on forget data. Relative
//! Utility Drop compares utilities before and after unlearning, overall or
//! per group.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::neighborset::{Category, SetKind};
use crate::ports::{NliJudge, NliLabel, PortError};

/// Errors from metric computation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("reference token list is empty")]
    EmptyReference,
    #[error("token probability sequence is empty")]
    EmptySequence,
    #[error("token probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("embedding has zero norm")]
    ZeroVector,
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("metric set is empty: {0}")]
    EmptySet(String),
    #[error("baseline utility must be positive")]
    ZeroBaseline,
    #[error("group {0} does not cover identical example ids before and after")]
    GroupMismatch(String),
    #[error("nli port unavailable: {0}")]
    PortUnavailable(PortError),
}

/// Per-example scores, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricVector {
    pub rouge_l_recall: f64,
    pub probability: f64,
    pub cosine_sim: f64,
    pub entailment: f64,
}

impl MetricVector {
    /// Arithmetic mean of the four components.
    pub fn mean(&self) -> f64 {
        (self.rouge_l_recall + self.probability + self.cosine_sim + self.entailment) / 4.0
    }
}

/// Whether an aggregate is read as utility (retain) or efficacy (forget).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateRole {
    Retain,
    Forget,
}

/// Lowercases, strips punctuation, and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

fn lcs_len<T: AsRef<str>>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = alloc::vec![0usize; b.len() + 1];
    let mut cur = alloc::vec![0usize; b.len() + 1];
    for wa in a {
        for (j, wb) in b.iter().enumerate() {
            cur[j + 1] = if wa.as_ref() == wb.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Longest-common-subsequence length divided by the reference length.
pub fn rouge_l_recall<T: AsRef<str>>(generated: &[T], reference: &[T]) -> Result<f64, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    Ok(lcs_len(generated, reference) as f64 / reference.len() as f64)
}

/// How per-token probabilities combine into one answer probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilityMode {
    /// Arithmetic mean of per-token probabilities.
    #[default]
    ArithmeticMean,
    /// Geometric mean, i.e. length-normalized sequence likelihood.
    GeometricMean,
}

/// Arithmetic mean of per-token ground-truth probabilities.
pub fn answer_probability(token_probs: &[f64]) -> Result<f64, MetricsError> {
    answer_probability_with(ProbabilityMode::ArithmeticMean, token_probs)
}

/// Answer probability under an explicit combination mode.
pub fn answer_probability_with(
    mode: ProbabilityMode,
    token_probs: &[f64],
) -> Result<f64, MetricsError> {
    if token_probs.is_empty() {
        return Err(MetricsError::EmptySequence);
    }
    for &p in token_probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(MetricsError::ProbabilityOutOfRange(p));
        }
    }
    let n = token_probs.len() as f64;
    Ok(match mode {
        ProbabilityMode::ArithmeticMean => token_probs.iter().sum::<f64>() / n,
        ProbabilityMode::GeometricMean => {
            if token_probs.iter().any(|&p| p == 0.0) {
                0.0
            } else {
                libm::exp(token_probs.iter().map(|&p| libm::log(p)).sum::<f64>() / n)
            }
        }
    })
}

/// Cosine similarity floored at zero.
pub fn cosine_floor(e1: &[f64], e2: &[f64]) -> Result<f64, MetricsError> {
    if e1.len() != e2.len() {
        return Err(MetricsError::DimensionMismatch(e1.len(), e2.len()));
    }
    let dot: f64 = e1.iter().zip(e2).map(|(a, b)| a * b).sum();
    let n1 = libm::sqrt(e1.iter().map(|a| a * a).sum::<f64>());
    let n2 = libm::sqrt(e2.iter().map(|a| a * a).sum::<f64>());
    if n1 == 0.0 || n2 == 0.0 {
        return Err(MetricsError::ZeroVector);
    }
    Ok((dot / (n1 * n2)).max(0.0))
}

/// 1.0 iff the judge labels `(premise = reference, hypothesis = generation)`
/// as entailment; neutral and contradiction both count as 0.
pub fn entailment_score(
    generation: &str,
    reference: &str,
    judge: &dyn NliJudge,
) -> Result<f64, MetricsError> {
    let label = judge
        .judge(reference, generation)
        .map_err(MetricsError::PortUnavailable)?;
    Ok(if label == NliLabel::Entailment { 1.0 } else { 0.0 })
}

/// Mean of per-example means; the forget role returns the complement so
/// that higher always means "better forgetting".
pub fn aggregate(examples: &[MetricVector], role: AggregateRole) -> Result<f64, MetricsError> {
    if examples.is_empty() {
        return Err(MetricsError::EmptySet("aggregate".to_string()));
    }
    let mean = examples.iter().map(MetricVector::mean).sum::<f64>() / examples.len() as f64;
    Ok(match role {
        AggregateRole::Retain => mean,
        AggregateRole::Forget => 1.0 - mean,
    })
}

/// Percent change of utility after unlearning relative to before.
pub fn relative_utility_drop(mu_before: f64, mu_after: f64) -> Result<f64, MetricsError> {
    if mu_before <= 0.0 {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok((mu_after - mu_before) / mu_before * 100.0)
}

/// One evaluated example with everything needed for grouped breakdowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub id: String,
    pub set_kind: SetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paraphrase_of: Option<String>,
    pub metrics: MetricVector,
}

/// How examples are grouped for relative-utility-drop breakdowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    SetKind,
    Category,
    ParaphraseGroup,
}

fn group_label(record: &ScoredRecord, key: GroupKey) -> Option<String> {
    match key {
        GroupKey::SetKind => Some(record.set_kind.as_str().to_string()),
        GroupKey::Category => record.category.map(|c| c.as_str().to_string()),
        GroupKey::ParaphraseGroup => Some(
            record
                .paraphrase_of
                .clone()
                .unwrap_or_else(|| record.id.clone()),
        ),
    }
}

fn grouped_ids_and_utility(
    records: &[ScoredRecord],
    key: GroupKey,
) -> BTreeMap<String, (Vec<String>, f64)> {
    let mut groups: BTreeMap<String, Vec<&ScoredRecord>> = BTreeMap::new();
    for record in records {
        if let Some(label) = group_label(record, key) {
            groups.entry(label).or_default().push(record);
        }
    }
    groups
        .into_iter()
        .map(|(label, members)| {
            let mut ids: Vec<String> = members.iter().map(|r| r.id.clone()).collect();
            ids.sort_unstable();
            let utility =
                members.iter().map(|r| r.metrics.mean()).sum::<f64>() / members.len() as f64;
            (label, (ids, utility))
        })
        .collect()
}

/// Relative utility drop per group. Before and after must cover identical
/// example ids within every group.
pub fn rud_by_group(
    before: &[ScoredRecord],
    after: &[ScoredRecord],
    key: GroupKey,
) -> Result<BTreeMap<String, f64>, MetricsError> {
    let before = grouped_ids_and_utility(before, key);
    let after = grouped_ids_and_utility(after, key);

    if before.len() != after.len() {
        return Err(MetricsError::GroupMismatch("<group count>".to_string()));
    }
    let mut out = BTreeMap::new();
    for (label, (ids_before, mu_before)) in &before {
        let Some((ids_after, mu_after)) = after.get(label) else {
            return Err(MetricsError::GroupMismatch(label.clone()));
        };
        if ids_before != ids_after {
            return Err(MetricsError::GroupMismatch(label.clone()));
        }
        out.insert(label.clone(), relative_utility_drop(*mu_before, *mu_after)?);
    }
    Ok(out)
}

/// Mean metrics and utility for one evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub count: usize,
    pub mean_metrics: MetricVector,
    pub utility: f64,
}

/// Full evaluation summary: utility, efficacy, and grouped breakdowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub model_utility: f64,
    pub forget_efficacy: f64,
    pub per_set: BTreeMap<SetKind, SetSummary>,
    pub per_category: BTreeMap<Category, f64>,
    /// Relative utility drop per set against a baseline report; empty when
    /// no baseline was supplied.
    #[serde(default)]
    pub rud: BTreeMap<SetKind, f64>,
}

/// Builds a report from scored records. Requires at least one forget and
/// one retain record so that both headline numbers are defined.
pub fn utility_report(records: &[ScoredRecord]) -> Result<UtilityReport, MetricsError> {
    let forget: Vec<MetricVector> = records
        .iter()
        .filter(|r| r.set_kind == SetKind::Forget)
        .map(|r| r.metrics)
        .collect();
    let retain: Vec<MetricVector> = records
        .iter()
        .filter(|r| r.set_kind != SetKind::Forget)
        .map(|r| r.metrics)
        .collect();
    if forget.is_empty() {
        return Err(MetricsError::EmptySet("forget".to_string()));
    }
    if retain.is_empty() {
        return Err(MetricsError::EmptySet("retain".to_string()));
    }

    let mut per_set: BTreeMap<SetKind, SetSummary> = BTreeMap::new();
    for record in records {
        let entry = per_set.entry(record.set_kind).or_insert(SetSummary {
            count: 0,
            mean_metrics: MetricVector::default(),
            utility: 0.0,
        });
        entry.count += 1;
        entry.mean_metrics.rouge_l_recall += record.metrics.rouge_l_recall;
        entry.mean_metrics.probability += record.metrics.probability;
        entry.mean_metrics.cosine_sim += record.metrics.cosine_sim;
        entry.mean_metrics.entailment += record.metrics.entailment;
        entry.utility += record.metrics.mean();
    }
    for summary in per_set.values_mut() {
        let n = summary.count as f64;
        summary.mean_metrics.rouge_l_recall /= n;
        summary.mean_metrics.probability /= n;
        summary.mean_metrics.cosine_sim /= n;
        summary.mean_metrics.entailment /= n;
        summary.utility /= n;
    }

    let mut per_category: BTreeMap<Category, Vec<f64>> = BTreeMap::new();
    for record in records {
        if record.set_kind == SetKind::Forget {
            continue;
        }
        if let Some(category) = record.category {
            per_category
                .entry(category)
                .or_default()
                .push(record.metrics.mean());
        }
    }
    let per_category = per_category
        .into_iter()
        .map(|(c, vals)| (c, vals.iter().sum::<f64>() / vals.len() as f64))
        .collect();

    Ok(UtilityReport {
        model_utility: aggregate(&retain, AggregateRole::Retain)?,
        forget_efficacy: aggregate(&forget, AggregateRole::Forget)?,
        per_set,
        per_category,
        rud: BTreeMap::new(),
    })
}

/// Report for `after`, with per-set relative utility drops computed against
/// `before`. Each set present in both runs must cover the same example ids.
pub fn utility_report_with_baseline(
    before: &[ScoredRecord],
    after: &[ScoredRecord],
) -> Result<UtilityReport, MetricsError> {
    let mut report = utility_report(after)?;
    let drops = rud_by_group(before, after, GroupKey::SetKind)?;
    let kinds: Vec<SetKind> = report.per_set.keys().copied().collect();
    for kind in kinds {
        if let Some(rud) = drops.get(kind.as_str()) {
            report.rud.insert(kind, *rud);
        }
    }
    Ok(report)
}
