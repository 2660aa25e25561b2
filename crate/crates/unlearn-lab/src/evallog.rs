//! Evaluation logs and the scoring pipeline that turns a dataset plus
//! before/after model logs into per-example metric vectors and a utility
//! report.
//!
//! One log line per example: the model's generation, the per-token
//! probabilities of the ground-truth answer, and optionally a precomputed
//! embedding and NLI label. Missing embeddings or labels fall back to the
//! configured ports; it is an error to have neither.
//!
//! Metric conventions: ROUGE-L recall and answer probability come from the
//! log being scored; cosine similarity compares the generation embeddings
//! after vs before unlearning (the baseline model scores 1.0 against
//! itself); the entailment judge reads `(premise = reference answer,
//! hypothesis = generation)`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use unlearn_core::metrics::{
    self, MetricVector, ProbabilityMode, ScoredRecord, UtilityReport,
};
use unlearn_core::neighborset::QAPair;
use unlearn_core::ports::{Embedder, NliJudge, NliLabel};

use crate::{dataset, LabError};

/// One evaluated example from a model run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub model_tag: String,
    pub generation: String,
    pub token_probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nli_label: Option<NliLabel>,
}

pub fn read_eval_log(path: &Path) -> Result<Vec<EvalRecord>, LabError> {
    dataset::read_jsonl(path)
}

pub fn write_eval_log(path: &Path, records: &[EvalRecord]) -> Result<(), LabError> {
    dataset::write_jsonl(path, records)
}

/// Ports and options used while scoring logs.
#[derive(Default)]
pub struct ScoringPorts<'a> {
    pub embedder: Option<&'a dyn Embedder>,
    pub judge: Option<&'a dyn NliJudge>,
    pub probability_mode: ProbabilityMode,
}

fn indexed<'a>(
    log: &'a [EvalRecord],
    path_hint: &str,
) -> Result<BTreeMap<&'a str, &'a EvalRecord>, LabError> {
    let mut map = BTreeMap::new();
    for record in log {
        if map.insert(record.id.as_str(), record).is_some() {
            return Err(LabError::Invalid(format!(
                "{path_hint}: duplicate log id {:?}",
                record.id
            )));
        }
    }
    Ok(map)
}

fn embedding_of(
    record: &EvalRecord,
    ports: &ScoringPorts,
) -> Result<Vec<f64>, LabError> {
    if let Some(embedding) = &record.embedding {
        return Ok(embedding.clone());
    }
    let embedder = ports.embedder.ok_or_else(|| {
        LabError::Invalid(format!(
            "log record {:?} has no embedding and no embedder port is configured",
            record.id
        ))
    })?;
    Ok(embedder.embed(&record.generation)?)
}

fn entailment_of(
    record: &EvalRecord,
    reference: &str,
    ports: &ScoringPorts,
) -> Result<f64, LabError> {
    if let Some(label) = record.nli_label {
        return Ok(f64::from(label == NliLabel::Entailment));
    }
    let judge = ports.judge.ok_or_else(|| {
        LabError::Invalid(format!(
            "log record {:?} has no nli_label and no nli port is configured",
            record.id
        ))
    })?;
    Ok(metrics::entailment_score(&record.generation, reference, judge)?)
}

fn metric_vector(
    pair: &QAPair,
    record: &EvalRecord,
    cosine: f64,
    ports: &ScoringPorts,
) -> Result<MetricVector, LabError> {
    let generated = metrics::tokenize(&record.generation);
    let reference = metrics::tokenize(&pair.answer);
    Ok(MetricVector {
        rouge_l_recall: metrics::rouge_l_recall(&generated, &reference)?,
        probability: metrics::answer_probability_with(ports.probability_mode, &record.token_probs)?,
        cosine_sim: cosine,
        entailment: entailment_of(record, &pair.answer, ports)?,
    })
}

fn scored(pair: &QAPair, metrics: MetricVector) -> ScoredRecord {
    ScoredRecord {
        id: pair.id.clone(),
        set_kind: pair.set_kind,
        category: pair.category,
        paraphrase_of: pair.paraphrase_of.clone(),
        metrics,
    }
}

/// Scores both logs against the dataset. Every dataset example must appear
/// in both logs.
pub fn score_logs(
    pairs: &[QAPair],
    before: &[EvalRecord],
    after: &[EvalRecord],
    ports: &ScoringPorts,
) -> Result<(Vec<ScoredRecord>, Vec<ScoredRecord>), LabError> {
    let before = indexed(before, "before log")?;
    let after = indexed(after, "after log")?;

    let mut scored_before = Vec::with_capacity(pairs.len());
    let mut scored_after = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let rec_before = before.get(pair.id.as_str()).ok_or_else(|| {
            LabError::Invalid(format!("before log is missing example {:?}", pair.id))
        })?;
        let rec_after = after.get(pair.id.as_str()).ok_or_else(|| {
            LabError::Invalid(format!("after log is missing example {:?}", pair.id))
        })?;

        let emb_before = embedding_of(rec_before, ports)?;
        let emb_after = embedding_of(rec_after, ports)?;
        let cosine_after = metrics::cosine_floor(&emb_after, &emb_before)?;

        scored_before.push(scored(pair, metric_vector(pair, rec_before, 1.0, ports)?));
        scored_after.push(scored(
            pair,
            metric_vector(pair, rec_after, cosine_after, ports)?,
        ));
    }
    Ok((scored_before, scored_after))
}

/// Full evaluation: score both logs and report the after-state with
/// relative utility drops against the before-state.
pub fn evaluate(
    pairs: &[QAPair],
    before: &[EvalRecord],
    after: &[EvalRecord],
    ports: &ScoringPorts,
) -> Result<UtilityReport, LabError> {
    let (scored_before, scored_after) = score_logs(pairs, before, after, ports)?;
    Ok(metrics::utility_report_with_baseline(
        &scored_before,
        &scored_after,
    )?)
}
