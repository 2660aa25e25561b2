//! Neighbor-set construction for entity unlearning.
//!
//! Forget-set questions are clustered by the similarity of their masked
//! forms; clusters are filled with fresh retain entities to synthesize a
//! syntactically similar neighbor set; generated pairs are verified by
//! probing a model; and domain/entity neighbor sets are validated to be
//! syntactically distinct from the forget set.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::ports::{EntityMasker, PortError, QaGenerator, TextGenerator};
use crate::textsim::{self, MaskError, MaskedSentence};

/// Which evaluation set a record belongs to.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    Forget,
    DomainNeighbor,
    EntityNeighbor,
    SynSimilarNeighbor,
    SynDifferentNeighbor,
}

impl SetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SetKind::Forget => "forget",
            SetKind::DomainNeighbor => "domain_neighbor",
            SetKind::EntityNeighbor => "entity_neighbor",
            SetKind::SynSimilarNeighbor => "syn_similar_neighbor",
            SetKind::SynDifferentNeighbor => "syn_different_neighbor",
        }
    }
}

/// Entity category used for per-category breakdowns.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Human,
    Company,
    CreativeWorks,
    FictionalCharacter,
    Product,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Human,
        Category::Company,
        Category::CreativeWorks,
        Category::FictionalCharacter,
        Category::Product,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Human => "human",
            Category::Company => "company",
            Category::CreativeWorks => "creative_works",
            Category::FictionalCharacter => "fictional_character",
            Category::Product => "product",
        }
    }
}

/// One question/answer record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub id: String,
    pub entity: String,
    pub question: String,
    pub answer: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub set_kind: SetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paraphrase_of: Option<String>,
}

/// A group of mutually similar masked question templates from the forget set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntacticCluster {
    pub cluster_id: u32,
    pub member_ids: Vec<String>,
    pub template: MaskedSentence,
    pub min_intra_similarity: f64,
}

/// Similarity cutoffs and the minimum viable cluster size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub theta_high: f64,
    pub theta_low: f64,
    pub min_cluster_size: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            theta_high: 0.75,
            theta_low: 0.4,
            min_cluster_size: 3,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), NeighborSetError> {
        if !(0.0..=1.0).contains(&self.theta_low)
            || !(0.0..=1.0).contains(&self.theta_high)
            || self.theta_low >= self.theta_high
        {
            return Err(NeighborSetError::InvalidThresholds(
                "require 0 <= theta_low < theta_high <= 1".to_string(),
            ));
        }
        if self.min_cluster_size < 2 {
            return Err(NeighborSetError::InvalidThresholds(
                "min_cluster_size must be at least 2".to_string(),
            ));
        }
        Ok(())
    }
}

/// Errors from neighbor-set construction.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NeighborSetError {
    #[error("forget set is empty")]
    EmptyForgetSet,
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
    #[error("no candidate produced a conforming question for cluster {cluster_id}")]
    NoValidFill { cluster_id: u32 },
    #[error("qa generation failed: {0}")]
    GenerationFailed(PortError),
    #[error("probe port unavailable: {0}")]
    PortUnavailable(PortError),
    #[error(transparent)]
    Masking(#[from] MaskError),
}

/// Groups forget-set questions into clusters whose members are pairwise
/// similar at `theta_high` on their masked forms.
///
/// Connected components of the similarity graph are pruned to cliques by
/// repeatedly dropping the member with the lowest mean intra-similarity
/// (ties broken by smallest id); components that fall below
/// `min_cluster_size` are discarded. Returned clusters are ordered by their
/// smallest member id and numbered from zero.
pub fn cluster_forget_questions(
    forget: &[QAPair],
    thresholds: &Thresholds,
    masker: &dyn EntityMasker,
) -> Result<Vec<SyntacticCluster>, NeighborSetError> {
    thresholds.validate()?;
    if forget.is_empty() {
        return Err(NeighborSetError::EmptyForgetSet);
    }

    let masked: Vec<MaskedSentence> = forget
        .iter()
        .map(|q| textsim::mask_entities(&q.question, masker))
        .collect::<Result<_, _>>()?;

    let n = forget.len();
    let mut sim = alloc::vec![alloc::vec![0.0f64; n]; n];
    for i in 0..n {
        sim[i][i] = 1.0;
        for j in (i + 1)..n {
            let s = textsim::levenshtein_similarity(&masked[i], &masked[j]).value;
            sim[i][j] = s;
            sim[j][i] = s;
        }
    }

    let components = connected_components(&sim, thresholds.theta_high);

    let mut clusters: Vec<SyntacticCluster> = Vec::new();
    for component in components {
        let Some(members) = prune_to_clique(component, &sim, forget, thresholds) else {
            continue;
        };

        let mut member_ids: Vec<String> =
            members.iter().map(|&i| forget[i].id.clone()).collect();
        member_ids.sort_unstable();

        let representative = members
            .iter()
            .copied()
            .map(|i| (i, mean_similarity(i, &members, &sim)))
            .max_by(|(ia, sa), (ib, sb)| {
                sa.partial_cmp(sb)
                    .unwrap_or(core::cmp::Ordering::Equal)
                    .then_with(|| forget[*ib].id.cmp(&forget[*ia].id))
            })
            .map(|(i, _)| i)
            .expect("non-empty cluster");

        let min_intra = members
            .iter()
            .flat_map(|&i| members.iter().map(move |&j| (i, j)))
            .filter(|(i, j)| i < j)
            .map(|(i, j)| sim[i][j])
            .fold(1.0f64, f64::min);

        clusters.push(SyntacticCluster {
            cluster_id: 0,
            member_ids,
            template: masked[representative].clone(),
            min_intra_similarity: min_intra,
        });
    }

    clusters.sort_by(|a, b| a.member_ids[0].cmp(&b.member_ids[0]));
    for (idx, cluster) in clusters.iter_mut().enumerate() {
        cluster.cluster_id = idx as u32;
    }
    Ok(clusters)
}

fn connected_components(sim: &[Vec<f64>], theta_high: f64) -> Vec<Vec<usize>> {
    let n = sim.len();
    let mut visited = alloc::vec![false; n];
    let mut components = Vec::new();
    for start in 0..n {
        if visited[start] {
            continue;
        }
        let mut stack = alloc::vec![start];
        let mut component = Vec::new();
        visited[start] = true;
        while let Some(i) = stack.pop() {
            component.push(i);
            for j in 0..n {
                if !visited[j] && sim[i][j] >= theta_high {
                    visited[j] = true;
                    stack.push(j);
                }
            }
        }
        component.sort_unstable();
        components.push(component);
    }
    components
}

fn mean_similarity(member: usize, members: &[usize], sim: &[Vec<f64>]) -> f64 {
    let others: Vec<usize> = members.iter().copied().filter(|&j| j != member).collect();
    if others.is_empty() {
        return 1.0;
    }
    others.iter().map(|&j| sim[member][j]).sum::<f64>() / others.len() as f64
}

fn prune_to_clique(
    mut members: Vec<usize>,
    sim: &[Vec<f64>],
    forget: &[QAPair],
    thresholds: &Thresholds,
) -> Option<Vec<usize>> {
    loop {
        if members.len() < thresholds.min_cluster_size {
            return None;
        }
        let is_clique = members.iter().all(|&i| {
            members
                .iter()
                .all(|&j| i == j || sim[i][j] >= thresholds.theta_high)
        });
        if is_clique {
            return Some(members);
        }
        let worst = members
            .iter()
            .copied()
            .map(|i| (i, mean_similarity(i, &members, sim)))
            .min_by(|(ia, sa), (ib, sb)| {
                sa.partial_cmp(sb)
                    .unwrap_or(core::cmp::Ordering::Equal)
                    .then_with(|| forget[*ia].id.cmp(&forget[*ib].id))
            })
            .map(|(i, _)| i)
            .expect("non-empty component");
        members.retain(|&i| i != worst);
    }
}

/// Retain entities minus every excluded entity, order preserved, first
/// occurrence kept.
pub fn select_candidate_entities(retain_entities: &[String], excluded: &[String]) -> Vec<String> {
    let mut seen: Vec<&String> = Vec::new();
    retain_entities
        .iter()
        .filter(|e| !excluded.contains(e))
        .filter(|e| {
            if seen.contains(e) {
                false
            } else {
                seen.push(e);
                true
            }
        })
        .cloned()
        .collect()
}

/// Static inputs for syntactically similar pair synthesis.
#[derive(Debug, Clone)]
pub struct SynthesisInputs<'a> {
    pub clusters: &'a [SyntacticCluster],
    /// Retain entities not used by any other neighbor set, in fill order.
    pub candidates: &'a [String],
    /// Domain and entity neighbor records the output must stay distinct from.
    pub other_neighbors: &'a [QAPair],
    pub thresholds: Thresholds,
    /// Pairs to generate per cluster; defaults to the cluster size.
    pub pairs_per_cluster: Option<usize>,
}

/// Fills each cluster's template with candidate entities and keeps only
/// questions that score at least `theta_high` against the template and at
/// most `theta_low` against every other neighbor question.
///
/// Candidates are consumed in order, each at most once across all clusters.
/// A cluster that yields no conforming pair at all is an error.
pub fn generate_syn_similar_pairs(
    inputs: &SynthesisInputs,
    qa_gen: &dyn QaGenerator,
    masker: &dyn EntityMasker,
) -> Result<Vec<QAPair>, NeighborSetError> {
    inputs.thresholds.validate()?;
    let other_masked: Vec<MaskedSentence> = inputs
        .other_neighbors
        .iter()
        .map(|q| textsim::mask_entities(&q.question, masker))
        .collect::<Result<_, _>>()?;

    let mut available: Vec<Option<&String>> = inputs.candidates.iter().map(Some).collect();
    let mut out: Vec<QAPair> = Vec::new();

    for cluster in inputs.clusters {
        let target = inputs
            .pairs_per_cluster
            .unwrap_or(cluster.member_ids.len())
            .max(1);
        let mut produced = 0usize;

        for slot in available.iter_mut() {
            if produced >= target {
                break;
            }
            let Some(entity) = *slot else { continue };

            let Some(qa) = qa_gen
                .generate_qa(&cluster.template.masked, entity)
                .map_err(NeighborSetError::GenerationFailed)?
            else {
                continue;
            };

            let masked_q = textsim::mask_entities(&qa.question, masker)?;
            let to_template = textsim::levenshtein_similarity(&masked_q, &cluster.template);
            if to_template.value < inputs.thresholds.theta_high {
                continue;
            }
            let too_close = other_masked.iter().any(|other| {
                textsim::levenshtein_similarity(&masked_q, other).value
                    > inputs.thresholds.theta_low
            });
            if too_close {
                continue;
            }

            out.push(QAPair {
                id: alloc::format!("syn-c{}-{}", cluster.cluster_id, produced),
                entity: entity.clone(),
                question: qa.question,
                answer: qa.answer,
                aliases: qa.aliases,
                set_kind: SetKind::SynSimilarNeighbor,
                cluster_id: Some(cluster.cluster_id),
                category: None,
                paraphrase_of: None,
            });
            *slot = None;
            produced += 1;
        }

        if produced == 0 {
            return Err(NeighborSetError::NoValidFill {
                cluster_id: cluster.cluster_id,
            });
        }
    }

    Ok(out)
}

/// Offline QA generation by direct template substitution: the mask slot is
/// replaced with the entity surface form and the answer comes from a
/// `(template, entity)` lookup table.
#[derive(Debug, Clone, Default)]
pub struct TemplateQaGenerator {
    answers: BTreeMap<(String, String), (String, Vec<String>)>,
}

impl TemplateQaGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        template: impl Into<String>,
        entity: impl Into<String>,
        answer: impl Into<String>,
        aliases: Vec<String>,
    ) {
        self.answers
            .insert((template.into(), entity.into()), (answer.into(), aliases));
    }
}

impl QaGenerator for TemplateQaGenerator {
    fn generate_qa(
        &self,
        masked_template: &str,
        entity: &str,
    ) -> Result<Option<crate::ports::GeneratedQa>, PortError> {
        let key = (masked_template.to_string(), entity.to_string());
        let Some((answer, aliases)) = self.answers.get(&key) else {
            return Ok(None);
        };
        Ok(Some(crate::ports::GeneratedQa {
            question: masked_template.replace(textsim::MASK_TOKEN, entity),
            answer: answer.clone(),
            aliases: aliases.clone(),
        }))
    }
}

/// Decides whether a probe generation counts as recalling the answer.
pub trait AnswerMatcher {
    fn matches(&self, generation: &str, answer: &str, aliases: &[String]) -> bool;
}

/// Case-insensitive, whitespace-normalized containment of the answer or any
/// alias in the generation.
#[derive(Debug, Clone, Copy, Default)]
pub struct ContainmentMatcher;

impl AnswerMatcher for ContainmentMatcher {
    fn matches(&self, generation: &str, answer: &str, aliases: &[String]) -> bool {
        let generation = textsim::normalize(generation);
        let mut targets = Vec::with_capacity(aliases.len() + 1);
        targets.push(answer);
        targets.extend(aliases.iter().map(String::as_str));
        targets.iter().any(|t| {
            let t = textsim::normalize(t);
            !t.is_empty() && generation.contains(&t)
        })
    }
}

/// Result of probing generated pairs against a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeOutcome {
    pub kept: Vec<QAPair>,
    pub dropped: Vec<QAPair>,
}

/// Keeps exactly the pairs whose probe generation matches the answer or an
/// alias. Kept and dropped partition the input.
pub fn probe_filter(
    pairs: Vec<QAPair>,
    generator: &dyn TextGenerator,
    matcher: &dyn AnswerMatcher,
    max_tokens: usize,
) -> Result<ProbeOutcome, NeighborSetError> {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for pair in pairs {
        let generation = generator
            .generate(&pair.question, max_tokens)
            .map_err(NeighborSetError::PortUnavailable)?;
        if matcher.matches(&generation, &pair.answer, &pair.aliases) {
            kept.push(pair);
        } else {
            dropped.push(pair);
        }
    }
    Ok(ProbeOutcome { kept, dropped })
}

/// One neighbor question scoring above `theta_low` against a forget question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistinctnessViolation {
    pub neighbor_id: String,
    pub forget_id: String,
    pub similarity: f64,
}

/// Outcome of checking domain/entity neighbors against the forget set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DistinctnessReport {
    pub checked_pairs: usize,
    pub violations: Vec<DistinctnessViolation>,
}

impl DistinctnessReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Verifies that every domain/entity neighbor question scores at most
/// `theta_low` against every forget question on masked forms. Violations are
/// reported, not raised.
pub fn validate_distinctness(
    neighbor_sets: &[QAPair],
    forget: &[QAPair],
    thresholds: &Thresholds,
    masker: &dyn EntityMasker,
) -> Result<DistinctnessReport, NeighborSetError> {
    thresholds.validate()?;
    let neighbors: Vec<&QAPair> = neighbor_sets
        .iter()
        .filter(|q| matches!(q.set_kind, SetKind::DomainNeighbor | SetKind::EntityNeighbor))
        .collect();
    let forget: Vec<&QAPair> = forget
        .iter()
        .filter(|q| q.set_kind == SetKind::Forget)
        .collect();

    let forget_masked: Vec<MaskedSentence> = forget
        .iter()
        .map(|q| textsim::mask_entities(&q.question, masker))
        .collect::<Result<_, _>>()?;

    let mut report = DistinctnessReport::default();
    for neighbor in &neighbors {
        let neighbor_masked = textsim::mask_entities(&neighbor.question, masker)?;
        for (forget_pair, forget_masked) in forget.iter().zip(&forget_masked) {
            let score = textsim::levenshtein_similarity(&neighbor_masked, forget_masked);
            report.checked_pairs += 1;
            if score.value > thresholds.theta_low {
                report.violations.push(DistinctnessViolation {
                    neighbor_id: neighbor.id.clone(),
                    forget_id: forget_pair.id.clone(),
                    similarity: score.value,
                });
            }
        }
    }
    Ok(report)
}
