//! Deterministic template/entity fact corpus for the toy laboratory.
//!
//! Eight question templates are split into forget, domain-neighbor,
//! entity-neighbor, and syntactically-different groups. Forget facts occupy
//! two templates; the syntactically similar neighbor set is produced by
//! running the real clustering/generation/probing pipeline over the
//! rendered forget questions with fresh retain entities.
//!
//! Answers are laid out so the additive model can realize every fact: each
//! template owns a disjoint slice of the answer vocabulary and an entity's
//! slot index selects the token within the slice.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::neighborset::{
    self, Category, DistinctnessReport, QAPair, SetKind, SyntacticCluster, TemplateQaGenerator,
    Thresholds,
};
use crate::ports::{PortError, TextGenerator};
use crate::textsim::{RuleMasker, MASK_TOKEN};

use super::ToyLabError;

struct TemplateDef {
    surface: &'static str,
    variants: [&'static str; 2],
}

const TEMPLATES: [TemplateDef; 8] = [
    TemplateDef {
        surface: "When was {X} born?",
        variants: [
            "In what year was {X} born?",
            "What is the recorded birth year of {X}?",
        ],
    },
    TemplateDef {
        surface: "Which award did {X} receive?",
        variants: [
            "Which honor did {X} end up receiving?",
            "What award was eventually handed to {X}?",
        ],
    },
    TemplateDef {
        surface: "In which city did {X} spend the earliest years of a long career?",
        variants: [
            "Where did the long career of {X} begin?",
            "Which city hosted the early working years of {X}?",
        ],
    },
    TemplateDef {
        surface: "What kind of profession earned {X} broad international recognition and acclaim?",
        variants: [
            "Through what line of work did {X} become internationally recognized?",
            "What occupation made {X} famous around the world?",
        ],
    },
    TemplateDef {
        surface: "How many collaborative projects did the studio working with {X} finish across two busy decades?",
        variants: [
            "Across two decades, how many joint projects did the studio of {X} complete?",
            "What number of collaborations did the studio tied to {X} deliver?",
        ],
    },
    TemplateDef {
        surface: "With whom did {X} collaborate most closely on an unusually ambitious creative project?",
        variants: [
            "Who worked most closely with {X} on that ambitious creative project?",
            "Name the closest collaborator of {X} on the ambitious project.",
        ],
    },
    TemplateDef {
        surface: "Describe the lasting cultural impact that {X} left behind on modern society.",
        variants: [
            "Explain how {X} shaped modern culture in a lasting way.",
            "What enduring mark did {X} leave on contemporary society?",
        ],
    },
    TemplateDef {
        surface: "Summarize the major public controversies surrounding {X} throughout an eventful recent history.",
        variants: [
            "Give a summary of the public controversies that followed {X} in recent years.",
            "Which major public disputes involved {X} over the recent past?",
        ],
    },
];

const FORGET_ROWS: [usize; 2] = [0, 1];
const DOMAIN_ROWS: [usize; 2] = [2, 3];
const ENTITY_ROWS: [usize; 2] = [4, 5];
const SYN_DIFFERENT_ROWS: [usize; 2] = [6, 7];

const FIRST_NAMES: [&str; 10] = [
    "Alder", "Briar", "Calla", "Dorian", "Elowen", "Fintan", "Gemma", "Haldor", "Isolde", "Jarek",
];
const LAST_NAMES: [&str; 6] = [
    "Ashford", "Blackwood", "Corvane", "Dunmore", "Eastvale", "Fairwind",
];

const ANSWER_WORDS: [&str; 40] = [
    "amber", "basalt", "cedar", "damson", "ember", "flint", "garnet", "hazel", "indigo", "jasper",
    "kelp", "lumen", "marble", "nectar", "onyx", "pearl", "quartz", "raven", "sable", "topaz",
    "umber", "velvet", "willow", "xenon", "yarrow", "zircon", "auburn", "birch", "cobalt", "dune",
    "elm", "fern", "granite", "heather", "iris", "juniper", "krill", "laurel", "moss", "nickel",
];

/// Rejection answer rendered for the reserved last vocabulary token.
pub const IDK_SURFACE: &str = "I don't know.";

/// Corpus dimensions. Defaults: 8 templates, a 60-entity pool, a 40-token
/// answer vocabulary plus the rejection token, and 5 entities per group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSizes {
    pub answer_vocab: usize,
    pub entity_pool: usize,
    pub forget_entities: usize,
    pub syn_similar_per_cluster: usize,
    pub domain_entities: usize,
    pub entity_neighbor_entities: usize,
    pub syn_different_entities: usize,
    pub paraphrase_variants: usize,
}

impl Default for CorpusSizes {
    fn default() -> Self {
        Self {
            answer_vocab: ANSWER_WORDS.len(),
            entity_pool: FIRST_NAMES.len() * LAST_NAMES.len(),
            forget_entities: 5,
            syn_similar_per_cluster: 5,
            domain_entities: 5,
            entity_neighbor_entities: 5,
            syn_different_entities: 5,
            paraphrase_variants: 2,
        }
    }
}

impl CorpusSizes {
    pub fn num_templates(&self) -> usize {
        TEMPLATES.len()
    }

    /// Answer tokens per template slice.
    pub fn slots_per_template(&self) -> usize {
        self.answer_vocab / TEMPLATES.len()
    }

    /// Full vocabulary including the rejection token.
    pub fn vocab(&self) -> usize {
        self.answer_vocab + 1
    }

    fn group_sizes(&self) -> [usize; 5] {
        [
            self.forget_entities,
            self.syn_similar_per_cluster,
            self.domain_entities,
            self.entity_neighbor_entities,
            self.syn_different_entities,
        ]
    }

    pub fn validate(&self) -> Result<(), ToyLabError> {
        let infeasible = |msg: &str| Err(ToyLabError::InfeasibleSizes(msg.to_string()));
        if self.group_sizes().iter().any(|&s| s == 0) {
            return infeasible("every entity group must be non-empty");
        }
        if self.forget_entities < 3 {
            return infeasible("forget set needs at least 3 entities per template to cluster");
        }
        if self.entity_pool > FIRST_NAMES.len() * LAST_NAMES.len() {
            return infeasible("entity pool exceeds the name inventory");
        }
        let reserved = self.forget_entities
            + self.domain_entities
            + self.entity_neighbor_entities
            + self.syn_different_entities
            + 2 * self.syn_similar_per_cluster;
        if reserved > self.entity_pool {
            return infeasible("entity pool too small for disjoint neighbor sets");
        }
        let slots = self.slots_per_template();
        if slots == 0 || self.group_sizes().iter().any(|&s| s > slots) {
            return infeasible("answer vocabulary too small for per-template answer slots");
        }
        if self.paraphrase_variants > 2 {
            return infeasible("at most 2 paraphrase variants are available per template");
        }
        Ok(())
    }
}

/// One templated fact: a rendered question plus its answer token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyFact {
    pub id: String,
    pub template_id: usize,
    pub entity_id: usize,
    pub answer_token: usize,
    pub rendered_question: String,
    pub set_kind: SetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paraphrase_of: Option<String>,
}

/// The full deterministic corpus with its construction by-products.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyCorpus {
    pub seed: u64,
    pub sizes: CorpusSizes,
    pub template_surfaces: Vec<String>,
    pub entity_names: Vec<String>,
    /// Answer surfaces per token id; the last entry is the rejection answer.
    pub answer_surfaces: Vec<String>,
    /// Training facts, every set kind included.
    pub facts: Vec<ToyFact>,
    /// Evaluation-only paraphrase renderings of syn-similar and
    /// syn-different facts; same template row, different surface.
    pub paraphrases: Vec<ToyFact>,
    pub clusters: Vec<SyntacticCluster>,
    pub distinctness: DistinctnessReport,
}

impl ToyCorpus {
    pub fn num_templates(&self) -> usize {
        self.template_surfaces.len()
    }

    pub fn num_entities(&self) -> usize {
        self.entity_names.len()
    }

    pub fn vocab(&self) -> usize {
        self.answer_surfaces.len()
    }

    pub fn masker(&self) -> RuleMasker {
        RuleMasker::with_entities(self.entity_names.iter().cloned())
    }

    pub fn facts_of(&self, kind: SetKind) -> Vec<ToyFact> {
        self.facts.iter().filter(|f| f.set_kind == kind).cloned().collect()
    }

    /// Training facts grouped by set kind.
    pub fn by_kind(&self) -> BTreeMap<SetKind, Vec<ToyFact>> {
        let mut out: BTreeMap<SetKind, Vec<ToyFact>> = BTreeMap::new();
        for fact in &self.facts {
            out.entry(fact.set_kind).or_default().push(fact.clone());
        }
        out
    }

    /// Paraphrase renderings grouped by set kind.
    pub fn paraphrases_of(&self, kind: SetKind) -> Vec<ToyFact> {
        self.paraphrases.iter().filter(|f| f.set_kind == kind).cloned().collect()
    }

    pub fn qa_pair(&self, fact: &ToyFact) -> QAPair {
        QAPair {
            id: fact.id.clone(),
            entity: self.entity_names[fact.entity_id].clone(),
            question: fact.rendered_question.clone(),
            answer: self.answer_surfaces[fact.answer_token].clone(),
            aliases: Vec::new(),
            set_kind: fact.set_kind,
            cluster_id: fact.cluster_id,
            category: fact.category,
            paraphrase_of: fact.paraphrase_of.clone(),
        }
    }

    /// The whole corpus (facts then paraphrases) as dataset records.
    pub fn qa_pairs(&self) -> Vec<QAPair> {
        self.facts.iter().chain(&self.paraphrases).map(|f| self.qa_pair(f)).collect()
    }
}

/// Answers probe questions from the ground-truth fact table, standing in
/// for a model that recalls every fact before unlearning.
pub struct CorpusOracleGenerator {
    answers: BTreeMap<String, String>,
}

impl CorpusOracleGenerator {
    pub fn new(pairs: &[QAPair]) -> Self {
        Self {
            answers: pairs
                .iter()
                .map(|p| (p.question.clone(), p.answer.clone()))
                .collect(),
        }
    }
}

impl TextGenerator for CorpusOracleGenerator {
    fn generate(&self, prompt: &str, _max_tokens: usize) -> Result<String, PortError> {
        Ok(self
            .answers
            .get(prompt)
            .cloned()
            .unwrap_or_else(|| "unknown".to_string()))
    }
}

fn render(template: usize, entity: &str) -> String {
    TEMPLATES[template].surface.replace(MASK_TOKEN, entity)
}

fn shuffled_indices(n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let bound = (i + 1) as u64;
        let zone = u64::MAX - u64::MAX % bound;
        let j = loop {
            let x = rng.next_u64();
            if x < zone {
                break (x % bound) as usize;
            }
        };
        order.swap(i, j);
    }
    order
}

/// Builds the corpus for a seed: grid facts for forget, domain, entity, and
/// syntactically different sets, then the syntactically similar set via the
/// real clustering + generation + probe pipeline.
pub fn build_toy_corpus(seed: u64, sizes: &CorpusSizes) -> Result<ToyCorpus, ToyLabError> {
    sizes.validate()?;

    let entity_names: Vec<String> = (0..sizes.entity_pool)
        .map(|i| {
            alloc::format!(
                "{} {}",
                FIRST_NAMES[i / LAST_NAMES.len()],
                LAST_NAMES[i % LAST_NAMES.len()]
            )
        })
        .collect();
    let mut answer_surfaces: Vec<String> = ANSWER_WORDS
        .iter()
        .take(sizes.answer_vocab)
        .map(|w| w.to_string())
        .collect();
    answer_surfaces.push(IDK_SURFACE.to_string());

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let order = shuffled_indices(sizes.entity_pool, &mut rng);
    let mut take = {
        let mut cursor = 0usize;
        move |n: usize| {
            let slice: Vec<usize> = order[cursor..cursor + n].to_vec();
            cursor += n;
            slice
        }
    };
    let forget_entities = take(sizes.forget_entities);
    let domain_entities = take(sizes.domain_entities);
    let entity_nb_entities = take(sizes.entity_neighbor_entities);
    let syn_diff_entities = take(sizes.syn_different_entities);
    let candidate_entities = take(
        sizes.entity_pool
            - sizes.forget_entities
            - sizes.domain_entities
            - sizes.entity_neighbor_entities
            - sizes.syn_different_entities,
    );

    let slots = sizes.slots_per_template();
    // `token_rows` picks which template's vocabulary slice each of the two
    // facts of an entity answers in. The syntactically different set reuses
    // one slice for both rows (entity-determined answers), giving it the
    // same shared-token fit profile as the forget/syn-similar rows.
    let grid_facts = |rows: [usize; 2],
                      token_rows: [usize; 2],
                      entities: &[usize],
                      kind: SetKind,
                      prefix: &str| {
        let mut facts = Vec::new();
        for (&row, &token_row) in rows.iter().zip(&token_rows) {
            for (i, &entity_id) in entities.iter().enumerate() {
                facts.push(ToyFact {
                    id: alloc::format!("{prefix}-t{row}-e{i:02}"),
                    template_id: row,
                    entity_id,
                    answer_token: slots * token_row + i,
                    rendered_question: render(row, &entity_names[entity_id]),
                    set_kind: kind,
                    category: Some(Category::ALL[i % Category::ALL.len()]),
                    cluster_id: None,
                    paraphrase_of: None,
                });
            }
        }
        facts
    };

    let mut facts = grid_facts(
        FORGET_ROWS,
        FORGET_ROWS,
        &forget_entities,
        SetKind::Forget,
        "forget",
    );
    facts.extend(grid_facts(
        DOMAIN_ROWS,
        DOMAIN_ROWS,
        &domain_entities,
        SetKind::DomainNeighbor,
        "domain",
    ));
    facts.extend(grid_facts(
        ENTITY_ROWS,
        ENTITY_ROWS,
        &entity_nb_entities,
        SetKind::EntityNeighbor,
        "entity",
    ));
    facts.extend(grid_facts(
        SYN_DIFFERENT_ROWS,
        [SYN_DIFFERENT_ROWS[0], SYN_DIFFERENT_ROWS[0]],
        &syn_diff_entities,
        SetKind::SynDifferentNeighbor,
        "syndiff",
    ));

    // --- syntactically similar set via the real pipeline ---
    let masker = RuleMasker::with_entities(entity_names.iter().cloned());
    let thresholds = Thresholds::default();

    let corpus_stub = ToyCorpus {
        seed,
        sizes: *sizes,
        template_surfaces: TEMPLATES.iter().map(|t| t.surface.to_string()).collect(),
        entity_names: entity_names.clone(),
        answer_surfaces: answer_surfaces.clone(),
        facts: facts.clone(),
        paraphrases: Vec::new(),
        clusters: Vec::new(),
        distinctness: DistinctnessReport::default(),
    };
    let forget_qas: Vec<QAPair> = corpus_stub
        .facts
        .iter()
        .filter(|f| f.set_kind == SetKind::Forget)
        .map(|f| corpus_stub.qa_pair(f))
        .collect();
    let other_neighbor_qas: Vec<QAPair> = corpus_stub
        .facts
        .iter()
        .filter(|f| {
            matches!(
                f.set_kind,
                SetKind::DomainNeighbor | SetKind::EntityNeighbor
            )
        })
        .map(|f| corpus_stub.qa_pair(f))
        .collect();

    let clusters = neighborset::cluster_forget_questions(&forget_qas, &thresholds, &masker)?;
    if clusters.len() != FORGET_ROWS.len() {
        return Err(ToyLabError::Corpus(alloc::format!(
            "expected {} forget clusters, found {}",
            FORGET_ROWS.len(),
            clusters.len()
        )));
    }
    let row_of_template: BTreeMap<String, usize> = FORGET_ROWS
        .iter()
        .map(|&row| (TEMPLATES[row].surface.to_string(), row))
        .collect();
    let cluster_rows: BTreeMap<u32, usize> = clusters
        .iter()
        .map(|c| {
            row_of_template
                .get(&c.template.masked)
                .map(|&row| (c.cluster_id, row))
                .ok_or_else(|| {
                    ToyLabError::Corpus("cluster template does not match a forget row".to_string())
                })
        })
        .collect::<Result<_, _>>()?;

    let candidate_names: Vec<String> = candidate_entities
        .iter()
        .map(|&i| entity_names[i].clone())
        .collect();
    let excluded: Vec<String> = forget_entities
        .iter()
        .chain(&domain_entities)
        .chain(&entity_nb_entities)
        .chain(&syn_diff_entities)
        .map(|&i| entity_names[i].clone())
        .collect();
    let candidates = neighborset::select_candidate_entities(&candidate_names, &excluded);

    // every (forget template, candidate) combination has a deterministic
    // answer; consecutive candidates land on distinct slots
    let mut qa_table = TemplateQaGenerator::new();
    for (&cluster_id, &row) in &cluster_rows {
        let _ = cluster_id;
        for (idx, name) in candidates.iter().enumerate() {
            let token = slots * row + idx % slots;
            qa_table.insert(
                TEMPLATES[row].surface,
                name.clone(),
                answer_surfaces[token].clone(),
                Vec::new(),
            );
        }
    }

    let inputs = neighborset::SynthesisInputs {
        clusters: &clusters,
        candidates: &candidates,
        other_neighbors: &other_neighbor_qas,
        thresholds,
        pairs_per_cluster: Some(sizes.syn_similar_per_cluster),
    };
    let generated = neighborset::generate_syn_similar_pairs(&inputs, &qa_table, &masker)?;

    let oracle = CorpusOracleGenerator::new(&generated);
    let probe = neighborset::probe_filter(
        generated,
        &oracle,
        &neighborset::ContainmentMatcher,
        32,
    )?;
    if !probe.dropped.is_empty() {
        return Err(ToyLabError::Corpus(alloc::format!(
            "probe filter dropped {} generated pairs",
            probe.dropped.len()
        )));
    }

    let entity_index: BTreeMap<&str, usize> = entity_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let answer_index: BTreeMap<&str, usize> = answer_surfaces
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_str(), i))
        .collect();
    for (k, pair) in probe.kept.iter().enumerate() {
        let cluster_id = pair
            .cluster_id
            .ok_or_else(|| ToyLabError::Corpus("generated pair without cluster id".to_string()))?;
        let row = *cluster_rows
            .get(&cluster_id)
            .ok_or_else(|| ToyLabError::Corpus("generated pair with unknown cluster".to_string()))?;
        facts.push(ToyFact {
            id: pair.id.clone(),
            template_id: row,
            entity_id: entity_index[pair.entity.as_str()],
            answer_token: answer_index[pair.answer.as_str()],
            rendered_question: pair.question.clone(),
            set_kind: SetKind::SynSimilarNeighbor,
            category: Some(Category::ALL[k % Category::ALL.len()]),
            cluster_id: Some(cluster_id),
            paraphrase_of: None,
        });
    }

    // evaluation-only paraphrase renderings for the two sets compared in
    // the paraphrase analysis
    let mut paraphrases = Vec::new();
    for fact in facts.iter().filter(|f| {
        matches!(
            f.set_kind,
            SetKind::SynSimilarNeighbor | SetKind::SynDifferentNeighbor
        )
    }) {
        for variant in 0..sizes.paraphrase_variants {
            paraphrases.push(ToyFact {
                id: alloc::format!("{}-p{variant}", fact.id),
                rendered_question: TEMPLATES[fact.template_id].variants[variant]
                    .replace(MASK_TOKEN, &entity_names[fact.entity_id]),
                paraphrase_of: Some(fact.id.clone()),
                ..fact.clone()
            });
        }
    }

    let neighbor_qas: Vec<QAPair> = facts
        .iter()
        .filter(|f| {
            matches!(
                f.set_kind,
                SetKind::DomainNeighbor | SetKind::EntityNeighbor
            )
        })
        .map(|f| corpus_stub.qa_pair(f))
        .collect();
    let distinctness =
        neighborset::validate_distinctness(&neighbor_qas, &forget_qas, &thresholds, &masker)?;

    Ok(ToyCorpus {
        seed,
        sizes: *sizes,
        template_surfaces: TEMPLATES.iter().map(|t| t.surface.to_string()).collect(),
        entity_names,
        answer_surfaces,
        facts,
        paraphrases,
        clusters,
        distinctness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textsim;

    #[test]
    fn default_sizes_are_feasible() {
        assert!(CorpusSizes::default().validate().is_ok());
        assert_eq!(CorpusSizes::default().slots_per_template(), 5);
        assert_eq!(CorpusSizes::default().vocab(), 41);
    }

    #[test]
    fn infeasible_sizes_are_rejected() {
        let mut sizes = CorpusSizes {
            entity_pool: 20,
            ..CorpusSizes::default()
        };
        assert!(matches!(
            sizes.validate(),
            Err(ToyLabError::InfeasibleSizes(_))
        ));
        sizes = CorpusSizes {
            forget_entities: 2,
            ..CorpusSizes::default()
        };
        assert!(sizes.validate().is_err());
        sizes = CorpusSizes {
            answer_vocab: 16,
            ..CorpusSizes::default()
        };
        assert!(sizes.validate().is_err());
    }

    #[test]
    fn corpus_is_deterministic_per_seed() {
        let a = build_toy_corpus(0, &CorpusSizes::default()).unwrap();
        let b = build_toy_corpus(0, &CorpusSizes::default()).unwrap();
        assert_eq!(a, b);
        let c = build_toy_corpus(1, &CorpusSizes::default()).unwrap();
        assert_ne!(a.facts, c.facts);
    }

    #[test]
    fn neighbor_sets_are_entity_disjoint() {
        let corpus = build_toy_corpus(0, &CorpusSizes::default()).unwrap();
        let mut seen: BTreeMap<usize, SetKind> = BTreeMap::new();
        for fact in &corpus.facts {
            if let Some(&kind) = seen.get(&fact.entity_id) {
                assert_eq!(kind, fact.set_kind, "entity {} reused", fact.entity_id);
            }
            seen.insert(fact.entity_id, fact.set_kind);
        }
    }

    #[test]
    fn syn_similar_set_matches_forget_templates() {
        let corpus = build_toy_corpus(0, &CorpusSizes::default()).unwrap();
        let masker = corpus.masker();
        let syn = corpus.facts_of(SetKind::SynSimilarNeighbor);
        assert_eq!(syn.len(), 10);
        for fact in &syn {
            let masked = textsim::mask_entities(&fact.rendered_question, &masker).unwrap();
            let cluster = corpus
                .clusters
                .iter()
                .find(|c| c.cluster_id == fact.cluster_id.unwrap())
                .unwrap();
            let sim = textsim::levenshtein_similarity(&masked, &cluster.template).value;
            assert!(sim >= 0.75, "similarity {sim} below threshold");
        }
    }

    #[test]
    fn domain_and_entity_sets_are_syntactically_distinct() {
        let corpus = build_toy_corpus(0, &CorpusSizes::default()).unwrap();
        assert!(corpus.distinctness.is_clean());
        assert_eq!(corpus.distinctness.checked_pairs, 20 * 10);

        // recompute on masked forms, including the syn-different set
        let masker = corpus.masker();
        let forget = corpus.facts_of(SetKind::Forget);
        for kind in [
            SetKind::DomainNeighbor,
            SetKind::EntityNeighbor,
            SetKind::SynDifferentNeighbor,
        ] {
            for fact in corpus.facts_of(kind) {
                let masked = textsim::mask_entities(&fact.rendered_question, &masker).unwrap();
                for f in &forget {
                    let fm = textsim::mask_entities(&f.rendered_question, &masker).unwrap();
                    let sim = textsim::levenshtein_similarity(&masked, &fm).value;
                    assert!(sim <= 0.4, "{} vs {}: {sim}", fact.id, f.id);
                }
            }
        }
    }

    #[test]
    fn answer_layout_is_per_template_sliced() {
        let corpus = build_toy_corpus(3, &CorpusSizes::default()).unwrap();
        let slots = corpus.sizes.slots_per_template();
        for fact in &corpus.facts {
            // the syn-different set answers in one slice for both rows
            let expected_slice = if fact.set_kind == SetKind::SynDifferentNeighbor {
                6
            } else {
                fact.template_id
            };
            assert_eq!(fact.answer_token / slots, expected_slice, "fact {}", fact.id);
        }
        // within a template and set, answers are distinct
        let mut seen: BTreeMap<(usize, SetKind), Vec<usize>> = BTreeMap::new();
        for fact in &corpus.facts {
            let entry = seen.entry((fact.template_id, fact.set_kind)).or_default();
            assert!(!entry.contains(&fact.answer_token));
            entry.push(fact.answer_token);
        }
    }

    #[test]
    fn paraphrases_reference_roots_and_share_rows() {
        let corpus = build_toy_corpus(0, &CorpusSizes::default()).unwrap();
        assert_eq!(corpus.paraphrases.len(), 2 * (10 + 10));
        for p in &corpus.paraphrases {
            let root_id = p.paraphrase_of.as_ref().unwrap();
            let root = corpus.facts.iter().find(|f| &f.id == root_id).unwrap();
            assert_eq!(p.template_id, root.template_id);
            assert_eq!(p.entity_id, root.entity_id);
            assert_eq!(p.answer_token, root.answer_token);
            assert_ne!(p.rendered_question, root.rendered_question);
        }
    }

    #[test]
    fn rendered_questions_mask_back_to_templates() {
        let corpus = build_toy_corpus(5, &CorpusSizes::default()).unwrap();
        let masker = corpus.masker();
        for fact in &corpus.facts {
            let masked = textsim::mask_entities(&fact.rendered_question, &masker).unwrap();
            assert_eq!(
                masked.masked, corpus.template_surfaces[fact.template_id],
                "fact {}",
                fact.id
            );
        }
    }

    #[test]
    fn dataset_export_round_trips_ids() {
        let corpus = build_toy_corpus(0, &CorpusSizes::default()).unwrap();
        let pairs = corpus.qa_pairs();
        assert_eq!(pairs.len(), corpus.facts.len() + corpus.paraphrases.len());
        let mut ids: Vec<&str> = pairs.iter().map(|p| p.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), pairs.len(), "duplicate ids in export");
        for pair in &pairs {
            if pair.set_kind == SetKind::SynSimilarNeighbor {
                assert!(pair.cluster_id.is_some());
            }
            assert!(!pair.question.is_empty());
        }
    }
}
