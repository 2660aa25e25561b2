//! Fitting, unlearning, and gradient probes for the toy model.
//!
//! Gradients are the analytic softmax derivatives accumulated into the
//! template, entity, and bias blocks; every formula here is checked against
//! central finite differences in the tests.

use alloc::collections::BTreeMap;
use alloc::string::ToString;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::losses::{
    self, sigmoid, AnswerRole, LossMethod, LossSpec, MethodBatch, RegBatch, Regularizer,
    ScoredSequence,
};
use crate::neighborset::SetKind;

use super::corpus::{ToyCorpus, ToyFact};
use super::model::{GradBuffer, ToyModel};
use super::ToyLabError;

const MODEL_SEED_SALT: u64 = 0x6d6f_6465_6c5f;
const INIT_NOISE: f64 = 0.05;

/// Fresh unfitted model sized for the corpus, with seeded noise so facts
/// sit at slightly different margins after fitting.
pub fn init_model(corpus: &ToyCorpus) -> ToyModel {
    ToyModel::with_noise(
        corpus.num_templates(),
        corpus.num_entities(),
        corpus.vocab(),
        corpus.seed ^ MODEL_SEED_SALT,
        INIT_NOISE,
    )
}

/// Probability the model assigns to a fact's answer token.
pub fn fact_prob(model: &ToyModel, fact: &ToyFact) -> f64 {
    model.probs(fact.template_id, fact.entity_id)[fact.answer_token]
}

/// Whether the fact's answer token is the argmax prediction.
pub fn fact_top1(model: &ToyModel, fact: &ToyFact) -> bool {
    let probs = model.probs(fact.template_id, fact.entity_id);
    let best = probs
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal))
        .map(|(i, _)| i);
    best == Some(fact.answer_token)
}

/// Offline utility for a fact set: mean of `(answer probability + top-1
/// accuracy) / 2`. The embedding and NLI metrics need live models, so the
/// toy stack scores with these two components.
pub fn toy_utility(model: &ToyModel, facts: &[ToyFact]) -> f64 {
    if facts.is_empty() {
        return 0.0;
    }
    facts
        .iter()
        .map(|f| (fact_prob(model, f) + f64::from(fact_top1(model, f))) / 2.0)
        .sum::<f64>()
        / facts.len() as f64
}

/// Complement of the same utility on the forget set.
pub fn toy_forget_efficacy(model: &ToyModel, forget: &[ToyFact]) -> f64 {
    1.0 - toy_utility(model, forget)
}

/// Utility per set kind over the corpus training facts.
pub fn utility_by_kind(model: &ToyModel, corpus: &ToyCorpus) -> BTreeMap<SetKind, f64> {
    corpus
        .by_kind()
        .into_iter()
        .map(|(kind, facts)| (kind, toy_utility(model, &facts)))
        .collect()
}

/// Relative utility drop per set kind between two model states.
pub fn rud_by_kind(
    before: &ToyModel,
    after: &ToyModel,
    corpus: &ToyCorpus,
) -> BTreeMap<SetKind, f64> {
    corpus
        .by_kind()
        .into_iter()
        .map(|(kind, facts)| {
            let mu_before = toy_utility(before, &facts);
            let mu_after = toy_utility(after, &facts);
            (kind, (mu_after - mu_before) / mu_before * 100.0)
        })
        .collect()
}

/// Mean negative log-likelihood of the answer tokens.
pub fn mean_nll(model: &ToyModel, facts: &[ToyFact]) -> f64 {
    let terms: Vec<f64> = facts
        .iter()
        .map(|f| -model.log_probs(f.template_id, f.entity_id)[f.answer_token])
        .collect();
    losses::pairwise_sum(&terms) / terms.len() as f64
}

/// Gradient of [`mean_nll`]: `(p - onehot) / n` accumulated per fact.
pub fn nll_grad(model: &ToyModel, facts: &[ToyFact]) -> GradBuffer {
    let mut grad = GradBuffer::zeros_like(model);
    let scale = 1.0 / facts.len() as f64;
    for fact in facts {
        let mut dlogits = model.probs(fact.template_id, fact.entity_id);
        dlogits[fact.answer_token] -= 1.0;
        for d in dlogits.iter_mut() {
            *d *= scale;
        }
        grad.accumulate(fact.template_id, fact.entity_id, &dlogits);
    }
    grad
}

/// Frobenius norm of the mean-NLL gradient for each probe set.
pub fn gradient_norm_probe(
    model: &ToyModel,
    probe_sets: &BTreeMap<SetKind, Vec<ToyFact>>,
) -> Result<BTreeMap<SetKind, f64>, ToyLabError> {
    if probe_sets.is_empty() || probe_sets.values().any(Vec::is_empty) {
        return Err(ToyLabError::EmptyProbe);
    }
    Ok(probe_sets
        .iter()
        .map(|(&kind, facts)| (kind, nll_grad(model, facts).frobenius_norm()))
        .collect())
}

/// Cross-entropy fitting controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub lr: f64,
    pub max_epochs: usize,
    /// Stop once every answer is the argmax and the mean answer
    /// probability reaches this level.
    pub target_mean_prob: f64,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            lr: 0.5,
            max_epochs: 5000,
            target_mean_prob: 0.95,
        }
    }
}

/// A fitted model plus the per-epoch loss trace.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: ToyModel,
    pub epochs: usize,
    pub epoch_losses: Vec<f64>,
}

fn is_fitted(model: &ToyModel, facts: &[ToyFact], target_mean_prob: f64) -> bool {
    let mean_prob =
        facts.iter().map(|f| fact_prob(model, f)).sum::<f64>() / facts.len() as f64;
    mean_prob >= target_mean_prob && facts.iter().all(|f| fact_top1(model, f))
}

/// Full-batch gradient descent on cross-entropy until every fact is
/// recalled (argmax correct, mean probability at target).
pub fn fit_initial(
    mut model: ToyModel,
    facts: &[ToyFact],
    params: &FitParams,
) -> Result<FitResult, ToyLabError> {
    if facts.is_empty() {
        return Err(ToyLabError::Corpus("cannot fit an empty corpus".to_string()));
    }
    let mut epoch_losses = Vec::new();
    for epoch in 1..=params.max_epochs {
        epoch_losses.push(mean_nll(&model, facts));
        let grad = nll_grad(&model, facts);
        model.apply_scaled(&grad, -params.lr);
        if is_fitted(&model, facts, params.target_mean_prob) {
            return Ok(FitResult {
                model,
                epochs: epoch,
                epoch_losses,
            });
        }
    }
    Err(ToyLabError::NonConvergence {
        epochs: params.max_epochs,
    })
}

fn scored_batch(
    model: &ToyModel,
    reference: &ToyModel,
    facts: &[ToyFact],
    role: AnswerRole,
    target_idk: bool,
) -> Result<Vec<ScoredSequence>, ToyLabError> {
    facts
        .iter()
        .map(|fact| {
            let token = if target_idk {
                model.idk_token()
            } else {
                fact.answer_token
            };
            let current = model.log_probs(fact.template_id, fact.entity_id)[token];
            let frozen = reference.log_probs(fact.template_id, fact.entity_id)[token];
            ScoredSequence::new(
                alloc::vec![current],
                Some(alloc::vec![frozen]),
                role,
            )
            .map_err(ToyLabError::from)
        })
        .collect()
}

fn retain_distributions(model: &ToyModel, facts: &[ToyFact]) -> Vec<Vec<f64>> {
    facts
        .iter()
        .map(|f| model.probs(f.template_id, f.entity_id))
        .collect()
}

/// Combined objective value for the toy model under a loss spec.
pub fn objective_value(
    model: &ToyModel,
    reference: &ToyModel,
    spec: &LossSpec,
    forget: &[ToyFact],
    retain: &[ToyFact],
) -> Result<f64, ToyLabError> {
    let forget_seqs = scored_batch(model, reference, forget, AnswerRole::ForgetAnswer, false)?;
    let idk_seqs = scored_batch(model, reference, forget, AnswerRole::IdkAnswer, true)?;
    let retain_seqs = scored_batch(model, reference, retain, AnswerRole::RetainAnswer, false)?;
    let retain_current = retain_distributions(model, retain);
    let retain_reference = retain_distributions(reference, retain);

    let method = match spec.method {
        LossMethod::Ga => MethodBatch::Ga(&forget_seqs),
        LossMethod::Npo => MethodBatch::Npo(&forget_seqs),
        LossMethod::Dpo => MethodBatch::Dpo {
            negative: &forget_seqs,
            positive: &idk_seqs,
        },
        LossMethod::Idk => MethodBatch::Idk(&idk_seqs),
    };
    let reg = match spec.regularizer {
        Regularizer::None => RegBatch::None,
        Regularizer::Gd => RegBatch::Gd(&retain_seqs),
        Regularizer::Kl => RegBatch::Kl {
            current: &retain_current,
            reference: &retain_reference,
        },
    };
    losses::combined_objective(spec, &method, &reg).map_err(ToyLabError::from)
}

/// Analytic gradient of [`objective_value`] with respect to every
/// parameter block.
pub fn objective_grad(
    model: &ToyModel,
    reference: &ToyModel,
    spec: &LossSpec,
    forget: &[ToyFact],
    retain: &[ToyFact],
) -> Result<GradBuffer, ToyLabError> {
    spec.validate()?;
    if forget.is_empty() {
        return Err(ToyLabError::Loss(losses::LossError::EmptyBatch));
    }
    let mut grad = GradBuffer::zeros_like(model);
    let batch = forget.len() as f64;
    let idk = model.idk_token();

    for fact in forget {
        let probs = model.probs(fact.template_id, fact.entity_id);
        let answer = fact.answer_token;
        let mut dlogits = alloc::vec![0.0; model.vocab];
        match spec.method {
            LossMethod::Ga => {
                // d/dlogit of mean log p(answer): (onehot - p) / B
                for (k, d) in dlogits.iter_mut().enumerate() {
                    *d = (f64::from(k == answer) - probs[k]) / batch;
                }
            }
            LossMethod::Npo => {
                let beta = spec.beta();
                let ratio = model.log_probs(fact.template_id, fact.entity_id)[answer]
                    - reference.log_probs(fact.template_id, fact.entity_id)[answer];
                let coeff = 2.0 * sigmoid(beta * ratio) / batch;
                for (k, d) in dlogits.iter_mut().enumerate() {
                    *d = coeff * (f64::from(k == answer) - probs[k]);
                }
            }
            LossMethod::Dpo => {
                let beta = spec.beta();
                let lp = model.log_probs(fact.template_id, fact.entity_id);
                let lp_ref = reference.log_probs(fact.template_id, fact.entity_id);
                let delta_pos = lp[idk] - lp_ref[idk];
                let delta_neg = lp[answer] - lp_ref[answer];
                let weight = beta * sigmoid(-beta * (delta_pos - delta_neg)) / batch;
                // the positive and negative prompts coincide, so the
                // softmax terms cancel and only the one-hots remain
                for (k, d) in dlogits.iter_mut().enumerate() {
                    *d = weight * (f64::from(k == answer) - f64::from(k == idk));
                }
            }
            LossMethod::Idk => {
                // d/dlogit of mean -log p(idk): (p - onehot_idk) / B
                for (k, d) in dlogits.iter_mut().enumerate() {
                    *d = (probs[k] - f64::from(k == idk)) / batch;
                }
            }
        }
        grad.accumulate(fact.template_id, fact.entity_id, &dlogits);
    }

    if spec.regularizer != Regularizer::None {
        if retain.is_empty() {
            return Err(ToyLabError::Loss(losses::LossError::EmptyBatch));
        }
        let weight = spec.reg_weight / retain.len() as f64;
        for fact in retain {
            let probs = model.probs(fact.template_id, fact.entity_id);
            let mut dlogits = alloc::vec![0.0; model.vocab];
            match spec.regularizer {
                Regularizer::Gd => {
                    for (k, d) in dlogits.iter_mut().enumerate() {
                        *d = weight * (probs[k] - f64::from(k == fact.answer_token));
                    }
                }
                Regularizer::Kl => {
                    let ref_probs = reference.probs(fact.template_id, fact.entity_id);
                    let mut kl = 0.0;
                    for (p, q) in probs.iter().zip(&ref_probs) {
                        kl += p * libm::log(p / q);
                    }
                    for (k, d) in dlogits.iter_mut().enumerate() {
                        *d = weight
                            * probs[k]
                            * (libm::log(probs[k] / ref_probs[k]) - kl);
                    }
                }
                Regularizer::None => unreachable!(),
            }
            grad.accumulate(fact.template_id, fact.entity_id, &dlogits);
        }
    }

    Ok(grad)
}

/// Default spec for a method: beta 0.1 where needed, unit reg weight.
pub fn default_spec(method: LossMethod, regularizer: Regularizer) -> LossSpec {
    LossSpec {
        method,
        regularizer,
        beta: method.needs_beta().then_some(0.1),
        reg_weight: 1.0,
    }
}

/// Step size, step budget, and the forget-efficacy stopping band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnlearnParams {
    pub lr: f64,
    pub max_steps: usize,
    pub fe_band: (f64, f64),
}

pub const DEFAULT_FE_BAND: (f64, f64) = (0.65, 0.75);

impl UnlearnParams {
    /// Per-method step sizes keep the published learning-rate ratios
    /// (GA lowest; NPO six times GA) rescaled to the toy model.
    pub fn for_method(method: LossMethod) -> Self {
        let lr = match method {
            LossMethod::Ga => 0.5,
            LossMethod::Npo => 3.0,
            LossMethod::Idk => 0.3,
            LossMethod::Dpo => 0.8,
        };
        Self {
            lr,
            max_steps: 6000,
            fe_band: DEFAULT_FE_BAND,
        }
    }
}

/// One recorded unlearning step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    /// Objective value at the parameters this step started from.
    pub loss: f64,
    pub forget_efficacy: f64,
    /// Utility per set kind after the step.
    pub utility: BTreeMap<SetKind, f64>,
    /// Frobenius norm of the mean-NLL gradient per probe set after the step.
    pub grad_norm: BTreeMap<SetKind, f64>,
}

/// Per-step record of an unlearning run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunTrace {
    pub steps: Vec<TraceStep>,
}

/// Final model, trace, and the step at which the efficacy band was entered.
#[derive(Debug, Clone)]
pub struct UnlearnRun {
    pub model: ToyModel,
    pub trace: RunTrace,
    pub band_step: Option<usize>,
}

/// Gradient steps on the combined objective until forget efficacy first
/// enters the band.
///
/// The reference model is frozen at entry. When a full step would jump
/// from below the band to above it, the step size is bisected so the run
/// stops inside the band; this mirrors tuning the step budget to a target
/// efficacy level. `max_steps == 0` is an explicit no-op that returns the
/// model unchanged.
pub fn unlearn(
    model: ToyModel,
    spec: &LossSpec,
    corpus: &ToyCorpus,
    retain_reg: &[ToyFact],
    params: &UnlearnParams,
) -> Result<UnlearnRun, ToyLabError> {
    spec.validate()?;
    let forget = corpus.facts_of(SetKind::Forget);
    if forget.is_empty() {
        return Err(ToyLabError::Corpus("corpus has no forget facts".to_string()));
    }
    let reference = model.clone();
    let probe_sets = corpus.by_kind();
    let (band_lo, band_hi) = params.fe_band;

    let mut run = UnlearnRun {
        model,
        trace: RunTrace::default(),
        band_step: None,
    };
    if params.max_steps == 0 {
        return Ok(run);
    }

    for step in 1..=params.max_steps {
        let loss = objective_value(&run.model, &reference, spec, &forget, retain_reg)?;
        let grad = objective_grad(&run.model, &reference, spec, &forget, retain_reg)?;
        let fe_before = toy_forget_efficacy(&run.model, &forget);

        let mut candidate = run.model.clone();
        candidate.apply_scaled(&grad, -params.lr);
        let mut fe_after = toy_forget_efficacy(&candidate, &forget);

        if fe_after > band_hi && fe_before < band_lo {
            // bisect the step size so the stop lands inside the band
            let mut lo = 0.0f64;
            let mut hi = 1.0f64;
            let mut landed = false;
            for _ in 0..64 {
                let mid = 0.5 * (lo + hi);
                candidate = run.model.clone();
                candidate.apply_scaled(&grad, -params.lr * mid);
                fe_after = toy_forget_efficacy(&candidate, &forget);
                if fe_after > band_hi {
                    hi = mid;
                } else if fe_after < band_lo {
                    lo = mid;
                } else {
                    landed = true;
                    break;
                }
            }
            if !landed {
                run.trace.steps.push(trace_step(
                    step, loss, fe_after, &candidate, corpus, &probe_sets,
                )?);
                run.model = candidate;
                return Err(ToyLabError::BandNeverReached {
                    steps: step,
                    run: alloc::boxed::Box::new(run),
                });
            }
        }

        run.model = candidate;
        run.trace.steps.push(trace_step(
            step,
            loss,
            fe_after,
            &run.model,
            corpus,
            &probe_sets,
        )?);
        if (band_lo..=band_hi).contains(&fe_after) {
            run.band_step = Some(step);
            return Ok(run);
        }
    }

    Err(ToyLabError::BandNeverReached {
        steps: params.max_steps,
        run: alloc::boxed::Box::new(run),
    })
}

fn trace_step(
    step: usize,
    loss: f64,
    forget_efficacy: f64,
    model: &ToyModel,
    corpus: &ToyCorpus,
    probe_sets: &BTreeMap<SetKind, Vec<ToyFact>>,
) -> Result<TraceStep, ToyLabError> {
    Ok(TraceStep {
        step,
        loss,
        forget_efficacy,
        utility: utility_by_kind(model, corpus),
        grad_norm: gradient_norm_probe(model, probe_sets)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toylab::corpus::{build_toy_corpus, CorpusSizes};

    fn fitted_corpus() -> (ToyCorpus, ToyModel) {
        static FIXTURE: std::sync::OnceLock<(ToyCorpus, ToyModel)> = std::sync::OnceLock::new();
        FIXTURE
            .get_or_init(|| {
                let corpus = build_toy_corpus(0, &CorpusSizes::default()).unwrap();
                let fit =
                    fit_initial(init_model(&corpus), &corpus.facts, &FitParams::default())
                        .unwrap();
                (corpus, fit.model)
            })
            .clone()
    }

    #[test]
    fn fit_reaches_full_recall() {
        let (corpus, model) = fitted_corpus();
        for fact in &corpus.facts {
            assert!(fact_top1(&model, fact), "fact {} not recalled", fact.id);
        }
        let mean_prob = corpus
            .facts
            .iter()
            .map(|f| fact_prob(&model, f))
            .sum::<f64>()
            / corpus.facts.len() as f64;
        assert!(mean_prob >= 0.95);
    }

    #[test]
    fn fit_loss_strictly_decreases_over_first_epochs() {
        let corpus = build_toy_corpus(0, &CorpusSizes::default()).unwrap();
        let fit = fit_initial(init_model(&corpus), &corpus.facts, &FitParams::default()).unwrap();
        assert!(fit.epoch_losses.len() >= 3);
        assert!(fit.epoch_losses[0] > fit.epoch_losses[1]);
        assert!(fit.epoch_losses[1] > fit.epoch_losses[2]);
    }

    /// Central finite differences over every parameter for one spec.
    fn check_gradient(spec: &LossSpec, corpus: &ToyCorpus, model: &ToyModel) {
        let reference = {
            // a slightly perturbed reference so ratios are non-trivial
            let mut r = model.clone();
            for i in 0..r.param_count() {
                *r.param_mut(i) += ((i % 7) as f64 - 3.0) * 0.01;
            }
            r
        };
        let forget = corpus.facts_of(SetKind::Forget);
        let retain = corpus.facts_of(SetKind::SynSimilarNeighbor);
        let grad = objective_grad(model, &reference, spec, &forget, &retain).unwrap();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..model.param_count() {
            let mut plus = model.clone();
            *plus.param_mut(i) += h;
            let mut minus = model.clone();
            *minus.param_mut(i) -= h;
            let fd = (objective_value(&plus, &reference, spec, &forget, &retain).unwrap()
                - objective_value(&minus, &reference, spec, &forget, &retain).unwrap())
                / (2.0 * h);
            let diff = (fd - grad.param(i, model.vocab)).abs();
            worst = worst.max(diff);
        }
        assert!(
            worst < 1e-6,
            "max |analytic - fd| = {worst} for {:?}/{:?}",
            spec.method,
            spec.regularizer
        );
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let (corpus, model) = fitted_corpus();
        for method in LossMethod::ALL {
            let spec = default_spec(method, Regularizer::None);
            check_gradient(&spec, &corpus, &model);
        }
        for reg in [Regularizer::Gd, Regularizer::Kl] {
            let spec = default_spec(LossMethod::Ga, reg);
            check_gradient(&spec, &corpus, &model);
        }
    }

    #[test]
    fn probe_norm_vanishes_on_perfectly_recalled_sets() {
        let corpus = build_toy_corpus(0, &CorpusSizes::default()).unwrap();
        let mut model = ToyModel::zeros(
            corpus.num_templates(),
            corpus.num_entities(),
            corpus.vocab(),
        );
        // answer logit 160, any competitor at most 80
        for fact in &corpus.facts {
            model.u[fact.template_id][fact.answer_token] = 80.0;
            model.v[fact.entity_id][fact.answer_token] = 80.0;
        }
        let norms = gradient_norm_probe(&model, &corpus.by_kind()).unwrap();
        for (kind, norm) in norms {
            assert!(norm < 1e-6, "{kind:?} norm {norm}");
        }
    }

    #[test]
    fn probe_norm_matches_flat_gradient_sum() {
        let (corpus, model) = fitted_corpus();
        let forget = corpus.facts_of(SetKind::Forget);
        let grad = nll_grad(&model, &forget);
        let mut total = 0.0;
        for i in 0..model.param_count() {
            let g = grad.param(i, model.vocab);
            total += g * g;
        }
        assert!((grad.frobenius_norm() - libm::sqrt(total)).abs() < 1e-12);
    }

    #[test]
    fn empty_probe_is_rejected() {
        let (corpus, model) = fitted_corpus();
        let mut sets = corpus.by_kind();
        sets.insert(SetKind::Forget, Vec::new());
        assert!(matches!(
            gradient_norm_probe(&model, &sets),
            Err(ToyLabError::EmptyProbe)
        ));
    }

    #[test]
    fn zero_step_unlearn_is_a_no_op() {
        let (corpus, model) = fitted_corpus();
        let spec = default_spec(LossMethod::Ga, Regularizer::None);
        let params = UnlearnParams {
            max_steps: 0,
            ..UnlearnParams::for_method(LossMethod::Ga)
        };
        let run = unlearn(model.clone(), &spec, &corpus, &[], &params).unwrap();
        assert_eq!(run.model, model);
        assert!(run.trace.steps.is_empty());
        let rud = rud_by_kind(&model, &run.model, &corpus);
        assert!(rud.values().all(|&r| r == 0.0));
    }

    #[test]
    fn ga_run_stops_inside_the_band() {
        let (corpus, model) = fitted_corpus();
        let spec = default_spec(LossMethod::Ga, Regularizer::None);
        let params = UnlearnParams::for_method(LossMethod::Ga);
        let run = unlearn(model, &spec, &corpus, &[], &params).unwrap();
        let fe = run.trace.steps.last().unwrap().forget_efficacy;
        assert!(run.band_step.is_some());
        assert!((0.65..=0.75).contains(&fe), "fe = {fe}");
    }

    fn redirected_count(model: &ToyModel, forget: &[ToyFact]) -> usize {
        let idk = model.idk_token();
        forget
            .iter()
            .filter(|f| {
                let probs = model.probs(f.template_id, f.entity_id);
                let best = probs
                    .iter()
                    .enumerate()
                    .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
                    .map(|(i, _)| i)
                    .unwrap();
                best == idk
            })
            .count()
    }

    #[test]
    fn idk_run_redirects_forget_answers_to_the_rejection_token() {
        let (corpus, model) = fitted_corpus();
        let forget = corpus.facts_of(SetKind::Forget);
        let spec = default_spec(LossMethod::Idk, Regularizer::None);

        // At the band stop the top-1 term of the efficacy score pins the
        // redirect rate to 80-90%: with complement efficacy in [0.65, 0.75]
        // the 8-of-10 plateau always lies inside the band.
        let params = UnlearnParams::for_method(LossMethod::Idk);
        let run = unlearn(model.clone(), &spec, &corpus, &[], &params).unwrap();
        let at_band = redirected_count(&run.model, &forget);
        assert!(
            at_band * 10 >= forget.len() * 8,
            "only {at_band}/{} forget facts answer with the rejection token",
            forget.len()
        );

        // just past the band every forget answer is the rejection token
        let deeper = UnlearnParams {
            fe_band: (0.78, 0.88),
            ..params
        };
        let run = unlearn(model, &spec, &corpus, &[], &deeper).unwrap();
        assert_eq!(redirected_count(&run.model, &forget), forget.len());
    }

    #[test]
    fn unlearn_trace_is_deterministic() {
        let (corpus, model) = fitted_corpus();
        let spec = default_spec(LossMethod::Npo, Regularizer::None);
        let params = UnlearnParams::for_method(LossMethod::Npo);
        let a = unlearn(model.clone(), &spec, &corpus, &[], &params).unwrap();
        let b = unlearn(model, &spec, &corpus, &[], &params).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.model, b.model);
        assert_eq!(
            serde_json::to_string(&a.trace).unwrap(),
            serde_json::to_string(&b.trace).unwrap()
        );
    }

    #[test]
    fn syn_similar_probe_norm_dominates_syn_different() {
        let (corpus, model) = fitted_corpus();
        let spec = default_spec(LossMethod::Ga, Regularizer::None);
        let params = UnlearnParams::for_method(LossMethod::Ga);
        let run = unlearn(model, &spec, &corpus, &[], &params).unwrap();
        assert!(run.trace.steps.len() >= 2);
        for step in &run.trace.steps[1..] {
            let syn = step.grad_norm[&SetKind::SynSimilarNeighbor];
            let diff = step.grad_norm[&SetKind::SynDifferentNeighbor];
            assert!(
                syn > diff,
                "step {}: syn {syn} <= diff {diff}",
                step.step
            );
        }
    }

    #[test]
    fn ga_damages_syn_similar_most() {
        let (corpus, model) = fitted_corpus();
        let spec = default_spec(LossMethod::Ga, Regularizer::None);
        let params = UnlearnParams::for_method(LossMethod::Ga);
        let run = unlearn(model.clone(), &spec, &corpus, &[], &params).unwrap();
        let rud = rud_by_kind(&model, &run.model, &corpus);
        let syn = rud[&SetKind::SynSimilarNeighbor];
        let domain = rud[&SetKind::DomainNeighbor];
        let entity = rud[&SetKind::EntityNeighbor];
        assert!(syn <= domain - 10.0, "syn {syn} vs domain {domain}");
        assert!(syn <= entity - 10.0, "syn {syn} vs entity {entity}");
    }

    #[test]
    fn paraphrase_renderings_share_the_root_ordering() {
        let (corpus, model) = fitted_corpus();
        let spec = default_spec(LossMethod::Ga, Regularizer::None);
        let params = UnlearnParams::for_method(LossMethod::Ga);
        let run = unlearn(model.clone(), &spec, &corpus, &[], &params).unwrap();

        let rud_for = |facts: &[ToyFact]| {
            let before = toy_utility(&model, facts);
            let after = toy_utility(&run.model, facts);
            (after - before) / before * 100.0
        };
        let syn_para = corpus.paraphrases_of(SetKind::SynSimilarNeighbor);
        let diff_para = corpus.paraphrases_of(SetKind::SynDifferentNeighbor);
        let syn_root = corpus.facts_of(SetKind::SynSimilarNeighbor);
        let diff_root = corpus.facts_of(SetKind::SynDifferentNeighbor);

        // paraphrases rendered from the same template rows score identically
        assert!((rud_for(&syn_para) - rud_for(&syn_root)).abs() < 1e-9);
        assert!((rud_for(&diff_para) - rud_for(&diff_root)).abs() < 1e-9);
        assert!(rud_for(&syn_para) < rud_for(&diff_para));
    }
}
