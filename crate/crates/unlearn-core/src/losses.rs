//! Unlearning objectives and regularizers over token log-probability
//! sequences of a current and a frozen reference model.
//!
//! Every loss here is oriented so that *minimization unlearns*: the
//! combined objective is a plain sum of the method loss and a weighted
//! regularizer. Sequence log-probability is the sum over answer tokens
//! only; batch expectations are means with a pairwise-tree summation so
//! values are bit-stable regardless of how callers partition work.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Which target a scored sequence represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerRole {
    ForgetAnswer,
    IdkAnswer,
    RetainAnswer,
}

impl AnswerRole {
    fn as_str(&self) -> &'static str {
        match self {
            AnswerRole::ForgetAnswer => "forget_answer",
            AnswerRole::IdkAnswer => "idk_answer",
            AnswerRole::RetainAnswer => "retain_answer",
        }
    }
}

/// Errors from loss computation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("expected sequences with role {expected}, found {found}")]
    WrongRole {
        expected: &'static str,
        found: &'static str,
    },
    #[error("sequence is missing reference log-probabilities")]
    MissingReference,
    #[error("negative and positive batches have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("log-probabilities must be finite and non-positive")]
    InvalidLogProb,
    #[error("distribution does not sum to one (sum = {0})")]
    NotNormalized(f64),
    #[error("reference distribution assigns zero mass where the current one does not")]
    SupportViolation,
    #[error("beta must be positive for {0}")]
    InvalidBeta(String),
    #[error("batch does not match the loss specification: {0}")]
    BatchMismatch(String),
}

/// Per-token log-probabilities of one answer under the current model and,
/// optionally, the frozen reference model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSequence {
    logprob_current: Vec<f64>,
    logprob_ref: Option<Vec<f64>>,
    answer_role: AnswerRole,
}

impl ScoredSequence {
    pub fn new(
        logprob_current: Vec<f64>,
        logprob_ref: Option<Vec<f64>>,
        answer_role: AnswerRole,
    ) -> Result<Self, LossError> {
        if logprob_current.is_empty() {
            return Err(LossError::EmptyBatch);
        }
        let valid = |xs: &[f64]| xs.iter().all(|x| x.is_finite() && *x <= 0.0);
        if !valid(&logprob_current) {
            return Err(LossError::InvalidLogProb);
        }
        if let Some(reference) = &logprob_ref {
            if reference.len() != logprob_current.len() {
                return Err(LossError::LengthMismatch(
                    logprob_current.len(),
                    reference.len(),
                ));
            }
            if !valid(reference) {
                return Err(LossError::InvalidLogProb);
            }
        }
        Ok(Self {
            logprob_current,
            logprob_ref,
            answer_role,
        })
    }

    pub fn role(&self) -> AnswerRole {
        self.answer_role
    }

    pub fn tokens(&self) -> usize {
        self.logprob_current.len()
    }

    /// Sequence log-probability under the current model.
    pub fn total_current(&self) -> f64 {
        pairwise_sum(&self.logprob_current)
    }

    /// Sequence log-probability under the reference model, if present.
    pub fn total_ref(&self) -> Option<f64> {
        self.logprob_ref.as_deref().map(pairwise_sum)
    }

    /// `log p(y|x; theta) - log p(y|x; theta_ref)`.
    pub fn log_ratio(&self) -> Result<f64, LossError> {
        Ok(self.total_current() - self.total_ref().ok_or(LossError::MissingReference)?)
    }
}

/// Unlearning method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LossMethod {
    Ga,
    Npo,
    Dpo,
    Idk,
}

impl LossMethod {
    pub const ALL: [LossMethod; 4] = [
        LossMethod::Ga,
        LossMethod::Npo,
        LossMethod::Dpo,
        LossMethod::Idk,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LossMethod::Ga => "GA",
            LossMethod::Npo => "NPO",
            LossMethod::Dpo => "DPO",
            LossMethod::Idk => "IDK",
        }
    }

    pub fn needs_beta(&self) -> bool {
        matches!(self, LossMethod::Npo | LossMethod::Dpo)
    }
}

/// Retain-set regularizer selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Regularizer {
    None,
    Gd,
    Kl,
}

impl Regularizer {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regularizer::None => "none",
            Regularizer::Gd => "GD",
            Regularizer::Kl => "KL",
        }
    }
}

/// Which objective, which regularizer, and their hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub method: LossMethod,
    pub regularizer: Regularizer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub reg_weight: f64,
}

impl LossSpec {
    pub fn new(
        method: LossMethod,
        regularizer: Regularizer,
        beta: Option<f64>,
        reg_weight: f64,
    ) -> Result<Self, LossError> {
        let spec = Self {
            method,
            regularizer,
            beta,
            reg_weight,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if self.method.needs_beta() {
            match self.beta {
                Some(beta) if beta > 0.0 => {}
                _ => return Err(LossError::InvalidBeta(String::from(self.method.as_str()))),
            }
        }
        if self.reg_weight <= 0.0 {
            return Err(LossError::BatchMismatch(String::from(
                "reg_weight must be positive",
            )));
        }
        Ok(())
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(0.0)
    }
}

/// Deterministic tree reduction; the result does not depend on how a caller
/// would shard the batch.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `ln(sigmoid(x))`, stable for large negative arguments.
pub(crate) fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -libm::log1p(libm::exp(-x))
    } else {
        x - libm::log1p(libm::exp(x))
    }
}

fn check_roles(batch: &[ScoredSequence], expected: AnswerRole) -> Result<(), LossError> {
    if batch.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    for seq in batch {
        if seq.role() != expected {
            return Err(LossError::WrongRole {
                expected: expected.as_str(),
                found: seq.role().as_str(),
            });
        }
    }
    Ok(())
}

fn batch_mean(values: Vec<f64>) -> f64 {
    pairwise_sum(&values) / values.len() as f64
}

/// Gradient-ascent objective: the batch mean of sequence log-probabilities.
/// Minimizing it drives the negative log-likelihood up on forget answers.
pub fn ga_loss(batch: &[ScoredSequence]) -> Result<f64, LossError> {
    check_roles(batch, AnswerRole::ForgetAnswer)?;
    Ok(batch_mean(
        batch.iter().map(ScoredSequence::total_current).collect(),
    ))
}

/// Negative preference optimization:
/// `-(2/beta) * E[log sigmoid(-beta * r)]` with
/// `r = log p(y|x; theta) - log p(y|x; theta_ref)`.
pub fn npo_loss(batch: &[ScoredSequence], beta: f64) -> Result<f64, LossError> {
    if beta <= 0.0 {
        return Err(LossError::InvalidBeta(String::from("NPO")));
    }
    check_roles(batch, AnswerRole::ForgetAnswer)?;
    let terms: Vec<f64> = batch
        .iter()
        .map(|seq| seq.log_ratio().map(|r| log_sigmoid(-beta * r)))
        .collect::<Result<_, _>>()?;
    Ok(-(2.0 / beta) * batch_mean(terms))
}

/// Preference optimization with forget answers as negatives and rejection
/// templates as positives: `-E[log sigmoid(beta * (d_pos - d_neg))]` where
/// `d = log p(y|x; theta) - log p(y|x; theta_ref)` per sequence.
pub fn dpo_loss(
    negative: &[ScoredSequence],
    positive: &[ScoredSequence],
    beta: f64,
) -> Result<f64, LossError> {
    if beta <= 0.0 {
        return Err(LossError::InvalidBeta(String::from("DPO")));
    }
    check_roles(negative, AnswerRole::ForgetAnswer)?;
    check_roles(positive, AnswerRole::IdkAnswer)?;
    if negative.len() != positive.len() {
        return Err(LossError::LengthMismatch(negative.len(), positive.len()));
    }
    let terms: Vec<f64> = negative
        .iter()
        .zip(positive)
        .map(|(neg, pos)| {
            let delta = pos.log_ratio()? - neg.log_ratio()?;
            Ok(log_sigmoid(beta * delta))
        })
        .collect::<Result<_, LossError>>()?;
    Ok(-batch_mean(terms))
}

/// Standard negative log-likelihood toward rejection-template answers.
pub fn idk_loss(batch: &[ScoredSequence]) -> Result<f64, LossError> {
    check_roles(batch, AnswerRole::IdkAnswer)?;
    Ok(-batch_mean(
        batch.iter().map(ScoredSequence::total_current).collect(),
    ))
}

/// Retain-set prediction loss: negative log-likelihood on retain answers.
pub fn gd_reg(batch: &[ScoredSequence]) -> Result<f64, LossError> {
    check_roles(batch, AnswerRole::RetainAnswer)?;
    Ok(-batch_mean(
        batch.iter().map(ScoredSequence::total_current).collect(),
    ))
}

const NORMALIZATION_TOL: f64 = 1e-9;

/// Mean per-position KL divergence `KL(p_current || p_ref)` over retain
/// predictions. Both inputs are probability vectors per position.
pub fn kl_reg(current: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<f64, LossError> {
    if current.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    if current.len() != reference.len() {
        return Err(LossError::LengthMismatch(current.len(), reference.len()));
    }
    let mut terms = Vec::with_capacity(current.len());
    for (p, q) in current.iter().zip(reference) {
        if p.len() != q.len() {
            return Err(LossError::LengthMismatch(p.len(), q.len()));
        }
        for dist in [p, q] {
            let sum = pairwise_sum(dist);
            if (sum - 1.0).abs() > NORMALIZATION_TOL || dist.iter().any(|&x| x < 0.0) {
                return Err(LossError::NotNormalized(sum));
            }
        }
        let mut kl = 0.0;
        for (&pi, &qi) in p.iter().zip(q) {
            if pi == 0.0 {
                continue;
            }
            if qi == 0.0 {
                return Err(LossError::SupportViolation);
            }
            kl += pi * libm::log(pi / qi);
        }
        terms.push(kl);
    }
    Ok(batch_mean(terms))
}

/// Method-side inputs for the combined objective.
#[derive(Debug, Clone)]
pub enum MethodBatch<'a> {
    Ga(&'a [ScoredSequence]),
    Npo(&'a [ScoredSequence]),
    Dpo {
        negative: &'a [ScoredSequence],
        positive: &'a [ScoredSequence],
    },
    Idk(&'a [ScoredSequence]),
}

impl MethodBatch<'_> {
    fn method(&self) -> LossMethod {
        match self {
            MethodBatch::Ga(_) => LossMethod::Ga,
            MethodBatch::Npo(_) => LossMethod::Npo,
            MethodBatch::Dpo { .. } => LossMethod::Dpo,
            MethodBatch::Idk(_) => LossMethod::Idk,
        }
    }
}

/// Regularizer-side inputs for the combined objective.
#[derive(Debug, Clone)]
pub enum RegBatch<'a> {
    None,
    Gd(&'a [ScoredSequence]),
    Kl {
        current: &'a [Vec<f64>],
        reference: &'a [Vec<f64>],
    },
}

impl RegBatch<'_> {
    fn regularizer(&self) -> Regularizer {
        match self {
            RegBatch::None => Regularizer::None,
            RegBatch::Gd(_) => Regularizer::Gd,
            RegBatch::Kl { .. } => Regularizer::Kl,
        }
    }
}

/// `method_loss + reg_weight * regularizer_loss`, both oriented so that
/// minimization unlearns while preserving retain behavior.
pub fn combined_objective(
    spec: &LossSpec,
    forget: &MethodBatch,
    retain: &RegBatch,
) -> Result<f64, LossError> {
    spec.validate()?;
    if forget.method() != spec.method {
        return Err(LossError::BatchMismatch(String::from(
            "method batch does not match spec.method",
        )));
    }
    if retain.regularizer() != spec.regularizer {
        return Err(LossError::BatchMismatch(String::from(
            "regularizer batch does not match spec.regularizer",
        )));
    }

    let method_loss = match forget {
        MethodBatch::Ga(batch) => ga_loss(batch)?,
        MethodBatch::Npo(batch) => npo_loss(batch, spec.beta())?,
        MethodBatch::Dpo { negative, positive } => dpo_loss(negative, positive, spec.beta())?,
        MethodBatch::Idk(batch) => idk_loss(batch)?,
    };
    let reg_loss = match retain {
        RegBatch::None => 0.0,
        RegBatch::Gd(batch) => gd_reg(batch)?,
        RegBatch::Kl { current, reference } => kl_reg(current, reference)?,
    };
    Ok(method_loss + spec.reg_weight * reg_loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN_2: f64 = core::f64::consts::LN_2;

    fn seq(current: &[f64], reference: Option<&[f64]>, role: AnswerRole) -> ScoredSequence {
        ScoredSequence::new(current.to_vec(), reference.map(<[f64]>::to_vec), role).unwrap()
    }

    fn forget(current: &[f64], reference: &[f64]) -> ScoredSequence {
        seq(current, Some(reference), AnswerRole::ForgetAnswer)
    }

    #[test]
    fn ga_is_mean_sequence_logprob() {
        let batch = [seq(&[-1.0], None, AnswerRole::ForgetAnswer)];
        assert_eq!(ga_loss(&batch).unwrap(), -1.0);

        let batch = [
            seq(&[-0.5, -0.5], None, AnswerRole::ForgetAnswer),
            seq(&[-3.0], None, AnswerRole::ForgetAnswer),
        ];
        assert_eq!(ga_loss(&batch).unwrap(), -2.0);
    }

    #[test]
    fn ga_matches_summation_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let batch: Vec<ScoredSequence> = (0..16)
            .map(|_| {
                let toks: Vec<f64> =
                    (0..rng.gen_range(1..6)).map(|_| -rng.gen_range(0.01..3.0)).collect();
                seq(&toks, None, AnswerRole::ForgetAnswer)
            })
            .collect();
        let mut oracle = 0.0;
        for s in &batch {
            let mut total = 0.0;
            for t in 0..s.tokens() {
                total += s.logprob_current[t];
            }
            oracle += total;
        }
        oracle /= batch.len() as f64;
        assert!((ga_loss(&batch).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn ga_rejects_wrong_role() {
        let batch = [seq(&[-1.0], None, AnswerRole::RetainAnswer)];
        assert!(matches!(ga_loss(&batch), Err(LossError::WrongRole { .. })));
        assert!(matches!(ga_loss(&[]), Err(LossError::EmptyBatch)));
    }

    #[test]
    fn npo_closed_form_at_zero_ratio() {
        // theta == theta_ref: r = 0, loss = (2/beta) ln 2 for any beta
        for beta in [1e-4, 0.1, 1.0, 2.0] {
            let batch = [forget(&[-1.0, -0.5], &[-1.0, -0.5])];
            let loss = npo_loss(&batch, beta).unwrap();
            assert!(
                (loss - 2.0 / beta * LN_2).abs() < 1e-12,
                "beta={beta}: {loss}"
            );
        }
    }

    #[test]
    fn npo_hand_evaluated_point() {
        // beta = 2, r = ln 2: sigmoid(-2 ln 2) = 1/5, loss = ln 5
        let batch = [forget(&[-1.0], &[-1.0 - LN_2])];
        let loss = npo_loss(&batch, 2.0).unwrap();
        assert!((loss - libm::log(5.0)).abs() < 1e-12);
    }

    #[test]
    fn npo_requires_reference() {
        let batch = [seq(&[-1.0], None, AnswerRole::ForgetAnswer)];
        assert_eq!(npo_loss(&batch, 0.1).unwrap_err(), LossError::MissingReference);
    }

    /// Central finite difference of a loss with respect to one
    /// `logprob_current` entry.
    fn fd_grad<F: Fn(&[ScoredSequence]) -> f64>(
        loss: F,
        batch: &[ScoredSequence],
        seq_idx: usize,
        tok_idx: usize,
        h: f64,
    ) -> f64 {
        let mut plus = batch.to_vec();
        plus[seq_idx].logprob_current[tok_idx] += h;
        let mut minus = batch.to_vec();
        minus[seq_idx].logprob_current[tok_idx] -= h;
        (loss(&plus) - loss(&minus)) / (2.0 * h)
    }

    #[test]
    fn npo_gradient_approaches_ga_gradient_for_small_beta() {
        use rand::{Rng, SeedableRng};
        let beta = 1e-4;
        let mut rng = rand::rngs::StdRng::seed_from_u64(17);
        for _ in 0..100 {
            let batch: Vec<ScoredSequence> = (0..rng.gen_range(1..5))
                .map(|_| {
                    let n = rng.gen_range(1..5);
                    let cur: Vec<f64> = (0..n).map(|_| -rng.gen_range(0.05..2.5)).collect();
                    let reference: Vec<f64> =
                        (0..n).map(|_| -rng.gen_range(0.05..2.5)).collect();
                    forget(&cur, &reference)
                })
                .collect();
            for (i, s) in batch.iter().enumerate() {
                for t in 0..s.tokens() {
                    let g_npo = fd_grad(|b| npo_loss(b, beta).unwrap(), &batch, i, t, 1e-6);
                    let g_ga = fd_grad(|b| ga_loss(b).unwrap(), &batch, i, t, 1e-6);
                    let rel = (g_npo - g_ga).abs() / g_ga.abs();
                    assert!(rel < 1e-3, "relative deviation {rel}");
                    // analytic derivative: 2 sigmoid(beta r) / B vs 1 / B
                    let analytic = 2.0 * sigmoid(beta * s.log_ratio().unwrap())
                        / batch.len() as f64;
                    assert!((g_npo - analytic).abs() < 1e-4);
                }
            }
        }
    }

    fn idk(current: &[f64], reference: &[f64]) -> ScoredSequence {
        seq(current, Some(reference), AnswerRole::IdkAnswer)
    }

    #[test]
    fn dpo_closed_form_at_equal_deltas() {
        let negative = [forget(&[-1.0], &[-1.0])];
        let positive = [idk(&[-2.0], &[-2.0])];
        let loss = dpo_loss(&negative, &positive, 0.5).unwrap();
        assert!((loss - LN_2).abs() < 1e-12);
    }

    #[test]
    fn dpo_saturates_when_positive_dominates() {
        // d_pos - d_neg = 4, large beta drives the loss to zero
        let negative = [forget(&[-5.0], &[-1.0])];
        let positive = [idk(&[-1.0], &[-1.0])];
        let loss = dpo_loss(&negative, &positive, 50.0).unwrap();
        assert!(loss < 1e-12, "{loss}");
    }

    #[test]
    fn dpo_hand_computed_batch() {
        // pair 1: d_pos = 1, d_neg = -1 -> -log sigmoid(2b)
        // pair 2: d_pos = 0, d_neg = 0  -> ln 2
        let beta = 0.25;
        let negative = [forget(&[-2.0], &[-1.0]), forget(&[-1.5], &[-1.5])];
        let positive = [idk(&[-1.0], &[-2.0]), idk(&[-0.5], &[-0.5])];
        let expected = (-log_sigmoid(2.0 * beta) + LN_2) / 2.0;
        assert!((dpo_loss(&negative, &positive, beta).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn dpo_rejects_misaligned_batches() {
        let negative = [forget(&[-1.0], &[-1.0])];
        assert_eq!(
            dpo_loss(&negative, &[], 0.1).unwrap_err(),
            LossError::EmptyBatch
        );
        let positive = [idk(&[-1.0], &[-1.0]), idk(&[-1.0], &[-1.0])];
        assert_eq!(
            dpo_loss(&negative, &positive, 0.1).unwrap_err(),
            LossError::LengthMismatch(1, 2)
        );
    }

    #[test]
    fn idk_and_gd_are_plain_nll() {
        let batch = [seq(&[0.0], None, AnswerRole::IdkAnswer)];
        assert_eq!(idk_loss(&batch).unwrap(), 0.0);
        let batch = [seq(&[-2.0], None, AnswerRole::IdkAnswer)];
        assert_eq!(idk_loss(&batch).unwrap(), 2.0);

        let batch = [seq(&[0.0], None, AnswerRole::RetainAnswer)];
        assert_eq!(gd_reg(&batch).unwrap(), 0.0);
        let batch = [seq(&[-1.0], None, AnswerRole::RetainAnswer)];
        assert_eq!(gd_reg(&batch).unwrap(), 1.0);

        // batch mean oracle
        let batch = [
            seq(&[-1.0, -1.0], None, AnswerRole::RetainAnswer),
            seq(&[-4.0], None, AnswerRole::RetainAnswer),
        ];
        assert_eq!(gd_reg(&batch).unwrap(), 3.0);
    }

    #[test]
    fn kl_zero_iff_equal() {
        let p = vec![vec![0.3, 0.7], vec![0.5, 0.5]];
        assert_eq!(kl_reg(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_hand_evaluated_point() {
        let p = vec![vec![0.5, 0.5]];
        let q = vec![vec![0.25, 0.75]];
        let expected = 0.5 * libm::log(2.0) + 0.5 * libm::log(2.0 / 3.0);
        let got = kl_reg(&p, &q).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.1438).abs() < 1e-4);
    }

    #[test]
    fn kl_rejects_bad_distributions() {
        let p = vec![vec![0.5, 0.6]];
        let q = vec![vec![0.5, 0.5]];
        assert!(matches!(kl_reg(&p, &q), Err(LossError::NotNormalized(_))));
        let p = vec![vec![0.5, 0.5]];
        let q = vec![vec![1.0, 0.0]];
        assert_eq!(kl_reg(&p, &q).unwrap_err(), LossError::SupportViolation);
    }

    #[test]
    fn combined_objective_composes() {
        let forget_batch = [forget(&[-1.0], &[-1.0])];
        let retain_batch = [seq(&[-0.5], None, AnswerRole::RetainAnswer)];

        let spec = LossSpec::new(LossMethod::Ga, Regularizer::None, None, 1.0).unwrap();
        let plain = combined_objective(&spec, &MethodBatch::Ga(&forget_batch), &RegBatch::None)
            .unwrap();
        assert_eq!(plain, ga_loss(&forget_batch).unwrap());

        let spec = LossSpec::new(LossMethod::Ga, Regularizer::Gd, None, 1.0).unwrap();
        let with_gd = combined_objective(
            &spec,
            &MethodBatch::Ga(&forget_batch),
            &RegBatch::Gd(&retain_batch),
        )
        .unwrap();
        assert_eq!(
            with_gd,
            ga_loss(&forget_batch).unwrap() + gd_reg(&retain_batch).unwrap()
        );

        // NPO + KL at theta == theta_ref: (2/beta) ln 2 + 0
        let beta = 0.5;
        let spec = LossSpec::new(LossMethod::Npo, Regularizer::Kl, Some(beta), 1.0).unwrap();
        let dists = vec![vec![0.25, 0.75]];
        let value = combined_objective(
            &spec,
            &MethodBatch::Npo(&forget_batch),
            &RegBatch::Kl {
                current: &dists,
                reference: &dists,
            },
        )
        .unwrap();
        assert!((value - 2.0 / beta * LN_2).abs() < 1e-12);
    }

    #[test]
    fn combined_objective_rejects_mismatched_batches() {
        let forget_batch = [forget(&[-1.0], &[-1.0])];
        let spec = LossSpec::new(LossMethod::Npo, Regularizer::None, Some(0.1), 1.0).unwrap();
        assert!(matches!(
            combined_objective(&spec, &MethodBatch::Ga(&forget_batch), &RegBatch::None),
            Err(LossError::BatchMismatch(_))
        ));
    }

    #[test]
    fn spec_requires_beta_exactly_for_preference_methods() {
        assert!(LossSpec::new(LossMethod::Npo, Regularizer::None, None, 1.0).is_err());
        assert!(LossSpec::new(LossMethod::Dpo, Regularizer::None, Some(-1.0), 1.0).is_err());
        assert!(LossSpec::new(LossMethod::Ga, Regularizer::None, None, 1.0).is_ok());
    }

    fn random_forget_batch(seed: u64, n: usize) -> Vec<ScoredSequence> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let toks = rng.gen_range(1..5);
                let cur: Vec<f64> = (0..toks).map(|_| -rng.gen_range(0.05..3.0)).collect();
                let reference: Vec<f64> = (0..toks).map(|_| -rng.gen_range(0.05..3.0)).collect();
                forget(&cur, &reference)
            })
            .collect()
    }

    #[test]
    fn dpo_swap_inequality() {
        // L(pos, neg) + L(neg, pos) >= 2 ln 2, equality iff the deltas match
        let beta = 0.7;
        let a = forget(&[-2.0], &[-1.0]);
        let b_pos = idk(&[-1.0], &[-1.5]);
        let a_as_pos = idk(&[-2.0], &[-1.0]);
        let b_as_neg = forget(&[-1.0], &[-1.5]);

        let fwd = dpo_loss(&[a.clone()], &[b_pos.clone()], beta).unwrap();
        let rev = dpo_loss(&[b_as_neg], &[a_as_pos], beta).unwrap();
        assert!(fwd + rev >= 2.0 * LN_2 - 1e-12);

        let eq_neg = [forget(&[-1.0], &[-1.0])];
        let eq_pos = [idk(&[-3.0], &[-3.0])];
        let fwd = dpo_loss(&eq_neg, &eq_pos, beta).unwrap();
        assert!((2.0 * fwd - 2.0 * LN_2).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn losses_are_permutation_invariant(seed in 0u64..500, rot in 1usize..7) {
            let batch = random_forget_batch(seed, 8);
            let mut rotated = batch.clone();
            let len = rotated.len();
            rotated.rotate_left(rot % len);
            let a = npo_loss(&batch, 0.3).unwrap();
            let b = npo_loss(&rotated, 0.3).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            let a = ga_loss(&batch).unwrap();
            let b = ga_loss(&rotated).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn duplicating_a_batch_preserves_the_mean(seed in 0u64..500) {
            let batch = random_forget_batch(seed, 5);
            let doubled: Vec<ScoredSequence> =
                batch.iter().chain(batch.iter()).cloned().collect();
            prop_assert_eq!(ga_loss(&batch).unwrap(), ga_loss(&doubled).unwrap());
            prop_assert!(
                (npo_loss(&batch, 0.2).unwrap() - npo_loss(&doubled, 0.2).unwrap()).abs()
                    < 1e-12
            );
        }

        #[test]
        fn kl_is_nonnegative(
            raw_p in prop::collection::vec(0.01f64..1.0, 4),
            raw_q in prop::collection::vec(0.01f64..1.0, 4),
        ) {
            let norm = |raw: &[f64]| {
                let s: f64 = raw.iter().sum();
                raw.iter().map(|x| x / s).collect::<Vec<f64>>()
            };
            let p = vec![norm(&raw_p)];
            let q = vec![norm(&raw_q)];
            let kl = kl_reg(&p, &q).unwrap();
            prop_assert!(kl >= -1e-12);
            let self_kl = kl_reg(&p, &p).unwrap();
            prop_assert!(self_kl.abs() < 1e-12);
        }
    }
}
