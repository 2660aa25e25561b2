//! Additive-logit softmax model over (template, entity) pairs.
//!
//! The answer distribution for a fact is `softmax(u[t] + v[e] + b)`. A
//! template row is shared by every question rendered from that template,
//! which is what lets unlearning damage spill over to syntactically similar
//! questions through a shared parameter block.

use alloc::vec::Vec;

use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

/// Model parameters: template logits, entity logits, and a shared bias.
/// The last vocabulary index is the rejection ("I don't know") token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub num_templates: usize,
    pub num_entities: usize,
    pub vocab: usize,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl ToyModel {
    pub fn zeros(num_templates: usize, num_entities: usize, vocab: usize) -> Self {
        Self {
            num_templates,
            num_entities,
            vocab,
            u: alloc::vec![alloc::vec![0.0; vocab]; num_templates],
            v: alloc::vec![alloc::vec![0.0; vocab]; num_entities],
            b: alloc::vec![0.0; vocab],
        }
    }

    /// Zero model plus small uniform noise, so facts sit at slightly
    /// different margins after fitting instead of moving in lockstep.
    pub fn with_noise(
        num_templates: usize,
        num_entities: usize,
        vocab: usize,
        seed: u64,
        scale: f64,
    ) -> Self {
        let mut model = Self::zeros(num_templates, num_entities, vocab);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let next = |rng: &mut rand_chacha::ChaCha8Rng| {
            let unit = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            (2.0 * unit - 1.0) * scale
        };
        for row in model.u.iter_mut().chain(model.v.iter_mut()) {
            for x in row.iter_mut() {
                *x = next(&mut rng);
            }
        }
        for x in model.b.iter_mut() {
            *x = next(&mut rng);
        }
        model
    }

    pub fn idk_token(&self) -> usize {
        self.vocab - 1
    }

    pub fn logits(&self, template: usize, entity: usize) -> Vec<f64> {
        let mut out = self.b.clone();
        for (o, (ut, ve)) in out
            .iter_mut()
            .zip(self.u[template].iter().zip(&self.v[entity]))
        {
            *o += ut + ve;
        }
        out
    }

    pub fn probs(&self, template: usize, entity: usize) -> Vec<f64> {
        softmax(&self.logits(template, entity))
    }

    pub fn log_probs(&self, template: usize, entity: usize) -> Vec<f64> {
        let logits = self.logits(template, entity);
        let lse = log_sum_exp(&logits);
        logits.iter().map(|l| l - lse).collect()
    }

    pub fn param_count(&self) -> usize {
        (self.num_templates + self.num_entities + 1) * self.vocab
    }

    /// Flat parameter access in `u`-rows, `v`-rows, `b` order; used by
    /// finite-difference checks.
    pub fn param(&self, index: usize) -> f64 {
        let (block, offset) = self.locate(index);
        match block {
            ParamBlock::U(row) => self.u[row][offset],
            ParamBlock::V(row) => self.v[row][offset],
            ParamBlock::B => self.b[offset],
        }
    }

    pub fn param_mut(&mut self, index: usize) -> &mut f64 {
        let (block, offset) = self.locate(index);
        match block {
            ParamBlock::U(row) => &mut self.u[row][offset],
            ParamBlock::V(row) => &mut self.v[row][offset],
            ParamBlock::B => &mut self.b[offset],
        }
    }

    fn locate(&self, index: usize) -> (ParamBlock, usize) {
        let u_len = self.num_templates * self.vocab;
        let v_len = self.num_entities * self.vocab;
        if index < u_len {
            (ParamBlock::U(index / self.vocab), index % self.vocab)
        } else if index < u_len + v_len {
            let rel = index - u_len;
            (ParamBlock::V(rel / self.vocab), rel % self.vocab)
        } else {
            (ParamBlock::B, index - u_len - v_len)
        }
    }

    /// `theta <- theta + scale * grad`, over all parameter blocks.
    pub fn apply_scaled(&mut self, grad: &GradBuffer, scale: f64) {
        for (row, grow) in self.u.iter_mut().zip(&grad.u) {
            for (x, g) in row.iter_mut().zip(grow) {
                *x += scale * g;
            }
        }
        for (row, grow) in self.v.iter_mut().zip(&grad.v) {
            for (x, g) in row.iter_mut().zip(grow) {
                *x += scale * g;
            }
        }
        for (x, g) in self.b.iter_mut().zip(&grad.b) {
            *x += scale * g;
        }
    }
}

enum ParamBlock {
    U(usize),
    V(usize),
    B,
}

/// Gradient accumulator mirroring the model's parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl GradBuffer {
    pub fn zeros_like(model: &ToyModel) -> Self {
        Self {
            u: alloc::vec![alloc::vec![0.0; model.vocab]; model.num_templates],
            v: alloc::vec![alloc::vec![0.0; model.vocab]; model.num_entities],
            b: alloc::vec![0.0; model.vocab],
        }
    }

    /// Adds a per-logit gradient for one (template, entity) prediction into
    /// all three blocks, since `logits = u[t] + v[e] + b`.
    pub fn accumulate(&mut self, template: usize, entity: usize, dlogits: &[f64]) {
        for ((ut, ve), (bk, d)) in self.u[template]
            .iter_mut()
            .zip(self.v[entity].iter_mut())
            .zip(self.b.iter_mut().zip(dlogits))
        {
            *ut += d;
            *ve += d;
            *bk += d;
        }
    }

    pub fn add_scaled(&mut self, other: &GradBuffer, scale: f64) {
        for (row, orow) in self.u.iter_mut().zip(&other.u) {
            for (x, o) in row.iter_mut().zip(orow) {
                *x += scale * o;
            }
        }
        for (row, orow) in self.v.iter_mut().zip(&other.v) {
            for (x, o) in row.iter_mut().zip(orow) {
                *x += scale * o;
            }
        }
        for (x, o) in self.b.iter_mut().zip(&other.b) {
            *x += scale * o;
        }
    }

    /// Flat access in the same order as [`ToyModel::param`].
    pub fn param(&self, index: usize, vocab: usize) -> f64 {
        let u_len = self.u.len() * vocab;
        let v_len = self.v.len() * vocab;
        if index < u_len {
            self.u[index / vocab][index % vocab]
        } else if index < u_len + v_len {
            let rel = index - u_len;
            self.v[rel / vocab][rel % vocab]
        } else {
            self.b[index - u_len - v_len]
        }
    }

    /// Square root of the summed squared entries across every block.
    pub fn frobenius_norm(&self) -> f64 {
        let mut total = 0.0;
        for row in self.u.iter().chain(self.v.iter()) {
            for x in row {
                total += x * x;
            }
        }
        for x in &self.b {
            total += x * x;
        }
        libm::sqrt(total)
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| libm::exp(l - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

pub(crate) fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + libm::log(logits.iter().map(|l| libm::exp(l - max)).sum::<f64>())
}
