//! Train/test retain-set sweep: which neighbor set preserves utility best
//! when used for regularization during unlearning.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::losses::{LossMethod, Regularizer};
use crate::neighborset::SetKind;

use super::corpus::ToyCorpus;
use super::model::ToyModel;
use super::train::{self, UnlearnParams};
use super::ToyLabError;

/// The three neighbor sets crossed as train and test retain sets.
pub const SWEEP_SET_KINDS: [SetKind; 3] = [
    SetKind::DomainNeighbor,
    SetKind::EntityNeighbor,
    SetKind::SynSimilarNeighbor,
];

/// Relative utility drop on one test set after unlearning regularized with
/// one train set. `method` is `None` for cells averaged over methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub regularizer: Regularizer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<LossMethod>,
    pub train_set: SetKind,
    pub test_set: SetKind,
    pub rud: f64,
}

/// All sweep results: per-method cells plus method-averaged grids.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepTable {
    pub averaged: Vec<SweepCell>,
    pub per_method: Vec<SweepCell>,
}

impl SweepTable {
    /// Method-averaged cell value for one regularizer.
    pub fn cell(&self, regularizer: Regularizer, test: SetKind, train: SetKind) -> Option<f64> {
        self.averaged
            .iter()
            .find(|c| c.regularizer == regularizer && c.test_set == test && c.train_set == train)
            .map(|c| c.rud)
    }

    /// 3x3 grid for one regularizer: rows are test sets, columns train
    /// sets, both in [`SWEEP_SET_KINDS`] order.
    pub fn grid(&self, regularizer: Regularizer) -> [[f64; 3]; 3] {
        let mut out = [[f64::NAN; 3]; 3];
        for (r, test) in SWEEP_SET_KINDS.iter().enumerate() {
            for (c, train) in SWEEP_SET_KINDS.iter().enumerate() {
                if let Some(v) = self.cell(regularizer, *test, *train) {
                    out[r][c] = v;
                }
            }
        }
        out
    }
}

/// Runs every (regularizer, train set, method) combination from the fitted
/// model and reports the relative utility drop on each test set, plus the
/// per-(regularizer, train, test) average over methods.
pub fn regularization_sweep<F>(
    model: &ToyModel,
    corpus: &ToyCorpus,
    methods: &[LossMethod],
    regularizers: &[Regularizer],
    params_for: F,
) -> Result<SweepTable, ToyLabError>
where
    F: Fn(LossMethod) -> UnlearnParams,
{
    if methods.is_empty() || regularizers.is_empty() {
        return Err(ToyLabError::Corpus(
            alloc::string::String::from("sweep needs at least one method and one regularizer"),
        ));
    }
    let mut table = SweepTable::default();
    let by_kind = corpus.by_kind();

    for &regularizer in regularizers {
        for &train_set in &SWEEP_SET_KINDS {
            let retain = &by_kind[&train_set];
            let mut sums = [0.0f64; 3];
            for &method in methods {
                let spec = train::default_spec(method, regularizer);
                let run = train::unlearn(
                    model.clone(),
                    &spec,
                    corpus,
                    retain,
                    &params_for(method),
                )?;
                let rud = train::rud_by_kind(model, &run.model, corpus);
                for (i, &test_set) in SWEEP_SET_KINDS.iter().enumerate() {
                    let value = rud[&test_set];
                    sums[i] += value;
                    table.per_method.push(SweepCell {
                        regularizer,
                        method: Some(method),
                        train_set,
                        test_set,
                        rud: value,
                    });
                }
            }
            for (i, &test_set) in SWEEP_SET_KINDS.iter().enumerate() {
                table.averaged.push(SweepCell {
                    regularizer,
                    method: None,
                    train_set,
                    test_set,
                    rud: sums[i] / methods.len() as f64,
                });
            }
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toylab::corpus::{build_toy_corpus, CorpusSizes};
    use crate::toylab::train::{fit_initial, init_model, FitParams};

    #[test]
    fn zero_step_sweep_is_all_zeros() {
        let corpus = build_toy_corpus(0, &CorpusSizes::default()).unwrap();
        let fit = fit_initial(init_model(&corpus), &corpus.facts, &FitParams::default()).unwrap();
        let table = regularization_sweep(
            &fit.model,
            &corpus,
            &[LossMethod::Ga, LossMethod::Idk],
            &[Regularizer::Gd],
            |method| UnlearnParams {
                max_steps: 0,
                ..UnlearnParams::for_method(method)
            },
        )
        .unwrap();
        assert_eq!(table.averaged.len(), 9);
        assert!(table.averaged.iter().all(|c| c.rud == 0.0));
        let grid = table.grid(Regularizer::Gd);
        assert!(grid.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn grid_has_nine_cells_per_regularizer() {
        let corpus = build_toy_corpus(0, &CorpusSizes::default()).unwrap();
        let fit = fit_initial(init_model(&corpus), &corpus.facts, &FitParams::default()).unwrap();
        let table = regularization_sweep(
            &fit.model,
            &corpus,
            &[LossMethod::Ga],
            &[Regularizer::Gd, Regularizer::Kl],
            UnlearnParams::for_method,
        )
        .unwrap();
        assert_eq!(table.averaged.len(), 18);
        for reg in [Regularizer::Gd, Regularizer::Kl] {
            let cells: Vec<_> = table
                .averaged
                .iter()
                .filter(|c| c.regularizer == reg)
                .collect();
            assert_eq!(cells.len(), 9);
            assert!(table.grid(reg).iter().flatten().all(|v| v.is_finite()));
        }
    }
}
