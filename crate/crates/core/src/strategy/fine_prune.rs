//! Activation-driven pruning as a registry strategy: record the ledger over
//! the unlabeled target inputs, sweep sparsity, keep the best mask.

use super::{AdaptOutcome, BaselineConfig, Strategy};
use crate::data::LabeledDataset;
use crate::error::Result;
use crate::ledger::ActivationLedger;
use crate::metrics::{activation_widths, estimate_memory, forward_macs, MemoryMethod};
use crate::net::Network;
use crate::prune::{coarse_grid, refinement_grid, sweep};

pub struct FinePruneStrategy;

impl FinePruneStrategy {
    /// The ledger sweep has no hyperparameters beyond the shared grids, so
    /// the config only selects the method.
    pub fn new(_cfg: BaselineConfig) -> Self {
        FinePruneStrategy
    }
}

impl Strategy for FinePruneStrategy {
    fn name(&self) -> &'static str {
        "fine-prune"
    }

    fn adapt(
        &self,
        source: &Network,
        target_train: &LabeledDataset,
        eval: &LabeledDataset,
    ) -> Result<AdaptOutcome> {
        let mut ledger = ActivationLedger::for_network(source);
        ledger.record_all(source, target_train.inputs())?;

        let coarse = sweep(source, &ledger, eval, &coarse_grid())?;
        let fine_points = refinement_grid(coarse.selected().target_sparsity);
        let fine = sweep(source, &ledger, eval, &fine_points)?;

        let mut network = source.clone();
        network.apply_mask(&fine.selected_mask)?;

        let per_forward = forward_macs(source);
        let record_macs = per_forward * target_train.len() as u64;
        let sweep_evals = (coarse_grid().len() + fine_points.len()) as u64 * eval.len() as u64;
        // Recording plus the selection evaluations; mask application itself
        // multiplies nothing.
        let adapt_macs = record_macs + per_forward * sweep_evals;

        Ok(AdaptOutcome {
            sparsity: fine.selected_mask.sparsity(),
            memory_units: estimate_memory(
                MemoryMethod::FinePruning,
                target_train.len() as u64,
                &activation_widths(source),
            ),
            sweep: Some(fine),
            network,
            adapt_macs,
        })
    }
}
