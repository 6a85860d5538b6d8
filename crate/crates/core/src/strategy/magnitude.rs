//! Data-free magnitude pruning control: ranks units by the L1 norm of their
//! outgoing weights, never looking at target data. Included to isolate what
//! the target-driven scores add; report rows tag it `baseline-control`.

use super::{AdaptOutcome, BaselineConfig, Strategy};
use crate::data::LabeledDataset;
use crate::error::Result;
use crate::ledger::UnitScore;
use crate::metrics::{activation_widths, estimate_memory, MemoryMethod};
use crate::net::Network;
use crate::prune::{prune_by_scores, PruneMask};

/// Unit scores from weight magnitudes alone.
pub fn magnitude_scores(net: &Network) -> Vec<UnitScore> {
    let mut out = Vec::new();
    for pl in net.prunable_layers() {
        let w = net
            .weight(pl.layer_index)
            .expect("prunable layers have weights");
        for u in 0..pl.unit_count {
            let l1: f64 = w.data()[u * pl.weights_per_unit..(u + 1) * pl.weights_per_unit]
                .iter()
                .map(|&v| f64::from(v.abs()))
                .sum();
            out.push(UnitScore {
                layer_index: pl.layer_index,
                unit_index: u,
                score: l1,
                weight_count: pl.weights_per_unit,
            });
        }
    }
    out
}

/// Drop the units with the smallest outgoing-weight L1 norms until the weight
/// budget for `target_sparsity` is spent. Shares the threshold and mask
/// machinery with the activation-driven path.
pub fn magnitude_prune(net: &Network, target_sparsity: f64) -> Result<(Network, PruneMask)> {
    prune_by_scores(net, &magnitude_scores(net), target_sparsity)
}

pub struct MagnitudeStrategy {
    cfg: BaselineConfig,
}

impl MagnitudeStrategy {
    pub fn new(cfg: BaselineConfig) -> Self {
        MagnitudeStrategy { cfg }
    }
}

impl Strategy for MagnitudeStrategy {
    fn name(&self) -> &'static str {
        "magnitude"
    }

    fn adapt(
        &self,
        source: &Network,
        target_train: &LabeledDataset,
        _eval: &LabeledDataset,
    ) -> Result<AdaptOutcome> {
        let (network, mask) = magnitude_prune(source, self.cfg.sparsity)?;
        Ok(AdaptOutcome {
            sparsity: mask.sparsity(),
            // Ranking sorts and compares; no multiply-accumulates.
            adapt_macs: 0,
            memory_units: estimate_memory(
                MemoryMethod::FinePruning,
                target_train.len() as u64,
                &activation_widths(source),
            ),
            sweep: None,
            network,
        })
    }
}
