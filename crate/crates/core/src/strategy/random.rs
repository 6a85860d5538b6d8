//! Random pruning control: drops units uniformly at random from a seed.
//! The floor any informed ranking has to beat.

use super::{AdaptOutcome, BaselineConfig, Strategy};
use crate::data::LabeledDataset;
use crate::error::Result;
use crate::ledger::UnitScore;
use crate::metrics::{activation_widths, estimate_memory, MemoryMethod};
use crate::net::Network;
use crate::prune::{prune_by_scores, PruneMask};
use crate::rng::Rng;

/// Drop units uniformly at random until the weight budget for
/// `target_sparsity` is spent. The same seed always produces the same mask.
pub fn random_prune(
    net: &Network,
    target_sparsity: f64,
    seed: u64,
) -> Result<(Network, PruneMask)> {
    let mut rng = Rng::new(seed);
    let mut scores = Vec::new();
    for pl in net.prunable_layers() {
        for u in 0..pl.unit_count {
            scores.push(UnitScore {
                layer_index: pl.layer_index,
                unit_index: u,
                score: rng.next_f64(),
                weight_count: pl.weights_per_unit,
            });
        }
    }
    prune_by_scores(net, &scores, target_sparsity)
}

pub struct RandomStrategy {
    cfg: BaselineConfig,
}

impl RandomStrategy {
    pub fn new(cfg: BaselineConfig) -> Self {
        RandomStrategy { cfg }
    }
}

impl Strategy for RandomStrategy {
    fn name(&self) -> &'static str {
        "random"
    }

    fn adapt(
        &self,
        source: &Network,
        target_train: &LabeledDataset,
        _eval: &LabeledDataset,
    ) -> Result<AdaptOutcome> {
        let (network, mask) = random_prune(source, self.cfg.sparsity, self.cfg.seed)?;
        Ok(AdaptOutcome {
            sparsity: mask.sparsity(),
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
