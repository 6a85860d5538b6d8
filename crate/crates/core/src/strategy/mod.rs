//! Interchangeable adaptation strategies behind one trait, registered by name.
//!
//! Every method that turns a source network plus target data into an adapted
//! network lives here: activation-driven pruning, gradient fine-tuning, SVD
//! factorization, and the data-free magnitude/random pruning controls. The
//! harness and CLI select them by registry name, so comparisons run through
//! one code path.

mod fine_prune;
mod finetune;
mod magnitude;
mod random;
mod svd;

pub use fine_prune::FinePruneStrategy;
pub use finetune::{finetune_backprop, FinetuneStrategy, TrainConfig};
pub use magnitude::{magnitude_prune, MagnitudeStrategy};
pub use random::{random_prune, RandomStrategy};
pub use svd::{svd_compress, SvdStrategy};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::net::Network;
use crate::prune::SweepResult;

/// Knobs shared by the comparison methods. Defaults follow the fine-tuning
/// baseline configuration (Adam, learning rate 1e-2, batch 64, 10 epochs)
/// and a 0.5 SVD rank fraction. A fixed seed makes a run fully reproducible.
#[derive(Debug, Clone)]
pub struct BaselineConfig {
    /// Registry name of the method this config drives.
    pub method: String,
    pub train: TrainConfig,
    pub rank_fraction: f64,
    /// Target sparsity for the data-free pruning controls.
    pub sparsity: f64,
    pub seed: u64,
}

impl BaselineConfig {
    pub fn for_method(method: &str, seed: u64) -> Self {
        BaselineConfig {
            method: method.to_string(),
            train: TrainConfig::default(),
            rank_fraction: 0.5,
            sparsity: 0.5,
            seed,
        }
    }
}

/// What an adaptation run produced.
#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    pub network: Network,
    /// Weight sparsity of the adapted model's mask.
    pub sparsity: f64,
    /// Exact shape-derived MACs the adaptation spent (selection included,
    /// final reporting evaluations excluded).
    pub adapt_macs: u64,
    /// Symbolic peak-memory estimate for the method at this dataset size.
    pub memory_units: u128,
    /// The sparsity/accuracy curve, for methods that sweep.
    pub sweep: Option<SweepResult>,
}

/// One way of specializing a source network to target data.
///
/// `target_train` feeds the adaptation (the pruning path reads only its
/// inputs, never its labels; the fine-tuning baseline consumes labels by
/// design). `eval` is held-out labeled target data used for selection and
/// measurement.
pub trait Strategy {
    fn name(&self) -> &'static str;
    fn adapt(
        &self,
        source: &Network,
        target_train: &LabeledDataset,
        eval: &LabeledDataset,
    ) -> Result<AdaptOutcome>;
}

type Factory = fn(BaselineConfig) -> Box<dyn Strategy>;

const REGISTRY: &[(&str, Factory)] = &[
    ("fine-prune", |cfg| Box::new(FinePruneStrategy::new(cfg))),
    ("finetune", |cfg| Box::new(FinetuneStrategy::new(cfg))),
    ("svd", |cfg| Box::new(SvdStrategy::new(cfg))),
    ("magnitude", |cfg| Box::new(MagnitudeStrategy::new(cfg))),
    ("random", |cfg| Box::new(RandomStrategy::new(cfg))),
];

/// Registered strategy names, in registry order.
pub fn names() -> Vec<&'static str> {
    REGISTRY.iter().map(|(name, _)| *name).collect()
}

/// Instantiate a strategy by registry name.
pub fn create(name: &str, mut cfg: BaselineConfig) -> Result<Box<dyn Strategy>> {
    cfg.method = name.to_string();
    REGISTRY
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, factory)| factory(cfg))
        .ok_or_else(|| Error::UnknownStrategy {
            name: name.to_string(),
            available: names().join(", "),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Provenance;
    use crate::net::LayerSpec;
    use crate::rng::Rng;
    use crate::tensor::{Shape, Tensor};

    fn blob_task(seed: u64) -> (Network, LabeledDataset, LabeledDataset) {
        // Two well-separated Gaussian blobs in 4 dims.
        let mut rng = Rng::new(seed);
        let mut make = |n: usize| {
            let samples: Vec<(Tensor, usize)> = (0..n)
                .map(|i| {
                    let label = i % 2;
                    let center = if label == 0 { 2.0 } else { -2.0 };
                    let x = Tensor::vector(
                        (0..4)
                            .map(|_| (center + 0.3 * rng.normal()) as f32)
                            .collect(),
                    )
                    .unwrap();
                    (x, label)
                })
                .collect();
            LabeledDataset::new(samples, 2, Provenance::Target).unwrap()
        };
        let train = make(60);
        let eval = make(40);
        let net = Network::new(
            Shape::new(vec![4]).unwrap(),
            vec![
                LayerSpec::Dense {
                    in_features: 4,
                    out_features: 8,
                },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    in_features: 8,
                    out_features: 2,
                },
            ],
            seed,
        )
        .unwrap();
        (net, train, eval)
    }

    #[test]
    fn registry_lists_all_methods() {
        assert_eq!(
            names(),
            vec!["fine-prune", "finetune", "svd", "magnitude", "random"]
        );
    }

    #[test]
    fn unknown_names_are_rejected_with_the_available_list() {
        let msg = match create("dropout", BaselineConfig::for_method("dropout", 0)) {
            Err(e) => e.to_string(),
            Ok(_) => panic!("unknown strategy should not resolve"),
        };
        assert!(
            msg.contains("dropout") && msg.contains("fine-prune"),
            "{msg}"
        );
    }

    #[test]
    fn every_registered_strategy_adapts_a_small_task() {
        let (net, train, eval) = blob_task(5);
        for name in names() {
            let strategy = create(name, BaselineConfig::for_method(name, 11)).unwrap();
            let outcome = strategy.adapt(&net, &train, &eval).unwrap();
            assert!(
                (0.0..=1.0).contains(&outcome.sparsity),
                "{name} reported sparsity {}",
                outcome.sparsity
            );
            assert!(outcome.memory_units > 0, "{name} reported zero memory");
            // The adapted network still evaluates.
            let acc = crate::metrics::evaluate_accuracy(&outcome.network, &eval).unwrap();
            assert!((0.0..=1.0).contains(&acc));
            assert_eq!(strategy.name(), name);
        }
    }

    #[test]
    fn strategy_runs_are_seed_reproducible() {
        let (net, train, eval) = blob_task(7);
        for name in names() {
            let a = create(name, BaselineConfig::for_method(name, 99))
                .unwrap()
                .adapt(&net, &train, &eval)
                .unwrap();
            let b = create(name, BaselineConfig::for_method(name, 99))
                .unwrap()
                .adapt(&net, &train, &eval)
                .unwrap();
            assert_eq!(a.sparsity, b.sparsity, "{name}");
            assert_eq!(a.adapt_macs, b.adapt_macs, "{name}");
            for i in 0..a.network.layers().len() {
                if let (Some(x), Some(y)) = (a.network.weight(i), b.network.weight(i)) {
                    let bits =
                        |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                    assert_eq!(bits(x), bits(y), "{name} layer {i}");
                }
            }
        }
    }
}
