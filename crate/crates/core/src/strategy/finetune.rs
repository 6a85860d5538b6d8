//! Gradient fine-tuning baseline: Adam over cross-entropy on labeled target
//! data. This is the one method here that consumes labels.

use super::{AdaptOutcome, BaselineConfig, Strategy};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::metrics::{
    activation_widths, backward_macs, estimate_memory, forward_macs, MemoryMethod,
};
use crate::net::{adam_step, cross_entropy_loss, AdamState, GradientSet, Network};
use crate::rng::{sub_seed, Rng};

/// Fine-tuning hyperparameters: Adam with learning rate 1e-2, batch size 64,
/// 10 epochs.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            batch_size: 64,
            epochs: 10,
        }
    }
}

/// Fine-tune all unmasked parameters with Adam, returning the updated network
/// and the mean training-set loss after each epoch. Dropped units keep their
/// exact zeros: their gradients are zeroed in the backward pass and the mask
/// is re-applied after every step. The epoch order is shuffled from `seed`.
pub fn finetune_backprop(
    net: &Network,
    labeled_target: &LabeledDataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Network, Vec<f64>)> {
    if labeled_target.is_empty() {
        return Err(Error::EmptyInput(
            "fine-tuning needs at least one sample".into(),
        ));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be >= 1".into()));
    }
    let mut model = net.clone();
    let mut state = AdamState::new(&model);
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..labeled_target.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = Rng::new(sub_seed(seed, &format!("finetune-epoch-{epoch}")));
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = GradientSet::zeros_like(&model);
            for &idx in batch {
                let (x, label) = labeled_target.sample(idx);
                grads.add_assign(&model.backward(x, label)?);
            }
            grads.scale(1.0 / batch.len() as f32);
            adam_step(&mut model, &grads, &mut state, cfg.learning_rate);
        }
        let mut loss_sum = 0.0f64;
        for (x, label) in labeled_target.iter() {
            loss_sum += f64::from(cross_entropy_loss(&model.forward(x)?, label)?);
        }
        losses.push(loss_sum / labeled_target.len() as f64);
    }
    Ok((model, losses))
}

pub struct FinetuneStrategy {
    cfg: BaselineConfig,
}

impl FinetuneStrategy {
    pub fn new(cfg: BaselineConfig) -> Self {
        FinetuneStrategy { cfg }
    }
}

impl Strategy for FinetuneStrategy {
    fn name(&self) -> &'static str {
        "finetune"
    }

    fn adapt(
        &self,
        source: &Network,
        target_train: &LabeledDataset,
        _eval: &LabeledDataset,
    ) -> Result<AdaptOutcome> {
        let (network, _losses) =
            finetune_backprop(source, target_train, &self.cfg.train, self.cfg.seed)?;
        let steps = (target_train.len() * self.cfg.train.epochs) as u64;
        Ok(AdaptOutcome {
            sparsity: network.mask().sparsity(),
            adapt_macs: (forward_macs(source) + backward_macs(source)) * steps,
            memory_units: estimate_memory(
                MemoryMethod::Backprop,
                target_train.len() as u64,
                &activation_widths(source),
            ),
            sweep: None,
            network,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Provenance;
    use crate::metrics::evaluate_accuracy;
    use crate::net::LayerSpec;
    use crate::tensor::{Shape, Tensor};

    fn separable_blobs(n: usize, seed: u64) -> LabeledDataset {
        // Closed-form separable: class = sign of the first coordinate, with
        // centers at +/-3 and noise far below the margin.
        let mut rng = Rng::new(seed);
        let samples: Vec<(Tensor, usize)> = (0..n)
            .map(|i| {
                let label = i % 2;
                let center = if label == 0 { 3.0 } else { -3.0 };
                let x = Tensor::vector(vec![
                    (center + 0.2 * rng.normal()) as f32,
                    (0.2 * rng.normal()) as f32,
                ])
                .unwrap();
                assert_eq!(
                    (x.data()[0] < 0.0) as usize,
                    label,
                    "blobs must be separable"
                );
                (x, label)
            })
            .collect();
        LabeledDataset::new(samples, 2, Provenance::Target).unwrap()
    }

    #[test]
    fn zero_epochs_leaves_the_network_unchanged() {
        let net = Network::new(
            Shape::new(vec![2]).unwrap(),
            vec![LayerSpec::Dense {
                in_features: 2,
                out_features: 2,
            }],
            3,
        )
        .unwrap();
        let data = separable_blobs(10, 1);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (tuned, losses) = finetune_backprop(&net, &data, &cfg, 0).unwrap();
        assert!(losses.is_empty());
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(net.weight(0).unwrap()), bits(tuned.weight(0).unwrap()));
    }

    #[test]
    fn separable_blobs_reach_high_training_accuracy() {
        // Neutral zero start: every step of the default 10-epoch config then
        // pushes toward the separating direction.
        let base = Network::new(
            Shape::new(vec![2]).unwrap(),
            vec![LayerSpec::Dense {
                in_features: 2,
                out_features: 2,
            }],
            7,
        )
        .unwrap();
        let net = Network::from_parts(
            Shape::new(vec![2]).unwrap(),
            base.layers().to_vec(),
            vec![Some(Tensor::zeros(base.weight(0).unwrap().shape().clone()))],
            vec![Some(Tensor::zeros(base.bias(0).unwrap().shape().clone()))],
            base.mask().clone(),
            true,
            7,
        )
        .unwrap();
        let data = separable_blobs(512, 2);
        let (tuned, losses) = finetune_backprop(&net, &data, &TrainConfig::default(), 5).unwrap();
        let acc = evaluate_accuracy(&tuned, &data).unwrap();
        assert!(acc >= 0.95, "training accuracy {acc}");
        assert!(
            losses.last().unwrap() < losses.first().unwrap(),
            "losses {losses:?}"
        );
    }

    #[test]
    fn masked_units_stay_zero_through_fine_tuning() {
        let mut net = Network::new(
            Shape::new(vec![2]).unwrap(),
            vec![
                LayerSpec::Dense {
                    in_features: 2,
                    out_features: 6,
                },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    in_features: 6,
                    out_features: 2,
                },
            ],
            11,
        )
        .unwrap();
        let mut mask = net.mask().clone();
        mask.layer_mut(0).unwrap().keep[1] = false;
        mask.layer_mut(0).unwrap().keep[4] = false;
        net.apply_mask(&mask).unwrap();
        let data = separable_blobs(64, 3);
        let (tuned, _) = finetune_backprop(&net, &data, &TrainConfig::default(), 9).unwrap();
        let w = tuned.weight(0).unwrap();
        for u in [1usize, 4] {
            assert!(w.data()[u * 2..(u + 1) * 2].iter().all(|&v| v == 0.0));
            assert_eq!(tuned.bias(0).unwrap().data()[u], 0.0);
        }
        assert_eq!(tuned.mask().sparsity(), net.mask().sparsity());
    }

    #[test]
    fn empty_config_errors() {
        let net = Network::new(
            Shape::new(vec![2]).unwrap(),
            vec![LayerSpec::Dense {
                in_features: 2,
                out_features: 2,
            }],
            3,
        )
        .unwrap();
        let data = separable_blobs(4, 4);
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(finetune_backprop(&net, &data, &cfg, 0).is_err());
    }
}
