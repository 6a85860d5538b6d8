//! Accuracy measurement, exact MAC counting, and the symbolic memory model.
//!
//! MAC counts are derived from layer shapes and are exact integers, never
//! timing estimates. A multiply-accumulate is one multiply feeding one
//! running sum inside a dense or conv contraction; elementwise layers
//! contribute none.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::net::{LayerSpec, Network};
use crate::tensor::Shape;

/// Fraction of samples whose argmax prediction matches the label.
pub fn evaluate_accuracy(net: &Network, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput(
            "cannot evaluate accuracy on no samples".into(),
        ));
    }
    let mut correct = 0usize;
    for (x, label) in data.iter() {
        if net.predict(x)? == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// MACs of one forward pass: dense contributes out*in, conv contributes
/// C_out * H' * W' * C_in * kH * kW.
pub fn forward_macs(net: &Network) -> u64 {
    per_layer_macs(net).iter().sum()
}

/// MACs of one backward pass. Each parameterized layer runs two contractions
/// of the forward's size (weight gradient and input gradient), so the total
/// is exactly twice the forward count.
pub fn backward_macs(net: &Network) -> u64 {
    2 * forward_macs(net)
}

/// Per-parameterized-layer forward MAC counts, in layer order.
pub fn per_layer_macs(net: &Network) -> Vec<u64> {
    let mut shape = net.input_shape().clone();
    let mut out = Vec::new();
    for spec in net.layers() {
        let next = spec
            .output_shape(&shape)
            .expect("topology validated at construction");
        match spec {
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                out.push((in_features * out_features) as u64);
            }
            LayerSpec::Conv2d {
                in_channels,
                kernel_h,
                kernel_w,
                ..
            } => {
                let taps = (in_channels * kernel_h * kernel_w) as u64;
                out.push(next.elem_count() as u64 * taps);
            }
            _ => {}
        }
        shape = next;
    }
    out
}

/// Decomposition cost of the SVD baseline, from the same layer-size
/// arithmetic as its memory formula: sum of min(n_i * n_{i-1}^2,
/// n_i^2 * n_{i-1}) over dense layers.
pub fn svd_macs(net: &Network) -> u64 {
    net.layers()
        .iter()
        .filter_map(|spec| match spec {
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                let (m, n) = (*out_features as u64, *in_features as u64);
                Some((m * n * n).min(m * m * n))
            }
            _ => None,
        })
        .sum()
}

/// Multiply-accumulate tallies per work phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MacCounter {
    pub forward: u64,
    pub backward: u64,
    pub record: u64,
    /// Mask selection and weight zeroing perform comparisons and stores only.
    pub prune: u64,
    pub svd: u64,
}

impl MacCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tally `samples` forward passes.
    pub fn add_forward(&mut self, net: &Network, samples: u64) {
        self.forward += forward_macs(net) * samples;
    }

    /// Tally `samples` backward passes (gradient products only; the forward
    /// that precedes them is tallied separately).
    pub fn add_backward(&mut self, net: &Network, samples: u64) {
        self.backward += backward_macs(net) * samples;
    }

    /// Tally `samples` ledger recordings. One recording costs exactly one
    /// forward pass.
    pub fn add_record(&mut self, net: &Network, samples: u64) {
        self.record += forward_macs(net) * samples;
    }

    pub fn add_svd(&mut self, net: &Network) {
        self.svd += svd_macs(net);
    }

    pub fn total(&self) -> u64 {
        self.forward + self.backward + self.record + self.prune + self.svd
    }
}

/// Adaptation method, for the symbolic peak-memory estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryMethod {
    /// Stores per-sample activations for the gradient pass: scales with the
    /// number of training examples held in flight.
    Backprop,
    /// Decomposition workspace per example.
    Svd,
    /// One activation map aggregated in place, independent of dataset size.
    FinePruning,
}

/// Symbolic peak-activation-storage estimate with all constants fixed at 1,
/// over the per-layer widths `n_0..n_L` (input first). Only ratios and
/// scaling in `n_samples` are meaningful, never absolute bytes.
pub fn estimate_memory(method: MemoryMethod, n_samples: u64, widths: &[usize]) -> u128 {
    let pair_sum = |f: fn(u128, u128) -> u128| -> u128 {
        widths
            .windows(2)
            .map(|w| f(w[0] as u128, w[1] as u128))
            .sum()
    };
    match method {
        MemoryMethod::Backprop => n_samples as u128 * pair_sum(|prev, cur| prev * cur),
        MemoryMethod::Svd => {
            n_samples as u128 * pair_sum(|prev, cur| (cur * prev * prev).min(cur * cur * prev))
        }
        MemoryMethod::FinePruning => pair_sum(|prev, cur| prev * cur),
    }
}

/// Layer widths for the memory model: the input element count followed by
/// each parameterized layer's output element count.
pub fn activation_widths(net: &Network) -> Vec<usize> {
    let mut shape: Shape = net.input_shape().clone();
    let mut widths = vec![shape.elem_count()];
    for spec in net.layers() {
        shape = spec
            .output_shape(&shape)
            .expect("topology validated at construction");
        if spec.has_params() {
            widths.push(shape.elem_count());
        }
    }
    widths
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Provenance;
    use crate::rng::Rng;
    use crate::tensor::Tensor;

    fn dense_net(widths: &[usize], seed: u64) -> Network {
        let mut layers = Vec::new();
        for (i, w) in widths.windows(2).enumerate() {
            layers.push(LayerSpec::Dense {
                in_features: w[0],
                out_features: w[1],
            });
            if i + 2 < widths.len() {
                layers.push(LayerSpec::Relu);
            }
        }
        Network::new(Shape::new(vec![widths[0]]).unwrap(), layers, seed).unwrap()
    }

    #[test]
    fn constant_net_on_balanced_set_scores_half() {
        // All-zero weights: logits constant, argmax always class 0.
        let net = {
            let base = dense_net(&[2, 2], 0);
            let w = Tensor::zeros(base.weight(0).unwrap().shape().clone());
            let b = Tensor::zeros(base.bias(0).unwrap().shape().clone());
            Network::from_parts(
                base.input_shape().clone(),
                base.layers().to_vec(),
                vec![Some(w)],
                vec![Some(b)],
                base.mask().clone(),
                true,
                0,
            )
            .unwrap()
        };
        let samples: Vec<(Tensor, usize)> = (0..20)
            .map(|i| (Tensor::vector(vec![i as f32, -(i as f32)]).unwrap(), i % 2))
            .collect();
        let ds = LabeledDataset::new(samples, 2, Provenance::Target).unwrap();
        let acc = evaluate_accuracy(&net, &ds).unwrap();
        assert_eq!(acc, 0.5);
    }

    #[test]
    fn accuracy_is_one_on_memorized_samples() {
        // Labels taken from the net's own predictions.
        let net = dense_net(&[3, 5, 4], 9);
        let mut rng = Rng::new(4);
        let samples: Vec<(Tensor, usize)> = (0..10)
            .map(|_| {
                let x =
                    Tensor::vector((0..3).map(|_| rng.uniform(-1.0, 1.0) as f32).collect())
                        .unwrap();
                let label = net.predict(&x).unwrap();
                (x, label)
            })
            .collect();
        let ds = LabeledDataset::new(samples, 4, Provenance::Target).unwrap();
        assert_eq!(evaluate_accuracy(&net, &ds).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_matches_scripted_tally() {
        let net = dense_net(&[4, 6, 3], 5);
        let mut rng = Rng::new(17);
        let samples: Vec<(Tensor, usize)> = (0..50)
            .map(|_| {
                let x = Tensor::vector((0..4).map(|_| rng.uniform(-1.0, 1.0) as f32).collect())
                    .unwrap();
                (x, rng.index(3))
            })
            .collect();
        let ds = LabeledDataset::new(samples.clone(), 3, Provenance::Target).unwrap();
        let acc = evaluate_accuracy(&net, &ds).unwrap();
        let mut correct = 0;
        for (x, y) in &samples {
            if net.predict(x).unwrap() == *y {
                correct += 1;
            }
        }
        assert_eq!(acc, correct as f64 / 50.0);
    }

    #[test]
    fn forward_macs_from_shapes() {
        let net = dense_net(&[4, 3, 2], 0);
        assert_eq!(forward_macs(&net), (4 * 3 + 3 * 2) as u64);
    }

    #[test]
    fn conv_macs_from_shapes() {
        let net = Network::new(
            Shape::new(vec![2, 8, 8]).unwrap(),
            vec![
                LayerSpec::Conv2d {
                    in_channels: 2,
                    out_channels: 3,
                    kernel_h: 3,
                    kernel_w: 3,
                    stride: 2,
                    padding: 1,
                },
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    in_features: 48,
                    out_features: 5,
                },
            ],
            1,
        )
        .unwrap();
        // Conv output is 3x4x4; each output element takes 2*3*3 taps.
        let conv = 3 * 4 * 4 * 2 * 3 * 3;
        let dense = 48 * 5;
        assert_eq!(forward_macs(&net), (conv + dense) as u64);
    }

    #[test]
    fn backward_is_twice_forward_for_dense_stacks() {
        // Independent per-layer arithmetic: each dense layer costs out*in on
        // the way forward and 2*out*in on the way back.
        let widths = [7usize, 5, 4, 3];
        let net = dense_net(&widths, 2);
        let fwd_by_hand: u64 = widths.windows(2).map(|w| (w[0] * w[1]) as u64).sum();
        assert_eq!(forward_macs(&net), fwd_by_hand);
        assert_eq!(backward_macs(&net), 2 * fwd_by_hand);
    }

    #[test]
    fn record_tally_equals_forward_tally() {
        let net = dense_net(&[4, 3, 2], 3);
        let mut counter = MacCounter::new();
        counter.add_forward(&net, 10);
        counter.add_record(&net, 10);
        assert_eq!(counter.forward, counter.record);
    }

    #[test]
    fn memory_formulas_on_a_small_dense_net() {
        let widths = [4usize, 3, 2];
        assert_eq!(estimate_memory(MemoryMethod::Backprop, 10, &widths), 180);
        assert_eq!(estimate_memory(MemoryMethod::FinePruning, 10, &widths), 18);
    }

    #[test]
    fn fine_pruning_memory_is_independent_of_sample_count() {
        let widths = [32usize, 64, 48, 8];
        let small = estimate_memory(MemoryMethod::FinePruning, 100, &widths);
        let large = estimate_memory(MemoryMethod::FinePruning, 100_000, &widths);
        assert_eq!(small, large);
        let bp_small = estimate_memory(MemoryMethod::Backprop, 100, &widths);
        let bp_large = estimate_memory(MemoryMethod::Backprop, 100_000, &widths);
        assert_eq!(bp_large / bp_small, 1000);
        assert_eq!(bp_small / small, 100);
    }

    #[test]
    fn activation_widths_walk_parameterized_layers() {
        let net = dense_net(&[4, 3, 2], 0);
        assert_eq!(activation_widths(&net), vec![4, 3, 2]);
    }

    #[test]
    fn record_stays_under_half_of_training_macs() {
        let net = dense_net(&[32, 64, 48, 8], 0);
        let record = forward_macs(&net);
        let train = forward_macs(&net) + backward_macs(&net);
        assert!((record as f64) / (train as f64) <= 0.55);
    }
}
