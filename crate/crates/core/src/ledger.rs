//! Per-unit activation accounting over an unlabeled target set.
//!
//! The ledger holds one 64-bit accumulator per prunable unit and a sample
//! counter, nothing else. Its size is fixed by the network topology and does
//! not grow with the number of samples recorded, which is what makes
//! forward-pass-only adaptation cheap in memory.
//!
//! `record` requires exclusive access to its ledger; the supported parallel
//! pattern is shard-local ledgers combined with [`merge`]. Networks are
//! shared read-only.

use crate::error::{Error, Result};
use crate::net::{LayerSpec, Network};
use crate::tensor::Tensor;
use std::io::Write;

/// Which value counts as a unit's activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActivationSite {
    /// The unit's transmitted signal: its output after an immediately
    /// following relu layer, when present.
    #[default]
    PostActivation,
    /// The unit's raw output, before any activation layer.
    PreActivation,
}

/// Accumulated absolute activation per prunable unit, plus the sample count.
#[derive(Debug, Clone)]
pub struct ActivationLedger {
    layers: Vec<LedgerLayer>,
    sample_count: u64,
    site: ActivationSite,
}

#[derive(Debug, Clone)]
struct LedgerLayer {
    layer_index: usize,
    weights_per_unit: usize,
    totals: Vec<f64>,
}

/// One unit's normalized activation score, globally indexed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitScore {
    pub layer_index: usize,
    pub unit_index: usize,
    /// Mean over samples of the L1 norm of the unit's output
    /// (spatial positions summed for conv channels).
    pub score: f64,
    /// Weights owned by this unit, for weight-fraction sparsity accounting.
    pub weight_count: usize,
}

impl ActivationLedger {
    /// Empty ledger sized for `net`'s prunable layers, accumulating
    /// post-activation outputs.
    pub fn for_network(net: &Network) -> Self {
        Self::with_site(net, ActivationSite::PostActivation)
    }

    pub fn with_site(net: &Network, site: ActivationSite) -> Self {
        let layers = net
            .prunable_layers()
            .iter()
            .map(|p| LedgerLayer {
                layer_index: p.layer_index,
                weights_per_unit: p.weights_per_unit,
                totals: vec![0.0; p.unit_count],
            })
            .collect();
        ActivationLedger {
            layers,
            sample_count: 0,
            site,
        }
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    pub fn site(&self) -> ActivationSite {
        self.site
    }

    /// Total number of accumulators. Constant in the sample count.
    pub fn accumulator_count(&self) -> usize {
        self.layers.iter().map(|l| l.totals.len()).sum()
    }

    /// Check that `net`'s prunable structure is the one this ledger was built
    /// for.
    pub fn check_topology(&self, net: &Network) -> Result<()> {
        let prunable = net.prunable_layers();
        if prunable.len() != self.layers.len() {
            return Err(Error::LedgerMismatch(format!(
                "ledger tracks {} layers, network has {} prunable layers",
                self.layers.len(),
                prunable.len()
            )));
        }
        for (ll, pl) in self.layers.iter().zip(&prunable) {
            if ll.layer_index != pl.layer_index
                || ll.totals.len() != pl.unit_count
                || ll.weights_per_unit != pl.weights_per_unit
            {
                return Err(Error::LedgerMismatch(format!(
                    "layer {}: ledger geometry does not match the network",
                    ll.layer_index
                )));
            }
        }
        Ok(())
    }

    /// Run one unlabeled sample through `net` and add each prunable unit's
    /// absolute activation (summed over spatial positions) to its accumulator.
    pub fn record(&mut self, net: &Network, sample: &Tensor) -> Result<()> {
        self.check_topology(net)?;
        let (_, trace) = net.forward_traced(sample)?;
        for layer in &mut self.layers {
            let site = activation_index(net.layers(), layer.layer_index, self.site);
            let t = &trace[site];
            accumulate_unit_l1(t, &mut layer.totals)?;
        }
        self.sample_count += 1;
        Ok(())
    }

    /// Record a batch of unlabeled samples. The signature accepts only
    /// tensors: labels cannot reach this path.
    pub fn record_all<'a>(
        &mut self,
        net: &Network,
        samples: impl IntoIterator<Item = &'a Tensor>,
    ) -> Result<()> {
        for x in samples {
            self.record(net, x)?;
        }
        Ok(())
    }

    /// Combine two ledgers recorded on the same topology: elementwise sums,
    /// additive sample counts. Associative and commutative.
    pub fn merge(a: &ActivationLedger, b: &ActivationLedger) -> Result<ActivationLedger> {
        if a.site != b.site {
            return Err(Error::LedgerMismatch(
                "ledgers accumulate different activation sites".into(),
            ));
        }
        if a.layers.len() != b.layers.len() {
            return Err(Error::LedgerMismatch(format!(
                "ledger structures differ: {} vs {} layers",
                a.layers.len(),
                b.layers.len()
            )));
        }
        let mut layers = Vec::with_capacity(a.layers.len());
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            if la.layer_index != lb.layer_index
                || la.totals.len() != lb.totals.len()
                || la.weights_per_unit != lb.weights_per_unit
            {
                return Err(Error::LedgerMismatch(format!(
                    "layer {}: ledger structures differ",
                    la.layer_index
                )));
            }
            let totals = la
                .totals
                .iter()
                .zip(&lb.totals)
                .map(|(x, y)| x + y)
                .collect();
            layers.push(LedgerLayer {
                layer_index: la.layer_index,
                weights_per_unit: la.weights_per_unit,
                totals,
            });
        }
        Ok(ActivationLedger {
            layers,
            sample_count: a.sample_count + b.sample_count,
            site: a.site,
        })
    }

    /// Per-unit scores normalized by sample count, ordered by
    /// (layer_index, unit_index). Normalization makes thresholds independent
    /// of dataset size.
    pub fn scores(&self) -> Result<Vec<UnitScore>> {
        if self.sample_count == 0 {
            return Err(Error::EmptyInput("ledger has recorded no samples".into()));
        }
        let n = self.sample_count as f64;
        let mut out = Vec::with_capacity(self.accumulator_count());
        for layer in &self.layers {
            for (u, &total) in layer.totals.iter().enumerate() {
                out.push(UnitScore {
                    layer_index: layer.layer_index,
                    unit_index: u,
                    score: total / n,
                    weight_count: layer.weights_per_unit,
                });
            }
        }
        Ok(out)
    }

    /// Write scores as CSV with columns layer_index, unit_index, score.
    pub fn export_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "layer_index,unit_index,score")?;
        for s in self.scores()? {
            writeln!(w, "{},{},{}", s.layer_index, s.unit_index, s.score)?;
        }
        Ok(())
    }
}

/// Index into the forward trace holding a prunable layer's activation:
/// the layer itself, or the last relu in the run immediately following it.
fn activation_index(layers: &[LayerSpec], layer_index: usize, site: ActivationSite) -> usize {
    match site {
        ActivationSite::PreActivation => layer_index,
        ActivationSite::PostActivation => {
            let mut idx = layer_index;
            while idx + 1 < layers.len() && matches!(layers[idx + 1], LayerSpec::Relu) {
                idx += 1;
            }
            idx
        }
    }
}

fn accumulate_unit_l1(t: &Tensor, totals: &mut [f64]) -> Result<()> {
    match t.shape().rank() {
        1 => {
            if t.shape().dims()[0] != totals.len() {
                return Err(Error::LedgerMismatch(format!(
                    "activation length {} vs {} accumulators",
                    t.shape().dims()[0],
                    totals.len()
                )));
            }
            for (acc, &v) in totals.iter_mut().zip(t.data()) {
                *acc += f64::from(v.abs());
            }
            Ok(())
        }
        3 => {
            let [c, h, w] = [
                t.shape().dims()[0],
                t.shape().dims()[1],
                t.shape().dims()[2],
            ];
            if c != totals.len() {
                return Err(Error::LedgerMismatch(format!(
                    "activation channels {} vs {} accumulators",
                    c,
                    totals.len()
                )));
            }
            for (ch, acc) in totals.iter_mut().enumerate() {
                let mut sum = 0.0f64;
                for &v in &t.data()[ch * h * w..(ch + 1) * h * w] {
                    sum += f64::from(v.abs());
                }
                *acc += sum;
            }
            Ok(())
        }
        r => Err(Error::LedgerMismatch(format!(
            "cannot attribute rank-{r} activations to units"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::LayerSpec;
    use crate::rng::Rng;
    use crate::tensor::Shape;

    fn relu_net(seed: u64) -> Network {
        Network::new(
            Shape::new(vec![3]).unwrap(),
            vec![
                LayerSpec::Dense {
                    in_features: 3,
                    out_features: 4,
                },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    in_features: 4,
                    out_features: 5,
                },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    in_features: 5,
                    out_features: 2,
                },
            ],
            seed,
        )
        .unwrap()
    }

    #[test]
    fn zero_input_through_bias_free_relu_net_changes_nothing() {
        let net = relu_net(1);
        let mut ledger = ActivationLedger::for_network(&net);
        ledger
            .record(&net, &Tensor::vector(vec![0.0, 0.0, 0.0]).unwrap())
            .unwrap();
        let scores = ledger.scores().unwrap();
        assert!(scores.iter().all(|s| s.score == 0.0));
        assert_eq!(ledger.sample_count(), 1);
    }

    #[test]
    fn forced_arithmetic_on_a_single_dense_relu_layer() {
        // Classifier protection must be off so the sole dense layer is tracked.
        let mut net = Network::with_options(
            Shape::new(vec![2]).unwrap(),
            vec![
                LayerSpec::Dense {
                    in_features: 2,
                    out_features: 2,
                },
                LayerSpec::Relu,
            ],
            0,
            false,
        )
        .unwrap();
        // W = [[1, 0], [0, -1]], b = 0.
        net_set(&mut net, 0, &[1.0, 0.0, 0.0, -1.0]);
        let mut ledger = ActivationLedger::for_network(&net);
        ledger
            .record(&net, &Tensor::vector(vec![2.0, 3.0]).unwrap())
            .unwrap();
        let scores = ledger.scores().unwrap();
        assert_eq!(scores.len(), 2);
        assert_eq!(scores[0].score, 2.0);
        assert_eq!(scores[1].score, 0.0);
    }

    fn net_set(net: &mut Network, layer: usize, w: &[f32]) {
        // Test helper: overwrite a layer's weights through from_parts.
        let mut weights: Vec<Option<Tensor>> = (0..net.layers().len())
            .map(|i| net.weight(i).cloned())
            .collect();
        let biases: Vec<Option<Tensor>> = (0..net.layers().len())
            .map(|i| net.bias(i).cloned())
            .collect();
        let t = weights[layer].take().unwrap();
        weights[layer] = Some(Tensor::new(t.shape().clone(), w.to_vec()).unwrap());
        *net = Network::from_parts(
            net.input_shape().clone(),
            net.layers().to_vec(),
            weights,
            biases,
            net.mask().clone(),
            net.protect_classifier(),
            net.seed(),
        )
        .unwrap();
    }

    #[test]
    fn record_matches_external_trace_summation() {
        let net = relu_net(7);
        let mut rng = Rng::new(3);
        let samples: Vec<Tensor> = (0..20)
            .map(|_| {
                Tensor::vector((0..3).map(|_| rng.uniform(-2.0, 2.0) as f32).collect()).unwrap()
            })
            .collect();
        let mut ledger = ActivationLedger::for_network(&net);
        for s in &samples {
            ledger.record(&net, s).unwrap();
        }

        // Oracle: sum the relu outputs per unit from per-sample traces.
        let mut want = [vec![0.0f64; 4], vec![0.0f64; 5]];
        for s in &samples {
            let (_, trace) = net.forward_traced(s).unwrap();
            for (li, trace_idx) in [(0usize, 1usize), (1, 3)] {
                for (u, &v) in trace[trace_idx].data().iter().enumerate() {
                    want[li][u] += f64::from(v.abs());
                }
            }
        }
        let scores = ledger.scores().unwrap();
        for s in &scores {
            let slot = if s.layer_index == 0 { 0 } else { 1 };
            let expected = want[slot][s.unit_index] / 20.0;
            let denom = expected.abs().max(1e-12);
            assert!(
                (s.score - expected).abs() / denom <= 1e-6,
                "unit ({}, {}): {} vs {}",
                s.layer_index,
                s.unit_index,
                s.score,
                expected
            );
        }
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let net = relu_net(11);
        let mut a = ActivationLedger::for_network(&net);
        a.record(&net, &Tensor::vector(vec![1.0, -0.5, 0.3]).unwrap())
            .unwrap();
        let empty = ActivationLedger::for_network(&net);
        let merged = ActivationLedger::merge(&a, &empty).unwrap();
        assert_eq!(merged.sample_count(), a.sample_count());
        assert_eq!(merged.scores().unwrap(), a.scores().unwrap());
    }

    #[test]
    fn merge_is_commutative_exactly() {
        let net = relu_net(13);
        let mut rng = Rng::new(5);
        let mk = |rng: &mut Rng, n: usize, net: &Network| {
            let mut l = ActivationLedger::for_network(net);
            for _ in 0..n {
                let x = Tensor::vector((0..3).map(|_| rng.uniform(-1.0, 1.0) as f32).collect())
                    .unwrap();
                l.record(net, &x).unwrap();
            }
            l
        };
        let a = mk(&mut rng, 7, &net);
        let b = mk(&mut rng, 11, &net);
        let ab = ActivationLedger::merge(&a, &b).unwrap();
        let ba = ActivationLedger::merge(&b, &a).unwrap();
        for (x, y) in ab.scores().unwrap().iter().zip(ba.scores().unwrap()) {
            assert_eq!(x.score.to_bits(), y.score.to_bits());
        }
    }

    #[test]
    fn sharded_recording_matches_sequential() {
        let net = relu_net(17);
        let mut rng = Rng::new(9);
        let samples: Vec<Tensor> = (0..100)
            .map(|_| {
                Tensor::vector((0..3).map(|_| rng.uniform(-2.0, 2.0) as f32).collect()).unwrap()
            })
            .collect();

        let mut sequential = ActivationLedger::for_network(&net);
        for s in &samples {
            sequential.record(&net, s).unwrap();
        }

        let mut merged = ActivationLedger::for_network(&net);
        for shard in samples.chunks(25) {
            let mut local = ActivationLedger::for_network(&net);
            for s in shard {
                local.record(&net, s).unwrap();
            }
            merged = ActivationLedger::merge(&merged, &local).unwrap();
        }
        assert_eq!(merged.sample_count(), sequential.sample_count());
        for (a, b) in merged
            .scores()
            .unwrap()
            .iter()
            .zip(sequential.scores().unwrap())
        {
            let denom = b.score.abs().max(1e-12);
            assert!((a.score - b.score).abs() / denom <= 1e-9);
        }
    }

    #[test]
    fn merge_is_associative_within_f64_rounding() {
        let net = relu_net(14);
        let mut rng = Rng::new(6);
        let mut mk = |n: usize| {
            let mut l = ActivationLedger::for_network(&net);
            for _ in 0..n {
                let x = Tensor::vector((0..3).map(|_| rng.uniform(-1.0, 1.0) as f32).collect())
                    .unwrap();
                l.record(&net, &x).unwrap();
            }
            l
        };
        let (a, b, c) = (mk(3), mk(5), mk(8));
        let left = ActivationLedger::merge(&ActivationLedger::merge(&a, &b).unwrap(), &c).unwrap();
        let right = ActivationLedger::merge(&a, &ActivationLedger::merge(&b, &c).unwrap()).unwrap();
        assert_eq!(left.sample_count(), right.sample_count());
        for (x, y) in left.scores().unwrap().iter().zip(right.scores().unwrap()) {
            let denom = y.score.abs().max(1e-12);
            assert!((x.score - y.score).abs() / denom <= 1e-12);
        }
    }

    #[test]
    fn merge_rejects_structure_mismatch() {
        let a = ActivationLedger::for_network(&relu_net(1));
        let other = Network::new(
            Shape::new(vec![3]).unwrap(),
            vec![
                LayerSpec::Dense {
                    in_features: 3,
                    out_features: 6,
                },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    in_features: 6,
                    out_features: 2,
                },
            ],
            1,
        )
        .unwrap();
        let b = ActivationLedger::for_network(&other);
        assert!(matches!(
            ActivationLedger::merge(&a, &b),
            Err(Error::LedgerMismatch(_))
        ));
    }

    #[test]
    fn scores_on_empty_ledger_is_an_error() {
        let ledger = ActivationLedger::for_network(&relu_net(1));
        assert!(matches!(ledger.scores(), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn single_sample_scores_equal_that_samples_outputs() {
        let net = relu_net(19);
        let x = Tensor::vector(vec![0.8, -0.2, 1.4]).unwrap();
        let mut ledger = ActivationLedger::for_network(&net);
        ledger.record(&net, &x).unwrap();
        let (_, trace) = net.forward_traced(&x).unwrap();
        let scores = ledger.scores().unwrap();
        for s in &scores {
            let trace_idx = if s.layer_index == 0 { 1 } else { 3 };
            let want = f64::from(trace[trace_idx].data()[s.unit_index].abs());
            assert!((s.score - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn scores_are_order_invariant() {
        let net = relu_net(23);
        let xs = [
            Tensor::vector(vec![1.0, 2.0, -1.0]).unwrap(),
            Tensor::vector(vec![-0.3, 0.4, 0.9]).unwrap(),
            Tensor::vector(vec![0.0, -2.0, 0.5]).unwrap(),
        ];
        let mut fwd = ActivationLedger::for_network(&net);
        let mut rev = ActivationLedger::for_network(&net);
        for x in &xs {
            fwd.record(&net, x).unwrap();
        }
        for x in xs.iter().rev() {
            rev.record(&net, x).unwrap();
        }
        for (a, b) in fwd.scores().unwrap().iter().zip(rev.scores().unwrap()) {
            assert!((a.score - b.score).abs() <= 1e-12);
        }
    }

    #[test]
    fn doubling_the_dataset_leaves_normalized_scores_unchanged() {
        let net = relu_net(29);
        let mut rng = Rng::new(31);
        let samples: Vec<Tensor> = (0..15)
            .map(|_| {
                Tensor::vector((0..3).map(|_| rng.uniform(-1.5, 1.5) as f32).collect()).unwrap()
            })
            .collect();
        let mut once = ActivationLedger::for_network(&net);
        let mut twice = ActivationLedger::for_network(&net);
        for s in &samples {
            once.record(&net, s).unwrap();
            twice.record(&net, s).unwrap();
        }
        for s in &samples {
            twice.record(&net, s).unwrap();
        }
        for (a, b) in once.scores().unwrap().iter().zip(twice.scores().unwrap()) {
            let denom = a.score.abs().max(1e-12);
            assert!((a.score - b.score).abs() / denom <= 1e-9);
        }
    }

    #[test]
    fn accumulator_count_is_constant_in_sample_count() {
        let net = relu_net(37);
        let mut ledger = ActivationLedger::for_network(&net);
        let before = ledger.accumulator_count();
        let mut rng = Rng::new(1);
        for _ in 0..10 {
            let x =
                Tensor::vector((0..3).map(|_| rng.uniform(-1.0, 1.0) as f32).collect()).unwrap();
            ledger.record(&net, &x).unwrap();
        }
        let after_10 = ledger.accumulator_count();
        for _ in 0..90 {
            let x =
                Tensor::vector((0..3).map(|_| rng.uniform(-1.0, 1.0) as f32).collect()).unwrap();
            ledger.record(&net, &x).unwrap();
        }
        assert_eq!(before, after_10);
        assert_eq!(before, ledger.accumulator_count());
        assert_eq!(before, 9); // 4 + 5 hidden units
    }

    #[test]
    fn csv_export_has_expected_header_and_rows() {
        let net = relu_net(41);
        let mut ledger = ActivationLedger::for_network(&net);
        ledger
            .record(&net, &Tensor::vector(vec![1.0, 0.0, -1.0]).unwrap())
            .unwrap();
        let mut buf = Vec::new();
        ledger.export_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("layer_index,unit_index,score"));
        assert_eq!(lines.count(), 9);
    }

    #[test]
    fn conv_channels_sum_spatial_positions() {
        let net = Network::new(
            Shape::new(vec![1, 4, 4]).unwrap(),
            vec![
                LayerSpec::Conv2d {
                    in_channels: 1,
                    out_channels: 2,
                    kernel_h: 3,
                    kernel_w: 3,
                    stride: 1,
                    padding: 1,
                },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    in_features: 32,
                    out_features: 2,
                },
            ],
            43,
        )
        .unwrap();
        let mut rng = Rng::new(2);
        let x = Tensor::from_slice(
            &[1, 4, 4],
            &(0..16)
                .map(|_| rng.uniform(-1.0, 1.0) as f32)
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let mut ledger = ActivationLedger::for_network(&net);
        ledger.record(&net, &x).unwrap();
        let (_, trace) = net.forward_traced(&x).unwrap();
        let relu_out = &trace[1];
        let scores = ledger.scores().unwrap();
        assert_eq!(scores.len(), 2);
        for (c, s) in scores.iter().enumerate() {
            let want: f64 = relu_out.data()[c * 16..(c + 1) * 16]
                .iter()
                .map(|&v| f64::from(v.abs()))
                .sum();
            assert!((s.score - want).abs() < 1e-9);
            assert_eq!(s.weight_count, 9);
        }
    }
}
