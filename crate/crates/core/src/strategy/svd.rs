//! SVD model decomposition baseline: each dense layer is replaced by two
//! chained dense layers holding a rank-k factorization of its weights.

use super::{AdaptOutcome, BaselineConfig, Strategy};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::svd;
use crate::metrics::{activation_widths, estimate_memory, svd_macs, MemoryMethod};
use crate::net::{all_keep_mask, LayerSpec, Network};
use crate::tensor::{Shape, Tensor};

/// Replace every dense layer's weights W (out x in) with the chained pair
/// `U_k` and `diag(sigma_k) V_k^T`, where `k = ceil(rank_fraction * min(out, in))`.
/// The bias rides on the second (outer) layer. Conv layers pass through
/// untouched; a network with no dense layer is returned unchanged with a
/// warning on stderr.
pub fn svd_compress(net: &Network, rank_fraction: f64) -> Result<Network> {
    if !(rank_fraction > 0.0 && rank_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "rank fraction must be in (0, 1], got {rank_fraction}"
        )));
    }
    if !net
        .layers()
        .iter()
        .any(|l| matches!(l, LayerSpec::Dense { .. }))
    {
        eprintln!("svd_compress: no dense layers to factorize; returning the model unchanged");
        return Ok(net.clone());
    }

    let mut layers = Vec::new();
    let mut weights: Vec<Option<Tensor>> = Vec::new();
    let mut biases: Vec<Option<Tensor>> = Vec::new();
    for (i, spec) in net.layers().iter().enumerate() {
        match spec {
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                let (m, n) = (*out_features, *in_features);
                let k = ((rank_fraction * m.min(n) as f64).ceil() as usize).clamp(1, m.min(n));
                let w = net.weight(i).unwrap();
                let w64: Vec<f64> = w.data().iter().map(|&v| f64::from(v)).collect();
                let decomposition = svd(&w64, m, n);
                let (first, second) = decomposition.low_rank_factors(k);
                let first32: Vec<f32> = first.iter().map(|&v| v as f32).collect();
                let second32: Vec<f32> = second.iter().map(|&v| v as f32).collect();

                layers.push(LayerSpec::Dense {
                    in_features: n,
                    out_features: k,
                });
                weights.push(Some(Tensor::from_slice(&[k, n], &first32)?));
                biases.push(Some(Tensor::zeros(Shape::new(vec![k])?)));

                layers.push(LayerSpec::Dense {
                    in_features: k,
                    out_features: m,
                });
                weights.push(Some(Tensor::from_slice(&[m, k], &second32)?));
                biases.push(net.bias(i).cloned());
            }
            other => {
                layers.push(other.clone());
                weights.push(net.weight(i).cloned());
                biases.push(net.bias(i).cloned());
            }
        }
    }
    let mask = all_keep_mask(&layers, net.protect_classifier());
    Network::from_parts(
        net.input_shape().clone(),
        layers,
        weights,
        biases,
        mask,
        net.protect_classifier(),
        net.seed(),
    )
}

pub struct SvdStrategy {
    cfg: BaselineConfig,
}

impl SvdStrategy {
    pub fn new(cfg: BaselineConfig) -> Self {
        SvdStrategy { cfg }
    }
}

impl Strategy for SvdStrategy {
    fn name(&self) -> &'static str {
        "svd"
    }

    fn adapt(
        &self,
        source: &Network,
        target_train: &LabeledDataset,
        _eval: &LabeledDataset,
    ) -> Result<AdaptOutcome> {
        let network = svd_compress(source, self.cfg.rank_fraction)?;
        Ok(AdaptOutcome {
            sparsity: network.mask().sparsity(),
            adapt_macs: svd_macs(source),
            memory_units: estimate_memory(
                MemoryMethod::Svd,
                target_train.len() as u64,
                &activation_widths(source),
            ),
            sweep: None,
            network,
        })
    }
}
