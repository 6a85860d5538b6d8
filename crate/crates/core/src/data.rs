//! Labeled sample collections and fold splitting.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Where a dataset's samples come from: the broad training distribution, or
/// the user-specific distribution a model is being specialized to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Source,
    Target,
}

/// A list of (input, class index) samples with a shared shape.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    samples: Vec<(Tensor, usize)>,
    class_count: usize,
    provenance: Provenance,
}

impl LabeledDataset {
    pub fn new(
        samples: Vec<(Tensor, usize)>,
        class_count: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("dataset has no samples".into()));
        }
        let shape = samples[0].0.shape().clone();
        for (i, (x, label)) in samples.iter().enumerate() {
            if x.shape() != &shape {
                return Err(Error::Dimension(format!(
                    "sample {i} has shape {}, expected {shape}",
                    x.shape()
                )));
            }
            if *label >= class_count {
                return Err(Error::InvalidArgument(format!(
                    "sample {i} label {label} out of range for {class_count} classes"
                )));
            }
        }
        Ok(LabeledDataset {
            samples,
            class_count,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn sample(&self, i: usize) -> (&Tensor, usize) {
        let (x, y) = &self.samples[i];
        (x, *y)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Tensor, usize)> {
        self.samples.iter().map(|(x, y)| (x, *y))
    }

    /// Label-free view: just the input tensors. This is the only view the
    /// ledger and pruning paths ever receive.
    pub fn inputs(&self) -> impl Iterator<Item = &Tensor> {
        self.samples.iter().map(|(x, _)| x)
    }

    /// New dataset holding the given sample indices, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<LabeledDataset> {
        if indices.is_empty() {
            return Err(Error::EmptyInput("subset selects no samples".into()));
        }
        let samples = indices.iter().map(|&i| self.samples[i].clone()).collect();
        LabeledDataset::new(samples, self.class_count, self.provenance)
    }

    /// The first `ceil(fraction * len)` samples of a seeded shuffle. Fractions
    /// are nested: a larger fraction with the same seed is a superset.
    pub fn fraction(&self, fraction: f64, seed: u64) -> Result<LabeledDataset> {
        if fraction <= 0.0 || fraction > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "data fraction must be in (0, 1], got {fraction}"
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        Rng::new(seed).shuffle(&mut order);
        let take = ((fraction * self.len() as f64).ceil() as usize).clamp(1, self.len());
        self.subset(&order[..take])
    }
}

/// One cross-validation fold: indices feeding the ledger (used unlabeled) and
/// indices held out for labeled accuracy measurement. The two never overlap.
#[derive(Debug, Clone)]
pub struct Fold {
    pub train_indices: Vec<usize>,
    pub eval_indices: Vec<usize>,
}

/// Seeded k-fold partition of `n` samples. Every sample lands in exactly one
/// eval fold.
pub fn kfold(n: usize, folds: usize, seed: u64) -> Result<Vec<Fold>> {
    if folds < 2 || folds > n {
        return Err(Error::InvalidArgument(format!(
            "fold count must be in [2, {n}], got {folds}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);
    let mut out = Vec::with_capacity(folds);
    for f in 0..folds {
        let lo = f * n / folds;
        let hi = (f + 1) * n / folds;
        let eval_indices: Vec<usize> = order[lo..hi].to_vec();
        let train_indices: Vec<usize> = order[..lo].iter().chain(&order[hi..]).copied().collect();
        out.push(Fold {
            train_indices,
            eval_indices,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn toy(n: usize) -> LabeledDataset {
        let samples = (0..n)
            .map(|i| (Tensor::vector(vec![i as f32]).unwrap(), i % 2))
            .collect();
        LabeledDataset::new(samples, 2, Provenance::Target).unwrap()
    }

    #[test]
    fn rejects_label_out_of_range() {
        let samples = vec![(Tensor::vector(vec![0.0]).unwrap(), 2)];
        assert!(LabeledDataset::new(samples, 2, Provenance::Source).is_err());
    }

    #[test]
    fn rejects_mixed_shapes() {
        let samples = vec![
            (Tensor::vector(vec![0.0]).unwrap(), 0),
            (Tensor::vector(vec![0.0, 1.0]).unwrap(), 1),
        ];
        assert!(LabeledDataset::new(samples, 2, Provenance::Source).is_err());
    }

    #[test]
    fn kfold_partitions_every_sample_once() {
        let folds = kfold(23, 5, 7).unwrap();
        let mut seen: Vec<usize> = folds.iter().flat_map(|f| f.eval_indices.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..23).collect::<Vec<_>>());
        for f in &folds {
            for i in &f.eval_indices {
                assert!(!f.train_indices.contains(i));
            }
            assert_eq!(f.train_indices.len() + f.eval_indices.len(), 23);
        }
    }

    #[test]
    fn kfold_is_seed_deterministic() {
        let a = kfold(40, 5, 3).unwrap();
        let b = kfold(40, 5, 3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.eval_indices, y.eval_indices);
        }
    }

    #[test]
    fn fraction_zero_is_an_error() {
        assert!(toy(10).fraction(0.0, 1).is_err());
    }

    #[test]
    fn fractions_are_nested() {
        let ds = toy(20);
        let small = ds.fraction(0.3, 9).unwrap();
        let large = ds.fraction(0.7, 9).unwrap();
        let ids = |d: &LabeledDataset| -> Vec<i64> {
            d.iter().map(|(x, _)| x.data()[0] as i64).collect()
        };
        let large_ids = ids(&large);
        for id in ids(&small) {
            assert!(large_ids.contains(&id));
        }
        assert_eq!(small.len(), 6);
        assert_eq!(large.len(), 14);
    }
}
