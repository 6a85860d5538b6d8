//! Synthetic Gaussian-cluster classification tasks.
//!
//! K class centers sit on a sphere; samples are isotropic Gaussian draws
//! around their center. In moderate dimension the centers are roughly
//! equidistant, so any two classes stay far easier to tell apart than all K
//! at once. That is the regime personalization exploits: a model trained on
//! all K classes carries plenty of capacity that a two-class user never
//! needs. Everything is determined by a 64-bit seed.

use crate::data::{LabeledDataset, Provenance};
use crate::error::{Error, Result};
use crate::rng::{sub_seed, Rng};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct ClusterTask {
    centers: Vec<Vec<f64>>,
    noise: f64,
    dim: usize,
}

impl ClusterTask {
    /// Lay out `classes` centers uniformly on the sphere of radius
    /// `center_radius`, with per-coordinate sample noise `noise`.
    pub fn new(classes: usize, dim: usize, center_radius: f64, noise: f64, seed: u64) -> Self {
        assert!(
            classes >= 2 && dim >= 1,
            "need at least two classes in one dimension"
        );
        let mut rng = Rng::new(sub_seed(seed, "cluster-centers"));
        let centers = (0..classes)
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.iter().map(|x| x / norm * center_radius).collect()
            })
            .collect();
        ClusterTask {
            centers,
            noise,
            dim,
        }
    }

    pub fn classes(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, class: usize, rng: &mut Rng) -> Tensor {
        let center = &self.centers[class];
        let data: Vec<f32> = center
            .iter()
            .map(|&c| (c + self.noise * rng.normal()) as f32)
            .collect();
        Tensor::vector(data).expect("dim >= 1")
    }

    /// Draw `per_class` samples for each listed class (all classes when
    /// `classes` is `None`). Labels keep their original class indices, so a
    /// two-class subset still evaluates against the full K-way label space.
    pub fn dataset(
        &self,
        per_class: usize,
        classes: Option<&[usize]>,
        provenance: Provenance,
        seed: u64,
    ) -> Result<LabeledDataset> {
        let all: Vec<usize> = (0..self.classes()).collect();
        let chosen = classes.unwrap_or(&all);
        if chosen.iter().any(|&c| c >= self.classes()) {
            return Err(Error::InvalidArgument(format!(
                "class index out of range for {} classes",
                self.classes()
            )));
        }
        let mut rng = Rng::new(sub_seed(seed, "cluster-samples"));
        let mut samples = Vec::with_capacity(per_class * chosen.len());
        for _ in 0..per_class {
            for &c in chosen {
                samples.push((self.sample(c, &mut rng), c));
            }
        }
        LabeledDataset::new(samples, self.classes(), provenance)
    }

    /// Seeded choice of `k` distinct classes: the "individual" a model is
    /// personalized for.
    pub fn pick_classes(&self, k: usize, seed: u64) -> Vec<usize> {
        let mut rng = Rng::new(sub_seed(seed, "individual-classes"));
        let mut picks = rng.sample_distinct(self.classes(), k);
        picks.sort_unstable();
        picks
    }
}

/// Fixed per-individual affine input transform, emulating user-specific
/// sensor shift on top of the class subset.
#[derive(Debug, Clone)]
pub struct Perturbation {
    scale: Vec<f32>,
    shift: Vec<f32>,
}

impl Perturbation {
    pub fn seeded(dim: usize, magnitude: f64, seed: u64) -> Self {
        let mut rng = Rng::new(sub_seed(seed, "individual-perturbation"));
        let scale = (0..dim)
            .map(|_| (1.0 + magnitude * rng.uniform(-1.0, 1.0)) as f32)
            .collect();
        let shift = (0..dim)
            .map(|_| (magnitude * rng.uniform(-1.0, 1.0)) as f32)
            .collect();
        Perturbation { scale, shift }
    }

    pub fn apply(&self, x: &Tensor) -> Tensor {
        let data: Vec<f32> = x
            .data()
            .iter()
            .zip(self.scale.iter().zip(&self.shift))
            .map(|(&v, (&a, &b))| a * v + b)
            .collect();
        Tensor::new(x.shape().clone(), data).expect("shape unchanged")
    }

    pub fn apply_dataset(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        let samples = data.iter().map(|(x, y)| (self.apply(x), y)).collect();
        LabeledDataset::new(samples, data.class_count(), data.provenance())
    }
}
