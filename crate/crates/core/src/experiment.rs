//! The desk-scale studies: sparsity-accuracy curves, data efficiency against
//! gradient fine-tuning, and the class-count trend, all over the synthetic
//! cluster task with k-fold cross-validation and CSV report emission.
//!
//! Every run is fully determined by `ExperimentConfig::seed`: data draws,
//! weight initialization, fold splits, and epoch shuffles all derive from it
//! through tagged sub-seeds, and report rows sort before emission, so a rerun
//! with the same flags reproduces the output byte for byte.

use crate::data::{kfold, Fold, LabeledDataset, Provenance};
use crate::error::{Error, Result};
use crate::ledger::ActivationLedger;
use crate::metrics::{
    activation_widths, backward_macs, estimate_memory, evaluate_accuracy, forward_macs,
    MemoryMethod,
};
use crate::net::{LayerSpec, Network};
use crate::prune::{coarse_grid, refinement_grid, sweep, PruneMask, SweepEntry};
use crate::report::{ExperimentReport, ReportRow};
use crate::rng::sub_seed;
use crate::strategy::{finetune_backprop, TrainConfig};
use crate::synth::{ClusterTask, Perturbation};
use crate::tensor::Shape;

/// Everything a study run needs. Defaults reproduce the standard task: an
/// 8-class source in 32 dimensions with heavily crowded clusters, a wide
/// single-hidden-layer MLP, and a 2-class target individual. One hidden
/// layer keeps the global score threshold meaningful; stacked relu layers
/// run at systematically different activation scales, which would let the
/// threshold drain one layer before touching the next.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub folds: usize,
    pub source_classes: usize,
    pub input_dim: usize,
    pub source_per_class: usize,
    pub target_per_class: usize,
    pub center_radius: f64,
    pub noise: f64,
    pub hidden: Vec<usize>,
    pub source_train: TrainConfig,
    pub finetune: TrainConfig,
    /// Grid step for the sparsity-curve experiment.
    pub grid_step: f64,
    /// Classes per target individual.
    pub target_classes: usize,
    /// Optional per-individual affine input perturbation magnitude.
    pub perturb: Option<f64>,
    /// Target-data fractions for the data-efficiency experiment.
    pub fractions: Vec<f64>,
    /// Target class counts for the class-count experiment (empty: derived as
    /// 2..=min(9, K-1)).
    pub class_counts: Vec<usize>,
    /// Samples per class for class-count targets.
    pub class_count_per_class: usize,
    /// Add a control row at the full source class count to the class-count
    /// experiment. Pruning buys little there (the target matches the source
    /// distribution); the row documents that expectation without asserting it.
    pub include_control: bool,
}

impl ExperimentConfig {
    pub fn with_seed(seed: u64) -> Self {
        ExperimentConfig {
            seed,
            folds: 5,
            source_classes: 8,
            input_dim: 32,
            source_per_class: 250,
            target_per_class: 500,
            center_radius: 1.0,
            noise: 0.45,
            hidden: vec![64],
            source_train: TrainConfig {
                learning_rate: 1e-2,
                batch_size: 64,
                epochs: 30,
            },
            finetune: TrainConfig::default(),
            grid_step: 0.02,
            target_classes: 2,
            perturb: None,
            fractions: (1..=10).map(|i| i as f64 / 10.0).collect(),
            class_counts: Vec::new(),
            class_count_per_class: 120,
            include_control: true,
        }
    }

    /// Class-count study configuration: a 9-class source so the counts 2..=8
    /// all stay proper subsets.
    pub fn class_count_with_seed(seed: u64) -> Self {
        ExperimentConfig {
            source_classes: 9,
            ..Self::with_seed(seed)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidArgument("need at least 2 folds".into()));
        }
        if self.target_classes < 2 || self.target_classes > self.source_classes {
            return Err(Error::InvalidArgument(format!(
                "target class count {} out of range for {} source classes",
                self.target_classes, self.source_classes
            )));
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 0.5) {
            return Err(Error::InvalidArgument(format!(
                "grid step {} out of range",
                self.grid_step
            )));
        }
        if self.fractions.is_empty() || self.fractions.iter().any(|&f| f <= 0.0 || f > 1.0) {
            return Err(Error::InvalidArgument(
                "data fractions must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// The sparsity grid: 0 to 0.96 in `grid_step` increments.
    pub fn sparsity_grid(&self) -> Vec<f64> {
        let mut grid = Vec::new();
        let mut i = 0usize;
        loop {
            let t = ((i as f64 * self.grid_step) * 1e6).round() / 1e6;
            if t > 0.96 {
                break;
            }
            grid.push(t);
            i += 1;
        }
        grid
    }

    fn class_count_values(&self) -> Vec<usize> {
        let mut counts = if self.class_counts.is_empty() {
            (2..=9.min(self.source_classes.saturating_sub(1))).collect()
        } else {
            self.class_counts.clone()
        };
        if self.include_control && !counts.contains(&self.source_classes) {
            counts.push(self.source_classes);
        }
        counts
    }
}

/// Dense relu stack: input -> hidden... -> classes.
pub fn mlp_layers(input_dim: usize, hidden: &[usize], classes: usize) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    let mut prev = input_dim;
    for &h in hidden {
        layers.push(LayerSpec::Dense {
            in_features: prev,
            out_features: h,
        });
        layers.push(LayerSpec::Relu);
        prev = h;
    }
    layers.push(LayerSpec::Dense {
        in_features: prev,
        out_features: classes,
    });
    layers
}

/// Train a fresh model on labeled data (the source-training entry point; the
/// same gradient path as the fine-tuning baseline).
pub fn train_source(
    net: &Network,
    source: &LabeledDataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Network> {
    finetune_backprop(net, source, cfg, seed).map(|(model, _)| model)
}

/// A built study: the task, the trained source model, and the target
/// individual's data.
#[derive(Debug, Clone)]
pub struct Study {
    pub task: ClusterTask,
    pub source: Network,
    pub target: LabeledDataset,
    pub target_classes: Vec<usize>,
    pub folds: Vec<Fold>,
}

/// Generate the task, train the source model on all classes, and draw the
/// target individual's samples (a seeded class subset, optionally passed
/// through a per-individual affine perturbation).
pub fn build_study(cfg: &ExperimentConfig) -> Result<Study> {
    cfg.validate()?;
    let task = ClusterTask::new(
        cfg.source_classes,
        cfg.input_dim,
        cfg.center_radius,
        cfg.noise,
        cfg.seed,
    );
    let source_data = task.dataset(
        cfg.source_per_class,
        None,
        Provenance::Source,
        sub_seed(cfg.seed, "source-data"),
    )?;
    let init = Network::new(
        Shape::new(vec![cfg.input_dim])?,
        mlp_layers(cfg.input_dim, &cfg.hidden, cfg.source_classes),
        sub_seed(cfg.seed, "source-init"),
    )?;
    let source = train_source(
        &init,
        &source_data,
        &cfg.source_train,
        sub_seed(cfg.seed, "source-train"),
    )?;

    let target_classes = task.pick_classes(cfg.target_classes, sub_seed(cfg.seed, "individual"));
    let mut target = task.dataset(
        cfg.target_per_class,
        Some(&target_classes),
        Provenance::Target,
        sub_seed(cfg.seed, "target-data"),
    )?;
    if let Some(magnitude) = cfg.perturb {
        let p = Perturbation::seeded(cfg.input_dim, magnitude, sub_seed(cfg.seed, "individual"));
        target = p.apply_dataset(&target)?;
    }
    let folds = kfold(target.len(), cfg.folds, sub_seed(cfg.seed, "folds"))?;
    Ok(Study {
        task,
        source,
        target,
        target_classes,
        folds,
    })
}

/// Per-fold outcome of a sparsity sweep.
#[derive(Debug, Clone)]
pub struct FoldCurve {
    pub fold: usize,
    /// Source-model accuracy on this fold's eval partition.
    pub baseline_accuracy: f64,
    pub entries: Vec<SweepEntry>,
    pub selected: SweepEntry,
    pub selected_mask: PruneMask,
    /// Total adaptation MACs: ledger recording plus sweep evaluations.
    pub adapt_macs: u64,
}

/// Run the full sparsity sweep on every fold of a built study.
pub fn sparsity_curve_folds(cfg: &ExperimentConfig, study: &Study) -> Result<Vec<FoldCurve>> {
    let grid = cfg.sparsity_grid();
    let per_forward = forward_macs(&study.source);
    let mut out = Vec::with_capacity(study.folds.len());
    for (fold_idx, fold) in study.folds.iter().enumerate() {
        let train = study.target.subset(&fold.train_indices)?;
        let eval = study.target.subset(&fold.eval_indices)?;
        let mut ledger = ActivationLedger::for_network(&study.source);
        ledger.record_all(&study.source, train.inputs())?;
        let result = sweep(&study.source, &ledger, &eval, &grid)?;
        let baseline = evaluate_accuracy(&study.source, &eval)?;
        let adapt_macs = per_forward * (train.len() as u64 + (grid.len() * eval.len()) as u64);
        out.push(FoldCurve {
            fold: fold_idx,
            baseline_accuracy: baseline,
            entries: result.entries.clone(),
            selected: result.selected().clone(),
            selected_mask: result.selected_mask.clone(),
            adapt_macs,
        });
    }
    Ok(out)
}

/// Sparsity-accuracy study: one row per fold per grid point.
pub fn experiment_sparsity_curve(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let study = build_study(cfg)?;
    let curves = sparsity_curve_folds(cfg, &study)?;
    let widths = activation_widths(&study.source);
    let mut report = ExperimentReport::new();
    for curve in &curves {
        let train_len = study.folds[curve.fold].train_indices.len() as u64;
        for e in &curve.entries {
            report.push(ReportRow {
                experiment: "sparsity".into(),
                method: "fine-prune".into(),
                fold: curve.fold,
                sparsity: e.achieved_sparsity,
                target_accuracy: e.accuracy,
                source_accuracy: curve.baseline_accuracy,
                macs: curve.adapt_macs,
                memory: estimate_memory(MemoryMethod::FinePruning, train_len, &widths),
                seed: cfg.seed,
            });
        }
    }
    Ok(report)
}

/// Per-fold, per-fraction outcome of the data-efficiency comparison.
#[derive(Debug, Clone)]
pub struct DataEfficiencyPoint {
    pub fold: usize,
    pub fraction: f64,
    pub baseline_accuracy: f64,
    pub fine_prune_accuracy: f64,
    pub fine_prune_sparsity: f64,
    pub finetune_accuracy: f64,
    pub fine_prune_macs: u64,
    pub finetune_macs: u64,
    pub subset_len: usize,
}

/// For each target-data fraction, adapt with the ledger sweep (unlabeled) and
/// with gradient fine-tuning (labeled) on the same subset, measuring both on
/// the fold's eval partition. Subsets are nested across fractions.
pub fn data_efficiency_folds(
    cfg: &ExperimentConfig,
    study: &Study,
) -> Result<Vec<DataEfficiencyPoint>> {
    let per_forward = forward_macs(&study.source);
    let per_backward = backward_macs(&study.source);
    let mut out = Vec::new();
    for (fold_idx, fold) in study.folds.iter().enumerate() {
        let train = study.target.subset(&fold.train_indices)?;
        let eval = study.target.subset(&fold.eval_indices)?;
        let baseline = evaluate_accuracy(&study.source, &eval)?;
        let subset_seed = sub_seed(cfg.seed, &format!("data-fraction-fold-{fold_idx}"));
        for &fraction in &cfg.fractions {
            let subset = train.fraction(fraction, subset_seed)?;

            let mut ledger = ActivationLedger::for_network(&study.source);
            ledger.record_all(&study.source, subset.inputs())?;
            let coarse = sweep(&study.source, &ledger, &eval, &coarse_grid())?;
            let fine_points = refinement_grid(coarse.selected().target_sparsity);
            let fine = sweep(&study.source, &ledger, &eval, &fine_points)?;
            let fp_evals = (coarse_grid().len() + fine_points.len()) * eval.len();
            let fp_macs = per_forward * (subset.len() as u64 + fp_evals as u64);

            let (tuned, _) = finetune_backprop(
                &study.source,
                &subset,
                &cfg.finetune,
                sub_seed(cfg.seed, &format!("finetune-fold-{fold_idx}")),
            )?;
            let ft_accuracy = evaluate_accuracy(&tuned, &eval)?;
            let ft_macs =
                (per_forward + per_backward) * (subset.len() * cfg.finetune.epochs) as u64;

            out.push(DataEfficiencyPoint {
                fold: fold_idx,
                fraction,
                baseline_accuracy: baseline,
                fine_prune_accuracy: fine.selected().accuracy,
                fine_prune_sparsity: fine.selected().achieved_sparsity,
                finetune_accuracy: ft_accuracy,
                fine_prune_macs: fp_macs,
                finetune_macs: ft_macs,
                subset_len: subset.len(),
            });
        }
    }
    Ok(out)
}

/// Data-efficiency study: for each fraction, one fine-prune row and one
/// finetune row per fold. The fraction rides in the experiment id.
pub fn experiment_data_efficiency(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let study = build_study(cfg)?;
    let points = data_efficiency_folds(cfg, &study)?;
    let widths = activation_widths(&study.source);
    let mut report = ExperimentReport::new();
    for p in &points {
        let experiment = format!("data-efficiency@f={:.2}", p.fraction);
        report.push(ReportRow {
            experiment: experiment.clone(),
            method: "fine-prune".into(),
            fold: p.fold,
            sparsity: p.fine_prune_sparsity,
            target_accuracy: p.fine_prune_accuracy,
            source_accuracy: p.baseline_accuracy,
            macs: p.fine_prune_macs,
            memory: estimate_memory(MemoryMethod::FinePruning, p.subset_len as u64, &widths),
            seed: cfg.seed,
        });
        report.push(ReportRow {
            experiment,
            method: "finetune".into(),
            fold: p.fold,
            sparsity: 0.0,
            target_accuracy: p.finetune_accuracy,
            source_accuracy: p.baseline_accuracy,
            macs: p.finetune_macs,
            memory: estimate_memory(MemoryMethod::Backprop, p.subset_len as u64, &widths),
            seed: cfg.seed,
        });
    }
    Ok(report)
}

/// Per-fold outcome for one target class count.
#[derive(Debug, Clone)]
pub struct ClassCountPoint {
    pub class_count: usize,
    pub fold: usize,
    pub baseline_accuracy: f64,
    pub best_accuracy: f64,
    pub selected_sparsity: f64,
    pub adapt_macs: u64,
    pub train_len: usize,
}

/// Sweep-select per fold for target individuals of increasing class counts,
/// sharing one source model trained on all classes.
pub fn class_count_folds(cfg: &ExperimentConfig) -> Result<(Study, Vec<ClassCountPoint>)> {
    cfg.validate()?;
    // The study's own target individual is unused here; counts build their own.
    let study = build_study(cfg)?;
    let per_forward = forward_macs(&study.source);
    let mut out = Vec::new();
    for count in cfg.class_count_values() {
        if count < 2 || count > study.task.classes() {
            return Err(Error::InvalidArgument(format!(
                "class count {count} out of range for {} classes",
                study.task.classes()
            )));
        }
        let classes = study
            .task
            .pick_classes(count, sub_seed(cfg.seed, &format!("individual-k{count}")));
        let target = study.task.dataset(
            cfg.class_count_per_class,
            Some(&classes),
            Provenance::Target,
            sub_seed(cfg.seed, &format!("target-k{count}")),
        )?;
        let folds = kfold(
            target.len(),
            cfg.folds,
            sub_seed(cfg.seed, &format!("folds-k{count}")),
        )?;
        for (fold_idx, fold) in folds.iter().enumerate() {
            let train = target.subset(&fold.train_indices)?;
            let eval = target.subset(&fold.eval_indices)?;
            let mut ledger = ActivationLedger::for_network(&study.source);
            ledger.record_all(&study.source, train.inputs())?;
            let coarse = sweep(&study.source, &ledger, &eval, &coarse_grid())?;
            let fine_points = refinement_grid(coarse.selected().target_sparsity);
            let fine = sweep(&study.source, &ledger, &eval, &fine_points)?;
            let evals = (coarse_grid().len() + fine_points.len()) * eval.len();
            out.push(ClassCountPoint {
                class_count: count,
                fold: fold_idx,
                baseline_accuracy: evaluate_accuracy(&study.source, &eval)?,
                best_accuracy: fine.selected().accuracy,
                selected_sparsity: fine.selected().achieved_sparsity,
                adapt_macs: per_forward * (train.len() + evals) as u64,
                train_len: train.len(),
            });
        }
    }
    Ok((study, out))
}

/// Class-count study: best sweep accuracy per fold for each target class
/// count. The count rides in the experiment id.
pub fn experiment_class_count(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let (study, points) = class_count_folds(cfg)?;
    let widths = activation_widths(&study.source);
    let mut report = ExperimentReport::new();
    for p in &points {
        report.push(ReportRow {
            experiment: format!("class-count@k={}", p.class_count),
            method: "fine-prune".into(),
            fold: p.fold,
            sparsity: p.selected_sparsity,
            target_accuracy: p.best_accuracy,
            source_accuracy: p.baseline_accuracy,
            macs: p.adapt_macs,
            memory: estimate_memory(MemoryMethod::FinePruning, p.train_len as u64, &widths),
            seed: cfg.seed,
        });
    }
    Ok(report)
}
