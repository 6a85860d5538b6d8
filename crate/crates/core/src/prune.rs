//! The pruning operator and the sparsity sweep that selects the target model.
//!
//! Pruning drops whole units (dense neurons, conv channels) whose ledger
//! scores fall below a threshold, zeroing their outgoing weights and bias.
//! Surviving weights are never touched, so every pruned model is a strict
//! subset of its source. Sparsity is measured in weights, not units, so conv
//! channels with many weights count proportionally.
//!
//! Sweep grid points are independent given the frozen ledger and source
//! network; scores are computed and sorted once, so walking the grid is cheap.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::ledger::{ActivationLedger, UnitScore};
use crate::metrics::evaluate_accuracy;
use crate::net::Network;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Keep/drop flags for one prunable layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerMask {
    pub layer_index: usize,
    pub keep: Vec<bool>,
    pub weights_per_unit: usize,
}

/// Boolean keep/drop state per prunable unit, with weight-exact sparsity
/// accounting. Applying a mask twice equals applying it once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneMask {
    layers: Vec<LayerMask>,
}

impl PruneMask {
    pub fn new(layers: Vec<LayerMask>) -> Self {
        PruneMask { layers }
    }

    pub fn layers(&self) -> &[LayerMask] {
        &self.layers
    }

    /// Layer mask addressed by network layer index.
    pub fn layer(&self, layer_index: usize) -> Option<&LayerMask> {
        self.layers.iter().find(|l| l.layer_index == layer_index)
    }

    pub fn layer_mut(&mut self, layer_index: usize) -> Option<&mut LayerMask> {
        self.layers
            .iter_mut()
            .find(|l| l.layer_index == layer_index)
    }

    pub fn total_prunable_weights(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| (l.keep.len() * l.weights_per_unit) as u64)
            .sum()
    }

    pub fn dropped_weights(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| (l.keep.iter().filter(|&&k| !k).count() * l.weights_per_unit) as u64)
            .sum()
    }

    /// Dropped prunable weights over total prunable weights. The division is
    /// the only floating-point step.
    pub fn sparsity(&self) -> f64 {
        let total = self.total_prunable_weights();
        if total == 0 {
            return 0.0;
        }
        self.dropped_weights() as f64 / total as f64
    }

    pub fn is_all_keep(&self) -> bool {
        self.layers.iter().all(|l| l.keep.iter().all(|&k| k))
    }

    /// (layer_index, unit_index) of every dropped unit.
    pub fn dropped_units(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for l in &self.layers {
            for (u, &keep) in l.keep.iter().enumerate() {
                if !keep {
                    out.push((l.layer_index, u));
                }
            }
        }
        out
    }

    /// True when every unit this mask drops is also dropped by `other`.
    pub fn drops_subset_of(&self, other: &PruneMask) -> bool {
        self.dropped_units()
            .iter()
            .all(|&(l, u)| other.layer(l).map(|lm| !lm.keep[u]).unwrap_or(false))
    }
}

/// Score threshold that drops the largest weight fraction not exceeding
/// `target_sparsity` under the rule "drop every unit with score below sigma".
/// Candidate thresholds are walked over the sorted distinct scores (ties
/// resolved by ascending (layer_index, unit_index) during the sort); fraction
/// ties resolve to the smallest sigma, so a target of zero lands below the
/// minimum score.
///
/// `scores` must be non-empty.
pub fn threshold_for_sparsity(scores: &[UnitScore], target_sparsity: f64) -> f64 {
    assert!(
        !scores.is_empty(),
        "threshold_for_sparsity needs at least one score"
    );
    let target = target_sparsity.clamp(0.0, 1.0);
    let mut sorted: Vec<&UnitScore> = scores.iter().collect();
    sorted.sort_by(|a, b| {
        a.score
            .partial_cmp(&b.score)
            .unwrap()
            .then(a.layer_index.cmp(&b.layer_index))
            .then(a.unit_index.cmp(&b.unit_index))
    });
    let total: u64 = sorted.iter().map(|s| s.weight_count as u64).sum();
    let min_score = sorted.first().unwrap().score;
    let max_score = sorted.last().unwrap().score;

    // Candidate below every score: drops nothing.
    let mut best_sigma = if min_score > 0.0 {
        min_score / 2.0
    } else {
        -1.0
    };
    let mut best_dropped = 0u64;

    let mut dropped = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        // `dropped` tallies every unit strictly below this candidate.
        let candidate = sorted[i].score;
        if dropped > best_dropped && dropped as f64 / total as f64 <= target {
            best_dropped = dropped;
            best_sigma = candidate;
        }
        // Advance over the whole tie group.
        while i < sorted.len() && sorted[i].score == candidate {
            dropped += sorted[i].weight_count as u64;
            i += 1;
        }
    }
    // Sentinel above the maximum: drops everything.
    if dropped > best_dropped && dropped as f64 / total as f64 <= target {
        best_sigma = max_score + 1.0;
    }
    best_sigma
}

/// Drop every unit whose ledger score falls below `sigma`. Dropped units'
/// outgoing weights and bias are set exactly to zero; all other weights are
/// bit-identical to the source. Units already dropped in the source mask stay
/// dropped. No layer is ever left without at least one surviving unit: when a
/// threshold would empty a layer, its best-scoring surviving unit (ties to
/// the lowest index) is retained.
pub fn prune(sigma: f64, net: &Network, ledger: &ActivationLedger) -> Result<(Network, PruneMask)> {
    ledger.check_topology(net)?;
    let scores = ledger.scores()?;
    let mask = mask_for_sigma(net, &scores, sigma);
    let mut pruned = net.clone();
    pruned.apply_mask(&mask)?;
    Ok((pruned, mask))
}

/// Threshold for a target, or a no-op threshold when the network has no
/// prunable units at all (e.g. a lone protected classifier layer).
fn threshold_or_noop(scores: &[UnitScore], target: f64) -> f64 {
    if scores.is_empty() {
        0.0
    } else {
        threshold_for_sparsity(scores, target)
    }
}

fn mask_for_sigma(net: &Network, scores: &[UnitScore], sigma: f64) -> PruneMask {
    let mut mask = net.mask().clone();
    for pl in net.prunable_layers() {
        let layer_scores: Vec<&UnitScore> = scores
            .iter()
            .filter(|s| s.layer_index == pl.layer_index)
            .collect();
        let lm = mask
            .layer_mut(pl.layer_index)
            .expect("mask covers prunable layers");
        for s in &layer_scores {
            if s.score < sigma {
                lm.keep[s.unit_index] = false;
            }
        }
        if lm.keep.iter().all(|&k| !k) {
            // Survival guard: keep the best-scoring unit the source mask kept.
            let source_keep = net.mask().layer(pl.layer_index).unwrap();
            let mut best: Option<(f64, usize)> = None;
            for s in &layer_scores {
                if !source_keep.keep[s.unit_index] {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((score, _)) => s.score > score,
                };
                if better {
                    best = Some((s.score, s.unit_index));
                }
            }
            let (_, unit) = best.expect("source mask keeps at least one unit per layer");
            lm.keep[unit] = true;
        }
    }
    mask
}

/// One evaluated grid point of a sparsity sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub target_sparsity: f64,
    pub achieved_sparsity: f64,
    pub accuracy: f64,
    /// Threshold that produced this point; pruning again with it reproduces
    /// the same mask.
    pub sigma: f64,
}

/// Accuracy measured across a sparsity grid, with the selected best point.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
    pub selected_index: usize,
    pub selected_mask: PruneMask,
}

impl SweepResult {
    pub fn selected(&self) -> &SweepEntry {
        &self.entries[self.selected_index]
    }

    pub fn selected_sparsity(&self) -> f64 {
        self.selected().achieved_sparsity
    }

    /// CSV with sparsity and accuracy columns.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "sparsity,accuracy")?;
        for e in &self.entries {
            writeln!(w, "{:.6},{:.6}", e.achieved_sparsity, e.accuracy)?;
        }
        Ok(())
    }
}

/// Evaluate target accuracy across `grid` and select the best mask. Labels
/// are read only here, for measurement; the pruning itself never sees them.
/// Selection takes the maximum accuracy, ties to the lowest sparsity.
pub fn sweep(
    net: &Network,
    ledger: &ActivationLedger,
    eval: &LabeledDataset,
    grid: &[f64],
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("sweep grid is empty".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) || grid.iter().any(|&g| !(0.0..=1.0).contains(&g)) {
        return Err(Error::InvalidArgument(
            "sweep grid must be strictly increasing within [0, 1]".into(),
        ));
    }
    ledger.check_topology(net)?;
    let scores = ledger.scores()?;
    let mut entries = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, PruneMask)> = None;
    for (i, &target) in grid.iter().enumerate() {
        let sigma = threshold_or_noop(&scores, target);
        let mask = mask_for_sigma(net, &scores, sigma);
        let mut candidate = net.clone();
        candidate.apply_mask(&mask)?;
        let accuracy = evaluate_accuracy(&candidate, eval)?;
        entries.push(SweepEntry {
            target_sparsity: target,
            achieved_sparsity: mask.sparsity(),
            accuracy,
            sigma,
        });
        let is_better = match &best {
            None => true,
            // Strictly better accuracy only: grid order is ascending sparsity,
            // so ties keep the earlier (less pruned) point.
            Some((idx, _)) => accuracy > entries[*idx].accuracy,
        };
        if is_better {
            best = Some((i, mask));
        }
    }
    let (selected_index, selected_mask) = best.expect("non-empty grid");
    Ok(SweepResult {
        entries,
        selected_index,
        selected_mask,
    })
}

/// Default coarse grid: 0 to 0.95 in steps of 0.05.
pub fn coarse_grid() -> Vec<f64> {
    (0..=19).map(|i| i as f64 * 0.05).collect()
}

/// Fine grid in steps of 0.01 spanning one coarse step either side of
/// `center`.
pub fn refinement_grid(center: f64) -> Vec<f64> {
    let lo = (center - 0.05).max(0.0);
    let hi = (center + 0.05).min(0.99);
    let mut grid = Vec::new();
    let mut t = lo;
    while t <= hi + 1e-9 {
        grid.push((t * 100.0).round() / 100.0);
        t += 0.01;
    }
    grid.dedup();
    grid
}

/// Coarse sweep, then a fine sweep around the best coarse point. Accuracy
/// falls off sharply past the peak, so the refinement matters there.
pub fn sweep_with_refinement(
    net: &Network,
    ledger: &ActivationLedger,
    eval: &LabeledDataset,
) -> Result<SweepResult> {
    let coarse = sweep(net, ledger, eval, &coarse_grid())?;
    sweep(
        net,
        ledger,
        eval,
        &refinement_grid(coarse.selected().target_sparsity),
    )
}

/// Prune with externally supplied unit scores instead of a ledger: the
/// threshold selection, survival guard, and mask bookkeeping are identical.
/// The data-free controls (magnitude, random) route through here.
pub fn prune_by_scores(
    net: &Network,
    scores: &[UnitScore],
    target_sparsity: f64,
) -> Result<(Network, PruneMask)> {
    let prunable = net.prunable_layers();
    let expected: usize = prunable.iter().map(|p| p.unit_count).sum();
    if scores.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "{} scores supplied for {} prunable units",
            scores.len(),
            expected
        )));
    }
    let sigma = threshold_or_noop(scores, target_sparsity);
    let mask = mask_for_sigma(net, scores, sigma);
    let mut pruned = net.clone();
    pruned.apply_mask(&mask)?;
    Ok((pruned, mask))
}

/// Index of the stopping point under the build-up rule: walk the series in
/// order and stop at the first strict decrease, returning the previous index;
/// ties are non-decreases, so a flat series runs to the final point.
pub fn ramp_stop(series: &[f64]) -> usize {
    for i in 1..series.len() {
        if series[i] < series[i - 1] {
            return i - 1;
        }
    }
    series.len().saturating_sub(1)
}

/// Build sparsity up from zero in `step` increments and stop after the first
/// observed accuracy decrease, returning the last non-decreasing point.
pub fn safe_ramp(
    net: &Network,
    ledger: &ActivationLedger,
    eval: &LabeledDataset,
    step: f64,
) -> Result<SweepResult> {
    if !(step > 0.0 && step <= 0.1) {
        return Err(Error::InvalidArgument(format!(
            "ramp step must be in (0, 0.1], got {step}"
        )));
    }
    ledger.check_topology(net)?;
    let scores = ledger.scores()?;
    let mut entries: Vec<SweepEntry> = Vec::new();
    let mut masks: Vec<PruneMask> = Vec::new();
    let mut k = 0usize;
    loop {
        let target = (k as f64 * step).min(1.0);
        let sigma = threshold_or_noop(&scores, target);
        let mask = mask_for_sigma(net, &scores, sigma);
        let mut candidate = net.clone();
        candidate.apply_mask(&mask)?;
        let accuracy = evaluate_accuracy(&candidate, eval)?;
        entries.push(SweepEntry {
            target_sparsity: target,
            achieved_sparsity: mask.sparsity(),
            accuracy,
            sigma,
        });
        masks.push(mask);
        let n = entries.len();
        if n >= 2 && entries[n - 1].accuracy < entries[n - 2].accuracy {
            break;
        }
        if target >= 1.0 {
            break;
        }
        k += 1;
    }
    let series: Vec<f64> = entries.iter().map(|e| e.accuracy).collect();
    let selected_index = ramp_stop(&series);
    let selected_mask = masks.swap_remove(selected_index);
    Ok(SweepResult {
        entries,
        selected_index,
        selected_mask,
    })
}
