//! Experiment report rows and CSV emission.
//!
//! A report is append-only while a run produces rows; emission sorts by
//! (experiment, method, fold, sparsity) so the file bytes never depend on
//! completion order. Floats are written with a fixed six-decimal format for
//! the same reason.

use crate::error::{Error, Result};
use std::io::Write;

/// One measured configuration. `macs` is the total adaptation cost of the run
/// the row belongs to; `memory` is the method's symbolic peak-memory estimate
/// at the run's dataset size.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub experiment: String,
    pub method: String,
    pub fold: usize,
    pub sparsity: f64,
    pub target_accuracy: f64,
    pub source_accuracy: f64,
    pub macs: u64,
    pub memory: u128,
    pub seed: u64,
}

pub const CSV_HEADER: &str =
    "experiment,method,fold,sparsity,target_accuracy,source_accuracy,macs,memory,seed";

/// Append-only collection of report rows.
#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: ReportRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: ExperimentReport) {
        self.rows.extend(other.rows);
    }

    pub fn rows(&self) -> &[ReportRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn sorted_rows(&self) -> Vec<&ReportRow> {
        let mut rows: Vec<&ReportRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| {
            a.experiment
                .cmp(&b.experiment)
                .then(a.method.cmp(&b.method))
                .then(a.fold.cmp(&b.fold))
                .then(a.sparsity.total_cmp(&b.sparsity))
        });
        rows
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in self.sorted_rows() {
            writeln!(
                w,
                "{},{},{},{:.6},{:.6},{:.6},{},{},{}",
                r.experiment,
                r.method,
                r.fold,
                r.sparsity,
                r.target_accuracy,
                r.source_accuracy,
                r.macs,
                r.memory,
                r.seed
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("vec write cannot fail");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Parse a report CSV produced by [`ExperimentReport::write_csv`].
    pub fn from_csv(text: &str) -> Result<ExperimentReport> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == CSV_HEADER => {}
            other => {
                return Err(Error::Parse(format!(
                    "expected report header {CSV_HEADER:?}, found {other:?}"
                )))
            }
        }
        let mut report = ExperimentReport::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(Error::Parse(format!(
                    "report line {}: expected 9 fields, found {}",
                    i + 2,
                    f.len()
                )));
            }
            let parse_err = |what: &str| Error::Parse(format!("report line {}: bad {what}", i + 2));
            report.push(ReportRow {
                experiment: f[0].to_string(),
                method: f[1].to_string(),
                fold: f[2].parse().map_err(|_| parse_err("fold"))?,
                sparsity: f[3].parse().map_err(|_| parse_err("sparsity"))?,
                target_accuracy: f[4].parse().map_err(|_| parse_err("target_accuracy"))?,
                source_accuracy: f[5].parse().map_err(|_| parse_err("source_accuracy"))?,
                macs: f[6].parse().map_err(|_| parse_err("macs"))?,
                memory: f[7].parse().map_err(|_| parse_err("memory"))?,
                seed: f[8].parse().map_err(|_| parse_err("seed"))?,
            });
        }
        Ok(report)
    }

    /// Human-readable per-(experiment, method) aggregates.
    pub fn summarize(&self) -> String {
        use std::collections::BTreeMap;
        let mut groups: BTreeMap<(String, String), Vec<&ReportRow>> = BTreeMap::new();
        for r in &self.rows {
            groups
                .entry((r.experiment.clone(), r.method.clone()))
                .or_default()
                .push(r);
        }
        let mut out = String::new();
        out.push_str(&format!(
            "{:<28} {:<12} {:>5} {:>10} {:>10} {:>10} {:>10}\n",
            "experiment", "method", "rows", "sparsity", "acc(mean)", "acc(min)", "acc(max)"
        ));
        for ((experiment, method), rows) in &groups {
            let n = rows.len() as f64;
            let mean = |f: fn(&ReportRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
            let min = rows
                .iter()
                .map(|r| r.target_accuracy)
                .fold(f64::INFINITY, f64::min);
            let max = rows
                .iter()
                .map(|r| r.target_accuracy)
                .fold(f64::NEG_INFINITY, f64::max);
            out.push_str(&format!(
                "{:<28} {:<12} {:>5} {:>10.4} {:>10.4} {:>10.4} {:>10.4}\n",
                experiment,
                method,
                rows.len(),
                mean(|r| r.sparsity),
                mean(|r| r.target_accuracy),
                min,
                max
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(experiment: &str, method: &str, fold: usize, sparsity: f64) -> ReportRow {
        ReportRow {
            experiment: experiment.into(),
            method: method.into(),
            fold,
            sparsity,
            target_accuracy: 0.5,
            source_accuracy: 0.25,
            macs: 1000,
            memory: 64,
            seed: 7,
        }
    }

    #[test]
    fn emission_is_order_independent() {
        let mut a = ExperimentReport::new();
        a.push(row("x", "fine-prune", 1, 0.5));
        a.push(row("x", "fine-prune", 0, 0.5));
        a.push(row("x", "finetune", 0, 0.0));
        let mut b = ExperimentReport::new();
        b.push(row("x", "finetune", 0, 0.0));
        b.push(row("x", "fine-prune", 0, 0.5));
        b.push(row("x", "fine-prune", 1, 0.5));
        assert_eq!(a.to_csv_string(), b.to_csv_string());
    }

    #[test]
    fn csv_round_trips() {
        let mut report = ExperimentReport::new();
        report.push(row("sparsity", "fine-prune", 0, 0.35));
        report.push(row("sparsity", "random", 4, 0.7));
        let text = report.to_csv_string();
        let back = ExperimentReport::from_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.to_csv_string(), text);
    }

    #[test]
    fn header_is_checked_on_read() {
        assert!(ExperimentReport::from_csv("nope\n1,2,3\n").is_err());
        assert!(ExperimentReport::from_csv("").is_err());
    }

    #[test]
    fn every_row_carries_a_seed() {
        let mut report = ExperimentReport::new();
        report.push(row("x", "svd", 0, 0.0));
        let text = report.to_csv_string();
        let line = text.lines().nth(1).unwrap();
        assert!(line.ends_with(",7"));
    }

    #[test]
    fn summary_groups_by_experiment_and_method() {
        let mut report = ExperimentReport::new();
        report.push(row("a", "fine-prune", 0, 0.5));
        report.push(row("a", "fine-prune", 1, 0.7));
        report.push(row("b", "random", 0, 0.1));
        let s = report.summarize();
        assert!(s.contains("fine-prune"));
        assert!(s.contains("random"));
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 3); // header + 2 groups
    }
}
