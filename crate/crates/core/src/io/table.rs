//! CSV sample tables: header row, one sample per row, label in the last
//! column.

use crate::data::{LabeledDataset, Provenance};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::fs;
use std::path::Path;

pub fn load_csv(path: &Path, provenance: Provenance) -> Result<LabeledDataset> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text, provenance)
}

fn parse_csv(text: &str, provenance: Provenance) -> Result<LabeledDataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("CSV is empty, expected a header row".into()))?;
    let columns = header.split(',').count();
    if columns < 2 {
        return Err(Error::Parse(
            "CSV needs at least one feature column and a label column".into(),
        ));
    }
    let mut samples = Vec::new();
    let mut max_label = 0usize;
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns {
            return Err(Error::Parse(format!(
                "line {}: expected {columns} fields, found {}",
                line_no + 1,
                fields.len()
            )));
        }
        let mut values = Vec::with_capacity(columns - 1);
        for f in &fields[..columns - 1] {
            values.push(f.trim().parse::<f32>().map_err(|_| {
                Error::Parse(format!("line {}: {f:?} is not a number", line_no + 1))
            })?);
        }
        let label = fields[columns - 1].trim().parse::<usize>().map_err(|_| {
            Error::Parse(format!(
                "line {}: label {:?} is not a class index",
                line_no + 1,
                fields[columns - 1]
            ))
        })?;
        max_label = max_label.max(label);
        samples.push((Tensor::vector(values)?, label));
    }
    if samples.is_empty() {
        return Err(Error::EmptyInput("CSV holds no sample rows".into()));
    }
    LabeledDataset::new(samples, max_label + 1, provenance)
}

/// Write a dataset of rank-1 samples back out in the same format.
pub fn save_csv(path: &Path, data: &LabeledDataset) -> Result<()> {
    use std::io::Write;
    let dim = data.sample(0).0.shape().elem_count();
    let mut out = String::new();
    for i in 0..dim {
        out.push_str(&format!("f{i},"));
    }
    out.push_str("label\n");
    for (x, label) in data.iter() {
        if x.shape().rank() != 1 {
            return Err(Error::Dimension(
                "only rank-1 samples can be written as CSV rows".into(),
            ));
        }
        for v in x.data() {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{label}\n"));
    }
    fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}
