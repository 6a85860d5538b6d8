//! IDX image/label ingestion (the de-facto handwritten-digit file format).
//!
//! Big-endian headers: images carry magic 0x00000803 with count, rows, and
//! cols extents; labels carry magic 0x00000801 with a count. Pixels are
//! scaled to [0, 1] and exposed as 1 x rows x cols tensors.

use crate::data::{LabeledDataset, Provenance};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::fs;
use std::path::Path;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], pos: usize) -> Result<u32> {
    bytes
        .get(pos..pos + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Parse("IDX file truncated in header".into()))
}

/// Load an image file and a label file into one dataset. The two files must
/// agree on sample count.
pub fn load_idx_images(image_path: &Path, label_path: &Path) -> Result<LabeledDataset> {
    let img = fs::read(image_path)?;
    let lbl = fs::read(label_path)?;

    let magic = read_u32_be(&img, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::MagicMismatch {
            expected: IMAGE_MAGIC,
            found: magic,
        });
    }
    let count = read_u32_be(&img, 4)? as usize;
    let rows = read_u32_be(&img, 8)? as usize;
    let cols = read_u32_be(&img, 12)? as usize;
    let pixels = &img[16..];
    if pixels.len() != count * rows * cols {
        return Err(Error::Parse(format!(
            "IDX image payload holds {} bytes, header promises {}",
            pixels.len(),
            count * rows * cols
        )));
    }

    let magic = read_u32_be(&lbl, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::MagicMismatch {
            expected: LABEL_MAGIC,
            found: magic,
        });
    }
    let label_count = read_u32_be(&lbl, 4)? as usize;
    let labels = &lbl[8..];
    if labels.len() != label_count {
        return Err(Error::Parse(format!(
            "IDX label payload holds {} bytes, header promises {label_count}",
            labels.len()
        )));
    }
    if count != label_count {
        return Err(Error::CountMismatch {
            images: count,
            labels: label_count,
        });
    }

    let class_count = labels.iter().copied().max().unwrap_or(0) as usize + 1;
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let data: Vec<f32> = pixels[i * rows * cols..(i + 1) * rows * cols]
            .iter()
            .map(|&p| f32::from(p) / 255.0)
            .collect();
        samples.push((
            Tensor::from_slice(&[1, rows, cols], &data)?,
            labels[i] as usize,
        ));
    }
    LabeledDataset::new(samples, class_count, Provenance::Source)
}
