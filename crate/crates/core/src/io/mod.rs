//! Model serialization and dataset ingestion: the model file format, IDX
//! images, WAV audio with FFT/spectrogram preprocessing, and CSV tables.
//!
//! Loaders are reentrant and hold no global state; files are read fully
//! before any tensor is exposed, and loading the same file twice yields
//! identical tensors.

pub mod fft;
pub mod idx;
pub mod model_file;
pub mod table;
pub mod wav;

pub use fft::{fft, ifft, spectrogram, Complex, SpectrogramConfig};
pub use idx::load_idx_images;
pub use model_file::{load_model, save_model, FORMAT_VERSION};
pub use table::{load_csv, save_csv};
pub use wav::{load_wav, write_wav_mono16, PcmAudio};

use crate::data::{LabeledDataset, Provenance};
use crate::error::{Error, Result};
use std::path::Path;

/// Load every `*.wav` file in a directory as one dataset, reading each clip's
/// class from the leading integer of its file name (`<label>_*.wav`, the
/// spoken-digit convention) and converting it to a log-magnitude spectrogram.
/// Files are visited in sorted name order, so the result is deterministic.
pub fn load_wav_dir(
    dir: &Path,
    cfg: &SpectrogramConfig,
    provenance: Provenance,
) -> Result<LabeledDataset> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "wav").unwrap_or(false))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no .wav files under {}",
            dir.display()
        )));
    }
    let mut samples = Vec::with_capacity(paths.len());
    let mut max_label = 0usize;
    for path in &paths {
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Parse(format!("unreadable file name {}", path.display())))?;
        let label: usize = name
            .split('_')
            .next()
            .and_then(|tok| tok.parse().ok())
            .ok_or_else(|| {
                Error::Parse(format!(
                    "cannot read a class label from file name {name:?} (expected <label>_*.wav)"
                ))
            })?;
        max_label = max_label.max(label);
        let audio = load_wav(path)?;
        samples.push((spectrogram(&audio.samples, cfg)?, label));
    }
    LabeledDataset::new(samples, max_label + 1, provenance)
}
