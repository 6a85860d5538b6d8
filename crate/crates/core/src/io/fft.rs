//! Radix-2 FFT and log-magnitude spectrograms for audio preprocessing.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Complex value in `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    pub fn abs(&self) -> f64 {
        self.re.hypot(self.im)
    }

    fn mul(self, other: Complex) -> Complex {
        Complex {
            re: self.re * other.re - self.im * other.im,
            im: self.re * other.im + self.im * other.re,
        }
    }
}

/// Iterative radix-2 Cooley-Tukey transform. The length must be a power of
/// two.
pub fn fft(x: &[Complex]) -> Result<Vec<Complex>> {
    transform(x, false)
}

/// Inverse transform (includes the 1/n scale).
pub fn ifft(x: &[Complex]) -> Result<Vec<Complex>> {
    transform(x, true)
}

fn transform(x: &[Complex], inverse: bool) -> Result<Vec<Complex>> {
    let n = x.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "fft length must be a power of two, got {n}"
        )));
    }
    let mut data = x.to_vec();
    // Bit-reversal permutation.
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = (i.reverse_bits() >> (usize::BITS - bits)) & (n - 1);
        if j > i {
            data.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let angle = sign * 2.0 * std::f64::consts::PI / len as f64;
        let w_len = Complex::new(angle.cos(), angle.sin());
        for start in (0..n).step_by(len) {
            let mut w = Complex::new(1.0, 0.0);
            for k in 0..len / 2 {
                let even = data[start + k];
                let odd = data[start + k + len / 2].mul(w);
                data[start + k] = Complex::new(even.re + odd.re, even.im + odd.im);
                data[start + k + len / 2] = Complex::new(even.re - odd.re, even.im - odd.im);
                w = w.mul(w_len);
            }
        }
        len <<= 1;
    }
    if inverse {
        let scale = 1.0 / n as f64;
        for v in &mut data {
            v.re *= scale;
            v.im *= scale;
        }
    }
    Ok(data)
}

/// Short-time Fourier parameters. The experiment pipeline fixes these so
/// accuracy numbers replay exactly: 256-sample Hann frames, hop 128, inputs
/// center-padded or center-cropped to one second at 8 kHz.
#[derive(Debug, Clone, Copy)]
pub struct SpectrogramConfig {
    pub frame: usize,
    pub hop: usize,
    /// Every clip is normalized to this many samples before framing.
    pub target_samples: usize,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        SpectrogramConfig {
            frame: 256,
            hop: 128,
            target_samples: 8000,
        }
    }
}

impl SpectrogramConfig {
    pub fn freq_bins(&self) -> usize {
        self.frame / 2 + 1
    }

    pub fn time_frames(&self) -> usize {
        (self.target_samples - self.frame) / self.hop + 1
    }
}

/// Log-magnitude spectrogram `log(1 + |STFT|)` as a 1 x F x T tensor.
pub fn spectrogram(samples: &[f32], cfg: &SpectrogramConfig) -> Result<Tensor> {
    if cfg.frame == 0 || !cfg.frame.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "spectrogram frame must be a power of two, got {}",
            cfg.frame
        )));
    }
    if cfg.hop == 0 || cfg.target_samples < cfg.frame {
        return Err(Error::InvalidArgument(
            "spectrogram hop must be positive and target length at least one frame".into(),
        ));
    }
    // Center the clip in a fixed-length buffer.
    let mut fixed = vec![0.0f32; cfg.target_samples];
    if samples.len() >= cfg.target_samples {
        let start = (samples.len() - cfg.target_samples) / 2;
        fixed.copy_from_slice(&samples[start..start + cfg.target_samples]);
    } else {
        let start = (cfg.target_samples - samples.len()) / 2;
        fixed[start..start + samples.len()].copy_from_slice(samples);
    }

    let window: Vec<f64> = (0..cfg.frame)
        .map(|i| {
            0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / (cfg.frame as f64 - 1.0)).cos())
        })
        .collect();

    let freq_bins = cfg.freq_bins();
    let frames = cfg.time_frames();
    let mut out = vec![0.0f32; freq_bins * frames];
    let mut buf = vec![Complex::default(); cfg.frame];
    for t in 0..frames {
        let offset = t * cfg.hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex::new(f64::from(fixed[offset + i]) * window[i], 0.0);
        }
        let spectrum = fft(&buf)?;
        for (f, bin) in spectrum.iter().take(freq_bins).enumerate() {
            out[f * frames + t] = (1.0 + bin.abs()).ln() as f32;
        }
    }
    Tensor::new(Shape::new(vec![1, freq_bins, frames])?, out)
}
