//! 16-bit PCM WAV reading (and writing, for fixtures and round trips).

use crate::error::{Error, Result};
use std::fs;
use std::io::Write;
use std::path::Path;

/// Decoded mono audio with samples in [-1, 1].
#[derive(Debug, Clone)]
pub struct PcmAudio {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

/// Read a RIFF/WAVE file holding 16-bit PCM, mono or stereo. Stereo frames
/// are averaged down to mono. Each sample is int16 / 32768.
pub fn load_wav(path: &Path) -> Result<PcmAudio> {
    let bytes = fs::read(path)?;
    parse_wav(&bytes)
}

fn parse_wav(bytes: &[u8]) -> Result<PcmAudio> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::UnsupportedFormat("not a RIFF/WAVE file".into()));
    }
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_end = (pos + 8 + size).min(bytes.len());
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::UnsupportedFormat("fmt chunk too short".into()));
                }
                fmt = Some((
                    u16::from_le_bytes(body[0..2].try_into().unwrap()),
                    u16::from_le_bytes(body[2..4].try_into().unwrap()),
                    u32::from_le_bytes(body[4..8].try_into().unwrap()),
                    u16::from_le_bytes(body[14..16].try_into().unwrap()),
                ));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word-aligned.
        pos += 8 + size + (size & 1);
    }
    let (format, channels, sample_rate, bits) =
        fmt.ok_or_else(|| Error::UnsupportedFormat("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::UnsupportedFormat("missing data chunk".into()))?;
    if format != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "only PCM (format 1) is supported, got format {format}"
        )));
    }
    if bits != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "only 16-bit samples are supported, got {bits}-bit"
        )));
    }
    if channels == 0 || channels > 2 {
        return Err(Error::UnsupportedFormat(format!(
            "only mono or stereo is supported, got {channels} channels"
        )));
    }
    let frame_bytes = 2 * channels as usize;
    let frames = data.len() / frame_bytes;
    let mut samples = Vec::with_capacity(frames);
    for f in 0..frames {
        let mut acc = 0.0f32;
        for c in 0..channels as usize {
            let off = f * frame_bytes + 2 * c;
            let v = i16::from_le_bytes(data[off..off + 2].try_into().unwrap());
            acc += f32::from(v);
        }
        samples.push(acc / channels as f32 / 32768.0);
    }
    Ok(PcmAudio {
        samples,
        sample_rate,
    })
}

/// Write a minimal mono 16-bit PCM WAV file.
pub fn write_wav_mono16(path: &Path, samples: &[i16], sample_rate: u32) -> Result<()> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + samples.len() * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build_wav(format: u16, channels: u16, bits: u16, data: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data.len() as u32).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&format.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&8000u32.to_le_bytes());
        out.extend_from_slice(&(8000u32 * 2 * channels as u32).to_le_bytes());
        out.extend_from_slice(&(2 * channels).to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(data);
        out
    }

    #[test]
    fn all_zero_samples_decode_to_zero() {
        let data: Vec<u8> = vec![0; 32];
        let audio = parse_wav(&build_wav(1, 1, 16, &data)).unwrap();
        assert_eq!(audio.samples.len(), 16);
        assert!(audio.samples.iter().all(|&s| s == 0.0));
        assert_eq!(audio.sample_rate, 8000);
    }

    #[test]
    fn full_scale_square_wave_decodes_near_unity() {
        let mut data = Vec::new();
        for i in 0..8 {
            let v: i16 = if i % 2 == 0 { 32767 } else { -32767 };
            data.extend_from_slice(&v.to_le_bytes());
        }
        let audio = parse_wav(&build_wav(1, 1, 16, &data)).unwrap();
        for (i, &s) in audio.samples.iter().enumerate() {
            let want = if i % 2 == 0 {
                32767.0 / 32768.0
            } else {
                -32767.0 / 32768.0
            };
            assert!((s - want).abs() < 1e-7);
            assert!((s.abs() - 0.99997).abs() < 1e-4);
        }
    }

    #[test]
    fn sample_count_is_data_bytes_over_two() {
        // Header arithmetic: an 8 kHz clip with 2468 data bytes holds 1234
        // mono samples.
        let data = vec![7u8; 2468];
        let audio = parse_wav(&build_wav(1, 1, 16, &data)).unwrap();
        assert_eq!(audio.samples.len(), 2468 / 2);
    }

    #[test]
    fn stereo_frames_are_averaged() {
        let mut data = Vec::new();
        data.extend_from_slice(&1000i16.to_le_bytes());
        data.extend_from_slice(&3000i16.to_le_bytes());
        let audio = parse_wav(&build_wav(1, 2, 16, &data)).unwrap();
        assert_eq!(audio.samples.len(), 1);
        assert!((audio.samples[0] - 2000.0 / 32768.0).abs() < 1e-7);
    }

    #[test]
    fn non_pcm_and_wrong_depth_are_rejected() {
        let data = vec![0u8; 4];
        assert!(matches!(
            parse_wav(&build_wav(3, 1, 16, &data)),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(
            parse_wav(&build_wav(1, 1, 8, &data)),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(parse_wav(b"not a wav").is_err());
    }

    #[test]
    fn writer_round_trips_through_the_reader() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let samples: Vec<i16> = (0..100).map(|i| (i * 300 - 15000) as i16).collect();
        write_wav_mono16(&path, &samples, 8000).unwrap();
        let audio = load_wav(&path).unwrap();
        assert_eq!(audio.samples.len(), 100);
        for (got, want) in audio.samples.iter().zip(&samples) {
            assert!((got - f32::from(*want) / 32768.0).abs() < 1e-7);
        }
    }
}
