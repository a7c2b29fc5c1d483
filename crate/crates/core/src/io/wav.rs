//! WAV reading and writing.

use std::path::Path;
use std::str::FromStr;

use hound::{SampleFormat as HoundFormat, WavReader, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    Pcm16,
    Pcm24,
    Float32,
}

impl SampleFormat {
    fn bits(self) -> u16 {
        match self {
            SampleFormat::Pcm16 => 16,
            SampleFormat::Pcm24 => 24,
            SampleFormat::Float32 => 32,
        }
    }
}

impl FromStr for SampleFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcm16" => Ok(SampleFormat::Pcm16),
            "pcm24" => Ok(SampleFormat::Pcm24),
            "float32" => Ok(SampleFormat::Float32),
            _ => param(format!("unsupported sample format {s:?}; expected pcm16, pcm24 or float32")),
        }
    }
}

/// Decoded audio, one vector per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct WavData {
    pub sample_rate: u32,
    pub channels: Vec<Vec<f64>>,
}

/// Writes a mono file. PCM samples outside [-1, 1] are rejected rather than clipped.
pub fn wav_write(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32, format: SampleFormat) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: format.bits(),
        sample_format: match format {
            SampleFormat::Float32 => HoundFormat::Float,
            _ => HoundFormat::Int,
        },
    };
    if format != SampleFormat::Float32 {
        if let Some(i) = samples.iter().position(|v| !(v.abs() <= 1.0)) {
            return param(format!("sample {i} ({}) exceeds full scale for PCM output", samples[i]));
        }
    }
    let mut w = WavWriter::create(path, spec)?;
    match format {
        SampleFormat::Float32 => {
            for &v in samples {
                w.write_sample(v as f32)?;
            }
        }
        SampleFormat::Pcm16 | SampleFormat::Pcm24 => {
            let full = (1i64 << (format.bits() - 1)) as f64;
            let (lo, hi) = (-full, full - 1.0);
            for &v in samples {
                w.write_sample((v * full).round().clamp(lo, hi) as i32)?;
            }
        }
    }
    w.finalize()?;
    Ok(())
}

/// Reads every channel, scaling integer samples to [-1, 1).
pub fn wav_read(path: impl AsRef<Path>) -> Result<WavData> {
    let mut r = WavReader::open(path)?;
    let spec = r.spec();
    let nch = spec.channels as usize;
    if nch == 0 {
        return param("file has no channels");
    }
    let flat: Vec<f64> = match spec.sample_format {
        HoundFormat::Float => {
            if spec.bits_per_sample != 32 {
                return param(format!("unsupported float width {}", spec.bits_per_sample));
            }
            r.samples::<f32>().map(|s| s.map(f64::from)).collect::<std::result::Result<_, _>>()?
        }
        HoundFormat::Int => {
            let full = (1i64 << (spec.bits_per_sample - 1)) as f64;
            r.samples::<i32>().map(|s| s.map(|v| v as f64 / full)).collect::<std::result::Result<_, _>>()?
        }
    };
    let mut channels = vec![Vec::with_capacity(flat.len() / nch); nch];
    for (i, v) in flat.into_iter().enumerate() {
        channels[i % nch].push(v);
    }
    Ok(WavData {
        sample_rate: spec.sample_rate,
        channels,
    })
}

/// Reads one channel of a file.
pub fn wav_read_channel(path: impl AsRef<Path>, channel: usize) -> Result<(Vec<f64>, u32)> {
    let mut d = wav_read(path)?;
    if channel >= d.channels.len() {
        return param(format!("channel {channel} requested from a {}-channel file", d.channels.len()));
    }
    Ok((d.channels.swap_remove(channel), d.sample_rate))
}
