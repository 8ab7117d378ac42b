//! Mono PCM WAV input and output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{DspError, Result};

fn audio_error(path: &Path, e: impl std::fmt::Display) -> DspError {
    DspError::Audio {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Reads a mono WAV (integer PCM up to 32 bits or 32-bit float) as samples
/// in [-1, 1] plus the header's sample rate.
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, u32)> {
    let mut reader = WavReader::open(path).map_err(|e| audio_error(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(audio_error(
            path,
            format!("expected mono audio, found {} channels", spec.channels),
        ));
    }
    let samples: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| audio_error(path, e))?,
        SampleFormat::Int => {
            let scale = (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| audio_error(path, e))?
        }
    };
    Ok((samples, spec.sample_rate))
}

/// Writes mono 16-bit PCM, clipping to [-1, 1].
pub fn write_wav_i16(path: &Path, samples: &[f64], sample_rate_hz: u32) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: sample_rate_hz,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| audio_error(path, e))?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16;
        writer.write_sample(v).map_err(|e| audio_error(path, e))?;
    }
    writer.finalize().map_err(|e| audio_error(path, e))
}
