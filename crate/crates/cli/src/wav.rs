//! WAV subset: 16/24-bit integer PCM and 32-bit float, any channel count
//! (mixed down by averaging), any sample rate.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use tfscatter_core::scattering::Signal;

use crate::StageError;

/// Output sample encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BitDepth {
    #[value(name = "16")]
    Pcm16,
    #[value(name = "24")]
    Pcm24,
    #[value(name = "float32")]
    Float32,
}

fn wav_error(e: hound::Error, path: &Path) -> StageError {
    match e {
        hound::Error::IoError(io) => StageError::new("io", format!("{}: {io}", path.display())),
        hound::Error::Unsupported => StageError::new("wav", format!("{}: unsupported WAV encoding", path.display())),
        other => StageError::new("wav", format!("{}: {other}", path.display())),
    }
}

pub fn read_wav(path: &Path) -> Result<Signal, StageError> {
    let file = File::open(path).map_err(|e| StageError::new("io", format!("{}: {e}", path.display())))?;
    let mut reader = WavReader::new(BufReader::new(file)).map_err(|e| wav_error(e, path))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(StageError::new("wav", format!("{}: zero channels", path.display())));
    }
    let raw: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => collect(reader.samples::<i16>().map(|s| s.map(|v| v as f64 / 32768.0)), path)?,
        (SampleFormat::Int, 24) => collect(reader.samples::<i32>().map(|s| s.map(|v| v as f64 / 8388608.0)), path)?,
        (SampleFormat::Float, 32) => collect(reader.samples::<f32>().map(|s| s.map(|v| v as f64)), path)?,
        (format, bits) => {
            return Err(StageError::new(
                "wav",
                format!("{}: unsupported encoding {format:?} {bits}-bit", path.display()),
            ))
        }
    };
    let declared = reader.len() as usize;
    if raw.len() < declared || !raw.len().is_multiple_of(channels) {
        return Err(StageError::new(
            "io",
            format!("{}: truncated data ({} of {declared} samples)", path.display(), raw.len()),
        ));
    }
    let samples: Vec<f64> = raw.chunks(channels).map(|frame| frame.iter().sum::<f64>() / channels as f64).collect();
    Signal::new(samples, spec.sample_rate as f64).map_err(|e| StageError::new("wav", format!("{}: {e}", path.display())))
}

fn collect(it: impl Iterator<Item = hound::Result<f64>>, path: &Path) -> Result<Vec<f64>, StageError> {
    let mut out = Vec::new();
    for s in it {
        match s {
            Ok(v) => out.push(v),
            Err(hound::Error::IoError(e)) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                return Err(StageError::new("io", format!("{}: truncated data after {} samples", path.display(), out.len())))
            }
            Err(e) => return Err(wav_error(e, path)),
        }
    }
    Ok(out)
}

/// Writes mono samples clamped to [-1, 1].
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: f64, depth: BitDepth) -> Result<(), StageError> {
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(StageError::new("wav", "refusing to write non-finite samples"));
    }
    let rate = sample_rate.round();
    if !(rate >= 1.0 && rate <= u32::MAX as f64) {
        return Err(StageError::new("wav", format!("sample rate {sample_rate} cannot be stored")));
    }
    let (bits_per_sample, sample_format) = match depth {
        BitDepth::Pcm16 => (16, SampleFormat::Int),
        BitDepth::Pcm24 => (24, SampleFormat::Int),
        BitDepth::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec { channels: 1, sample_rate: rate as u32, bits_per_sample, sample_format };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_error(e, path))?;
    for &v in samples {
        let v = v.clamp(-1.0, 1.0);
        let written = match depth {
            BitDepth::Pcm16 => writer.write_sample((v * 32768.0).round().clamp(-32768.0, 32767.0) as i16),
            BitDepth::Pcm24 => writer.write_sample((v * 8388608.0).round().clamp(-8388608.0, 8388607.0) as i32),
            BitDepth::Float32 => writer.write_sample(v as f32),
        };
        written.map_err(|e| wav_error(e, path))?;
    }
    writer.finalize().map_err(|e| wav_error(e, path))
}
