//! RIFF/WAVE reading and writing (PCM16 and IEEE float32).

use std::io::{BufReader, BufWriter};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::MultiChannelWaveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

fn classify(path: &Path, err: hound::Error) -> Error {
    match err {
        // hound reports short sample data as a generic I/O error.
        hound::Error::IoError(e) if e.to_string().contains("enough bytes") => {
            Error::Truncated(path.display().to_string())
        }
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::Truncated(path.display().to_string())
        }
        hound::Error::IoError(e) => Error::io(path, e),
        hound::Error::Unsupported => Error::UnsupportedCodec(path.display().to_string()),
        hound::Error::FormatError(msg) => {
            Error::MalformedHeader(format!("{}: {msg}", path.display()))
        }
        other => Error::MalformedHeader(format!("{}: {other}", path.display())),
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<MultiChannelWaveform> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = WavReader::new(BufReader::new(file)).map_err(|e| classify(path, e))?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels);
    if channels == 0 {
        return Err(Error::MalformedHeader(format!("{}: zero channels", path.display())));
    }
    let declared = reader.len() as usize;

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| classify(path, e))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| classify(path, e))?,
        (fmt, bits) => {
            return Err(Error::UnsupportedCodec(format!(
                "{}: {fmt:?} with {bits} bits per sample",
                path.display()
            )))
        }
    };
    if interleaved.len() < declared || !interleaved.len().is_multiple_of(channels) {
        return Err(Error::Truncated(path.display().to_string()));
    }

    let frames = interleaved.len() / channels;
    let samples = Array2::from_shape_fn((channels, frames), |(c, n)| interleaved[n * channels + c]);
    MultiChannelWaveform::new(samples, spec.sample_rate)
}

/// PCM16 quantisation: `round(x * 32768)` clipped to the `i16` range.
pub fn quantize_pcm16(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn write_wav(
    path: impl AsRef<Path>,
    wave: &MultiChannelWaveform,
    encoding: WavEncoding,
) -> Result<()> {
    let path = path.as_ref();
    let channels = u16::try_from(wave.channels())
        .map_err(|_| Error::Shape(format!("{} channels", wave.channels())))?;
    let spec = match encoding {
        WavEncoding::Pcm16 => WavSpec {
            channels,
            sample_rate: wave.sample_rate(),
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        },
        WavEncoding::Float32 => WavSpec {
            channels,
            sample_rate: wave.sample_rate(),
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        },
    };
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = WavWriter::new(BufWriter::new(file), spec).map_err(|e| classify(path, e))?;
    let samples = wave.samples();
    for n in 0..wave.len() {
        for c in 0..wave.channels() {
            let v = samples[[c, n]];
            let r = match encoding {
                WavEncoding::Pcm16 => writer.write_sample(quantize_pcm16(v)),
                WavEncoding::Float32 => writer.write_sample(v as f32),
            };
            r.map_err(|e| classify(path, e))?;
        }
    }
    writer.finalize().map_err(|e| classify(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float32_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.wav");
        let data: Vec<f64> = (0..1000).map(|i| ((i as f32) * 0.013).sin() as f64).collect();
        let w = MultiChannelWaveform::mono(data, 16000).unwrap();
        write_wav(&path, &w, WavEncoding::Float32).unwrap();
        let r = read_wav(&path).unwrap();
        assert_eq!(r.sample_rate(), 16000);
        assert_eq!(r, w);
    }

    #[test]
    fn pcm16_clips_full_scale() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.wav");
        let w = MultiChannelWaveform::mono(vec![1.0, -1.0, 0.5, 2.0], 8000).unwrap();
        write_wav(&path, &w, WavEncoding::Pcm16).unwrap();
        let r = read_wav(&path).unwrap();
        assert_eq!(
            r.channel(0).to_vec(),
            vec![32767.0 / 32768.0, -1.0, 0.5, 32767.0 / 32768.0]
        );
    }

    #[test]
    fn fifteen_channels_keep_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.wav");
        let chans: Vec<Vec<f64>> = (0..15)
            .map(|c| (0..64).map(|n| (c * 64 + n) as f64 / 2048.0).collect())
            .collect();
        let w = MultiChannelWaveform::from_channels(&chans, 16000).unwrap();
        for enc in [WavEncoding::Float32, WavEncoding::Pcm16] {
            write_wav(&path, &w, enc).unwrap();
            let r = read_wav(&path).unwrap();
            assert_eq!(r.channels(), 15);
            for (c, expect) in chans.iter().enumerate() {
                // Ramps are multiples of 2^-11, exact in both encodings.
                assert_eq!(r.channel(c).to_vec(), *expect, "channel {c}");
            }
        }
    }

    #[test]
    fn truncated_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let w = MultiChannelWaveform::mono(vec![0.25; 1000], 16000).unwrap();
        write_wav(&path, &w, WavEncoding::Pcm16).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 501]).unwrap();
        let r = read_wav(&path); assert!(matches!(r, Err(Error::Truncated(_))), "{r:?}");
    }

    #[test]
    fn malformed_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.wav");
        std::fs::write(&path, b"RIFX\0\0\0\0WAVEfmt garbage").unwrap();
        assert!(matches!(read_wav(&path), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn unsupported_codec() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 24,
            sample_format: SampleFormat::Int,
        };
        let mut wr = WavWriter::create(&path, spec).unwrap();
        wr.write_sample(5i32).unwrap();
        wr.finalize().unwrap();
        assert!(matches!(read_wav(&path), Err(Error::UnsupportedCodec(_))));
    }
}
