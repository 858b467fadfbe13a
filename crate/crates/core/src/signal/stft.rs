//! Short-time Fourier analysis and weighted overlap-add synthesis.
//!
//! Frames are taken every `hop_length` samples, multiplied by the analysis
//! window and zero-padded to `fft_size`. With `center_padding` the signal is
//! reflect-padded by `window_length / 2` on both sides first, so frame `t`
//! is centred on sample `t * hop_length`. The frame count is
//! `1 + (padded_len - window_length) / hop_length`.
//!
//! Synthesis windows each inverse frame with the same window and divides the
//! overlap-added result by the overlap-added squared window, which makes
//! `istft(stft(x)) == x` up to rounding for any window with non-vanishing
//! squared-window sum.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::MultiChannelWaveform;
use crate::error::{Error, Result};

const COLA_TOLERANCE: f64 = 1e-9;
const SYNTHESIS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// Periodic Hann, `0.5 - 0.5 cos(2πn/N)`.
    Hann,
    Rectangular,
}

impl WindowKind {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
                .collect(),
            WindowKind::Rectangular => vec![1.0; len],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawStftConfig {
    fft_size: usize,
    window_length: usize,
    hop_length: usize,
    window: WindowKind,
    center_padding: bool,
}

/// Validated STFT parameters. Construction fails unless
/// `hop ≤ window ≤ fft` and the window overlap-adds to a constant at `hop`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawStftConfig", into = "RawStftConfig")]
pub struct StftConfig {
    fft_size: usize,
    window_length: usize,
    hop_length: usize,
    window: WindowKind,
    center_padding: bool,
}

impl Default for StftConfig {
    /// 512-point FFT, 32 ms periodic Hann window, 16 ms hop at 16 kHz.
    fn default() -> Self {
        Self {
            fft_size: 512,
            window_length: 512,
            hop_length: 256,
            window: WindowKind::Hann,
            center_padding: true,
        }
    }
}

impl Default for RawStftConfig {
    fn default() -> Self {
        StftConfig::default().into()
    }
}

impl TryFrom<RawStftConfig> for StftConfig {
    type Error = Error;

    fn try_from(raw: RawStftConfig) -> Result<Self> {
        StftConfig::new(
            raw.fft_size,
            raw.window_length,
            raw.hop_length,
            raw.window,
            raw.center_padding,
        )
    }
}

impl From<StftConfig> for RawStftConfig {
    fn from(c: StftConfig) -> Self {
        RawStftConfig {
            fft_size: c.fft_size,
            window_length: c.window_length,
            hop_length: c.hop_length,
            window: c.window,
            center_padding: c.center_padding,
        }
    }
}

impl StftConfig {
    pub fn new(
        fft_size: usize,
        window_length: usize,
        hop_length: usize,
        window: WindowKind,
        center_padding: bool,
    ) -> Result<Self> {
        if hop_length == 0 || hop_length > window_length || window_length > fft_size {
            return Err(Error::Config(format!(
                "need 0 < hop ({hop_length}) <= window ({window_length}) <= fft size ({fft_size})"
            )));
        }
        if !fft_size.is_multiple_of(2) {
            return Err(Error::Config(format!("fft size {fft_size} must be even")));
        }
        let cfg = Self {
            fft_size,
            window_length,
            hop_length,
            window,
            center_padding,
        };
        cfg.check_cola()?;
        Ok(cfg)
    }

    fn check_cola(&self) -> Result<()> {
        let w = self.window_coefficients();
        let hop = self.hop_length;
        let sums: Vec<f64> = (0..hop)
            .map(|n| w.iter().skip(n).step_by(hop).sum())
            .collect();
        let max = sums.iter().cloned().fold(f64::MIN, f64::max);
        let min = sums.iter().cloned().fold(f64::MAX, f64::min);
        if min <= 0.0 || (max - min) > COLA_TOLERANCE * max {
            return Err(Error::Config(format!(
                "{:?} window of length {} does not overlap-add to a constant at hop {} \
                 (min {min:.6}, max {max:.6})",
                self.window, self.window_length, hop
            )));
        }
        Ok(())
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn hop_length(&self) -> usize {
        self.hop_length
    }

    pub fn window(&self) -> WindowKind {
        self.window
    }

    pub fn center_padding(&self) -> bool {
        self.center_padding
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn window_coefficients(&self) -> Vec<f64> {
        self.window.coefficients(self.window_length)
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> Result<usize> {
        if len < self.window_length {
            return Err(Error::InputTooShort {
                len,
                needed: self.window_length,
            });
        }
        let padded = if self.center_padding {
            len + 2 * (self.window_length / 2)
        } else {
            len
        };
        Ok(1 + (padded - self.window_length) / self.hop_length)
    }

    /// Physical frequency of bin `k` in Hz.
    pub fn bin_frequency(&self, bin: usize, sample_rate: u32) -> f64 {
        bin as f64 * f64::from(sample_rate) / self.fft_size as f64
    }
}

/// One-sided complex spectrogram `[channels × frames × bins]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    data: Array3<Complex64>,
    config: StftConfig,
    sample_rate: u32,
}

impl ComplexSpectrogram {
    pub fn new(data: Array3<Complex64>, config: StftConfig, sample_rate: u32) -> Result<Self> {
        if data.len_of(Axis(2)) != config.bins() {
            return Err(Error::Shape(format!(
                "spectrogram has {} bins, config implies {}",
                data.len_of(Axis(2)),
                config.bins()
            )));
        }
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        Ok(Self {
            data,
            config,
            sample_rate,
        })
    }

    /// Wraps a single-channel `[frames × bins]` array.
    pub fn from_mono(data: Array2<Complex64>, config: StftConfig, sample_rate: u32) -> Result<Self> {
        Self::new(data.insert_axis(Axis(0)), config, sample_rate)
    }

    pub fn data(&self) -> &Array3<Complex64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<Complex64> {
        &mut self.data
    }

    pub fn into_data(self) -> Array3<Complex64> {
        self.data
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    pub fn frames(&self) -> usize {
        self.data.len_of(Axis(1))
    }

    pub fn bins(&self) -> usize {
        self.data.len_of(Axis(2))
    }

    /// `[frames × bins]` view of one channel.
    pub fn channel(&self, index: usize) -> ArrayView2<'_, Complex64> {
        self.data.index_axis(Axis(0), index)
    }

    pub fn select_channel(&self, index: usize) -> Result<Self> {
        if index >= self.channels() {
            return Err(Error::Shape(format!(
                "channel {index} out of range for {} channels",
                self.channels()
            )));
        }
        Self::from_mono(self.channel(index).to_owned(), self.config, self.sample_rate)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.data.dim() == other.data.dim()
    }
}

fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| x[i]));
    out.extend_from_slice(x);
    out.extend((0..pad).map(|i| x[n - 2 - i]));
    out
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(len)
    } else {
        planner.plan_fft_forward(len)
    }
}

pub fn stft(wave: &MultiChannelWaveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    if wave.channels() == 0 {
        return Err(Error::Shape("waveform has no channels".into()));
    }
    let frames = cfg.frame_count(wave.len())?;
    let (n_fft, win_len, hop, bins) = (cfg.fft_size, cfg.window_length, cfg.hop_length, cfg.bins());
    let window = cfg.window_coefficients();
    let fft = plan(n_fft, false);
    let mut buf = vec![Complex64::default(); n_fft];
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut data = Array3::zeros((wave.channels(), frames, bins));

    for (ch, mut out) in data.outer_iter_mut().enumerate() {
        let signal = wave.channel(ch).to_vec();
        let signal = if cfg.center_padding {
            reflect_pad(&signal, win_len / 2)
        } else {
            signal
        };
        for (t, mut row) in out.outer_iter_mut().enumerate() {
            let frame = &signal[t * hop..t * hop + win_len];
            buf.fill(Complex64::default());
            for ((b, &x), &w) in buf.iter_mut().zip(frame).zip(&window) {
                b.re = x * w;
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for (o, &b) in row.iter_mut().zip(&buf[..bins]) {
                *o = b;
            }
        }
    }
    ComplexSpectrogram::new(data, *cfg, wave.sample_rate())
}

/// Inverse STFT, trimmed or zero-padded to `length` samples.
pub fn istft(
    spec: &ComplexSpectrogram,
    cfg: &StftConfig,
    length: usize,
) -> Result<MultiChannelWaveform> {
    if spec.bins() != cfg.bins() {
        return Err(Error::Shape(format!(
            "spectrogram has {} bins, config implies {}",
            spec.bins(),
            cfg.bins()
        )));
    }
    let (n_fft, win_len, hop, bins) = (cfg.fft_size, cfg.window_length, cfg.hop_length, cfg.bins());
    let frames = spec.frames();
    let window = cfg.window_coefficients();
    let ifft = plan(n_fft, true);
    let mut buf = vec![Complex64::default(); n_fft];
    let mut scratch = vec![Complex64::default(); ifft.get_inplace_scratch_len()];

    let padded_len = if frames == 0 { 0 } else { (frames - 1) * hop + win_len };
    let mut norm = vec![0.0; padded_len];
    for t in 0..frames {
        for (n, &w) in window.iter().enumerate() {
            norm[t * hop + n] += w * w;
        }
    }
    let offset = if cfg.center_padding { win_len / 2 } else { 0 };
    let scale = 1.0 / n_fft as f64;

    let mut out = Array2::zeros((spec.channels(), length));
    for (ch, mut dst) in out.outer_iter_mut().enumerate() {
        let mut acc = vec![0.0; padded_len];
        for (t, row) in spec.channel(ch).outer_iter().enumerate() {
            buf[0] = Complex64::new(row[0].re, 0.0);
            for k in 1..bins - 1 {
                buf[k] = row[k];
                buf[n_fft - k] = row[k].conj();
            }
            buf[n_fft / 2] = Complex64::new(row[bins - 1].re, 0.0);
            ifft.process_with_scratch(&mut buf, &mut scratch);
            for (n, &w) in window.iter().enumerate() {
                acc[t * hop + n] += buf[n].re * scale * w;
            }
        }
        let avail = padded_len.saturating_sub(offset).min(length);
        let body = acc[offset..offset + avail]
            .iter()
            .zip(&norm[offset..offset + avail])
            .map(|(a, n)| a / n.max(SYNTHESIS_FLOOR));
        for (d, v) in dst.slice_mut(s![..avail]).iter_mut().zip(body) {
            *d = v;
        }
    }
    MultiChannelWaveform::new(out, spec.sample_rate())
}
