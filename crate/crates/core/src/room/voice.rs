//! Synthetic speech-like source signals.
//!
//! Used when no recorded single-talker corpus is supplied. Each utterance is
//! a sequence of syllables: a gliding harmonic voiced segment shaped by three
//! formant resonances, optionally preceded by a short noise burst, separated
//! by pauses. Different talkers get different pitch ranges and formant scales.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::MultiChannelWaveform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TalkerProfile {
    pub f0_hz: f64,
    pub formant_scale: f64,
}

impl TalkerProfile {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        Self {
            f0_hz: rng.gen_range(90.0..230.0),
            formant_scale: rng.gen_range(0.85..1.2),
        }
    }
}

const VOWELS: [[f64; 3]; 6] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [300.0, 870.0, 2240.0],
    [660.0, 1720.0, 2410.0],
];
const FORMANT_BANDWIDTH: [f64; 3] = [90.0, 120.0, 180.0];

fn formant_gain(freq: f64, formants: &[f64; 3]) -> f64 {
    formants
        .iter()
        .zip(FORMANT_BANDWIDTH)
        .zip([1.0, 0.6, 0.3])
        .map(|((&fc, bw), g)| g / (1.0 + ((freq - fc) / bw).powi(2)))
        .sum::<f64>()
        + 0.02
}

fn envelope(n: usize, len: usize, ramp: usize) -> f64 {
    let ramp = ramp.min(len / 2).max(1);
    if n < ramp {
        0.5 - 0.5 * (std::f64::consts::PI * n as f64 / ramp as f64).cos()
    } else if n + ramp >= len {
        let k = len - n;
        0.5 - 0.5 * (std::f64::consts::PI * k as f64 / ramp as f64).cos()
    } else {
        1.0
    }
}

/// Renders `duration_secs` of speech-like signal at `sample_rate`, peak-normalised to 0.5.
pub fn synthesize_utterance(
    seed: u64,
    profile: TalkerProfile,
    duration_secs: f64,
    sample_rate: u32,
) -> Result<MultiChannelWaveform> {
    if !(duration_secs > 0.0) {
        return Err(Error::Config("utterance duration must be positive".into()));
    }
    let fs = f64::from(sample_rate);
    let total = (duration_secs * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; total];
    let nyquist_guard = (fs / 2.0 - 200.0).min(5000.0);

    let mut pos = rng.gen_range(0.02..0.08) * fs;
    while (pos as usize) < total {
        let start = pos as usize;
        // Optional unvoiced onset.
        if rng.gen_bool(0.35) {
            let len = (rng.gen_range(0.03..0.08) * fs) as usize;
            let gain = rng.gen_range(0.05..0.15);
            let mut prev = 0.0;
            for n in 0..len.min(total - start) {
                let white: f64 = rng.gen_range(-1.0..1.0);
                // First difference tilts the noise towards high frequencies.
                out[start + n] += gain * envelope(n, len, len / 4) * (white - prev);
                prev = white;
            }
            pos += len as f64;
        }

        let start = pos as usize;
        if start >= total {
            break;
        }
        let len = ((rng.gen_range(0.10..0.30) * fs) as usize).min(total - start);
        let vowel = VOWELS[rng.gen_range(0..VOWELS.len())];
        let formants = vowel.map(|f| f * profile.formant_scale);
        let f0_start = profile.f0_hz * rng.gen_range(0.85..1.15);
        let f0_end = profile.f0_hz * rng.gen_range(0.8..1.2);
        let level = rng.gen_range(0.5..1.0);
        let harmonics = (nyquist_guard / f0_start.max(f0_end)).floor() as usize;
        let weights: Vec<f64> = (1..=harmonics)
            .map(|h| formant_gain(h as f64 * profile.f0_hz, &formants) / (h as f64).sqrt())
            .collect();
        let phases: Vec<f64> = (0..harmonics).map(|_| rng.gen_range(0.0..TAU)).collect();

        let mut phase = 0.0;
        for n in 0..len {
            let frac = n as f64 / len as f64;
            let f0 = f0_start + (f0_end - f0_start) * frac;
            phase += TAU * f0 / fs;
            let mut v = 0.0;
            for (h, (&w, &p)) in weights.iter().zip(&phases).enumerate() {
                v += w * ((h + 1) as f64 * phase + p).sin();
            }
            out[start + n] += level * envelope(n, len, len / 5) * v;
        }
        pos += len as f64;
        let pause = if rng.gen_bool(0.15) {
            rng.gen_range(0.15..0.35)
        } else {
            rng.gen_range(0.02..0.10)
        };
        pos += pause * fs;
    }

    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    MultiChannelWaveform::mono(out, sample_rate)
}
