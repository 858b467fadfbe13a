//! Reverberant two-talker mixture synthesis.
//!
//! Both dry utterances are convolved with their per-microphone impulse
//! responses. The interferer is shifted so that the overlapped span covers
//! `overlap_ratio` of the target utterance, then scaled so that the energy
//! ratio of the two reverberant stems over that span, at the reference
//! microphone, equals the scene SIR. The mixture is the plain sum of the two
//! stems; reverberant tails beyond the last dry sample are cut.

use ndarray::{s, Array2};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use super::geometry::ArrayGeometry;
use super::rir::{simulate_rirs, ImpulseResponse};
use super::scene::SceneSpec;
use crate::error::{Error, Result};
use crate::signal::MultiChannelWaveform;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureBundle {
    pub mixture: MultiChannelWaveform,
    pub target: MultiChannelWaveform,
    pub interferer: MultiChannelWaveform,
    /// Start sample of the dry target inside the mixture.
    pub target_offset: usize,
    pub interferer_offset: usize,
    /// Half-open sample span where both dry utterances are active.
    pub overlap: (usize, usize),
    pub interferer_gain: f64,
    pub reference_index: usize,
}

impl MixtureBundle {
    /// Target-to-interferer energy ratio over the overlapped span at the reference microphone.
    pub fn measured_sir_db(&self) -> f64 {
        let (a, b) = self.overlap;
        let r = self.reference_index;
        let e = |w: &MultiChannelWaveform| w.channel(r).slice(s![a..b]).iter().map(|v| v * v).sum::<f64>();
        10.0 * (e(&self.target) / e(&self.interferer)).log10()
    }

    /// Fraction of the target utterance overlapped by the interferer.
    pub fn overlap_fraction(&self, target_len: usize) -> f64 {
        (self.overlap.1 - self.overlap.0) as f64 / target_len as f64
    }
}

/// Full linear convolution of one signal with several filters via FFT.
pub fn convolve_many(signal: &[f64], filters: &[ImpulseResponse]) -> Vec<Vec<f64>> {
    let max_h = filters.iter().map(ImpulseResponse::len).max().unwrap_or(0);
    if signal.is_empty() || max_h == 0 {
        return vec![Vec::new(); filters.len()];
    }
    let n = (signal.len() + max_h - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut sig: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    sig.resize(n, Complex64::default());
    fwd.process(&mut sig);

    filters
        .par_iter()
        .map(|h| {
            let mut buf: Vec<Complex64> = h.taps.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            buf.resize(n, Complex64::default());
            fwd.process(&mut buf);
            for (b, s) in buf.iter_mut().zip(&sig) {
                *b *= s;
            }
            inv.process(&mut buf);
            let len = signal.len() + h.len() - 1;
            buf[..len].iter().map(|c| c.re / n as f64).collect()
        })
        .collect()
}

fn check_mono(name: &str, w: &MultiChannelWaveform) -> Result<()> {
    if w.channels() != 1 {
        return Err(Error::Shape(format!("{name} must be single-channel, got {} channels", w.channels())));
    }
    if w.is_empty() {
        return Err(Error::Shape(format!("{name} is empty")));
    }
    Ok(())
}

/// Places each channel of `wet` at `offset` into a `[channels × total]` array.
fn place(wet: &[Vec<f64>], offset: usize, total: usize) -> Array2<f64> {
    let mut out = Array2::zeros((wet.len(), total));
    for (mut row, w) in out.outer_iter_mut().zip(wet) {
        let n = w.len().min(total.saturating_sub(offset));
        for (d, &v) in row.slice_mut(s![offset..offset + n]).iter_mut().zip(w) {
            *d = v;
        }
    }
    out
}

pub fn synthesize_mixture(
    scene: &SceneSpec,
    target: &MultiChannelWaveform,
    interferer: &MultiChannelWaveform,
    geometry: &ArrayGeometry,
    max_order: Option<usize>,
) -> Result<MixtureBundle> {
    check_mono("target", target)?;
    check_mono("interferer", interferer)?;
    geometry.validate()?;
    if target.sample_rate() != interferer.sample_rate() {
        return Err(Error::Shape(format!(
            "sample rates differ: {} vs {}",
            target.sample_rate(),
            interferer.sample_rate()
        )));
    }
    let fs = target.sample_rate();
    let (lt, li) = (target.len(), interferer.len());
    let overlap_len = (scene.overlap_ratio * lt as f64).round() as usize;
    if li < overlap_len {
        return Err(Error::Shape(format!(
            "interferer has {li} samples but the overlap needs {overlap_len}"
        )));
    }
    let (t_off, i_off) = if scene.interferer_first {
        (li - overlap_len, 0)
    } else {
        (0, lt - overlap_len)
    };
    let total = (t_off + lt).max(i_off + li);
    let overlap = (t_off.max(i_off), (t_off + lt).min(i_off + li));

    let mics = geometry.place(scene.array_center, scene.array_orientation);
    let rir_t = simulate_rirs(&scene.room, scene.target_position, &mics, max_order, fs)?;
    let rir_i = simulate_rirs(&scene.room, scene.interferer_position, &mics, max_order, fs)?;

    let target_stem = place(&convolve_many(&target.channel(0).to_vec(), &rir_t), t_off, total);
    let mut interferer_stem =
        place(&convolve_many(&interferer.channel(0).to_vec(), &rir_i), i_off, total);

    let r = geometry.reference_index;
    let energy = |a: &Array2<f64>| {
        a.slice(s![r, overlap.0..overlap.1]).iter().map(|v| v * v).sum::<f64>()
    };
    let (e_t, e_i) = (energy(&target_stem), energy(&interferer_stem));
    let gain = if e_i == 0.0 {
        0.0
    } else {
        if e_t == 0.0 {
            return Err(Error::Shape("target is silent over the overlapped span".into()));
        }
        (e_t / (e_i * 10f64.powf(scene.sir_db / 10.0))).sqrt()
    };
    interferer_stem.mapv_inplace(|v| v * gain);
    let mixture = &target_stem + &interferer_stem;

    Ok(MixtureBundle {
        mixture: MultiChannelWaveform::new(mixture, fs)?,
        target: MultiChannelWaveform::new(target_stem, fs)?,
        interferer: MultiChannelWaveform::new(interferer_stem, fs)?,
        target_offset: t_off,
        interferer_offset: i_off,
        overlap,
        interferer_gain: gain,
        reference_index: r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::room::rir::RoomSpec;
    use crate::room::voice::{synthesize_utterance, TalkerProfile};

    fn scene(sir_db: f64, ratio: f64, interferer_first: bool) -> SceneSpec {
        SceneSpec {
            room: RoomSpec::new([6.0, 5.0, 3.0], 0.3),
            array_center: [3.0, 2.0, 1.3],
            array_orientation: 0.3,
            target_position: [2.0, 4.0, 1.3],
            interferer_position: [4.5, 3.8, 1.3],
            target_doa_deg: 0.0,
            interferer_doa_deg: 0.0,
            sir_db,
            overlap_ratio: ratio,
            interferer_first,
            seed: 0,
        }
    }

    fn voice(seed: u64, secs: f64) -> MultiChannelWaveform {
        let p = TalkerProfile {
            f0_hz: 100.0 + seed as f64 * 20.0,
            formant_scale: 1.0,
        };
        synthesize_utterance(seed, p, secs, 16000).unwrap()
    }

    fn naive_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len() + h.len() - 1];
        for (i, &a) in x.iter().enumerate() {
            for (j, &b) in h.iter().enumerate() {
                y[i + j] += a * b;
            }
        }
        y
    }

    #[test]
    fn fft_convolution_matches_direct_sum() {
        let x: Vec<f64> = (0..300).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let h = ImpulseResponse {
            taps: (0..77).map(|i| ((i * 31) % 13) as f64 / 6.0 - 1.0).collect(),
            sample_rate: 16000,
        };
        let got = convolve_many(&x, std::slice::from_ref(&h));
        let expect = naive_convolve(&x, &h.taps);
        assert_eq!(got[0].len(), expect.len());
        for (a, b) in got[0].iter().zip(&expect) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn sir_and_overlap_are_met() {
        let g = ArrayGeometry::default();
        let t = voice(1, 1.2);
        let i = voice(2, 1.4);
        for (sir, ratio, first) in [(0.0, 0.8, false), (-6.0, 1.0, true), (6.0, 0.6, true)] {
            let b = synthesize_mixture(&scene(sir, ratio, first), &t, &i, &g, Some(4)).unwrap();
            assert!((b.measured_sir_db() - sir).abs() < 0.1, "{}", b.measured_sir_db());
            let hop = 256.0 / t.len() as f64;
            assert!((b.overlap_fraction(t.len()) - ratio).abs() <= hop);
            assert_eq!(b.mixture.channels(), 15);
        }
    }

    #[test]
    fn mixture_is_sum_of_stems() {
        let g = ArrayGeometry::default();
        let b = synthesize_mixture(&scene(0.0, 0.9, false), &voice(3, 1.0), &voice(4, 1.0), &g, Some(3))
            .unwrap();
        let resid = b.mixture.samples() - &(b.target.samples() + b.interferer.samples());
        assert!(resid.iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn silent_interferer_leaves_target() {
        let g = ArrayGeometry::default();
        let silence = MultiChannelWaveform::mono(vec![0.0; 16000], 16000).unwrap();
        let b = synthesize_mixture(&scene(0.0, 0.7, false), &voice(5, 1.0), &silence, &g, Some(2))
            .unwrap();
        assert_eq!(b.mixture.samples(), b.target.samples());
    }

    #[test]
    fn short_interferer_rejected() {
        let g = ArrayGeometry::default();
        let r = synthesize_mixture(&scene(0.0, 1.0, false), &voice(1, 1.0), &voice(2, 0.5), &g, Some(0));
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn multichannel_sources_rejected() {
        let g = ArrayGeometry::default();
        let two = MultiChannelWaveform::zeros(2, 16000, 16000).unwrap();
        assert!(synthesize_mixture(&scene(0.0, 1.0, false), &two, &voice(2, 1.0), &g, Some(0)).is_err());
    }
}
