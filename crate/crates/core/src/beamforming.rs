//! Channel integration: mask-based PSD estimation, MVDR (steering-vector and
//! PSD-ratio forms), delay-and-sum, and filter-and-sum application.
//!
//! Conjugation conventions follow the two beamforming equations literally:
//! time-invariant weights are applied as `Y = W(f)^H X(t,f)`, while
//! time-variant (filter-and-sum) weights are applied as the plain product
//! `Y = Σ_r W_r(t,f) X_r(t,f)`. [`BeamformerWeights::to_time_variant`]
//! converts between the two so that both paths produce the same output.

use nalgebra::DVector;
use ndarray::{s, Array2, Array3, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::masking::ComplexMask;
use crate::signal::ComplexSpectrogram;
use crate::spatial::SteeringVector;

/// Diagonal loading relative to the mean diagonal of the noise PSD.
pub const DEFAULT_LOADING: f64 = 1e-6;
/// Floor on `Σ_t |M|²` in PSD estimation.
pub const MASK_ENERGY_FLOOR: f64 = 1e-10;
/// Smallest usable `|tr(Φ_n⁻¹ Φ_y)|` for the PSD-ratio MVDR.
pub const TRACE_FLOOR: f64 = 1e-12;

const HERMITIAN_TOLERANCE: f64 = 1e-12;
const PSD_EIGEN_TOLERANCE: f64 = 1e-9;

/// One `[channels × channels]` power spectral density matrix per frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdSet {
    /// `[bins × channels × channels]`
    pub matrices: Array3<Complex64>,
    /// Bins whose mask energy hit [`MASK_ENERGY_FLOOR`].
    pub floored_bins: Vec<usize>,
}

impl PsdSet {
    pub fn bins(&self) -> usize {
        self.matrices.len_of(Axis(0))
    }

    pub fn channels(&self) -> usize {
        self.matrices.len_of(Axis(1))
    }

    pub fn matrix(&self, bin: usize) -> CMatrix {
        linalg::to_matrix(self.matrices.index_axis(Axis(0), bin))
    }

    /// Verifies every matrix is Hermitian and positive semidefinite.
    pub fn check(&self) -> Result<()> {
        for f in 0..self.bins() {
            let m = self.matrix(f);
            let scale = linalg::trace(&m).re.abs().max(1.0);
            let asym = (&m - m.adjoint()).camax();
            if asym > HERMITIAN_TOLERANCE * scale {
                return Err(Error::Shape(format!("PSD at bin {f} is not Hermitian ({asym:e})")));
            }
            let min_ev = linalg::hermitian_eigenvalues(&m).first().copied().unwrap_or(0.0);
            if min_ev < -PSD_EIGEN_TOLERANCE * scale {
                return Err(Error::Shape(format!(
                    "PSD at bin {f} has negative eigenvalue {min_ev:e}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightValues {
    /// `W(f)`, `[bins × channels]`, applied as `W^H X`.
    TimeInvariant(Array2<Complex64>),
    /// `W_r(t,f)`, `[frames × bins × channels]`, applied as `Σ_r W_r X_r`.
    TimeVariant(Array3<Complex64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerWeights {
    pub values: WeightValues,
    pub reference_index: usize,
}

impl BeamformerWeights {
    pub fn time_invariant(values: Array2<Complex64>, reference_index: usize) -> Self {
        Self {
            values: WeightValues::TimeInvariant(values),
            reference_index,
        }
    }

    pub fn time_variant(values: Array3<Complex64>, reference_index: usize) -> Self {
        Self {
            values: WeightValues::TimeVariant(values),
            reference_index,
        }
    }

    /// One-hot selector of channel `r` at every bin.
    pub fn select_channel(bins: usize, channels: usize, r: usize) -> Self {
        let mut w = Array2::zeros((bins, channels));
        w.column_mut(r).fill(Complex64::new(1.0, 0.0));
        Self::time_invariant(w, r)
    }

    pub fn channels(&self) -> usize {
        match &self.values {
            WeightValues::TimeInvariant(w) => w.ncols(),
            WeightValues::TimeVariant(w) => w.len_of(Axis(2)),
        }
    }

    /// `W(f)` at one bin for time-invariant weights.
    pub fn at_bin(&self, bin: usize) -> Option<Vec<Complex64>> {
        match &self.values {
            WeightValues::TimeInvariant(w) => Some(w.row(bin).to_vec()),
            WeightValues::TimeVariant(_) => None,
        }
    }

    /// Repeats time-invariant weights over `frames`, conjugated so that the
    /// plain-product application reproduces `W^H X`. Time-variant weights are
    /// returned unchanged.
    pub fn to_time_variant(&self, frames: usize) -> Self {
        match &self.values {
            WeightValues::TimeInvariant(w) => {
                let conj = w.mapv(|v| v.conj());
                let tv = conj
                    .insert_axis(Axis(0))
                    .broadcast((frames, w.nrows(), w.ncols()))
                    .expect("broadcast along a new leading axis")
                    .to_owned();
                Self::time_variant(tv, self.reference_index)
            }
            WeightValues::TimeVariant(_) => self.clone(),
        }
    }

    fn check_finite(&self) -> Result<()> {
        let finite = |v: &Complex64| v.re.is_finite() && v.im.is_finite();
        let ok = match &self.values {
            WeightValues::TimeInvariant(w) => w.iter().all(finite),
            WeightValues::TimeVariant(w) => w.iter().all(finite),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("beamformer weights contain non-finite values".into()))
        }
    }
}

/// Mask-weighted spatial covariance per bin:
/// `Φ(f) = Σ_t (M X)(M X)^H / Σ_t |M|²`, symmetrised to be exactly Hermitian.
pub fn estimate_psd(spec: &ComplexSpectrogram, mask: &ComplexMask) -> Result<PsdSet> {
    let (channels, frames, bins) = spec.data().dim();
    if mask.values.dim() != (frames, bins) {
        return Err(Error::Shape(format!(
            "mask {:?} vs spectrogram frames×bins {:?}",
            mask.values.dim(),
            (frames, bins)
        )));
    }
    let data = spec.data();
    let per_bin: Vec<(Array2<Complex64>, bool)> = (0..bins)
        .into_par_iter()
        .map(|f| {
            let mut acc = Array2::<Complex64>::zeros((channels, channels));
            let mut energy = 0.0;
            for t in 0..frames {
                let m = mask.values[[t, f]];
                let w = m.norm_sqr();
                if w == 0.0 {
                    continue;
                }
                energy += w;
                let x = data.slice(s![.., t, f]);
                for i in 0..channels {
                    let xi = x[i] * m;
                    for j in 0..channels {
                        acc[[i, j]] += xi * (x[j] * m).conj();
                    }
                }
            }
            let floored = energy < MASK_ENERGY_FLOOR;
            let denom = energy.max(MASK_ENERGY_FLOOR);
            let herm = Array2::from_shape_fn((channels, channels), |(i, j)| {
                (acc[[i, j]] + acc[[j, i]].conj()) * (0.5 / denom)
            });
            (herm, floored)
        })
        .collect();

    let mut matrices = Array3::zeros((bins, channels, channels));
    let mut floored_bins = Vec::new();
    for (f, (m, floored)) in per_bin.into_iter().enumerate() {
        matrices.index_axis_mut(Axis(0), f).assign(&m);
        if floored {
            floored_bins.push(f);
        }
    }
    if !floored_bins.is_empty() {
        log::debug!("mask energy floored at {} bins", floored_bins.len());
    }
    Ok(PsdSet {
        matrices,
        floored_bins,
    })
}

fn column(values: &[Complex64]) -> CMatrix {
    CMatrix::from_column_slice(values.len(), 1, values)
}

/// `W(f) = Φ_n⁻¹ G / (G^H Φ_n⁻¹ G)` with `Φ_n` diagonally loaded by
/// `loading · tr(Φ_n) / R`.
pub fn mvdr_from_steering(
    psd_noise: &PsdSet,
    steering: &SteeringVector,
    loading: f64,
    reference_index: usize,
) -> Result<BeamformerWeights> {
    if steering.channels() != psd_noise.channels() || steering.bins() != psd_noise.bins() {
        return Err(Error::Shape("steering vector and noise PSD disagree in shape".into()));
    }
    let rows: Vec<Result<Vec<Complex64>>> = (0..psd_noise.bins())
        .into_par_iter()
        .map(|f| {
            let phi = linalg::load_diagonal(&psd_noise.matrix(f), loading);
            let g = column(&steering.at_bin(f));
            let u = linalg::hermitian_solve(&phi, &g).ok_or(Error::Singular { bin: f })?;
            let denom = (g.adjoint() * &u)[(0, 0)];
            if denom.norm() == 0.0 || !denom.re.is_finite() {
                return Err(Error::Singular { bin: f });
            }
            Ok(u.iter().map(|v| v / denom).collect())
        })
        .collect();
    assemble(rows, psd_noise.channels(), reference_index)
}

fn mvdr_psd_bin(
    speech: &CMatrix,
    noise: &CMatrix,
    reference_index: usize,
    loading: f64,
    bin: usize,
) -> Result<Vec<Complex64>> {
    let phi_n = linalg::load_diagonal(noise, loading);
    let ratio = linalg::hermitian_solve(&phi_n, speech).ok_or(Error::Singular { bin })?;
    let tr = linalg::trace(&ratio);
    if !(tr.norm() >= TRACE_FLOOR) {
        return Err(Error::DegenerateSpeechPsd {
            bin,
            trace: tr.norm(),
        });
    }
    Ok(ratio.column(reference_index).iter().map(|v| v / tr).collect())
}

/// `W(f) = Φ_n⁻¹ Φ_y u_r / tr(Φ_n⁻¹ Φ_y)`.
pub fn mvdr_from_psd(
    psd_speech: &PsdSet,
    psd_noise: &PsdSet,
    reference_index: usize,
    loading: f64,
) -> Result<BeamformerWeights> {
    check_psd_pair(psd_speech, psd_noise, reference_index)?;
    let rows: Vec<Result<Vec<Complex64>>> = (0..psd_noise.bins())
        .into_par_iter()
        .map(|f| {
            mvdr_psd_bin(
                &psd_speech.matrix(f),
                &psd_noise.matrix(f),
                reference_index,
                loading,
                f,
            )
        })
        .collect();
    assemble(rows, psd_noise.channels(), reference_index)
}

/// Like [`mvdr_from_psd`], but bins that are singular or have a degenerate
/// speech PSD pass the reference channel through instead of failing.
/// Returns the weights and the affected bins.
pub fn mvdr_from_psd_or_passthrough(
    psd_speech: &PsdSet,
    psd_noise: &PsdSet,
    reference_index: usize,
    loading: f64,
) -> Result<(BeamformerWeights, Vec<usize>)> {
    check_psd_pair(psd_speech, psd_noise, reference_index)?;
    let channels = psd_noise.channels();
    let rows: Vec<(Vec<Complex64>, bool)> = (0..psd_noise.bins())
        .into_par_iter()
        .map(|f| {
            match mvdr_psd_bin(
                &psd_speech.matrix(f),
                &psd_noise.matrix(f),
                reference_index,
                loading,
                f,
            ) {
                Ok(w) => (w, false),
                Err(_) => {
                    let mut w = vec![Complex64::default(); channels];
                    w[reference_index] = Complex64::new(1.0, 0.0);
                    (w, true)
                }
            }
        })
        .collect();
    let fallback: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter_map(|(f, (_, fell_back))| fell_back.then_some(f))
        .collect();
    let weights = assemble(rows.into_iter().map(|(w, _)| Ok(w)).collect(), channels, reference_index)?;
    Ok((weights, fallback))
}

fn check_psd_pair(speech: &PsdSet, noise: &PsdSet, reference_index: usize) -> Result<()> {
    if speech.matrices.dim() != noise.matrices.dim() {
        return Err(Error::Shape("speech and noise PSDs disagree in shape".into()));
    }
    if reference_index >= noise.channels() {
        return Err(Error::Config(format!(
            "reference channel {reference_index} out of range for {} channels",
            noise.channels()
        )));
    }
    Ok(())
}

fn assemble(
    rows: Vec<Result<Vec<Complex64>>>,
    channels: usize,
    reference_index: usize,
) -> Result<BeamformerWeights> {
    let mut w = Array2::zeros((rows.len(), channels));
    for (f, row) in rows.into_iter().enumerate() {
        for (dst, v) in w.row_mut(f).iter_mut().zip(row?) {
            *dst = v;
        }
    }
    let weights = BeamformerWeights::time_invariant(w, reference_index);
    weights.check_finite()?;
    Ok(weights)
}

/// `W(f) = G(f) / R`.
pub fn delay_and_sum(steering: &SteeringVector, reference_index: usize) -> BeamformerWeights {
    let r = steering.channels() as f64;
    BeamformerWeights::time_invariant(steering.values.t().mapv(|g| g / r), reference_index)
}

/// Single-channel beamformer output.
pub fn apply_weights(weights: &BeamformerWeights, spec: &ComplexSpectrogram) -> Result<ComplexSpectrogram> {
    let (channels, frames, bins) = spec.data().dim();
    if weights.channels() != channels {
        return Err(Error::Shape(format!(
            "weights have {} channels, spectrogram has {channels}",
            weights.channels()
        )));
    }
    let x = spec.data();
    let out = match &weights.values {
        WeightValues::TimeInvariant(w) => {
            if w.nrows() != bins {
                return Err(Error::Shape(format!("weights have {} bins, spectrogram has {bins}", w.nrows())));
            }
            Array2::from_shape_fn((frames, bins), |(t, f)| {
                (0..channels).map(|r| w[[f, r]].conj() * x[[r, t, f]]).sum()
            })
        }
        WeightValues::TimeVariant(w) => {
            if w.dim() != (frames, bins, channels) {
                return Err(Error::Shape(format!(
                    "time-variant weights {:?} vs spectrogram frames×bins×channels {:?}",
                    w.dim(),
                    (frames, bins, channels)
                )));
            }
            Array2::from_shape_fn((frames, bins), |(t, f)| {
                (0..channels).map(|r| w[[t, f, r]] * x[[r, t, f]]).sum()
            })
        }
    };
    ComplexSpectrogram::from_mono(out, *spec.config(), spec.sample_rate())
}

/// Per-bin frame-averaged residual powers of a beamformer.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualDiagnostics {
    /// `E_t |(u_r − W)^H Y|²`
    pub distortion_power: Vec<f64>,
    /// `E_t |W^H N|²`
    pub noise_power: Vec<f64>,
}

/// Residual target distortion and residual noise, given multichannel target
/// (`Y`) and noise (`N`) spectrograms.
pub fn residual_diagnostics(
    weights: &BeamformerWeights,
    target: &ComplexSpectrogram,
    noise: &ComplexSpectrogram,
) -> Result<ResidualDiagnostics> {
    if !target.same_shape(noise) {
        return Err(Error::Shape("target and noise spectrograms differ in shape".into()));
    }
    let r = weights.reference_index;
    if r >= target.channels() {
        return Err(Error::Shape(format!("reference channel {r} out of range")));
    }
    let y_out = apply_weights(weights, target)?;
    let n_out = apply_weights(weights, noise)?;
    let frames = target.frames().max(1) as f64;
    let y_ref = target.channel(r);
    let distortion_power = (0..target.bins())
        .map(|f| {
            (0..target.frames())
                .map(|t| (y_ref[[t, f]] - y_out.channel(0)[[t, f]]).norm_sqr())
                .sum::<f64>()
                / frames
        })
        .collect();
    let noise_power = (0..target.bins())
        .map(|f| n_out.channel(0).column(f).iter().map(|v| v.norm_sqr()).sum::<f64>() / frames)
        .collect();
    Ok(ResidualDiagnostics {
        distortion_power,
        noise_power,
    })
}

/// Output power `W^H Φ W` of time-invariant weights at every bin.
pub fn output_power(weights: &BeamformerWeights, psd: &PsdSet) -> Result<Vec<f64>> {
    let WeightValues::TimeInvariant(w) = &weights.values else {
        return Err(Error::Shape("output power needs time-invariant weights".into()));
    };
    Ok((0..psd.bins())
        .map(|f| {
            let wf = DVector::from_iterator(w.ncols(), w.row(f).iter().copied());
            (wf.adjoint() * psd.matrix(f) * &wf)[(0, 0)].re
        })
        .collect())
}
