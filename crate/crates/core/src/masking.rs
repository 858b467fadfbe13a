//! Complex time-frequency masks.

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ComplexSpectrogram;
use crate::spatial::{FeatureKind, FeatureMatrix};

/// Default per-component bound of oracle complex ratio masks.
pub const DEFAULT_MASK_BOUND: f64 = 10.0;
/// Mixture bins below this magnitude get a zero oracle mask.
pub const ORACLE_MAGNITUDE_FLOOR: f64 = 1e-10;

/// `[frames × bins]` complex mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMask {
    pub values: Array2<Complex64>,
    /// When set, `|Re|` and `|Im|` never exceed it.
    pub compression_bound: Option<f64>,
}

impl ComplexMask {
    pub fn new(values: Array2<Complex64>, compression_bound: Option<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Shape("mask contains non-finite values".into()));
        }
        if let Some(k) = compression_bound {
            if values.iter().any(|v| v.re.abs() > k || v.im.abs() > k) {
                return Err(Error::Shape(format!("mask exceeds its bound {k}")));
            }
        }
        Ok(Self {
            values,
            compression_bound,
        })
    }

    pub fn ones(frames: usize, bins: usize) -> Self {
        Self {
            values: Array2::from_elem((frames, bins), Complex64::new(1.0, 0.0)),
            compression_bound: None,
        }
    }

    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn bins(&self) -> usize {
        self.values.ncols()
    }
}

fn check_mono_pair(a: &ComplexSpectrogram, b: &ComplexSpectrogram) -> Result<()> {
    if a.channels() != 1 || b.channels() != 1 {
        return Err(Error::Shape("oracle masks are built from single-channel spectrograms".into()));
    }
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "{:?} vs {:?}",
            a.data().dim(),
            b.data().dim()
        )));
    }
    Ok(())
}

/// Oracle complex ratio mask `S / X` with each component clipped to `[−bound, bound]`.
/// Pass `f64::INFINITY` for an unbounded mask.
pub fn oracle_crm(
    stem: &ComplexSpectrogram,
    mixture: &ComplexSpectrogram,
    bound: f64,
) -> Result<ComplexMask> {
    check_mono_pair(stem, mixture)?;
    if !(bound > 0.0) {
        return Err(Error::Config(format!("mask bound must be positive, got {bound}")));
    }
    let values = Zip::from(&stem.channel(0))
        .and(&mixture.channel(0))
        .map_collect(|&s, &x| {
            if x.norm() < ORACLE_MAGNITUDE_FLOOR {
                Complex64::default()
            } else {
                let m = s / x;
                Complex64::new(m.re.clamp(-bound, bound), m.im.clamp(-bound, bound))
            }
        });
    ComplexMask::new(values, bound.is_finite().then_some(bound))
}

/// Masked reference channel, written out component-wise:
/// `Re = Re M · Re X − Im M · Im X`, `Im = Im M · Re X + Re M · Im X`.
pub fn apply_mask(mask: &ComplexMask, spec: &ComplexSpectrogram) -> Result<ComplexSpectrogram> {
    if spec.channels() != 1 {
        return Err(Error::Shape(format!(
            "mask applies to one channel, got {}",
            spec.channels()
        )));
    }
    if mask.values.dim() != (spec.frames(), spec.bins()) {
        return Err(Error::Shape(format!(
            "mask {:?} vs spectrogram {:?}",
            mask.values.dim(),
            (spec.frames(), spec.bins())
        )));
    }
    let out = Zip::from(&mask.values)
        .and(&spec.channel(0))
        .map_collect(|m, x| {
            Complex64::new(m.re * x.re - m.im * x.im, m.im * x.re + m.re * x.im)
        });
    ComplexSpectrogram::from_mono(out, *spec.config(), spec.sample_rate())
}

/// Binary target/noise masks from the angle feature: target is 1 where
/// `AF ≥ threshold`, noise is its complement.
pub fn af_heuristic_masks(af: &FeatureMatrix, threshold: f64) -> Result<(ComplexMask, ComplexMask)> {
    if af.kind != FeatureKind::AngleFeature {
        return Err(Error::Shape("expected an angle feature matrix".into()));
    }
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("threshold {threshold} outside [-1, 1]")));
    }
    let view = af.angle_feature();
    let target = view.mapv(|v| Complex64::new(if v >= threshold { 1.0 } else { 0.0 }, 0.0));
    let noise = target.mapv(|m| Complex64::new(1.0 - m.re, 0.0));
    Ok((
        ComplexMask::new(target, Some(1.0))?,
        ComplexMask::new(noise, Some(1.0))?,
    ))
}
