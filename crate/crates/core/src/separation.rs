//! Per-utterance separation: STFT, masks, channel integration, iSTFT.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use ndarray::{Array2, Ix2, Ix3};
use serde::{Deserialize, Serialize};

use crate::beamforming::{
    apply_weights, delay_and_sum, estimate_psd, mvdr_from_psd_or_passthrough, BeamformerWeights,
};
use crate::error::{Error, Result};
use crate::masking::{af_heuristic_masks, apply_mask, oracle_crm, ComplexMask};
use crate::room::ArrayGeometry;
use crate::signal::{istft, stft, ComplexSpectrogram, MultiChannelWaveform, StftConfig};
use crate::spatial::{angle_feature, steering_vector, PairList, SteeringVector};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Complex mask on the reference channel.
    TfMask,
    /// Time-variant per-channel weights, plain product and sum.
    FilterSum,
    /// One time-invariant MVDR filter per utterance from mask-based PSDs.
    Mvdr,
    /// Steering-vector delay-and-sum.
    DelaySum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskSource {
    /// Ratio masks from the reverberant stems.
    Oracle,
    /// Thresholded angle feature toward the target direction.
    AfHeuristic,
    /// Externally estimated masks read from tensor files.
    File,
}

macro_rules! snake_case_names {
    ($ty:ty { $($variant:ident => $name:literal),* $(,)? }) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$(<$ty>::$variant),*];

            pub fn as_str(self) -> &'static str {
                match self { $(<$ty>::$variant => $name),* }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(<$ty>::$variant),)*
                    other => Err(Error::Config(format!(
                        "unknown {} {other:?}; expected one of {}",
                        stringify!($ty),
                        [$($name),*].join(", ")
                    ))),
                }
            }
        }
    };
}

snake_case_names!(Method {
    TfMask => "tf_mask",
    FilterSum => "filter_sum",
    Mvdr => "mvdr",
    DelaySum => "delay_sum",
});

snake_case_names!(MaskSource {
    Oracle => "oracle",
    AfHeuristic => "af_heuristic",
    File => "file",
});

/// Fixed processing parameters shared by every utterance of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationSettings {
    pub stft: StftConfig,
    pub geometry: ArrayGeometry,
    pub pairs: PairList,
    pub speed_of_sound: f64,
    pub mask_bound: f64,
    pub af_threshold: f64,
    pub loading: f64,
}

impl Default for SeparationSettings {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            geometry: ArrayGeometry::default(),
            pairs: PairList::default(),
            speed_of_sound: crate::room::DEFAULT_SPEED_OF_SOUND,
            mask_bound: crate::masking::DEFAULT_MASK_BOUND,
            af_threshold: 0.5,
            loading: crate::beamforming::DEFAULT_LOADING,
        }
    }
}

/// Tensor files carrying externally estimated quantities.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalInputs {
    /// c128 `[frames × bins]` target mask.
    pub target_mask: Option<PathBuf>,
    /// c128 `[frames × bins]` noise mask; `1 − target` when absent.
    pub noise_mask: Option<PathBuf>,
    /// c128 `[frames × bins × channels]` time-variant filter.
    pub filter: Option<PathBuf>,
}

/// Per-utterance side information.
#[derive(Debug, Clone, Copy, Default)]
pub struct SceneInfo<'a> {
    pub target_doa_deg: Option<f64>,
    /// Reverberant multichannel target stem, needed for oracle masks.
    pub target_stem: Option<&'a MultiChannelWaveform>,
    pub external: Option<&'a ExternalInputs>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Request {
    pub method: Method,
    pub mask_source: MaskSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationOutput {
    pub waveform: MultiChannelWaveform,
    /// Bins where the MVDR solve fell back to passing the reference channel through.
    pub passthrough_bins: Vec<usize>,
    /// Bins where a mask had no energy during PSD estimation.
    pub floored_bins: Vec<usize>,
}

struct Context<'a> {
    settings: &'a SeparationSettings,
    scene: SceneInfo<'a>,
    mixture: &'a MultiChannelWaveform,
    spec: ComplexSpectrogram,
    reference: usize,
}

impl Context<'_> {
    fn doa(&self) -> Result<f64> {
        self.scene
            .target_doa_deg
            .ok_or_else(|| Error::Missing("target direction of arrival".into()))
    }

    fn steering(&self) -> Result<SteeringVector> {
        steering_vector(
            &self.settings.geometry,
            self.doa()?,
            &self.settings.stft,
            self.mixture.sample_rate(),
            self.settings.speed_of_sound,
        )
    }

    fn external(&self) -> Result<&ExternalInputs> {
        self.scene
            .external
            .ok_or_else(|| Error::Missing("external tensor inputs".into()))
    }

    fn read_mask(&self, path: &std::path::Path) -> Result<ComplexMask> {
        let values = Tensor::read(path)?
            .into_complex()?
            .into_dimensionality::<Ix2>()
            .map_err(|_| Error::Shape(format!("{}: mask tensor must be two-dimensional", path.display())))?;
        let expected = (self.spec.frames(), self.spec.bins());
        if values.dim() != expected {
            return Err(Error::Shape(format!(
                "{}: mask is {:?}, spectrogram frames×bins is {expected:?}",
                path.display(),
                values.dim()
            )));
        }
        ComplexMask::new(values, None)
    }

    /// `(target, noise)` masks from the requested source.
    fn masks(&self, source: MaskSource) -> Result<(ComplexMask, ComplexMask)> {
        match source {
            MaskSource::Oracle => {
                let stem = self
                    .scene
                    .target_stem
                    .ok_or_else(|| Error::Missing("reverberant target stem for oracle masks".into()))?;
                if stem.samples().dim() != self.mixture.samples().dim() {
                    return Err(Error::Shape("target stem and mixture differ in shape".into()));
                }
                let r = self.reference;
                let mix_ref = self.spec.select_channel(r)?;
                let target_wave = stem.select_channel(r)?;
                let noise_wave = MultiChannelWaveform::new(
                    &self.mixture.select_channel(r)?.into_samples() - target_wave.samples(),
                    self.mixture.sample_rate(),
                )?;
                let target_ref = stft(&target_wave, &self.settings.stft)?;
                let noise_ref = stft(&noise_wave, &self.settings.stft)?;
                Ok((
                    oracle_crm(&target_ref, &mix_ref, self.settings.mask_bound)?,
                    oracle_crm(&noise_ref, &mix_ref, self.settings.mask_bound)?,
                ))
            }
            MaskSource::AfHeuristic => {
                let af = angle_feature(&self.spec, &self.steering()?, &self.settings.pairs)?;
                af_heuristic_masks(&af, self.settings.af_threshold)
            }
            MaskSource::File => {
                let ext = self.external()?;
                let path = ext
                    .target_mask
                    .as_ref()
                    .ok_or_else(|| Error::Missing("target mask tensor path".into()))?;
                let target = self.read_mask(path)?;
                let noise = match &ext.noise_mask {
                    Some(p) => self.read_mask(p)?,
                    None => ComplexMask::new(target.values.mapv(|m| 1.0 - m), None)?,
                };
                Ok((target, noise))
            }
        }
    }

    fn mvdr(&self, source: MaskSource) -> Result<(BeamformerWeights, Vec<usize>, Vec<usize>)> {
        let (target, noise) = self.masks(source)?;
        let psd_y = estimate_psd(&self.spec, &target)?;
        let psd_n = estimate_psd(&self.spec, &noise)?;
        let (weights, passthrough) =
            mvdr_from_psd_or_passthrough(&psd_y, &psd_n, self.reference, self.settings.loading)?;
        let mut floored = psd_y.floored_bins;
        floored.extend(psd_n.floored_bins);
        floored.sort_unstable();
        floored.dedup();
        if !passthrough.is_empty() {
            log::debug!("MVDR passed the reference through at {} bins", passthrough.len());
        }
        Ok((weights, passthrough, floored))
    }

    fn filter(&self) -> Result<Option<BeamformerWeights>> {
        let Some(path) = self.scene.external.and_then(|e| e.filter.as_ref()) else {
            return Ok(None);
        };
        let values = Tensor::read(path)?
            .into_complex()?
            .into_dimensionality::<Ix3>()
            .map_err(|_| Error::Shape(format!("{}: filter tensor must be three-dimensional", path.display())))?;
        Ok(Some(BeamformerWeights::time_variant(values, self.reference)))
    }
}

/// Separates the target talker from a multichannel mixture into a mono
/// waveform of the same length.
///
/// `filter_sum` applies the filter tensor when one is supplied; otherwise it
/// broadcasts the utterance MVDR solution (or, without usable masks, the
/// delay-and-sum solution) over frames.
pub fn separate(
    mixture: &MultiChannelWaveform,
    request: Request,
    scene: SceneInfo<'_>,
    settings: &SeparationSettings,
) -> Result<SeparationOutput> {
    let reference = settings.geometry.reference_index;
    if mixture.channels() != settings.geometry.channels() {
        return Err(Error::Shape(format!(
            "mixture has {} channels, array geometry has {}",
            mixture.channels(),
            settings.geometry.channels()
        )));
    }
    let spec = stft(mixture, &settings.stft)?;
    let ctx = Context {
        settings,
        scene,
        mixture,
        spec,
        reference,
    };

    let mut passthrough_bins = Vec::new();
    let mut floored_bins = Vec::new();
    let output: ComplexSpectrogram = match request.method {
        Method::TfMask => {
            let (target, _) = ctx.masks(request.mask_source)?;
            apply_mask(&target, &ctx.spec.select_channel(reference)?)?
        }
        Method::DelaySum => apply_weights(&delay_and_sum(&ctx.steering()?, reference), &ctx.spec)?,
        Method::Mvdr => {
            let (w, p, f) = ctx.mvdr(request.mask_source)?;
            passthrough_bins = p;
            floored_bins = f;
            apply_weights(&w, &ctx.spec)?
        }
        Method::FilterSum => {
            let weights = match ctx.filter()? {
                Some(w) => w,
                None => {
                    let invariant = match ctx.mvdr(request.mask_source) {
                        Ok((w, p, f)) => {
                            passthrough_bins = p;
                            floored_bins = f;
                            w
                        }
                        Err(Error::Missing(what)) if ctx.scene.target_doa_deg.is_some() => {
                            log::debug!("filter_sum falls back to delay-and-sum: missing {what}");
                            delay_and_sum(&ctx.steering()?, reference)
                        }
                        Err(e) => return Err(e),
                    };
                    invariant.to_time_variant(ctx.spec.frames())
                }
            };
            apply_weights(&weights, &ctx.spec)?
        }
    };
    let waveform = istft(&output, &settings.stft, mixture.len())?;
    Ok(SeparationOutput {
        waveform,
        passthrough_bins,
        floored_bins,
    })
}

/// Oracle target mask at the reference channel, exposed for inspection and tests.
pub fn oracle_target_mask(
    mixture: &MultiChannelWaveform,
    target_stem: &MultiChannelWaveform,
    settings: &SeparationSettings,
) -> Result<Array2<num_complex::Complex64>> {
    let r = settings.geometry.reference_index;
    let mix = stft(&mixture.select_channel(r)?, &settings.stft)?;
    let tgt = stft(&target_stem.select_channel(r)?, &settings.stft)?;
    Ok(oracle_crm(&tgt, &mix, settings.mask_bound)?.values)
}
