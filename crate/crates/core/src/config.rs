//! Pipeline configuration, loaded from TOML.
//!
//! Every key is optional; missing keys take the defaults below and unknown
//! keys are rejected. The configuration fingerprint hashes everything except
//! the `[output]` table, which only names where results go.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::room::{ArrayGeometry, SceneRanges};
use crate::separation::{MaskSource, Method, SeparationSettings};
use crate::signal::{StftConfig, WavEncoding};
use crate::spatial::PairList;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Master seed; utterance `i` of a simulated corpus uses `seed + i`.
    pub seed: u64,
    pub sample_rate: u32,
    pub stft: StftConfig,
    pub geometry: ArrayGeometry,
    pub pairs: PairList,
    pub simulation: SimulationConfig,
    pub separation: SeparationConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub scene: SceneRanges,
    /// Dry utterance duration range, seconds.
    pub utterance_seconds: [f64; 2],
    /// Image-source reflection order; derived from each room when absent.
    pub max_order: Option<usize>,
    pub encoding: WavEncoding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeparationConfig {
    pub method: Method,
    pub mask_source: MaskSource,
    /// Per-component bound of oracle masks.
    pub mask_bound: f64,
    /// Angle-feature threshold of the heuristic masks.
    pub af_threshold: f64,
    /// Diagonal loading relative to the mean noise-PSD diagonal.
    pub loading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub simulate_dir: PathBuf,
    pub separate_dir: PathBuf,
    pub features_dir: PathBuf,
    pub report: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sample_rate: 16000,
            stft: StftConfig::default(),
            geometry: ArrayGeometry::default(),
            pairs: PairList::default(),
            simulation: SimulationConfig::default(),
            separation: SeparationConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            scene: SceneRanges::default(),
            utterance_seconds: [2.0, 3.0],
            max_order: None,
            encoding: WavEncoding::Float32,
        }
    }
}

impl Default for SeparationConfig {
    fn default() -> Self {
        Self {
            method: Method::Mvdr,
            mask_source: MaskSource::Oracle,
            mask_bound: crate::masking::DEFAULT_MASK_BOUND,
            af_threshold: 0.5,
            loading: crate::beamforming::DEFAULT_LOADING,
        }
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            simulate_dir: "out/corpus".into(),
            separate_dir: "out/separated".into(),
            features_dir: "out/features".into(),
            report: "out/report.json".into(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serialises to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        self.geometry.validate()?;
        self.geometry.axis_offsets()?;
        self.pairs.validate(self.geometry.channels())?;
        self.simulation.scene.validate()?;
        let [lo, hi] = self.simulation.utterance_seconds;
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
            return Err(Error::Config(format!("simulation.utterance_seconds: invalid range [{lo}, {hi}]")));
        }
        if lo * f64::from(self.sample_rate) < self.stft.window_length() as f64 {
            return Err(Error::Config("simulation.utterance_seconds: shorter than one STFT window".into()));
        }
        let sep = &self.separation;
        if !(sep.mask_bound > 0.0) {
            return Err(Error::Config("separation.mask_bound must be positive".into()));
        }
        if !(-1.0..=1.0).contains(&sep.af_threshold) {
            return Err(Error::Config("separation.af_threshold must lie in [-1, 1]".into()));
        }
        if !(sep.loading.is_finite() && sep.loading >= 0.0) {
            return Err(Error::Config("separation.loading must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical (key-sorted, compact) JSON form of every
    /// result-affecting field, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut value = serde_json::to_value(self).expect("configuration serialises");
        if let Some(map) = value.as_object_mut() {
            map.remove("output");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    pub fn separation_settings(&self) -> SeparationSettings {
        SeparationSettings {
            stft: self.stft,
            geometry: self.geometry.clone(),
            pairs: self.pairs.clone(),
            speed_of_sound: self.simulation.scene.speed_of_sound,
            mask_bound: self.separation.mask_bound,
            af_threshold: self.separation.af_threshold,
            loading: self.separation.loading,
        }
    }
}
