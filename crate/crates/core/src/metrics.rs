//! Scale-invariant SNR and corpus-level evaluation reports.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::Manifest;
use crate::signal::{read_wav, MultiChannelWaveform};

/// Si-SNR values are clamped to `±SI_SNR_CAP_DB`.
pub const SI_SNR_CAP_DB: f64 = 80.0;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiSnrResult {
    pub value_db: f64,
    /// Projection gain `⟨ŝ, s⟩ / ‖s‖²` of the mean-removed signals.
    pub scale_factor: f64,
}

fn zero_mean(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len().max(1) as f64;
    x.iter().map(|v| v - mean).collect()
}

/// Energy below which a mean-removed signal is indistinguishable from the
/// rounding residue of removing the mean of a constant.
fn rounding_floor(x: &[f64]) -> f64 {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let n = x.len() as f64;
    (n * f64::EPSILON * peak).powi(2) * n
}

/// Si-SNR of `estimate` against `reference`, both mean-removed. The result is
/// not symmetric in its arguments: the projection gain is taken onto
/// `reference`.
pub fn si_snr(estimate: &[f64], reference: &[f64]) -> Result<SiSnrResult> {
    if estimate.len() != reference.len() {
        return Err(Error::Shape(format!(
            "estimate has {} samples, reference has {}",
            estimate.len(),
            reference.len()
        )));
    }
    let s = zero_mean(reference);
    let e = zero_mean(estimate);
    let ss: f64 = s.iter().map(|v| v * v).sum();
    let ee: f64 = e.iter().map(|v| v * v).sum();
    if ss <= rounding_floor(reference) {
        return Err(Error::ZeroReference);
    }
    if ee <= rounding_floor(estimate) {
        return Ok(SiSnrResult {
            value_db: -SI_SNR_CAP_DB,
            scale_factor: 0.0,
        });
    }
    let scale = e.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / ss;
    let target: f64 = scale * scale * ss;
    let residual: f64 = e.iter().zip(&s).map(|(a, b)| (a - scale * b).powi(2)).sum();
    let value = if target == 0.0 {
        -SI_SNR_CAP_DB
    } else if residual == 0.0 {
        SI_SNR_CAP_DB
    } else {
        (10.0 * (target / residual).log10()).clamp(-SI_SNR_CAP_DB, SI_SNR_CAP_DB)
    };
    Ok(SiSnrResult {
        value_db: value,
        scale_factor: scale,
    })
}

/// [`si_snr`] on single-channel waveforms of equal rate.
pub fn si_snr_waveforms(estimate: &MultiChannelWaveform, reference: &MultiChannelWaveform) -> Result<SiSnrResult> {
    if estimate.channels() != 1 || reference.channels() != 1 {
        return Err(Error::Shape("Si-SNR needs single-channel signals".into()));
    }
    if estimate.sample_rate() != reference.sample_rate() {
        return Err(Error::Shape("Si-SNR signals differ in sample rate".into()));
    }
    si_snr(&estimate.channel(0).to_vec(), &reference.channel(0).to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScore {
    pub id: String,
    pub si_snr_in: f64,
    pub si_snr_out: f64,
    pub delta: f64,
}

/// Population statistics (`std` divides by `n`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len().is_multiple_of(2) {
            0.5 * (sorted[mid - 1] + sorted[mid])
        } else {
            sorted[mid]
        };
        Some(Self { mean, median, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub si_snr_in: Summary,
    pub si_snr_out: Summary,
    pub delta: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingUtterance {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub method: Option<String>,
    pub mask_source: Option<String>,
    pub config_fingerprint: Option<String>,
    pub complete: bool,
    pub utterances: Vec<UtteranceScore>,
    /// Absent when no utterance could be scored.
    pub summary: Option<CorpusSummary>,
    pub missing: Vec<MissingUtterance>,
}

/// Run metadata that [`evaluate`] copies into the report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunInfo {
    pub method: Option<String>,
    pub mask_source: Option<String>,
    pub config_fingerprint: Option<String>,
}

impl EvalReport {
    pub fn from_scores(scores: Vec<UtteranceScore>, missing: Vec<MissingUtterance>, info: RunInfo) -> Self {
        let column = |f: fn(&UtteranceScore) -> f64| scores.iter().map(f).collect::<Vec<_>>();
        let summary = Summary::of(&column(|s| s.delta)).map(|delta| CorpusSummary {
            si_snr_in: Summary::of(&column(|s| s.si_snr_in)).expect("non-empty"),
            si_snr_out: Summary::of(&column(|s| s.si_snr_out)).expect("non-empty"),
            delta,
        });
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            method: info.method,
            mask_source: info.mask_source,
            config_fingerprint: info.config_fingerprint,
            complete: missing.is_empty(),
            utterances: scores,
            summary,
            missing,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    /// Plain-text table, one row per utterance followed by the corpus summary.
    pub fn table(&self) -> String {
        let width = self.utterances.iter().map(|u| u.id.len()).max().unwrap_or(2).max(10);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>10}  {:>10}  {:>10}", "utterance", "in [dB]", "out [dB]", "delta [dB]");
        for u in &self.utterances {
            let _ = writeln!(
                out,
                "{:<width$}  {:>10.3}  {:>10.3}  {:>10.3}",
                u.id, u.si_snr_in, u.si_snr_out, u.delta
            );
        }
        if let Some(s) = &self.summary {
            for (label, pick) in [
                ("mean", (|x: &Summary| x.mean) as fn(&Summary) -> f64),
                ("median", |x: &Summary| x.median),
                ("std", |x: &Summary| x.std),
            ] {
                let _ = writeln!(
                    out,
                    "{:<width$}  {:>10.3}  {:>10.3}  {:>10.3}",
                    label,
                    pick(&s.si_snr_in),
                    pick(&s.si_snr_out),
                    pick(&s.delta)
                );
            }
        }
        for m in &self.missing {
            let _ = writeln!(out, "missing {}: {}", m.id, m.reason);
        }
        if !self.complete {
            let _ = writeln!(out, "report incomplete: {} utterance(s) not scored", self.missing.len());
        }
        out
    }
}

/// Name of the separated output for an utterance.
pub fn separated_file_name(id: &str) -> String {
    format!("{id}.wav")
}

fn score_one(manifest: &Manifest, index: usize, separated_dir: &Path) -> Result<UtteranceScore> {
    let utt = &manifest.utterances[index];
    let r = manifest.geometry.reference_index;
    let mixture = read_wav(manifest.resolve(&utt.paths.mixture))?.select_channel(r)?;
    let target = read_wav(manifest.resolve(&utt.paths.target))?.select_channel(r)?;
    let separated = read_wav(separated_dir.join(separated_file_name(&utt.id)))?;
    if separated.channels() != 1 {
        return Err(Error::Shape(format!("separated output has {} channels", separated.channels())));
    }
    if separated.len() != target.len() {
        return Err(Error::Shape(format!(
            "separated output has {} samples, target has {}",
            separated.len(),
            target.len()
        )));
    }
    let si_snr_in = si_snr_waveforms(&mixture, &target)?.value_db;
    let si_snr_out = si_snr_waveforms(&separated, &target)?.value_db;
    Ok(UtteranceScore {
        id: utt.id.clone(),
        si_snr_in,
        si_snr_out,
        delta: si_snr_out - si_snr_in,
    })
}

/// Scores every manifest utterance against `<separated_dir>/<id>.wav`.
/// Unreadable or missing outputs are listed in the report instead of failing.
pub fn evaluate(manifest: &Manifest, separated_dir: &Path, info: RunInfo) -> EvalReport {
    let results: Vec<Result<UtteranceScore>> = (0..manifest.utterances.len())
        .into_par_iter()
        .map(|i| score_one(manifest, i, separated_dir))
        .collect();
    let mut scores = Vec::new();
    let mut missing = Vec::new();
    for (utt, res) in manifest.utterances.iter().zip(results) {
        match res {
            Ok(s) => scores.push(s),
            Err(e) => missing.push(MissingUtterance {
                id: utt.id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    EvalReport::from_scores(scores, missing, info)
}
