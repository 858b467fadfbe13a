//! Batch drivers behind the `simulate`, `separate`, `evaluate` and
//! `features` subcommands.
//!
//! Utterances are processed independently on a rayon pool of the requested
//! size. Results are collected in manifest order before anything is logged or
//! written, so outputs do not depend on scheduling.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamforming::estimate_psd;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::manifest::{Manifest, UtteranceEntry, UtterancePaths, MANIFEST_FILE_NAME, MANIFEST_SCHEMA_VERSION};
use crate::masking::oracle_crm;
use crate::metrics::{evaluate, separated_file_name, EvalReport, RunInfo};
use crate::room::voice::{synthesize_utterance, TalkerProfile};
use crate::room::{sample_scene, synthesize_mixture};
use crate::separation::{separate, ExternalInputs, MaskSource, Method, Request, SceneInfo};
use crate::signal::{read_wav, stft, write_wav, MultiChannelWaveform, WavEncoding};
use crate::spatial::{angle_feature, ipd, steering_vector};
use crate::tensor::Tensor;

pub const RUN_LOG_FILE_NAME: &str = "run_log.json";

/// Runs `f` on a pool with `jobs` threads, or on the global pool when `None`.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::Config("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::Config(format!("thread pool: {e}"))),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn utterance_id(index: usize) -> String {
    format!("utt{index:05}")
}

/// Seed of utterance `index` under a master seed.
pub fn utterance_seed(master: u64, index: usize) -> u64 {
    master.wrapping_add(index as u64)
}

/// Dry target and interferer utterances for one scene. Talker and duration
/// draws come from a stream separate from the scene geometry.
fn dry_sources(config: &PipelineConfig, seed: u64, overlap_ratio: f64) -> Result<(MultiChannelWaveform, MultiChannelWaveform)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let fs = config.sample_rate;
    let [lo, hi] = config.simulation.utterance_seconds;
    let target_secs = rng.gen_range(lo..=hi);
    let target = synthesize_utterance(rng.gen(), TalkerProfile::random(&mut rng), target_secs, fs)?;
    // The interferer must at least cover the overlapped span.
    let needed = (overlap_ratio * target.len() as f64).round() / f64::from(fs);
    let interferer_secs = rng.gen_range(lo.max(needed)..=hi.max(needed));
    let interferer = synthesize_utterance(rng.gen(), TalkerProfile::random(&mut rng), interferer_secs, fs)?;
    Ok((target, interferer))
}

fn simulate_one(config: &PipelineConfig, index: usize, out_dir: &Path) -> Result<UtteranceEntry> {
    let id = utterance_id(index);
    let seed = utterance_seed(config.seed, index);
    let scene = sample_scene(seed, &config.simulation.scene, &config.geometry)?;
    let (target, interferer) = dry_sources(config, seed, scene.overlap_ratio)?;
    let bundle = synthesize_mixture(&scene, &target, &interferer, &config.geometry, config.simulation.max_order)?;
    let paths = UtterancePaths {
        mixture: format!("{id}_mixture.wav").into(),
        target: format!("{id}_target.wav").into(),
        interferer: format!("{id}_interferer.wav").into(),
    };
    let enc = config.simulation.encoding;
    write_wav(out_dir.join(&paths.mixture), &bundle.mixture, enc)?;
    write_wav(out_dir.join(&paths.target), &bundle.target, enc)?;
    write_wav(out_dir.join(&paths.interferer), &bundle.interferer, enc)?;
    Ok(UtteranceEntry {
        id,
        doa_deg: scene.target_doa_deg,
        samples: bundle.mixture.len(),
        target_offset: bundle.target_offset,
        interferer_offset: bundle.interferer_offset,
        overlap: [bundle.overlap.0, bundle.overlap.1],
        interferer_gain: bundle.interferer_gain,
        scene,
        paths,
    })
}

/// Simulates `count` utterances into `out_dir` and returns the manifest path.
pub fn cmd_simulate(config: &PipelineConfig, count: usize, out_dir: &Path, jobs: Option<usize>) -> Result<PathBuf> {
    config.validate()?;
    create_dir(out_dir)?;
    let entries: Vec<UtteranceEntry> = with_jobs(jobs, || {
        (0..count)
            .into_par_iter()
            .map(|i| simulate_one(config, i, out_dir))
            .collect::<Result<Vec<_>>>()
    })??;
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        sample_rate: config.sample_rate,
        config_fingerprint: config.fingerprint(),
        geometry: config.geometry.clone(),
        utterances: entries,
        base_dir: out_dir.to_path_buf(),
    };
    let path = out_dir.join(MANIFEST_FILE_NAME);
    manifest.save(&path)?;
    log::info!("simulated {count} utterances into {}", out_dir.display());
    Ok(path)
}

/// Where externally estimated tensors live. File names are
/// `<id>_target_mask.bin`, `<id>_noise_mask.bin` and `<id>_filter.bin`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorDirs {
    pub masks: Option<PathBuf>,
    pub filters: Option<PathBuf>,
}

impl TensorDirs {
    fn inputs(&self, id: &str) -> ExternalInputs {
        let noise = self.masks.as_ref().map(|d| d.join(format!("{id}_noise_mask.bin")));
        ExternalInputs {
            target_mask: self.masks.as_ref().map(|d| d.join(format!("{id}_target_mask.bin"))),
            noise_mask: noise.filter(|p| p.exists()),
            filter: self
                .filters
                .as_ref()
                .map(|d| d.join(format!("{id}_filter.bin")))
                .filter(|p| p.exists()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtteranceStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLogEntry {
    pub id: String,
    pub status: UtteranceStatus,
    pub error: Option<String>,
    pub seconds: f64,
    pub passthrough_bins: usize,
    pub floored_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub schema_version: u32,
    pub method: Method,
    pub mask_source: MaskSource,
    pub config_fingerprint: String,
    pub manifest: PathBuf,
    pub total_seconds: f64,
    pub utterances: Vec<RunLogEntry>,
}

impl RunLog {
    pub fn failed(&self) -> usize {
        self.utterances.iter().filter(|u| u.status == UtteranceStatus::Failed).count()
    }
}

/// Whether the reverberant target stem is read for this request.
fn needs_stem(request: Request) -> bool {
    request.mask_source == MaskSource::Oracle && request.method != Method::DelaySum
}

fn separate_one(
    config: &PipelineConfig,
    manifest: &Manifest,
    entry: &UtteranceEntry,
    request: Request,
    tensors: &TensorDirs,
    out_dir: &Path,
) -> Result<(usize, usize)> {
    let settings = config.separation_settings();
    let mixture = read_wav(manifest.resolve(&entry.paths.mixture))?;
    let stem = if needs_stem(request) {
        Some(read_wav(manifest.resolve(&entry.paths.target))?)
    } else {
        None
    };
    let external = tensors.inputs(&entry.id);
    let scene = SceneInfo {
        target_doa_deg: Some(entry.doa_deg),
        target_stem: stem.as_ref(),
        external: Some(&external),
    };
    let out = separate(&mixture, request, scene, &settings)?;
    write_wav(out_dir.join(separated_file_name(&entry.id)), &out.waveform, WavEncoding::Float32)?;
    Ok((out.passthrough_bins.len(), out.floored_bins.len()))
}

/// Separates every manifest utterance into `<out_dir>/<id>.wav` and writes
/// `<out_dir>/run_log.json`. Failed utterances are logged and skipped.
pub fn cmd_separate(
    config: &PipelineConfig,
    manifest_path: &Path,
    out_dir: &Path,
    tensors: &TensorDirs,
    jobs: Option<usize>,
) -> Result<RunLog> {
    config.validate()?;
    let manifest = Manifest::load(manifest_path)?;
    if manifest.geometry != config.geometry {
        return Err(Error::Config("manifest array geometry differs from the configuration".into()));
    }
    if manifest.sample_rate != config.sample_rate {
        return Err(Error::Config("manifest sample rate differs from the configuration".into()));
    }
    create_dir(out_dir)?;
    let request = Request {
        method: config.separation.method,
        mask_source: config.separation.mask_source,
    };
    let start = Instant::now();
    let entries: Vec<RunLogEntry> = with_jobs(jobs, || {
        manifest
            .utterances
            .par_iter()
            .map(|entry| {
                let t = Instant::now();
                let res = separate_one(config, &manifest, entry, request, tensors, out_dir);
                let seconds = t.elapsed().as_secs_f64();
                match res {
                    Ok((passthrough_bins, floored_bins)) => RunLogEntry {
                        id: entry.id.clone(),
                        status: UtteranceStatus::Ok,
                        error: None,
                        seconds,
                        passthrough_bins,
                        floored_bins,
                    },
                    Err(e) => RunLogEntry {
                        id: entry.id.clone(),
                        status: UtteranceStatus::Failed,
                        error: Some(e.to_string()),
                        seconds,
                        passthrough_bins: 0,
                        floored_bins: 0,
                    },
                }
            })
            .collect()
    })?;
    for e in &entries {
        match &e.error {
            None => log::info!("{}: separated in {:.3} s", e.id, e.seconds),
            Some(err) => log::warn!("{}: failed: {err}", e.id),
        }
    }
    let run_log = RunLog {
        schema_version: 1,
        method: request.method,
        mask_source: request.mask_source,
        config_fingerprint: config.fingerprint(),
        manifest: manifest_path.to_path_buf(),
        total_seconds: start.elapsed().as_secs_f64(),
        utterances: entries,
    };
    let path = out_dir.join(RUN_LOG_FILE_NAME);
    let text = serde_json::to_string_pretty(&run_log).expect("run log serialises");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(run_log)
}

/// Scores `separated_dir` against the manifest and writes the JSON report.
/// Method and fingerprint come from the run log in `separated_dir`, if any.
pub fn cmd_evaluate(manifest_path: &Path, separated_dir: &Path, report_path: &Path, jobs: Option<usize>) -> Result<EvalReport> {
    let manifest = Manifest::load(manifest_path)?;
    let info = std::fs::read_to_string(separated_dir.join(RUN_LOG_FILE_NAME))
        .ok()
        .and_then(|t| serde_json::from_str::<RunLog>(&t).ok())
        .map(|log| RunInfo {
            method: Some(log.method.to_string()),
            mask_source: Some(log.mask_source.to_string()),
            config_fingerprint: Some(log.config_fingerprint),
        })
        .unwrap_or_default();
    let report = with_jobs(jobs, || evaluate(&manifest, separated_dir, info))?;
    if let Some(parent) = report_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(report_path, report.to_json()).map_err(|e| Error::io(report_path, e))?;
    Ok(report)
}

/// Tensors written per utterance by [`cmd_features`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureOptions {
    /// Also write oracle masks and the mask-based speech/noise PSDs.
    pub oracle: bool,
}

fn features_one(config: &PipelineConfig, manifest: &Manifest, entry: &UtteranceEntry, options: &FeatureOptions, out_dir: &Path) -> Result<()> {
    let id = &entry.id;
    let mixture = read_wav(manifest.resolve(&entry.paths.mixture))?;
    let spec = stft(&mixture, &config.stft)?;
    let write = |name: &str, t: Tensor| t.write(out_dir.join(format!("{id}_{name}.bin")));
    write("ipd", Tensor::F64(ipd(&spec, &config.pairs)?.values))?;
    let steering = steering_vector(
        &config.geometry,
        entry.doa_deg,
        &config.stft,
        mixture.sample_rate(),
        config.simulation.scene.speed_of_sound,
    )?;
    write("af", Tensor::F64(angle_feature(&spec, &steering, &config.pairs)?.values))?;
    if options.oracle {
        let r = config.geometry.reference_index;
        let stem = read_wav(manifest.resolve(&entry.paths.target))?.select_channel(r)?;
        let mix_ref = mixture.select_channel(r)?;
        let noise = MultiChannelWaveform::new(mix_ref.samples() - stem.samples(), mix_ref.sample_rate())?;
        let mix_spec = spec.select_channel(r)?;
        let bound = config.separation.mask_bound;
        let target_mask = oracle_crm(&stft(&stem, &config.stft)?, &mix_spec, bound)?;
        let noise_mask = oracle_crm(&stft(&noise, &config.stft)?, &mix_spec, bound)?;
        write("psd_speech", Tensor::C128(estimate_psd(&spec, &target_mask)?.matrices.into_dyn()))?;
        write("psd_noise", Tensor::C128(estimate_psd(&spec, &noise_mask)?.matrices.into_dyn()))?;
        write("target_mask", Tensor::C128(target_mask.values.into_dyn()))?;
        write("noise_mask", Tensor::C128(noise_mask.values.into_dyn()))?;
    }
    Ok(())
}

/// Writes `<id>_ipd.bin` (f64 `[pairs × frames × bins]`) and `<id>_af.bin`
/// (f64 `[frames × bins]`) per utterance, plus, with `oracle`,
/// `<id>_target_mask.bin`, `<id>_noise_mask.bin` (c128 `[frames × bins]`) and
/// `<id>_psd_speech.bin`, `<id>_psd_noise.bin` (c128 `[bins × ch × ch]`).
/// Returns the ids that failed.
pub fn cmd_features(
    config: &PipelineConfig,
    manifest_path: &Path,
    out_dir: &Path,
    options: &FeatureOptions,
    jobs: Option<usize>,
) -> Result<Vec<(String, String)>> {
    config.validate()?;
    let manifest = Manifest::load(manifest_path)?;
    create_dir(out_dir)?;
    let results: Vec<Result<()>> = with_jobs(jobs, || {
        manifest
            .utterances
            .par_iter()
            .map(|e| features_one(config, &manifest, e, options, out_dir))
            .collect()
    })?;
    let failed: Vec<(String, String)> = manifest
        .utterances
        .iter()
        .zip(results)
        .filter_map(|(e, r)| r.err().map(|err| (e.id.clone(), err.to_string())))
        .collect();
    for (id, err) in &failed {
        log::warn!("{id}: features failed: {err}");
    }
    Ok(failed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> PipelineConfig {
        let mut c = PipelineConfig::default();
        c.simulation.utterance_seconds = [0.5, 0.8];
        c.simulation.max_order = Some(3);
        c
    }

    #[test]
    fn seeds_follow_the_counter() {
        assert_eq!(utterance_seed(0, 19), 19);
        assert_eq!(utterance_seed(7, 2), 9);
        assert_eq!(utterance_seed(u64::MAX, 1), 0);
        assert_eq!(utterance_id(3), "utt00003");
    }

    #[test]
    fn interferer_covers_the_overlap() {
        let c = small_config();
        for seed in 0..20 {
            let (t, i) = dry_sources(&c, seed, 1.0).unwrap();
            assert!(i.len() >= t.len(), "seed {seed}");
        }
    }

    #[test]
    fn zero_jobs_is_rejected() {
        assert!(with_jobs(Some(0), || ()).is_err());
        assert_eq!(with_jobs(Some(2), rayon::current_num_threads).unwrap(), 2);
    }

    #[test]
    fn simulate_separate_evaluate_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let manifest_path = cmd_simulate(&cfg, 2, &dir.path().join("sim"), Some(2)).unwrap();
        let manifest = Manifest::load(&manifest_path).unwrap();
        assert_eq!(manifest.utterances.len(), 2);
        assert_eq!(manifest.config_fingerprint, cfg.fingerprint());

        let sep = dir.path().join("sep");
        let log = cmd_separate(&cfg, &manifest_path, &sep, &TensorDirs::default(), Some(2)).unwrap();
        assert_eq!(log.failed(), 0);
        let report = cmd_evaluate(&manifest_path, &sep, &dir.path().join("report.json"), None).unwrap();
        assert!(report.complete);
        assert_eq!(report.method.as_deref(), Some("mvdr"));
        assert_eq!(report.config_fingerprint, Some(cfg.fingerprint()));

        let failed = cmd_features(&cfg, &manifest_path, &dir.path().join("feat"), &FeatureOptions { oracle: true }, None)
            .unwrap();
        assert!(failed.is_empty());
        let af = Tensor::read(dir.path().join("feat/utt00000_af.bin")).unwrap();
        assert_eq!(af.shape().len(), 2);
        let ipd = Tensor::read(dir.path().join("feat/utt00000_ipd.bin")).unwrap();
        assert_eq!(ipd.shape()[0], 9);
        let psd = Tensor::read(dir.path().join("feat/utt00000_psd_noise.bin")).unwrap();
        assert_eq!(&psd.shape()[1..], &[15, 15]);
    }
}
