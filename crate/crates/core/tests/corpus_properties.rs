//! Properties of the pipeline on the 20-utterance simulated corpus.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use mcsep::beamforming::{apply_weights, estimate_psd, mvdr_from_psd_or_passthrough, DEFAULT_LOADING};
use mcsep::config::PipelineConfig;
use mcsep::manifest::Manifest;
use mcsep::masking::{apply_mask, oracle_crm, ComplexMask};
use mcsep::metrics::{evaluate, si_snr, RunInfo, SI_SNR_CAP_DB};
use mcsep::pipeline::{cmd_evaluate, cmd_separate, cmd_simulate, utterance_seed, TensorDirs};
use mcsep::room::sample_scene;
use mcsep::signal::{istft, read_wav, stft, write_wav, ComplexSpectrogram, MultiChannelWaveform, WavEncoding};

struct Corpus {
    _dir: tempfile::TempDir,
    manifest: PathBuf,
}

fn corpus() -> &'static Corpus {
    static CORPUS: OnceLock<Corpus> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let manifest = cmd_simulate(&PipelineConfig::default(), 20, &dir.path().join("corpus"), None).unwrap();
        Corpus { _dir: dir, manifest }
    })
}

struct Utterance {
    mixture: MultiChannelWaveform,
    spec: ComplexSpectrogram,
    target_ref: Vec<f64>,
    input_db: f64,
    target_mask: ComplexMask,
    noise_mask: ComplexMask,
}

fn load(manifest: &Manifest, index: usize, bound: f64) -> Utterance {
    let cfg = PipelineConfig::default();
    let u = &manifest.utterances[index];
    let r = manifest.geometry.reference_index;
    let mixture = read_wav(manifest.resolve(&u.paths.mixture)).unwrap();
    let target = read_wav(manifest.resolve(&u.paths.target)).unwrap();
    let target_ref = target.channel(r).to_vec();
    let noise_ref: Vec<f64> = mixture.channel(r).iter().zip(&target_ref).map(|(x, s)| x - s).collect();
    let spec = stft(&mixture, &cfg.stft).unwrap();
    let mix_ref = spec.select_channel(r).unwrap();
    let stem = |x: Vec<f64>| stft(&MultiChannelWaveform::mono(x, 16000).unwrap(), &cfg.stft).unwrap();
    let input_db = si_snr(&mixture.channel(r).to_vec(), &target_ref).unwrap().value_db;
    Utterance {
        target_mask: oracle_crm(&stem(target_ref.clone()), &mix_ref, bound).unwrap(),
        noise_mask: oracle_crm(&stem(noise_ref), &mix_ref, bound).unwrap(),
        mixture,
        spec,
        target_ref,
        input_db,
    }
}

fn mvdr_delta(u: &Utterance, target: &ComplexMask, noise: &ComplexMask) -> f64 {
    let cfg = PipelineConfig::default();
    let psd_y = estimate_psd(&u.spec, target).unwrap();
    let psd_n = estimate_psd(&u.spec, noise).unwrap();
    let (w, _) = mvdr_from_psd_or_passthrough(&psd_y, &psd_n, 0, DEFAULT_LOADING).unwrap();
    let out = istft(&apply_weights(&w, &u.spec).unwrap(), &cfg.stft, u.mixture.len()).unwrap();
    si_snr(&out.channel(0).to_vec(), &u.target_ref).unwrap().value_db - u.input_db
}

#[test]
fn swapping_mvdr_masks_degrades_every_utterance() {
    let manifest = Manifest::load(&corpus().manifest).unwrap();
    for i in 0..manifest.utterances.len() {
        let u = load(&manifest, i, 10.0);
        let right = mvdr_delta(&u, &u.target_mask, &u.noise_mask);
        let swapped = mvdr_delta(&u, &u.noise_mask, &u.target_mask);
        assert!(swapped < right, "{}: swapped {swapped:.2} dB vs {right:.2} dB", manifest.utterances[i].id);
    }
}

#[test]
fn mask_reconstruction_improves_with_bound() {
    let manifest = Manifest::load(&corpus().manifest).unwrap();
    let cfg = PipelineConfig::default();
    let mut means = Vec::new();
    for bound in [1.0, 5.0, 10.0] {
        let mut total = 0.0;
        for i in 0..manifest.utterances.len() {
            let u = load(&manifest, i, bound);
            let masked = apply_mask(&u.target_mask, &u.spec.select_channel(0).unwrap()).unwrap();
            let out = istft(&masked, &cfg.stft, u.mixture.len()).unwrap();
            total += si_snr(&out.channel(0).to_vec(), &u.target_ref).unwrap().value_db;
        }
        means.push(total / manifest.utterances.len() as f64);
    }
    assert!(means.windows(2).all(|w| w[0] <= w[1]), "{means:?}");
}

#[test]
fn mvdr_separation_of_corpus_is_fast() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let log = cmd_separate(&PipelineConfig::default(), &corpus().manifest, dir.path(), &TensorDirs::default(), Some(1)).unwrap();
    let elapsed = start.elapsed();
    assert_eq!(log.failed(), 0);
    assert!(elapsed < Duration::from_secs(60), "{elapsed:?}");
}

#[test]
fn sir_draws_cover_every_level() {
    let cfg = PipelineConfig::default();
    let mut counts = [0usize; 3];
    for i in 0..300 {
        let scene = sample_scene(utterance_seed(cfg.seed, i), &cfg.simulation.scene, &cfg.geometry).unwrap();
        let k = [-6.0, 0.0, 6.0].iter().position(|&v| v == scene.sir_db).expect("SIR outside the choice set");
        counts[k] += 1;
    }
    assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
}

fn validate(schema_file: &str, instance: &serde_json::Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs").join(schema_file);
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{schema_file}: {errors:#?}");
}

#[test]
fn manifest_and_report_match_published_schemas() {
    let text = std::fs::read_to_string(&corpus().manifest).unwrap();
    validate("manifest.schema.json", &serde_json::from_str(&text).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.separation.method = mcsep::separation::Method::DelaySum;
    cmd_separate(&cfg, &corpus().manifest, dir.path(), &TensorDirs::default(), None).unwrap();
    let report_path = dir.path().join("report.json");
    let report = cmd_evaluate(&corpus().manifest, dir.path(), &report_path, None).unwrap();
    assert!(report.complete);
    validate("report.schema.json", &serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap());

    // An incomplete report, with a null summary, also conforms.
    let empty = tempfile::tempdir().unwrap();
    let partial = evaluate(&Manifest::load(&corpus().manifest).unwrap(), empty.path(), RunInfo::default());
    assert!(!partial.complete);
    validate("report.schema.json", &serde_json::from_str(&partial.to_json()).unwrap());
}

fn copy_reference_channels(manifest: &Manifest, out: &Path, pick: impl Fn(&mcsep::manifest::UtterancePaths) -> &PathBuf) {
    let r = manifest.geometry.reference_index;
    for u in &manifest.utterances {
        let w = read_wav(manifest.resolve(pick(&u.paths))).unwrap();
        write_wav(out.join(format!("{}.wav", u.id)), &w.select_channel(r).unwrap(), WavEncoding::Float32).unwrap();
    }
}

#[test]
fn evaluating_identity_systems() {
    let manifest = Manifest::load(&corpus().manifest).unwrap();

    let mixtures = tempfile::tempdir().unwrap();
    copy_reference_channels(&manifest, mixtures.path(), |p| &p.mixture);
    let report = evaluate(&manifest, mixtures.path(), RunInfo::default());
    assert!(report.complete);
    let mean = report.summary.unwrap().delta.mean;
    assert!(mean.abs() < 0.01, "{mean}");

    let targets = tempfile::tempdir().unwrap();
    copy_reference_channels(&manifest, targets.path(), |p| &p.target);
    let report = evaluate(&manifest, targets.path(), RunInfo::default());
    assert!(report.utterances.iter().all(|u| u.si_snr_out == SI_SNR_CAP_DB), "{:?}", report.utterances);
}
