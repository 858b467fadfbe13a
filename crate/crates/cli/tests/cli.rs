use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mcsep(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcsep"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// Short utterances and low reflection order keep the runs quick.
fn write_small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    fs::write(&path, "seed = 3\n[simulation]\nutterance_seconds = [0.5, 0.8]\nmax_order = 3\n").unwrap();
    path
}

fn simulate(dir: &Path, cfg: &Path, out: &str, extra: &[&str]) -> PathBuf {
    let mut args = vec!["--config", cfg.to_str().unwrap(), "--jobs", "2", "simulate", "--count", "3", "--out", out];
    args.extend_from_slice(extra);
    let o = mcsep(&args, dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    dir.join(out).join("manifest.json")
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn usage_and_configuration_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&mcsep(&["--help"], d)), 0);
    assert_eq!(code(&mcsep(&[], d)), 1);
    assert_eq!(code(&mcsep(&["simulate", "--bogus"], d)), 1);
    assert_eq!(code(&mcsep(&["separate", "--method", "gev"], d)), 1);
    assert_eq!(code(&mcsep(&["--jobs", "0", "simulate", "--count", "1"], d)), 1);

    fs::write(d.join("bad.toml"), "[stft]\nhop = 128\n").unwrap();
    let o = mcsep(&["--config", "bad.toml", "simulate"], d);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("hop"));

    assert_eq!(code(&mcsep(&["--config", "absent.toml", "simulate"], d)), 1);
    assert_eq!(code(&mcsep(&["evaluate", "--manifest", "absent/manifest.json"], d)), 1);
    assert_eq!(code(&mcsep(&["separate", "--mask-source", "file"], d)), 1);
}

#[test]
fn simulation_is_deterministic_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_small_config(d);
    simulate(d, &cfg, "a", &[]);
    simulate(d, &cfg, "b", &[]);
    assert_eq!(tree(&d.join("a")), tree(&d.join("b")));

    let o = mcsep(&["--config", cfg.to_str().unwrap(), "--seed", "4", "simulate", "--count", "3", "--out", "c"], d);
    assert_eq!(code(&o), 0);
    assert_ne!(tree(&d.join("a")), tree(&d.join("c")));
}

#[test]
fn pipeline_round_trip_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_small_config(d);
    let cfg = cfg.to_str().unwrap();
    let manifest = simulate(d, Path::new(cfg), "corpus", &[]);
    let manifest = manifest.to_str().unwrap();

    let o = mcsep(&["--config", cfg, "separate", "--manifest", manifest, "--out", "mvdr"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = mcsep(&["--config", cfg, "evaluate", "--manifest", manifest, "--separated", "mvdr", "--report", "mvdr.json"], d);
    assert_eq!(code(&o), 0);
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("utt00002") && table.contains("mean"), "{table}");
    let report: serde_json::Value = serde_json::from_slice(&fs::read(d.join("mvdr.json")).unwrap()).unwrap();
    assert_eq!(report["method"], "mvdr");
    assert_eq!(report["complete"], true);

    // Evaluating the same inputs again gives the same bytes.
    let first = fs::read(d.join("mvdr.json")).unwrap();
    mcsep(&["evaluate", "--manifest", manifest, "--separated", "mvdr", "--report", "mvdr.json"], d);
    assert_eq!(first, fs::read(d.join("mvdr.json")).unwrap());

    // A missing output makes the report incomplete.
    fs::remove_file(d.join("mvdr/utt00001.wav")).unwrap();
    let o = mcsep(&["evaluate", "--manifest", manifest, "--separated", "mvdr", "--report", "partial.json"], d);
    assert_eq!(code(&o), 2);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(d.join("partial.json")).unwrap()).unwrap();
    assert_eq!(report["complete"], false);
    assert_eq!(report["missing"][0]["id"], "utt00001");
}

#[test]
fn delay_sum_needs_no_stems() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_small_config(d);
    let manifest = simulate(d, &cfg, "corpus", &[]);
    for entry in fs::read_dir(d.join("corpus")).unwrap() {
        let p = entry.unwrap().path();
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        if name.ends_with("_target.wav") || name.ends_with("_interferer.wav") {
            fs::remove_file(p).unwrap();
        }
    }
    let args = ["--config", cfg.to_str().unwrap(), "separate", "--manifest", manifest.to_str().unwrap()];
    let o = mcsep(&[&args[..], &["--method", "delay_sum", "--out", "ds"]].concat(), d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("ds/utt00000.wav").exists());

    // The oracle MVDR cannot run without them.
    let o = mcsep(&[&args[..], &["--method", "mvdr", "--out", "mv"]].concat(), d);
    assert_eq!(code(&o), 2);
}

#[test]
fn file_masks_with_a_missing_tensor_fail_one_utterance_only() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_small_config(d);
    let cfg = cfg.to_str().unwrap();
    let manifest = simulate(d, Path::new(cfg), "corpus", &[]);
    let manifest = manifest.to_str().unwrap();

    let o = mcsep(&["--config", cfg, "features", "--manifest", manifest, "--out", "feat", "--oracle"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for suffix in ["ipd", "af", "target_mask", "noise_mask", "psd_speech", "psd_noise"] {
        assert!(d.join(format!("feat/utt00000_{suffix}.bin")).exists(), "{suffix}");
    }
    fs::remove_file(d.join("feat/utt00001_target_mask.bin")).unwrap();

    let o = mcsep(
        &["--config", cfg, "separate", "--manifest", manifest, "--out", "sep", "--method", "tf_mask", "--mask-source", "file", "--mask-dir", "feat"],
        d,
    );
    assert_eq!(code(&o), 2);
    assert!(d.join("sep/utt00000.wav").exists());
    assert!(!d.join("sep/utt00001.wav").exists());
    assert!(d.join("sep/utt00002.wav").exists());
    let log: serde_json::Value = serde_json::from_slice(&fs::read(d.join("sep/run_log.json")).unwrap()).unwrap();
    let statuses: Vec<&str> = log["utterances"].as_array().unwrap().iter().map(|u| u["status"].as_str().unwrap()).collect();
    assert_eq!(statuses, ["ok", "failed", "ok"]);
    assert!(log["utterances"][1]["error"].as_str().unwrap().contains("utt00001_target_mask.bin"));
    assert!(log["utterances"][0]["seconds"].as_f64().unwrap() > 0.0);
}
