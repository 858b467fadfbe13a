//! `mcsep`: simulate overlapped multi-channel corpora, separate the target
//! talker, score the result and export spatial features.
//!
//! Exit status is 0 on success, 1 for configuration or usage errors and for
//! failures that stop a whole command, and 2 when some utterances failed or a
//! report is incomplete.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand};
use mcsep::config::PipelineConfig;
use mcsep::manifest::MANIFEST_FILE_NAME;
use mcsep::pipeline::{cmd_evaluate, cmd_features, cmd_separate, cmd_simulate, FeatureOptions, TensorDirs};
use mcsep::separation::{MaskSource, Method};

#[derive(Debug, Parser)]
#[command(name = "mcsep", version, about = "Multi-channel overlapped speech separation pipeline")]
struct Cli {
    /// TOML configuration file; missing keys take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Utterances processed in parallel [default: available cores].
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a reverberant two-talker corpus and write its manifest.
    Simulate {
        /// Number of utterances.
        #[arg(long, default_value_t = 20)]
        count: usize,
        /// Output directory [default: output.simulate_dir].
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Separate the target talker of every manifest utterance.
    Separate(SeparateArgs),
    /// Score separated outputs against the reverberant target stems.
    Evaluate {
        /// Corpus manifest [default: <output.simulate_dir>/manifest.json].
        #[arg(long, value_name = "FILE")]
        manifest: Option<PathBuf>,
        /// Directory of separated outputs [default: output.separate_dir].
        #[arg(long, value_name = "DIR")]
        separated: Option<PathBuf>,
        /// JSON report path [default: output.report].
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
    /// Export IPD and angle features, and optionally oracle masks and PSDs, as tensors.
    Features {
        /// Corpus manifest [default: <output.simulate_dir>/manifest.json].
        #[arg(long, value_name = "FILE")]
        manifest: Option<PathBuf>,
        /// Output directory [default: output.features_dir].
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Also write oracle masks and mask-based speech and noise PSDs.
        #[arg(long)]
        oracle: bool,
    },
}

#[derive(Debug, Args)]
struct SeparateArgs {
    /// Corpus manifest [default: <output.simulate_dir>/manifest.json].
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// Output directory [default: output.separate_dir].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Channel integration method [default: separation.method].
    #[arg(long, value_parser = PossibleValuesParser::new(Method::ALL.iter().map(|m| m.as_str()))
        .map(|s| s.parse::<Method>().expect("listed value")))]
    method: Option<Method>,
    /// Where masks come from [default: separation.mask_source].
    #[arg(long, value_parser = PossibleValuesParser::new(MaskSource::ALL.iter().map(|m| m.as_str()))
        .map(|s| s.parse::<MaskSource>().expect("listed value")))]
    mask_source: Option<MaskSource>,
    /// Directory of `<id>_target_mask.bin` (and optional `<id>_noise_mask.bin`) tensors.
    #[arg(long, value_name = "DIR")]
    mask_dir: Option<PathBuf>,
    /// Directory of `<id>_filter.bin` time-variant filter tensors for filter_sum.
    #[arg(long, value_name = "DIR")]
    filter_dir: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Partial(String),
}

impl From<mcsep::Error> for Failure {
    fn from(e: mcsep::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn default_manifest(config: &PipelineConfig) -> PathBuf {
    config.output.simulate_dir.join(MANIFEST_FILE_NAME)
}

fn jobs(requested: Option<usize>) -> Option<usize> {
    Some(requested.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())))
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn partial(what: &str, failed: usize, total: usize) -> Result<(), Failure> {
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Partial(format!("{failed} of {total} utterances failed during {what}")))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut config = load_config(&cli)?;
    let jobs = jobs(cli.jobs);
    match cli.command {
        Command::Simulate { count, out } => {
            let out = out.unwrap_or_else(|| config.output.simulate_dir.clone());
            let manifest = cmd_simulate(&config, count, &out, jobs)?;
            println!("{}", manifest.display());
            Ok(())
        }
        Command::Separate(args) => {
            if let Some(m) = args.method {
                config.separation.method = m;
            }
            if let Some(s) = args.mask_source {
                config.separation.mask_source = s;
            }
            if config.separation.mask_source == MaskSource::File && args.mask_dir.is_none() {
                return Err(Failure::Usage("--mask-source file needs --mask-dir".into()));
            }
            let manifest = args.manifest.unwrap_or_else(|| default_manifest(&config));
            let out = args.out.unwrap_or_else(|| config.output.separate_dir.clone());
            let tensors = TensorDirs {
                masks: args.mask_dir,
                filters: args.filter_dir,
            };
            let log = cmd_separate(&config, &manifest, &out, &tensors, jobs)?;
            println!(
                "{} {}: {} separated, {} failed, {:.2} s -> {}",
                log.method,
                log.mask_source,
                log.utterances.len() - log.failed(),
                log.failed(),
                log.total_seconds,
                out.display()
            );
            partial("separation", log.failed(), log.utterances.len())
        }
        Command::Evaluate { manifest, separated, report } => {
            let manifest = manifest.unwrap_or_else(|| default_manifest(&config));
            let separated = separated.unwrap_or_else(|| config.output.separate_dir.clone());
            let report_path = report.unwrap_or_else(|| config.output.report.clone());
            let report = cmd_evaluate(&manifest, &separated, &report_path, jobs)?;
            print!("{}", report.table());
            for m in &report.missing {
                log::warn!("{}: not scored: {}", m.id, m.reason);
            }
            if report.complete {
                Ok(())
            } else {
                Err(Failure::Partial(format!(
                    "report {} is incomplete: {} utterances not scored",
                    report_path.display(),
                    report.missing.len()
                )))
            }
        }
        Command::Features { manifest, out, oracle } => {
            let manifest = manifest.unwrap_or_else(|| default_manifest(&config));
            let out = out.unwrap_or_else(|| config.output.features_dir.clone());
            let failed = cmd_features(&config, &manifest, &out, &FeatureOptions { oracle }, jobs)?;
            let total = mcsep::manifest::Manifest::load(&manifest)?.utterances.len();
            println!("{} of {total} utterances exported -> {}", total - failed.len(), out.display());
            partial("feature export", failed.len(), total)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Partial(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
