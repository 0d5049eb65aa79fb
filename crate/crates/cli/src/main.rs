use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use tmenhance::config::RunConfig;
use tmenhance::corpus::{frame_phones, load_clean_list, load_labels, load_manifest, read_wav, write_wav, TmProfile};
use tmenhance::model::{read_header, write_atomic, ModelFile};
use tmenhance::pipeline::{evaluate, simulate_corpus, train, EnhanceOptions, Enhancer, SynthesisMode};
use tmenhance::Error;

/// Throat-microphone speech enhancement by joint-GMM spectral mapping.
#[derive(Debug, Parser)]
#[command(name = "tmenhance", version)]
struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Envelope mapping scheme: sm, hm, pdsm or pdhm.
    #[arg(long, global = true)]
    scheme: Option<String>,
    /// Phone context source: true, gmm or file.
    #[arg(long, global = true)]
    context: Option<String>,
    /// Tilt application: power or literal.
    #[arg(long, global = true)]
    tilt_mode: Option<String>,
    /// Excitation band spacing: linear or mel.
    #[arg(long, global = true)]
    spacing: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Derive throat-channel recordings from clean speech.
    Simulate {
        /// Lines of `<id>\t<wav>[\t<labels>]`.
        clean_list: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the envelope and excitation mapping models.
    Train {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Enhance one throat recording.
    Enhance {
        model: PathBuf,
        tm: PathBuf,
        /// Phone labels for the recording.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Synthesis mode: aa, at, ta or tt.
        #[arg(long, default_value = "aa")]
        mode: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the test split of a manifest.
    Evaluate {
        model: PathBuf,
        manifest: PathBuf,
        #[arg(long, default_value = "aa")]
        mode: String,
        /// Directory of `<id>.lab` context labels.
        #[arg(long)]
        labels_dir: Option<PathBuf>,
        /// Also write the report as `key = value` lines.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a model's header and contents.
    Inspect { model: PathBuf },
}

fn run_config(cli: &Cli) -> Result<RunConfig> {
    let mut run = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let overrides = [
        ("seed", cli.seed.map(|s| s.to_string())),
        ("scheme", cli.scheme.clone()),
        ("context_source", cli.context.clone()),
        ("tilt_mode", cli.tilt_mode.clone()),
        ("spacing", cli.spacing.clone()),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            run.set(key, &v)?;
        }
    }
    run.validate()?;
    Ok(run)
}

fn enhancer(model: &Path, run: &RunConfig) -> Result<Enhancer> {
    let file = ModelFile::load(model)?;
    Ok(Enhancer::new(file, run)?)
}

fn execute(cli: &Cli) -> Result<()> {
    let run = run_config(cli)?;
    match &cli.command {
        Command::Simulate { clean_list, out } => {
            let clean = load_clean_list(clean_list)?;
            let profile = TmProfile { seed: run.seed, ..TmProfile::default() };
            let manifest = simulate_corpus(&clean, &profile, out)?;
            println!("simulated {} recordings; manifest {}", clean.len(), manifest.display());
        }
        Command::Train { manifest, out } => {
            let manifest = load_manifest(manifest)?;
            let (model, report) = train(&manifest, &run)?;
            model.save(out)?;
            print!("{report}");
            println!("model written to {}", out.display());
        }
        Command::Enhance { model, tm, labels, mode, out } => {
            let mode: SynthesisMode = mode.parse()?;
            let enhancer = enhancer(model, &run)?;
            let opts = EnhanceOptions::from_config(&run, mode);
            let audio = read_wav(tm)?;
            let phones = match labels {
                Some(path) => {
                    let n = enhancer.analyzer().config().frame_count(audio.len(), audio.rate_hz);
                    Some(frame_phones(&load_labels(path, audio.duration_s())?, n, enhancer.analyzer()))
                }
                None if opts.needs_labels() => return Err(Error::MissingLabels(vec![tm.display().to_string()]).into()),
                None => None,
            };
            let result = enhancer.enhance(&audio, phones.as_deref(), &opts)?;
            write_wav(out, &result.audio)?;
            if result.envelope_fallbacks > 0 {
                log::info!("{} frames mapped by the global fallback", result.envelope_fallbacks);
            }
        }
        Command::Evaluate { model, manifest, mode, labels_dir, out } => {
            let mode: SynthesisMode = mode.parse()?;
            let enhancer = enhancer(model, &run)?;
            let manifest = load_manifest(manifest)?;
            let opts = EnhanceOptions::from_config(&run, mode);
            let report = evaluate(&enhancer, &manifest, &opts, labels_dir.as_deref())?;
            print!("{}", report.to_text());
            if let Some(path) = out {
                write_atomic(path, report.to_key_values().as_bytes())?;
            }
        }
        Command::Inspect { model } => {
            let header = read_header(model)?;
            let file = ModelFile::load(model)?;
            println!("format version: {}", header.version);
            println!("fingerprint: {}", header.fingerprint);
            for (name, m) in [("envelope", &file.envelope), ("excitation", &file.excitation)] {
                let phones: Vec<String> = m.per_phone.keys().map(|p| p.to_string()).collect();
                let fallback: Vec<String> = m.fallback.iter().map(|p| p.to_string()).collect();
                println!(
                    "{name}: dims {}+{}, global mixtures {}, phone models [{}], global fallback [{}]",
                    m.dim_x(),
                    m.dim_y(),
                    m.global.n_mixtures(),
                    phones.join(" "),
                    fallback.join(" ")
                );
            }
            println!("\ntraining configuration:\n{}", file.config.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match execute(&cli).with_context(|| format!("{} failed", command_name(&cli.command))) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate { .. } => "simulate",
        Command::Train { .. } => "train",
        Command::Enhance { .. } => "enhance",
        Command::Evaluate { .. } => "evaluate",
        Command::Inspect { .. } => "inspect",
    }
}
