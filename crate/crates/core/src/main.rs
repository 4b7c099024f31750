use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use robust_units::cli::{self, parse_aug_selection, ExperimentConfig};

/// Exit status of `compare` when the candidate is not better on every family.
const NO_IMPROVEMENT: u8 = 2;

#[derive(Parser)]
#[command(name = "robust-units", version, about = "Robustness of discrete speech units")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Root seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of units K.
    #[arg(long, global = true, value_name = "K")]
    units: Option<usize>,
    /// Pseudo-labeling rounds.
    #[arg(long, global = true, value_name = "R")]
    rounds: Option<usize>,
    /// time, pitch, reverb, noise, identity, all, or a comma list.
    #[arg(long, global = true)]
    aug: Option<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// JSON file overriding defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus and its manifest.
    GenCorpus {
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        dev: Option<usize>,
    },
    /// Fit a k-means quantizer on the train split.
    TrainKmeans {
        /// Manifest file or the directory containing it.
        manifest: PathBuf,
    },
    /// Train a robust quantizer against a frozen teacher.
    TrainRobust {
        manifest: PathBuf,
        #[arg(long)]
        teacher: PathBuf,
    },
    /// Unit edit distance of a quantizer on the dev split.
    EvalUed {
        manifest: PathBuf,
        #[arg(long)]
        quantizer: PathBuf,
    },
    /// Relative improvement of a candidate report over a baseline.
    Compare { baseline: PathBuf, candidate: PathBuf },
    /// Apply one random draw of each selected augmentation to a WAV file.
    Augment { input: PathBuf },
    /// Dump log-mel features of a WAV file.
    Encode { input: PathBuf },
}

fn manifest_file(p: &Path) -> PathBuf {
    if p.is_dir() {
        cli::manifest_path(p)
    } else {
        p.to_path_buf()
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut c = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        c.seed = Some(s);
    }
    if let Some(k) = common.units {
        c.units = k;
    }
    if let Some(r) = common.rounds {
        c.rounds = r;
    }
    if let Some(a) = &common.aug {
        c.augmentations = parse_aug_selection(a)?;
    }
    if let Some(o) = &common.out {
        c.out_dir = o.clone();
    }
    Ok(c)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut config = load_config(&cli.common)?;
    match cli.command {
        Command::GenCorpus { train, dev } => {
            if let Some(n) = train {
                config.corpus.train_utterances = n;
            }
            if let Some(n) = dev {
                config.corpus.dev_utterances = n;
            }
            let m = cli::cmd_gen_corpus(&config).context("generating corpus")?;
            println!(
                "wrote {} utterances to {} (dataset {})",
                m.entries.len(),
                config.out_dir.display(),
                m.dataset_id
            );
        }
        Command::TrainKmeans { manifest } => {
            let r = cli::cmd_train_kmeans(&manifest_file(&manifest), &config)?;
            println!(
                "{}: K={} on {} frames, {} iterations, final inertia {:.4}",
                cli::kmeans_model_path(&config.out_dir, r.units).display(),
                r.units,
                r.frames,
                r.fit.iterations,
                r.fit.inertia.last().copied().unwrap_or(0.0)
            );
        }
        Command::TrainRobust { manifest, teacher } => {
            let s = cli::cmd_train_robust(&manifest_file(&manifest), &teacher, &config)?;
            for (round, ckpt) in s.rounds.iter().zip(&s.checkpoints) {
                println!(
                    "round {}: best epoch {} val loss {:.4} -> {}",
                    ckpt.round, round.best_epoch, round.best_val_loss, ckpt.file
                );
            }
        }
        Command::EvalUed { manifest, quantizer } => {
            let r = cli::cmd_eval_ued(&manifest_file(&manifest), &quantizer, &config)?;
            print!("{}", r.to_csv());
        }
        Command::Compare { baseline, candidate } => {
            let c = cli::cmd_compare(&baseline, &candidate)?;
            print!("{}", c.to_csv());
            if !c.improves_on_all {
                return Ok(ExitCode::from(NO_IMPROVEMENT));
            }
        }
        Command::Augment { input } => {
            for (path, desc) in cli::cmd_augment(&input, &config)? {
                println!("{}  {desc}", path.display());
            }
        }
        Command::Encode { input } => {
            let (path, frames) = cli::cmd_encode(&input, &config)?;
            println!("{}: {} frames x {}", path.display(), frames.num_frames(), frames.dim());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
