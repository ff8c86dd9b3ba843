use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mmser_core::pipeline::{
    generate_toy_corpus, run_eval, run_featurize, run_report, run_train, simulate_corpus, Manifest, RunConfig, Split,
    ToySpec, CHECKPOINT_FILE,
};

#[derive(Parser)]
#[command(name = "mmser", version, about = "Multi-microphone speech emotion recognition pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Overrides the configured manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic harmonic-tone corpus.
    Toygen {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 50)]
        per_class: usize,
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
    },
    /// Convolve a corpus with simulated multi-microphone rooms.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Fill the feature cache for every manifest row.
    Featurize {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model; writes a checkpoint and a JSON-lines log.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint; writes predictions and per-condition results.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<out-dir>/checkpoint.mmck`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Build the per-condition comparison table from eval outputs.
    Report {
        #[command(flatten)]
        common: Common,
        /// Eval output directories or result files, one column each.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(m) = &common.manifest {
        cfg.manifest = Some(m.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Toygen {
            common,
            classes,
            per_class,
            duration,
        } => {
            let spec = ToySpec {
                n_classes: classes,
                n_per_class: per_class,
                duration_s: duration,
                seed: common.seed.unwrap_or(0),
            };
            let m = generate_toy_corpus(&spec, &common.out_dir)?;
            println!("wrote {} clips to {}", m.rows.len(), common.out_dir.join("manifest.csv").display());
        }
        Command::Simulate { common } => {
            let cfg = load_config(&common)?;
            let path = mmser_core::pipeline::manifest_path(&cfg)?;
            let manifest = Manifest::load(path, &cfg.classes)?;
            let out = simulate_corpus(&manifest, &cfg, &common.out_dir)?;
            println!("wrote {} clips to {}", out.rows.len(), common.out_dir.join("manifest.csv").display());
        }
        Command::Featurize { common } => {
            let n = run_featurize(&load_config(&common)?)?;
            println!("featurized {n} clips");
        }
        Command::Train { common } => {
            let cfg = load_config(&common)?;
            let s = run_train(&cfg, &common.out_dir)?;
            println!(
                "best val_acc {:.4} at epoch {} of {} ({} parameters)",
                s.best_val_acc, s.best_epoch, s.epochs_run, s.num_parameters
            );
        }
        Command::Eval {
            common,
            checkpoint,
            split,
        } => {
            let cfg = load_config(&common)?;
            let split: Split = split.parse()?;
            let ck = checkpoint.unwrap_or_else(|| common.out_dir.join(CHECKPOINT_FILE));
            let res = run_eval(&cfg, &ck, split, &common.out_dir)?;
            for r in &res.results {
                println!("{} ({}): {}", r.condition, r.n, r.render());
            }
        }
        Command::Report { common, inputs } => {
            let report = run_report(&inputs, &common.out_dir)?;
            print!("{}", report.to_text());
        }
    }
    Ok(())
}

fn error_class(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|e| e.downcast_ref::<mmser_core::Error>())
        .map_or("cli", mmser_core::Error::class)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Core errors already embed their source in the message.
            let mut parts: Vec<String> = Vec::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !parts.last().is_some_and(|p| p.ends_with(&cause)) {
                    parts.push(cause);
                }
            }
            let msg = parts.join(": ").replace('\n', " ");
            eprintln!("error[{}]: {msg}", error_class(&e));
            ExitCode::FAILURE
        }
    }
}
