//! `lato` command-line interface.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lato::agent::CriticKind;
use lato::embedding::EmbeddingParams;
use lato::envs::{read_demonstrations, write_demonstrations};
use lato::exploration::ObjectiveKind;
use lato::harness::{
    self, checkpoint_dir, evaluate_checkpoint, mean_std, ExperimentConfig, ExplorerKind, Pretrained, CONFIG_FILE,
    ENV_OUT_DIR, ENV_THREADS, PRETRAIN_DIR,
};

#[derive(Parser)]
#[command(name = "lato", version, about = "Latent trajectory optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a demonstration dataset.
    Demos {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the embedding and dynamics model on demonstrations.
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use an existing demonstration dataset instead of generating one.
        #[arg(long)]
        demos: Option<PathBuf>,
    },
    /// Run the training loop for one or more seeds.
    Train {
        #[command(flatten)]
        common: Common,
        /// Repeat for several replicas; each then writes to `<out>/seed_<n>`.
        #[arg(long, required = true)]
        seed: Vec<u64>,
        /// Reuse the output of `pretrain` (or its `pretrain/` directory) instead of pretraining per seed.
        #[arg(long)]
        pretrained: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Roll out the deterministic actor of a finished run.
    Eval {
        /// Run directory written by `train`.
        #[arg(long)]
        run: PathBuf,
        /// Checkpoint name under `checkpoints/`.
        #[arg(long, default_value = "final")]
        checkpoint: String,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Plot learning curves and tabulate success rates of finished runs.
    Report {
        #[arg(long, env = ENV_OUT_DIR)]
        out: PathBuf,
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, env = ENV_OUT_DIR)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriticArg {
    Q,
    V,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExplorerArg {
    Ou,
    Trajopt,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    QSum,
    RPlusQ,
    TerminalQ,
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, value_enum)]
    critic: Option<CriticArg>,
    #[arg(long, value_enum)]
    explorer: Option<ExplorerArg>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
}

impl Overrides {
    fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(l) = &self.label {
            config.label = Some(l.clone());
        }
        if let Some(e) = self.episodes {
            config.episodes = e;
        }
        if let Some(c) = self.critic {
            config.agent.critic = match c {
                CriticArg::Q => CriticKind::Q,
                CriticArg::V => CriticKind::V,
            };
        }
        if let Some(e) = self.explorer {
            config.explorer = match e {
                ExplorerArg::Ou => ExplorerKind::Ou,
                ExplorerArg::Trajopt => ExplorerKind::TrajOpt,
            };
        }
        if let Some(h) = self.horizon {
            config.planner.horizon = h;
            config.planner.weights = None;
        }
        if let Some(o) = self.objective {
            config.planner.objective = match o {
                ObjectiveArg::QSum => ObjectiveKind::QSum,
                ObjectiveArg::RPlusQ => ObjectiveKind::RewardPlusQ,
                ObjectiveArg::TerminalQ => ObjectiveKind::TerminalQ,
            };
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn write_config(config: &ExperimentConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(CONFIG_FILE), config.to_toml()?)?;
    Ok(())
}

fn threads() -> usize {
    std::env::var(ENV_THREADS)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|n| *n > 0)
        .unwrap_or(1)
}

fn train_one(config: &ExperimentConfig, seed: u64, pretrained: Option<&Pretrained>, out: &Path) -> Result<()> {
    let outcome = match pretrained {
        Some(p) => {
            write_config(config, out)?;
            p.save(&out.join(PRETRAIN_DIR))?;
            harness::train(config, seed, p, out)
        }
        None => harness::run_experiment(config, seed, out),
    }
    .with_context(|| format!("seed {seed} failed; partial results in {}", out.display()))?;
    let explore: Vec<f64> = outcome.records.iter().map(|r| r.reward).collect();
    log::info!(
        "seed {seed}: {} episodes, mean reward {:.3}",
        config.episodes,
        mean_std(&explore).0
    );
    Ok(())
}

fn train(
    common: &Common,
    seeds: &[u64],
    pretrained: Option<&Path>,
    overrides: &Overrides,
) -> Result<()> {
    let mut config = load_config(&common.config)?;
    overrides.apply(&mut config);
    config.seeds = seeds.to_vec();
    config.validate()?;
    let pretrained = pretrained
        .map(|p| {
            let nested = p.join(PRETRAIN_DIR);
            let p = if nested.is_dir() { nested } else { p.to_path_buf() };
            Pretrained::load(&p).with_context(|| format!("loading {}", p.display()))
        })
        .transpose()?;
    let dirs: Vec<PathBuf> = if seeds.len() == 1 {
        vec![common.out.clone()]
    } else {
        seeds.iter().map(|s| common.out.join(format!("seed_{s}"))).collect()
    };
    let jobs: Vec<(u64, PathBuf)> = seeds.iter().copied().zip(dirs).collect();
    let workers = threads().min(jobs.len());
    let mut failures = Vec::new();
    for chunk in jobs.chunks(workers) {
        let results: Vec<Result<()>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|(seed, dir)| {
                    let config = &config;
                    let pretrained = pretrained.as_ref();
                    scope.spawn(move || train_one(config, *seed, pretrained, dir))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| bail!("replica panicked")))
                .collect()
        });
        failures.extend(results.into_iter().filter_map(Result::err));
    }
    for f in &failures {
        log::error!("{f:#}");
    }
    if !failures.is_empty() {
        bail!("{} of {} runs failed", failures.len(), seeds.len());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Demos { common, seed } => {
            let config = load_config(&common.config)?;
            let demos = harness::generate_demos(&config, seed)?;
            write_demonstrations(&common.out, &demos)?;
            println!(
                "{} episodes ({} successful) written to {}",
                demos.episodes.len(),
                demos.num_positive(),
                common.out.display()
            );
        }
        Command::Pretrain { common, seed, demos } => {
            let config = load_config(&common.config)?;
            let demos = match demos {
                Some(dir) => read_demonstrations(&dir)?,
                None => harness::generate_demos(&config, seed)?,
            };
            let pretrained = harness::pretrain_from(&config, seed, demos)?;
            write_config(&config, &common.out)?;
            let dir = common.out.join(PRETRAIN_DIR);
            pretrained.save(&dir)?;
            println!("{}", serde_json::to_string_pretty(&pretrained.summary)?);
            println!("pretrained models written to {}", dir.display());
        }
        Command::Train {
            common,
            seed,
            pretrained,
            overrides,
        } => train(&common, &seed, pretrained.as_deref(), &overrides)?,
        Command::Eval {
            run,
            checkpoint,
            episodes,
            seed,
        } => {
            let config = load_config(&run.join(CONFIG_FILE))?;
            let ck = lato::checkpoint::Checkpoint::read(&run.join(PRETRAIN_DIR).join("embedding.ckpt"))?;
            let (embedding, _) = EmbeddingParams::from_checkpoint(&ck)?;
            let dir = if checkpoint == "final" {
                checkpoint_dir(&run, None)
            } else {
                run.join(harness::CHECKPOINT_DIR).join(&checkpoint)
            };
            let records = evaluate_checkpoint(&config, &embedding, &dir, episodes, seed)?;
            for r in &records {
                println!("{}", serde_json::to_string(r)?);
            }
            let rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
            let successes = records.iter().filter(|r| r.success).count();
            let (m, s) = mean_std(&rewards);
            eprintln!("reward {m:.4} ± {s:.4}, success {successes}/{}", records.len());
        }
        Command::Report { out, runs } => {
            let report = harness::report(&runs, &out)?;
            for (dir, why) in &report.skipped {
                eprintln!("skipped {}: {why}", dir.display());
            }
            print!("{}", std::fs::read_to_string(&report.table)?);
            for p in &report.plots {
                eprintln!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut text = String::new();
    let mut previous = String::new();
    for cause in e.chain() {
        let message = cause.to_string();
        if !previous.contains(&message) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&message);
        }
        previous = message;
    }
    text
}
