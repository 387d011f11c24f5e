use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hwydrive_core::config::Config;
use hwydrive_core::eval;
use hwydrive_core::numerics::Checkpoint;
use hwydrive_core::trainer::{self, TrainOutputs};

#[derive(Parser)]
#[command(name = "hwydrive", version, about = "Hierarchical highway driving agent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write its log and checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
        /// Also write the per-step event log.
        #[arg(long)]
        events: bool,
    },
    /// Greedy evaluation of a checkpoint; prints the metrics CSV.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory that receives metrics.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write per-step trajectory records of greedy episodes.
    Rollout {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory that receives trajectory.jsonl.
        #[arg(long, default_value = "runs/rollout")]
        out: PathBuf,
    },
    /// Print layer shapes and parameter norms of a checkpoint.
    InspectCheckpoint {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config file (key = value).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Disable risk-based corrections and safety termination.
    #[arg(long)]
    no_safety: bool,
    /// Start from the full-scale defaults instead of the desk-scale ones.
    #[arg(long)]
    paper_scale: bool,
}

impl Common {
    fn config(&self) -> Result<Config> {
        let base = if self.paper_scale { Config::paper_scale() } else { Config::default() };
        let mut cfg = match &self.config {
            Some(p) => base.with_file(p)?,
            None => base,
        };
        if self.no_safety {
            cfg.safety.enabled = false;
        }
        if let Some(s) = self.seed {
            cfg.train.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn train(common: &Common, out: &Path, events: bool) -> Result<()> {
    let mut cfg = common.config()?;
    if let Some(n) = common.episodes {
        cfg.train.episodes = n;
    }
    let runs = cfg.train.seed_count;
    for k in 0..runs {
        let seed = cfg.train.seed + k as u64;
        let dir = if runs == 1 { out.to_path_buf() } else { out.join(format!("seed_{seed}")) };
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join("config.txt"), cfg.to_text())?;
        let res = trainer::train(
            &cfg,
            seed,
            &TrainOutputs {
                dir: Some(dir.clone()),
                events,
            },
        )
        .with_context(|| format!("training seed {seed}"))?;
        let n = res.log.len();
        let tail = &res.log[n.saturating_sub(50)..];
        // + 0.0 turns the empty sum's -0 into 0
        let mean = tail.iter().map(|e| e.summary.total_reward).sum::<f64>() / tail.len().max(1) as f64 + 0.0;
        let crashes = tail.iter().filter(|e| e.summary.collisions > 0).count();
        println!(
            "seed {seed}: {n} episodes, last {} mean reward {mean:.3}, {crashes} collisions -> {}",
            tail.len(),
            dir.display()
        );
    }
    Ok(())
}

fn evaluate(common: &Common, checkpoint: &Path, out: Option<&Path>) -> Result<()> {
    let cfg = common.config()?;
    let ck = load_checkpoint(checkpoint)?;
    let episodes = common.episodes.unwrap_or(100);
    let report = eval::evaluate(&cfg, &ck, episodes, cfg.train.seed, cfg.safety.enabled)?;
    let csv = report.to_csv();
    print!("{csv}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("metrics.csv"), &csv)?;
    }
    Ok(())
}

fn rollout(common: &Common, checkpoint: &Path, out: &Path) -> Result<()> {
    let cfg = common.config()?;
    let ck = load_checkpoint(checkpoint)?;
    let mut agent = eval::agent_from_checkpoint(&cfg, &ck, cfg.safety.enabled)?;
    let records = eval::run_greedy(&mut agent, common.episodes.unwrap_or(1), cfg.train.seed, true)?;
    std::fs::create_dir_all(out)?;
    let path = out.join("trajectory.jsonl");
    eval::write_trajectory(&path, &records).with_context(|| format!("writing {}", path.display()))?;
    println!("{} records -> {}", records.len(), path.display());
    Ok(())
}

fn inspect(checkpoint: &Path) -> Result<()> {
    let ck = load_checkpoint(checkpoint)?;
    if ck.networks.is_empty() {
        bail!("checkpoint {} holds no networks", checkpoint.display());
    }
    for (name, net) in &ck.networks {
        println!("{name}: {} params, output {}", net.param_count(), net.output.name());
        for (i, layer) in net.layers.iter().enumerate() {
            let w = layer.weights.iter().map(|v| v * v).sum::<f64>().sqrt();
            let b = layer.bias.iter().map(|v| v * v).sum::<f64>().sqrt();
            println!(
                "  layer {i}: {} -> {}  |W| {w:.6}  |b| {b:.6}",
                layer.input_dim(),
                layer.output_dim()
            );
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Train { common, out, events } => train(common, out, *events),
        Command::Evaluate { common, checkpoint, out } => evaluate(common, checkpoint, out.as_deref()),
        Command::Rollout { common, checkpoint, out } => rollout(common, checkpoint, out),
        Command::InspectCheckpoint { checkpoint } => inspect(checkpoint),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
