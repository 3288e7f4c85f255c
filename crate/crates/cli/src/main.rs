//! `lhiqn` command-line interface: train, evaluate, aggregate, inspect envs.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lhiqn::envs::{make_env, CmotpVariant, EnvConfig, EnvKind, MeetingPlanner};
use lhiqn::harness::{aggregate, evaluate_learners, load_checkpoint, run, ExperimentConfig};

#[derive(Parser)]
#[command(name = "lhiqn", version, about = "Decentralized distributional multi-agent RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one learner pair per seed and write metrics CSVs.
    Train {
        /// Experiment TOML with [env], [agent] and [run] sections.
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seeds, overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Output directory, overriding run.output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Total environment steps, overriding run.total_steps.
        #[arg(long)]
        steps: Option<u64>,
        /// Seeds trained concurrently.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Greedy evaluation of a saved learner pair.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// Evaluation RNG seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-step mean and std across metrics CSVs, in long format.
    Aggregate {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print ASCII frames of a scripted episode.
    DebugEnv {
        #[arg(long, value_enum, default_value_t = Kind::Meeting)]
        kind: Kind,
        /// Grid side; defaults to 4 for meeting and 16 for CMOTP.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, value_enum, default_value_t = Variant::Original)]
        variant: Variant,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Transition-noise probability.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Meeting,
    MeetingImage,
    Cmotp,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Original,
    NarrowPassage,
    StochasticReward,
}

fn train(
    config: PathBuf,
    seeds: Option<Vec<u64>>,
    out: Option<PathBuf>,
    steps: Option<u64>,
    threads: Option<usize>,
) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&config)?;
    if let Some(s) = seeds {
        cfg.run.seeds = s;
    }
    if let Some(o) = out {
        cfg.run.output_dir = o;
    }
    if let Some(n) = steps {
        cfg.run.total_steps = n;
        cfg.run.eval_period = cfg.run.eval_period.min(n);
    }
    if let Some(t) = threads {
        cfg.run.threads = t;
    }
    cfg.validate()?;
    let outcomes = run(&cfg)?;
    let mut failed = 0;
    for o in &outcomes {
        match &o.result {
            Ok(r) => println!(
                "seed {}: final eval return {:.4} (length {:.2}) -> {}",
                o.seed,
                r.final_eval.mean_return,
                r.final_eval.mean_length,
                o.csv.display()
            ),
            Err(e) => {
                failed += 1;
                eprintln!("seed {} failed: {e}", o.seed);
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} seeds failed", outcomes.len());
    }
    Ok(())
}

fn debug_env(kind: Kind, grid: Option<usize>, variant: Variant, seed: u64, noise: f64) -> Result<()> {
    let cfg = EnvConfig {
        kind: match kind {
            Kind::Meeting => EnvKind::Meeting,
            Kind::MeetingImage => EnvKind::MeetingImage,
            Kind::Cmotp => EnvKind::Cmotp,
        },
        grid_size: grid,
        transition_noise: noise,
        cmotp_variant: match variant {
            Variant::Original => CmotpVariant::Original,
            Variant::NarrowPassage => CmotpVariant::NarrowPassage,
            Variant::StochasticReward => CmotpVariant::StochasticReward,
        },
        seed,
        ..EnvConfig::default()
    };
    cfg.validate()?;
    let mut env = make_env(&cfg)?;
    let planner = match cfg.kind {
        EnvKind::Cmotp => None,
        _ if cfg.grid() <= 5 => Some(Arc::new(MeetingPlanner::for_config(&cfg)?)),
        _ => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    env.reset()?;
    println!("step 0\n{}", env.render_ascii());
    loop {
        let state = env.state().clone();
        let actions = match (&planner, state.target) {
            (Some(p), Some(t)) => p.joint_action(state.agents, t, cfg.episode_cap - state.step).to_vec(),
            _ => vec![rng.random_range(0..5), rng.random_range(0..5)],
        };
        let step = env.step(&actions)?;
        println!(
            "step {} actions {:?} reward {}\n{}",
            env.state().step,
            actions,
            step.reward,
            env.render_ascii()
        );
        if step.terminal {
            break;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train {
            config,
            seeds,
            out,
            steps,
            threads,
        } => train(config, seeds, out, steps, threads),
        Command::Eval {
            checkpoint,
            episodes,
            seed,
        } => {
            let (cfg, learners) =
                load_checkpoint(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            let r = evaluate_learners(&cfg.env, &learners, episodes, seed)?;
            println!(
                "mean return {:.4}, mean length {:.2}, success rate {:.3} over {episodes} episodes",
                r.mean_return, r.mean_length, r.success_rate
            );
            Ok(())
        }
        Command::Aggregate { inputs, out } => {
            let summary = aggregate(&inputs)?;
            summary.write_csv(&out)?;
            summary.write_report(std::io::stdout())?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::DebugEnv {
            kind,
            grid,
            variant,
            seed,
            noise,
        } => debug_env(kind, grid, variant, seed, noise),
    }
}
