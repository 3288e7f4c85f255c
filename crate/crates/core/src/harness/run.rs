use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use super::metrics::{MetricsRow, MetricsWriter};
use super::policy::{evaluate, EvalResult, GreedyPolicy, Policy};
use super::stats::{eval_seed, splitmix64, sub_seed, Stream};
use crate::agent::{Learner, PolicyState, TrainStats};
use crate::envs::{make_env, EnvConfig, Environment};
use crate::error::{Error, Result};
use crate::nn::Checkpoint;
use crate::replay::{CertBuffer, ReplayConfig, Transition};

/// Learners use single precision.
pub type Precision = f32;

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    pub final_eval: EvalResult,
}

#[derive(Debug)]
pub struct SeedOutcome {
    pub seed: u64,
    pub csv: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub result: Result<RunRecord>,
}

pub fn csv_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed-{seed}.csv"))
}

pub fn checkpoint_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed-{seed}.ckpt"))
}

#[derive(Default)]
struct PeriodStats {
    returns: Vec<f64>,
    loss_sum: f64,
    loss_count: usize,
    tdl_sum: f64,
    tdl_count: usize,
    negative: u64,
    dominant: u64,
}

impl PeriodStats {
    fn add(&mut self, s: &TrainStats) {
        self.loss_sum += s.loss;
        self.loss_count += 1;
        if let Some(t) = s.mean_tdl {
            self.tdl_sum += t;
            self.tdl_count += 1;
        }
        self.negative += s.negative_cells;
        self.dominant += s.tdl_dominant_cells;
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn build_learners(config: &ExperimentConfig, env: &dyn Environment, seed: u64) -> Result<[Learner<Precision>; 2]> {
    let mk = |i: usize| {
        Learner::new(
            config.agent.variant(),
            config.agent.hyper.clone(),
            env.observation_shape(),
            env.action_count(),
            sub_seed(seed, Stream::Agent(i)),
        )
    };
    Ok([mk(0)?, mk(1)?])
}

/// Greedy evaluation of a learner pair on a fresh environment stream.
pub fn evaluate_learners(
    env_config: &EnvConfig,
    learners: &[Learner<Precision>; 2],
    episodes: usize,
    seed: u64,
) -> Result<EvalResult> {
    let mut env = make_env(&EnvConfig {
        seed,
        ..env_config.clone()
    })?;
    let mut p0 = GreedyPolicy::new(&learners[0], splitmix64(seed ^ 0xA0));
    let mut p1 = GreedyPolicy::new(&learners[1], splitmix64(seed ^ 0xA1));
    let mut policies: [&mut dyn Policy; 2] = [&mut p0, &mut p1];
    evaluate(env.as_mut(), &mut policies, episodes)
}

fn train_pair(
    learners: &mut [Learner<Precision>; 2],
    batches: &[Vec<crate::replay::Trace>],
    parallel: bool,
) -> Result<[TrainStats; 2]> {
    let [l0, l1] = learners;
    if parallel {
        std::thread::scope(|s| {
            let h = s.spawn(|| l1.train_step(&batches[1]));
            let a = l0.train_step(&batches[0]);
            let b = h.join().map_err(|_| Error::Usage("learner thread panicked".into()))?;
            Ok([a?, b?])
        })
    } else {
        Ok([l0.train_step(&batches[0])?, l1.train_step(&batches[1])?])
    }
}

fn save_checkpoint(path: &Path, config: &ExperimentConfig, seed: u64, learners: &[Learner<Precision>; 2]) -> Result<()> {
    let mut cfg = config.clone();
    cfg.run.seeds = vec![seed];
    let mut ckpt = Checkpoint {
        metadata: cfg.to_toml_string()?,
        arrays: Vec::new(),
    };
    for (i, l) in learners.iter().enumerate() {
        ckpt.push_network(&format!("agent{i}.main"), l.main());
        ckpt.push_network(&format!("agent{i}.target"), l.target());
    }
    ckpt.save(path)
}

/// Rebuilds the learner pair stored by a training run.
pub fn load_checkpoint(path: &Path) -> Result<(ExperimentConfig, [Learner<Precision>; 2])> {
    let ckpt = Checkpoint::load(path)?;
    let config = ExperimentConfig::from_toml_str(&ckpt.metadata).map_err(|e| Error::Input {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let env = make_env(&config.env)?;
    let mut learners = build_learners(&config, env.as_ref(), 0)?;
    for (i, l) in learners.iter_mut().enumerate() {
        ckpt.restore_network(&format!("agent{i}.main"), l.main_mut())?;
        ckpt.restore_network(&format!("agent{i}.target"), l.target_mut())?;
    }
    Ok((config, learners))
}

/// One seed: fresh environment and learners, lockstep training, periodic
/// greedy evaluation. Writes `seed-<seed>.csv` under `dir`; on failure an
/// error row is appended before the error is returned.
pub fn run_seed(config: &ExperimentConfig, seed: u64, dir: &Path) -> Result<RunRecord> {
    config.validate()?;
    let mut writer = MetricsWriter::create(&csv_path(dir, seed), config.run.flush_period)?;
    let mut rows = Vec::new();
    let mut current = 0u64;
    let outcome = train_loop(config, seed, dir, &mut writer, &mut rows, &mut current);
    if let Err(e) = &outcome {
        let row = MetricsRow::error(current, &format!("seed {seed}: {e}"));
        writer.write(&row)?;
    }
    writer.flush()?;
    outcome.map(|final_eval| RunRecord { seed, rows, final_eval })
}

fn train_loop(
    config: &ExperimentConfig,
    seed: u64,
    dir: &Path,
    writer: &mut MetricsWriter,
    rows: &mut Vec<MetricsRow>,
    current: &mut u64,
) -> Result<EvalResult> {
    let started = Instant::now();
    let hp = &config.agent.hyper;
    let run = &config.run;
    let variant = config.agent.variant();
    let mut env = make_env(&EnvConfig {
        seed: sub_seed(seed, Stream::Env),
        ..config.env.clone()
    })?;
    let mut learners = build_learners(config, env.as_ref(), seed)?;
    let mut replay = CertBuffer::new(ReplayConfig {
        agents: 2,
        capacity_episodes: hp.replay_episodes,
        max_episode_len: config.env.episode_cap,
        action_count: env.action_count(),
        seed: sub_seed(seed, Stream::Replay),
    })?;
    let trace_len = if variant.recurrent { hp.trace_len } else { 1 };
    let mut act_rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, Stream::Acting));
    let mut states = [PolicyState::<Precision>::default(), PolicyState::default()];
    let mut obs = env.reset()?;
    replay.start_episode()?;
    let mut episode_return = 0.0;
    let mut period = PeriodStats::default();
    let mut evals = 0u64;
    let mut final_eval = None;

    for step in 1..=run.total_steps {
        *current = step;
        let (mut epsilon, eta) = hp.schedule(step - 1);
        if step <= hp.warmup_steps {
            epsilon = 1.0;
        }
        let distortion = hp.distortion_at(eta);
        let mut actions = [0usize; 2];
        for i in 0..2 {
            actions[i] = learners[i].act(&obs[i], &mut states[i], epsilon, &distortion, &mut act_rng)?;
        }
        let joint = env.step(&actions)?;
        for i in 0..2 {
            replay.record(
                i,
                Transition {
                    observation: std::mem::take(&mut obs[i]),
                    action: actions[i],
                    reward: joint.reward,
                    next_observation: joint.observations[i].clone(),
                    terminal: joint.terminal,
                },
            )?;
        }
        episode_return += joint.reward;
        if joint.terminal {
            period.returns.push(episode_return);
            episode_return = 0.0;
            obs = env.reset()?;
            replay.start_episode()?;
            for s in &mut states {
                s.reset();
            }
        } else {
            obs = joint.observations;
        }

        if step > hp.warmup_steps && step % hp.train_every == 0 && replay.episode_count(0) > 0 {
            let batches = replay.sample_synchronized(hp.batch_size, trace_len)?;
            for s in train_pair(&mut learners, &batches, run.parallel_learners)? {
                period.add(&s);
            }
        }

        if step % run.eval_period == 0 || step == run.total_steps {
            let last = step == run.total_steps;
            let episodes = if last { run.final_eval_episodes } else { run.eval_episodes };
            let eval = evaluate_learners(&config.env, &learners, episodes, eval_seed(seed, evals))?;
            evals += 1;
            let uses_tdl = variant.algorithm.uses_tdl();
            let row = MetricsRow {
                step,
                train_return: mean(&period.returns),
                eval_return: Some(eval.mean_return),
                eval_length: Some(eval.mean_length),
                mean_tdl: (uses_tdl && period.tdl_count > 0).then(|| period.tdl_sum / period.tdl_count as f64),
                tdl_usage: (uses_tdl && period.negative > 0).then(|| period.dominant as f64 / period.negative as f64),
                epsilon: Some(epsilon),
                eta: Some(eta),
                loss: (period.loss_count > 0).then(|| period.loss_sum / period.loss_count as f64),
                wall_seconds: if run.record_wall_clock {
                    started.elapsed().as_secs_f64()
                } else {
                    0.0
                },
                status: "ok".into(),
            };
            writer.write(&row)?;
            rows.push(row);
            period = PeriodStats::default();
            if last {
                final_eval = Some(eval);
            }
        }
    }
    if run.checkpoint {
        save_checkpoint(&checkpoint_path(dir, seed), config, seed, &learners)?;
    }
    final_eval.ok_or_else(|| Error::Usage("run ended without a final evaluation".into()))
}

/// Runs every configured seed, `run.threads` at a time. Each seed is
/// isolated: a failing seed does not stop the others.
pub fn run(config: &ExperimentConfig) -> Result<Vec<SeedOutcome>> {
    config.validate()?;
    let dir = config.run.output_dir.clone();
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.toml"), config.to_toml_string()?)?;
    let mut outcomes = Vec::new();
    for chunk in config.run.seeds.chunks(config.run.threads) {
        let results: Vec<SeedOutcome> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&seed| {
                    let dir = dir.clone();
                    s.spawn(move || {
                        let result = run_seed(config, seed, &dir);
                        let ckpt = checkpoint_path(&dir, seed);
                        SeedOutcome {
                            seed,
                            csv: csv_path(&dir, seed),
                            checkpoint: (config.run.checkpoint && result.is_ok()).then_some(ckpt),
                            result,
                        }
                    })
                })
                .collect();
            handles
                .into_iter()
                .zip(chunk)
                .map(|(h, &seed)| {
                    h.join().unwrap_or_else(|_| SeedOutcome {
                        seed,
                        csv: csv_path(&dir, seed),
                        checkpoint: None,
                        result: Err(Error::Usage(format!("seed {seed} worker panicked"))),
                    })
                })
                .collect()
        });
        outcomes.extend(results);
    }
    Ok(outcomes)
}
