//! Rough timing of acting and training steps for the default recurrent
//! learner on 4x4 meeting-in-a-grid.

use std::time::Instant;

use lhiqn::agent::{AgentVariant, Algorithm, HyperParams, Learner, PolicyState};
use lhiqn::distribution::DistortionOperator;
use lhiqn::envs::{make_env, EnvConfig};
use lhiqn::replay::{CertBuffer, ReplayConfig, Transition};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lhiqn::Result<()> {
    let algorithm = match std::env::args().nth(1).as_deref() {
        Some("hdqn") => Algorithm::Hdqn,
        _ => Algorithm::LhIqn,
    };
    let batch: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(32);
    let hp = HyperParams {
        batch_size: batch,
        ..HyperParams::default()
    };
    let mut env = make_env(&EnvConfig::meeting(4))?;
    let variant = AgentVariant::new(algorithm, true);
    let mut learner: Learner<f32> = Learner::new(variant, hp.clone(), env.observation_shape(), 5, 1)?;
    let mut replay = CertBuffer::new(ReplayConfig {
        agents: 1,
        capacity_episodes: 5000,
        max_episode_len: 40,
        action_count: 5,
        seed: 3,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut state = PolicyState::default();
    let mut obs = env.reset()?;
    replay.start_episode()?;
    let op = DistortionOperator::identity();
    let t = Instant::now();
    let steps = 4000;
    for _ in 0..steps {
        let a = learner.act(&obs[0], &mut state, 0.0, &op, &mut rng)?;
        let s = env.step(&[a, 4])?;
        replay.record(
            0,
            Transition {
                observation: obs[0].clone(),
                action: a,
                reward: s.reward,
                next_observation: s.observations[0].clone(),
                terminal: s.terminal,
            },
        )?;
        if s.terminal {
            obs = env.reset()?;
            replay.start_episode()?;
            state.reset();
        } else {
            obs = s.observations;
        }
    }
    let act = t.elapsed().as_secs_f64() / steps as f64;
    let t = Instant::now();
    let updates = 200;
    for _ in 0..updates {
        let b = replay.sample_synchronized(hp.batch_size, hp.trace_len)?;
        learner.train_step(&b[0])?;
    }
    let train = t.elapsed().as_secs_f64() / updates as f64;
    println!("act {:.3} ms, train {:.3} ms (batch {})", act * 1e3, train * 1e3, hp.batch_size);
    Ok(())
}
