use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{Learner, PolicyState};
use crate::distribution::DistortionOperator;
use crate::envs::{decode_meeting_observation, Environment, MeetingPlanner, ACTION_COUNT};
use crate::error::{Error, Result};
use crate::nn::Real;

/// Decentralized controller for one agent.
pub trait Policy {
    /// Called at every episode start.
    fn reset(&mut self);
    fn act(&mut self, obs: &[f32]) -> Result<usize>;
}

/// Greedy learned policy: epsilon 0, undistorted quantile levels.
pub struct GreedyPolicy<'a, T: Real> {
    learner: &'a Learner<T>,
    state: PolicyState<T>,
    rng: ChaCha8Rng,
}

impl<'a, T: Real> GreedyPolicy<'a, T> {
    pub fn new(learner: &'a Learner<T>, seed: u64) -> Self {
        Self {
            learner,
            state: PolicyState::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl<T: Real> Policy for GreedyPolicy<'_, T> {
    fn reset(&mut self) {
        self.state.reset();
    }

    fn act(&mut self, obs: &[f32]) -> Result<usize> {
        self.learner
            .act(obs, &mut self.state, 0.0, &DistortionOperator::identity(), &mut self.rng)
    }
}

pub struct RandomPolicy {
    rng: ChaCha8Rng,
    actions: usize,
}

impl RandomPolicy {
    pub fn new(actions: usize, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            actions,
        }
    }
}

impl Policy for RandomPolicy {
    fn reset(&mut self) {}

    fn act(&mut self, _obs: &[f32]) -> Result<usize> {
        Ok(self.rng.random_range(0..self.actions))
    }
}

/// Follows the dynamic-programming joint plan for meeting-in-a-grid. Needs
/// unflickered vector observations; each agent recomputes the joint action
/// from its own view and executes its component.
pub struct ScriptedMeetingPolicy {
    planner: Arc<MeetingPlanner>,
    agent: usize,
    n: usize,
    step: usize,
}

impl ScriptedMeetingPolicy {
    pub fn new(planner: Arc<MeetingPlanner>, agent: usize, n: usize) -> Self {
        Self {
            planner,
            agent,
            n,
            step: 0,
        }
    }

    pub fn pair(planner: Arc<MeetingPlanner>, n: usize) -> [Self; 2] {
        [Self::new(planner.clone(), 0, n), Self::new(planner, 1, n)]
    }
}

impl Policy for ScriptedMeetingPolicy {
    fn reset(&mut self) {
        self.step = 0;
    }

    fn act(&mut self, obs: &[f32]) -> Result<usize> {
        let [own, mate, target] = decode_meeting_observation(obs, self.n)?;
        let (own, mate, target) = match (own, mate, target) {
            (Some(a), Some(b), Some(t)) => (a, b, t),
            _ => return Err(Error::Unsupported("scripted policy needs unflickered observations".into())),
        };
        let agents = if self.agent == 0 { [own, mate] } else { [mate, own] };
        let remaining = self.planner.horizon().saturating_sub(self.step).max(1);
        self.step += 1;
        let joint = self.planner.joint_action(agents, target, remaining);
        debug_assert!(joint[self.agent] < ACTION_COUNT);
        Ok(joint[self.agent])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub mean_return: f64,
    pub mean_length: f64,
    pub success_rate: f64,
}

/// Joint rollouts without learning; `env` supplies its own randomness.
pub fn evaluate(env: &mut dyn Environment, policies: &mut [&mut dyn Policy], episodes: usize) -> Result<EvalResult> {
    if episodes == 0 {
        return Err(Error::Argument("evaluation needs at least one episode".into()));
    }
    if policies.len() != env.agent_count() {
        return Err(Error::Argument(format!(
            "{} policies for {} agents",
            policies.len(),
            env.agent_count()
        )));
    }
    let (mut ret, mut len, mut wins) = (0.0, 0usize, 0usize);
    for _ in 0..episodes {
        let mut obs = env.reset()?;
        for p in policies.iter_mut() {
            p.reset();
        }
        loop {
            let actions = policies
                .iter_mut()
                .zip(&obs)
                .map(|(p, o)| p.act(o))
                .collect::<Result<Vec<_>>>()?;
            let step = env.step(&actions)?;
            ret += step.reward;
            len += 1;
            if step.terminal {
                wins += step.success as usize;
                break;
            }
            obs = step.observations;
        }
    }
    let n = episodes as f64;
    Ok(EvalResult {
        mean_return: ret / n,
        mean_length: len as f64 / n,
        success_rate: wins as f64 / n,
    })
}
