use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::{render_meeting_image, IMAGE_SIDE};
use super::{
    noisy_action, parse_actions, Action, EnvConfig, EnvKind, Environment, GridState, JointStep, Pos, TargetMotion,
};
use crate::error::{Error, Result};
use crate::nn::InputShape;

/// Vector observation length: three one-hot grids plus a validity bit each.
pub fn meeting_observation_len(n: usize) -> usize {
    3 * (n * n + 1)
}

/// Recovers `[self, teammate, target]` positions from a vector observation;
/// flickered components come back as `None`.
pub fn decode_meeting_observation(obs: &[f32], n: usize) -> Result<[Option<Pos>; 3]> {
    if obs.len() != meeting_observation_len(n) {
        return Err(Error::Shape(format!(
            "observation has {} entries, expected {}",
            obs.len(),
            meeting_observation_len(n)
        )));
    }
    let cells = n * n;
    let mut out = [None; 3];
    for (c, slot) in out.iter_mut().enumerate() {
        let base = c * (cells + 1);
        if obs[base + cells] > 0.5 {
            *slot = (0..cells).find(|&i| obs[base + i] > 0.5).map(|i| Pos::from_index(i, n));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct MeetingGrid {
    config: EnvConfig,
    state: GridState,
    rng: ChaCha8Rng,
    active: bool,
}

impl MeetingGrid {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        if config.kind == EnvKind::Cmotp {
            return Err(Error::Config("meeting grid built from a CMOTP config".into()));
        }
        let n = config.grid();
        Ok(Self {
            state: GridState {
                n,
                agents: [Pos::default(); 2],
                target: Some(Pos::default()),
                box_pos: None,
                attached: false,
                obstacles: vec![false; n * n],
                step: 0,
            },
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            active: false,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Replaces the state, e.g. to set up a specific situation in tests.
    pub fn set_state(&mut self, agents: [Pos; 2], target: Pos, step: usize) -> Result<()> {
        let n = self.state.n;
        if agents.iter().chain([&target]).any(|p| p.x >= n || p.y >= n) {
            return Err(Error::Argument("position outside the grid".into()));
        }
        if step >= self.config.episode_cap {
            return Err(Error::Argument(format!("step {step} at or beyond the episode cap")));
        }
        self.state.agents = agents;
        self.state.target = Some(target);
        self.state.step = step;
        self.active = true;
        Ok(())
    }

    fn observe(&mut self, agent: usize) -> Vec<f32> {
        let p = self.config.flicker_prob();
        let mut visible = [true; 3];
        for v in &mut visible {
            *v = self.rng.random::<f64>() >= p;
        }
        let entities = [
            self.state.agents[agent],
            self.state.agents[1 - agent],
            self.state.target.expect("meeting target"),
        ];
        match self.config.kind {
            EnvKind::MeetingImage => {
                render_meeting_image(&self.state, agent, visible, self.config.image_noise, &mut self.rng)
            }
            _ => {
                let n = self.state.n;
                let cells = n * n;
                let mut obs = vec![0.0f32; meeting_observation_len(n)];
                for (c, (pos, vis)) in entities.iter().zip(visible).enumerate() {
                    if vis {
                        let base = c * (cells + 1);
                        obs[base + pos.index(n)] = 1.0;
                        obs[base + cells] = 1.0;
                    }
                }
                obs
            }
        }
    }

    fn observe_all(&mut self) -> Vec<Vec<f32>> {
        (0..2).map(|a| self.observe(a)).collect()
    }
}

impl Environment for MeetingGrid {
    fn reset(&mut self) -> Result<Vec<Vec<f32>>> {
        let n = self.state.n;
        let cells = sample(&mut self.rng, n * n, 3).into_vec();
        self.state.agents = [Pos::from_index(cells[0], n), Pos::from_index(cells[1], n)];
        self.state.target = Some(Pos::from_index(cells[2], n));
        self.state.step = 0;
        self.active = true;
        Ok(self.observe_all())
    }

    fn step(&mut self, actions: &[usize]) -> Result<JointStep> {
        let actions = parse_actions(actions)?;
        if !self.active {
            return Err(Error::Usage("step called before reset or after a terminal step".into()));
        }
        let n = self.state.n;
        for (agent, intended) in actions.iter().enumerate() {
            let executed = noisy_action(*intended, self.config.transition_noise, &mut self.rng);
            self.state.agents[agent] = self.state.agents[agent].moved(executed, n);
        }
        self.state.step += 1;
        let target = self.state.target.expect("meeting target");
        let success = self.state.agents.iter().all(|a| *a == target);
        if !success && self.config.target_motion == TargetMotion::RandomWalk {
            let mv = Action::ALL[self.rng.random_range(0..Action::ALL.len())];
            self.state.target = Some(target.moved(mv, n));
        }
        let terminal = success || self.state.step >= self.config.episode_cap;
        self.active = !terminal;
        Ok(JointStep {
            observations: self.observe_all(),
            reward: if success { self.config.rewards.meeting } else { 0.0 },
            terminal,
            success,
        })
    }

    fn state(&self) -> &GridState {
        &self.state
    }

    fn observation_shape(&self) -> InputShape {
        match self.config.kind {
            EnvKind::MeetingImage => InputShape::Image {
                channels: 1,
                height: IMAGE_SIDE,
                width: IMAGE_SIDE,
            },
            _ => InputShape::Flat {
                len: meeting_observation_len(self.state.n),
            },
        }
    }

    fn render_ascii(&self) -> String {
        let n = self.state.n;
        let target = self.state.target.expect("meeting target");
        let mut out = String::new();
        for y in 0..n {
            for x in 0..n {
                let p = Pos::new(x, y);
                let a0 = self.state.agents[0] == p;
                let a1 = self.state.agents[1] == p;
                out.push(match (a0, a1, target == p) {
                    (true, true, true) => '@',
                    (true, true, false) => '&',
                    (true, false, _) => '1',
                    (false, true, _) => '2',
                    (false, false, true) => 'T',
                    _ => '.',
                });
            }
            out.push('\n');
        }
        out
    }
}
