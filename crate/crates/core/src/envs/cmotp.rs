use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::{render_cmotp_image, IMAGE_SIDE};
use super::{noisy_action, parse_actions, Action, CmotpVariant, EnvConfig, EnvKind, Environment, GridState, JointStep, Pos};
use crate::error::{Error, Result};
use crate::nn::InputShape;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZoneReward {
    Fixed(f64),
    Bernoulli { high_prob: f64, high: f64, low: f64 },
}

impl ZoneReward {
    pub fn expectation(&self) -> f64 {
        match *self {
            ZoneReward::Fixed(r) => r,
            ZoneReward::Bernoulli { high_prob, high, low } => high_prob * high + (1.0 - high_prob) * low,
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            ZoneReward::Fixed(r) => r,
            ZoneReward::Bernoulli { high_prob, high, low } => {
                if rng.random::<f64>() < high_prob {
                    high
                } else {
                    low
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropZone {
    pub cells: Vec<Pos>,
    pub reward: ZoneReward,
}

/// Fixed CMOTP layout: the box starts in the lower middle, the agents in
/// the bottom corners, drop zones lie along the top row.
#[derive(Debug, Clone, PartialEq)]
pub struct CmotpLayout {
    pub n: usize,
    pub obstacles: Vec<bool>,
    pub box_start: Pos,
    pub agent_starts: [Pos; 2],
    pub zones: Vec<DropZone>,
}

impl CmotpLayout {
    pub fn for_config(config: &EnvConfig) -> Result<Self> {
        let n = config.grid();
        if n < 8 {
            return Err(Error::Config(format!("CMOTP layout needs a grid of at least 8, got {n}")));
        }
        let mid = n / 2;
        let mut obstacles = vec![false; n * n];
        let rewards = &config.rewards;
        let zones = match config.cmotp_variant {
            CmotpVariant::Original | CmotpVariant::NarrowPassage => vec![DropZone {
                cells: (mid - 1..=mid + 1).map(|x| Pos::new(x, 0)).collect(),
                reward: ZoneReward::Fixed(rewards.delivery),
            }],
            CmotpVariant::StochasticReward => vec![
                DropZone {
                    cells: (1..=3).map(|x| Pos::new(x, 0)).collect(),
                    reward: ZoneReward::Fixed(rewards.zone_a),
                },
                DropZone {
                    cells: (n - 4..=n - 2).map(|x| Pos::new(x, 0)).collect(),
                    reward: ZoneReward::Bernoulli {
                        high_prob: rewards.zone_b_high_prob,
                        high: rewards.zone_b_high,
                        low: rewards.zone_b_low,
                    },
                },
            ],
        };
        if config.cmotp_variant == CmotpVariant::NarrowPassage {
            let wall = n / 2 - 1;
            for x in 0..n {
                if x + 1 < mid || x > mid + 1 {
                    obstacles[Pos::new(x, wall).index(n)] = true;
                }
            }
        }
        let layout = Self {
            n,
            obstacles,
            box_start: Pos::new(mid, n - 3),
            agent_starts: [Pos::new(1, n - 1), Pos::new(n - 2, n - 1)],
            zones,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if self.obstacles.len() != n * n {
            return Err(Error::Config("obstacle mask does not match the grid".into()));
        }
        let fixed = self.agent_starts.iter().chain([&self.box_start]);
        for p in fixed.chain(self.zones.iter().flat_map(|z| z.cells.iter())) {
            if p.x >= n || p.y >= n || self.obstacles[p.index(n)] {
                return Err(Error::Config(format!(
                    "infeasible layout: cell ({}, {}) is blocked or off-grid",
                    p.x, p.y
                )));
            }
        }
        Ok(())
    }

    pub fn zone_at(&self, p: Pos) -> Option<usize> {
        self.zones.iter().position(|z| z.cells.contains(&p))
    }

    pub fn zone_cells(&self) -> Vec<Pos> {
        self.zones.iter().flat_map(|z| z.cells.iter().copied()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Cmotp {
    config: EnvConfig,
    layout: CmotpLayout,
    zone_cells: Vec<Pos>,
    state: GridState,
    rng: ChaCha8Rng,
    active: bool,
}

impl Cmotp {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        if config.kind != EnvKind::Cmotp {
            return Err(Error::Config("CMOTP built from a non-CMOTP config".into()));
        }
        let layout = CmotpLayout::for_config(&config)?;
        Ok(Self::with_layout(config, layout))
    }

    /// Uses a custom layout; fails if it is infeasible.
    pub fn from_layout(config: EnvConfig, layout: CmotpLayout) -> Result<Self> {
        config.validate()?;
        layout.validate()?;
        if layout.n != config.grid() {
            return Err(Error::Config("layout size differs from the configured grid".into()));
        }
        Ok(Self::with_layout(config, layout))
    }

    fn with_layout(config: EnvConfig, layout: CmotpLayout) -> Self {
        let state = GridState {
            n: layout.n,
            agents: layout.agent_starts,
            target: None,
            box_pos: Some(layout.box_start),
            attached: false,
            obstacles: layout.obstacles.clone(),
            step: 0,
        };
        Self {
            zone_cells: layout.zone_cells(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            layout,
            state,
            active: false,
        }
    }

    pub fn layout(&self) -> &CmotpLayout {
        &self.layout
    }

    pub fn set_state(&mut self, agents: [Pos; 2], box_pos: Pos, attached: bool, step: usize) -> Result<()> {
        let n = self.state.n;
        for p in agents.iter().chain([&box_pos]) {
            if p.x >= n || p.y >= n || self.state.is_obstacle(*p) {
                return Err(Error::Argument(format!("cell ({}, {}) is blocked or off-grid", p.x, p.y)));
            }
        }
        if agents[0] == agents[1] || agents.contains(&box_pos) {
            return Err(Error::Argument("entities must occupy distinct cells".into()));
        }
        if attached && !Self::beside(box_pos, agents, n) {
            return Err(Error::Argument("attached agents must flank the box".into()));
        }
        self.state.agents = agents;
        self.state.box_pos = Some(box_pos);
        self.state.attached = attached;
        self.state.step = step;
        self.active = true;
        Ok(())
    }

    fn beside(b: Pos, agents: [Pos; 2], n: usize) -> bool {
        match (b.shifted(Action::Left, n), b.shifted(Action::Right, n)) {
            (Some(l), Some(r)) => (agents[0] == l && agents[1] == r) || (agents[0] == r && agents[1] == l),
            _ => false,
        }
    }

    fn open_for_agent(&self, p: Option<Pos>) -> Option<Pos> {
        p.filter(|c| self.state.is_free(*c) && Some(*c) != self.state.box_pos)
    }

    fn move_individually(&mut self, executed: [Action; 2]) {
        let n = self.state.n;
        let cur = self.state.agents;
        let mut dest = [0, 1].map(|i| self.open_for_agent(cur[i].shifted(executed[i], n)).unwrap_or(cur[i]));
        loop {
            let mut changed = false;
            if dest[0] == dest[1] && (dest[0] != cur[0] || dest[1] != cur[1]) {
                dest = cur;
                changed = true;
            }
            if dest[0] == cur[1] && dest[1] == cur[0] && cur[0] != cur[1] {
                dest = cur;
                changed = true;
            }
            for i in 0..2 {
                let j = 1 - i;
                if dest[i] != cur[i] && dest[i] == cur[j] && dest[j] == cur[j] {
                    dest[i] = cur[i];
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        self.state.agents = dest;
    }

    fn move_compound(&mut self, executed: [Action; 2]) {
        if executed[0] != executed[1] || executed[0] == Action::Stay {
            return;
        }
        let n = self.state.n;
        let dir = executed[0];
        let b = self.state.box_pos.expect("cmotp box");
        let moved: Option<Vec<Pos>> = [b, self.state.agents[0], self.state.agents[1]]
            .iter()
            .map(|p| p.shifted(dir, n).filter(|c| self.state.is_free(*c)))
            .collect();
        if let Some(m) = moved {
            self.state.box_pos = Some(m[0]);
            self.state.agents = [m[1], m[2]];
        }
    }

    fn observe_all(&mut self) -> Vec<Vec<f32>> {
        let p = self.config.flicker_prob();
        (0..2)
            .map(|agent| {
                let mut visible = [true; 3];
                for v in &mut visible {
                    *v = self.rng.random::<f64>() >= p;
                }
                render_cmotp_image(
                    &self.state,
                    &self.zone_cells,
                    agent,
                    visible,
                    self.config.image_noise,
                    &mut self.rng,
                )
            })
            .collect()
    }
}

impl Environment for Cmotp {
    fn reset(&mut self) -> Result<Vec<Vec<f32>>> {
        self.state.agents = self.layout.agent_starts;
        self.state.box_pos = Some(self.layout.box_start);
        self.state.attached = false;
        self.state.step = 0;
        self.active = true;
        Ok(self.observe_all())
    }

    fn step(&mut self, actions: &[usize]) -> Result<JointStep> {
        let intended = parse_actions(actions)?;
        if !self.active {
            return Err(Error::Usage("step called before reset or after a terminal step".into()));
        }
        let p = self.config.transition_noise;
        let executed = [
            noisy_action(intended[0], p, &mut self.rng),
            noisy_action(intended[1], p, &mut self.rng),
        ];
        self.state.step += 1;
        let mut reward = 0.0;
        let mut success = false;
        if self.state.attached {
            self.move_compound(executed);
            let b = self.state.box_pos.expect("cmotp box");
            if let Some(z) = self.layout.zone_at(b) {
                reward = self.layout.zones[z].reward.sample(&mut self.rng);
                success = true;
            }
        } else {
            self.move_individually(executed);
            let b = self.state.box_pos.expect("cmotp box");
            self.state.attached = Self::beside(b, self.state.agents, self.state.n);
        }
        let terminal = success || self.state.step >= self.config.episode_cap;
        self.active = !terminal;
        Ok(JointStep {
            observations: self.observe_all(),
            reward,
            terminal,
            success,
        })
    }

    fn state(&self) -> &GridState {
        &self.state
    }

    fn observation_shape(&self) -> InputShape {
        InputShape::Image {
            channels: 1,
            height: IMAGE_SIDE,
            width: IMAGE_SIDE,
        }
    }

    fn render_ascii(&self) -> String {
        let n = self.state.n;
        let mut out = String::new();
        for y in 0..n {
            for x in 0..n {
                let p = Pos::new(x, y);
                let c = if self.state.agents[0] == p {
                    '1'
                } else if self.state.agents[1] == p {
                    '2'
                } else if self.state.box_pos == Some(p) {
                    'B'
                } else if self.state.is_obstacle(p) {
                    '#'
                } else if let Some(z) = self.layout.zone_at(p) {
                    (b'a' + z as u8) as char
                } else {
                    '.'
                };
                out.push(c);
            }
            out.push('\n');
        }
        out
    }
}
