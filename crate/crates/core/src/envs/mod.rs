//! Cooperative gridworld benchmarks behind one [`Environment`] interface.
//!
//! - [`MeetingGrid`]: two agents must land on a moving target at the same
//!   time; vector or 16×16 image observations with flicker.
//! - [`Cmotp`]: two agents carry a box to a drop zone.

mod cmotp;
mod image;
mod meeting;
mod planner;

pub use cmotp::{Cmotp, CmotpLayout, DropZone, ZoneReward};
pub use image::{render_cmotp_image, render_meeting_image, IMAGE_SIDE};
pub use meeting::{decode_meeting_observation, meeting_observation_len, MeetingGrid};
pub use planner::MeetingPlanner;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::InputShape;

pub const ACTION_COUNT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Action {
    pub const ALL: [Action; ACTION_COUNT] = [Action::Up, Action::Down, Action::Left, Action::Right, Action::Stay];

    pub fn from_index(index: usize) -> Result<Self> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or_else(|| Error::Argument(format!("action {index} outside 0..{ACTION_COUNT}")))
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn delta(self) -> (i64, i64) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Stay => (0, 0),
        }
    }
}

/// Grid cell; `x` is the column and `y` the row, `(0, 0)` is the top-left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Pos {
    pub x: usize,
    pub y: usize,
}

impl Pos {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn index(self, n: usize) -> usize {
        self.y * n + self.x
    }

    pub fn from_index(index: usize, n: usize) -> Self {
        Self::new(index % n, index / n)
    }

    /// The neighbouring cell in direction `action`, or `None` off-grid.
    pub fn shifted(self, action: Action, n: usize) -> Option<Pos> {
        let (dx, dy) = action.delta();
        let x = self.x as i64 + dx;
        let y = self.y as i64 + dy;
        if x < 0 || y < 0 || x >= n as i64 || y >= n as i64 {
            None
        } else {
            Some(Pos::new(x as usize, y as usize))
        }
    }

    /// Like [`Pos::shifted`] but stays in place at the border.
    pub fn moved(self, action: Action, n: usize) -> Pos {
        self.shifted(action, n).unwrap_or(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    #[default]
    Meeting,
    MeetingImage,
    Cmotp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CmotpVariant {
    #[default]
    Original,
    NarrowPassage,
    StochasticReward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetMotion {
    #[default]
    RandomWalk,
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardTable {
    pub meeting: f64,
    pub delivery: f64,
    pub zone_a: f64,
    pub zone_b_high: f64,
    pub zone_b_low: f64,
    pub zone_b_high_prob: f64,
}

impl Default for RewardTable {
    fn default() -> Self {
        Self {
            meeting: 1.0,
            delivery: 1.0,
            zone_a: 0.8,
            zone_b_high: 1.0,
            zone_b_low: 0.4,
            zone_b_high_prob: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: EnvKind,
    /// Defaults to 4 for meeting-in-a-grid and 16 for CMOTP.
    pub grid_size: Option<usize>,
    pub transition_noise: f64,
    /// Defaults to 0.3 for meeting-in-a-grid and 0 for CMOTP.
    pub flicker: Option<f64>,
    pub image_noise: f64,
    pub episode_cap: usize,
    pub cmotp_variant: CmotpVariant,
    pub target_motion: TargetMotion,
    pub rewards: RewardTable,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            kind: EnvKind::Meeting,
            grid_size: None,
            transition_noise: 0.1,
            flicker: None,
            image_noise: 0.1,
            episode_cap: 40,
            cmotp_variant: CmotpVariant::Original,
            target_motion: TargetMotion::RandomWalk,
            rewards: RewardTable::default(),
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn meeting(grid_size: usize) -> Self {
        Self {
            grid_size: Some(grid_size),
            ..Self::default()
        }
    }

    pub fn grid(&self) -> usize {
        self.grid_size.unwrap_or(match self.kind {
            EnvKind::Cmotp => 16,
            _ => 4,
        })
    }

    pub fn flicker_prob(&self) -> f64 {
        self.flicker.unwrap_or(match self.kind {
            EnvKind::Cmotp => 0.0,
            _ => 0.3,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid();
        for (name, p) in [
            ("transition_noise", self.transition_noise),
            ("flicker", self.flicker_prob()),
            ("image_noise", self.image_noise),
            ("rewards.zone_b_high_prob", self.rewards.zone_b_high_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} must lie in [0, 1]")));
            }
        }
        if n < 3 {
            return Err(Error::Config(format!("grid size {n} must be at least 3")));
        }
        if self.episode_cap == 0 {
            return Err(Error::Config("episode cap must be positive".into()));
        }
        match self.kind {
            EnvKind::Meeting => {}
            EnvKind::MeetingImage | EnvKind::Cmotp => {
                if IMAGE_SIDE % n != 0 {
                    return Err(Error::Config(format!(
                        "grid size {n} must divide the {IMAGE_SIDE}-pixel image side"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Full joint state. For meeting-in-a-grid `target` is set; for CMOTP
/// `box_pos` is set and `attached` tracks whether the agents carry it.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub n: usize,
    pub agents: [Pos; 2],
    pub target: Option<Pos>,
    pub box_pos: Option<Pos>,
    pub attached: bool,
    pub obstacles: Vec<bool>,
    pub step: usize,
}

impl GridState {
    pub fn is_obstacle(&self, p: Pos) -> bool {
        self.obstacles[p.index(self.n)]
    }

    pub fn is_free(&self, p: Pos) -> bool {
        !self.is_obstacle(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointStep {
    pub observations: Vec<Vec<f32>>,
    pub reward: f64,
    pub terminal: bool,
    pub success: bool,
}

pub trait Environment: Send {
    /// Starts a new episode and returns one observation per agent.
    fn reset(&mut self) -> Result<Vec<Vec<f32>>>;
    fn step(&mut self, actions: &[usize]) -> Result<JointStep>;
    fn state(&self) -> &GridState;
    fn observation_shape(&self) -> InputShape;
    fn render_ascii(&self) -> String;

    fn observation_len(&self) -> usize {
        match self.observation_shape() {
            InputShape::Flat { len } => len,
            InputShape::Image {
                channels,
                height,
                width,
            } => channels * height * width,
        }
    }

    fn action_count(&self) -> usize {
        ACTION_COUNT
    }

    fn agent_count(&self) -> usize {
        2
    }
}

pub fn make_env(config: &EnvConfig) -> Result<Box<dyn Environment>> {
    Ok(match config.kind {
        EnvKind::Meeting | EnvKind::MeetingImage => Box::new(MeetingGrid::new(config.clone())?),
        EnvKind::Cmotp => Box::new(Cmotp::new(config.clone())?),
    })
}

pub(crate) fn parse_actions(actions: &[usize]) -> Result<[Action; 2]> {
    if actions.len() != 2 {
        return Err(Error::Argument(format!("expected 2 actions, got {}", actions.len())));
    }
    Ok([Action::from_index(actions[0])?, Action::from_index(actions[1])?])
}

/// Executed action under transition noise: the intended one with
/// probability `1 - p`, otherwise a uniformly random different action.
pub(crate) fn noisy_action<R: rand::Rng>(intended: Action, p: f64, rng: &mut R) -> Action {
    if rng.random::<f64>() < p {
        let k = rng.random_range(0..ACTION_COUNT - 1);
        let idx = if k >= intended.index() { k + 1 } else { k };
        Action::ALL[idx]
    } else {
        intended
    }
}
