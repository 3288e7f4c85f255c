//! Independent learners: the IQN family with hysteretic and likelihood
//! weighting, and DQN/HDQN baselines.

mod learner;

pub use learner::{Learner, PolicyState, TrainStats};

use serde::{Deserialize, Serialize};

use crate::distribution::{CvnarForm, DistortionKind, DistortionOperator, TdlOptions};
use crate::error::{Error, Result};
use crate::nn::{InitPolicy, InputShape, NetworkSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Iqn,
    HIqn,
    LIqn,
    #[default]
    LhIqn,
    Dqn,
    Hdqn,
}

impl Algorithm {
    pub fn is_quantile(self) -> bool {
        matches!(self, Algorithm::Iqn | Algorithm::HIqn | Algorithm::LIqn | Algorithm::LhIqn)
    }

    pub fn uses_tdl(self) -> bool {
        matches!(self, Algorithm::LIqn | Algorithm::LhIqn)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Iqn => "IQN",
            Algorithm::HIqn => "H-IQN",
            Algorithm::LIqn => "L-IQN",
            Algorithm::LhIqn => "LH-IQN",
            Algorithm::Dqn => "DQN",
            Algorithm::Hdqn => "HDQN",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentVariant {
    pub algorithm: Algorithm,
    pub recurrent: bool,
}

impl Default for AgentVariant {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::LhIqn,
            recurrent: true,
        }
    }
}

impl AgentVariant {
    pub fn new(algorithm: Algorithm, recurrent: bool) -> Self {
        Self { algorithm, recurrent }
    }

    /// Conventional label, e.g. `LH-IRQN` or `HDRQN` for recurrent variants.
    pub fn label(&self) -> String {
        let base = self.algorithm.name();
        if !self.recurrent {
            return base.to_string();
        }
        match self.algorithm {
            Algorithm::Dqn => "DRQN".into(),
            Algorithm::Hdqn => "HDRQN".into(),
            _ => base.replace("IQN", "IRQN"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum EtaSchedule {
    TiedToEpsilon,
    Linear { start: f64, end: f64, steps: u64 },
}

impl Default for EtaSchedule {
    fn default() -> Self {
        EtaSchedule::TiedToEpsilon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.1,
            steps: 200_000,
        }
    }
}

fn linear(start: f64, end: f64, steps: u64, step: u64) -> f64 {
    if steps == 0 || step >= steps {
        return end;
    }
    start + (end - start) * step as f64 / steps as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Decrease factor for negative updates.
    pub beta: f64,
    pub gamma: f64,
    pub base_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Loss samples of the online (`n_tau`) and target (`n_tau_target`) networks.
    pub n_tau: usize,
    pub n_tau_target: usize,
    /// TDL samples; the first `m_tdl`/`m_tdl_target` loss samples are reused.
    pub m_tdl: usize,
    pub m_tdl_target: usize,
    /// Action-selection samples.
    pub k_act: usize,
    pub kappa: f64,
    pub embed_n: usize,
    /// Target refresh period in training steps.
    pub target_period: u64,
    pub epsilon: EpsilonSchedule,
    pub eta: EtaSchedule,
    pub distortion: DistortionKind,
    pub cvnar_form: CvnarForm,
    pub batch_size: usize,
    pub trace_len: usize,
    /// Pure random exploration and no training for this many environment steps.
    pub warmup_steps: u64,
    /// One training step every this many environment steps.
    pub train_every: u64,
    pub replay_episodes: usize,
    pub image_width: usize,
    pub tdl: TdlOptions,
    pub init: InitPolicy,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            beta: 0.4,
            gamma: 0.95,
            base_lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            n_tau: 16,
            n_tau_target: 16,
            m_tdl: 16,
            m_tdl_target: 16,
            k_act: 16,
            kappa: 1.0,
            embed_n: 64,
            target_period: 250,
            epsilon: EpsilonSchedule::default(),
            eta: EtaSchedule::TiedToEpsilon,
            distortion: DistortionKind::Identity,
            cvnar_form: CvnarForm::Shifted,
            batch_size: 32,
            trace_len: 4,
            warmup_steps: 1_000,
            train_every: 4,
            replay_episodes: 5_000,
            image_width: 128,
            tdl: TdlOptions::default(),
            init: InitPolicy::default(),
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad(format!("beta = {} must lie in (0, 1]", self.beta));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma = {} must lie in [0, 1]", self.gamma));
        }
        if !(self.base_lr > 0.0) || !(self.kappa > 0.0) {
            return bad("learning rate and huber threshold must be positive".into());
        }
        for (name, v) in [
            ("n_tau", self.n_tau),
            ("n_tau_target", self.n_tau_target),
            ("k_act", self.k_act),
            ("embed_n", self.embed_n),
            ("batch_size", self.batch_size),
            ("trace_len", self.trace_len),
            ("replay_episodes", self.replay_episodes),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.m_tdl < 2 || self.m_tdl > self.n_tau {
            return bad(format!("m_tdl = {} must lie in 2..=n_tau", self.m_tdl));
        }
        if self.m_tdl_target == 0 || self.m_tdl_target > self.n_tau_target {
            return bad(format!("m_tdl_target = {} must lie in 1..=n_tau_target", self.m_tdl_target));
        }
        if self.target_period == 0 || self.train_every == 0 {
            return bad("target_period and train_every must be positive".into());
        }
        let eps = self.epsilon;
        if !(0.0..=1.0).contains(&eps.start) || !(0.0..=1.0).contains(&eps.end) {
            return bad("epsilon schedule endpoints must lie in [0, 1]".into());
        }
        if let EtaSchedule::Linear { start, end, .. } = self.eta {
            if !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&end) {
                return bad("eta schedule endpoints must lie in [0, 1]".into());
            }
        }
        Ok(())
    }

    /// `(epsilon, eta)` at environment step `step`: linear then constant.
    pub fn schedule(&self, step: u64) -> (f64, f64) {
        let e = self.epsilon;
        let epsilon = linear(e.start, e.end, e.steps, step);
        let eta = match self.eta {
            EtaSchedule::TiedToEpsilon => epsilon,
            EtaSchedule::Linear { start, end, steps } => linear(start, end, steps, step),
        };
        (epsilon, eta)
    }

    pub fn distortion_at(&self, eta: f64) -> DistortionOperator {
        DistortionOperator {
            kind: self.distortion,
            eta,
            cvnar_form: self.cvnar_form,
        }
    }

    /// Network for the variant: vector observations use the small
    /// dense/LSTM stack, images the convolutional one.
    pub fn network_spec(&self, variant: AgentVariant, input: InputShape, actions: usize) -> NetworkSpec {
        let quantile = variant.algorithm.is_quantile();
        let mut spec = match input {
            InputShape::Flat { len } => NetworkSpec::vector(len, actions, variant.recurrent, quantile, self.embed_n),
            InputShape::Image { height, .. } => NetworkSpec::image(
                height,
                actions,
                variant.recurrent,
                quantile,
                self.embed_n,
                self.image_width,
            ),
        };
        spec.input = input;
        spec.init = self.init;
        spec
    }
}

/// Learning-rate factor for one sampled residual `u = target - estimate`.
/// Positive residuals always use the full rate; the rest depends on the variant.
pub fn hysteretic_weight(residual: f64, tdl_value: f64, algorithm: Algorithm, beta: f64) -> f64 {
    if residual > 0.0 {
        return 1.0;
    }
    match algorithm {
        Algorithm::Iqn | Algorithm::Dqn => 1.0,
        Algorithm::HIqn | Algorithm::Hdqn => beta,
        Algorithm::LIqn => tdl_value,
        Algorithm::LhIqn => beta.max(tdl_value),
    }
}
