use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{hysteretic_weight, AgentVariant, HyperParams};
use crate::distribution::{
    quantile_huber, quantile_huber_grad, td_error_matrix, tdl, DistortionOperator, QuantileSampleSet,
};
use crate::error::{Error, Result};
use crate::nn::{sync_target, Adam, InputShape, LstmState, Network, Real};
use crate::replay::Trace;

/// Acting-time recurrent state; reset at every episode start.
#[derive(Debug, Clone, Default)]
pub struct PolicyState<T> {
    pub lstm: Option<LstmState<T>>,
}

impl<T> PolicyState<T> {
    pub fn reset(&mut self) {
        self.lstm = None;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainStats {
    pub loss: f64,
    /// Mean TDL over the batch's valid transitions (likelihood variants only).
    pub mean_tdl: Option<f64>,
    /// Loss cells with a non-positive residual.
    pub negative_cells: u64,
    /// Negative cells whose transition TDL exceeded beta.
    pub tdl_dominant_cells: u64,
    pub transitions: usize,
}

struct Inputs<T> {
    obs: Array2<T>,
    target_obs: Array2<T>,
    steps: usize,
    target_steps: usize,
    batch: usize,
    rows: Vec<Row>,
}

#[derive(Clone, Copy)]
struct Row {
    valid: bool,
    action: usize,
    reward: f64,
    terminal: bool,
    target_row: usize,
}

/// One independent learner: main and target networks, Adam state and the
/// training RNG.
#[derive(Debug, Clone)]
pub struct Learner<T: Real> {
    variant: AgentVariant,
    hp: HyperParams,
    main: Network<T>,
    target: Network<T>,
    adam: Adam,
    train_steps: u64,
    rng: ChaCha8Rng,
}

fn uniform_levels<T: Real, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<T> {
    Array2::from_shape_simple_fn((rows, cols), || T::lit(rng.random::<f64>()))
}

/// Index of the largest value; the lowest index wins ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl<T: Real> Learner<T> {
    pub fn new(variant: AgentVariant, hp: HyperParams, input: InputShape, actions: usize, seed: u64) -> Result<Self> {
        hp.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = hp.network_spec(variant, input, actions);
        let main = Network::new(spec, &mut rng)?;
        let mut target = main.clone();
        sync_target(&main, &mut target)?;
        Self::assemble(variant, hp, main, target, rng)
    }

    /// Wraps existing networks, e.g. hand-set ones in tests.
    pub fn from_networks(
        variant: AgentVariant,
        hp: HyperParams,
        main: Network<T>,
        target: Network<T>,
        seed: u64,
    ) -> Result<Self> {
        hp.validate()?;
        Self::assemble(variant, hp, main, target, ChaCha8Rng::seed_from_u64(seed))
    }

    fn assemble(
        variant: AgentVariant,
        hp: HyperParams,
        main: Network<T>,
        target: Network<T>,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        if main.spec() != target.spec() {
            return Err(Error::Config("main and target networks differ in architecture".into()));
        }
        if main.is_quantile() != variant.algorithm.is_quantile() {
            return Err(Error::Config(format!(
                "{} needs a {} network",
                variant.label(),
                if variant.algorithm.is_quantile() { "quantile" } else { "non-quantile" }
            )));
        }
        if main.is_recurrent() != variant.recurrent {
            return Err(Error::Config("recurrent flag does not match the network".into()));
        }
        let adam = Adam {
            lr: hp.base_lr,
            beta1: hp.adam_beta1,
            beta2: hp.adam_beta2,
            epsilon: hp.adam_epsilon,
        };
        Ok(Self {
            variant,
            hp,
            main,
            target,
            adam,
            train_steps: 0,
            rng,
        })
    }

    pub fn variant(&self) -> AgentVariant {
        self.variant
    }

    pub fn hyper_params(&self) -> &HyperParams {
        &self.hp
    }

    pub fn main(&self) -> &Network<T> {
        &self.main
    }

    pub fn main_mut(&mut self) -> &mut Network<T> {
        &mut self.main
    }

    pub fn target(&self) -> &Network<T> {
        &self.target
    }

    pub fn target_mut(&mut self) -> &mut Network<T> {
        &mut self.target
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn actions(&self) -> usize {
        self.main.actions()
    }

    fn obs_row(&self, obs: &[f32]) -> Result<Array2<T>> {
        let len = self.main.spec().input.len();
        if obs.len() != len {
            return Err(Error::Shape(format!("observation has {} entries, expected {len}", obs.len())));
        }
        Ok(Array2::from_shape_fn((1, len), |(_, j)| T::lit(obs[j] as f64)))
    }

    /// Epsilon-greedy action on distorted quantile samples. Recurrent
    /// networks always run so the hidden state follows the history.
    pub fn act<R: Rng>(
        &self,
        obs: &[f32],
        state: &mut PolicyState<T>,
        epsilon: f64,
        distortion: &DistortionOperator,
        rng: &mut R,
    ) -> Result<usize> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Argument(format!("epsilon {epsilon} outside [0, 1]")));
        }
        let actions = self.actions();
        let explore = rng.random::<f64>() < epsilon;
        if explore && !self.variant.recurrent {
            return Ok(rng.random_range(0..actions));
        }
        let x = self.obs_row(obs)?;
        let taus = if self.main.is_quantile() {
            let levels: Vec<f64> = if explore {
                vec![0.5]
            } else {
                (0..self.hp.k_act)
                    .map(|_| distortion.distort(rng.random::<f64>()))
                    .collect::<Result<_>>()?
            };
            Some(Array2::from_shape_fn((1, levels.len()), |(_, k)| T::lit(levels[k])))
        } else {
            None
        };
        let (out, next) = self.main.infer(&x, 1, state.lstm.as_ref(), taus.as_ref())?;
        state.lstm = next;
        if explore {
            return Ok(rng.random_range(0..actions));
        }
        let rows = out.nrows() as f64;
        let means: Vec<f64> = (0..actions)
            .map(|a| out.column(a).iter().map(|v| v.to_f64_lossy()).sum::<f64>() / rows)
            .collect();
        Ok(argmax(&means))
    }

    fn build_inputs(&self, traces: &[Trace]) -> Result<Inputs<T>> {
        let batch = traces.len();
        if batch == 0 {
            return Err(Error::Argument("empty training batch".into()));
        }
        let steps = traces[0].len();
        let len = self.main.spec().input.len();
        if steps == 0 || traces.iter().any(|t| t.len() != steps) {
            return Err(Error::Shape("traces in a batch must share a positive length".into()));
        }
        let recurrent = self.variant.recurrent;
        let target_steps = if recurrent { steps + 1 } else { steps };
        let mut obs = Array2::zeros((steps * batch, len));
        let mut target_obs = Array2::zeros((target_steps * batch, len));
        let mut rows = Vec::with_capacity(steps * batch);
        for t in 0..steps {
            for (b, trace) in traces.iter().enumerate() {
                let tr = &trace.transitions[t];
                if tr.observation.len() != len || tr.next_observation.len() != len {
                    return Err(Error::Shape(format!("trace observation length differs from {len}")));
                }
                let r = t * batch + b;
                for (j, v) in tr.observation.iter().enumerate() {
                    obs[[r, j]] = T::lit(*v as f64);
                }
                let target_row = if recurrent { r + batch } else { r };
                if recurrent && t == 0 {
                    for (j, v) in tr.observation.iter().enumerate() {
                        target_obs[[r, j]] = T::lit(*v as f64);
                    }
                }
                for (j, v) in tr.next_observation.iter().enumerate() {
                    target_obs[[target_row, j]] = T::lit(*v as f64);
                }
                if trace.valid[t] && tr.action >= self.actions() {
                    return Err(Error::Argument(format!("action {} out of range", tr.action)));
                }
                rows.push(Row {
                    valid: trace.valid[t],
                    action: tr.action,
                    reward: tr.reward,
                    terminal: tr.terminal,
                    target_row,
                });
            }
        }
        Ok(Inputs {
            obs,
            target_obs,
            steps,
            target_steps,
            batch,
            rows,
        })
    }

    /// Target-network quantiles of the greedy (max-mean) next action, one
    /// vector per valid row.
    fn target_quantiles<R: Rng>(&self, inputs: &Inputs<T>, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        let n = self.hp.n_tau_target;
        let rows_t = inputs.target_steps * inputs.batch;
        let taus = uniform_levels::<T, R>(rows_t, n, rng);
        let out = self.target.forward(&inputs.target_obs, inputs.target_steps, Some(&taus))?;
        let actions = self.actions();
        Ok(inputs
            .rows
            .iter()
            .map(|row| {
                if !row.valid {
                    return Vec::new();
                }
                let block = row.target_row * n;
                let means: Vec<f64> = (0..actions)
                    .map(|a| (0..n).map(|j| out[[block + j, a]].to_f64_lossy()).sum::<f64>() / n as f64)
                    .collect();
                let best = argmax(&means);
                (0..n).map(|j| out[[block + j, best]].to_f64_lossy()).collect()
            })
            .collect())
    }

    fn transition_tdl(&self, taus: &[f64], dist: &[f64], targets: &[f64]) -> Result<f64> {
        let m = self.hp.m_tdl;
        let mt = self.hp.m_tdl_target;
        let set = QuantileSampleSet::from_parts(&taus[..m], &dist[..m])?;
        tdl(&set, &targets[..mt], self.hp.tdl)
    }

    /// One update on a synchronized batch of traces, dispatching on the variant.
    pub fn train_step(&mut self, traces: &[Trace]) -> Result<TrainStats> {
        if self.variant.algorithm.is_quantile() {
            self.train_step_quantile(traces)
        } else {
            self.train_step_baseline(traces)
        }
    }

    pub fn train_step_quantile(&mut self, traces: &[Trace]) -> Result<TrainStats> {
        if !self.variant.algorithm.is_quantile() {
            return Err(Error::Unsupported(format!("{} has no quantile loss", self.variant.label())));
        }
        let inputs = self.build_inputs(traces)?;
        let n = self.hp.n_tau;
        let nt = self.hp.n_tau_target as f64;
        let rows = inputs.rows.len();
        let mut rng = self.rng.clone();
        let taus = uniform_levels::<T, ChaCha8Rng>(rows, n, &mut rng);
        let next = self.target_quantiles(&inputs, &mut rng)?;
        self.rng = rng;
        let out = self.main.forward_train(&inputs.obs, inputs.steps, Some(&taus))?;
        let valid = inputs.rows.iter().filter(|r| r.valid).count();
        let scale = 1.0 / valid as f64;
        let algorithm = self.variant.algorithm;
        let (beta, kappa, gamma) = (self.hp.beta, self.hp.kappa, self.hp.gamma);
        let mut grad = Array2::<T>::zeros(out.dim());
        let mut stats = TrainStats {
            transitions: valid,
            ..TrainStats::default()
        };
        let mut tdl_sum = 0.0;
        for (r, row) in inputs.rows.iter().enumerate() {
            if !row.valid {
                continue;
            }
            let levels: Vec<f64> = (0..n).map(|i| taus[[r, i]].to_f64_lossy()).collect();
            let dist: Vec<f64> = (0..n).map(|i| out[[r * n + i, row.action]].to_f64_lossy()).collect();
            let delta = td_error_matrix(&dist, &next[r], row.reward, gamma, row.terminal)?;
            let likelihood = if algorithm.uses_tdl() {
                let bootstrap = if row.terminal { 0.0 } else { gamma };
                let targets: Vec<f64> = next[r].iter().map(|q| row.reward + bootstrap * q).collect();
                let l = self.transition_tdl(&levels, &dist, &targets)?;
                tdl_sum += l;
                Some(l)
            } else {
                None
            };
            let mut row_loss = 0.0;
            for (i, &tau) in levels.iter().enumerate() {
                let mut g = 0.0;
                for &d in delta.row(i) {
                    let u = -d;
                    let w = hysteretic_weight(u, likelihood.unwrap_or(0.0), algorithm, beta);
                    row_loss += w * quantile_huber(u, tau, kappa) / nt;
                    g -= w * quantile_huber_grad(u, tau, kappa) / nt;
                    if u <= 0.0 {
                        stats.negative_cells += 1;
                        if likelihood.is_some_and(|l| l > beta) {
                            stats.tdl_dominant_cells += 1;
                        }
                    }
                }
                grad[[r * n + i, row.action]] = T::lit(g * scale);
            }
            if !row_loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss at training step {}, batch element {} (step {} of the trace)",
                    self.train_steps,
                    r % inputs.batch,
                    r / inputs.batch
                )));
            }
            stats.loss += row_loss * scale;
        }
        if algorithm.uses_tdl() {
            stats.mean_tdl = Some(tdl_sum * scale);
        }
        self.apply(grad)?;
        Ok(stats)
    }

    pub fn train_step_baseline(&mut self, traces: &[Trace]) -> Result<TrainStats> {
        if self.variant.algorithm.is_quantile() {
            return Err(Error::Unsupported(format!("{} is not a value baseline", self.variant.label())));
        }
        let inputs = self.build_inputs(traces)?;
        let next = self.target.forward(&inputs.target_obs, inputs.target_steps, None)?;
        let out = self.main.forward_train(&inputs.obs, inputs.steps, None)?;
        let valid = inputs.rows.iter().filter(|r| r.valid).count();
        let scale = 1.0 / valid as f64;
        let (beta, gamma) = (self.hp.beta, self.hp.gamma);
        let mut grad = Array2::<T>::zeros(out.dim());
        let mut stats = TrainStats {
            transitions: valid,
            ..TrainStats::default()
        };
        for (r, row) in inputs.rows.iter().enumerate() {
            if !row.valid {
                continue;
            }
            let best = next
                .row(row.target_row)
                .iter()
                .map(|v| v.to_f64_lossy())
                .fold(f64::NEG_INFINITY, f64::max);
            let bootstrap = if row.terminal { 0.0 } else { gamma * best };
            let u = row.reward + bootstrap - out[[r, row.action]].to_f64_lossy();
            let w = hysteretic_weight(u, 0.0, self.variant.algorithm, beta);
            if u <= 0.0 {
                stats.negative_cells += 1;
            }
            let loss = w * u * u;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss at training step {}, batch element {}",
                    self.train_steps,
                    r % inputs.batch
                )));
            }
            stats.loss += loss * scale;
            grad[[r, row.action]] = T::lit(-2.0 * w * u * scale);
        }
        self.apply(grad)?;
        Ok(stats)
    }

    fn apply(&mut self, grad: Array2<T>) -> Result<()> {
        self.main.backward(grad)?;
        let mut params = self.main.params_mut();
        self.adam.step(&mut params)?;
        self.train_steps += 1;
        if self.train_steps % self.hp.target_period == 0 {
            sync_target(&self.main, &mut self.target)?;
        }
        Ok(())
    }

    /// TDL of the transition at `position` in `trace`, built from fresh
    /// loss-style samples of the main and target networks.
    pub fn tdl_for_transition<R: Rng>(&self, trace: &Trace, position: usize, rng: &mut R) -> Result<f64> {
        if !self.variant.algorithm.is_quantile() {
            return Err(Error::Unsupported(format!("{} has no return distribution", self.variant.label())));
        }
        if position >= trace.len() || !trace.valid[position] {
            return Err(Error::Argument(format!("position {position} is not a valid trace step")));
        }
        let inputs = self.build_inputs(std::slice::from_ref(trace))?;
        let n = self.hp.n_tau;
        let taus = uniform_levels::<T, R>(inputs.rows.len(), n, rng);
        let next = self.target_quantiles(&inputs, rng)?;
        let out = self.main.forward(&inputs.obs, inputs.steps, Some(&taus))?;
        let row = inputs.rows[position];
        let levels: Vec<f64> = (0..n).map(|i| taus[[position, i]].to_f64_lossy()).collect();
        let dist: Vec<f64> = (0..n).map(|i| out[[position * n + i, row.action]].to_f64_lossy()).collect();
        let bootstrap = if row.terminal { 0.0 } else { self.hp.gamma };
        let targets: Vec<f64> = next[position].iter().map(|q| row.reward + bootstrap * q).collect();
        self.transition_tdl(&levels, &dist, &targets)
    }
}
