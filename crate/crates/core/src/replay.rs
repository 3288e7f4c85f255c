//! Concurrent experience replay trajectories (CERTs).
//!
//! Every agent keeps its own store of whole episodes. Episodes are opened for
//! all agents at once, closed per agent by a terminal transition, and evicted
//! in ring order, so all stores hold the same episode ids and lengths once a
//! global step has been recorded by every agent. Sampling draws one shared
//! `(episode, offset)` schedule and applies it to every agent's store.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f32>,
    pub action: usize,
    pub reward: f64,
    pub next_observation: Vec<f32>,
    pub terminal: bool,
}

impl Transition {
    fn padding(obs_len: usize) -> Self {
        Self {
            observation: vec![0.0; obs_len],
            action: 0,
            reward: 0.0,
            next_observation: vec![0.0; obs_len],
            terminal: false,
        }
    }
}

/// Fixed-length slice of one episode; steps past the episode end are zero
/// padding marked invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub transitions: Vec<Transition>,
    pub valid: Vec<bool>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn valid_steps(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceIndex {
    pub episode_id: u64,
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayConfig {
    pub agents: usize,
    pub capacity_episodes: usize,
    pub max_episode_len: usize,
    pub action_count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
struct Episode {
    id: u64,
    transitions: Vec<Transition>,
}

#[derive(Debug, Clone, Default)]
struct AgentStore {
    closed: VecDeque<Episode>,
    open: Option<Episode>,
}

#[derive(Debug, Clone)]
pub struct CertBuffer {
    config: ReplayConfig,
    stores: Vec<AgentStore>,
    next_id: u64,
    schedule: ChaCha8Rng,
}

impl CertBuffer {
    pub fn new(config: ReplayConfig) -> Result<Self> {
        if config.agents == 0 || config.capacity_episodes == 0 || config.max_episode_len == 0 {
            return Err(Error::Config(
                "replay needs at least one agent, one episode of capacity and a positive episode cap".into(),
            ));
        }
        Ok(Self {
            stores: vec![AgentStore::default(); config.agents],
            next_id: 0,
            schedule: ChaCha8Rng::seed_from_u64(config.seed),
            config,
        })
    }

    pub fn config(&self) -> &ReplayConfig {
        &self.config
    }

    /// Opens a new episode for every agent.
    pub fn start_episode(&mut self) -> Result<u64> {
        if let Some(agent) = self.stores.iter().position(|s| s.open.is_some()) {
            return Err(Error::Usage(format!(
                "agent {agent} still has an open episode; it must end with a terminal transition"
            )));
        }
        let id = self.next_id;
        self.next_id += 1;
        for store in &mut self.stores {
            store.open = Some(Episode {
                id,
                transitions: Vec::new(),
            });
        }
        Ok(id)
    }

    pub fn record(&mut self, agent: usize, transition: Transition) -> Result<()> {
        let cap = self.config.max_episode_len;
        let capacity = self.config.capacity_episodes;
        if transition.action >= self.config.action_count {
            return Err(Error::Argument(format!(
                "action {} outside {} actions",
                transition.action, self.config.action_count
            )));
        }
        if !transition.reward.is_finite() {
            return Err(Error::Argument("non-finite reward".into()));
        }
        let store = self
            .stores
            .get_mut(agent)
            .ok_or_else(|| Error::Argument(format!("unknown agent {agent}")))?;
        let episode = store.open.as_mut().ok_or_else(|| {
            Error::Usage(format!("agent {agent} recorded after a terminal step without starting an episode"))
        })?;
        if episode.transitions.len() >= cap {
            return Err(Error::Usage(format!(
                "agent {agent} exceeded the episode cap of {cap} steps without a terminal transition"
            )));
        }
        let terminal = transition.terminal;
        episode.transitions.push(transition);
        if terminal {
            let done = store.open.take().expect("open episode");
            store.closed.push_back(done);
            while store.closed.len() > capacity {
                store.closed.pop_front();
            }
        }
        Ok(())
    }

    pub fn episode_count(&self, agent: usize) -> usize {
        self.stores[agent].closed.len()
    }

    pub fn episode_ids(&self, agent: usize) -> Vec<u64> {
        self.stores[agent].closed.iter().map(|e| e.id).collect()
    }

    pub fn episode_lengths(&self, agent: usize) -> Vec<usize> {
        self.stores[agent].closed.iter().map(|e| e.transitions.len()).collect()
    }

    pub fn stored_transitions(&self, agent: usize) -> usize {
        self.stores[agent].closed.iter().map(|e| e.transitions.len()).sum()
    }

    fn check_synchronized(&self) -> Result<()> {
        let first = &self.stores[0].closed;
        for (agent, store) in self.stores.iter().enumerate().skip(1) {
            let same = store.closed.len() == first.len()
                && store
                    .closed
                    .iter()
                    .zip(first)
                    .all(|(a, b)| a.id == b.id && a.transitions.len() == b.transitions.len());
            if !same {
                return Err(Error::Usage(format!(
                    "agent {agent} store is out of step with agent 0; record every agent before sampling"
                )));
            }
        }
        Ok(())
    }

    /// Draws one shared schedule: a uniform episode, then a uniform start offset.
    pub fn sample_indices(&mut self, batch: usize) -> Result<Vec<TraceIndex>> {
        self.check_synchronized()?;
        let episodes = &self.stores[0].closed;
        if episodes.is_empty() {
            return Err(Error::NotReady("no completed episodes stored".into()));
        }
        let mut out = Vec::with_capacity(batch);
        for _ in 0..batch {
            let e = &episodes[self.schedule.random_range(0..episodes.len())];
            let offset = self.schedule.random_range(0..e.transitions.len());
            out.push(TraceIndex {
                episode_id: e.id,
                offset,
            });
        }
        Ok(out)
    }

    pub fn gather(&self, agent: usize, indices: &[TraceIndex], trace_len: usize) -> Result<Vec<Trace>> {
        if trace_len == 0 {
            return Err(Error::Argument("trace length must be positive".into()));
        }
        let store = self
            .stores
            .get(agent)
            .ok_or_else(|| Error::Argument(format!("unknown agent {agent}")))?;
        let front = store
            .closed
            .front()
            .ok_or_else(|| Error::NotReady("no completed episodes stored".into()))?
            .id;
        indices
            .iter()
            .map(|ix| {
                let episode = ix
                    .episode_id
                    .checked_sub(front)
                    .and_then(|pos| store.closed.get(pos as usize))
                    .filter(|e| e.id == ix.episode_id)
                    .ok_or_else(|| Error::Argument(format!("episode {} is not stored", ix.episode_id)))?;
                let obs_len = episode.transitions[0].observation.len();
                let mut transitions = Vec::with_capacity(trace_len);
                let mut valid = Vec::with_capacity(trace_len);
                for k in 0..trace_len {
                    match episode.transitions.get(ix.offset + k) {
                        Some(t) => {
                            transitions.push(t.clone());
                            valid.push(true);
                        }
                        None => {
                            transitions.push(Transition::padding(obs_len));
                            valid.push(false);
                        }
                    }
                }
                Ok(Trace { transitions, valid })
            })
            .collect()
    }

    /// Per-agent traces drawn at the same `(episode, offset)` indices.
    pub fn sample_synchronized(&mut self, batch: usize, trace_len: usize) -> Result<Vec<Vec<Trace>>> {
        let indices = self.sample_indices(batch)?;
        (0..self.stores.len())
            .map(|agent| self.gather(agent, &indices, trace_len))
            .collect()
    }
}
