//! Bounded FIFO transition store with uniform sampling.

use std::collections::VecDeque;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bc::DemoDataset;
use crate::error::{Error, Result};
use crate::sac::RewardShaper;

pub const DEFAULT_CAPACITY: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Bc,
    Rl,
    Demo,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Bc => "bc",
            Source::Rl => "rl",
            Source::Demo => "demo",
        }
    }
}

/// One environment step. `reward` is already shaped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminal: bool,
    pub truncated: bool,
    pub source: Source,
}

/// Column-stacked transitions.
#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_obs: Array2<f64>,
    /// 1.0 for terminal transitions, 0.0 otherwise.
    pub terminals: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn from_transitions<'a, I>(items: I, obs_dim: usize, action_dim: usize) -> Self
    where
        I: IntoIterator<Item = &'a Transition>,
    {
        let mut obs = Vec::new();
        let mut actions = Vec::new();
        let mut rewards = Vec::new();
        let mut next_obs = Vec::new();
        let mut terminals = Vec::new();
        for t in items {
            obs.extend_from_slice(&t.obs);
            actions.extend_from_slice(&t.action);
            rewards.push(t.reward);
            next_obs.extend_from_slice(&t.next_obs);
            terminals.push(if t.terminal { 1.0 } else { 0.0 });
        }
        let n = rewards.len();
        Self {
            obs: Array2::from_shape_vec((n, obs_dim), obs).expect("schema checked on push"),
            actions: Array2::from_shape_vec((n, action_dim), actions).expect("schema checked on push"),
            rewards: Array1::from(rewards),
            next_obs: Array2::from_shape_vec((n, obs_dim), next_obs).expect("schema checked on push"),
            terminals: Array1::from(terminals),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    action_dim: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, action_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            obs_dim,
            action_dim,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Appends a transition, evicting the oldest one when full.
    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.obs.len() != self.obs_dim
            || t.next_obs.len() != self.obs_dim
            || t.action.len() != self.action_dim
        {
            return Err(Error::Shape(format!(
                "transition dims ({}, {}, {}) do not match buffer ({}, {})",
                t.obs.len(),
                t.action.len(),
                t.next_obs.len(),
                self.obs_dim,
                self.action_dim
            )));
        }
        if t.terminal && t.truncated {
            return Err(Error::Input("transition cannot be both terminal and truncated".into()));
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
        Ok(())
    }

    /// `k` uniform draws with replacement. Only an empty buffer is "not
    /// ready"; callers that need a minimum fill check [`ReplayBuffer::len`].
    pub fn sample_indices<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(Error::NotReady { have: 0, need: 1 });
        }
        let n = self.items.len();
        Ok((0..k).map(|_| rng.random_range(0..n)).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<Transition>> {
        Ok(self
            .sample_indices(k, rng)?
            .into_iter()
            .map(|i| self.items[i].clone())
            .collect())
    }

    pub fn sample_batch<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Batch> {
        let idx = self.sample_indices(k, rng)?;
        Ok(self.batch(&idx))
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        Batch::from_transitions(
            indices.iter().map(|&i| &self.items[i]),
            self.obs_dim,
            self.action_dim,
        )
    }

    pub fn count_by_source(&self, source: Source) -> usize {
        self.items.iter().filter(|t| t.source == source).count()
    }

    /// Pushes every demo step with a shaped reward and `Source::Demo`.
    /// Only the last step of a successful demo is terminal.
    pub fn seed_from_demos(&mut self, data: &DemoDataset, shaper: &RewardShaper) -> Result<usize> {
        data.validate()?;
        if let Some((obs_dim, action_dim)) = data.dims() {
            if obs_dim != self.obs_dim || action_dim != self.action_dim {
                return Err(Error::Input(format!(
                    "demo dims ({obs_dim}, {action_dim}) do not match buffer ({}, {})",
                    self.obs_dim, self.action_dim
                )));
            }
        }
        let mut count = 0;
        for traj in &data.trajectories {
            let last = traj.len() - 1;
            for t in 0..traj.len() {
                let end = t == last;
                self.push(Transition {
                    obs: traj.obs[t].clone(),
                    action: traj.actions[t].clone(),
                    reward: shaper.shape(traj.rewards[t]),
                    next_obs: traj.obs[t + 1].clone(),
                    terminal: end && traj.terminated,
                    truncated: end && !traj.terminated,
                    source: Source::Demo,
                })?;
                count += 1;
            }
        }
        Ok(count)
    }
}
