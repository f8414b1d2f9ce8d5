//! Recovering a soft Q-function for a fixed behavior-cloning policy.
//!
//! Rollouts of the policy give Monte-Carlo returns, a value network is fit to
//! them, and the policy's Q-function is assembled as
//! `V(s) + alpha * log pi(a|s) + alpha * H[pi(.|s)]`.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bc::{BcPolicy, DemoDataset, Trajectory};
use crate::envs::{Env, EnvSpec};
use crate::error::{Error, Result};
use crate::nn::{mse_loss, Adam, Mlp, MlpCheckpoint, MlpSpec};
use crate::replay::Batch;
use crate::sac::{critic_update, CriticEnsemble, RewardShaper};

/// Episodes of the BC policy with shaped rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSet {
    pub episodes: Vec<Trajectory>,
    pub seed: u64,
    pub policy_checkpoint_id: String,
    pub shaper: RewardShaper,
}

/// Everything in a rollout set except the episodes themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutSidecar {
    pub seed: u64,
    pub policy_checkpoint_id: String,
    pub shaper: RewardShaper,
}

impl RolloutSet {
    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn num_steps(&self) -> usize {
        self.episodes.iter().map(Trajectory::len).sum()
    }

    /// Fraction of episodes that ended in success.
    pub fn success_rate(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        self.episodes.iter().filter(|e| e.terminated).count() as f64 / self.episodes.len() as f64
    }

    /// Writes the episodes as demo JSONL plus `<stem>.meta.json`.
    pub fn save(&self, jsonl: &Path) -> Result<()> {
        DemoDataset {
            trajectories: self.episodes.clone(),
        }
        .write_jsonl(jsonl)?;
        let meta = RolloutSidecar {
            seed: self.seed,
            policy_checkpoint_id: self.policy_checkpoint_id.clone(),
            shaper: self.shaper,
        };
        let path = jsonl.with_extension("meta.json");
        std::fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(jsonl: &Path) -> Result<Self> {
        let data = DemoDataset::read_jsonl(jsonl)?;
        let path = jsonl.with_extension("meta.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: RolloutSidecar = serde_json::from_str(&text)?;
        Ok(Self {
            episodes: data.trajectories,
            seed: meta.seed,
            policy_checkpoint_id: meta.policy_checkpoint_id,
            shaper: meta.shaper,
        })
    }
}

/// Runs `n_episodes` of `policy` and records shaped rewards. `use_mode`
/// selects the distribution mode instead of sampling.
pub fn collect_rollouts(
    spec: &EnvSpec,
    policy: &BcPolicy,
    n_episodes: usize,
    shaper: &RewardShaper,
    use_mode: bool,
    seed: u64,
) -> Result<RolloutSet> {
    if policy.obs_dim() != spec.obs_dim() || policy.action_dim() != spec.action_dim() {
        return Err(Error::Shape(format!(
            "policy dims ({}, {}) do not match env ({}, {})",
            policy.obs_dim(),
            policy.action_dim(),
            spec.obs_dim(),
            spec.action_dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = Env::new(spec.clone())?;
    let mut episodes = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let mut obs = env.reset(&mut rng);
        let mut ep = Trajectory {
            obs: vec![obs.clone()],
            actions: Vec::new(),
            rewards: Vec::new(),
            terminated: false,
        };
        loop {
            let a = policy.sample(&obs, &mut rng, use_mode)?;
            let step = env.step(&a)?;
            ep.actions.push(a);
            ep.rewards.push(shaper.shape(step.reward));
            ep.obs.push(step.next_obs.clone());
            obs = step.next_obs;
            if step.terminated || step.truncated {
                ep.terminated = step.terminated;
                break;
            }
        }
        episodes.push(ep);
    }
    Ok(RolloutSet {
        episodes,
        seed,
        policy_checkpoint_id: policy.checkpoint_id.clone(),
        shaper: *shaper,
    })
}

/// Discounted return from every step to the end of the episode, computed by
/// the backward recursion `G_t = r_t + gamma * G_{t+1}` with `G_T = 0`.
/// Truncated episodes get no bootstrap.
pub fn monte_carlo_returns(episode: &Trajectory, gamma: f64) -> Result<Vec<f64>> {
    if episode.rewards.is_empty() {
        return Err(Error::Input("cannot compute returns of an empty episode".into()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Input(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    let mut out = vec![0.0; episode.rewards.len()];
    let mut g = 0.0;
    for (t, &r) in episode.rewards.iter().enumerate().rev() {
        g = r + gamma * g;
        out[t] = g;
    }
    Ok(out)
}

/// Learned state-value function.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueEstimator {
    pub net: Mlp,
}

impl ValueEstimator {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], layer_norm: bool, rng: &mut R) -> Result<Self> {
        Ok(Self {
            net: Mlp::new(MlpSpec::with_hidden(obs_dim, hidden, 1, layer_norm), 1.0, rng)?,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.net.forward(obs)?[0])
    }

    pub fn value_batch(&self, obs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        Ok(self.net.forward_batch(obs)?.column(0).to_owned())
    }

    /// Adds `c` to every prediction.
    pub fn shift(&mut self, c: f64) {
        let last = self.net.num_layers() - 1;
        self.net.layer_bias_mut(last)[0] += c;
    }

    pub fn to_checkpoint(&self) -> MlpCheckpoint {
        self.net.to_checkpoint()
    }

    pub fn from_checkpoint(ckpt: &MlpCheckpoint) -> Result<Self> {
        let net = Mlp::from_checkpoint(ckpt)?;
        if net.output_dim() != 1 {
            return Err(Error::Shape("value network must have one output".into()));
        }
        Ok(Self { net })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValueFitConfig {
    pub hidden: Vec<usize>,
    pub layer_norm: bool,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ValueFitConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            layer_norm: true,
            steps: 3000,
            batch_size: 256,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ValueFit {
    pub estimator: ValueEstimator,
    /// Full-dataset mean squared error before and after fitting.
    pub initial_mse: f64,
    pub final_mse: f64,
    /// Per-episode `(success, length, G_0)`, to make truncation bias visible.
    pub episode_log: Vec<(bool, usize, f64)>,
}

/// Pools `(s_t, G_t)` over all episodes into one regression set.
pub fn value_dataset(rollouts: &RolloutSet, gamma: f64) -> Result<(Array2<f64>, Array1<f64>)> {
    let mut states = Vec::new();
    let mut returns = Vec::new();
    let mut obs_dim = 0;
    for ep in &rollouts.episodes {
        let g = monte_carlo_returns(ep, gamma)?;
        for (s, g) in ep.obs.iter().zip(g) {
            obs_dim = s.len();
            states.extend_from_slice(s);
            returns.push(g);
        }
    }
    let n = returns.len();
    let states = Array2::from_shape_vec((n, obs_dim), states).map_err(|e| Error::Shape(e.to_string()))?;
    Ok((states, Array1::from(returns)))
}

fn full_mse(net: &Mlp, x: ArrayView2<'_, f64>, y: &Array1<f64>) -> Result<f64> {
    let pred = net.forward_batch(x)?;
    Ok(pred.column(0).iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64)
}

/// Mean squared error of `V(obs)` against `returns` and its parameter gradient.
pub fn value_loss_and_grad(
    est: &ValueEstimator,
    obs: ArrayView2<'_, f64>,
    returns: ArrayView1<'_, f64>,
) -> Result<(f64, Vec<f64>)> {
    let y = returns.insert_axis(Axis(1));
    est.net.gradient(obs, mse_loss(y))
}

/// Regresses a value network onto Monte-Carlo returns by squared error. The
/// output bias starts at the mean return so the optimizer only has to fit
/// the state dependence.
pub fn fit_value(rollouts: &RolloutSet, gamma: f64, cfg: &ValueFitConfig) -> Result<ValueFit> {
    if rollouts.is_empty() {
        return Err(Error::Input("cannot fit a value function without rollouts".into()));
    }
    let (x, y) = value_dataset(rollouts, gamma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut est = ValueEstimator::new(x.ncols(), &cfg.hidden, cfg.layer_norm, &mut rng)?;
    let initial_mse = full_mse(&est.net, x.view(), &y)?;
    if cfg.steps > 0 {
        est.shift(y.mean().unwrap_or(0.0));
    }
    let mut opt = Adam::for_net(&est.net, cfg.learning_rate);
    let n = y.len();
    let bs = cfg.batch_size.clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    for _ in 0..cfg.steps {
        if cursor + bs > n {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + bs];
        cursor += bs;
        let xb = x.select(Axis(0), idx);
        let yb = y.select(Axis(0), idx);
        let (_, grads) = value_loss_and_grad(&est, xb.view(), yb.view())?;
        opt.step(est.net.params_mut(), &grads)?;
    }
    let final_mse = full_mse(&est.net, x.view(), &y)?;
    let episode_log = rollouts
        .episodes
        .iter()
        .map(|ep| {
            let g0 = monte_carlo_returns(ep, gamma)?[0];
            Ok((ep.terminated, ep.len(), g0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ValueFit {
        estimator: est,
        initial_mse,
        final_mse,
        episode_log,
    })
}

/// Frozen estimate of the BC policy's Q-function.
#[derive(Debug, Clone, PartialEq)]
pub struct QBcEstimate {
    value: ValueEstimator,
    bc: BcPolicy,
    alpha: f64,
}

impl QBcEstimate {
    pub fn new(value: ValueEstimator, bc: BcPolicy, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
        }
        if value.obs_dim() != bc.obs_dim() {
            return Err(Error::Shape(format!(
                "value net takes {} inputs but policy takes {}",
                value.obs_dim(),
                bc.obs_dim()
            )));
        }
        Ok(Self { value, bc, alpha })
    }

    pub fn value(&self) -> &ValueEstimator {
        &self.value
    }

    pub fn policy(&self) -> &BcPolicy {
        &self.bc
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `V(s) + alpha * log pi(a|s) + alpha * H[pi(.|s)]`.
    pub fn q_bc(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        if action.len() != self.bc.action_dim() {
            return Err(Error::Shape(format!(
                "action has {} dims, policy expects {}",
                action.len(),
                self.bc.action_dim()
            )));
        }
        let dist = self.bc.distribution(obs)?;
        let v = self.value.value(obs)?;
        Ok(v + self.alpha * dist.log_prob(action)? + self.alpha * dist.entropy())
    }

    pub fn q_bc_batch(&self, obs: ArrayView2<'_, f64>, actions: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if obs.nrows() != actions.nrows() {
            return Err(Error::Shape("observation and action row counts differ".into()));
        }
        let v = self.value.value_batch(obs)?;
        let dists = self.bc.distributions(obs)?;
        let mut out = Array1::zeros(obs.nrows());
        for (i, dist) in dists.iter().enumerate() {
            let a = actions.row(i).to_vec();
            out[i] = v[i] + self.alpha * dist.log_prob(&a)? + self.alpha * dist.entropy();
        }
        Ok(out)
    }
}

/// Rollout `(s, a)` pairs with their `q_bc` regression targets.
pub fn q_bc_targets(est: &QBcEstimate, rollouts: &RolloutSet) -> Result<Batch> {
    let data = DemoDataset {
        trajectories: rollouts.episodes.clone(),
    };
    let (obs, actions) = data.state_action_matrices();
    let rewards = est.q_bc_batch(obs.view(), actions.view())?;
    let n = rewards.len();
    Ok(Batch {
        next_obs: obs.clone(),
        obs,
        actions,
        rewards,
        terminals: Array1::zeros(n),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QInitReport {
    pub steps: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Supervised regression of every critic member onto `q_bc` over the rollout
/// state-action pairs, then a hard copy into the targets. With `n_steps = 0`
/// the ensemble is left untouched.
pub fn init_q_rl(
    est: &QBcEstimate,
    rollouts: &RolloutSet,
    ensemble: &mut CriticEnsemble,
    opts: &mut [Adam],
    n_steps: usize,
    batch_size: usize,
    seed: u64,
) -> Result<QInitReport> {
    if n_steps == 0 {
        return Ok(QInitReport {
            steps: 0,
            initial_loss: f64::NAN,
            final_loss: f64::NAN,
        });
    }
    if rollouts.is_empty() {
        return Err(Error::Input("critic initialization needs rollouts".into()));
    }
    let all = q_bc_targets(est, rollouts)?;
    let mean_target = all.rewards.mean().unwrap_or(0.0);
    let ensemble_loss = |ens: &CriticEnsemble| -> Result<f64> {
        let q = ens.q_batch(all.obs.view(), all.actions.view())?;
        let diff = &q - &all.rewards.view().insert_axis(Axis(1));
        Ok(diff.mapv(|d| d * d).mean().unwrap_or(0.0))
    };
    let initial_loss = ensemble_loss(ensemble)?;
    for m in &mut ensemble.members {
        let last = m.num_layers() - 1;
        m.layer_bias_mut(last)[0] += mean_target;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = all.len();
    let bs = batch_size.clamp(1, n);
    for _ in 0..n_steps {
        let idx: Vec<usize> = (0..bs).map(|_| rng.random_range(0..n)).collect();
        let batch = Batch {
            obs: all.obs.select(Axis(0), &idx),
            actions: all.actions.select(Axis(0), &idx),
            rewards: all.rewards.select(Axis(0), &idx),
            next_obs: all.obs.select(Axis(0), &idx),
            terminals: Array1::zeros(bs),
        };
        critic_update(ensemble, &batch, &batch.rewards, opts)?;
    }
    ensemble.sync_targets();
    Ok(QInitReport {
        steps: n_steps,
        initial_loss,
        final_loss: ensemble_loss(ensemble)?,
    })
}
