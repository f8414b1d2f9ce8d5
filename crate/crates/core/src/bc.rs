//! Behavior cloning: demonstration datasets, likelihood-trained policies, and
//! the log-probability / entropy interface used for Q-estimation.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    softmax, ActionDistribution, DiagGaussian, Gmm, LOG_SIGMA_MAX, LOG_SIGMA_MIN,
};
use crate::envs::{teacher_mean, EnvSpec, NoiseConfig, NoiseKind};
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, Adam, Mlp, MlpCheckpoint, MlpSpec};

/// One episode. `obs` has one more entry than `actions`: the observation
/// reached after the final action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    /// True when the episode ended in success, false when it was cut off.
    pub terminated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.actions.is_empty() {
            return Err(Error::Input("empty trajectory".into()));
        }
        if self.obs.len() != self.actions.len() + 1 || self.rewards.len() != self.actions.len() {
            return Err(Error::Input(format!(
                "trajectory has {} observations, {} actions, {} rewards",
                self.obs.len(),
                self.actions.len(),
                self.rewards.len()
            )));
        }
        Ok(())
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DemoDataset {
    pub trajectories: Vec<Trajectory>,
}

impl DemoDataset {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        let data = Self { trajectories };
        data.validate()?;
        Ok(data)
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn num_transitions(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// `(obs_dim, action_dim)` of a non-empty dataset.
    pub fn dims(&self) -> Option<(usize, usize)> {
        let t = self.trajectories.first()?;
        Some((t.obs[0].len(), t.actions[0].len()))
    }

    pub fn validate(&self) -> Result<()> {
        let Some((obs_dim, act_dim)) = self.dims() else {
            return Ok(());
        };
        for (i, t) in self.trajectories.iter().enumerate() {
            t.validate().map_err(|e| Error::Input(format!("trajectory {i}: {e}")))?;
            if t.obs.iter().any(|o| o.len() != obs_dim) || t.actions.iter().any(|a| a.len() != act_dim)
            {
                return Err(Error::Input(format!(
                    "trajectory {i}: dimensions differ from ({obs_dim}, {act_dim})"
                )));
            }
        }
        Ok(())
    }

    /// Observation and action matrices over every step of every trajectory.
    pub fn state_action_matrices(&self) -> (Array2<f64>, Array2<f64>) {
        let (obs_dim, act_dim) = self.dims().unwrap_or((0, 0));
        let n = self.num_transitions();
        let mut obs = Vec::with_capacity(n * obs_dim);
        let mut act = Vec::with_capacity(n * act_dim);
        for t in &self.trajectories {
            for (o, a) in t.obs.iter().zip(&t.actions) {
                obs.extend_from_slice(o);
                act.extend_from_slice(a);
            }
        }
        (
            Array2::from_shape_vec((n, obs_dim), obs).expect("validated"),
            Array2::from_shape_vec((n, act_dim), act).expect("validated"),
        )
    }

    /// First `fraction` of the trajectories (rounded down), for seeding ablations.
    pub fn take_fraction(&self, fraction: f64) -> DemoDataset {
        let n = ((self.trajectories.len() as f64) * fraction.clamp(0.0, 1.0)).floor() as usize;
        DemoDataset {
            trajectories: self.trajectories[..n].to_vec(),
        }
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for t in &self.trajectories {
            serde_json::to_writer(&mut w, t)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut trajectories = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let t: Trajectory = serde_json::from_str(&line)
                .map_err(|e| Error::Input(format!("{}:{}: {e}", path.display(), i + 1)))?;
            trajectories.push(t);
        }
        Self::new(trajectories)
    }
}

/// Rolls out the scripted demonstrator to build a dataset.
pub fn generate_demos<R: Rng + ?Sized>(
    spec: &EnvSpec,
    noise: &NoiseConfig,
    n_episodes: usize,
    rng: &mut R,
) -> Result<DemoDataset> {
    let mut env = crate::envs::Env::new(spec.clone())?;
    let mut trajectories = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let mut obs = env.reset(rng);
        let mut t = Trajectory {
            obs: vec![obs.clone()],
            actions: Vec::new(),
            rewards: Vec::new(),
            terminated: false,
        };
        loop {
            let a = crate::envs::scripted_teacher(spec, &obs, noise, rng);
            let r = env.step(&a)?;
            t.actions.push(a);
            t.rewards.push(r.reward);
            t.obs.push(r.next_obs.clone());
            obs = r.next_obs;
            if r.terminated || r.truncated {
                t.terminated = r.terminated;
                break;
            }
        }
        trajectories.push(t);
    }
    DemoDataset::new(trajectories)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Gaussian,
    Gmm,
}

/// How a policy turns observations into action distributions.
#[derive(Debug, Clone, PartialEq)]
pub enum BcModel {
    /// A trunk network whose outputs parameterize the head.
    Network {
        trunk: Mlp,
        head: HeadKind,
        components: usize,
        action_dim: usize,
    },
    /// Deterministic scripted controller plus noise. Its likelihood is a
    /// Gaussian centred on the controller with sigma equal to the noise scale,
    /// whatever the actual noise kind.
    ScriptedNoise { env: EnvSpec, noise: NoiseConfig },
}

/// A behavior-cloning policy. Immutable once trained.
#[derive(Debug, Clone, PartialEq)]
pub struct BcPolicy {
    pub model: BcModel,
    /// Identifies the checkpoint this policy came from.
    pub checkpoint_id: String,
}

impl BcPolicy {
    pub fn new_network<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        head: HeadKind,
        components: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let components = match head {
            HeadKind::Gaussian => 1,
            HeadKind::Gmm => components.max(1),
        };
        let out = head_width(head, components, action_dim);
        let trunk = Mlp::new(MlpSpec::with_hidden(obs_dim, hidden, out, true), 1.0, rng)?;
        Ok(Self {
            model: BcModel::Network {
                trunk,
                head,
                components,
                action_dim,
            },
            checkpoint_id: "init".into(),
        })
    }

    pub fn scripted(env: EnvSpec, noise: NoiseConfig) -> Self {
        Self {
            checkpoint_id: format!("scripted-{:?}-{}", noise.kind, noise.scale).to_lowercase(),
            model: BcModel::ScriptedNoise { env, noise },
        }
    }

    pub fn obs_dim(&self) -> usize {
        match &self.model {
            BcModel::Network { trunk, .. } => trunk.input_dim(),
            BcModel::ScriptedNoise { env, .. } => env.obs_dim(),
        }
    }

    pub fn action_dim(&self) -> usize {
        match &self.model {
            BcModel::Network { action_dim, .. } => *action_dim,
            BcModel::ScriptedNoise { env, .. } => env.action_dim(),
        }
    }

    pub fn head(&self) -> HeadKind {
        match &self.model {
            BcModel::Network { head, .. } => *head,
            BcModel::ScriptedNoise { .. } => HeadKind::Gaussian,
        }
    }

    /// Action distribution emitted for one observation.
    pub fn distribution(&self, obs: &[f64]) -> Result<ActionDistribution> {
        if obs.len() != self.obs_dim() {
            return Err(Error::Shape(format!(
                "observation has {} dims, policy expects {}",
                obs.len(),
                self.obs_dim()
            )));
        }
        match &self.model {
            BcModel::Network { trunk, .. } => {
                let out = trunk.forward(obs)?;
                self.decode_head(&out)
            }
            BcModel::ScriptedNoise { env, noise } => {
                let mu = teacher_mean(env, obs);
                let ls = noise.scale.max(f64::MIN_POSITIVE).ln();
                Ok(ActionDistribution::Gaussian(DiagGaussian::new(
                    mu.clone(),
                    vec![ls; mu.len()],
                )?))
            }
        }
    }

    /// Distributions for every row of `obs`, one network pass.
    pub fn distributions(&self, obs: ArrayView2<'_, f64>) -> Result<Vec<ActionDistribution>> {
        match &self.model {
            BcModel::Network { trunk, .. } => {
                let out = trunk.forward_batch(obs)?;
                out.rows()
                    .into_iter()
                    .map(|row| self.decode_head(row.as_slice().expect("contiguous")))
                    .collect()
            }
            BcModel::ScriptedNoise { .. } => obs
                .rows()
                .into_iter()
                .map(|row| self.distribution(&row.to_vec()))
                .collect(),
        }
    }

    fn decode_head(&self, out: &[f64]) -> Result<ActionDistribution> {
        let BcModel::Network {
            head,
            components,
            action_dim,
            ..
        } = &self.model
        else {
            unreachable!("decode_head is only used by network policies")
        };
        let d = *action_dim;
        match head {
            HeadKind::Gaussian => Ok(ActionDistribution::Gaussian(DiagGaussian::new(
                out[..d].to_vec(),
                out[d..2 * d].to_vec(),
            )?)),
            HeadKind::Gmm => {
                let k = *components;
                let weights = softmax(&out[..k]);
                let comps = (0..k)
                    .map(|i| {
                        let mu = out[k + i * d..k + (i + 1) * d].to_vec();
                        let ls = out[k + k * d + i * d..k + k * d + (i + 1) * d].to_vec();
                        DiagGaussian::new(mu, ls)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(ActionDistribution::Mixture(Gmm::new(weights, comps)?))
            }
        }
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        self.distribution(obs)?.log_prob(action)
    }

    /// Exact entropy for a Gaussian head, the mixture upper bound for GMM.
    pub fn entropy(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.distribution(obs)?.entropy())
    }

    /// Draws an action. Scripted policies draw their configured noise kind.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R, use_mode: bool) -> Result<Vec<f64>> {
        match &self.model {
            BcModel::ScriptedNoise { env, noise } if noise.kind == NoiseKind::Uniform => {
                let mu = teacher_mean(env, obs);
                if use_mode {
                    return Ok(mu);
                }
                Ok(mu.into_iter().map(|m| m + noise.draw(rng)).collect())
            }
            _ => Ok(self.distribution(obs)?.sample(rng, use_mode)),
        }
    }

    pub fn to_file(&self) -> BcPolicyFile {
        match &self.model {
            BcModel::Network {
                trunk,
                head,
                components,
                action_dim,
            } => BcPolicyFile::Network {
                checkpoint_id: self.checkpoint_id.clone(),
                head: *head,
                components: *components,
                action_dim: *action_dim,
                trunk: trunk.to_checkpoint(),
            },
            BcModel::ScriptedNoise { env, noise } => BcPolicyFile::Scripted {
                checkpoint_id: self.checkpoint_id.clone(),
                env: env.clone(),
                noise: *noise,
            },
        }
    }

    pub fn from_file(file: &BcPolicyFile) -> Result<Self> {
        match file {
            BcPolicyFile::Network {
                checkpoint_id,
                head,
                components,
                action_dim,
                trunk,
            } => {
                let trunk = Mlp::from_checkpoint(trunk)?;
                if trunk.output_dim() != head_width(*head, *components, *action_dim) {
                    return Err(Error::Shape("policy head does not match trunk output".into()));
                }
                Ok(Self {
                    model: BcModel::Network {
                        trunk,
                        head: *head,
                        components: *components,
                        action_dim: *action_dim,
                    },
                    checkpoint_id: checkpoint_id.clone(),
                })
            }
            BcPolicyFile::Scripted {
                checkpoint_id,
                env,
                noise,
            } => Ok(Self {
                model: BcModel::ScriptedNoise {
                    env: env.clone(),
                    noise: *noise,
                },
                checkpoint_id: checkpoint_id.clone(),
            }),
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_file())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_file(&serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum BcPolicyFile {
    Network {
        checkpoint_id: String,
        head: HeadKind,
        components: usize,
        action_dim: usize,
        trunk: MlpCheckpoint,
    },
    Scripted {
        checkpoint_id: String,
        env: EnvSpec,
        noise: NoiseConfig,
    },
}

fn head_width(head: HeadKind, components: usize, action_dim: usize) -> usize {
    match head {
        HeadKind::Gaussian => 2 * action_dim,
        HeadKind::Gmm => components * (1 + 2 * action_dim),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BcConfig {
    pub hidden: Vec<usize>,
    pub head: HeadKind,
    pub components: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Cosine decay of the step size down to `learning_rate * final_lr_fraction`
    /// at the last epoch. 1.0 keeps the rate constant.
    pub final_lr_fraction: f64,
    /// Global gradient-norm cap per minibatch (0 disables).
    pub grad_clip: f64,
    /// Fraction of trajectories held out to pick the best epoch. Zero keeps the last epoch.
    pub holdout_fraction: f64,
    /// Keep a snapshot every this many epochs (0 disables).
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            head: HeadKind::Gaussian,
            components: 5,
            epochs: 300,
            batch_size: 256,
            learning_rate: 1e-3,
            final_lr_fraction: 1.0,
            grad_clip: 0.0,
            holdout_fraction: 0.1,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BcTrainReport {
    pub policy: BcPolicy,
    /// Mean training NLL before training and after each epoch.
    pub train_nll: Vec<f64>,
    /// Held-out NLL after each epoch (empty without a holdout).
    pub holdout_nll: Vec<f64>,
    pub best_epoch: usize,
    /// `(epoch, policy)` snapshots taken every `checkpoint_every` epochs.
    pub checkpoints: Vec<(usize, BcPolicy)>,
}

/// Mean negative log-likelihood of `actions` under the policy at `obs`.
pub fn mean_nll(policy: &BcPolicy, obs: ArrayView2<'_, f64>, actions: ArrayView2<'_, f64>) -> Result<f64> {
    let dists = policy.distributions(obs)?;
    let mut total = 0.0;
    for (d, a) in dists.iter().zip(actions.rows()) {
        total -= d.log_prob(a.as_slice().expect("contiguous"))?;
    }
    Ok(total / dists.len().max(1) as f64)
}

/// Negative log-likelihood and its gradient w.r.t. the raw head outputs for
/// one sample. Clamped log-sigmas get zero gradient.
fn head_nll_grad(
    head: HeadKind,
    components: usize,
    action_dim: usize,
    out: &[f64],
    action: &[f64],
    grad: &mut [f64],
) -> Result<f64> {
    let d = action_dim;
    let clamp_mask = |raw: f64| (LOG_SIGMA_MIN..=LOG_SIGMA_MAX).contains(&raw);
    match head {
        HeadKind::Gaussian => {
            let g = DiagGaussian::new(out[..d].to_vec(), out[d..2 * d].to_vec())?;
            let nll = -g.log_prob(action)?;
            let (d_mu, d_ls) = g.log_prob_grad(action)?;
            for i in 0..d {
                grad[i] = -d_mu[i];
                grad[d + i] = if clamp_mask(out[d + i]) { -d_ls[i] } else { 0.0 };
            }
            Ok(nll)
        }
        HeadKind::Gmm => {
            let k = components;
            let weights = softmax(&out[..k]);
            let comps = (0..k)
                .map(|i| {
                    DiagGaussian::new(
                        out[k + i * d..k + (i + 1) * d].to_vec(),
                        out[k + k * d + i * d..k + k * d + (i + 1) * d].to_vec(),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let gmm = Gmm::new(weights.clone(), comps)?;
            let nll = -gmm.log_prob(action)?;
            let resp = gmm.responsibilities(action)?;
            for i in 0..k {
                grad[i] = -(resp[i] - weights[i]);
                let (d_mu, d_ls) = gmm.components[i].log_prob_grad(action)?;
                for j in 0..d {
                    grad[k + i * d + j] = -resp[i] * d_mu[j];
                    let raw = out[k + k * d + i * d + j];
                    grad[k + k * d + i * d + j] =
                        if clamp_mask(raw) { -resp[i] * d_ls[j] } else { 0.0 };
                }
            }
            Ok(nll)
        }
    }
}

/// Mean NLL over a batch and its gradient w.r.t. the trunk outputs.
pub(crate) fn batch_nll_grad(
    head: HeadKind,
    components: usize,
    action_dim: usize,
    out: &Array2<f64>,
    actions: ArrayView2<'_, f64>,
) -> Result<(f64, Array2<f64>)> {
    let n = out.nrows() as f64;
    let mut grad = Array2::zeros(out.raw_dim());
    let mut total = 0.0;
    for ((o, a), mut g) in out.rows().into_iter().zip(actions.rows()).zip(grad.rows_mut()) {
        total += head_nll_grad(
            head,
            components,
            action_dim,
            o.as_slice().expect("contiguous"),
            a.as_slice().expect("contiguous"),
            g.as_slice_mut().expect("contiguous"),
        )?;
    }
    grad /= n;
    Ok((total / n, grad))
}

/// Mean NLL of `actions` and its gradient w.r.t. the trunk parameters.
pub fn nll_loss_and_grad(
    policy: &BcPolicy,
    obs: ArrayView2<'_, f64>,
    actions: ArrayView2<'_, f64>,
) -> Result<(f64, Vec<f64>)> {
    let BcModel::Network {
        trunk,
        head,
        components,
        action_dim,
    } = &policy.model
    else {
        return Err(Error::Input("a scripted policy has no parameters".into()));
    };
    let (out, cache) = trunk.forward_train(obs)?;
    let (loss, d_out) = batch_nll_grad(*head, *components, *action_dim, &out, actions)?;
    let (grads, _) = trunk.backward(&cache, d_out.view())?;
    Ok((loss, grads))
}

/// Fits a policy to the dataset by minimizing the mean negative log-likelihood.
pub fn train_bc(data: &DemoDataset, cfg: &BcConfig) -> Result<BcTrainReport> {
    data.validate()?;
    let Some((obs_dim, action_dim)) = data.dims() else {
        return Err(Error::Input("cannot train behavior cloning on an empty dataset".into()));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = BcPolicy::new_network(
        obs_dim,
        action_dim,
        &cfg.hidden,
        cfg.head,
        cfg.components,
        &mut rng,
    )?;

    let n_holdout = if cfg.holdout_fraction > 0.0 && data.trajectories.len() > 1 {
        ((data.trajectories.len() as f64 * cfg.holdout_fraction).round() as usize)
            .clamp(1, data.trajectories.len() - 1)
    } else {
        0
    };
    let (train_set, holdout_set) = {
        let mut order: Vec<usize> = (0..data.trajectories.len()).collect();
        order.shuffle(&mut rng);
        let pick = |idx: &[usize]| DemoDataset {
            trajectories: idx.iter().map(|&i| data.trajectories[i].clone()).collect(),
        };
        (pick(&order[n_holdout..]), pick(&order[..n_holdout]))
    };
    let (obs, actions) = train_set.state_action_matrices();
    let (hold_obs, hold_actions) = holdout_set.state_action_matrices();

    let BcModel::Network {
        trunk,
        head,
        components,
        ..
    } = &mut policy.model
    else {
        unreachable!()
    };
    let (head, components) = (*head, *components);
    let mut opt = Adam::for_net(trunk, cfg.learning_rate);
    let n = obs.nrows();
    let batch_size = cfg.batch_size.clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();

    let mut report = BcTrainReport {
        policy: policy.clone(),
        train_nll: Vec::with_capacity(cfg.epochs + 1),
        holdout_nll: Vec::new(),
        best_epoch: 0,
        checkpoints: Vec::new(),
    };
    report.train_nll.push(mean_nll(&policy, obs.view(), actions.view())?);
    let mut best = (f64::INFINITY, policy.clone());

    for epoch in 1..=cfg.epochs {
        let progress = (epoch - 1) as f64 / cfg.epochs.max(2).saturating_sub(1) as f64;
        let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress.min(1.0)).cos());
        opt.learning_rate =
            cfg.learning_rate * (cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * cosine);
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            let x = obs.select(ndarray::Axis(0), chunk);
            let y = actions.select(ndarray::Axis(0), chunk);
            let BcModel::Network { trunk, .. } = &mut policy.model else {
                unreachable!()
            };
            let (out, cache) = trunk.forward_train(x.view())?;
            let (loss, d_out) = batch_nll_grad(head, components, action_dim, &out, y.view())?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("behavior cloning loss = {loss}")));
            }
            let (mut grads, _) = trunk.backward(&cache, d_out.view())?;
            if cfg.grad_clip > 0.0 {
                clip_grad_norm(&mut grads, cfg.grad_clip);
            }
            opt.step(trunk.params_mut(), &grads)?;
        }
        policy.checkpoint_id = format!("bc-epoch-{epoch}");
        report.train_nll.push(mean_nll(&policy, obs.view(), actions.view())?);
        if n_holdout > 0 {
            let h = mean_nll(&policy, hold_obs.view(), hold_actions.view())?;
            report.holdout_nll.push(h);
            if h < best.0 {
                best = (h, policy.clone());
                report.best_epoch = epoch;
            }
        }
        if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
            report.checkpoints.push((epoch, policy.clone()));
        }
    }
    report.policy = if n_holdout > 0 {
        best.1
    } else {
        report.best_epoch = cfg.epochs;
        policy
    };
    Ok(report)
}
