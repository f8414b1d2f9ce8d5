//! Soft actor-critic learner with an ensemble critic, subsampled-min targets,
//! several critic updates per learner step, and an auxiliary behavior-cloning
//! term on the actor.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::seq::index::sample as sample_without_replacement;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bc::BcPolicy;
use crate::distributions::{DiagGaussian, LOG_SIGMA_MAX, LOG_SIGMA_MIN};
use crate::error::{Error, Result};
use crate::nn::{Adam, Mlp, MlpCheckpoint, MlpSpec};
use crate::replay::{Batch, ReplayBuffer};

const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_7;

/// Affine reward transform `scale * r + bias`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardShaper {
    pub scale: f64,
    pub bias: f64,
}

impl RewardShaper {
    pub fn shape(&self, r: f64) -> f64 {
        self.scale * r + self.bias
    }
}

impl Default for RewardShaper {
    fn default() -> Self {
        Self {
            scale: 5.0,
            bias: -1.0,
        }
    }
}

/// What the auxiliary BC term pulls the actor toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcLossTarget {
    /// Actions drawn from the BC policy at the batch states.
    PolicySamples,
    /// Stored actions of demonstration transitions in the batch.
    DemoActions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlConfig {
    pub gamma: f64,
    pub tau: f64,
    pub utd: usize,
    pub ensemble_size: usize,
    pub subsample: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub layer_norm: bool,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub bc_loss_weight: f64,
    pub bc_loss_target: BcLossTarget,
    pub reward_scale: f64,
    pub reward_bias: f64,
    pub auto_entropy: bool,
    pub init_entropy_coef: f64,
    /// Defaults to `-action_dim` when absent.
    pub target_entropy: Option<f64>,
    pub entropy_lr: f64,
    pub replay_capacity: usize,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            utd: 4,
            ensemble_size: 10,
            subsample: 2,
            batch_size: 256,
            hidden: vec![512, 512, 512],
            layer_norm: true,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            bc_loss_weight: 0.3,
            bc_loss_target: BcLossTarget::PolicySamples,
            reward_scale: 5.0,
            reward_bias: -1.0,
            auto_entropy: true,
            init_entropy_coef: 0.1,
            target_entropy: None,
            entropy_lr: 3e-4,
            replay_capacity: crate::replay::DEFAULT_CAPACITY,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("rl.gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("rl.tau must lie in (0, 1], got {}", self.tau)));
        }
        if self.utd < 1 {
            return Err(Error::Config("rl.utd must be at least 1".into()));
        }
        if self.subsample < 1 || self.subsample > self.ensemble_size {
            return Err(Error::Config(format!(
                "rl.subsample must lie in [1, ensemble_size={}], got {}",
                self.ensemble_size, self.subsample
            )));
        }
        if self.batch_size == 0 || self.replay_capacity == 0 {
            return Err(Error::Config("rl.batch_size and rl.replay_capacity must be positive".into()));
        }
        if self.bc_loss_weight < 0.0 {
            return Err(Error::Config("rl.bc_loss_weight must be non-negative".into()));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0 && self.init_entropy_coef > 0.0) {
            return Err(Error::Config("rl learning rates and entropy coefficient must be positive".into()));
        }
        Ok(())
    }

    pub fn shaper(&self) -> RewardShaper {
        RewardShaper {
            scale: self.reward_scale,
            bias: self.reward_bias,
        }
    }
}

/// Unsquashed diagonal-Gaussian policy network: `obs -> (mu, log_sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianActor {
    pub net: Mlp,
    action_dim: usize,
}

impl GaussianActor {
    /// The output layer starts at 1% scale so initial actions sit near zero.
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        layer_norm: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let spec = MlpSpec::with_hidden(obs_dim, hidden, 2 * action_dim, layer_norm);
        Ok(Self {
            net: Mlp::new(spec, 0.01, rng)?,
            action_dim,
        })
    }

    pub fn from_net(net: Mlp) -> Result<Self> {
        if net.output_dim() % 2 != 0 {
            return Err(Error::Shape("actor output must hold mu and log_sigma".into()));
        }
        let action_dim = net.output_dim() / 2;
        Ok(Self { net, action_dim })
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn distribution(&self, obs: &[f64]) -> Result<DiagGaussian> {
        let out = self.net.forward(obs)?;
        let d = self.action_dim;
        DiagGaussian::new(out[..d].to_vec(), out[d..].to_vec())
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R, use_mode: bool) -> Result<Vec<f64>> {
        Ok(self.distribution(obs)?.sample(rng, use_mode))
    }

    /// Row-wise `(mu, clamped log_sigma)`.
    pub fn params_batch(&self, obs: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let out = self.net.forward_batch(obs)?;
        let d = self.action_dim;
        let mu = out.slice(s![.., ..d]).to_owned();
        let ls = out.slice(s![.., d..]).mapv(|l| l.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX));
        Ok((mu, ls))
    }
}

/// `E` critics `(obs, action) -> Q` and their target copies.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticEnsemble {
    pub members: Vec<Mlp>,
    pub targets: Vec<Mlp>,
}

/// How ensemble members are combined into one score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticAggregate {
    Mean,
    Min,
}

impl CriticEnsemble {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        size: usize,
        layer_norm: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if size == 0 {
            return Err(Error::Config("critic ensemble needs at least one member".into()));
        }
        let spec = MlpSpec::with_hidden(obs_dim + action_dim, hidden, 1, layer_norm);
        let members = (0..size)
            .map(|_| Mlp::new(spec.clone(), 1.0, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            targets: members.clone(),
            members,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.members[0].input_dim()
    }

    /// Copies every member into its target.
    pub fn sync_targets(&mut self) {
        self.targets.clone_from(&self.members);
    }

    pub fn soft_update_targets(&mut self, tau: f64) -> Result<()> {
        for (t, m) in self.targets.iter_mut().zip(&self.members) {
            t.soft_update_from(m, tau)?;
        }
        Ok(())
    }

    /// Per-member Q at one state-action pair. Actions are clipped to `[-1, 1]`.
    pub fn q_values(&self, obs: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        let input = critic_input_row(obs, action);
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "critic expects {} inputs, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        self.members
            .iter()
            .map(|m| Ok(m.forward(&input)?[0]))
            .collect()
    }

    pub fn aggregate(&self, obs: &[f64], action: &[f64], how: CriticAggregate) -> Result<f64> {
        let q = self.q_values(obs, action)?;
        Ok(match how {
            CriticAggregate::Mean => q.iter().sum::<f64>() / q.len() as f64,
            CriticAggregate::Min => q.iter().cloned().fold(f64::INFINITY, f64::min),
        })
    }

    /// `(n, E)` matrix of member predictions.
    pub fn q_batch(&self, obs: ArrayView2<'_, f64>, actions: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let input = critic_input(obs, actions);
        let cols = self
            .members
            .iter()
            .map(|m| m.forward_batch(input.view()))
            .collect::<Result<Vec<_>>>()?;
        let views: Vec<_> = cols.iter().map(|c| c.view()).collect();
        concatenate(Axis(1), &views).map_err(|e| Error::Shape(e.to_string()))
    }

    pub fn mean_q_batch(&self, obs: ArrayView2<'_, f64>, actions: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        Ok(self.q_batch(obs, actions)?.mean_axis(Axis(1)).expect("non-empty ensemble"))
    }

    pub fn to_file(&self) -> CriticFile {
        CriticFile {
            members: self.members.iter().map(Mlp::to_checkpoint).collect(),
            targets: self.targets.iter().map(Mlp::to_checkpoint).collect(),
        }
    }

    pub fn from_file(file: &CriticFile) -> Result<Self> {
        let members = file.members.iter().map(Mlp::from_checkpoint).collect::<Result<Vec<_>>>()?;
        let targets = file.targets.iter().map(Mlp::from_checkpoint).collect::<Result<Vec<_>>>()?;
        // An ensemble saved for acting only carries no targets.
        if members.is_empty() || !(targets.is_empty() || members.len() == targets.len()) {
            return Err(Error::Shape("critic file needs matching member and target lists".into()));
        }
        Ok(Self { members, targets })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticFile {
    pub members: Vec<MlpCheckpoint>,
    pub targets: Vec<MlpCheckpoint>,
}

fn clip_unit(a: f64) -> f64 {
    a.clamp(-1.0, 1.0)
}

fn critic_input_row(obs: &[f64], action: &[f64]) -> Vec<f64> {
    obs.iter().cloned().chain(action.iter().map(|&a| clip_unit(a))).collect()
}

/// `[obs | clip(actions)]`.
pub fn critic_input(obs: ArrayView2<'_, f64>, actions: ArrayView2<'_, f64>) -> Array2<f64> {
    let clipped = actions.mapv(clip_unit);
    concatenate(Axis(1), &[obs, clipped.view()]).expect("row counts agree")
}

fn standard_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Soft TD targets for a batch with explicit next-action noise `eps` and
/// target-member subset. Each row is computed independently.
pub fn critic_targets_with(
    batch: &Batch,
    ensemble: &CriticEnsemble,
    actor: &GaussianActor,
    entropy_coef: f64,
    gamma: f64,
    subset: &[usize],
    eps: ArrayView2<'_, f64>,
) -> Result<Array1<f64>> {
    if subset.is_empty() || subset.iter().any(|&i| i >= ensemble.targets.len()) {
        return Err(Error::Input("bad critic subset".into()));
    }
    let (mu, ls) = actor.params_batch(batch.next_obs.view())?;
    let sigma = ls.mapv(f64::exp);
    let next_actions = &mu + &(&sigma * &eps);
    // log pi(a' | s') under the reparameterization: -1/2 eps^2 - log sigma - 1/2 log 2 pi.
    let log_pi = (eps.mapv(|e| -0.5 * e * e) - &ls - HALF_LOG_TWO_PI).sum_axis(Axis(1));
    let input = critic_input(batch.next_obs.view(), next_actions.view());
    let mut min_q = Array1::from_elem(batch.len(), f64::INFINITY);
    for &j in subset {
        let q = ensemble.targets[j].forward_batch(input.view())?;
        for (m, &v) in min_q.iter_mut().zip(q.column(0)) {
            *m = m.min(v);
        }
    }
    let soft_value = min_q - &(log_pi * entropy_coef);
    Ok(&batch.rewards + &((1.0 - &batch.terminals) * &soft_value * gamma))
}

/// Draws the subset and next-action noise, then computes [`critic_targets_with`].
pub fn critic_targets<R: Rng + ?Sized>(
    batch: &Batch,
    ensemble: &CriticEnsemble,
    actor: &GaussianActor,
    entropy_coef: f64,
    cfg: &RlConfig,
    rng: &mut R,
) -> Result<Array1<f64>> {
    let subset = sample_without_replacement(rng, ensemble.len(), cfg.subsample).into_vec();
    let eps = standard_normal_matrix(batch.len(), actor.action_dim(), rng);
    critic_targets_with(batch, ensemble, actor, entropy_coef, cfg.gamma, &subset, eps.view())
}

/// Mean squared TD error of one critic and its parameter gradient.
pub fn critic_loss_and_grad(
    critic: &Mlp,
    input: ArrayView2<'_, f64>,
    targets: &Array1<f64>,
) -> Result<(f64, Vec<f64>)> {
    let y = targets.view().insert_axis(Axis(1));
    critic.gradient(input, crate::nn::mse_loss(y))
}

/// One optimizer step per member on `mean((Q(s,a) - y)^2)`. Returns the member-mean loss.
pub fn critic_update(
    ensemble: &mut CriticEnsemble,
    batch: &Batch,
    targets: &Array1<f64>,
    opts: &mut [Adam],
) -> Result<f64> {
    if opts.len() != ensemble.len() || targets.len() != batch.len() {
        return Err(Error::Shape("critic update: optimizer or target count mismatch".into()));
    }
    let input = critic_input(batch.obs.view(), batch.actions.view());
    let losses = ensemble
        .members
        .par_iter_mut()
        .zip(opts.par_iter_mut())
        .map(|(member, opt)| {
            let (loss, grads) = critic_loss_and_grad(member, input.view(), targets)?;
            opt.step(member.params_mut(), &grads)?;
            Ok(loss)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Per-row BC regression targets for the actor and a 0/1 mask of rows that count.
#[derive(Debug, Clone)]
pub struct BcTargets {
    pub actions: Array2<f64>,
    pub mask: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorLoss {
    pub loss: f64,
    /// Batch mean of `log pi(a~|s)` for the reparameterized sample.
    pub mean_log_prob: f64,
}

/// Actor objective
/// `mean[ c * log pi(a~|s) - meanQ(s, a~) ] + lambda * mean[ -log pi(a_bc|s) ]`
/// with `a~ = mu + sigma * eps`, and its gradient w.r.t. the actor parameters.
pub fn actor_loss_and_grad(
    actor: &GaussianActor,
    ensemble: &CriticEnsemble,
    obs: ArrayView2<'_, f64>,
    eps: ArrayView2<'_, f64>,
    bc: Option<&BcTargets>,
    entropy_coef: f64,
    bc_weight: f64,
) -> Result<(ActorLoss, Vec<f64>)> {
    let n = obs.nrows();
    let d = actor.action_dim();
    let nf = n as f64;
    let (out, cache) = actor.net.forward_train(obs)?;
    let mu = out.slice(s![.., ..d]);
    let raw_ls = out.slice(s![.., d..]);
    let ls = raw_ls.mapv(|l| l.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX));
    let sigma = ls.mapv(f64::exp);
    let actions = &mu + &(&sigma * &eps);

    let log_pi = (eps.mapv(|e| -0.5 * e * e) - &ls - HALF_LOG_TWO_PI).sum_axis(Axis(1));
    let mean_log_prob = log_pi.sum() / nf;

    // d(-meanQ)/d(action), through all members.
    let input = critic_input(obs, actions.view());
    let e = ensemble.len() as f64;
    let per_member = ensemble
        .members
        .par_iter()
        .map(|m| {
            let (q, c) = m.forward_train(input.view())?;
            let d_out = Array2::from_elem((n, 1), -1.0 / (nf * e));
            let (_, d_in) = m.backward(&c, d_out.view())?;
            Ok((q.sum(), d_in))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut q_sum = 0.0;
    let obs_dim = obs.ncols();
    let mut d_action = Array2::<f64>::zeros((n, d));
    for (qs, d_in) in per_member {
        q_sum += qs;
        d_action += &d_in.slice(s![.., obs_dim..]);
    }
    // Clipping flattens the critic outside [-1, 1].
    ndarray::Zip::from(&mut d_action)
        .and(&actions)
        .for_each(|g, &a| {
            if a.abs() > 1.0 {
                *g = 0.0
            }
        });
    let mean_q = q_sum / (nf * e);

    let mut d_mu = d_action.clone();
    let mut d_ls = &d_action * &sigma * &eps;
    d_ls -= entropy_coef / nf;

    let mut bc_loss = 0.0;
    if let Some(bc) = bc {
        if bc_weight > 0.0 {
            let inv_var = ls.mapv(|l| (-2.0 * l).exp());
            let diff = &bc.actions - &mu;
            let z2 = &diff * &diff * &inv_var;
            let row_nll = (z2.mapv(|v| 0.5 * v) + &ls + HALF_LOG_TWO_PI).sum_axis(Axis(1));
            bc_loss = (&row_nll * &bc.mask).sum() / nf;
            let mask = bc.mask.view().insert_axis(Axis(1));
            d_mu -= &(&diff * &inv_var * &mask * (bc_weight / nf));
            d_ls -= &((z2 - 1.0) * &mask * (bc_weight / nf));
        }
    }
    ndarray::Zip::from(&mut d_ls).and(&raw_ls).for_each(|g, &r| {
        if !(LOG_SIGMA_MIN..=LOG_SIGMA_MAX).contains(&r) {
            *g = 0.0
        }
    });

    let loss = entropy_coef * mean_log_prob - mean_q + bc_weight * bc_loss;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("actor loss = {loss}")));
    }
    let d_out = concatenate(Axis(1), &[d_mu.view(), d_ls.view()]).expect("same rows");
    let (grads, _) = actor.net.backward(&cache, d_out.view())?;
    Ok((
        ActorLoss {
            loss,
            mean_log_prob,
        },
        grads,
    ))
}

/// Builds the BC targets for a batch according to `target`.
pub fn bc_targets<R: Rng + ?Sized>(
    batch: &Batch,
    sources: &[crate::replay::Source],
    bc: &BcPolicy,
    target: BcLossTarget,
    rng: &mut R,
) -> Result<BcTargets> {
    let n = batch.len();
    match target {
        BcLossTarget::PolicySamples => {
            let dists = bc.distributions(batch.obs.view())?;
            let mut actions = Array2::zeros((n, batch.actions.ncols()));
            for (mut row, dist) in actions.rows_mut().into_iter().zip(&dists) {
                let a = dist.sample(rng, false);
                row.assign(&Array1::from(a));
            }
            Ok(BcTargets {
                actions,
                mask: Array1::ones(n),
            })
        }
        BcLossTarget::DemoActions => Ok(BcTargets {
            actions: batch.actions.clone(),
            mask: sources
                .iter()
                .map(|s| if *s == crate::replay::Source::Demo { 1.0 } else { 0.0 })
                .collect(),
        }),
    }
}

/// Anything the learner can draw training batches from.
pub trait BatchSampler {
    fn len(&self) -> usize;
    /// Returns a batch plus the source tag of every row.
    fn sample_batch(&self, k: usize, rng: &mut ChaCha8Rng) -> Result<(Batch, Vec<crate::replay::Source>)>;
}

impl BatchSampler for ReplayBuffer {
    fn len(&self) -> usize {
        ReplayBuffer::len(self)
    }

    fn sample_batch(&self, k: usize, rng: &mut ChaCha8Rng) -> Result<(Batch, Vec<crate::replay::Source>)> {
        let idx = self.sample_indices(k, rng)?;
        let sources = idx.iter().map(|&i| self.get(i).expect("sampled index").source).collect();
        Ok((self.batch(&idx), sources))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerMetrics {
    pub learner_step: u64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub mean_q: f64,
    /// Batch estimate of the actor entropy, `-mean log pi`.
    pub entropy: f64,
    pub entropy_coef: f64,
    pub critic_batches: usize,
    pub actor_batches: usize,
}

/// Networks, optimizers and RNG of the online learner.
#[derive(Debug, Clone)]
pub struct Learner {
    pub actor: GaussianActor,
    pub critics: CriticEnsemble,
    pub cfg: RlConfig,
    actor_opt: Adam,
    critic_opts: Vec<Adam>,
    log_entropy_coef: f64,
    entropy_opt: Adam,
    target_entropy: f64,
    rng: ChaCha8Rng,
    pub learner_step: u64,
}

impl Learner {
    pub fn new(obs_dim: usize, action_dim: usize, cfg: RlConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = GaussianActor::new(obs_dim, action_dim, &cfg.hidden, cfg.layer_norm, &mut rng)?;
        let critics = CriticEnsemble::new(
            obs_dim,
            action_dim,
            &cfg.hidden,
            cfg.ensemble_size,
            cfg.layer_norm,
            &mut rng,
        )?;
        Ok(Self::from_parts(actor, critics, cfg, rng))
    }

    pub fn from_parts(actor: GaussianActor, critics: CriticEnsemble, cfg: RlConfig, rng: ChaCha8Rng) -> Self {
        let actor_opt = Adam::for_net(&actor.net, cfg.actor_lr);
        let critic_opts = critics.members.iter().map(|m| Adam::for_net(m, cfg.critic_lr)).collect();
        let target_entropy = cfg.target_entropy.unwrap_or(-(actor.action_dim() as f64));
        Self {
            actor_opt,
            critic_opts,
            log_entropy_coef: cfg.init_entropy_coef.ln(),
            entropy_opt: Adam::new(1, cfg.entropy_lr),
            target_entropy,
            actor,
            critics,
            cfg,
            rng,
            learner_step: 0,
        }
    }

    pub fn entropy_coef(&self) -> f64 {
        self.log_entropy_coef.exp()
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Critic optimizers, e.g. for supervised critic initialization.
    pub fn critics_and_opts(&mut self) -> (&mut CriticEnsemble, &mut [Adam]) {
        (&mut self.critics, &mut self.critic_opts)
    }

    /// One learner step: `utd` critic updates on fresh batches, one actor
    /// update on the last batch's states, then a soft update of every target.
    pub fn train_step<S: BatchSampler + ?Sized>(&mut self, replay: &S, bc: &BcPolicy) -> Result<LearnerMetrics> {
        if replay.len() < self.cfg.batch_size {
            return Err(Error::NotReady {
                have: replay.len(),
                need: self.cfg.batch_size,
            });
        }
        let coef = self.entropy_coef();
        let mut critic_loss = 0.0;
        let mut last = None;
        for _ in 0..self.cfg.utd {
            let (batch, sources) = replay.sample_batch(self.cfg.batch_size, &mut self.rng)?;
            let targets = critic_targets(&batch, &self.critics, &self.actor, coef, &self.cfg, &mut self.rng)?;
            critic_loss += critic_update(&mut self.critics, &batch, &targets, &mut self.critic_opts)?;
            last = Some((batch, sources));
        }
        critic_loss /= self.cfg.utd as f64;
        let (batch, sources) = last.expect("utd >= 1");

        let bc_t = if self.cfg.bc_loss_weight > 0.0 {
            Some(bc_targets(&batch, &sources, bc, self.cfg.bc_loss_target, &mut self.rng)?)
        } else {
            None
        };
        let eps = standard_normal_matrix(batch.len(), self.actor.action_dim(), &mut self.rng);
        let (actor_loss, grads) = actor_loss_and_grad(
            &self.actor,
            &self.critics,
            batch.obs.view(),
            eps.view(),
            bc_t.as_ref(),
            coef,
            self.cfg.bc_loss_weight,
        )?;
        self.actor_opt.step(self.actor.net.params_mut(), &grads)?;

        if self.cfg.auto_entropy {
            // d/d(log c) of -log c * (log pi + target)
            let g = -(actor_loss.mean_log_prob + self.target_entropy);
            let mut p = [self.log_entropy_coef];
            self.entropy_opt.step(&mut p, &[g])?;
            self.log_entropy_coef = p[0];
        }

        self.critics.soft_update_targets(self.cfg.tau)?;
        self.learner_step += 1;
        let mean_q = self
            .critics
            .mean_q_batch(batch.obs.view(), batch.actions.view())?
            .mean()
            .unwrap_or(0.0);
        Ok(LearnerMetrics {
            learner_step: self.learner_step,
            critic_loss,
            actor_loss: actor_loss.loss,
            mean_q,
            entropy: -actor_loss.mean_log_prob,
            entropy_coef: self.entropy_coef(),
            critic_batches: self.cfg.utd,
            actor_batches: 1,
        })
    }
}
