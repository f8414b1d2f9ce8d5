//! End-to-end runs: the Q-estimation phase, then online learning with gated
//! action selection, in synchronous or actor/learner form.
//!
//! The online loop is built from two workers. The actor steps the
//! environment and ships transitions to the learner every
//! `actor_flush_every` samples. The learner grants itself one training step
//! per received transition and publishes a parameter snapshot every
//! `learner_publish_every` training steps. Synchronous mode runs both workers
//! on one thread in a fixed order; asynchronous mode runs them on two threads
//! connected by bounded channels.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::Hasher;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, SyncSender, TryRecvError, TrySendError};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bc::{generate_demos, train_bc, BcPolicy, BcPolicyFile, BcTrainReport, DemoDataset};
use crate::config::RunConfig;
use crate::envs::{Env, EnvSpec};
use crate::error::{Error, Result};
use crate::gating::{gate, BcScoring, ForcedValues, GateConfig, GateInputs};
use crate::nn::{Mlp, MlpCheckpoint};
use crate::q_estimation::{
    collect_rollouts, fit_value, init_q_rl, QBcEstimate, QInitReport, RolloutSet, ValueEstimator,
};
use crate::replay::{ReplayBuffer, Source, Transition};
use crate::sac::{CriticEnsemble, CriticFile, GaussianActor, Learner, LearnerMetrics, RewardShaper};

/// Which parts of the method are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Q-estimation, critic initialization and gating on the BC estimate.
    Full,
    /// Critic initialized from the BC estimate, but one shared critic scores both proposals.
    NoGating,
    /// Randomly initialized critic, gating on the BC estimate.
    NoQinit,
    /// Randomly initialized shared critic scores both proposals; no Q-estimation phase.
    IbrlStyle,
    /// Execute the BC policy only; nothing is learned.
    BcOnly,
    /// Execute the RL actor only, without any BC term.
    RlFromScratch,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::NoGating,
        Variant::NoQinit,
        Variant::IbrlStyle,
        Variant::BcOnly,
        Variant::RlFromScratch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoGating => "no_gating",
            Variant::NoQinit => "no_qinit",
            Variant::IbrlStyle => "ibrl_style",
            Variant::BcOnly => "bc_only",
            Variant::RlFromScratch => "rl_from_scratch",
        }
    }

    pub fn uses_q_estimation(self) -> bool {
        matches!(self, Variant::Full | Variant::NoGating | Variant::NoQinit)
    }

    pub fn uses_critic_init(self) -> bool {
        matches!(self, Variant::Full | Variant::NoGating)
    }

    pub fn learns(self) -> bool {
        self != Variant::BcOnly
    }

    fn acting(self) -> Acting {
        match self {
            Variant::Full | Variant::NoQinit => Acting::Gated(BcScoring::QBc),
            Variant::NoGating | Variant::IbrlStyle => Acting::Gated(BcScoring::SharedCritic),
            Variant::BcOnly => Acting::BcOnly,
            Variant::RlFromScratch => Acting::RlOnly,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .iter()
            .copied()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Variant::ALL.iter().map(|v| v.as_str()).collect();
                Error::Config(format!("unknown variant `{s}`; expected one of {}", known.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Acting {
    Gated(BcScoring),
    BcOnly,
    RlOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Both workers on the calling thread, in a fixed order.
    Sync,
    /// Two threads; the actor never waits for the learner.
    Async,
    /// Two threads; the actor waits for the learner's acknowledgement after
    /// every flush, which reproduces the synchronous schedule exactly.
    AsyncDeterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriverConfig {
    pub total_env_steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Replay size required before learning starts (at least the batch size).
    pub warmup_transitions: usize,
    pub actor_flush_every: usize,
    pub learner_publish_every: usize,
    pub mode: RunMode,
    /// Gate settings while collecting data.
    pub gate: GateConfig,
    /// Gate settings during evaluation.
    pub eval_gate: GateConfig,
    /// Keep every online transition in the run artifacts.
    pub record_transitions: bool,
    /// Test hook: the learner stops with an error after this many messages.
    #[serde(skip)]
    #[doc(hidden)]
    pub learner_fault_after: Option<usize>,
}

impl Default for DriverConfig {
    fn default() -> Self {
        Self {
            total_env_steps: 150_000,
            eval_every: 2000,
            eval_episodes: 20,
            warmup_transitions: 0,
            actor_flush_every: 30,
            learner_publish_every: 30,
            mode: RunMode::Sync,
            gate: GateConfig::default(),
            eval_gate: GateConfig {
                rl_use_mode: true,
                ..GateConfig::default()
            },
            record_transitions: false,
            learner_fault_after: None,
        }
    }
}

impl DriverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.actor_flush_every == 0 || self.learner_publish_every == 0 {
            return Err(Error::Config("driver sync cadences must be positive".into()));
        }
        if self.eval_every == 0 || self.eval_episodes == 0 {
            return Err(Error::Config("driver.eval_every and driver.eval_episodes must be positive".into()));
        }
        Ok(())
    }
}

/// Mixes a run seed with a stream index into an independent seed.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_ROLLOUTS: u64 = 1;
const STREAM_LEARNER: u64 = 2;
const STREAM_ACTOR: u64 = 3;
const STREAM_EVAL: u64 = 4;
const STREAM_QINIT: u64 = 5;
const STREAM_VALUE: u64 = 6;

/// Something that can act in an environment.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyBundle {
    Bc {
        policy: BcPolicy,
        use_mode: bool,
    },
    Rl {
        actor: GaussianActor,
        use_mode: bool,
    },
    Gated {
        bc: BcPolicy,
        actor: GaussianActor,
        critics: CriticEnsemble,
        q_bc: Option<QBcEstimate>,
        gate: GateConfig,
    },
}

impl PolicyBundle {
    pub fn kind(&self) -> &'static str {
        match self {
            PolicyBundle::Bc { .. } => "bc",
            PolicyBundle::Rl { .. } => "rl",
            PolicyBundle::Gated { .. } => "gated",
        }
    }

    /// One action and the source that produced it.
    pub fn act(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, Source)> {
        match self {
            PolicyBundle::Bc { policy, use_mode } => Ok((policy.sample(obs, rng, *use_mode)?, Source::Bc)),
            PolicyBundle::Rl { actor, use_mode } => Ok((actor.sample(obs, rng, *use_mode)?, Source::Rl)),
            PolicyBundle::Gated {
                bc,
                actor,
                critics,
                q_bc,
                gate: cfg,
            } => {
                let inputs = GateInputs {
                    bc,
                    actor,
                    critics,
                    q_bc: q_bc.as_ref(),
                };
                let d = gate(obs, inputs, cfg, ForcedValues::default(), rng)?;
                Ok((d.chosen_action, d.source))
            }
        }
    }

    pub fn to_file(&self) -> BundleFile {
        match self {
            PolicyBundle::Bc { policy, use_mode } => BundleFile::Bc {
                policy: policy.to_file(),
                use_mode: *use_mode,
            },
            PolicyBundle::Rl { actor, use_mode } => BundleFile::Rl {
                actor: actor.net.to_checkpoint(),
                use_mode: *use_mode,
            },
            PolicyBundle::Gated {
                bc,
                actor,
                critics,
                q_bc,
                gate,
            } => BundleFile::Gated {
                bc: bc.to_file(),
                actor: actor.net.to_checkpoint(),
                critics: critics.to_file(),
                value: q_bc.as_ref().map(|q| q.value().to_checkpoint()),
                alpha: q_bc.as_ref().map(|q| q.alpha()).unwrap_or(1.0),
                gate: *gate,
            },
        }
    }

    pub fn from_file(file: &BundleFile) -> Result<Self> {
        Ok(match file {
            BundleFile::Bc { policy, use_mode } => PolicyBundle::Bc {
                policy: BcPolicy::from_file(policy)?,
                use_mode: *use_mode,
            },
            BundleFile::Rl { actor, use_mode } => PolicyBundle::Rl {
                actor: GaussianActor::from_net(Mlp::from_checkpoint(actor)?)?,
                use_mode: *use_mode,
            },
            BundleFile::Gated {
                bc,
                actor,
                critics,
                value,
                alpha,
                gate,
            } => {
                let bc = BcPolicy::from_file(bc)?;
                let q_bc = match value {
                    Some(v) => Some(QBcEstimate::new(ValueEstimator::from_checkpoint(v)?, bc.clone(), *alpha)?),
                    None => None,
                };
                PolicyBundle::Gated {
                    bc,
                    actor: GaussianActor::from_net(Mlp::from_checkpoint(actor)?)?,
                    critics: CriticEnsemble::from_file(critics)?,
                    q_bc,
                    gate: *gate,
                }
            }
        })
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
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BundleFile {
    Bc {
        policy: BcPolicyFile,
        use_mode: bool,
    },
    Rl {
        actor: MlpCheckpoint,
        use_mode: bool,
    },
    Gated {
        bc: BcPolicyFile,
        actor: MlpCheckpoint,
        critics: CriticFile,
        value: Option<MlpCheckpoint>,
        alpha: f64,
        gate: GateConfig,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_length: f64,
    /// Fraction of executed actions that came from the BC policy.
    pub bc_action_fraction: f64,
}

/// Runs `n_episodes` without learning.
pub fn evaluate(bundle: &PolicyBundle, spec: &EnvSpec, n_episodes: usize, seed: u64) -> Result<EvalStats> {
    if n_episodes == 0 {
        return Err(Error::Input("evaluation needs at least one episode".into()));
    }
    let mut env = Env::new(spec.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut successes, mut steps, mut bc_steps) = (0usize, 0usize, 0usize);
    for _ in 0..n_episodes {
        let mut obs = env.reset(&mut rng);
        loop {
            let (a, source) = bundle.act(&obs, &mut rng)?;
            let r = env.step(&a)?;
            steps += 1;
            bc_steps += usize::from(source == Source::Bc);
            obs = r.next_obs;
            if r.terminated {
                successes += 1;
                break;
            }
            if r.truncated {
                break;
            }
        }
    }
    Ok(EvalStats {
        episodes: n_episodes,
        success_rate: successes as f64 / n_episodes as f64,
        mean_length: steps as f64 / n_episodes as f64,
        bc_action_fraction: bc_steps as f64 / steps as f64,
    })
}

/// One row of `metrics.csv`, written at every evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub env_step: usize,
    pub learner_step: u64,
    pub eval_success: f64,
    /// Fraction of online steps since the previous row that executed the BC action.
    pub bc_action_fraction: f64,
    pub mean_q_bc: f64,
    pub mean_q_rl: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
}

/// One row of `gate_log.csv`, written for every online step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateLogRow {
    pub env_step: usize,
    pub source: Source,
    pub q_bc_value: f64,
    pub q_rl_value: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageCounts {
    /// Periodic transition batches, one per `actor_flush_every` samples.
    pub transition_batches: usize,
    /// Parameter snapshots, one per `learner_publish_every` training steps.
    pub snapshots: usize,
    /// Transitions delivered in the closing partial batch.
    pub final_flush_len: usize,
}

#[derive(Debug, Clone)]
pub struct QEstimationOutputs {
    pub rollouts: RolloutSet,
    pub estimate: QBcEstimate,
    pub value_initial_mse: f64,
    pub value_final_mse: f64,
    pub critic_init: Option<QInitReport>,
    /// Critic ensemble right after initialization.
    pub initial_critics: CriticEnsemble,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub variant: Variant,
    pub seed: u64,
    pub env_steps: usize,
    pub learner_steps: u64,
    /// Learner statistics from the last training step.
    pub last_learner_metrics: Option<LearnerMetrics>,
    pub metrics: Vec<MetricsRow>,
    pub gate_log: Vec<GateLogRow>,
    pub evals: Vec<(usize, EvalStats)>,
    /// Online transitions in order, when `record_transitions` is set.
    pub transitions: Vec<Transition>,
    pub q_estimation: Option<QEstimationOutputs>,
    pub messages: MessageCounts,
    pub replay_len: usize,
    pub replay_seeded: usize,
    pub replay_online: usize,
    pub final_policy: PolicyBundle,
    pub best_policy: Option<(f64, PolicyBundle)>,
    /// False when the run stopped early; `error` says why.
    pub completed: bool,
    pub error: Option<String>,
}

impl RunArtifacts {
    /// First evaluation step whose success reaches `level`.
    pub fn first_step_reaching(&self, level: f64) -> Option<usize> {
        self.metrics.iter().find(|m| m.eval_success >= level).map(|m| m.env_step)
    }

    pub fn success_at(&self, env_step: usize) -> Option<f64> {
        self.metrics.iter().find(|m| m.env_step == env_step).map(|m| m.eval_success)
    }
}

/// Parameters the actor acts with, plus a checksum over every bit of them.
#[derive(Debug, Clone)]
pub struct PolicySnapshot {
    pub learner_step: u64,
    pub actor: GaussianActor,
    pub critics: CriticEnsemble,
    pub checksum: u64,
}

impl PolicySnapshot {
    fn new(learner_step: u64, actor: &GaussianActor, critics: &CriticEnsemble) -> Self {
        let critics = CriticEnsemble {
            members: critics.members.clone(),
            targets: Vec::new(),
        };
        let checksum = snapshot_checksum(learner_step, actor, &critics);
        Self {
            learner_step,
            actor: actor.clone(),
            critics,
            checksum,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let expected = snapshot_checksum(self.learner_step, &self.actor, &self.critics);
        if expected == self.checksum {
            Ok(())
        } else {
            Err(Error::Numeric(format!(
                "snapshot at learner step {} failed its checksum",
                self.learner_step
            )))
        }
    }
}

fn snapshot_checksum(step: u64, actor: &GaussianActor, critics: &CriticEnsemble) -> u64 {
    let mut h = DefaultHasher::new();
    h.write_u64(step);
    for net in std::iter::once(&actor.net).chain(&critics.members) {
        h.write_usize(net.num_params());
        for p in net.params() {
            h.write_u64(p.to_bits());
        }
    }
    h.finish()
}

enum ActorMsg {
    Transitions(Vec<Transition>),
    Final(Vec<Transition>),
}

enum LearnerMsg {
    Snapshot(Box<PolicySnapshot>),
    Ack {
        learner_step: u64,
        metrics: Option<LearnerMetrics>,
    },
}

struct LearnerWorker<'a> {
    learner: Learner,
    replay: ReplayBuffer,
    bc: &'a BcPolicy,
    publish_every: u64,
    warmup: usize,
    credit: usize,
    online_received: usize,
    last_metrics: Option<LearnerMetrics>,
    snapshots: usize,
    messages: usize,
    fault_after: Option<usize>,
}

impl LearnerWorker<'_> {
    /// Handles one actor message. Returns false after the closing message.
    fn handle(&mut self, msg: ActorMsg, out: &mut dyn FnMut(LearnerMsg) -> Result<()>) -> Result<bool> {
        self.messages += 1;
        if self.fault_after.is_some_and(|n| self.messages > n) {
            return Err(Error::ChannelClosed("learner fault injected".into()));
        }
        let (batch, last) = match msg {
            ActorMsg::Transitions(b) => (b, false),
            ActorMsg::Final(b) => (b, true),
        };
        for t in batch {
            self.replay.push(t)?;
            self.online_received += 1;
            if !last {
                self.credit += 1;
            }
        }
        while self.credit > 0 {
            self.credit -= 1;
            if self.replay.len() < self.warmup {
                continue;
            }
            self.last_metrics = Some(self.learner.train_step(&self.replay, self.bc)?);
            if self.learner.learner_step.is_multiple_of(self.publish_every) {
                self.snapshots += 1;
                out(LearnerMsg::Snapshot(Box::new(PolicySnapshot::new(
                    self.learner.learner_step,
                    &self.learner.actor,
                    &self.learner.critics,
                ))))?;
            }
        }
        out(LearnerMsg::Ack {
            learner_step: self.learner.learner_step,
            metrics: self.last_metrics,
        })?;
        Ok(!last)
    }
}

#[derive(Default)]
struct Window {
    steps: usize,
    bc_steps: usize,
    q_bc_sum: f64,
    q_bc_n: usize,
    q_rl_sum: f64,
    q_rl_n: usize,
}

impl Window {
    fn mean(sum: f64, n: usize) -> f64 {
        if n == 0 {
            f64::NAN
        } else {
            sum / n as f64
        }
    }
}

struct ActorWorker<'a> {
    spec: EnvSpec,
    env: Env,
    obs: Vec<f64>,
    bc: &'a BcPolicy,
    q_bc: Option<&'a QBcEstimate>,
    acting: Acting,
    gate_cfg: GateConfig,
    eval_gate: GateConfig,
    shaper: RewardShaper,
    policy: PolicySnapshot,
    rng: ChaCha8Rng,
    eval_seed: u64,
    eval_every: usize,
    eval_episodes: usize,
    flush_every: usize,
    env_step: usize,
    pending: Vec<Transition>,
    record: bool,
    transitions: Vec<Transition>,
    gate_log: Vec<GateLogRow>,
    window: Window,
    learner_step: u64,
    learner_metrics: Option<LearnerMetrics>,
    metrics: Vec<MetricsRow>,
    evals: Vec<(usize, EvalStats)>,
    best: Option<(f64, PolicyBundle)>,
    flushes: usize,
    final_flush_len: usize,
    snapshots_applied: usize,
}

impl ActorWorker<'_> {
    fn bundle(&self, gate_cfg: GateConfig) -> PolicyBundle {
        match self.acting {
            Acting::BcOnly => PolicyBundle::Bc {
                policy: self.bc.clone(),
                use_mode: gate_cfg.bc_use_mode,
            },
            Acting::RlOnly => PolicyBundle::Rl {
                actor: self.policy.actor.clone(),
                use_mode: gate_cfg.rl_use_mode,
            },
            Acting::Gated(scoring) => PolicyBundle::Gated {
                bc: self.bc.clone(),
                actor: self.policy.actor.clone(),
                critics: self.policy.critics.clone(),
                q_bc: self.q_bc.cloned(),
                gate: GateConfig {
                    bc_scoring: scoring,
                    ..gate_cfg
                },
            },
        }
    }

    /// One environment step. Returns a batch to ship when the flush cadence is hit.
    fn step(&mut self) -> Result<Option<Vec<Transition>>> {
        let obs = self.obs.clone();
        let (action, source, q_bc, q_rl) = match self.acting {
            Acting::BcOnly => (self.bc.sample(&obs, &mut self.rng, self.gate_cfg.bc_use_mode)?, Source::Bc, f64::NAN, f64::NAN),
            Acting::RlOnly => (
                self.policy.actor.sample(&obs, &mut self.rng, self.gate_cfg.rl_use_mode)?,
                Source::Rl,
                f64::NAN,
                f64::NAN,
            ),
            Acting::Gated(scoring) => {
                let inputs = GateInputs {
                    bc: self.bc,
                    actor: &self.policy.actor,
                    critics: &self.policy.critics,
                    q_bc: self.q_bc,
                };
                let cfg = GateConfig {
                    bc_scoring: scoring,
                    ..self.gate_cfg
                };
                let d = gate(&obs, inputs, &cfg, ForcedValues::default(), &mut self.rng)?;
                (d.chosen_action, d.source, d.q_bc_value, d.q_rl_value)
            }
        };
        let r = self.env.step(&action)?;
        self.env_step += 1;
        let t = Transition {
            obs,
            action,
            reward: self.shaper.shape(r.reward),
            next_obs: r.next_obs.clone(),
            terminal: r.terminated,
            truncated: r.truncated,
            source,
        };
        self.gate_log.push(GateLogRow {
            env_step: self.env_step,
            source,
            q_bc_value: q_bc,
            q_rl_value: q_rl,
        });
        self.window.steps += 1;
        self.window.bc_steps += usize::from(source == Source::Bc);
        if q_bc.is_finite() {
            self.window.q_bc_sum += q_bc;
            self.window.q_bc_n += 1;
        }
        if q_rl.is_finite() {
            self.window.q_rl_sum += q_rl;
            self.window.q_rl_n += 1;
        }
        if self.record {
            self.transitions.push(t.clone());
        }
        self.pending.push(t);
        self.obs = if r.terminated || r.truncated {
            self.env.reset(&mut self.rng)
        } else {
            r.next_obs
        };
        if self.pending.len() == self.flush_every {
            self.flushes += 1;
            Ok(Some(std::mem::take(&mut self.pending)))
        } else {
            Ok(None)
        }
    }

    fn receive(&mut self, msg: LearnerMsg) -> Result<()> {
        match msg {
            LearnerMsg::Snapshot(s) => {
                s.validate()?;
                self.policy = *s;
                self.snapshots_applied += 1;
            }
            LearnerMsg::Ack { learner_step, metrics } => {
                self.learner_step = learner_step;
                self.learner_metrics = metrics;
            }
        }
        Ok(())
    }

    fn eval_due(&self) -> bool {
        self.env_step.is_multiple_of(self.eval_every)
    }

    fn evaluate_now(&mut self) -> Result<()> {
        let bundle = self.bundle(self.eval_gate);
        let index = self.evals.len() as u64;
        let stats = evaluate(&bundle, &self.spec, self.eval_episodes, stream_seed(self.eval_seed, index))?;
        let w = std::mem::take(&mut self.window);
        self.metrics.push(MetricsRow {
            env_step: self.env_step,
            learner_step: self.learner_step,
            eval_success: stats.success_rate,
            bc_action_fraction: if w.steps == 0 { f64::NAN } else { w.bc_steps as f64 / w.steps as f64 },
            mean_q_bc: Window::mean(w.q_bc_sum, w.q_bc_n),
            mean_q_rl: Window::mean(w.q_rl_sum, w.q_rl_n),
            critic_loss: self.learner_metrics.map_or(f64::NAN, |m| m.critic_loss),
            actor_loss: self.learner_metrics.map_or(f64::NAN, |m| m.actor_loss),
        });
        log::info!(
            "env step {} learner step {}: success {:.2}",
            self.env_step,
            self.learner_step,
            stats.success_rate
        );
        self.evals.push((self.env_step, stats));
        if self.best.as_ref().is_none_or(|(b, _)| stats.success_rate > *b) {
            self.best = Some((stats.success_rate, bundle));
        }
        Ok(())
    }
}

/// Demonstrations on the unshifted task and a BC policy trained on them.
pub fn prepare_bc(cfg: &RunConfig) -> Result<(DemoDataset, BcTrainReport)> {
    let spec = cfg.env.base_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.demos.seed);
    let demos = generate_demos(&spec, &cfg.demos.noise, cfg.demos.episodes, &mut rng)?;
    let report = train_bc(&demos, &cfg.bc)?;
    Ok((demos, report))
}

/// Collects BC rollouts, fits the value network, and assembles the estimate.
pub fn estimate_q(cfg: &RunConfig, spec: &EnvSpec, bc: &BcPolicy) -> Result<(RolloutSet, QBcEstimate, f64, f64)> {
    let rollouts = collect_rollouts(
        spec,
        bc,
        cfg.q_estimation.rollouts,
        &cfg.rl.shaper(),
        false,
        stream_seed(cfg.seed, STREAM_ROLLOUTS),
    )?;
    let mut vcfg = cfg.q_estimation.value.clone();
    vcfg.seed = stream_seed(cfg.seed ^ vcfg.seed, STREAM_VALUE);
    let fit = fit_value(&rollouts, cfg.rl.gamma, &vcfg)?;
    let est = QBcEstimate::new(fit.estimator, bc.clone(), cfg.q_estimation.alpha)?;
    Ok((rollouts, est, fit.initial_mse, fit.final_mse))
}

/// Runs the configured variant with a given BC policy and demo set.
pub fn run(cfg: &RunConfig, bc: &BcPolicy, demos: &DemoDataset) -> Result<RunArtifacts> {
    cfg.validate()?;
    let variant = cfg.variant.name;
    let spec = cfg.env.online_spec()?;
    if bc.obs_dim() != spec.obs_dim() || bc.action_dim() != spec.action_dim() {
        return Err(Error::Shape(format!(
            "BC policy dims ({}, {}) do not match env ({}, {})",
            bc.obs_dim(),
            bc.action_dim(),
            spec.obs_dim(),
            spec.action_dim()
        )));
    }
    let mut rl_cfg = cfg.rl.clone();
    if variant == Variant::RlFromScratch {
        rl_cfg.bc_loss_weight = 0.0;
    }
    let shaper = rl_cfg.shaper();
    let mut learner = Learner::new(spec.obs_dim(), spec.action_dim(), rl_cfg.clone(), stream_seed(cfg.seed, STREAM_LEARNER))?;

    let q_outputs = if variant.uses_q_estimation() {
        let (rollouts, estimate, v0, v1) = estimate_q(cfg, &spec, bc)?;
        let critic_init = if variant.uses_critic_init() {
            let (critics, opts) = learner.critics_and_opts();
            Some(init_q_rl(
                &estimate,
                &rollouts,
                critics,
                opts,
                cfg.q_estimation.init_steps,
                cfg.q_estimation.init_batch_size,
                stream_seed(cfg.seed, STREAM_QINIT),
            )?)
        } else {
            None
        };
        Some(QEstimationOutputs {
            rollouts,
            estimate,
            value_initial_mse: v0,
            value_final_mse: v1,
            critic_init,
            initial_critics: learner.critics.clone(),
        })
    } else {
        None
    };

    let mut replay = ReplayBuffer::new(rl_cfg.replay_capacity, spec.obs_dim(), spec.action_dim())?;
    if cfg.variant.seed_fraction > 0.0 && variant.learns() {
        replay.seed_from_demos(&demos.take_fraction(cfg.variant.seed_fraction), &shaper)?;
    }
    if cfg.q_estimation.rollouts_to_replay {
        if let Some(q) = &q_outputs {
            for ep in &q.rollouts.episodes {
                let last = ep.len() - 1;
                for t in 0..ep.len() {
                    replay.push(Transition {
                        obs: ep.obs[t].clone(),
                        action: ep.actions[t].clone(),
                        reward: ep.rewards[t],
                        next_obs: ep.obs[t + 1].clone(),
                        terminal: t == last && ep.terminated,
                        truncated: t == last && !ep.terminated,
                        source: Source::Bc,
                    })?;
                }
            }
        }
    }
    let replay_seeded = replay.len();

    let initial = PolicySnapshot::new(0, &learner.actor, &learner.critics);
    let mut env = Env::new(spec.clone())?;
    let mut actor_rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, STREAM_ACTOR));
    let obs = env.reset(&mut actor_rng);
    let mut actor = ActorWorker {
        spec: spec.clone(),
        env,
        obs,
        bc,
        q_bc: q_outputs.as_ref().map(|q| &q.estimate),
        acting: variant.acting(),
        gate_cfg: cfg.driver.gate,
        eval_gate: cfg.driver.eval_gate,
        shaper,
        policy: initial,
        rng: actor_rng,
        eval_seed: stream_seed(cfg.seed, STREAM_EVAL),
        eval_every: cfg.driver.eval_every,
        eval_episodes: cfg.driver.eval_episodes,
        flush_every: cfg.driver.actor_flush_every,
        env_step: 0,
        pending: Vec::new(),
        record: cfg.driver.record_transitions,
        transitions: Vec::new(),
        gate_log: Vec::new(),
        window: Window::default(),
        learner_step: 0,
        learner_metrics: None,
        metrics: Vec::new(),
        evals: Vec::new(),
        best: None,
        flushes: 0,
        final_flush_len: 0,
        snapshots_applied: 0,
    };
    let learner_worker = LearnerWorker {
        warmup: cfg.driver.warmup_transitions.max(rl_cfg.batch_size),
        learner,
        replay,
        bc,
        publish_every: cfg.driver.learner_publish_every as u64,
        credit: 0,
        online_received: 0,
        last_metrics: None,
        snapshots: 0,
        messages: 0,
        fault_after: cfg.driver.learner_fault_after,
    };
    let total = cfg.driver.total_env_steps;
    let learns = variant.learns();

    let (outcome, learner_worker) = match cfg.driver.mode {
        RunMode::Sync => run_sync(&mut actor, learner_worker, total, learns),
        RunMode::Async | RunMode::AsyncDeterministic => run_threads(
            &mut actor,
            learner_worker,
            total,
            learns,
            cfg.driver.mode == RunMode::AsyncDeterministic,
        ),
    };
    let (completed, error) = match outcome {
        Ok(()) => (true, None),
        Err(e @ Error::ChannelClosed(_)) => (false, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let final_policy = actor.bundle(actor.eval_gate);
    Ok(RunArtifacts {
        variant,
        seed: cfg.seed,
        env_steps: actor.env_step,
        learner_steps: learner_worker.learner.learner_step,
        last_learner_metrics: learner_worker.last_metrics,
        metrics: actor.metrics,
        gate_log: actor.gate_log,
        evals: actor.evals,
        transitions: actor.transitions,
        messages: MessageCounts {
            transition_batches: actor.flushes,
            snapshots: learner_worker.snapshots,
            final_flush_len: actor.final_flush_len,
        },
        replay_len: learner_worker.replay.len(),
        replay_seeded,
        replay_online: learner_worker.online_received,
        final_policy,
        best_policy: actor.best,
        completed,
        error,
        q_estimation: q_outputs,
    })
}

fn run_sync<'a>(
    actor: &mut ActorWorker<'a>,
    mut learner: LearnerWorker<'a>,
    total: usize,
    learns: bool,
) -> (Result<()>, LearnerWorker<'a>) {
    let mut inbox = Vec::new();
    let mut body = || -> Result<()> {
        while actor.env_step < total {
            if let Some(batch) = actor.step()? {
                if learns {
                    learner.handle(ActorMsg::Transitions(batch), &mut |m| {
                        inbox.push(m);
                        Ok(())
                    })?;
                    for m in inbox.drain(..) {
                        actor.receive(m)?;
                    }
                }
            }
            if actor.eval_due() {
                actor.evaluate_now()?;
            }
        }
        if learns && !actor.pending.is_empty() {
            let tail = std::mem::take(&mut actor.pending);
            actor.final_flush_len = tail.len();
            learner.handle(ActorMsg::Final(tail), &mut |m| {
                inbox.push(m);
                Ok(())
            })?;
            for m in inbox.drain(..) {
                actor.receive(m)?;
            }
        }
        Ok(())
    };
    let out = body();
    (out, learner)
}

const CHANNEL_CAPACITY: usize = 64;

fn run_threads<'a>(
    actor: &mut ActorWorker<'a>,
    mut learner: LearnerWorker<'a>,
    total: usize,
    learns: bool,
    lockstep: bool,
) -> (Result<()>, LearnerWorker<'a>) {
    if !learns {
        return run_sync(actor, learner, total, learns);
    }
    let (to_learner, learner_rx) = mpsc::sync_channel::<ActorMsg>(CHANNEL_CAPACITY);
    let (to_actor, actor_rx) = mpsc::sync_channel::<LearnerMsg>(CHANNEL_CAPACITY);
    std::thread::scope(|scope| {
        let handle = scope.spawn(move || {
            let result = learner_loop(&mut learner, learner_rx, to_actor);
            (result, learner)
        });
        let actor_result = actor_loop(actor, to_learner, &actor_rx, total, lockstep);
        // Unblock a learner that may be waiting to hand us a message.
        while actor_rx.recv().is_ok() {}
        let (learner_result, learner) = handle.join().expect("learner thread panicked");
        // A learner failure is the root cause of whatever the actor saw.
        let result = match learner_result {
            Err(e) => Err(e),
            Ok(()) => actor_result,
        };
        (result, learner)
    })
}

fn learner_loop(
    learner: &mut LearnerWorker<'_>,
    rx: Receiver<ActorMsg>,
    tx: SyncSender<LearnerMsg>,
) -> Result<()> {
    let closed = || Error::ChannelClosed("actor stopped listening".into());
    // The actor hangs up when it is done; a closing batch, if any, comes first.
    while let Ok(msg) = rx.recv() {
        if !learner.handle(msg, &mut |m| tx.send(m).map_err(|_| closed()))? {
            break;
        }
    }
    Ok(())
}

fn actor_loop(
    actor: &mut ActorWorker<'_>,
    tx: SyncSender<ActorMsg>,
    rx: &Receiver<LearnerMsg>,
    total: usize,
    lockstep: bool,
) -> Result<()> {
    let closed = || Error::ChannelClosed("learner hung up".into());
    let send = |actor: &mut ActorWorker<'_>, mut msg: ActorMsg| -> Result<()> {
        loop {
            match tx.try_send(msg) {
                Ok(()) => return Ok(()),
                Err(TrySendError::Disconnected(_)) => return Err(closed()),
                Err(TrySendError::Full(m)) => {
                    msg = m;
                    match rx.recv_timeout(Duration::from_millis(1)) {
                        Ok(reply) => actor.receive(reply)?,
                        Err(RecvTimeoutError::Timeout) => {}
                        Err(RecvTimeoutError::Disconnected) => return Err(closed()),
                    }
                }
            }
        }
    };
    let wait_for_ack = |actor: &mut ActorWorker<'_>| -> Result<()> {
        loop {
            let msg = rx.recv().map_err(|_| closed())?;
            let is_ack = matches!(msg, LearnerMsg::Ack { .. });
            actor.receive(msg)?;
            if is_ack {
                return Ok(());
            }
        }
    };
    while actor.env_step < total {
        if let Some(batch) = actor.step()? {
            send(actor, ActorMsg::Transitions(batch))?;
            if lockstep {
                wait_for_ack(actor)?;
            }
        }
        if !lockstep {
            loop {
                match rx.try_recv() {
                    Ok(m) => actor.receive(m)?,
                    Err(TryRecvError::Empty) => break,
                    Err(TryRecvError::Disconnected) => return Err(closed()),
                }
            }
        }
        if actor.eval_due() {
            actor.evaluate_now()?;
        }
    }
    let tail = std::mem::take(&mut actor.pending);
    actor.final_flush_len = tail.len();
    if !tail.is_empty() {
        send(actor, ActorMsg::Final(tail))?;
    }
    drop(tx);
    // The learner hangs up once it has handled everything we sent.
    while let Ok(msg) = rx.recv() {
        actor.receive(msg)?;
    }
    Ok(())
}

/// Where a run writes its files.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        for sub in ["checkpoints", "demos"] {
            let p = root.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }
    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }
    pub fn gate_log(&self) -> PathBuf {
        self.root.join("gate_log.csv")
    }
    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("{name}.json"))
    }
    pub fn demos(&self) -> PathBuf {
        self.root.join("demos").join("demos.jsonl")
    }
    pub fn rollouts(&self) -> PathBuf {
        self.root.join("demos").join("rollouts.jsonl")
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Input(format!("{other:?}")),
    })?;
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const METRICS_COLUMNS: [&str; 8] = [
    "env_step",
    "learner_step",
    "eval_success",
    "bc_action_fraction",
    "mean_q_bc",
    "mean_q_rl",
    "critic_loss",
    "actor_loss",
];

pub const GATE_LOG_COLUMNS: [&str; 4] = ["env_step", "source", "q_bc_value", "q_rl_value"];

/// Writes the resolved config, CSVs, demos and checkpoints of a finished run.
pub fn write_run(dir: &RunDir, cfg: &RunConfig, bc: &BcPolicy, demos: &DemoDataset, art: &RunArtifacts) -> Result<()> {
    cfg.save(&dir.config())?;
    demos.write_jsonl(&dir.demos())?;
    bc.save_json(&dir.checkpoint("bc"))?;
    write_csv(&dir.metrics(), &art.metrics, &METRICS_COLUMNS)?;
    write_csv(&dir.gate_log(), &art.gate_log, &GATE_LOG_COLUMNS)?;
    if let Some(q) = &art.q_estimation {
        q.rollouts.save(&dir.rollouts())?;
        q.estimate.value().net.save_json(&dir.checkpoint("value"))?;
        let path = dir.checkpoint("critic_init");
        std::fs::write(&path, serde_json::to_string(&q.initial_critics.to_file())?).map_err(|e| Error::io(&path, e))?;
    }
    if art.env_steps > 0 {
        art.final_policy.save_json(&dir.checkpoint("latest"))?;
        if let Some((_, best)) = &art.best_policy {
            best.save_json(&dir.checkpoint("best"))?;
        }
    }
    Ok(())
}

/// Generates demos, trains BC, runs the configured variant and, when
/// `out` is given, writes the run directory.
pub fn run_q2rl(cfg: &RunConfig, out: Option<&Path>) -> Result<(RunArtifacts, BcPolicy)> {
    let (demos, report) = prepare_bc(cfg)?;
    let art = run(cfg, &report.policy, &demos)?;
    if let Some(root) = out {
        write_run(&RunDir::create(root)?, cfg, &report.policy, &demos, &art)?;
    }
    Ok((art, report.policy))
}

/// [`run`] with the variant replaced.
pub fn run_variant(cfg: &RunConfig, variant: Variant, bc: &BcPolicy, demos: &DemoDataset) -> Result<RunArtifacts> {
    let mut cfg = cfg.clone();
    cfg.variant.name = variant;
    run(&cfg, bc, demos)
}

/// [`run`] with the asynchronous mode forced on.
pub fn run_async(cfg: &RunConfig, bc: &BcPolicy, demos: &DemoDataset, deterministic: bool) -> Result<RunArtifacts> {
    let mut cfg = cfg.clone();
    cfg.driver.mode = if deterministic {
        RunMode::AsyncDeterministic
    } else {
        RunMode::Async
    };
    run(&cfg, bc, demos)
}

/// Reads `metrics.csv` back.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Input(format!("{other:?}")),
    })?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Reads `gate_log.csv` back.
pub fn read_gate_log(path: &Path) -> Result<Vec<GateLogRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Input(format!("{other:?}")),
    })?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{EnvKind, NoiseConfig};

    fn tiny(variant: Variant) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.seed = 3;
        cfg.env.task = EnvKind::PointReach;
        cfg.demos.episodes = 10;
        cfg.demos.noise = NoiseConfig::gaussian(0.3);
        cfg.bc.hidden = vec![16];
        cfg.bc.epochs = 20;
        cfg.q_estimation.rollouts = 5;
        cfg.q_estimation.init_steps = 50;
        cfg.q_estimation.init_batch_size = 32;
        cfg.q_estimation.value.hidden = vec![16];
        cfg.q_estimation.value.steps = 50;
        cfg.q_estimation.value.batch_size = 32;
        cfg.rl.hidden = vec![16];
        cfg.rl.ensemble_size = 3;
        cfg.rl.batch_size = 32;
        cfg.rl.replay_capacity = 10_000;
        cfg.driver.total_env_steps = 200;
        cfg.driver.eval_every = 100;
        cfg.driver.eval_episodes = 2;
        cfg.driver.record_transitions = true;
        cfg.variant.name = variant;
        cfg
    }

    fn bits(rows: &[MetricsRow]) -> Vec<Vec<u64>> {
        rows.iter()
            .map(|m| {
                vec![
                    m.env_step as u64,
                    m.learner_step,
                    m.eval_success.to_bits(),
                    m.bc_action_fraction.to_bits(),
                    m.mean_q_bc.to_bits(),
                    m.mean_q_rl.to_bits(),
                    m.critic_loss.to_bits(),
                    m.actor_loss.to_bits(),
                ]
            })
            .collect()
    }

    #[test]
    fn lockstep_async_reproduces_sync() {
        let cfg = tiny(Variant::Full);
        let (demos, report) = prepare_bc(&cfg).unwrap();
        let sync = run(&cfg, &report.policy, &demos).unwrap();
        let lock = run_async(&cfg, &report.policy, &demos, true).unwrap();
        assert!(sync.completed && lock.completed);
        assert_eq!(sync.transitions.len(), 200);
        assert_eq!(sync.transitions, lock.transitions);
        assert_eq!(sync.gate_log.len(), lock.gate_log.len());
        assert_eq!(bits(&sync.metrics), bits(&lock.metrics));
        assert_eq!(sync.learner_steps, lock.learner_steps);
        assert_eq!(sync.messages, lock.messages);
        assert_eq!(sync.messages.transition_batches, 200 / 30);
        assert_eq!(sync.messages.final_flush_len, 200 % 30);
        assert_eq!(sync.messages.snapshots as u64, sync.learner_steps / 30);
        assert!(sync.learner_steps > 0);
        assert_eq!(sync.replay_online, 200);
        assert_eq!(sync.replay_len, sync.replay_seeded + 200);
    }

    #[test]
    fn free_running_async_finishes_with_the_same_counts() {
        let cfg = tiny(Variant::NoQinit);
        let (demos, report) = prepare_bc(&cfg).unwrap();
        let art = run_async(&cfg, &report.policy, &demos, false).unwrap();
        assert!(art.completed, "{:?}", art.error);
        assert_eq!(art.env_steps, 200);
        assert_eq!(art.replay_online, 200);
        assert_eq!(art.messages.transition_batches, 6);
        assert_eq!(art.messages.snapshots as u64, art.learner_steps / 30);
        assert_eq!(art.metrics.len(), 2);
    }

    #[test]
    fn learner_failure_shuts_down_with_partial_artifacts() {
        for mode in [RunMode::Sync, RunMode::Async, RunMode::AsyncDeterministic] {
            let mut cfg = tiny(Variant::IbrlStyle);
            cfg.driver.mode = mode;
            cfg.driver.learner_fault_after = Some(2);
            let (demos, report) = prepare_bc(&cfg).unwrap();
            let art = run(&cfg, &report.policy, &demos).unwrap();
            assert!(!art.completed, "{mode:?}");
            assert!(art.error.as_deref().unwrap().contains("fault"), "{:?}", art.error);
            // A free-running actor may finish before the learner reaches the fault.
            let cap = if mode == RunMode::Async { 200 } else { 199 };
            assert!(art.env_steps >= 60 && art.env_steps <= cap, "{mode:?}: {}", art.env_steps);
        }
    }

    #[test]
    fn zero_budget_writes_only_q_estimation_outputs() {
        let mut cfg = tiny(Variant::Full);
        cfg.driver.total_env_steps = 0;
        let dir = tempfile::tempdir().unwrap();
        let (art, _) = run_q2rl(&cfg, Some(dir.path())).unwrap();
        assert!(art.metrics.is_empty() && art.gate_log.is_empty());
        assert!(art.q_estimation.is_some());
        let rd = RunDir { root: dir.path().into() };
        assert!(rd.checkpoint("value").exists());
        assert!(rd.checkpoint("critic_init").exists());
        assert!(!rd.checkpoint("latest").exists());
        assert!(read_metrics(&rd.metrics()).unwrap().is_empty());
        assert_eq!(RunConfig::load(&rd.config()).unwrap(), cfg);
    }

    #[test]
    fn single_source_variants() {
        let cfg = tiny(Variant::BcOnly);
        let (demos, report) = prepare_bc(&cfg).unwrap();
        let bc_only = run(&cfg, &report.policy, &demos).unwrap();
        assert_eq!(bc_only.learner_steps, 0);
        assert!(bc_only.q_estimation.is_none());
        assert!(bc_only.gate_log.iter().all(|g| g.source == Source::Bc));
        assert!(bc_only.metrics.iter().all(|m| m.bc_action_fraction == 1.0));
        let scratch = run_variant(&cfg, Variant::RlFromScratch, &report.policy, &demos).unwrap();
        assert!(scratch.gate_log.iter().all(|g| g.source == Source::Rl));
        assert!(scratch.learner_steps > 0);
    }

    #[test]
    fn run_dir_round_trips() {
        let cfg = tiny(Variant::Full);
        let dir = tempfile::tempdir().unwrap();
        let (art, _) = run_q2rl(&cfg, Some(dir.path())).unwrap();
        let rd = RunDir { root: dir.path().into() };
        assert_eq!(bits(&read_metrics(&rd.metrics()).unwrap()), bits(&art.metrics));
        let log = read_gate_log(&rd.gate_log()).unwrap();
        assert_eq!(log.len(), 200);
        assert_eq!(log[5].source, art.gate_log[5].source);
        let latest = PolicyBundle::load_json(&rd.checkpoint("latest")).unwrap();
        assert_eq!(latest, art.final_policy);
        assert!(rd.checkpoint("best").exists());
        let header = std::fs::read_to_string(rd.metrics()).unwrap();
        assert!(header.starts_with(&METRICS_COLUMNS.join(",")));
    }

    #[test]
    fn variant_names() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        let err = "gated".parse::<Variant>().unwrap_err();
        assert!(err.to_string().contains("gated") && err.to_string().contains("ibrl_style"));
    }

    #[test]
    fn teacher_policy_evaluates_perfectly() {
        let spec = EnvSpec::point_reach();
        let teacher = PolicyBundle::Bc {
            policy: BcPolicy::scripted(spec.clone(), NoiseConfig::none()),
            use_mode: true,
        };
        let stats = evaluate(&teacher, &spec, 20, 1).unwrap();
        assert_eq!(stats.success_rate, 1.0);
        assert_eq!(stats.bc_action_fraction, 1.0);
    }
}
