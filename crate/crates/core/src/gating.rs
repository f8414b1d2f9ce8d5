//! Per-step choice between the BC proposal and the RL proposal.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bc::BcPolicy;
use crate::error::{Error, Result};
use crate::q_estimation::QBcEstimate;
use crate::replay::Source;
use crate::sac::{CriticAggregate, CriticEnsemble, GaussianActor};

/// How the BC proposal is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcScoring {
    /// The frozen estimate of the BC policy's own Q-function.
    QBc,
    /// The same trainable critic that scores the RL proposal.
    SharedCritic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateConfig {
    pub bc_scoring: BcScoring,
    pub aggregate: CriticAggregate,
    pub bc_use_mode: bool,
    pub rl_use_mode: bool,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            bc_scoring: BcScoring::QBc,
            aggregate: CriticAggregate::Mean,
            bc_use_mode: false,
            rl_use_mode: false,
        }
    }
}

/// Test hook that replaces either score with a fixed value.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ForcedValues {
    pub q_bc: Option<f64>,
    pub q_rl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub chosen_action: Vec<f64>,
    pub source: Source,
    pub q_bc_value: f64,
    pub q_rl_value: f64,
    pub a_bc: Vec<f64>,
    pub a_rl: Vec<f64>,
}

/// The BC action wins only on a strict `q_bc > q_rl`; ties go to RL.
pub fn decide(q_bc: f64, q_rl: f64, a_bc: Vec<f64>, a_rl: Vec<f64>) -> Result<GateDecision> {
    if q_bc.is_nan() || q_rl.is_nan() {
        return Err(Error::Numeric(format!("gate scores q_bc={q_bc}, q_rl={q_rl}")));
    }
    let source = if q_bc > q_rl { Source::Bc } else { Source::Rl };
    let chosen_action = match source {
        Source::Bc => a_bc.clone(),
        _ => a_rl.clone(),
    };
    Ok(GateDecision {
        chosen_action,
        source,
        q_bc_value: q_bc,
        q_rl_value: q_rl,
        a_bc,
        a_rl,
    })
}

/// Everything the gate reads. `q_bc` may be absent when BC actions are scored
/// by the shared critic.
#[derive(Debug, Clone, Copy)]
pub struct GateInputs<'a> {
    pub bc: &'a BcPolicy,
    pub actor: &'a GaussianActor,
    pub critics: &'a CriticEnsemble,
    pub q_bc: Option<&'a QBcEstimate>,
}

/// Draws both proposals, scores them and picks one.
pub fn gate<R: Rng + ?Sized>(
    obs: &[f64],
    inputs: GateInputs<'_>,
    cfg: &GateConfig,
    forced: ForcedValues,
    rng: &mut R,
) -> Result<GateDecision> {
    let a_bc = inputs.bc.sample(obs, rng, cfg.bc_use_mode)?;
    let a_rl = inputs.actor.sample(obs, rng, cfg.rl_use_mode)?;
    let q_bc = match forced.q_bc {
        Some(v) => v,
        None => {
            let v = match cfg.bc_scoring {
                BcScoring::QBc => inputs
                    .q_bc
                    .ok_or_else(|| Error::Config("gating with q_bc scoring needs a Q estimate".into()))?
                    .q_bc(obs, &a_bc)?,
                BcScoring::SharedCritic => inputs.critics.aggregate(obs, &a_bc, cfg.aggregate)?,
            };
            finite_score(v, "q_bc", obs, &a_bc)?
        }
    };
    let q_rl = match forced.q_rl {
        Some(v) => v,
        None => finite_score(inputs.critics.aggregate(obs, &a_rl, cfg.aggregate)?, "q_rl", obs, &a_rl)?,
    };
    decide(q_bc, q_rl, a_bc, a_rl)
}

fn finite_score(v: f64, what: &str, obs: &[f64], action: &[f64]) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("{what} = {v} at obs {obs:?}, action {action:?}")))
    }
}
