//! Strict JSON run configuration. Unknown keys are rejected and every field
//! has a default, so an empty document is a complete configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bc::BcConfig;
use crate::driver::{DriverConfig, Variant};
use crate::envs::{shift_variant, EnvKind, EnvSpec, NoiseConfig, SlotShift};
use crate::error::{Error, Result};
use crate::q_estimation::ValueFitConfig;
use crate::sac::RlConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub task: EnvKind,
    /// Overrides the built-in geometry for `task` when present.
    pub spec: Option<EnvSpec>,
    /// Task shift applied to the online environment (SlotInsert only).
    pub shift: Option<SlotShift>,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self {
            task: EnvKind::SlotInsert,
            spec: None,
            shift: None,
        }
    }
}

impl EnvSection {
    /// The environment demonstrations and BC training see.
    pub fn base_spec(&self) -> EnvSpec {
        self.spec.clone().unwrap_or_else(|| EnvSpec::for_kind(self.task))
    }

    /// The environment used online, with the shift applied.
    pub fn online_spec(&self) -> Result<EnvSpec> {
        let base = self.base_spec();
        match &self.shift {
            Some(s) => shift_variant(&base, s),
            None => Ok(base),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemoSection {
    pub episodes: usize,
    pub noise: NoiseConfig,
    pub seed: u64,
}

impl Default for DemoSection {
    fn default() -> Self {
        Self {
            episodes: 50,
            noise: NoiseConfig::gaussian(DEFAULT_TEACHER_NOISE),
            seed: 0,
        }
    }
}

/// Teacher noise (normalized action units) that puts stochastic BC on
/// SlotInsert inside the 40-70% success band.
pub const DEFAULT_TEACHER_NOISE: f64 = 3.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QEstimationSection {
    pub rollouts: usize,
    pub alpha: f64,
    /// Supervised critic-initialization steps.
    pub init_steps: usize,
    pub init_batch_size: usize,
    pub value: ValueFitConfig,
    /// Push the rollouts into the online replay buffer as well.
    pub rollouts_to_replay: bool,
}

impl Default for QEstimationSection {
    fn default() -> Self {
        Self {
            rollouts: 100,
            alpha: 1.0,
            init_steps: 20_000,
            init_batch_size: 256,
            value: ValueFitConfig::default(),
            rollouts_to_replay: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VariantSection {
    pub name: Variant,
    /// Fraction of demonstration episodes copied into the replay buffer.
    pub seed_fraction: f64,
}

impl Default for VariantSection {
    fn default() -> Self {
        Self {
            name: Variant::Full,
            seed_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub env: EnvSection,
    pub demos: DemoSection,
    pub bc: BcConfig,
    pub q_estimation: QEstimationSection,
    pub rl: RlConfig,
    pub driver: DriverConfig,
    pub variant: VariantSection,
}

impl RunConfig {
    /// Parses a JSON document. Errors name the offending key.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.env.online_spec()?.validate()?;
        self.rl.validate()?;
        self.driver.validate()?;
        if !(0.0..=1.0).contains(&self.variant.seed_fraction) {
            return Err(Error::Config(format!(
                "variant.seed_fraction must lie in [0, 1], got {}",
                self.variant.seed_fraction
            )));
        }
        if !(self.q_estimation.alpha > 0.0) {
            return Err(Error::Config("q_estimation.alpha must be positive".into()));
        }
        Ok(())
    }

    /// Small networks and budgets that run on one CPU core in about two
    /// minutes per run (2000 environment steps, evaluated every 200). The
    /// algorithmic constants (UTD, ensemble size, subsample size, discount,
    /// target rate, reward shaping, alpha) keep their defaults.
    pub fn desk() -> Self {
        let mut cfg = Self::default();
        cfg.rl.hidden = vec![64, 64];
        cfg.rl.batch_size = 128;
        cfg.rl.replay_capacity = 200_000;
        cfg.q_estimation.init_steps = 3000;
        cfg.q_estimation.init_batch_size = 128;
        cfg.q_estimation.value = ValueFitConfig {
            hidden: vec![64, 64],
            steps: 3000,
            batch_size: 128,
            ..ValueFitConfig::default()
        };
        cfg.driver.total_env_steps = 2000;
        cfg.driver.eval_every = 200;
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults_and_round_trips() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        let desk = RunConfig::desk();
        assert_eq!(RunConfig::from_json(&desk.to_json()).unwrap(), desk);
    }

    #[test]
    fn known_and_unknown_keys() {
        let cfg = RunConfig::from_json(r#"{"rl": {"utd": 4}}"#).unwrap();
        assert_eq!(cfg.rl.utd, 4);
        let err = RunConfig::from_json(r#"{"rl": {"utd_ratio": 4}}"#).unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("utd_ratio")), "{err}");
        let err = RunConfig::from_json(r#"{"rl": {"utd": "four"}}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = RunConfig::from_json(r#"{"variant": {"name": "nope"}}"#).unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("nope")), "{err}");
    }

    #[test]
    fn table_values_are_defaults() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.rl.batch_size, 256);
        assert_eq!(cfg.rl.hidden, vec![512, 512, 512]);
        assert_eq!((cfg.rl.actor_lr, cfg.rl.critic_lr), (3e-4, 3e-4));
        assert_eq!((cfg.rl.reward_scale, cfg.rl.reward_bias), (5.0, -1.0));
        assert_eq!(cfg.q_estimation.rollouts, 100);
        assert_eq!(cfg.q_estimation.init_steps, 20_000);
        assert_eq!((cfg.rl.utd, cfg.rl.ensemble_size, cfg.rl.subsample), (4, 10, 2));
        assert_eq!((cfg.rl.gamma, cfg.rl.tau), (0.99, 0.005));
        assert!(cfg.rl.layer_norm);
        assert_eq!(cfg.rl.replay_capacity, 2_000_000);
        assert_eq!(cfg.driver.eval_episodes, 20);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(RunConfig::load(Path::new("/nonexistent/cfg.json")), Err(Error::Io { .. })));
    }
}
