use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use q2rl_core::bc::{generate_demos, train_bc, BcPolicy, DemoDataset};
use q2rl_core::config::RunConfig;
use q2rl_core::driver::{self, evaluate, read_metrics, PolicyBundle, RunDir, Variant};

#[derive(Parser)]
#[command(name = "q2rl", version, about = "BC-seeded, Q-gated online reinforcement learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; omitted keys take their defaults.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration to start from when no --config is given.
    #[arg(long, value_enum, default_value = "default")]
    preset: Preset,
    /// Overrides the run seed, the demo seed and the BC seed together.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "Q2RL_OUT", default_value = "runs")]
    out: PathBuf,
}

/// `desk` shrinks the networks and the budget so a run fits in a few minutes on one core.
#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    Desk,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, self.preset) {
            (Some(p), _) => RunConfig::load(p)?,
            (None, Preset::Default) => RunConfig::default(),
            (None, Preset::Desk) => RunConfig::desk(),
        };
        if let Some(seed) = self.seed {
            reseed(&mut cfg, seed);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn reseed(cfg: &mut RunConfig, seed: u64) {
    cfg.seed = seed;
    cfg.demos.seed = seed;
    cfg.bc.seed = seed;
}

#[derive(Subcommand)]
enum Command {
    /// Roll out the noisy scripted teacher and write demos/demos.jsonl.
    GenDemos(Common),
    /// Train the BC policy and write checkpoints/bc.json.
    TrainBc {
        #[command(flatten)]
        common: Common,
        /// Demonstrations to train on (generated from the config when absent).
        #[arg(long)]
        demos: Option<PathBuf>,
    },
    /// Roll out a BC policy, fit its value function and write both.
    EstimateQ {
        #[command(flatten)]
        common: Common,
        /// BC checkpoint to estimate.
        #[arg(long)]
        bc: PathBuf,
    },
    /// Full run: demos, BC, Q-estimation and online learning.
    Train {
        #[command(flatten)]
        common: Common,
        /// Overrides the configured variant.
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Evaluate a stored policy bundle without learning.
    Eval {
        /// Bundle file (checkpoints/latest.json, checkpoints/best.json or a BC checkpoint).
        #[arg(long)]
        bundle: PathBuf,
        /// Config that names the environment. Defaults to the run's config.json
        /// when the bundle lives in a run directory.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// One training run per (variant, seed fraction, seed).
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated variant names.
        #[arg(long, value_delimiter = ',', default_value = "full")]
        variant: Vec<Variant>,
        /// Number of seeds, counting up from --seed (or 0).
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Comma-separated replay seeding fractions (the config value when absent).
        #[arg(long, value_delimiter = ',')]
        seed_fractions: Vec<f64>,
    },
    /// Flatten the metrics of every run under a directory into one long CSV.
    Export {
        /// Directory holding run directories (searched recursively).
        #[arg(long)]
        runs: PathBuf,
        /// Output CSV for evaluation rows.
        #[arg(long)]
        out: PathBuf,
        /// Optional output CSV for the per-step gate logs.
        #[arg(long)]
        gate_out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenDemos(common) => gen_demos(&common),
        Command::TrainBc { common, demos } => cmd_train_bc(&common, demos.as_deref()),
        Command::EstimateQ { common, bc } => estimate_q(&common, &bc),
        Command::Train { common, variant } => {
            let mut cfg = common.load()?;
            if let Some(v) = variant {
                cfg.variant.name = v;
            }
            train_one(&cfg, &common.out)
        }
        Command::Eval {
            bundle,
            config,
            episodes,
            seed,
        } => eval(&bundle, config.as_deref(), episodes, seed),
        Command::Sweep {
            common,
            variant,
            seeds,
            seed_fractions,
        } => sweep(&common, &variant, seeds, &seed_fractions),
        Command::Export { runs, out, gate_out } => export(&runs, &out, gate_out.as_deref()),
    }
}

fn gen_demos(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let dir = RunDir::create(&common.out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.demos.seed);
    let demos = generate_demos(&cfg.env.base_spec(), &cfg.demos.noise, cfg.demos.episodes, &mut rng)?;
    demos.write_jsonl(&dir.demos())?;
    cfg.save(&dir.config())?;
    let successes = demos.trajectories.iter().filter(|t| t.terminated).count();
    println!(
        "wrote {} episodes ({} transitions, {} successful) to {}",
        demos.trajectories.len(),
        demos.num_transitions(),
        successes,
        dir.demos().display()
    );
    Ok(())
}

fn cmd_train_bc(common: &Common, demos_path: Option<&Path>) -> Result<()> {
    let cfg = common.load()?;
    let dir = RunDir::create(&common.out)?;
    let demos = match demos_path {
        Some(p) => DemoDataset::read_jsonl(p)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.demos.seed);
            let d = generate_demos(&cfg.env.base_spec(), &cfg.demos.noise, cfg.demos.episodes, &mut rng)?;
            d.write_jsonl(&dir.demos())?;
            d
        }
    };
    let report = train_bc(&demos, &cfg.bc)?;
    let path = dir.checkpoint("bc");
    report.policy.save_json(&path)?;
    cfg.save(&dir.config())?;
    let bundle = PolicyBundle::Bc {
        policy: report.policy,
        use_mode: false,
    };
    let stats = evaluate(&bundle, &cfg.env.base_spec(), cfg.driver.eval_episodes, cfg.seed)?;
    println!(
        "final train NLL {:.4}, best epoch {}, success {:.3} over {} episodes; wrote {}",
        report.train_nll.last().copied().unwrap_or(f64::NAN),
        report.best_epoch,
        stats.success_rate,
        stats.episodes,
        path.display()
    );
    Ok(())
}

fn estimate_q(common: &Common, bc_path: &Path) -> Result<()> {
    let cfg = common.load()?;
    let bc = BcPolicy::load_json(bc_path)?;
    let dir = RunDir::create(&common.out)?;
    let spec = cfg.env.online_spec()?;
    let (rollouts, est, initial_mse, final_mse) = driver::estimate_q(&cfg, &spec, &bc)?;
    rollouts.save(&dir.rollouts())?;
    est.value().net.save_json(&dir.checkpoint("value"))?;
    cfg.save(&dir.config())?;
    println!(
        "{} rollouts, success {:.3}; value MSE {:.4} -> {:.4}",
        rollouts.episodes.len(),
        rollouts.success_rate(),
        initial_mse,
        final_mse
    );
    Ok(())
}

fn train_one(cfg: &RunConfig, out: &Path) -> Result<()> {
    log::info!("training {} (seed {}) into {}", cfg.variant.name, cfg.seed, out.display());
    let (art, _) = driver::run_q2rl(cfg, Some(out))?;
    let last = art.metrics.last();
    println!(
        "{} seed {}: {} env steps, {} learner steps, final success {}, best {}; run dir {}",
        art.variant,
        art.seed,
        art.env_steps,
        art.learner_steps,
        last.map_or("n/a".into(), |m| format!("{:.3}", m.eval_success)),
        art.best_policy.as_ref().map_or("n/a".into(), |(s, _)| format!("{s:.3}")),
        out.display()
    );
    if let Some(err) = art.error {
        bail!("run stopped early: {err}");
    }
    Ok(())
}

fn eval(bundle_path: &Path, config: Option<&Path>, episodes: usize, seed: u64) -> Result<()> {
    if !bundle_path.exists() {
        bail!("{}: no such bundle", bundle_path.display());
    }
    let bundle = match PolicyBundle::load_json(bundle_path) {
        Ok(b) => b,
        Err(_) => PolicyBundle::Bc {
            policy: BcPolicy::load_json(bundle_path)
                .with_context(|| format!("{} is neither a policy bundle nor a BC checkpoint", bundle_path.display()))?,
            use_mode: false,
        },
    };
    let cfg_path = config.map(Path::to_path_buf).or_else(|| {
        let candidate = bundle_path.parent()?.parent()?.join("config.json");
        candidate.exists().then_some(candidate)
    });
    let cfg = match cfg_path {
        Some(p) => RunConfig::load(&p)?,
        None => RunConfig::default(),
    };
    let stats = evaluate(&bundle, &cfg.env.online_spec()?, episodes, seed)?;
    println!("{}", serde_json::to_string(&stats)?);
    Ok(())
}

fn sweep(common: &Common, variants: &[Variant], seeds: u64, fractions: &[f64]) -> Result<()> {
    let base = common.load()?;
    let first_seed = common.seed.unwrap_or(0);
    let fractions: Vec<Option<f64>> = if fractions.is_empty() {
        vec![None]
    } else {
        fractions.iter().copied().map(Some).collect()
    };
    for &variant in variants {
        for &fraction in &fractions {
            for seed in first_seed..first_seed + seeds {
                let mut cfg = base.clone();
                cfg.variant.name = variant;
                if let Some(f) = fraction {
                    cfg.variant.seed_fraction = f;
                }
                reseed(&mut cfg, seed);
                cfg.validate()?;
                let name = match fraction {
                    Some(f) => format!("{variant}_sf{f}_seed{seed}"),
                    None => format!("{variant}_seed{seed}"),
                };
                train_one(&cfg, &common.out.join(name))?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ExportRow<'a> {
    run_id: &'a str,
    variant: Variant,
    seed: u64,
    seed_fraction: f64,
    env_step: usize,
    learner_step: u64,
    eval_success: f64,
    bc_action_fraction: f64,
    mean_q_bc: f64,
    mean_q_rl: f64,
    critic_loss: f64,
    actor_loss: f64,
}

#[derive(Serialize)]
struct GateExportRow<'a> {
    run_id: &'a str,
    variant: Variant,
    seed: u64,
    seed_fraction: f64,
    env_step: usize,
    source: &'static str,
    q_bc_value: f64,
    q_rl_value: f64,
}

fn find_runs(root: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if root.join("config.json").is_file() && root.join("metrics.csv").is_file() {
        out.push(root.to_path_buf());
        return Ok(());
    }
    let mut children: Vec<_> = std::fs::read_dir(root)
        .with_context(|| format!("{}: cannot read run directory", root.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    children.sort();
    for c in children {
        find_runs(&c, out)?;
    }
    Ok(())
}

fn export(root: &Path, out: &Path, gate_out: Option<&Path>) -> Result<()> {
    let mut runs = Vec::new();
    find_runs(root, &mut runs)?;
    if runs.is_empty() {
        bail!("{}: no run directories found", root.display());
    }
    let mut w = csv::Writer::from_path(out).with_context(|| format!("{}", out.display()))?;
    let mut gw = match gate_out {
        Some(p) => Some(csv::Writer::from_path(p).with_context(|| format!("{}", p.display()))?),
        None => None,
    };
    let mut rows = 0usize;
    for run in &runs {
        let dir = RunDir { root: run.clone() };
        let cfg = RunConfig::load(&dir.config())?;
        let run_id = run.strip_prefix(root).unwrap_or(run).to_string_lossy().into_owned();
        for m in read_metrics(&dir.metrics())? {
            w.serialize(ExportRow {
                run_id: &run_id,
                variant: cfg.variant.name,
                seed: cfg.seed,
                seed_fraction: cfg.variant.seed_fraction,
                env_step: m.env_step,
                learner_step: m.learner_step,
                eval_success: m.eval_success,
                bc_action_fraction: m.bc_action_fraction,
                mean_q_bc: m.mean_q_bc,
                mean_q_rl: m.mean_q_rl,
                critic_loss: m.critic_loss,
                actor_loss: m.actor_loss,
            })?;
            rows += 1;
        }
        if let Some(gw) = gw.as_mut() {
            for g in driver::read_gate_log(&dir.gate_log())? {
                gw.serialize(GateExportRow {
                    run_id: &run_id,
                    variant: cfg.variant.name,
                    seed: cfg.seed,
                    seed_fraction: cfg.variant.seed_fraction,
                    env_step: g.env_step,
                    source: g.source.as_str(),
                    q_bc_value: g.q_bc_value,
                    q_rl_value: g.q_rl_value,
                })?;
            }
        }
    }
    w.flush()?;
    if let Some(mut gw) = gw {
        gw.flush()?;
    }
    println!("exported {rows} evaluation rows from {} runs to {}", runs.len(), out.display());
    Ok(())
}
