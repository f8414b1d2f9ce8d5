//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Runs as a plain program so the report is always printed. Set
//! `Q2RL_ACCEPTANCE_STRICT=1` to turn any FAIL into a nonzero exit. By default
//! only the exact oracle criteria (1-6 and 11) are enforced, because the
//! comparative learning criteria are empirical and are reported as measured.
//! `Q2RL_ACCEPTANCE_QUICK=1` skips the end-to-end learning runs (7-10, 12).

use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use q2rl_core::bc::{nll_loss_and_grad, BcModel, BcPolicy, DemoDataset, HeadKind, Trajectory};
use q2rl_core::config::RunConfig;
use q2rl_core::distributions::{DiagGaussian, Gmm};
use q2rl_core::driver::{evaluate, prepare_bc, run, run_async, PolicyBundle, RunArtifacts, RunMode, Variant};
use q2rl_core::envs::SlotShift;
use q2rl_core::gating::{decide, gate, BcScoring, ForcedValues, GateConfig, GateInputs};
use q2rl_core::nn::{Mlp, MlpSpec};
use q2rl_core::q_estimation::{monte_carlo_returns, value_loss_and_grad, QBcEstimate, ValueEstimator};
use q2rl_core::replay::Source;
use q2rl_core::sac::{
    actor_loss_and_grad, critic_input, critic_loss_and_grad, BcTargets, CriticEnsemble, GaussianActor, RewardShaper,
    RlConfig,
};

struct Verdict {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

// ---------------------------------------------------------------- oracles

/// Constant diagonal Gaussian policy: the trunk is zeroed so the head is its bias.
fn constant_policy(obs_dim: usize, mu: &[f64], log_sigma: &[f64]) -> BcPolicy {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut p = BcPolicy::new_network(obs_dim, mu.len(), &[4], HeadKind::Gaussian, 1, &mut rng).unwrap();
    let BcModel::Network { trunk, .. } = &mut p.model else { unreachable!() };
    trunk.params_mut().fill(0.0);
    let last = trunk.num_layers() - 1;
    let b = trunk.layer_bias_mut(last);
    b[..mu.len()].copy_from_slice(mu);
    b[mu.len()..].copy_from_slice(log_sigma);
    p
}

fn constant_value(obs_dim: usize, v: f64) -> ValueEstimator {
    let mut net = Mlp::zeros(MlpSpec::with_hidden(obs_dim, &[4], 1, true)).unwrap();
    let last = net.num_layers() - 1;
    net.layer_bias_mut(last)[0] = v;
    ValueEstimator { net }
}

/// Q(s, a) = c - 1/2 sum_i p_i (a_i - m_i)^2 induces the Boltzmann policy
/// N(m, diag(1/p)) at alpha = 1, whose expected Q is c - d/2. Rebuilding Q
/// from that policy and value must give back the quadratic.
fn criterion_1() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d = rng.random_range(1..=3);
        let c: f64 = rng.random_range(-20.0..20.0);
        let m: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..20.0)).collect();
        let log_sigma: Vec<f64> = p.iter().map(|pi: &f64| -0.5 * pi.ln()).collect();
        let est = QBcEstimate::new(
            constant_value(3, c - d as f64 / 2.0),
            constant_policy(3, &m, &log_sigma),
            1.0,
        )
        .unwrap();
        for _ in 0..10 {
            let obs: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let q = c - 0.5 * (0..d).map(|i| p[i] * (a[i] - m[i]).powi(2)).sum::<f64>();
            worst = worst.max((est.q_bc(&obs, &a).unwrap() - q).abs());
        }
    }
    let el = t0.elapsed();
    Verdict {
        id: 1,
        name: "Boltzmann recovery oracle",
        pass: worst <= 1e-9 && el < Duration::from_secs(1),
        detail: format!("max |Q_hat - Q| = {worst:.2e} (tol 1e-9) over 100 quadratics x 10 points; {}", secs(el)),
    }
}

/// Composite Simpson over [lo, hi] with n (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + i as f64 * h);
    }
    s * h / 3.0
}

fn criterion_2() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_mass, mut worst_logp, mut worst_h) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let mu = rng.random_range(-2.0..2.0);
        let ls = rng.random_range(-3.0..1.5);
        let g = DiagGaussian::new(vec![mu], vec![ls]).unwrap();
        let s = ls.exp();
        let (lo, hi) = (mu - 14.0 * s, mu + 14.0 * s);
        let pdf = |x: f64| g.log_prob(&[x]).unwrap().exp();
        let mass = simpson(pdf, lo, hi, 20_000);
        let h = simpson(|x| -pdf(x) * g.log_prob(&[x]).unwrap(), lo, hi, 20_000);
        worst_mass = worst_mass.max((mass - 1.0).abs());
        worst_h = worst_h.max((h - g.entropy()).abs());
        // The log density is the log of the integrand that integrates to one.
        for _ in 0..5 {
            let x = mu + s * rng.random_range(-4.0..4.0);
            let direct = -0.5 * ((x - mu) / s).powi(2) - ls - 0.5 * (2.0 * std::f64::consts::PI).ln();
            worst_logp = worst_logp.max((g.log_prob(&[x]).unwrap() - direct - mass.ln()).abs());
        }
    }
    let mut worst_gap = f64::INFINITY;
    for _ in 0..50 {
        let k = rng.random_range(2..=5);
        let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let comps: Vec<DiagGaussian> = (0..k)
            .map(|_| DiagGaussian::new(vec![rng.random_range(-2.0..2.0)], vec![rng.random_range(-2.5..0.5)]).unwrap())
            .collect();
        let lo = comps.iter().map(|c| c.mu[0] - 14.0 * c.log_sigma[0].exp()).fold(f64::INFINITY, f64::min);
        let hi = comps.iter().map(|c| c.mu[0] + 14.0 * c.log_sigma[0].exp()).fold(f64::NEG_INFINITY, f64::max);
        let gmm = Gmm::new(weights.iter().map(|w| w / total).collect(), comps).unwrap();
        let h = simpson(
            |x| {
                let lp = gmm.log_prob(&[x]).unwrap();
                -lp.exp() * lp
            },
            lo,
            hi,
            100_000,
        );
        worst_gap = worst_gap.min(gmm.entropy_upper() - h);
    }
    let el = t0.elapsed();
    Verdict {
        id: 2,
        name: "closed forms vs quadrature",
        pass: worst_mass <= 1e-6
            && worst_logp <= 1e-6
            && worst_h <= 1e-6
            && worst_gap >= -1e-4
            && el < Duration::from_secs(30),
        detail: format!(
            "Gaussian: |mass-1| {worst_mass:.1e}, log-prob {worst_logp:.1e}, entropy {worst_h:.1e} (tol 1e-6); \
             GMM min(upper - H) {worst_gap:.3e} (>= -1e-4); {}",
            secs(el)
        ),
    }
}

/// Norm-wise relative error between an analytic gradient and central differences.
fn fd_check(params: &[f64], grad: &[f64], mut loss_at: impl FnMut(&[f64]) -> f64) -> f64 {
    let h = 1e-5;
    let mut p = params.to_vec();
    let mut fd = vec![0.0; p.len()];
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = loss_at(&p);
        p[i] = orig - h;
        let down = loss_at(&p);
        p[i] = orig;
        fd[i] = (up - down) / (2.0 * h);
    }
    let diff: f64 = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale = grad.iter().map(|a| a * a).sum::<f64>().sqrt().max(fd.iter().map(|a| a * a).sum::<f64>().sqrt());
    diff / scale.max(1e-12)
}

fn randn(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

fn criterion_3() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (obs_dim, act_dim, n) = (4, 2, 8);
    let obs = randn(n, obs_dim, 0.7, &mut rng);
    let mut results = Vec::new();

    // Critic TD regression.
    let critics = CriticEnsemble::new(obs_dim, act_dim, &[8, 8], 3, true, &mut rng).unwrap();
    let input = critic_input(obs.view(), randn(n, act_dim, 0.4, &mut rng).view());
    let targets = Array1::from_shape_fn(n, |_| rng.random_range(-3.0..3.0));
    let critic = &critics.members[0];
    let (_, g) = critic_loss_and_grad(critic, input.view(), &targets).unwrap();
    let spec = critic.spec().clone();
    results.push((
        "critic",
        fd_check(critic.params(), &g, |p| {
            let m = Mlp::from_params(spec.clone(), p.to_vec()).unwrap();
            critic_loss_and_grad(&m, input.view(), &targets).unwrap().0
        }),
    ));

    // Actor: Q term through all members, entropy term and masked BC term.
    let mut actor = GaussianActor::new(obs_dim, act_dim, &[8, 8], true, &mut rng).unwrap();
    for p in actor.net.params_mut() {
        *p += rng.random_range(-0.05..0.05);
    }
    let eps = randn(n, act_dim, 0.3, &mut rng);
    let bc = BcTargets {
        actions: randn(n, act_dim, 0.5, &mut rng),
        mask: Array1::from_shape_fn(n, |i| if i % 3 == 0 { 0.0 } else { 1.0 }),
    };
    let (_, g) = actor_loss_and_grad(&actor, &critics, obs.view(), eps.view(), Some(&bc), 0.2, 0.3).unwrap();
    let aspec = actor.net.spec().clone();
    results.push((
        "actor",
        fd_check(actor.net.params(), &g, |p| {
            let a = GaussianActor::from_net(Mlp::from_params(aspec.clone(), p.to_vec()).unwrap()).unwrap();
            actor_loss_and_grad(&a, &critics, obs.view(), eps.view(), Some(&bc), 0.2, 0.3)
                .unwrap()
                .0
                .loss
        }),
    ));

    // Value regression.
    let value = ValueEstimator::new(obs_dim, &[8, 8], true, &mut rng).unwrap();
    let returns = Array1::from_shape_fn(n, |_| rng.random_range(-10.0..5.0));
    let (_, g) = value_loss_and_grad(&value, obs.view(), returns.view()).unwrap();
    let vspec = value.net.spec().clone();
    results.push((
        "value",
        fd_check(value.net.params(), &g, |p| {
            let v = ValueEstimator {
                net: Mlp::from_params(vspec.clone(), p.to_vec()).unwrap(),
            };
            value_loss_and_grad(&v, obs.view(), returns.view()).unwrap().0
        }),
    ));

    // Behavior-cloning likelihood, Gaussian and mixture heads.
    let actions = randn(n, act_dim, 0.5, &mut rng);
    for (name, head, k) in [("bc-gaussian", HeadKind::Gaussian, 1), ("bc-gmm", HeadKind::Gmm, 3)] {
        let policy = BcPolicy::new_network(obs_dim, act_dim, &[8], head, k, &mut rng).unwrap();
        let (_, g) = nll_loss_and_grad(&policy, obs.view(), actions.view()).unwrap();
        let BcModel::Network { trunk, .. } = &policy.model else { unreachable!() };
        let params = trunk.params().to_vec();
        results.push((
            name,
            fd_check(&params, &g, |p| {
                let mut q = policy.clone();
                let BcModel::Network { trunk, .. } = &mut q.model else { unreachable!() };
                trunk.params_mut().copy_from_slice(p);
                nll_loss_and_grad(&q, obs.view(), actions.view()).unwrap().0
            }),
        ));
    }
    let el = t0.elapsed();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    Verdict {
        id: 3,
        name: "gradient fidelity",
        pass: worst <= 1e-4 && el < Duration::from_secs(60),
        detail: format!(
            "relative error {} (tol 1e-4); {}",
            results.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", "),
            secs(el)
        ),
    }
}

fn criterion_4() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut exact = true;
    for _ in 0..1000 {
        let len = rng.random_range(1..=60);
        let gamma = rng.random_range(0.0..1.0);
        let ep = Trajectory {
            obs: vec![vec![0.0]; len + 1],
            actions: vec![vec![0.0]; len],
            rewards: (0..len).map(|_| rng.random_range(-2.0..5.0)).collect(),
            terminated: rng.random_bool(0.5),
        };
        let g = monte_carlo_returns(&ep, gamma).unwrap();
        exact &= g[len - 1] == ep.rewards[len - 1];
        exact &= (0..len - 1).all(|t| g[t] == ep.rewards[t] + gamma * g[t + 1]);
    }
    let hand = Trajectory {
        obs: vec![vec![0.0]; 4],
        actions: vec![vec![0.0]; 3],
        rewards: vec![-1.0, -1.0, 9.0],
        terminated: true,
    };
    let g0 = monte_carlo_returns(&hand, 0.99).unwrap()[0];
    let el = t0.elapsed();
    Verdict {
        id: 4,
        name: "return recursion",
        pass: exact && (g0 - 6.8309).abs() <= 1e-9 && el < Duration::from_secs(1),
        detail: format!(
            "recursion exact on 1000 episodes: {exact}; (-1,-1,9) at 0.99 -> {g0:.10} (want 6.8309 +- 1e-9); {}",
            secs(el)
        ),
    }
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut law, mut invariant, mut ties) = (true, true, 0usize);
    for _ in 0..10_000 {
        // Multiples of 1/8 keep the shifted comparison exact.
        let q_bc = rng.random_range(-400i32..400) as f64 / 8.0;
        let q_rl = if rng.random_bool(0.1) {
            q_bc
        } else {
            rng.random_range(-400i32..400) as f64 / 8.0
        };
        ties += usize::from(q_bc == q_rl);
        let d = decide(q_bc, q_rl, vec![1.0], vec![-1.0]).unwrap();
        let expect = if q_bc > q_rl { Source::Bc } else { Source::Rl };
        law &= d.source == expect && d.chosen_action == if expect == Source::Bc { vec![1.0] } else { vec![-1.0] };
        let c = rng.random_range(-800i32..800) as f64 / 8.0;
        invariant &= decide(q_bc + c, q_rl + c, vec![1.0], vec![-1.0]).unwrap().source == d.source;
    }
    // The forced-value hook on the full gate follows the same law.
    let spec = q2rl_core::envs::EnvSpec::slot_insert();
    let bc = BcPolicy::scripted(spec, q2rl_core::envs::NoiseConfig::gaussian(0.2));
    let actor = GaussianActor::new(4, 2, &[8], true, &mut rng).unwrap();
    let critics = CriticEnsemble::new(4, 2, &[8], 2, true, &mut rng).unwrap();
    let inputs = GateInputs {
        bc: &bc,
        actor: &actor,
        critics: &critics,
        q_bc: None,
    };
    let cfg = GateConfig {
        bc_scoring: BcScoring::SharedCritic,
        ..GateConfig::default()
    };
    let mut hook = true;
    for _ in 0..1000 {
        let (qb, qr) = (rng.random_range(-5i32..5) as f64, rng.random_range(-5i32..5) as f64);
        let forced = ForcedValues {
            q_bc: Some(qb),
            q_rl: Some(qr),
        };
        let d = gate(&[0.2, 0.2, 0.3, 0.45], inputs, &cfg, forced, &mut rng).unwrap();
        hook &= (d.source == Source::Bc) == (qb > qr);
        hook &= d.chosen_action == if d.source == Source::Bc { d.a_bc.clone() } else { d.a_rl.clone() };
    }
    Verdict {
        id: 5,
        name: "gate law",
        pass: law && invariant && hook,
        detail: format!(
            "10^4 forced pairs ({ties} ties): bc iff q_bc > q_rl: {law}; shift-invariant: {invariant}; gate hook: {hook}"
        ),
    }
}

fn criterion_6() -> Verdict {
    let shaper = RlConfig::default().shaper();
    let r = shaper.shape(1.0);
    let pass = r == 4.0 && shaper == RewardShaper::default() && shaper.shape(0.0) == -1.0;
    Verdict {
        id: 6,
        name: "reward shaping",
        pass,
        detail: format!("5 * 1 + (-1) = {r}; failure step shapes to {}", shaper.shape(0.0)),
    }
}

fn criterion_11() -> Verdict {
    let t0 = Instant::now();
    let mut cfg = RunConfig::desk();
    cfg.seed = 11;
    cfg.demos.seed = 11;
    cfg.bc.seed = 11;
    cfg.q_estimation.init_steps = 300;
    cfg.q_estimation.value.steps = 300;
    cfg.driver.total_env_steps = 400;
    cfg.driver.eval_every = 200;
    cfg.driver.eval_episodes = 5;
    cfg.driver.record_transitions = true;
    let (demos, report) = prepare_bc(&cfg).unwrap();
    let sync = run(&cfg, &report.policy, &demos).unwrap();
    let lock = run_async(&cfg, &report.policy, &demos, true).unwrap();
    let same_transitions = sync.transitions == lock.transitions && sync.transitions.len() == 400;
    let same_gates = sync.gate_log.iter().zip(&lock.gate_log).all(|(a, b)| {
        a.source == b.source && a.q_bc_value.to_bits() == b.q_bc_value.to_bits() && a.q_rl_value.to_bits() == b.q_rl_value.to_bits()
    });
    let counts = |a: &RunArtifacts| {
        a.messages.transition_batches == a.env_steps / 30 && a.messages.snapshots as u64 == a.learner_steps / 30
    };

    let mut small = cfg.clone();
    small.driver.total_env_steps = 90;
    let ninety = run(&small, &report.policy, &demos).unwrap();
    small.driver.total_env_steps = 0;
    small.driver.mode = RunMode::AsyncDeterministic;
    let zero = run(&small, &report.policy, &demos).unwrap();
    let edge = ninety.messages.transition_batches == 3
        && ninety.messages.final_flush_len == 0
        && zero.messages.transition_batches == 0
        && zero.messages.snapshots == 0
        && zero.messages.final_flush_len == 0;
    let el = t0.elapsed();
    Verdict {
        id: 11,
        name: "async protocol equivalence",
        pass: same_transitions && same_gates && counts(&sync) && counts(&lock) && edge && sync.learner_steps > 0,
        detail: format!(
            "400 steps: transitions identical {same_transitions}, gate log identical {same_gates}; batches {} = floor({}/30), \
             snapshots {} = floor({}/30); 90 samples -> {} batches; 0 steps -> {} messages; {}",
            lock.messages.transition_batches,
            lock.env_steps,
            lock.messages.snapshots,
            lock.learner_steps,
            ninety.messages.transition_batches,
            zero.messages.transition_batches + zero.messages.snapshots,
            secs(el)
        ),
    }
}

// ---------------------------------------------------------------- learning runs

const SEEDS: [u64; 3] = [0, 1, 2];
const BASELINE_EPISODES: usize = 200;

struct SeedRuns {
    bc_success: f64,
    bc_shifted_success: f64,
    full: RunArtifacts,
    full_minutes: f64,
    no_gating: RunArtifacts,
    ibrl_no_data: RunArtifacts,
    full_no_data: RunArtifacts,
    full_shifted: RunArtifacts,
}

fn base_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::desk();
    cfg.seed = seed;
    cfg.demos.seed = seed;
    cfg.bc.seed = seed;
    cfg
}

fn best(a: &RunArtifacts) -> f64 {
    a.metrics.iter().map(|m| m.eval_success).fold(0.0, f64::max)
}

fn curve(a: &RunArtifacts) -> String {
    a.metrics.iter().map(|m| format!("{:.2}", m.eval_success)).collect::<Vec<_>>().join(" ")
}

fn seed_runs(seed: u64) -> SeedRuns {
    let cfg = base_config(seed);
    let (demos, report): (DemoDataset, _) = prepare_bc(&cfg).unwrap();
    let bc = report.policy;
    let bundle = PolicyBundle::Bc {
        policy: bc.clone(),
        use_mode: false,
    };
    let eval_seed = 1000 + seed;
    let bc_success = evaluate(&bundle, &cfg.env.online_spec().unwrap(), BASELINE_EPISODES, eval_seed)
        .unwrap()
        .success_rate;
    let mut shifted = cfg.clone();
    shifted.env.shift = Some(SlotShift::default());
    let bc_shifted_success = evaluate(&bundle, &shifted.env.online_spec().unwrap(), BASELINE_EPISODES, eval_seed)
        .unwrap()
        .success_rate;

    let with = |variant: Variant, fraction: f64, cfg: &RunConfig| {
        let mut c = cfg.clone();
        c.variant.name = variant;
        c.variant.seed_fraction = fraction;
        let t = Instant::now();
        let art = run(&c, &bc, &demos).unwrap();
        eprintln!(
            "  seed {seed} {variant} seed_fraction {fraction}{}: {} [{}]",
            if c.env.shift.is_some() { " shifted" } else { "" },
            curve(&art),
            secs(t.elapsed())
        );
        (art, t.elapsed())
    };
    let (full, full_time) = with(Variant::Full, 1.0, &cfg);
    SeedRuns {
        bc_success,
        bc_shifted_success,
        full_minutes: full_time.as_secs_f64() / 60.0,
        full,
        no_gating: with(Variant::NoGating, 1.0, &cfg).0,
        ibrl_no_data: with(Variant::IbrlStyle, 0.0, &cfg).0,
        full_no_data: with(Variant::Full, 0.0, &cfg).0,
        full_shifted: with(Variant::Full, 1.0, &shifted).0,
    }
}

fn learning_criteria(runs: &[SeedRuns]) -> Vec<Verdict> {
    let budget = RunConfig::desk().driver.total_env_steps;
    let bc_med = median(runs.iter().map(|r| r.bc_success).collect());
    let mut out = Vec::new();

    // 7: end-to-end improvement.
    let full_best = median(runs.iter().map(|r| best(&r.full)).collect());
    let minutes = runs.iter().map(|r| r.full_minutes).fold(0.0, f64::max);
    let calibrated = (0.4..=0.7).contains(&bc_med);
    out.push(Verdict {
        id: 7,
        name: "end-to-end improvement",
        pass: calibrated && full_best >= 0.9 && minutes <= 30.0,
        detail: format!(
            "BC median {bc_med:.3} (band 0.4-0.7; per seed {:?}); full median best {full_best:.2} (>= 0.9) within {budget} steps; \
             first 0.9 at {:?}; slowest seed {minutes:.1} min",
            runs.iter().map(|r| r.bc_success).collect::<Vec<_>>(),
            runs.iter().map(|r| r.full.first_step_reaching(0.9)).collect::<Vec<_>>()
        ),
    });

    // 8: gating ablation at the step where full first reaches 0.9.
    let mut full_at = Vec::new();
    let mut ng_at = Vec::new();
    let mut steps = Vec::new();
    for r in runs {
        let step = r.full.first_step_reaching(0.9).unwrap_or(budget);
        steps.push(step);
        full_at.push(r.full.success_at(step).unwrap_or(0.0));
        ng_at.push(r.no_gating.success_at(step).unwrap_or(0.0));
    }
    let gap = median(full_at.clone()) - median(ng_at.clone());
    out.push(Verdict {
        id: 8,
        name: "gating ablation",
        pass: gap >= 0.15,
        detail: format!(
            "at steps {steps:?}: full {full_at:?} vs no_gating {ng_at:?}; median gap {gap:.2} (>= 0.15)"
        ),
    });

    // 9: no-data regime.
    let ibrl_best = median(runs.iter().map(|r| best(&r.ibrl_no_data)).collect());
    let q2rl_best = median(runs.iter().map(|r| best(&r.full_no_data)).collect());
    out.push(Verdict {
        id: 9,
        name: "no-data regime",
        pass: ibrl_best <= bc_med + 0.05 && q2rl_best >= 0.9,
        detail: format!(
            "seed_fraction 0: ibrl_style median best {ibrl_best:.2} (must stay <= BC {bc_med:.2} + 0.05); \
             full median best {q2rl_best:.2} (>= 0.9)"
        ),
    });

    // 10: fast BC recovery.
    let horizon = budget / 5;
    let mut per_seed = Vec::new();
    for r in runs {
        let hit = r
            .full
            .metrics
            .iter()
            .find(|m| m.env_step <= horizon && m.eval_success >= r.bc_success);
        per_seed.push(match hit {
            Some(m) => (Some(m.env_step), m.bc_action_fraction, m.bc_action_fraction > 0.0 && m.bc_action_fraction < 1.0),
            None => (None, f64::NAN, false),
        });
    }
    let ok = per_seed.iter().filter(|p| p.2).count();
    out.push(Verdict {
        id: 10,
        name: "fast BC recovery",
        pass: ok * 2 > runs.len(),
        detail: format!(
            "reaches the seed's BC success by step {horizon} with BC-action fraction in (0,1): {ok}/{} seeds; \
             (step, fraction) {:?}",
            runs.len(),
            per_seed.iter().map(|p| (p.0, (p.1 * 1000.0).round() / 1000.0)).collect::<Vec<_>>()
        ),
    });

    // 12: distribution-shift recovery.
    let drop = median(runs.iter().map(|r| r.bc_success - r.bc_shifted_success).collect());
    let shifted_best = median(runs.iter().map(|r| best(&r.full_shifted)).collect());
    out.push(Verdict {
        id: 12,
        name: "distribution-shift recovery",
        pass: drop >= 0.25 && shifted_best >= bc_med,
        detail: format!(
            "BC shifted {:?} vs unshifted {:?}, median drop {drop:.3} (>= 0.25); full on shifted task median best \
             {shifted_best:.2} (>= BC unshifted {bc_med:.2})",
            runs.iter().map(|r| r.bc_shifted_success).collect::<Vec<_>>(),
            runs.iter().map(|r| r.bc_success).collect::<Vec<_>>()
        ),
    });
    out
}

fn main() {
    // Cargo passes harness flags such as `--nocapture`; they do not apply here.
    let flag = |name: &str| std::env::var(name).is_ok_and(|v| v == "1");
    let strict = flag("Q2RL_ACCEPTANCE_STRICT");
    let quick = flag("Q2RL_ACCEPTANCE_QUICK");

    let mut verdicts = vec![
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_11(),
    ];
    if !quick {
        let t0 = Instant::now();
        let runs: Vec<SeedRuns> = SEEDS.iter().map(|&s| seed_runs(s)).collect();
        verdicts.extend(learning_criteria(&runs));
        eprintln!("learning runs took {}", secs(t0.elapsed()));
    }
    verdicts.sort_by_key(|v| v.id);

    println!();
    for v in &verdicts {
        println!(
            "criterion {:>2} {:<30} {}  {}",
            v.id,
            v.name,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    if quick {
        println!("criteria 7-10 and 12 skipped (Q2RL_ACCEPTANCE_QUICK=1)");
    }
    let enforced: Vec<_> = verdicts
        .iter()
        .filter(|v| !v.pass && (strict || matches!(v.id, 1..=6 | 11)))
        .map(|v| v.id)
        .collect();
    if !enforced.is_empty() {
        eprintln!("failed criteria: {enforced:?}");
        std::process::exit(1);
    }
}
