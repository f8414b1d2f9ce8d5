//! Sparse-reward point-mass tasks on the unit square, plus scripted demonstrators.
//!
//! Actions are normalized to `[-1, 1]` per dimension and scaled by
//! `max_delta` into a position change. Dynamics are deterministic; the only
//! randomness is the initial-state draw.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    PointReach,
    SlotInsert,
}

/// A horizontal wall `wall_y <= y <= wall_y + wall_thickness` with an
/// opening of `width` centred on `center_x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotGeometry {
    pub center_x: f64,
    pub width: f64,
    pub wall_y: f64,
    pub wall_thickness: f64,
    /// Success once this far past `wall_y` inside the opening.
    pub insert_depth: f64,
}

impl SlotGeometry {
    fn half_width(&self) -> f64 {
        0.5 * self.width
    }

    fn in_opening(&self, x: f64) -> bool {
        (x - self.center_x).abs() <= self.half_width() + 1e-12
    }

    fn in_band(&self, y: f64) -> bool {
        y > self.wall_y && y < self.wall_y + self.wall_thickness
    }

    /// Points strictly inside the wall material.
    pub fn is_solid(&self, p: [f64; 2]) -> bool {
        self.in_band(p[1]) && !self.in_opening(p[0])
    }

    pub fn goal(&self) -> [f64; 2] {
        [self.center_x, self.wall_y + self.insert_depth]
    }

    fn success(&self, p: [f64; 2]) -> bool {
        self.in_opening(p[0]) && p[1] >= self.wall_y + self.insert_depth
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub kind: EnvKind,
    /// Largest per-dimension displacement, reached at action magnitude 1.
    pub max_delta: f64,
    pub max_episode_len: usize,
    pub init_low: [f64; 2],
    pub init_high: [f64; 2],
    /// PointReach target and success radius.
    pub goal: [f64; 2],
    pub goal_tolerance: f64,
    pub slot: SlotGeometry,
}

impl EnvSpec {
    pub fn point_reach() -> Self {
        Self {
            kind: EnvKind::PointReach,
            max_delta: 0.05,
            max_episode_len: 60,
            init_low: [0.05, 0.05],
            init_high: [0.35, 0.95],
            goal: [0.8, 0.5],
            goal_tolerance: 0.05,
            slot: SlotGeometry::default_slot(),
        }
    }

    pub fn slot_insert() -> Self {
        Self {
            kind: EnvKind::SlotInsert,
            max_delta: 0.05,
            max_episode_len: 120,
            init_low: [0.05, 0.05],
            init_high: [0.95, 0.3],
            goal: [0.5, 0.65],
            goal_tolerance: 0.05,
            slot: SlotGeometry::default_slot(),
        }
    }

    pub fn for_kind(kind: EnvKind) -> Self {
        match kind {
            EnvKind::PointReach => Self::point_reach(),
            EnvKind::SlotInsert => Self::slot_insert(),
        }
    }

    pub const fn obs_dim(&self) -> usize {
        4
    }

    pub const fn action_dim(&self) -> usize {
        2
    }

    /// Per-dimension bounds of the normalized action.
    pub fn action_bounds(&self) -> Vec<(f64, f64)> {
        vec![(-1.0, 1.0); self.action_dim()]
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.max_delta, self.goal_tolerance]
            .iter()
            .chain(&self.init_low)
            .chain(&self.init_high)
            .chain(&self.goal)
            .all(|v| v.is_finite());
        if !finite || self.max_delta <= 0.0 {
            return Err(Error::Config("env: non-finite or non-positive geometry".into()));
        }
        if self.max_episode_len == 0 {
            return Err(Error::Config("env.max_episode_len must be at least 1".into()));
        }
        for d in 0..2 {
            if !(0.0..=1.0).contains(&self.init_low[d])
                || !(0.0..=1.0).contains(&self.init_high[d])
                || self.init_low[d] > self.init_high[d]
            {
                return Err(Error::Config("env: init box must lie inside [0,1]^2".into()));
            }
        }
        if self.kind == EnvKind::SlotInsert {
            let s = &self.slot;
            if s.width <= 0.0 || s.insert_depth <= 0.0 || s.insert_depth > s.wall_thickness {
                return Err(Error::Config("env.slot: bad opening geometry".into()));
            }
            if self.init_high[1] > s.wall_y {
                return Err(Error::Config("env: SlotInsert init box must lie below the wall".into()));
            }
        }
        Ok(())
    }
}

impl SlotGeometry {
    pub fn default_slot() -> Self {
        Self {
            center_x: 0.5,
            width: 0.06,
            wall_y: 0.6,
            wall_thickness: 0.1,
            insert_depth: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_obs: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

#[derive(Debug, Clone)]
pub struct Env {
    spec: EnvSpec,
    pos: [f64; 2],
    t: usize,
}

impl Env {
    pub fn new(spec: EnvSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            pos: spec.init_low,
            spec,
            t: 0,
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    pub fn elapsed(&self) -> usize {
        self.t
    }

    /// Draws the start position uniformly from the init box.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        let mut p = [0.0; 2];
        for d in 0..2 {
            let (lo, hi) = (self.spec.init_low[d], self.spec.init_high[d]);
            p[d] = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        }
        self.reset_to(p)
    }

    /// Places the point mass at `p` and restarts the episode clock.
    pub fn reset_to(&mut self, p: [f64; 2]) -> Vec<f64> {
        self.pos = p;
        self.t = 0;
        self.observe()
    }

    pub fn goal(&self) -> [f64; 2] {
        match self.spec.kind {
            EnvKind::PointReach => self.spec.goal,
            EnvKind::SlotInsert => self.spec.slot.goal(),
        }
    }

    /// Position followed by the vector from the position to the goal.
    pub fn observe(&self) -> Vec<f64> {
        let g = self.goal();
        vec![self.pos[0], self.pos[1], g[0] - self.pos[0], g[1] - self.pos[1]]
    }

    fn is_success(&self, p: [f64; 2]) -> bool {
        match self.spec.kind {
            EnvKind::PointReach => {
                let g = self.spec.goal;
                ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2)).sqrt() < self.spec.goal_tolerance
            }
            EnvKind::SlotInsert => self.spec.slot.success(p),
        }
    }

    /// Clips the action, integrates one step, projects out of walls.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if action.len() != self.spec.action_dim() {
            return Err(Error::Shape(format!(
                "action has {} dims, env expects {}",
                action.len(),
                self.spec.action_dim()
            )));
        }
        let delta = [
            self.spec.max_delta * clip_unit(action[0]),
            self.spec.max_delta * clip_unit(action[1]),
        ];
        let mut next = [
            (self.pos[0] + delta[0]).clamp(0.0, 1.0),
            (self.pos[1] + delta[1]).clamp(0.0, 1.0),
        ];
        if self.spec.kind == EnvKind::SlotInsert {
            next = project_out_of_wall(&self.spec.slot, self.pos, next);
        }
        self.pos = next;
        self.t += 1;
        let terminated = self.is_success(next);
        let truncated = !terminated && self.t >= self.spec.max_episode_len;
        Ok(StepResult {
            next_obs: self.observe(),
            reward: if terminated { 1.0 } else { 0.0 },
            terminated,
            truncated,
        })
    }
}

fn clip_unit(a: f64) -> f64 {
    if a.is_nan() {
        0.0
    } else {
        a.clamp(-1.0, 1.0)
    }
}

/// Clips each action component to `[-1, 1]`.
pub fn clip_action(action: &[f64]) -> Vec<f64> {
    action.iter().map(|&a| clip_unit(a)).collect()
}

fn project_out_of_wall(slot: &SlotGeometry, from: [f64; 2], mut to: [f64; 2]) -> [f64; 2] {
    if !slot.is_solid(to) {
        return to;
    }
    if from[1] <= slot.wall_y {
        to[1] = slot.wall_y;
    } else if slot.in_band(from[1]) {
        let h = slot.half_width();
        to[0] = to[0].clamp(slot.center_x - h, slot.center_x + h);
    } else {
        to[1] = slot.wall_y + slot.wall_thickness;
    }
    to
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    Uniform,
}

/// Additive noise on demonstrator actions, in normalized action units.
/// Uniform noise is drawn from `[-scale, scale]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub scale: f64,
}

impl NoiseConfig {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            scale: 0.0,
        }
    }

    pub fn gaussian(scale: f64) -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            scale,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.scale == 0.0 {
            return 0.0;
        }
        match self.kind {
            NoiseKind::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                self.scale * z
            }
            NoiseKind::Uniform => rng.random_range(-self.scale..=self.scale),
        }
    }
}

/// Noiseless proportional controller for the task geometry in `spec`.
/// Reads positions from the observation, so it follows any shifted slot.
pub fn teacher_mean(spec: &EnvSpec, obs: &[f64]) -> Vec<f64> {
    let p = [obs[0], obs[1]];
    let goal = [obs[0] + obs[2], obs[1] + obs[3]];
    let target = match spec.kind {
        EnvKind::PointReach => goal,
        EnvKind::SlotInsert => {
            let slot = &spec.slot;
            // Align under the opening first, then push straight in.
            let aligned = (p[0] - goal[0]).abs() <= 0.25 * slot.width;
            if aligned {
                [goal[0], goal[1] + 0.5 * slot.insert_depth]
            } else {
                [goal[0], p[1].max(slot.wall_y - 0.1).min(slot.wall_y - 0.02)]
            }
        }
    };
    (0..2)
        .map(|d| ((target[d] - p[d]) / spec.max_delta).clamp(-1.0, 1.0))
        .collect()
}

/// Scripted demonstrator: [`teacher_mean`] plus independent per-dimension noise.
/// The returned action is the demonstrator's intent; the env clips it.
pub fn scripted_teacher<R: Rng + ?Sized>(
    spec: &EnvSpec,
    obs: &[f64],
    noise: &NoiseConfig,
    rng: &mut R,
) -> Vec<f64> {
    teacher_mean(spec, obs)
        .into_iter()
        .map(|a| a + noise.draw(rng))
        .collect()
}

/// Task-distribution shift for SlotInsert: the opening moves by `dx` and its
/// width is multiplied by `width_scale`. The success rule is unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotShift {
    pub dx: f64,
    pub width_scale: f64,
}

impl SlotShift {
    pub fn none() -> Self {
        Self {
            dx: 0.0,
            width_scale: 1.0,
        }
    }
}

impl Default for SlotShift {
    fn default() -> Self {
        Self {
            dx: 0.10,
            width_scale: 0.4,
        }
    }
}

pub fn shift_variant(spec: &EnvSpec, shift: &SlotShift) -> Result<EnvSpec> {
    if spec.kind != EnvKind::SlotInsert {
        return Err(Error::Config("shift_variant applies to SlotInsert only".into()));
    }
    let mut out = spec.clone();
    out.slot.center_x += shift.dx;
    out.slot.width *= shift.width_scale;
    out.validate()?;
    Ok(out)
}
