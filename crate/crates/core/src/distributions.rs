//! Diagonal Gaussian and Gaussian-mixture action distributions.
//!
//! Actions are unsquashed: densities and entropies are the raw closed forms
//! and environments clip actions at their bounds.

use std::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const LOG_SIGMA_MIN: f64 = -10.0;
pub const LOG_SIGMA_MAX: f64 = 2.0;

const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

impl DiagGaussian {
    /// Builds the distribution, clamping `log_sigma` to `[LOG_SIGMA_MIN, LOG_SIGMA_MAX]`.
    pub fn new(mu: Vec<f64>, log_sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != log_sigma.len() {
            return Err(Error::Shape(format!(
                "mu has {} dims, log_sigma {}",
                mu.len(),
                log_sigma.len()
            )));
        }
        if mu.iter().chain(&log_sigma).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite Gaussian parameter".into()));
        }
        let log_sigma = log_sigma
            .into_iter()
            .map(|l| l.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX))
            .collect();
        Ok(Self { mu, log_sigma })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mu: vec![0.0; dim],
            log_sigma: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn sigma(&self) -> impl Iterator<Item = f64> + '_ {
        self.log_sigma.iter().map(|l| l.exp())
    }

    fn check(&self, a: &[f64]) -> Result<()> {
        if a.len() != self.dim() {
            return Err(Error::Shape(format!(
                "action has {} dims, distribution {}",
                a.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `-1/2 * sum_i [ (a_i - mu_i)^2 / sigma_i^2 + log(2 pi sigma_i^2) ]`.
    pub fn log_prob(&self, a: &[f64]) -> Result<f64> {
        self.check(a)?;
        Ok(self.log_prob_unchecked(a))
    }

    fn log_prob_unchecked(&self, a: &[f64]) -> f64 {
        a.iter()
            .zip(&self.mu)
            .zip(&self.log_sigma)
            .map(|((&x, &m), &ls)| {
                let z = (x - m) * (-ls).exp();
                -0.5 * z * z - ls - HALF_LOG_TWO_PI
            })
            .sum()
    }

    /// `sum_i 1/2 log(2 pi e sigma_i^2)`.
    pub fn entropy(&self) -> f64 {
        self.log_sigma
            .iter()
            .map(|ls| 0.5 * (2.0 * PI * E).ln() + ls)
            .sum()
    }

    /// Gradient of `log_prob(a)` w.r.t. `(mu, log_sigma)`.
    pub fn log_prob_grad(&self, a: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(a)?;
        let mut d_mu = Vec::with_capacity(self.dim());
        let mut d_ls = Vec::with_capacity(self.dim());
        for ((&x, &m), &ls) in a.iter().zip(&self.mu).zip(&self.log_sigma) {
            let inv_var = (-2.0 * ls).exp();
            d_mu.push((x - m) * inv_var);
            d_ls.push((x - m) * (x - m) * inv_var - 1.0);
        }
        Ok((d_mu, d_ls))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, use_mode: bool) -> Vec<f64> {
        if use_mode {
            return self.mu.clone();
        }
        self.mu
            .iter()
            .zip(self.sigma())
            .map(|(&m, s)| {
                let eps: f64 = StandardNormal.sample(rng);
                m + s * eps
            })
            .collect()
    }
}

/// Gaussian mixture with simplex weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Gmm {
    pub weights: Vec<f64>,
    pub components: Vec<DiagGaussian>,
}

impl Gmm {
    pub fn new(weights: Vec<f64>, components: Vec<DiagGaussian>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Input("mixture needs at least one component".into()));
        }
        if weights.len() != components.len() {
            return Err(Error::Shape(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        let dim = components[0].dim();
        if components.iter().any(|c| c.dim() != dim) {
            return Err(Error::Shape("mixture components differ in dimension".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::Input("mixture weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Input(format!("mixture weights sum to {total}")));
        }
        Ok(Self {
            weights,
            components,
        })
    }

    /// Weights from unnormalized logits via softmax.
    pub fn from_logits(logits: &[f64], components: Vec<DiagGaussian>) -> Result<Self> {
        Self::new(softmax(logits), components)
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    /// Per-component `log c_i + log pi_i(a)`; zero-weight components give `-inf`.
    fn weighted_log_densities(&self, a: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(&w, c)| {
                if w > 0.0 {
                    w.ln() + c.log_prob_unchecked(a)
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect()
    }

    /// `log sum_i c_i pi_i(a)`, evaluated with log-sum-exp.
    pub fn log_prob(&self, a: &[f64]) -> Result<f64> {
        self.components[0].check(a)?;
        Ok(log_sum_exp(&self.weighted_log_densities(a)))
    }

    /// Posterior component responsibilities at `a`.
    pub fn responsibilities(&self, a: &[f64]) -> Result<Vec<f64>> {
        self.components[0].check(a)?;
        let terms = self.weighted_log_densities(a);
        let lse = log_sum_exp(&terms);
        Ok(terms.iter().map(|t| (t - lse).exp()).collect())
    }

    /// Expected component entropy plus the weight entropy; an upper bound on
    /// the mixture's differential entropy.
    pub fn entropy_upper(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(&c, comp)| {
                if c > 0.0 {
                    c * comp.entropy() - c * c.ln()
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Index of the highest-weight component, lowest index on ties.
    pub fn dominant_component(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > self.weights[best] {
                best = i;
            }
        }
        best
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, use_mode: bool) -> Vec<f64> {
        if use_mode {
            return self.components[self.dominant_component()].mu.clone();
        }
        let idx = sample_categorical(&self.weights, rng);
        self.components[idx].sample(rng, false)
    }
}

/// Draws an index with probability proportional to `weights`.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Either policy head shape.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionDistribution {
    Gaussian(DiagGaussian),
    Mixture(Gmm),
}

impl ActionDistribution {
    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian(g) => g.dim(),
            Self::Mixture(m) => m.dim(),
        }
    }

    pub fn log_prob(&self, a: &[f64]) -> Result<f64> {
        match self {
            Self::Gaussian(g) => g.log_prob(a),
            Self::Mixture(m) => m.log_prob(a),
        }
    }

    /// Exact entropy for a Gaussian, the weight-entropy upper bound for a mixture.
    pub fn entropy(&self) -> f64 {
        match self {
            Self::Gaussian(g) => g.entropy(),
            Self::Mixture(m) => m.entropy_upper(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, use_mode: bool) -> Vec<f64> {
        match self {
            Self::Gaussian(g) => g.sample(rng, use_mode),
            Self::Mixture(m) => m.sample(rng, use_mode),
        }
    }

    pub fn mode(&self) -> Vec<f64> {
        match self {
            Self::Gaussian(g) => g.mu.clone(),
            Self::Mixture(m) => m.components[m.dominant_component()].mu.clone(),
        }
    }
}
