//! Action distributions for the policy heads.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Diagonal Gaussian over continuous actions. No squashing is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicyOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl GaussianPolicyOutput {
    pub fn new(mean: Vec<f64>, log_std: &[f64]) -> Self {
        let log_std = log_std
            .iter()
            .map(|s| s.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect();
        Self { mean, log_std }
    }

    fn check(&self, action: &[f64]) -> Result<()> {
        if action.len() != self.mean.len() || self.log_std.len() != self.mean.len() {
            return Err(Error::contract(format!(
                "action dimension {} does not match distribution dimension {}",
                action.len(),
                self.mean.len()
            )));
        }
        Ok(())
    }

    pub fn log_prob(&self, action: &[f64]) -> Result<f64> {
        self.check(action)?;
        Ok(self
            .mean
            .iter()
            .zip(&self.log_std)
            .zip(action)
            .map(|((m, s), a)| {
                let z = (a - m) / s.exp();
                -0.5 * z * z - s - HALF_LN_2PI
            })
            .sum())
    }

    /// Gradients of `log_prob(action)` with respect to the mean and log-std.
    pub fn log_prob_grad(&self, action: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(action)?;
        let mut d_mean = Vec::with_capacity(action.len());
        let mut d_log_std = Vec::with_capacity(action.len());
        for ((m, s), a) in self.mean.iter().zip(&self.log_std).zip(action) {
            let inv_var = (-2.0 * s).exp();
            let diff = a - m;
            d_mean.push(diff * inv_var);
            d_log_std.push(diff * diff * inv_var - 1.0);
        }
        Ok((d_mean, d_log_std))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, s)| {
                let z: f64 = rng.sample(StandardNormal);
                m + s.exp() * z
            })
            .collect()
    }

    pub fn mode(&self) -> Vec<f64> {
        self.mean.clone()
    }
}

/// Categorical distribution over a discrete action set.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalPolicyOutput {
    pub logits: Vec<f64>,
}

impl CategoricalPolicyOutput {
    pub fn new(logits: Vec<f64>) -> Self {
        Self { logits }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let max = self.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = self.logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }

    fn log_normalizer(&self) -> f64 {
        let max = self.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max + self.logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
    }

    pub fn log_prob(&self, action: usize) -> Result<f64> {
        let logit = self
            .logits
            .get(action)
            .ok_or_else(|| Error::contract(format!("action index {action} out of range")))?;
        Ok(logit - self.log_normalizer())
    }

    /// Gradient of `log_prob(action)` with respect to the logits.
    pub fn log_prob_grad(&self, action: usize) -> Result<Vec<f64>> {
        if action >= self.logits.len() {
            return Err(Error::contract(format!("action index {action} out of range")));
        }
        let mut g: Vec<f64> = self.probabilities().into_iter().map(|p| -p).collect();
        g[action] += 1.0;
        Ok(g)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let probs = self.probabilities();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    }

    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (i, l) in self.logits.iter().enumerate() {
            if *l > self.logits[best] {
                best = i;
            }
        }
        best
    }
}
