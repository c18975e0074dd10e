use rand::Rng;

use super::dist::{CategoricalPolicyOutput, GaussianPolicyOutput, LOG_STD_MAX, LOG_STD_MIN};
use super::{ForwardCache, Mlp, NetRole};
use crate::error::{Error, Result};

/// A sampled policy action before it is turned into an environment command.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyAction {
    Continuous(Vec<f64>),
    Discrete(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyDist {
    Gaussian(GaussianPolicyOutput),
    Categorical(CategoricalPolicyOutput),
}

impl PolicyDist {
    pub fn log_prob(&self, action: &PolicyAction) -> Result<f64> {
        match (self, action) {
            (PolicyDist::Gaussian(d), PolicyAction::Continuous(a)) => d.log_prob(a),
            (PolicyDist::Categorical(d), PolicyAction::Discrete(a)) => d.log_prob(*a),
            _ => Err(Error::contract("action kind does not match policy head")),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PolicyAction {
        match self {
            PolicyDist::Gaussian(d) => PolicyAction::Continuous(d.sample(rng)),
            PolicyDist::Categorical(d) => PolicyAction::Discrete(d.sample(rng)),
        }
    }

    pub fn mode(&self) -> PolicyAction {
        match self {
            PolicyDist::Gaussian(d) => PolicyAction::Continuous(d.mode()),
            PolicyDist::Categorical(d) => PolicyAction::Discrete(d.mode()),
        }
    }
}

/// Shared actor: an MLP trunk plus either a state-independent log-std vector
/// (continuous actions) or nothing extra (logits for discrete actions).
///
/// For optimization the parameters are viewed as one flat vector: network
/// parameters first, then the log-std entries.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub net: Mlp,
    pub log_std: Option<Vec<f64>>,
}

impl PolicyNet {
    pub fn continuous<R: Rng + ?Sized>(obs_dim: usize, action_dim: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            net: NetRole::Policy.build(obs_dim, action_dim, rng)?,
            log_std: Some(vec![0.0; action_dim]),
        })
    }

    pub fn discrete<R: Rng + ?Sized>(obs_dim: usize, num_actions: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            net: NetRole::Policy.build(obs_dim, num_actions, rng)?,
            log_std: None,
        })
    }

    pub fn num_params(&self) -> usize {
        self.net.num_params() + self.log_std.as_ref().map_or(0, Vec::len)
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut p = self.net.params().to_vec();
        if let Some(s) = &self.log_std {
            p.extend_from_slice(s);
        }
        p
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::contract("flat policy parameter length mismatch"));
        }
        let n = self.net.num_params();
        self.net.params_mut().copy_from_slice(&flat[..n]);
        if let Some(s) = &mut self.log_std {
            s.copy_from_slice(&flat[n..]);
            for v in s.iter_mut() {
                *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
            }
        }
        Ok(())
    }

    pub fn distribution(&self, obs: &[f64]) -> Result<(PolicyDist, ForwardCache)> {
        let (out, cache) = self.net.forward(obs)?;
        Ok((self.head(out), cache))
    }

    pub fn infer(&self, obs: &[f64]) -> Result<PolicyDist> {
        Ok(self.head(self.net.infer(obs)?))
    }

    fn head(&self, out: Vec<f64>) -> PolicyDist {
        match &self.log_std {
            Some(s) => PolicyDist::Gaussian(GaussianPolicyOutput::new(out, s)),
            None => PolicyDist::Categorical(CategoricalPolicyOutput::new(out)),
        }
    }

    /// Adds `scale * d log_prob(action) / d params` into a flat gradient buffer.
    pub fn accumulate_log_prob_grad(
        &self,
        dist: &PolicyDist,
        cache: &ForwardCache,
        action: &PolicyAction,
        scale: f64,
        grads: &mut [f64],
    ) -> Result<()> {
        if grads.len() != self.num_params() {
            return Err(Error::contract("flat policy gradient length mismatch"));
        }
        let n = self.net.num_params();
        let (net_grads, extra) = grads.split_at_mut(n);
        match (dist, action) {
            (PolicyDist::Gaussian(d), PolicyAction::Continuous(a)) => {
                let (dm, ds) = d.log_prob_grad(a)?;
                let dm: Vec<f64> = dm.iter().map(|g| g * scale).collect();
                self.net.backward_into(cache, &dm, net_grads)?;
                let raw = self.log_std.as_ref().expect("gaussian head has log-std");
                for ((g, d), s) in extra.iter_mut().zip(ds).zip(raw) {
                    // clamped entries receive no gradient
                    if (LOG_STD_MIN..=LOG_STD_MAX).contains(s) {
                        *g += d * scale;
                    }
                }
            }
            (PolicyDist::Categorical(d), PolicyAction::Discrete(a)) => {
                let dl: Vec<f64> = d.log_prob_grad(*a)?.iter().map(|g| g * scale).collect();
                self.net.backward_into(cache, &dl, net_grads)?;
            }
            _ => return Err(Error::contract("action kind does not match policy head")),
        }
        Ok(())
    }
}
