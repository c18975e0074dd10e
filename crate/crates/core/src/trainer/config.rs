use serde::{Deserialize, Serialize};

use crate::dsa::DsaGate;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Erppo,
    Mappo,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "erppo" => Ok(Algorithm::Erppo),
            "mappo" => Ok(Algorithm::Mappo),
            other => Err(Error::config("algorithm", format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    /// Absolute iteration count at which training stops.
    pub total_iterations: u64,
    /// Environment steps per worker per iteration.
    pub rollout_length: usize,
    pub num_env_workers: usize,
    pub minibatch_size: usize,
    pub epochs_per_update: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub learning_rate: f64,
    pub sigma_switch: f64,
    /// Weight of the information-gain term in the critic target.
    pub info_target_weight: f64,
    pub dsa_gate: DsaGate,
    /// Append the previous joint action to the critic input.
    pub critic_sees_actions: bool,
    /// Evaluate every this many iterations; 0 disables evaluation.
    pub eval_every: u64,
    pub eval_episodes: usize,
    /// Write a checkpoint every this many iterations (and always at the end).
    pub checkpoint_every: u64,
    /// Record elapsed seconds in the metrics; off keeps reruns byte-identical.
    pub record_wall_time: bool,
    /// Overwritten by the experiment-level seed.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Erppo,
            total_iterations: 100,
            rollout_length: 128,
            num_env_workers: 4,
            minibatch_size: 256,
            epochs_per_update: 4,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            learning_rate: 5e-4,
            sigma_switch: 0.5,
            info_target_weight: 0.5,
            dsa_gate: DsaGate::Learned,
            critic_sees_actions: false,
            eval_every: 10,
            eval_episodes: 5,
            checkpoint_every: 10,
            record_wall_time: false,
            seed: 0,
        }
    }
}

fn positive(key: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::config(key, "must be at least 1"));
    }
    Ok(())
}

fn unit_open(key: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::config(key, format!("must lie in (0,1), got {v}")));
    }
    Ok(())
}

fn unit_closed(key: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::config(key, format!("must lie in [0,1], got {v}")));
    }
    Ok(())
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        positive("rollout_length", self.rollout_length)?;
        positive("num_env_workers", self.num_env_workers)?;
        positive("minibatch_size", self.minibatch_size)?;
        positive("epochs_per_update", self.epochs_per_update)?;
        if self.eval_every > 0 {
            positive("eval_episodes", self.eval_episodes)?;
        }
        unit_closed("gamma", self.gamma)?;
        unit_closed("gae_lambda", self.gae_lambda)?;
        unit_open("clip_epsilon", self.clip_epsilon)?;
        unit_open("sigma_switch", self.sigma_switch)?;
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if !self.info_target_weight.is_finite() {
            return Err(Error::config("info_target_weight", "must be finite"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!((c.gamma, c.gae_lambda, c.clip_epsilon, c.learning_rate), (0.99, 0.95, 0.2, 5e-4));
    }

    #[test]
    fn range_errors_name_the_key() {
        let c = TrainConfig {
            gamma: 1.5,
            ..Default::default()
        };
        match c.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "gamma"),
            other => panic!("{other:?}"),
        }
        let c = TrainConfig {
            clip_epsilon: 1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
