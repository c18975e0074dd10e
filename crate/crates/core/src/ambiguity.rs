//! Shannon-entropy ambiguity measures over detector confidences.
//!
//! A detection's confidence is treated as a locational probability; its
//! entropy quantifies how ambiguous the observation is. A location is labelled
//! ambiguous when the most ambiguous detection meets a threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyVariant {
    /// `-p log p - (1-p) log(1-p)`.
    Binary,
    /// `-p log p` only.
    SingleTerm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogBase {
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "e")]
    E,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropyConfig {
    pub variant: EntropyVariant,
    pub log_base: LogBase,
    pub mask_threshold: f64,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self {
            variant: EntropyVariant::Binary,
            log_base: LogBase::Two,
            mask_threshold: 0.5,
        }
    }
}

impl EntropyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mask_threshold > 0.0 && self.mask_threshold < 1.0) {
            return Err(Error::config(
                "mask_threshold",
                format!("must lie in (0,1), got {}", self.mask_threshold),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AmbiguityLabel {
    NonAmbiguous = 0,
    Ambiguous = 1,
}

impl AmbiguityLabel {
    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.value())
    }

    pub fn from_value(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::NonAmbiguous),
            1 => Some(Self::Ambiguous),
            _ => None,
        }
    }
}

/// `x log x` with the `0 log 0 = 0` convention.
fn xlogx(x: f64, base: LogBase) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    match base {
        LogBase::Two => x * x.log2(),
        LogBase::E => x * x.ln(),
    }
}

pub fn shannon_entropy(p: f64, config: &EntropyConfig) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("probability {p} outside [0,1]")));
    }
    let h = match config.variant {
        EntropyVariant::Binary => -xlogx(p, config.log_base) - xlogx(1.0 - p, config.log_base),
        EntropyVariant::SingleTerm => -xlogx(p, config.log_base),
    };
    // -0.0 at the endpoints
    Ok(h.max(0.0))
}

/// Labels a location ambiguous iff the largest entropy reaches `threshold`.
pub fn ambiguity_mask(entropies: &[f64], threshold: f64) -> Result<AmbiguityLabel> {
    let max = entropies
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or_else(|| Error::contract("ambiguity mask needs at least one entropy"))?;
    Ok(if max >= threshold {
        AmbiguityLabel::Ambiguous
    } else {
        AmbiguityLabel::NonAmbiguous
    })
}

/// Mask label for a frame; a frame without detections carries no ambiguity.
pub fn frame_label(entropies: &[f64], threshold: f64) -> AmbiguityLabel {
    ambiguity_mask(entropies, threshold).unwrap_or(AmbiguityLabel::NonAmbiguous)
}

/// Location probability after a chain of one-step transition probabilities.
pub fn propagate_location_probability(conditionals: &[f64]) -> Result<f64> {
    Ok(location_probability_prefixes(conditionals)?
        .last()
        .copied()
        .unwrap_or(1.0))
}

/// Every partial product of the transition chain, in time order.
pub fn location_probability_prefixes(conditionals: &[f64]) -> Result<Vec<f64>> {
    let mut acc = 1.0;
    conditionals
        .iter()
        .map(|&p| {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::domain(format!("transition probability {p} outside [0,1]")));
            }
            acc *= p;
            Ok(acc)
        })
        .collect()
}

/// Mean over visited steps of the mean detection entropy at that step.
/// Steps with no detections contribute zero.
pub fn policy_entropy_expectation<S: AsRef<[f64]>>(per_step: &[S]) -> Result<f64> {
    if per_step.is_empty() {
        return Err(Error::contract("entropy expectation needs at least one step"));
    }
    let total: f64 = per_step.iter().map(|s| step_entropy(s.as_ref())).sum();
    Ok(total / per_step.len() as f64)
}

pub fn step_entropy(entropies: &[f64]) -> f64 {
    if entropies.is_empty() {
        0.0
    } else {
        entropies.iter().sum::<f64>() / entropies.len() as f64
    }
}
