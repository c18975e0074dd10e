//! Policy and value objectives.
//!
//! The ambiguity-gated objective adds a penalty on the change in expected
//! detection entropy between the current policy and the frozen snapshot:
//! `|dH|` when the expected ambiguity reaches the switch threshold and
//! `dH^2 / 2` otherwise. Without the penalty it is the plain clipped
//! surrogate used by the baseline.

use crate::error::{Error, Result};

/// Floor on the squared confidence norm in the information quantity.
pub const INFO_NORM_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub clip_loss: f64,
    pub entropy_term: f64,
    pub branch: Branch,
    pub value_loss: f64,
    pub total_policy_loss: f64,
    pub expected_ambiguity: f64,
}

fn clip_target(advantage: f64, epsilon: f64) -> f64 {
    if advantage >= 0.0 {
        (1.0 + epsilon) * advantage
    } else {
        (1.0 - epsilon) * advantage
    }
}

fn check_clip_args(ratio: f64, epsilon: f64) -> Result<()> {
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::contract(format!("probability ratio must be positive, got {ratio}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::contract(format!("clip epsilon must lie in (0,1), got {epsilon}")));
    }
    Ok(())
}

/// Per-sample clipped surrogate loss, `-min(ratio * A, g(eps, A))`.
pub fn clip_objective(ratio: f64, advantage: f64, epsilon: f64) -> Result<f64> {
    check_clip_args(ratio, epsilon)?;
    Ok(-(ratio * advantage).min(clip_target(advantage, epsilon)))
}

/// Derivative of [`clip_objective`] with respect to `log(ratio)`.
pub fn clip_objective_grad(ratio: f64, advantage: f64, epsilon: f64) -> Result<f64> {
    check_clip_args(ratio, epsilon)?;
    Ok(if ratio * advantage <= clip_target(advantage, epsilon) {
        -ratio * advantage
    } else {
        0.0
    })
}

pub fn value_loss(value_preds: &[f64], targets: &[f64]) -> Result<f64> {
    if value_preds.len() != targets.len() {
        return Err(Error::contract(format!(
            "{} predictions but {} targets",
            value_preds.len(),
            targets.len()
        )));
    }
    if value_preds.is_empty() {
        return Ok(0.0);
    }
    let sse: f64 = value_preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).powi(2))
        .sum();
    Ok(sse / value_preds.len() as f64)
}

/// Sum over objects of `sum(p) / max(|p|^2, floor)`, where `p` holds one
/// object's detection confidences across UAV positions. Objects with no
/// detections contribute nothing.
pub fn information_quantity<S: AsRef<[f64]>>(confidences: &[S]) -> Result<f64> {
    let mut total = 0.0;
    for per_object in confidences {
        let p = per_object.as_ref();
        if p.is_empty() {
            continue;
        }
        if let Some(bad) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::domain(format!("confidence {bad} outside [0,1]")));
        }
        let sum: f64 = p.iter().sum();
        let sq: f64 = p.iter().map(|x| x * x).sum();
        total += sum / sq.max(INFO_NORM_FLOOR);
    }
    Ok(total)
}

/// Critic target from the information gained over one transition.
pub fn value_target_from_information(info_next: f64, info_curr: f64) -> f64 {
    info_next - info_curr
}

pub fn select_branch(expected_ambiguity: f64, sigma_switch: f64) -> Branch {
    if expected_ambiguity >= sigma_switch {
        Branch::L1
    } else {
        Branch::L2
    }
}

pub fn entropy_regularizer(delta: f64, branch: Branch) -> f64 {
    match branch {
        Branch::L1 => delta.abs(),
        Branch::L2 => 0.5 * delta * delta,
    }
}

/// Derivative of [`entropy_regularizer`] in `delta`; the L1 subgradient at
/// zero is taken as zero.
pub fn entropy_regularizer_grad(delta: f64, branch: Branch) -> f64 {
    match branch {
        Branch::L1 if delta > 0.0 => 1.0,
        Branch::L1 if delta < 0.0 => -1.0,
        Branch::L1 => 0.0,
        Branch::L2 => delta,
    }
}

pub fn erppo_policy_loss(
    clip_loss: f64,
    entropy_new: f64,
    entropy_old: f64,
    expected_ambiguity: f64,
    sigma_switch: f64,
) -> LossReport {
    let branch = select_branch(expected_ambiguity, sigma_switch);
    let entropy_term = entropy_regularizer(entropy_new - entropy_old, branch);
    LossReport {
        clip_loss,
        entropy_term,
        branch,
        value_loss: 0.0,
        total_policy_loss: clip_loss + entropy_term,
        expected_ambiguity,
    }
}

pub fn mappo_policy_loss(clip_loss: f64) -> LossReport {
    LossReport {
        clip_loss,
        entropy_term: 0.0,
        branch: Branch::L2,
        value_loss: 0.0,
        total_policy_loss: clip_loss,
        expected_ambiguity: 0.0,
    }
}
