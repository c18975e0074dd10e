use crate::error::{Error, Result};

pub const DEFAULT_GAMMA: f64 = 0.99;
pub const DEFAULT_GAE_LAMBDA: f64 = 0.95;
const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageEstimate {
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub gamma: f64,
    pub gae_lambda: f64,
}

/// Generalized advantage estimation over one contiguous segment.
///
/// `value_bootstrap` is the value of the state after the last reward; pass
/// zero when the segment ends in a terminal state.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    value_bootstrap: f64,
    gamma: f64,
    gae_lambda: f64,
) -> Result<AdvantageEstimate> {
    if rewards.len() != values.len() {
        return Err(Error::contract(format!(
            "{} rewards but {} values",
            rewards.len(),
            values.len()
        )));
    }
    let all_finite = rewards
        .iter()
        .chain(values)
        .chain([&value_bootstrap, &gamma, &gae_lambda])
        .all(|x| x.is_finite());
    if !all_finite {
        return Err(Error::contract("non-finite GAE input"));
    }

    let n = rewards.len();
    let mut advantages = vec![0.0; n];
    let mut next_value = value_bootstrap;
    let mut running = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * gae_lambda * running;
        advantages[t] = running;
        next_value = values[t];
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok(AdvantageEstimate {
        advantages,
        returns,
        gamma,
        gae_lambda,
    })
}

/// Shifts and scales to zero mean and unit standard deviation.
pub fn normalize_advantages(advantages: &mut [f64]) {
    if advantages.is_empty() {
        return;
    }
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(STD_FLOOR);
    for a in advantages {
        *a = (*a - mean) / std;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_episode() {
        let est = compute_gae(&[1.0], &[0.0], 0.0, 0.99, 0.95).unwrap();
        assert_eq!(est.advantages, vec![1.0]);
        assert_eq!(est.returns, vec![1.0]);
    }

    #[test]
    fn zero_gamma_collapses_to_td_error() {
        let r = [1.0, 0.5, 2.0];
        let v = [0.3, 0.7, 0.1];
        let est = compute_gae(&r, &v, 5.0, 0.0, 0.95).unwrap();
        for t in 0..3 {
            assert_eq!(est.advantages[t], r[t] - v[t]);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(compute_gae(&[1.0], &[0.0, 1.0], 0.0, 0.9, 0.9).is_err());
        assert!(compute_gae(&[f64::NAN], &[0.0], 0.0, 0.9, 0.9).is_err());
        assert!(compute_gae(&[1.0], &[0.0], f64::INFINITY, 0.9, 0.9).is_err());
    }

    #[test]
    fn normalization() {
        let mut a = vec![1.0, 2.0, 3.0, 4.0];
        normalize_advantages(&mut a);
        let mean: f64 = a.iter().sum::<f64>() / 4.0;
        let var: f64 = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
        let mut z = vec![0.0; 5];
        normalize_advantages(&mut z);
        assert!(z.iter().all(|&x| x == 0.0));
    }
}
