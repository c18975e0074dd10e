use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::nn::{Adam, PolicyDist, ForwardCache};
use crate::rl::{
    clip_objective, clip_objective_grad, compute_gae, entropy_regularizer_grad,
    erppo_policy_loss, mappo_policy_loss, normalize_advantages, select_branch, Branch, RolloutBuffer,
    Transition,
};
use crate::seeding::rng_for;

use super::rollout::Models;
use super::{Algorithm, TrainConfig};

const SHUFFLE_STREAM: u64 = 0x5348_5546;

/// Averages over the minibatch steps of one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateReport {
    pub clip_loss: f64,
    pub entropy_term: f64,
    pub value_loss: f64,
    pub total_policy_loss: f64,
    /// Fraction of minibatch steps taken on the L1 branch.
    pub branch_fraction_l1: f64,
    /// Mean ambiguity estimate over the buffer; the gate input.
    pub expected_ambiguity: f64,
    /// Entropy expectation of the pre-update policy.
    pub entropy_old: f64,
    pub minibatches: usize,
}

/// Per-transition quantities fixed for the whole update.
struct Prepared<'a> {
    transitions: Vec<&'a Transition>,
    advantages: Vec<f64>,
    targets: Vec<f64>,
    entropies: Vec<f64>,
}

fn prepare<'a>(buffer: &'a RolloutBuffer, cfg: &TrainConfig) -> Result<Prepared<'a>> {
    let mut transitions = Vec::with_capacity(buffer.len());
    let mut advantages = Vec::with_capacity(buffer.len());
    let mut targets = Vec::with_capacity(buffer.len());
    for seg in buffer.segments() {
        let rewards: Vec<f64> = seg.transitions.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = seg.transitions.iter().map(|t| t.value_pred).collect();
        let est = compute_gae(&rewards, &values, seg.bootstrap_value, cfg.gamma, cfg.gae_lambda)?;
        for ((t, a), r) in seg.transitions.iter().zip(est.advantages).zip(est.returns) {
            transitions.push(t);
            advantages.push(a);
            targets.push(r + cfg.info_target_weight * t.info_delta);
        }
    }
    normalize_advantages(&mut advantages);
    let entropies = transitions.iter().map(|t| t.mean_entropy()).collect();
    Ok(Prepared {
        transitions,
        advantages,
        targets,
        entropies,
    })
}

/// One PPO update over the buffer: `epochs_per_update` passes of shuffled
/// minibatches, each taking one policy step and one critic step.
///
/// The entropy change is estimated by importance weighting the snapshot's
/// per-transition detection entropies: `dH = mean((r - 1) * h)` over the
/// minibatch, where `r` is the probability ratio. Its gradient flows through
/// `r` only, so the snapshot entropy stays constant.
pub fn update(
    models: &mut Models,
    policy_opt: &mut Adam,
    value_opt: &mut Adam,
    buffer: &RolloutBuffer,
    cfg: &TrainConfig,
    seed: u64,
    iteration: u64,
) -> Result<UpdateReport> {
    if buffer.is_empty() {
        return Err(Error::contract("update needs a non-empty buffer"));
    }
    let prep = prepare(buffer, cfg)?;
    let n = prep.transitions.len();
    let entropy_old = prep.entropies.iter().sum::<f64>() / n as f64;
    let expected_ambiguity = prep.transitions.iter().map(|t| t.ambiguity).sum::<f64>() / n as f64;
    let branch = match cfg.algorithm {
        Algorithm::Erppo => Some(select_branch(expected_ambiguity, cfg.sigma_switch)),
        Algorithm::Mappo => None,
    };

    let mut order: Vec<usize> = (0..n).collect();
    let mut sums = [0.0; 4];
    let mut l1_steps = 0usize;
    let mut steps = 0usize;
    let mut policy_grads = vec![0.0; models.policy.num_params()];
    let mut value_grads = vec![0.0; models.value.num_params()];
    let mut forward: Vec<(PolicyDist, ForwardCache, f64)> = Vec::with_capacity(cfg.minibatch_size);

    for epoch in 0..cfg.epochs_per_update {
        order.shuffle(&mut rng_for(seed, &[SHUFFLE_STREAM, iteration, epoch as u64]));
        for (mb, batch) in order.chunks(cfg.minibatch_size).enumerate() {
            let m = batch.len() as f64;
            let diag = |what: &str| {
                Error::Divergence(format!(
                    "{what} at iteration {iteration}, epoch {epoch}, minibatch {mb}"
                ))
            };

            forward.clear();
            let mut clip_loss = 0.0;
            let mut delta_h = 0.0;
            for &i in batch {
                let t = prep.transitions[i];
                let (dist, cache) = models.policy.distribution(&t.local_obs)?;
                let ratio = (dist.log_prob(&t.action)? - t.log_prob_old).exp();
                if !(ratio.is_finite() && ratio > 0.0) {
                    return Err(diag("probability ratio left (0, inf)"));
                }
                clip_loss += clip_objective(ratio, prep.advantages[i], cfg.clip_epsilon)? / m;
                delta_h += (ratio - 1.0) * prep.entropies[i] / m;
                forward.push((dist, cache, ratio));
            }
            let report = match branch {
                Some(_) => erppo_policy_loss(
                    clip_loss,
                    entropy_old + delta_h,
                    entropy_old,
                    expected_ambiguity,
                    cfg.sigma_switch,
                ),
                None => mappo_policy_loss(clip_loss),
            };
            let reg_slope = branch.map_or(0.0, |b| entropy_regularizer_grad(delta_h, b));

            policy_grads.iter_mut().for_each(|g| *g = 0.0);
            for (k, &i) in batch.iter().enumerate() {
                let t = prep.transitions[i];
                let (dist, cache, ratio) = &forward[k];
                // d(loss)/d(log pi) for this sample
                let coef = (clip_objective_grad(*ratio, prep.advantages[i], cfg.clip_epsilon)?
                    + reg_slope * ratio * prep.entropies[i])
                    / m;
                if coef != 0.0 {
                    models
                        .policy
                        .accumulate_log_prob_grad(dist, cache, &t.action, coef, &mut policy_grads)?;
                }
            }
            if !report.total_policy_loss.is_finite() {
                return Err(diag("policy loss is not finite"));
            }
            let mut flat = models.policy.flat_params();
            policy_opt
                .step(&mut flat, &policy_grads)
                .map_err(|e| diag(&e.to_string()))?;
            models.policy.set_flat_params(&flat)?;

            value_grads.iter_mut().for_each(|g| *g = 0.0);
            let mut value_loss = 0.0;
            for &i in batch {
                let (out, cache) = models.value.forward(&prep.transitions[i].global_state)?;
                let err = out[0] - prep.targets[i];
                value_loss += err * err / m;
                models.value.backward_into(&cache, &[2.0 * err / m], &mut value_grads)?;
            }
            if !value_loss.is_finite() {
                return Err(diag("value loss is not finite"));
            }
            value_opt
                .step(models.value.params_mut(), &value_grads)
                .map_err(|e| diag(&e.to_string()))?;

            sums[0] += report.clip_loss;
            sums[1] += report.entropy_term;
            sums[2] += value_loss;
            sums[3] += report.total_policy_loss;
            if branch == Some(Branch::L1) {
                l1_steps += 1;
            }
            steps += 1;
        }
    }

    let s = steps as f64;
    Ok(UpdateReport {
        clip_loss: sums[0] / s,
        entropy_term: sums[1] / s,
        value_loss: sums[2] / s,
        total_policy_loss: sums[3] / s,
        branch_fraction_l1: l1_steps as f64 / s,
        expected_ambiguity,
        entropy_old,
        minibatches: steps,
    })
}
