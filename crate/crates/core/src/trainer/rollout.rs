use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;

use crate::ambiguity::{frame_label, shannon_entropy, EntropyConfig};
use crate::dsa::{DsaGate, DsaModel, DsaQuery};
use crate::env::{
    global_state_len, global_state_vector, local_observation_len, local_observation_vector,
    render_observation, reset, step, ActionCommand, ActionMode, EnvConfig, Move, ObservationFrame,
    WorldState,
};
use crate::error::{Error, Result};
use crate::nn::{Mlp, PolicyAction, PolicyNet};
use crate::rl::{information_quantity, RolloutBuffer, Segment, Transition};
use crate::seeding::{derive_seed, rng_for};

use super::TrainConfig;

pub(crate) const EPISODE_STREAM: u64 = 0x4550_4953;
const ACTION_STREAM: u64 = 0x4143_5449;

/// Networks shared by every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub policy: PolicyNet,
    pub value: Mlp,
    pub dsa: Option<DsaModel>,
}

pub fn action_dim(env: &EnvConfig) -> usize {
    match env.action_mode {
        ActionMode::Continuous => 3,
        ActionMode::Discrete => Move::ALL.len(),
    }
}

pub fn critic_input_len(env: &EnvConfig, train: &TrainConfig) -> usize {
    let actions = if train.critic_sees_actions {
        env.num_uavs * action_dim(env)
    } else {
        0
    };
    global_state_len(env) + env.num_uavs + actions
}

pub fn actor_input_len() -> usize {
    local_observation_len()
}

/// Global state, a one-hot agent index and optionally the previous joint
/// action.
pub fn critic_input(
    env: &EnvConfig,
    train: &TrainConfig,
    state: &WorldState,
    agent: usize,
    prev_actions: &[f64],
) -> Vec<f64> {
    let mut v = global_state_vector(env, state);
    let mut one_hot = vec![0.0; env.num_uavs];
    one_hot[agent] = 1.0;
    v.extend(one_hot);
    if train.critic_sees_actions {
        v.extend_from_slice(prev_actions);
    }
    v
}

/// Environment command for a raw policy sample.
pub fn to_command(env: &EnvConfig, action: &PolicyAction) -> Result<ActionCommand> {
    match (action, env.action_mode) {
        (PolicyAction::Continuous(raw), ActionMode::Continuous) => {
            Ok(ActionCommand::clamped_velocity(raw, env.max_velocity))
        }
        (PolicyAction::Discrete(k), ActionMode::Discrete) => Move::ALL
            .get(*k)
            .map(|m| ActionCommand::Discrete(*m))
            .ok_or_else(|| Error::contract(format!("discrete action {k} out of range"))),
        _ => Err(Error::contract("policy action does not match the action mode")),
    }
}

/// Critic-side encoding of an executed command, scaled into [-1,1].
fn encode_command(env: &EnvConfig, cmd: &ActionCommand, out: &mut Vec<f64>) {
    match cmd {
        ActionCommand::Continuous(v) => out.extend(v.iter().map(|x| x / env.max_velocity)),
        ActionCommand::Discrete(m) => {
            let mut one_hot = [0.0; 7];
            let k = Move::ALL.iter().position(|x| x == m).expect("move in table");
            one_hot[k] = 1.0;
            out.extend(one_hot);
        }
    }
}

pub fn render_all(env: &EnvConfig, state: &WorldState) -> Result<Vec<ObservationFrame>> {
    (0..state.uavs.len())
        .map(|i| render_observation(env, state, i))
        .collect()
}

/// Information quantity of a joint frame: each object's true-positive
/// confidences across all UAVs form one vector.
pub fn joint_information(frames: &[ObservationFrame], num_objects: usize) -> Result<f64> {
    let mut per_object = vec![Vec::new(); num_objects];
    for f in frames {
        for d in &f.detections {
            if let Some(id) = d.object_id {
                per_object[id].push(d.confidence);
            }
        }
    }
    information_quantity(&per_object)
}

pub fn frame_entropies(frame: &ObservationFrame, entropy: &EntropyConfig) -> Result<Vec<f64>> {
    frame
        .confidences()
        .map(|p| shannon_entropy(p, entropy))
        .collect()
}

/// Ambiguity estimate for one agent's current view.
pub fn ambiguity_estimate(
    gate: DsaGate,
    dsa: Option<&DsaModel>,
    entropy: &EntropyConfig,
    query: &DsaQuery,
    entropies: &[f64],
) -> f64 {
    match (gate, dsa) {
        (DsaGate::Learned, Some(m)) => m.predict_ambiguity(query),
        _ => frame_label(entropies, entropy.mask_threshold).as_f64(),
    }
}

/// One environment replica and the bookkeeping that survives between
/// iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerState {
    pub env: WorldState,
    pub episode: u64,
    /// Per-agent return of the episode in progress.
    pub returns: Vec<f64>,
    /// Critic encoding of the previous joint command.
    pub prev_actions: Vec<f64>,
}

impl WorkerState {
    pub fn start(env: &EnvConfig, seed: u64, worker: usize, episode: u64) -> Result<Self> {
        Ok(Self {
            env: reset(env, episode_seed(seed, worker, episode))?,
            episode,
            returns: vec![0.0; env.num_uavs],
            prev_actions: vec![0.0; env.num_uavs * action_dim(env)],
        })
    }
}

pub fn episode_seed(seed: u64, worker: usize, episode: u64) -> u64 {
    derive_seed(seed, &[EPISODE_STREAM, worker as u64, episode])
}

/// Per-iteration telemetry gathered by the workers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutStats {
    /// Mean-over-agents return of each completed episode.
    pub episode_returns: Vec<f64>,
    /// Fraction of persons localized in each completed episode.
    pub episode_localized: Vec<f64>,
    /// The same two quantities for episodes still running at the cutoff.
    pub partial_returns: Vec<f64>,
    pub partial_localized: Vec<f64>,
    pub detections: u64,
    pub false_detections: u64,
    pub env_steps: u64,
}

impl RolloutStats {
    fn merge(&mut self, other: RolloutStats) {
        self.episode_returns.extend(other.episode_returns);
        self.episode_localized.extend(other.episode_localized);
        self.partial_returns.extend(other.partial_returns);
        self.partial_localized.extend(other.partial_localized);
        self.detections += other.detections;
        self.false_detections += other.false_detections;
        self.env_steps += other.env_steps;
    }
}

fn localized_fraction(state: &WorldState) -> f64 {
    match state.num_persons() {
        0 => 0.0,
        n => state.persons_localized() as f64 / n as f64,
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub(crate) struct Context<'a> {
    pub env: &'a EnvConfig,
    pub entropy: &'a EntropyConfig,
    pub train: &'a TrainConfig,
    pub models: &'a Models,
    pub seed: u64,
    pub iteration: u64,
}

fn run_worker(
    ctx: &Context,
    worker: usize,
    state: &mut WorkerState,
) -> Result<(Vec<Segment>, RolloutStats)> {
    let Context {
        env,
        entropy,
        train,
        models,
        seed,
        iteration,
    } = *ctx;
    let n = env.num_uavs;
    let mut rng = rng_for(seed, &[ACTION_STREAM, iteration, worker as u64]);
    let mut stats = RolloutStats::default();
    let mut segments = Vec::new();
    let mut open: Vec<Vec<Transition>> = vec![Vec::new(); n];
    let mut frames = render_all(env, &state.env)?;

    for _ in 0..train.rollout_length {
        let info_curr = joint_information(&frames, state.env.objects.len())?;
        let mut pending = Vec::with_capacity(n);
        let mut commands = Vec::with_capacity(n);
        for (i, frame) in frames.iter().enumerate() {
            stats.detections += frame.detections.len() as u64;
            stats.false_detections += frame.false_positives() as u64;
            let local_obs = local_observation_vector(frame, env);
            let entropies = frame_entropies(frame, entropy)?;
            let query = DsaQuery::new(frame.pose.position, state.env.time, &state.env.weather);
            let ambiguity = ambiguity_estimate(train.dsa_gate, models.dsa.as_ref(), entropy, &query, &entropies);
            let global_state = critic_input(env, train, &state.env, i, &state.prev_actions);
            let value_pred = models.value.infer(&global_state)?[0];
            let dist = models.policy.infer(&local_obs)?;
            let action = dist.sample(&mut rng);
            let log_prob_old = dist.log_prob(&action)?;
            commands.push(to_command(env, &action)?);
            pending.push(Transition {
                agent_index: i,
                local_obs,
                global_state,
                action,
                log_prob_old,
                reward: 0.0,
                value_pred,
                detection_entropies: entropies,
                dsa_query: crate::dsa::features(env.area_extent, env.max_steps, &query),
                ambiguity,
                info_delta: 0.0,
                done: false,
            });
        }

        let outcome = step(env, &mut state.env, &commands)?;
        stats.env_steps += 1;
        let next_frames = render_all(env, &state.env)?;
        let info_delta = joint_information(&next_frames, state.env.objects.len())? - info_curr;
        state.prev_actions.clear();
        for cmd in &commands {
            encode_command(env, cmd, &mut state.prev_actions);
        }
        for (i, mut t) in pending.into_iter().enumerate() {
            t.reward = outcome.rewards[i];
            t.info_delta = info_delta;
            t.done = outcome.done;
            state.returns[i] += t.reward;
            open[i].push(t);
        }

        if outcome.done {
            stats.episode_returns.push(mean(&state.returns));
            stats.episode_localized.push(localized_fraction(&state.env));
            for (i, transitions) in open.iter_mut().enumerate() {
                segments.push(Segment {
                    worker,
                    episode: state.episode,
                    agent_index: i,
                    transitions: std::mem::take(transitions),
                    bootstrap_value: 0.0,
                });
            }
            *state = WorkerState::start(env, seed, worker, state.episode + 1)?;
            frames = render_all(env, &state.env)?;
        } else {
            frames = next_frames;
        }
    }

    for (i, transitions) in open.into_iter().enumerate() {
        if transitions.is_empty() {
            continue;
        }
        let critic_in = critic_input(env, train, &state.env, i, &state.prev_actions);
        segments.push(Segment {
            worker,
            episode: state.episode,
            agent_index: i,
            transitions,
            bootstrap_value: models.value.infer(&critic_in)?[0],
        });
    }
    if state.env.time > 0 {
        stats.partial_returns.push(mean(&state.returns));
        stats.partial_localized.push(localized_fraction(&state.env));
    }
    Ok((segments, stats))
}

/// Runs every worker for one rollout under the current models and merges
/// the results in worker order.
pub(crate) fn collect_rollouts(
    ctx: &Context,
    workers: &mut [WorkerState],
) -> Result<(RolloutBuffer, RolloutStats)> {
    let results: Vec<Result<(Vec<Segment>, RolloutStats)>> = workers
        .par_iter_mut()
        .enumerate()
        .map(|(w, state)| {
            let replay_seed = episode_seed(ctx.seed, w, state.episode);
            let to_worker_err = |reason: String| Error::Worker {
                worker: w,
                seed: replay_seed,
                reason,
            };
            match catch_unwind(AssertUnwindSafe(|| run_worker(ctx, w, state))) {
                Ok(Ok(r)) => Ok(r),
                Ok(Err(e)) => Err(to_worker_err(e.to_string())),
                Err(panic) => {
                    let msg = panic
                        .downcast_ref::<&str>()
                        .map(|s| s.to_string())
                        .or_else(|| panic.downcast_ref::<String>().cloned())
                        .unwrap_or_else(|| "panic".into());
                    Err(to_worker_err(msg))
                }
            }
        })
        .collect();

    let total = workers.len() * ctx.train.rollout_length * ctx.env.num_uavs;
    let mut buffer = RolloutBuffer::new(ctx.train.rollout_length, total);
    let mut stats = RolloutStats::default();
    for r in results {
        let (segments, s) = r?;
        for seg in segments {
            buffer.push_segment(seg)?;
        }
        stats.merge(s);
    }
    Ok((buffer, stats))
}

pub fn build_models(env: &EnvConfig, train: &TrainConfig, dsa: Option<DsaModel>, seed: u64) -> Result<Models> {
    let mut rng = rng_for(seed, &[0x494e_4954]);
    let obs = actor_input_len();
    let policy = match env.action_mode {
        ActionMode::Continuous => PolicyNet::continuous(obs, action_dim(env), &mut rng)?,
        ActionMode::Discrete => PolicyNet::discrete(obs, action_dim(env), &mut rng)?,
    };
    let value = crate::nn::NetRole::Value.build(critic_input_len(env, train), 1, &mut rng)?;
    Ok(Models { policy, value, dsa })
}
