//! Centralized-critic, shared-actor training loop.
//!
//! Every iteration broadcasts the current networks to independent environment
//! workers, gathers a fixed-length rollout from each, and then runs a
//! clipped-surrogate update with either the ambiguity-gated entropy penalty
//! or the plain baseline objective.

mod bundle;
mod config;
mod metrics;
mod rollout;
mod update;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;

pub use bundle::{config_digest, CheckpointBundle};
pub use config::{Algorithm, TrainConfig};
pub use metrics::{
    compare_runs, downsample, initial_window, mean_return, ols_slope, read_metrics_csv, terminal_window,
    write_metrics_csv, MetricsRow, MetricsWriter, SlopeReport, METRICS_HEADER,
};
pub use rollout::{
    action_dim, actor_input_len, ambiguity_estimate, build_models, critic_input, critic_input_len,
    episode_seed, frame_entropies, joint_information, render_all, to_command, Models, RolloutStats,
    WorkerState,
};
pub use update::{update, UpdateReport};

use crate::ambiguity::EntropyConfig;
use crate::dsa::{DsaGate, DsaModel, DsaQuery};
use crate::env::{reset, step, ActionCommand, ActionMode, EnvConfig, Move};
use crate::error::{Error, Result};
use crate::nn::{Adam, PolicyAction};
use crate::rl::RolloutBuffer;
use crate::seeding::{derive_seed, rng_for};

const EVAL_STREAM: u64 = 0x4556_414c;

fn mean_or(v: &[f64], fallback: f64) -> f64 {
    if v.is_empty() {
        fallback
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn rate(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Largest achievable per-agent return: every object in view at every step.
pub fn return_upper_bound(env: &EnvConfig) -> f64 {
    (env.num_objects() as f64) * f64::from(env.max_steps)
}

pub fn normalized_return(env: &EnvConfig, mean_return: f64) -> f64 {
    (mean_return / return_upper_bound(env)).clamp(0.0, 1.0)
}

/// Collects one rollout with the given models; exposed for inspection and
/// testing. Worker states advance exactly as they would during training.
#[allow(clippy::too_many_arguments)]
pub fn collect_rollouts(
    models: &Models,
    env: &EnvConfig,
    entropy: &EntropyConfig,
    train: &TrainConfig,
    workers: &mut [WorkerState],
    seed: u64,
    iteration: u64,
) -> Result<(RolloutBuffer, RolloutStats)> {
    let ctx = rollout::Context {
        env,
        entropy,
        train,
        models,
        seed,
        iteration,
    };
    rollout::collect_rollouts(&ctx, workers)
}

pub fn initial_workers(env: &EnvConfig, workers: usize, seed: u64) -> Result<Vec<WorkerState>> {
    (0..workers).map(|w| WorkerState::start(env, seed, w, 0)).collect()
}

pub struct Trainer {
    env: EnvConfig,
    entropy: EntropyConfig,
    cfg: TrainConfig,
    bundle: CheckpointBundle,
    started: Instant,
}

impl Trainer {
    pub fn new(
        env: EnvConfig,
        entropy: EntropyConfig,
        cfg: TrainConfig,
        dsa: Option<DsaModel>,
        seed: u64,
    ) -> Result<Self> {
        env.validate()?;
        entropy.validate()?;
        cfg.validate()?;
        if cfg.algorithm == Algorithm::Erppo && cfg.dsa_gate == DsaGate::Learned && dsa.is_none() {
            return Err(Error::config(
                "dsa_gate",
                "the learned gate needs a fitted ambiguity model; run `survey` and `dsa-train` first",
            ));
        }
        let models = build_models(&env, &cfg, dsa, seed)?;
        let bundle = CheckpointBundle {
            policy_opt: Adam::new(models.policy.num_params(), cfg.learning_rate),
            value_opt: Adam::new(models.value.num_params(), cfg.learning_rate),
            models,
            iteration: 0,
            env_steps: 0,
            seed,
            workers: initial_workers(&env, cfg.num_env_workers, seed)?,
            config_digest: config_digest(&env, &entropy, &cfg),
        };
        Ok(Self {
            env,
            entropy,
            cfg,
            bundle,
            started: Instant::now(),
        })
    }

    /// Continues from a checkpoint. With `reseed`, the networks and
    /// optimizer state are kept but every environment restarts from fresh
    /// draws under the new seed.
    pub fn resume(
        env: EnvConfig,
        entropy: EntropyConfig,
        cfg: TrainConfig,
        mut bundle: CheckpointBundle,
        reseed: Option<u64>,
    ) -> Result<Self> {
        env.validate()?;
        entropy.validate()?;
        cfg.validate()?;
        if bundle.config_digest != config_digest(&env, &entropy, &cfg) {
            return Err(Error::config(
                "checkpoint",
                "checkpoint was written under a different configuration",
            ));
        }
        if bundle.workers.len() != cfg.num_env_workers {
            return Err(Error::config(
                "num_env_workers",
                format!("checkpoint holds {} workers", bundle.workers.len()),
            ));
        }
        if let Some(seed) = reseed {
            bundle.seed = seed;
            bundle.workers = initial_workers(&env, cfg.num_env_workers, seed)?;
        }
        Ok(Self {
            env,
            entropy,
            cfg,
            bundle,
            started: Instant::now(),
        })
    }

    pub fn bundle(&self) -> &CheckpointBundle {
        &self.bundle
    }

    pub fn into_bundle(self) -> CheckpointBundle {
        self.bundle
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn iteration(&self) -> u64 {
        self.bundle.iteration
    }

    pub fn finished(&self) -> bool {
        self.bundle.iteration >= self.cfg.total_iterations
    }

    /// One collect-then-update iteration.
    pub fn step(&mut self) -> Result<MetricsRow> {
        let b = &mut self.bundle;
        let iteration = b.iteration;
        let (buffer, stats) = collect_rollouts(
            &b.models,
            &self.env,
            &self.entropy,
            &self.cfg,
            &mut b.workers,
            b.seed,
            iteration,
        )?;
        let report = update(
            &mut b.models,
            &mut b.policy_opt,
            &mut b.value_opt,
            &buffer,
            &self.cfg,
            b.seed,
            iteration,
        )?;
        b.iteration += 1;
        b.env_steps += stats.env_steps;

        let mean_return = mean_or(&stats.episode_returns, mean_or(&stats.partial_returns, 0.0));
        let localized = mean_or(&stats.episode_localized, mean_or(&stats.partial_localized, 0.0));
        Ok(MetricsRow {
            iteration: b.iteration,
            env_steps: b.env_steps,
            mean_episode_return: mean_return,
            normalized_return: normalized_return(&self.env, mean_return),
            value_loss: report.value_loss,
            clip_loss: report.clip_loss,
            entropy_term: report.entropy_term,
            branch_fraction_l1: report.branch_fraction_l1,
            expected_ambiguity_mean: report.expected_ambiguity,
            persons_localized_rate: localized,
            false_detection_rate: rate(stats.false_detections, stats.detections),
            wall_time_s: self.elapsed(),
        })
    }

    fn elapsed(&self) -> f64 {
        if self.cfg.record_wall_time {
            self.started.elapsed().as_secs_f64()
        } else {
            0.0
        }
    }

    /// Greedy evaluation of the current policy.
    pub fn evaluate(&self, episodes: usize, seed: u64) -> Result<MetricsRow> {
        let mut row = evaluate(
            &self.bundle.models,
            &self.env,
            &self.entropy,
            self.cfg.dsa_gate,
            Actor::Greedy,
            episodes,
            seed,
        )?;
        row.iteration = self.bundle.iteration;
        row.env_steps = self.bundle.env_steps;
        row.wall_time_s = self.elapsed();
        Ok(row)
    }
}

/// Trains in memory until `total_iterations`, returning the final state and
/// one metrics row per iteration.
pub fn train(
    env: &EnvConfig,
    entropy: &EntropyConfig,
    cfg: &TrainConfig,
    dsa: Option<DsaModel>,
    seed: u64,
) -> Result<(CheckpointBundle, Vec<MetricsRow>)> {
    let mut t = Trainer::new(env.clone(), *entropy, cfg.clone(), dsa, seed)?;
    let mut rows = Vec::new();
    while !t.finished() {
        rows.push(t.step()?);
    }
    Ok((t.into_bundle(), rows))
}

/// How actions are chosen during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Actor {
    /// Gaussian mean or most likely move.
    Greedy,
    /// Uniform over the action space, ignoring the policy.
    Random,
}

/// Runs `episodes` full episodes from seeds derived from `seed`. Loss
/// columns are zero; `iteration` and `env_steps` are left for the caller.
pub fn evaluate(
    models: &Models,
    env: &EnvConfig,
    entropy: &EntropyConfig,
    gate: DsaGate,
    actor: Actor,
    episodes: usize,
    seed: u64,
) -> Result<MetricsRow> {
    if episodes == 0 {
        return Err(Error::contract("evaluation needs at least one episode"));
    }
    env.validate()?;
    let mut returns = Vec::with_capacity(episodes);
    let mut localized = Vec::with_capacity(episodes);
    let (mut detections, mut false_detections) = (0u64, 0u64);
    let (mut ambiguity_sum, mut ambiguity_n) = (0.0, 0u64);
    let mut rng = rng_for(seed, &[EVAL_STREAM]);

    for ep in 0..episodes {
        let mut state = reset(env, derive_seed(seed, &[EVAL_STREAM, ep as u64]))?;
        let mut ep_returns = vec![0.0; env.num_uavs];
        while !state.done {
            let frames = render_all(env, &state)?;
            let mut commands = Vec::with_capacity(env.num_uavs);
            for frame in &frames {
                detections += frame.detections.len() as u64;
                false_detections += frame.false_positives() as u64;
                let entropies = frame_entropies(frame, entropy)?;
                let query = DsaQuery::new(frame.pose.position, state.time, &state.weather);
                ambiguity_sum += ambiguity_estimate(gate, models.dsa.as_ref(), entropy, &query, &entropies);
                ambiguity_n += 1;
                let cmd = match actor {
                    Actor::Greedy => {
                        let obs = crate::env::local_observation_vector(frame, env);
                        to_command(env, &models.policy.infer(&obs)?.mode())?
                    }
                    Actor::Random => random_command(env, &mut rng),
                };
                commands.push(cmd);
            }
            let outcome = step(env, &mut state, &commands)?;
            for (r, o) in ep_returns.iter_mut().zip(&outcome.rewards) {
                *r += o;
            }
        }
        returns.push(mean_or(&ep_returns, 0.0));
        localized.push(match state.num_persons() {
            0 => 0.0,
            n => state.persons_localized() as f64 / n as f64,
        });
    }

    let mean_return = mean_or(&returns, 0.0);
    Ok(MetricsRow {
        mean_episode_return: mean_return,
        normalized_return: normalized_return(env, mean_return),
        expected_ambiguity_mean: if ambiguity_n == 0 {
            0.0
        } else {
            ambiguity_sum / ambiguity_n as f64
        },
        persons_localized_rate: mean_or(&localized, 0.0),
        false_detection_rate: rate(false_detections, detections),
        ..Default::default()
    })
}

fn random_command<R: Rng + ?Sized>(env: &EnvConfig, rng: &mut R) -> ActionCommand {
    match env.action_mode {
        ActionMode::Continuous => {
            let v = env.max_velocity;
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(-v..=v)).collect();
            ActionCommand::clamped_velocity(&raw, v)
        }
        ActionMode::Discrete => ActionCommand::Discrete(Move::ALL[rng.random_range(0..Move::ALL.len())]),
    }
}

/// Converts a sampled action for the environment; re-exported for callers
/// that drive the simulator with a policy directly.
pub fn policy_command(env: &EnvConfig, action: &PolicyAction) -> Result<ActionCommand> {
    to_command(env, action)
}

pub fn checkpoint_path(out: &Path, iteration: u64) -> PathBuf {
    out.join("checkpoints").join(format!("iter_{iteration}.ckpt"))
}

/// Keeps rows up to `iteration` from an existing CSV, if any.
fn retained_rows(path: &Path, iteration: u64) -> Result<Vec<MetricsRow>> {
    if iteration == 0 || !path.exists() {
        return Ok(Vec::new());
    }
    let f = fs::File::open(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(read_metrics_csv(f)?
        .into_iter()
        .filter(|r| r.iteration <= iteration)
        .collect())
}

fn open_metrics(path: &Path, keep: &[MetricsRow]) -> Result<MetricsWriter<BufWriter<fs::File>>> {
    let f = fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = MetricsWriter::new(BufWriter::new(f))?;
    keep.iter().try_for_each(|r| w.write(r))?;
    Ok(w)
}

/// Runs the trainer to completion, writing `metrics.csv`, `eval.csv` and
/// checkpoints under `out`. When resuming, rows past the checkpoint's
/// iteration are dropped from the existing CSVs before new rows are appended.
pub fn run_to_dir(
    trainer: &mut Trainer,
    out: &Path,
    mut on_row: impl FnMut(&MetricsRow),
) -> Result<Vec<MetricsRow>> {
    fs::create_dir_all(out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    let start = trainer.iteration();
    let metrics_path = out.join("metrics.csv");
    let eval_path = out.join("eval.csv");
    let mut metrics = open_metrics(&metrics_path, &retained_rows(&metrics_path, start)?)?;
    let eval_keep = retained_rows(&eval_path, start)?;
    let mut eval = if trainer.cfg.eval_every > 0 {
        Some(open_metrics(&eval_path, &eval_keep)?)
    } else {
        None
    };

    let mut rows = Vec::new();
    let mut last_saved = None;
    while !trainer.finished() {
        let row = trainer.step()?;
        metrics.write(&row)?;
        on_row(&row);
        rows.push(row);
        let it = trainer.iteration();
        if let Some(w) = eval.as_mut() {
            if it.is_multiple_of(trainer.cfg.eval_every) {
                let seed = derive_seed(trainer.bundle.seed, &[EVAL_STREAM, it]);
                w.write(&trainer.evaluate(trainer.cfg.eval_episodes, seed)?)?;
            }
        }
        if trainer.cfg.checkpoint_every > 0 && it.is_multiple_of(trainer.cfg.checkpoint_every) {
            trainer.bundle.save(&checkpoint_path(out, it))?;
            last_saved = Some(it);
        }
    }
    if last_saved != Some(trainer.iteration()) {
        trainer.bundle.save(&checkpoint_path(out, trainer.iteration()))?;
    }
    Ok(rows)
}
