use std::path::Path;

use sha2::{Digest, Sha256};

use crate::ambiguity::EntropyConfig;
use crate::checkpoint::{read_adam, read_mlp, read_rng, write_adam, write_mlp, write_rng, Container, Reader, Writer};
use crate::dsa::DsaModel;
use crate::env::{EnvConfig, ObjectClass, ObjectState, UavPose, WeatherState, WorldState};
use crate::error::{Error, Result};
use crate::nn::{Adam, NetRole, PolicyNet};
use crate::seeding::RngState;

use super::rollout::{Models, WorkerState};
use super::TrainConfig;

/// Everything needed to continue a training run exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointBundle {
    pub models: Models,
    pub policy_opt: Adam,
    pub value_opt: Adam,
    /// Completed iterations.
    pub iteration: u64,
    pub env_steps: u64,
    /// Base seed of every random stream in the run.
    pub seed: u64,
    pub workers: Vec<WorkerState>,
    pub config_digest: [u8; 32],
}

/// Hash of the settings a run cannot change on resume. Seeds, the iteration
/// budget and bookkeeping options are excluded.
pub fn config_digest(env: &EnvConfig, entropy: &EntropyConfig, train: &TrainConfig) -> [u8; 32] {
    #[derive(serde::Serialize)]
    struct View<'a> {
        env: &'a EnvConfig,
        ambiguity: &'a EntropyConfig,
        train: &'a TrainConfig,
    }
    let mut env = env.clone();
    env.seed = 0;
    let mut train = train.clone();
    train.seed = 0;
    train.total_iterations = 0;
    train.eval_every = 0;
    train.eval_episodes = 0;
    train.checkpoint_every = 0;
    train.record_wall_time = false;
    let text = toml::to_string(&View {
        env: &env,
        ambiguity: entropy,
        train: &train,
    })
    .expect("config serializes");
    Sha256::digest(text.as_bytes()).into()
}

fn bad(reason: impl Into<String>) -> Error {
    Error::format("checkpoint", reason)
}

fn write_world(w: &mut Writer, s: &WorldState) {
    w.u32(s.time);
    w.bool(s.done);
    w.u64(s.observation_seed);
    for v in [s.weather.rain, s.weather.fog, s.weather.wave_length, s.weather.wave_amplitude] {
        w.f64(v);
    }
    w.u64(s.uavs.len() as u64);
    for u in &s.uavs {
        u.position.iter().for_each(|&x| w.f64(x));
    }
    w.u64(s.objects.len() as u64);
    for (o, &loc) in s.objects.iter().zip(&s.localized) {
        w.u64(o.id as u64);
        w.u8(o.class.index() as u8);
        w.f64(o.position[0]);
        w.f64(o.position[1]);
        w.f64(o.drift_phase);
        w.bool(loc);
    }
    write_rng(w, &RngState::capture(&s.rng));
}

fn read_world(r: &mut Reader) -> Result<WorldState> {
    let time = r.u32()?;
    let done = r.bool()?;
    let observation_seed = r.u64()?;
    let weather = WeatherState {
        rain: r.f64()?,
        fog: r.f64()?,
        wave_length: r.f64()?,
        wave_amplitude: r.f64()?,
    };
    let n = r.count(24)?;
    let mut uavs = Vec::with_capacity(n);
    for _ in 0..n {
        uavs.push(UavPose {
            position: [r.f64()?, r.f64()?, r.f64()?],
        });
    }
    let n = r.count(34)?;
    let mut objects = Vec::with_capacity(n);
    let mut localized = Vec::with_capacity(n);
    for k in 0..n {
        let id = r.u64()?;
        if id != k as u64 {
            return Err(bad("object ids must be sequential"));
        }
        let class = ObjectClass::from_index(r.u8()? as usize).ok_or_else(|| bad("unknown object class"))?;
        objects.push(ObjectState {
            id: k,
            class,
            position: [r.f64()?, r.f64()?],
            drift_phase: r.f64()?,
        });
        localized.push(r.bool()?);
    }
    let rng = read_rng(r)?.restore();
    let finite = uavs.iter().flat_map(|u| u.position).all(f64::is_finite)
        && objects
            .iter()
            .all(|o| o.position.iter().all(|c| c.is_finite()) && o.drift_phase.is_finite());
    if !finite {
        return Err(bad("non-finite position in worker state"));
    }
    let weather_ok = (0.0..=1.0).contains(&weather.rain)
        && (0.0..=1.0).contains(&weather.fog)
        && weather.wave_length.is_finite()
        && weather.wave_amplitude.is_finite()
        && weather.wave_amplitude >= 0.0;
    if !weather_ok {
        return Err(bad("weather out of range in worker state"));
    }
    Ok(WorldState {
        time,
        uavs,
        objects,
        weather,
        localized,
        done,
        observation_seed,
        rng,
    })
}

impl CheckpointBundle {
    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        let mut add = |name: &str, w: Writer| c.insert(name, w.finish()).expect("unique section names");

        let mut w = Writer::new();
        w.bytes(&self.config_digest);
        w.u64(self.iteration);
        w.u64(self.env_steps);
        w.u64(self.seed);
        add("meta", w);

        let mut w = Writer::new();
        write_mlp(&mut w, &self.models.policy.net);
        match &self.models.policy.log_std {
            Some(s) => {
                w.bool(true);
                w.f64s(s);
            }
            None => w.bool(false),
        }
        add(NetRole::Policy.tag(), w);

        let mut w = Writer::new();
        write_mlp(&mut w, &self.models.value);
        add(NetRole::Value.tag(), w);

        let mut w = Writer::new();
        write_adam(&mut w, &self.policy_opt);
        add("optim.policy", w);
        let mut w = Writer::new();
        write_adam(&mut w, &self.value_opt);
        add("optim.value", w);

        let mut w = Writer::new();
        w.u64(self.workers.len() as u64);
        for ws in &self.workers {
            write_world(&mut w, &ws.env);
            w.u64(ws.episode);
            w.f64s(&ws.returns);
            w.f64s(&ws.prev_actions);
        }
        add("workers", w);

        if let Some(dsa) = &self.models.dsa {
            let inner = dsa.to_container();
            for name in inner.names() {
                c.insert(name, inner.section(name).expect("listed").to_vec())
                    .expect("dsa sections are unique");
            }
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let mut r = Reader::new(c.section("meta")?);
        let config_digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let iteration = r.u64()?;
        let env_steps = r.u64()?;
        let seed = r.u64()?;
        r.finish()?;

        let mut r = Reader::new(c.section(NetRole::Policy.tag())?);
        let net = read_mlp(&mut r)?;
        let log_std = if r.bool()? { Some(r.f64s()?) } else { None };
        r.finish()?;
        if let Some(s) = &log_std {
            if s.len() != net.output_size() || s.iter().any(|v| !v.is_finite()) {
                return Err(bad("log-std does not match the policy output"));
            }
        }
        let policy = PolicyNet { net, log_std };

        let mut r = Reader::new(c.section(NetRole::Value.tag())?);
        let value = read_mlp(&mut r)?;
        r.finish()?;
        if value.output_size() != 1 {
            return Err(bad("value network must have one output"));
        }

        let mut r = Reader::new(c.section("optim.policy")?);
        let policy_opt = read_adam(&mut r)?;
        r.finish()?;
        let mut r = Reader::new(c.section("optim.value")?);
        let value_opt = read_adam(&mut r)?;
        r.finish()?;
        if policy_opt.len() != policy.num_params() || value_opt.len() != value.num_params() {
            return Err(bad("optimizer state does not match the networks"));
        }

        let mut r = Reader::new(c.section("workers")?);
        let n = r.count(1)?;
        let mut workers = Vec::with_capacity(n);
        for _ in 0..n {
            let env = read_world(&mut r)?;
            let episode = r.u64()?;
            let returns = r.f64s()?;
            let prev_actions = r.f64s()?;
            if returns.len() != env.uavs.len() {
                return Err(bad("worker return count does not match its UAVs"));
            }
            if returns.iter().chain(&prev_actions).any(|v| !v.is_finite()) {
                return Err(bad("non-finite worker bookkeeping"));
            }
            workers.push(WorkerState {
                env,
                episode,
                returns,
                prev_actions,
            });
        }
        r.finish()?;

        let dsa = if c.contains(NetRole::Dsa.tag()) {
            Some(DsaModel::from_container(c)?)
        } else {
            None
        };

        Ok(Self {
            models: Models { policy, value, dsa },
            policy_opt,
            value_opt,
            iteration,
            env_steps,
            seed,
            workers,
            config_digest,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        self.to_container().encode()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        Self::from_container(&Container::decode(bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}
