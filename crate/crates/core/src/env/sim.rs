use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;

use super::detector::render_observation;
use super::{
    ActionCommand, ActionMode, EnvConfig, ObjectClass, ObjectState, UavPose, WeatherState,
    WorldState, MIN_ALTITUDE,
};
use crate::error::{Error, Result};
use crate::seeding::{derive_seed, rng_for};

/// Per-step drift distance at reference amplitude, meters.
pub const DRIFT_STEP: f64 = 0.5;
/// Standard deviation of the drift heading random walk, radians per step.
pub const DRIFT_PHASE_STD: f64 = 0.2;
/// A person counts as localized once detected with at least this confidence...
pub const LOCALIZE_CONFIDENCE: f64 = 0.5;
/// ...from no further than this, meters.
pub const LOCALIZE_DISTANCE: f64 = 50.0;
/// Start altitudes are drawn from this fraction of the ceiling.
const START_ALTITUDE: [f64; 2] = [0.1, 0.3];

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub done: bool,
}

fn sample_range<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
    let u: f64 = rng.random();
    r[0] + (r[1] - r[0]) * u
}

pub(crate) fn footprint_side(config: &EnvConfig, pose: &UavPose) -> f64 {
    config.fov_scale * pose.altitude()
}

/// Whether a sea-surface point lies inside the UAV's square nadir footprint.
pub fn in_footprint(config: &EnvConfig, pose: &UavPose, point: [f64; 2]) -> bool {
    let half = footprint_side(config, pose) / 2.0;
    (point[0] - pose.position[0]).abs() <= half && (point[1] - pose.position[1]).abs() <= half
}

pub fn reset(config: &EnvConfig, seed: u64) -> Result<WorldState> {
    config.validate()?;
    let mut rng = rng_for(seed, &[0]);
    let [xmax, ymax, zmax] = config.area_extent;

    let weather = WeatherState {
        rain: sample_range(&mut rng, config.rain_range),
        fog: sample_range(&mut rng, config.fog_range),
        wave_length: sample_range(&mut rng, config.wave_length_range),
        wave_amplitude: sample_range(&mut rng, config.wave_amplitude_range),
    };

    let uavs = (0..config.num_uavs)
        .map(|_| {
            let x = rng.random::<f64>() * xmax;
            let y = rng.random::<f64>() * ymax;
            let z = sample_range(&mut rng, [START_ALTITUDE[0] * zmax, START_ALTITUDE[1] * zmax])
                .max(MIN_ALTITUDE.min(zmax));
            UavPose {
                position: [x, y, z],
            }
        })
        .collect();

    let classes = std::iter::repeat_n(ObjectClass::Ship, config.num_ships)
        .chain(std::iter::repeat_n(ObjectClass::Person, config.num_persons));
    let objects: Vec<ObjectState> = classes
        .enumerate()
        .map(|(id, class)| ObjectState {
            id,
            class,
            position: [rng.random::<f64>() * xmax, rng.random::<f64>() * ymax],
            drift_phase: rng.random::<f64>() * TAU,
        })
        .collect();

    let mut state = WorldState {
        time: 0,
        uavs,
        localized: vec![false; objects.len()],
        objects,
        weather,
        done: false,
        observation_seed: derive_seed(seed, &[1]),
        rng: rng_for(seed, &[2]),
    };
    update_localization(config, &mut state)?;
    Ok(state)
}

fn validate_action(config: &EnvConfig, action: &ActionCommand, index: usize) -> Result<()> {
    match (action, config.action_mode) {
        (ActionCommand::Continuous(v), ActionMode::Continuous) => {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::contract(format!("action {index} is not finite")));
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > config.max_velocity * (1.0 + 1e-9) {
                return Err(Error::contract(format!(
                    "action {index} speed {norm} exceeds max velocity {}",
                    config.max_velocity
                )));
            }
            Ok(())
        }
        (ActionCommand::Discrete(_), ActionMode::Discrete) => Ok(()),
        _ => Err(Error::contract(format!(
            "action {index} does not match action mode {:?}",
            config.action_mode
        ))),
    }
}

pub fn step(
    config: &EnvConfig,
    state: &mut WorldState,
    joint_actions: &[ActionCommand],
) -> Result<StepOutcome> {
    if state.done {
        return Err(Error::contract("step called on a finished episode"));
    }
    if joint_actions.len() != state.uavs.len() {
        return Err(Error::contract(format!(
            "expected {} actions, got {}",
            state.uavs.len(),
            joint_actions.len()
        )));
    }
    for (i, a) in joint_actions.iter().enumerate() {
        validate_action(config, a, i)?;
    }

    let [xmax, ymax, zmax] = config.area_extent;
    for (uav, action) in state.uavs.iter_mut().zip(joint_actions) {
        let velocity = match action {
            ActionCommand::Continuous(v) => *v,
            ActionCommand::Discrete(m) => m.direction().map(|d| d * config.max_velocity),
        };
        let p = &mut uav.position;
        p[0] = (p[0] + velocity[0]).clamp(0.0, xmax);
        p[1] = (p[1] + velocity[1]).clamp(0.0, ymax);
        p[2] = (p[2] + velocity[2]).clamp(MIN_ALTITUDE.min(zmax), zmax);
    }

    drift_objects(config, state);
    state.time += 1;
    update_localization(config, state)?;
    let all_found = state.num_persons() > 0 && state.persons_localized() == state.num_persons();
    state.done = state.time >= config.max_steps || all_found;

    let rewards = (0..state.uavs.len())
        .map(|i| reward(config, state, i))
        .collect::<Result<_>>()?;
    Ok(StepOutcome {
        rewards,
        done: state.done,
    })
}

/// Moves every object one wave-driven step.
pub(crate) fn drift_objects(config: &EnvConfig, state: &mut WorldState) {
    let [xmax, ymax, _] = config.area_extent;
    let stride = DRIFT_STEP * state.weather.amplitude_norm();
    for obj in &mut state.objects {
        let noise: f64 = state.rng.sample(StandardNormal);
        obj.drift_phase = (obj.drift_phase + DRIFT_PHASE_STD * noise).rem_euclid(TAU);
        obj.position[0] = (obj.position[0] + stride * obj.drift_phase.cos()).clamp(0.0, xmax);
        obj.position[1] = (obj.position[1] + stride * obj.drift_phase.sin()).clamp(0.0, ymax);
    }
}

fn update_localization(config: &EnvConfig, state: &mut WorldState) -> Result<()> {
    for i in 0..state.uavs.len() {
        let frame = render_observation(config, state, i)?;
        for det in &frame.detections {
            if let Some(id) = det.object_id {
                if det.class_label == ObjectClass::Person
                    && det.confidence >= LOCALIZE_CONFIDENCE
                    && det.distance <= LOCALIZE_DISTANCE
                {
                    state.localized[id] = true;
                }
            }
        }
    }
    Ok(())
}

/// Number of ground-truth objects inside the UAV's footprint.
pub fn reward(config: &EnvConfig, state: &WorldState, uav_index: usize) -> Result<f64> {
    let pose = state
        .uavs
        .get(uav_index)
        .ok_or_else(|| Error::contract(format!("uav index {uav_index} out of range")))?;
    Ok(state
        .objects
        .iter()
        .filter(|o| in_footprint(config, pose, o.position))
        .count() as f64)
}
