//! Partially observable maritime search simulator.
//!
//! UAVs with nadir cameras search a sea surface on which ships and persons
//! drift with the waves. Each UAV sees only what falls inside its camera
//! footprint, through a synthetic detector whose confidence degrades with
//! distance, weather and sea state.

mod config;
pub mod detector;
mod encode;
mod sim;

pub use config::{ActionMode, EnvConfig};
pub use detector::{render_observation, DetectionRecord, ObservationFrame, FRAME_PIXELS};
pub use encode::{
    global_state_len, global_state_vector, local_observation_len, local_observation_vector,
    TOP_K_DETECTIONS,
};
pub use sim::{in_footprint, reset, reward, step, StepOutcome};
pub(crate) use sim::drift_objects;

use rand_chacha::ChaCha8Rng;

/// Amplitude at which wave effects reach full strength.
pub const AMPLITUDE_REFERENCE: f64 = 80.0;
/// Lowest altitude a UAV may descend to, meters.
pub const MIN_ALTITUDE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectClass {
    Ship,
    Person,
}

impl ObjectClass {
    pub fn index(self) -> usize {
        match self {
            ObjectClass::Ship => 0,
            ObjectClass::Person => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(ObjectClass::Ship),
            1 => Some(ObjectClass::Person),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherState {
    pub rain: f64,
    pub fog: f64,
    pub wave_length: f64,
    pub wave_amplitude: f64,
}

impl WeatherState {
    /// Rain plus fog, in [0, 2].
    pub fn composite(&self) -> f64 {
        self.rain + self.fog
    }

    /// Wave amplitude relative to the reference amplitude.
    pub fn amplitude_norm(&self) -> f64 {
        self.wave_amplitude / AMPLITUDE_REFERENCE
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectState {
    pub id: usize,
    pub class: ObjectClass,
    /// Sea-surface coordinates, meters.
    pub position: [f64; 2],
    pub drift_phase: f64,
}

/// Camera always points straight down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavPose {
    pub position: [f64; 3],
}

impl UavPose {
    pub fn altitude(&self) -> f64 {
        self.position[2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    PlusX,
    MinusX,
    PlusY,
    MinusY,
    PlusZ,
    MinusZ,
    Hover,
}

impl Move {
    pub const ALL: [Move; 7] = [
        Move::PlusX,
        Move::MinusX,
        Move::PlusY,
        Move::MinusY,
        Move::PlusZ,
        Move::MinusZ,
        Move::Hover,
    ];

    pub fn direction(self) -> [f64; 3] {
        match self {
            Move::PlusX => [1.0, 0.0, 0.0],
            Move::MinusX => [-1.0, 0.0, 0.0],
            Move::PlusY => [0.0, 1.0, 0.0],
            Move::MinusY => [0.0, -1.0, 0.0],
            Move::PlusZ => [0.0, 0.0, 1.0],
            Move::MinusZ => [0.0, 0.0, -1.0],
            Move::Hover => [0.0, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionCommand {
    /// Velocity in meters per step.
    Continuous([f64; 3]),
    Discrete(Move),
}

impl ActionCommand {
    pub fn hover(mode: ActionMode) -> Self {
        match mode {
            ActionMode::Continuous => ActionCommand::Continuous([0.0; 3]),
            ActionMode::Discrete => ActionCommand::Discrete(Move::Hover),
        }
    }

    /// Scales a raw velocity down onto the `max_velocity` ball if needed.
    pub fn clamped_velocity(raw: &[f64], max_velocity: f64) -> Self {
        let mut v = [0.0; 3];
        for (dst, src) in v.iter_mut().zip(raw) {
            *dst = if src.is_finite() { *src } else { 0.0 };
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > max_velocity {
            let s = max_velocity / norm;
            v.iter_mut().for_each(|x| *x *= s);
        }
        ActionCommand::Continuous(v)
    }
}

/// Full simulator state.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub time: u32,
    pub uavs: Vec<UavPose>,
    pub objects: Vec<ObjectState>,
    pub weather: WeatherState,
    /// Per object; only persons are ever marked.
    pub localized: Vec<bool>,
    pub done: bool,
    /// Keys the per-frame detector noise.
    pub observation_seed: u64,
    /// Drives object drift.
    pub rng: ChaCha8Rng,
}

impl WorldState {
    pub fn persons_localized(&self) -> usize {
        self.objects
            .iter()
            .zip(&self.localized)
            .filter(|(o, l)| o.class == ObjectClass::Person && **l)
            .count()
    }

    pub fn num_persons(&self) -> usize {
        self.objects
            .iter()
            .filter(|o| o.class == ObjectClass::Person)
            .count()
    }
}
