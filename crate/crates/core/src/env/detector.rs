//! Parametric stand-in for an image object detector.
//!
//! Confidence for a visible object is
//! `v_class * exp(-d / d0) * (1 - beta * W / 2) * (1 - alpha * a * |xi|)`,
//! clamped to [0,1], where `d` is the UAV-object distance, `W` the weather
//! composite, `a` the normalized wave amplitude and `xi` standard normal.
//! Wave glint adds false positives at a rate proportional to `a`.

use rand::Rng;
use rand_distr::StandardNormal;

use super::sim::footprint_side;
use super::{EnvConfig, ObjectClass, UavPose, WeatherState, WorldState};
use crate::error::{Error, Result};
use crate::seeding::rng_for;

pub const SHIP_VISIBILITY: f64 = 0.95;
pub const PERSON_VISIBILITY: f64 = 0.75;
/// Distance scale of confidence decay, meters.
pub const DECAY_DISTANCE: f64 = 120.0;
pub const WEATHER_PENALTY: f64 = 0.6;
pub const WAVE_NOISE: f64 = 0.5;
pub const GLINT_RATE: f64 = 0.05;
pub const GLINT_CONFIDENCE: [f64; 2] = [0.1, 0.4];
pub const FRAME_PIXELS: f64 = 640.0;

const SHIP_SIZE_M: f64 = 20.0;
const PERSON_SIZE_M: f64 = 1.5;
const MIN_BOX_PX: f64 = 1.0;

pub fn visibility(class: ObjectClass) -> f64 {
    match class {
        ObjectClass::Ship => SHIP_VISIBILITY,
        ObjectClass::Person => PERSON_VISIBILITY,
    }
}

/// Detector confidence for a visible object at distance `distance`.
pub fn confidence(class: ObjectClass, distance: f64, weather: &WeatherState, xi: f64) -> f64 {
    let p = visibility(class)
        * (-distance / DECAY_DISTANCE).exp()
        * (1.0 - WEATHER_PENALTY * weather.composite() / 2.0)
        * (1.0 - WAVE_NOISE * weather.amplitude_norm() * xi.abs());
    p.clamp(0.0, 1.0)
}

pub fn glint_probability(weather: &WeatherState) -> f64 {
    (GLINT_RATE * weather.amplitude_norm()).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    /// `None` for a false positive.
    pub object_id: Option<usize>,
    pub class_label: ObjectClass,
    /// Box center in pixels of a 640x640 virtual frame.
    pub bbox_center: [f64; 2],
    pub bbox_size: [f64; 2],
    pub confidence: f64,
    /// UAV-object distance; zero for false positives.
    pub distance: f64,
}

impl DetectionRecord {
    pub fn is_false_positive(&self) -> bool {
        self.object_id.is_none()
    }
}

/// What one UAV's camera reports at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationFrame {
    pub uav_index: usize,
    pub pose: UavPose,
    pub detections: Vec<DetectionRecord>,
    pub weather_snapshot: WeatherState,
}

impl ObservationFrame {
    pub fn confidences(&self) -> impl Iterator<Item = f64> + '_ {
        self.detections.iter().map(|d| d.confidence)
    }

    pub fn false_positives(&self) -> usize {
        self.detections.iter().filter(|d| d.is_false_positive()).count()
    }
}

fn place_box(center: f64, size: f64) -> f64 {
    center.clamp(size / 2.0, FRAME_PIXELS - size / 2.0)
}

/// Renders the detector output for one UAV. Pure in `state`: the noise
/// stream is keyed by the episode's observation seed, the time step and the
/// UAV index.
pub fn render_observation(
    config: &EnvConfig,
    state: &WorldState,
    uav_index: usize,
) -> Result<ObservationFrame> {
    let pose = *state.uavs.get(uav_index).ok_or_else(|| {
        Error::contract(format!(
            "uav index {uav_index} out of range ({} UAVs)",
            state.uavs.len()
        ))
    })?;
    let mut rng = rng_for(
        state.observation_seed,
        &[u64::from(state.time), uav_index as u64],
    );
    let weather = state.weather;
    let side = footprint_side(config, &pose);
    let [ux, uy, uz] = pose.position;
    let px_per_m = FRAME_PIXELS / side;

    let mut detections = Vec::new();
    for obj in &state.objects {
        let dx = obj.position[0] - ux;
        let dy = obj.position[1] - uy;
        if dx.abs() > side / 2.0 || dy.abs() > side / 2.0 {
            continue;
        }
        let distance = (dx * dx + dy * dy + uz * uz).sqrt();
        let xi: f64 = rng.sample(StandardNormal);
        let size_m = match obj.class {
            ObjectClass::Ship => SHIP_SIZE_M,
            ObjectClass::Person => PERSON_SIZE_M,
        };
        // pixels per meter fall off as altitude / distance
        let size = (size_m * px_per_m * uz / distance).clamp(MIN_BOX_PX, FRAME_PIXELS);
        let u = (dx / side + 0.5) * FRAME_PIXELS;
        let v = (dy / side + 0.5) * FRAME_PIXELS;
        detections.push(DetectionRecord {
            object_id: Some(obj.id),
            class_label: obj.class,
            bbox_center: [place_box(u, size), place_box(v, size)],
            bbox_size: [size, size],
            confidence: confidence(obj.class, distance, &weather, xi),
            distance,
        });
    }

    let glint: f64 = rng.random();
    if glint < glint_probability(&weather) {
        let class = if rng.random::<bool>() {
            ObjectClass::Ship
        } else {
            ObjectClass::Person
        };
        let confidence = rng.random_range(GLINT_CONFIDENCE[0]..GLINT_CONFIDENCE[1]);
        let size = rng.random_range(4.0..24.0);
        let u = rng.random_range(0.0..FRAME_PIXELS);
        let v = rng.random_range(0.0..FRAME_PIXELS);
        detections.push(DetectionRecord {
            object_id: None,
            class_label: class,
            bbox_center: [place_box(u, size), place_box(v, size)],
            bbox_size: [size, size],
            confidence,
            distance: 0.0,
        });
    }

    Ok(ObservationFrame {
        uav_index,
        pose,
        detections,
        weather_snapshot: weather,
    })
}
