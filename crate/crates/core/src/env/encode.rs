//! Fixed-length vector encodings for the actor and the centralized critic.

use super::detector::FRAME_PIXELS;
use super::{EnvConfig, ObservationFrame, WeatherState, WorldState};

pub const TOP_K_DETECTIONS: usize = 4;
const DETECTION_WIDTH: usize = 7;
const WEATHER_WIDTH: usize = 4;

pub fn global_state_len(config: &EnvConfig) -> usize {
    3 * config.num_uavs + 2 * config.num_objects() + WEATHER_WIDTH + 1
}

pub fn local_observation_len() -> usize {
    3 + WEATHER_WIDTH + TOP_K_DETECTIONS * DETECTION_WIDTH
}

fn unit(x: f64) -> f64 {
    if x.is_finite() {
        x.clamp(0.0, 1.0)
    } else {
        0.0
    }
}

fn weather_features(config: &EnvConfig, w: &WeatherState) -> [f64; WEATHER_WIDTH] {
    let length_scale = config.wave_length_range[1];
    let length_norm = if length_scale > 0.0 {
        w.wave_length / length_scale
    } else {
        0.0
    };
    [unit(w.rain), unit(w.fog), unit(w.amplitude_norm()), unit(length_norm)]
}

/// UAV positions, object positions, weather and elapsed time, each scaled
/// into [0,1].
pub fn global_state_vector(config: &EnvConfig, state: &WorldState) -> Vec<f64> {
    let ext = config.area_extent;
    let mut v = Vec::with_capacity(global_state_len(config));
    for uav in &state.uavs {
        for (p, e) in uav.position.iter().zip(ext) {
            v.push(unit(p / e));
        }
    }
    for obj in &state.objects {
        v.push(unit(obj.position[0] / ext[0]));
        v.push(unit(obj.position[1] / ext[1]));
    }
    v.extend(weather_features(config, &state.weather));
    v.push(unit(f64::from(state.time) / f64::from(config.max_steps)));
    v
}

/// Own pose, weather, then the most confident detections as
/// `(ship, person, u, v, w, h, confidence)`, zero-padded.
pub fn local_observation_vector(frame: &ObservationFrame, config: &EnvConfig) -> Vec<f64> {
    let ext = config.area_extent;
    let mut v = Vec::with_capacity(local_observation_len());
    for (p, e) in frame.pose.position.iter().zip(ext) {
        v.push(unit(p / e));
    }
    v.extend(weather_features(config, &frame.weather_snapshot));

    let mut ranked: Vec<_> = frame.detections.iter().collect();
    // stable: ties keep detector order
    ranked.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    for det in ranked.iter().take(TOP_K_DETECTIONS) {
        let mut one_hot = [0.0; 2];
        one_hot[det.class_label.index()] = 1.0;
        v.extend(one_hot);
        v.push(unit(det.bbox_center[0] / FRAME_PIXELS));
        v.push(unit(det.bbox_center[1] / FRAME_PIXELS));
        v.push(unit(det.bbox_size[0] / FRAME_PIXELS));
        v.push(unit(det.bbox_size[1] / FRAME_PIXELS));
        v.push(unit(det.confidence));
    }
    v.resize(local_observation_len(), 0.0);
    v
}
