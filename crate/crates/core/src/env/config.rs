use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionMode {
    Continuous,
    Discrete,
}

/// Simulator configuration. Defaults follow the maritime search setup:
/// five UAVs, two persons, one ship over a 500 m cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// x, y, z extents in meters; z is the altitude ceiling.
    pub area_extent: [f64; 3],
    pub num_uavs: usize,
    pub num_persons: usize,
    pub num_ships: usize,
    pub max_steps: u32,
    /// Meters per step.
    pub max_velocity: f64,
    pub fog_range: [f64; 2],
    pub rain_range: [f64; 2],
    pub wave_length_range: [f64; 2],
    pub wave_amplitude_range: [f64; 2],
    /// Grid spacing of the ambiguity survey, meters.
    pub survey_resolution: f64,
    /// Side of the nadir footprint as a multiple of altitude.
    pub fov_scale: f64,
    pub action_mode: ActionMode,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            area_extent: [500.0, 500.0, 500.0],
            num_uavs: 5,
            num_persons: 2,
            num_ships: 1,
            max_steps: 200,
            max_velocity: 1.0,
            fog_range: [0.0, 0.3],
            rain_range: [0.0, 1.0],
            wave_length_range: [521.0, 6000.0],
            wave_amplitude_range: [4.0, 80.0],
            survey_resolution: 2.5,
            fov_scale: 1.0,
            action_mode: ActionMode::Continuous,
            seed: 0,
        }
    }
}

fn check_interval(key: &str, r: [f64; 2], unit: bool) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite()) || r[0] > r[1] {
        return Err(Error::config(key, format!("invalid interval [{}, {}]", r[0], r[1])));
    }
    if unit && (r[0] < 0.0 || r[1] > 1.0) {
        return Err(Error::config(key, "must lie within [0,1]"));
    }
    if r[0] < 0.0 {
        return Err(Error::config(key, "must be non-negative"));
    }
    Ok(())
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.area_extent.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::config("area_extent", "extents must be positive"));
        }
        if self.num_uavs == 0 {
            return Err(Error::config("num_uavs", "at least one UAV is required"));
        }
        if self.num_ships == 0 {
            return Err(Error::config("num_ships", "at least one ship is required"));
        }
        if self.max_steps == 0 {
            return Err(Error::config("max_steps", "must be at least 1"));
        }
        if !(self.max_velocity.is_finite() && self.max_velocity > 0.0) {
            return Err(Error::config("max_velocity", "must be positive"));
        }
        check_interval("fog_range", self.fog_range, true)?;
        check_interval("rain_range", self.rain_range, true)?;
        check_interval("wave_length_range", self.wave_length_range, false)?;
        check_interval("wave_amplitude_range", self.wave_amplitude_range, false)?;
        if !(self.survey_resolution.is_finite() && self.survey_resolution > 0.0) {
            return Err(Error::config("survey_resolution", "must be positive"));
        }
        if !(self.fov_scale.is_finite() && self.fov_scale > 0.0) {
            return Err(Error::config("fov_scale", "must be positive"));
        }
        Ok(())
    }

    pub fn num_objects(&self) -> usize {
        self.num_ships + self.num_persons
    }
}
