//! Spatiotemporal ambiguity learner.
//!
//! A probe UAV sweeps a regular grid of positions under a grid of weather
//! conditions; each rendered frame is labelled with the entropy mask. A small
//! sigmoid regressor is then fitted to those labels so the trainer can query
//! the expected ambiguity of any (position, time, weather).

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambiguity::{frame_label, shannon_entropy, AmbiguityLabel, EntropyConfig};
use crate::checkpoint::{self, Container, Reader, Writer};
use crate::env::{drift_objects, render_observation, reset, EnvConfig, WeatherState};
use crate::error::{Error, Result};
use crate::nn::{Adam, Mlp, NetRole, OutputActivation};
use crate::seeding::rng_for;

/// Largest survey `run_survey` will build.
pub const MAX_SURVEY_SAMPLES: usize = 10_000_000;
pub const NUM_FEATURES: usize = 6;
pub const SURVEY_HEADER: [&str; 7] = ["x", "y", "z", "t", "rain", "fog", "label"];

const SPLIT_STREAM: u64 = 0x5350;
const EPOCH_STREAM: u64 = 0x4550;
const INIT_STREAM: u64 = 0x494e;

/// Where the trainer's ambiguity estimate comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DsaGate {
    /// The fitted regressor.
    Learned,
    /// The entropy mask of the current frame.
    Oracle,
}

/// Survey grid and regressor fitting options. The spatial resolution comes
/// from the environment's `survey_resolution`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DsaConfig {
    pub fog_grid: Vec<f64>,
    pub rain_grid: Vec<f64>,
    pub time_samples: Vec<u32>,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for DsaConfig {
    fn default() -> Self {
        Self {
            fog_grid: vec![0.0, 0.1, 0.2, 0.3],
            rain_grid: vec![0.0, 0.5, 1.0],
            time_samples: vec![0],
            weight_decay: 1e-4,
            epochs: 200,
            batch_size: 8,
            learning_rate: 1e-2,
        }
    }
}

impl DsaConfig {
    pub fn validate(&self) -> Result<()> {
        let unit_grid = |key: &str, g: &[f64]| {
            if g.is_empty() {
                return Err(Error::config(key, "grid must not be empty"));
            }
            if g.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::config(key, "grid values must lie within [0,1]"));
            }
            Ok(())
        };
        unit_grid("fog_grid", &self.fog_grid)?;
        unit_grid("rain_grid", &self.rain_grid)?;
        if self.time_samples.is_empty() {
            return Err(Error::config("time_samples", "must not be empty"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay", "must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        Ok(())
    }

    /// Every (rain, fog) pair, fog varying slowest.
    pub fn weather_grid(&self) -> Vec<(f64, f64)> {
        self.fog_grid
            .iter()
            .flat_map(|&fog| self.rain_grid.iter().map(move |&rain| (rain, fog)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurveySample {
    pub position: [f64; 3],
    pub time: u32,
    pub rain: f64,
    pub fog: f64,
    pub label: AmbiguityLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyDataset {
    pub samples: Vec<SurveySample>,
    /// Grid spacing; unknown for datasets read back from CSV.
    pub resolution: Option<f64>,
    /// `(rain, fog)` pairs.
    pub weather_grid: Vec<(f64, f64)>,
}

/// Cell centers along one axis: `res/2 + k*res` for every cell that fits.
pub fn grid_axis(extent: f64, resolution: f64) -> Vec<f64> {
    // tolerate extents that are a multiple of the resolution up to rounding
    let cells = ((extent / resolution) + 1e-9).floor().max(1.0) as usize;
    (0..cells)
        .map(|k| (resolution / 2.0 + k as f64 * resolution).min(extent))
        .collect()
}

pub fn survey_size(extent: [f64; 3], resolution: f64, weather_points: usize, time_points: usize) -> f64 {
    let axis = |e: f64| ((e / resolution) + 1e-9).floor().max(1.0);
    axis(extent[0]) * axis(extent[1]) * axis(extent[2]) * weather_points as f64 * time_points as f64
}

/// Sweeps one probe UAV over the position grid for every weather point and
/// time sample, labelling each frame with the entropy mask.
///
/// The object layout comes from `reset(env, seed)` and is the same for every
/// weather point; objects drift forward to each requested time.
pub fn run_survey(
    env: &EnvConfig,
    entropy: &EntropyConfig,
    resolution: f64,
    weather_grid: &[(f64, f64)],
    time_samples: &[u32],
    seed: u64,
) -> Result<SurveyDataset> {
    env.validate()?;
    entropy.validate()?;
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(Error::config("survey_resolution", "must be positive"));
    }
    if weather_grid.is_empty() || time_samples.is_empty() {
        return Err(Error::contract("survey grids must not be empty"));
    }
    if let Some(&t) = time_samples.iter().find(|&&t| t > env.max_steps) {
        return Err(Error::config("time_samples", format!("time {t} exceeds max_steps")));
    }
    let size = survey_size(env.area_extent, resolution, weather_grid.len(), time_samples.len());
    if size > MAX_SURVEY_SAMPLES as f64 {
        return Err(Error::config(
            "survey_resolution",
            format!("survey would hold {size:.0} samples (limit {MAX_SURVEY_SAMPLES})"),
        ));
    }

    let xs = grid_axis(env.area_extent[0], resolution);
    let ys = grid_axis(env.area_extent[1], resolution);
    let zs = grid_axis(env.area_extent[2], resolution);

    let blocks: Vec<Vec<SurveySample>> = weather_grid
        .par_iter()
        .map(|&(rain, fog)| {
            let mut probe_env = env.clone();
            probe_env.num_uavs = 1;
            probe_env.rain_range = [rain, rain];
            probe_env.fog_range = [fog, fog];
            let mut samples = Vec::with_capacity(xs.len() * ys.len() * zs.len() * time_samples.len());
            for &t in time_samples {
                let mut state = reset(&probe_env, seed)?;
                for _ in 0..t {
                    drift_objects(&probe_env, &mut state);
                }
                state.time = t;
                for &x in &xs {
                    for &y in &ys {
                        for &z in &zs {
                            state.uavs[0].position = [x, y, z];
                            let frame = render_observation(&probe_env, &state, 0)?;
                            let entropies = frame
                                .confidences()
                                .map(|p| shannon_entropy(p, entropy))
                                .collect::<Result<Vec<_>>>()?;
                            samples.push(SurveySample {
                                position: [x, y, z],
                                time: t,
                                rain,
                                fog,
                                label: frame_label(&entropies, entropy.mask_threshold),
                            });
                        }
                    }
                }
            }
            Ok(samples)
        })
        .collect::<Result<_>>()?;

    Ok(SurveyDataset {
        samples: blocks.into_iter().flatten().collect(),
        resolution: Some(resolution),
        weather_grid: weather_grid.to_vec(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct SurveyRow {
    x: f64,
    y: f64,
    z: f64,
    t: u32,
    rain: f64,
    fog: f64,
    label: u8,
}

pub fn write_survey_csv<W: Write>(dataset: &SurveyDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in &dataset.samples {
        w.serialize(SurveyRow {
            x: s.position[0],
            y: s.position[1],
            z: s.position[2],
            t: s.time,
            rain: s.rain,
            fog: s.fog,
            label: s.label.value(),
        })
        .map_err(|e| Error::format("survey csv", e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("writing survey csv", e))
}

fn csv_line(e: &csv::Error) -> usize {
    e.position().map_or(0, |p| p.line() as usize)
}

/// Reads a survey CSV. The header must match exactly; errors carry the line.
pub fn read_survey_csv<R: Read>(input: R) -> Result<SurveyDataset> {
    let mut r = csv::Reader::from_reader(input);
    let header = r
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    if header.iter().ne(SURVEY_HEADER) {
        return Err(Error::Parse {
            line: 1,
            reason: format!("expected header {}", SURVEY_HEADER.join(",")),
        });
    }
    let mut samples = Vec::new();
    let mut weather_grid: Vec<(f64, f64)> = Vec::new();
    for row in r.deserialize::<SurveyRow>() {
        let row = row.map_err(|e| Error::Parse {
            line: csv_line(&e),
            reason: e.to_string(),
        })?;
        let line = samples.len() + 2;
        let label = AmbiguityLabel::from_value(row.label).ok_or_else(|| Error::Parse {
            line,
            reason: format!("label must be 0 or 1, got {}", row.label),
        })?;
        if [row.x, row.y, row.z].iter().any(|v| !v.is_finite())
            || !(0.0..=1.0).contains(&row.rain)
            || !(0.0..=1.0).contains(&row.fog)
        {
            return Err(Error::Parse {
                line,
                reason: "non-finite position or weather outside [0,1]".into(),
            });
        }
        if !weather_grid.contains(&(row.rain, row.fog)) {
            weather_grid.push((row.rain, row.fog));
        }
        samples.push(SurveySample {
            position: [row.x, row.y, row.z],
            time: row.t,
            rain: row.rain,
            fog: row.fog,
            label,
        });
    }
    if samples.is_empty() {
        return Err(Error::Parse {
            line: 1,
            reason: "survey has no samples".into(),
        });
    }
    Ok(SurveyDataset {
        samples,
        resolution: None,
        weather_grid,
    })
}

/// A point at which ambiguity is queried.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsaQuery {
    pub position: [f64; 3],
    pub time: u32,
    pub rain: f64,
    pub fog: f64,
}

impl DsaQuery {
    pub fn new(position: [f64; 3], time: u32, weather: &WeatherState) -> Self {
        Self {
            position,
            time,
            rain: weather.rain,
            fog: weather.fog,
        }
    }
}

/// Fitted ambiguity regressor with its input normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct DsaModel {
    pub net: Mlp,
    pub weight_decay: f64,
    pub extent: [f64; 3],
    pub max_steps: u32,
}

fn unit(x: f64) -> f64 {
    if x.is_finite() {
        x.clamp(0.0, 1.0)
    } else {
        0.0
    }
}

impl DsaModel {
    pub fn new(net: Mlp, weight_decay: f64, extent: [f64; 3], max_steps: u32) -> Result<Self> {
        if net.input_size() != NUM_FEATURES
            || net.output_size() != 1
            || net.output_activation() != OutputActivation::Sigmoid
        {
            return Err(Error::contract("ambiguity regressor must map 6 features to one sigmoid output"));
        }
        if extent.iter().any(|e| !(e.is_finite() && *e > 0.0)) || max_steps == 0 {
            return Err(Error::contract("normalization constants must be positive"));
        }
        if !(weight_decay.is_finite() && weight_decay >= 0.0) {
            return Err(Error::contract("weight decay must be finite and non-negative"));
        }
        Ok(Self {
            net,
            weight_decay,
            extent,
            max_steps,
        })
    }

    /// `(x, y, z, t, rain, fog)`, each scaled into [0,1] and clamped.
    pub fn features(&self, q: &DsaQuery) -> [f64; NUM_FEATURES] {
        features(self.extent, self.max_steps, q)
    }

    pub fn predict_features(&self, f: &[f64; NUM_FEATURES]) -> f64 {
        self.net.infer(f).expect("feature width checked at construction")[0]
    }

    pub fn predict_ambiguity(&self, q: &DsaQuery) -> f64 {
        self.predict_features(&self.features(q))
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        let mut w = Writer::new();
        checkpoint::write_mlp(&mut w, &self.net);
        c.insert(NetRole::Dsa.tag(), w.finish()).expect("fresh container");
        let mut w = Writer::new();
        w.f64(self.weight_decay);
        for e in self.extent {
            w.f64(e);
        }
        w.u32(self.max_steps);
        c.insert("dsa.meta", w.finish()).expect("fresh container");
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let mut r = Reader::new(c.section(NetRole::Dsa.tag())?);
        let net = checkpoint::read_mlp(&mut r)?;
        r.finish()?;
        let mut r = Reader::new(c.section("dsa.meta")?);
        let weight_decay = r.f64()?;
        let extent = [r.f64()?, r.f64()?, r.f64()?];
        let max_steps = r.u32()?;
        r.finish()?;
        Self::new(net, weight_decay, extent, max_steps).map_err(|e| Error::format("checkpoint", e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

pub fn features(extent: [f64; 3], max_steps: u32, q: &DsaQuery) -> [f64; NUM_FEATURES] {
    [
        unit(q.position[0] / extent[0]),
        unit(q.position[1] / extent[1]),
        unit(q.position[2] / extent[2]),
        unit(f64::from(q.time) / f64::from(max_steps)),
        unit(q.rain),
        unit(q.fog),
    ]
}

/// Mean predicted ambiguity over a batch of queries.
pub fn expected_ambiguity(model: &DsaModel, queries: &[DsaQuery]) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::contract("expected ambiguity needs at least one query"));
    }
    let total: f64 = queries.iter().map(|q| model.predict_ambiguity(q)).sum();
    Ok(total / queries.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsaFitReport {
    pub train_mse: f64,
    pub heldout_mse: f64,
    pub train_accuracy: f64,
    pub heldout_accuracy: f64,
    pub train_samples: usize,
    pub heldout_samples: usize,
}

fn evaluate(model: &DsaModel, x: &[[f64; NUM_FEATURES]], y: &[f64], idx: &[usize]) -> (f64, f64) {
    if idx.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut se = 0.0;
    let mut correct = 0usize;
    for &i in idx {
        let q = model.predict_features(&x[i]);
        se += (q - y[i]).powi(2);
        if (q >= 0.5) == (y[i] >= 0.5) {
            correct += 1;
        }
    }
    let n = idx.len() as f64;
    (se / n, correct as f64 / n)
}

/// Fits the regressor by minibatch Adam on mean squared error plus
/// `(weight_decay / 2) * |params|^2`. A deterministic 10% of the samples is
/// held out for the report.
pub fn train_dsa(
    dataset: &SurveyDataset,
    config: &DsaConfig,
    extent: [f64; 3],
    max_steps: u32,
    seed: u64,
) -> Result<(DsaModel, DsaFitReport)> {
    config.validate()?;
    if dataset.samples.is_empty() {
        return Err(Error::contract("cannot fit an empty survey"));
    }
    let mut init_rng = rng_for(seed, &[INIT_STREAM]);
    let net = NetRole::Dsa.build(NUM_FEATURES, 1, &mut init_rng)?;
    let mut model = DsaModel::new(net, config.weight_decay, extent, max_steps)?;

    let x: Vec<[f64; NUM_FEATURES]> = dataset
        .samples
        .iter()
        .map(|s| {
            features(
                extent,
                max_steps,
                &DsaQuery {
                    position: s.position,
                    time: s.time,
                    rain: s.rain,
                    fog: s.fog,
                },
            )
        })
        .collect();
    let y: Vec<f64> = dataset.samples.iter().map(|s| s.label.as_f64()).collect();

    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(&mut rng_for(seed, &[SPLIT_STREAM]));
    let n_hold = x.len() / 10;
    let (held, train) = order.split_at(n_hold);
    let mut train = train.to_vec();

    let mut adam = Adam::new(model.net.num_params(), config.learning_rate);
    let mut grads = vec![0.0; model.net.num_params()];
    for epoch in 0..config.epochs {
        train.shuffle(&mut rng_for(seed, &[EPOCH_STREAM, epoch as u64]));
        for (b, batch) in train.chunks(config.batch_size).enumerate() {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let scale = 2.0 / batch.len() as f64;
            let mut loss = 0.0;
            for &i in batch {
                let (out, cache) = model.net.forward(&x[i])?;
                let err = out[0] - y[i];
                loss += err * err / batch.len() as f64;
                model.net.backward_into(&cache, &[scale * err], &mut grads)?;
            }
            let lambda = config.weight_decay;
            loss += 0.5 * lambda * model.net.squared_norm();
            for (g, p) in grads.iter_mut().zip(model.net.params()) {
                *g += lambda * p;
            }
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "ambiguity regressor loss became {loss} at epoch {epoch}, batch {b}"
                )));
            }
            adam.step(model.net.params_mut(), &grads)?;
        }
    }

    let (train_mse, train_accuracy) = evaluate(&model, &x, &y, &train);
    let (heldout_mse, heldout_accuracy) = evaluate(&model, &x, &y, held);
    Ok((
        model,
        DsaFitReport {
            train_mse,
            heldout_mse,
            train_accuracy,
            heldout_accuracy,
            train_samples: train.len(),
            heldout_samples: held.len(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn area(e: [f64; 3]) -> EnvConfig {
        EnvConfig {
            area_extent: e,
            ..Default::default()
        }
    }

    #[test]
    fn axis_cell_centers() {
        assert_eq!(grid_axis(100.0, 20.0), vec![10.0, 30.0, 50.0, 70.0, 90.0]);
        assert_eq!(grid_axis(60.0, 20.0), vec![10.0, 30.0, 50.0]);
        assert_eq!(grid_axis(10.0, 20.0), vec![10.0]);
    }

    #[test]
    fn survey_count_is_grid_product() {
        let env = area([100.0, 100.0, 100.0]);
        let d = run_survey(&env, &EntropyConfig::default(), 20.0, &[(0.0, 0.0), (1.0, 0.3)], &[0], 1).unwrap();
        assert_eq!(d.samples.len(), 250);
    }

    #[test]
    fn survey_is_deterministic_and_guarded() {
        let env = area([100.0, 100.0, 60.0]);
        let e = EntropyConfig::default();
        let a = run_survey(&env, &e, 20.0, &[(0.5, 0.1)], &[0, 3], 4).unwrap();
        let b = run_survey(&env, &e, 20.0, &[(0.5, 0.1)], &[0, 3], 4).unwrap();
        assert_eq!(a, b);
        let big = area([500.0, 500.0, 500.0]);
        let err = run_survey(&big, &e, 1.0, &[(0.0, 0.0)], &[0], 1).unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn csv_round_trip() {
        let env = area([100.0, 100.0, 60.0]);
        let d = run_survey(&env, &EntropyConfig::default(), 20.0, &[(0.5, 0.1), (0.0, 0.3)], &[0], 4).unwrap();
        let mut buf = Vec::new();
        write_survey_csv(&d, &mut buf).unwrap();
        assert!(buf.starts_with(b"x,y,z,t,rain,fog,label\n"));
        let back = read_survey_csv(buf.as_slice()).unwrap();
        assert_eq!(back.samples, d.samples);
        assert_eq!(back.weather_grid, d.weather_grid);
    }

    #[test]
    fn csv_errors_carry_lines() {
        let bad = "x,y,z,t,rain,fog,label\n1,2,3,0,0.5,0.1,1\n1,2,3,0,0.5,0.1,7\n";
        match read_survey_csv(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(read_survey_csv("a,b\n1,2\n".as_bytes()).is_err());
        assert!(read_survey_csv("x,y,z,t,rain,fog,label\n".as_bytes()).is_err());
    }

    #[test]
    fn model_persists_exactly() {
        let net = NetRole::Dsa.build(NUM_FEATURES, 1, &mut rng_for(1, &[])).unwrap();
        let m = DsaModel::new(net, 1e-4, [100.0, 100.0, 60.0], 100).unwrap();
        let back = DsaModel::from_container(&Container::decode(&m.to_container().encode()).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn expected_ambiguity_is_mean() {
        let net = NetRole::Dsa.build(NUM_FEATURES, 1, &mut rng_for(1, &[])).unwrap();
        let m = DsaModel::new(net, 0.0, [100.0; 3], 100).unwrap();
        let q = DsaQuery {
            position: [10.0, 20.0, 30.0],
            time: 4,
            rain: 0.2,
            fog: 0.1,
        };
        assert_eq!(expected_ambiguity(&m, &[q]).unwrap(), m.predict_ambiguity(&q));
        assert!(expected_ambiguity(&m, &[]).is_err());
    }
}
