use erppo::ambiguity::{AmbiguityLabel, EntropyConfig};
use erppo::dsa::*;
use erppo::env::EnvConfig;
use proptest::prelude::*;

const EXTENT: [f64; 3] = [100.0, 100.0, 60.0];

/// Label field that depends only on fog: ambiguous above 0.15.
fn fog_field() -> SurveyDataset {
    let fogs = [0.0, 0.05, 0.1, 0.2, 0.25, 0.3];
    let mut samples = Vec::new();
    for x in [10.0, 50.0, 90.0] {
        for y in [10.0, 50.0, 90.0] {
            for z in [10.0, 30.0, 50.0] {
                for &fog in &fogs {
                    samples.push(SurveySample {
                        position: [x, y, z],
                        time: 0,
                        rain: 0.0,
                        fog,
                        label: if fog > 0.15 {
                            AmbiguityLabel::Ambiguous
                        } else {
                            AmbiguityLabel::NonAmbiguous
                        },
                    });
                }
            }
        }
    }
    SurveyDataset {
        samples,
        resolution: None,
        weather_grid: fogs.iter().map(|&f| (0.0, f)).collect(),
    }
}

#[test]
fn separable_field_is_learned() {
    let cfg = DsaConfig {
        weight_decay: 0.0,
        ..Default::default()
    };
    let (_, report) = train_dsa(&fog_field(), &cfg, EXTENT, 100, 5).unwrap();
    assert!(report.heldout_accuracy >= 0.9, "{report:?}");
    assert!(report.heldout_mse < 0.05, "{report:?}");
}

#[test]
fn weight_decay_shrinks_parameters() {
    let data = fog_field();
    let norms: Vec<f64> = [0.0, 0.01, 1.0]
        .iter()
        .map(|&wd| {
            let cfg = DsaConfig {
                weight_decay: wd,
                epochs: 100,
                ..Default::default()
            };
            train_dsa(&data, &cfg, EXTENT, 100, 9).unwrap().0.net.squared_norm()
        })
        .collect();
    assert!(norms.windows(2).all(|w| w[1] <= w[0]), "{norms:?}");
}

#[test]
fn survey_size_is_grid_product() {
    let env = EnvConfig {
        area_extent: EXTENT,
        num_uavs: 2,
        num_persons: 1,
        num_ships: 1,
        max_steps: 100,
        ..Default::default()
    };
    let weather = [(0.0, 0.0), (0.5, 0.1), (1.0, 0.3)];
    let times = [0, 40];
    let d = run_survey(&env, &EntropyConfig::default(), 25.0, &weather, &times, 1).unwrap();
    let cells = grid_axis(100.0, 25.0).len().pow(2) * grid_axis(60.0, 25.0).len();
    assert_eq!(d.samples.len(), cells * weather.len() * times.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn predictions_bounded_and_deterministic(
        x in 0.0f64..100.0, y in 0.0f64..100.0, z in 0.0f64..60.0,
        t in 0u32..100, rain in 0.0f64..=1.0, fog in 0.0f64..=1.0,
    ) {
        use std::sync::OnceLock;
        static MODEL: OnceLock<DsaModel> = OnceLock::new();
        let model = MODEL.get_or_init(|| {
            let cfg = DsaConfig { epochs: 20, ..Default::default() };
            train_dsa(&fog_field(), &cfg, EXTENT, 100, 1).unwrap().0
        });
        let q = DsaQuery { position: [x, y, z], time: t, rain, fog };
        let p = model.predict_ambiguity(&q);
        prop_assert!(p > 0.0 && p < 1.0);
        prop_assert_eq!(p.to_bits(), model.predict_ambiguity(&q).to_bits());
    }
}
