use erppo::ambiguity::EntropyConfig;
use erppo::dsa::DsaGate;
use erppo::env::{ActionMode, EnvConfig};
use erppo::trainer::*;
use erppo::Error;

fn env() -> EnvConfig {
    EnvConfig {
        area_extent: [100.0, 100.0, 60.0],
        num_uavs: 2,
        num_persons: 1,
        num_ships: 1,
        max_steps: 20,
        ..Default::default()
    }
}

fn cfg(algorithm: Algorithm, workers: usize) -> TrainConfig {
    TrainConfig {
        algorithm,
        total_iterations: 4,
        rollout_length: 16,
        num_env_workers: workers,
        minibatch_size: 16,
        epochs_per_update: 2,
        dsa_gate: DsaGate::Oracle,
        ..Default::default()
    }
}

fn bits(rows: &[MetricsRow]) -> Vec<u8> {
    let mut out = Vec::new();
    write_metrics_csv(rows, &mut out).unwrap();
    out
}

#[test]
fn same_seed_same_metrics() {
    for workers in [1, 3] {
        for algorithm in [Algorithm::Erppo, Algorithm::Mappo] {
            let c = cfg(algorithm, workers);
            let (a, ra) = train(&env(), &EntropyConfig::default(), &c, None, 17).unwrap();
            let (b, rb) = train(&env(), &EntropyConfig::default(), &c, None, 17).unwrap();
            assert_eq!(bits(&ra), bits(&rb));
            assert_eq!(a, b);
            let (_, rc) = train(&env(), &EntropyConfig::default(), &c, None, 18).unwrap();
            assert_ne!(bits(&ra), bits(&rc));
        }
    }
}

#[test]
fn checkpoint_round_trip_continues_exactly() {
    let c = TrainConfig {
        total_iterations: 6,
        critic_sees_actions: true,
        ..cfg(Algorithm::Erppo, 2)
    };
    let e = env();
    let ent = EntropyConfig::default();
    let mut straight = Trainer::new(e.clone(), ent, c.clone(), None, 5).unwrap();
    for _ in 0..3 {
        straight.step().unwrap();
    }
    let bytes = straight.bundle().encode();
    let restored = CheckpointBundle::decode(&bytes).unwrap();
    assert_eq!(&restored, straight.bundle());
    let mut resumed = Trainer::resume(e, ent, c, restored, None).unwrap();
    while !straight.finished() {
        assert_eq!(straight.step().unwrap(), resumed.step().unwrap());
    }
    assert!(resumed.finished());
    assert_eq!(straight.bundle(), resumed.bundle());
}

#[test]
fn resume_rejects_changed_config() {
    let c = cfg(Algorithm::Erppo, 2);
    let t = Trainer::new(env(), EntropyConfig::default(), c.clone(), None, 1).unwrap();
    let other = TrainConfig {
        clip_epsilon: 0.1,
        ..c.clone()
    };
    let err = Trainer::resume(env(), EntropyConfig::default(), other, t.bundle().clone(), None).err().unwrap();
    assert!(err.is_validation(), "{err}");
    // the iteration budget may change
    let longer = TrainConfig {
        total_iterations: 50,
        ..c
    };
    assert!(Trainer::resume(env(), EntropyConfig::default(), longer, t.into_bundle(), Some(9)).is_ok());
}

#[test]
fn branch_telemetry_matches_gate() {
    for sigma in [1e-6, 0.05, 0.2, 0.999] {
        let c = TrainConfig {
            sigma_switch: sigma,
            total_iterations: 6,
            ..cfg(Algorithm::Erppo, 2)
        };
        let (_, rows) = train(&env(), &EntropyConfig::default(), &c, None, 3).unwrap();
        for r in rows {
            assert!((0.0..=1.0).contains(&r.branch_fraction_l1));
            let fired = r.expected_ambiguity_mean >= sigma;
            assert_eq!(r.branch_fraction_l1, if fired { 1.0 } else { 0.0 }, "{r:?}");
        }
    }
}

#[test]
fn mappo_has_no_entropy_term() {
    let (_, rows) = train(&env(), &EntropyConfig::default(), &cfg(Algorithm::Mappo, 2), None, 3).unwrap();
    assert!(rows.iter().all(|r| r.entropy_term == 0.0 && r.branch_fraction_l1 == 0.0));
}

#[test]
fn discrete_actions_train() {
    let e = EnvConfig {
        action_mode: ActionMode::Discrete,
        ..env()
    };
    let (b, rows) = train(&e, &EntropyConfig::default(), &cfg(Algorithm::Erppo, 2), None, 4).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(b.env_steps, 4 * 2 * 16);
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.normalized_return)));
}

#[test]
fn learned_gate_requires_model() {
    let c = TrainConfig {
        dsa_gate: DsaGate::Learned,
        ..cfg(Algorithm::Erppo, 1)
    };
    let err = Trainer::new(env(), EntropyConfig::default(), c, None, 0).err().unwrap();
    assert!(matches!(err, Error::Config { .. }), "{err}");
}

#[test]
fn random_and_greedy_evaluation() {
    let (b, _) = train(&env(), &EntropyConfig::default(), &cfg(Algorithm::Erppo, 1), None, 2).unwrap();
    for actor in [Actor::Greedy, Actor::Random] {
        let a = evaluate(&b.models, &env(), &EntropyConfig::default(), DsaGate::Oracle, actor, 3, 8).unwrap();
        let again = evaluate(&b.models, &env(), &EntropyConfig::default(), DsaGate::Oracle, actor, 3, 8).unwrap();
        assert_eq!(a, again);
        assert!((0.0..=1.0).contains(&a.persons_localized_rate));
        assert!((0.0..=1.0).contains(&a.false_detection_rate));
    }
}
