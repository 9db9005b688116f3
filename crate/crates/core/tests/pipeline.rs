use betrayal_core::detect::{
    collect_dataset, kfold_eval, provenance_path, stratified_folds, train_detector, Dataset, DetectorHyper, HyperGrid,
};
use betrayal_core::env::GameConfig;
use betrayal_core::penalty::{penalized_train, PenaltyConfig};
use betrayal_core::ppo::{initial_policy, train, PpoConfig};
use betrayal_core::run::{read_episode_log, replay, run_seed, RunConfig, EPISODES_FILE, METRICS_FILE};
use betrayal_core::telemetry::{read_metrics, MetricRow};
use betrayal_core::{Error, Policy};

fn tiny_ppo(seed: u64, steps: u64) -> PpoConfig {
    PpoConfig {
        total_timesteps: steps,
        rollout_length: 256,
        minibatch_size: 64,
        update_epochs: 2,
        hidden: vec![16, 16],
        seed,
        ..PpoConfig::default()
    }
}

fn untrained() -> (GameConfig, Policy) {
    let game = GameConfig::default();
    let policy = initial_policy(&tiny_ppo(1, 0), &game).unwrap();
    (game, policy)
}

fn quick_hyper() -> DetectorHyper {
    DetectorHyper {
        hidden: vec![16],
        max_epochs: 20,
        ..DetectorHyper::default()
    }
}

#[test]
fn datasets_are_deterministic_per_seed() {
    let (game, policy) = untrained();
    let a = collect_dataset(&policy, "abc", &game, 20, 7).unwrap();
    let b = collect_dataset(&policy, "abc", &game, 20, 7).unwrap();
    let c = collect_dataset(&policy, "abc", &game, 20, 8).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.rows, c.rows);
    a.validate().unwrap();
    assert!(a.rows.iter().flatten().all(|v| v.is_finite()));
}

#[test]
fn one_episode_has_at_most_one_row_per_round() {
    let (game, policy) = untrained();
    for seed in 0..10 {
        let ds = collect_dataset(&policy, "x", &game, 1, seed).unwrap();
        assert!(!ds.is_empty());
        assert!(ds.len() <= game.max_rounds as usize);
    }
}

#[test]
fn unsupported_game_is_refused() {
    let (_, policy) = untrained();
    let game = GameConfig {
        n_agents: 3,
        ..GameConfig::default()
    };
    assert!(matches!(
        collect_dataset(&policy, "x", &game, 1, 0),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn dataset_file_round_trip_and_drift() {
    let (game, policy) = untrained();
    let ds = collect_dataset(&policy, "abc", &game, 10, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    ds.write(&path).unwrap();
    assert_eq!(Dataset::read(&path).unwrap(), ds);

    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("own_hunger", "hunger", 1)).unwrap();
    assert!(matches!(Dataset::read(&path), Err(Error::Schema(_))));

    std::fs::write(&path, text).unwrap();
    let side = provenance_path(&path);
    let meta = std::fs::read_to_string(&side).unwrap();
    std::fs::write(&side, meta.replace("features-v1", "features-v0")).unwrap();
    assert!(matches!(Dataset::read(&path), Err(Error::Schema(_))));
}

#[test]
fn flipped_labels_train_symmetrically() {
    let (game, policy) = untrained();
    let ds = collect_dataset(&policy, "abc", &game, 60, 5).unwrap();
    let flipped: Vec<u8> = ds.labels.iter().map(|y| 1 - y).collect();
    let a = train_detector(&ds.rows, &ds.labels, &quick_hyper()).unwrap();
    let b = train_detector(&ds.rows, &flipped, &quick_hyper()).unwrap();
    assert!((a.best_validation_f1 - b.best_validation_f1).abs() < 0.1);
}

#[test]
fn cross_validation_on_collected_data() {
    let (game, policy) = untrained();
    let ds = collect_dataset(&policy, "abc", &game, 60, 9).unwrap();
    let folds = stratified_folds(&ds.labels, 3, 0).unwrap();
    let global = ds.positive_rate();
    for f in &folds {
        let rate = f.iter().map(|&i| ds.labels[i] as f64).sum::<f64>() / f.len() as f64;
        assert!((rate - global).abs() <= 0.02);
    }
    let grid = HyperGrid {
        hidden: vec![16],
        learning_rate: vec![1e-3],
    };
    let a = kfold_eval(&ds.rows, &ds.labels, 3, &grid, &quick_hyper(), 4).unwrap();
    let b = kfold_eval(&ds.rows, &ds.labels, 3, &grid, &quick_hyper(), 4).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.folds.len(), 3);
    assert!((0.0..=1.0).contains(&a.mean));
}

#[test]
fn zero_penalty_matches_plain_training() {
    let (game, policy) = untrained();
    let ds = collect_dataset(&policy, "abc", &game, 40, 2).unwrap();
    let detector = train_detector(&ds.rows, &ds.labels, &quick_hyper()).unwrap().detector;
    let ppo = tiny_ppo(3, 768);
    let plain = train(&ppo, &game).unwrap();
    let zero = PenaltyConfig {
        beta: 0.0,
        ..PenaltyConfig::default()
    };
    let shaped = penalized_train(&ppo, &game, &zero, &detector).unwrap();
    assert_eq!(shaped.policy, plain.policy);
    let base: Vec<MetricRow> = shaped.metrics.iter().map(MetricRow::base).collect();
    assert_eq!(base, plain.metrics);
    for r in shaped.metrics.iter().filter(|r| r.agent == 0) {
        let p = r.p_betray.unwrap();
        assert!((0.0..=1.0).contains(&p));
        assert_eq!(r.true_betrayal, Some(r.betrayal));
    }

    let half = PenaltyConfig {
        beta: 0.5,
        ..PenaltyConfig::default()
    };
    let penalized = penalized_train(&ppo, &game, &half, &detector).unwrap();
    assert_ne!(penalized.policy, plain.policy);
}

#[test]
fn runs_replay_and_reproduce() {
    let mut cfg = RunConfig::default();
    cfg.ppo = tiny_ppo(0, 1024);
    let dir = tempfile::tempdir().unwrap();
    let first = run_seed(&cfg, 4, &dir.path().join("a"), None).unwrap();
    let second = run_seed(&cfg, 4, &dir.path().join("b"), None).unwrap();
    let bytes = |d: &std::path::Path| std::fs::read(d.join(METRICS_FILE)).unwrap();
    assert_eq!(bytes(&first.dir), bytes(&second.dir));

    let written = read_metrics(&first.dir.join(METRICS_FILE)).unwrap();
    assert_eq!(written, first.outcome.metrics);
    let lines = read_episode_log(&first.dir.join(EPISODES_FILE)).unwrap();
    let report = replay(&lines).unwrap();
    assert_eq!(report.betrayal_mismatches, 0);
    assert_eq!(report.honesty_mismatches, 0);
    assert_eq!(report.metrics, written);
}
