use super::*;
use crate::aggregation::SimpleAggregation;
use crate::model::AggregationSpec;

fn quick(task: TaskKind, equiv: &str, agg: &str, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::for_task(task, seed);
    cfg.equivariant = equiv.parse().unwrap();
    cfg.aggregation = agg.parse().unwrap();
    cfg.width = 8;
    cfg.batch = 4;
    cfg.steps = 30;
    cfg.log_every = 10;
    cfg.eval_populations = 20;
    if task == TaskKind::Mixture {
        cfg.n_max = 30;
    }
    cfg
}

#[test]
fn identical_configs_give_identical_records() {
    for task in [TaskKind::Circle, TaskKind::Mixture] {
        let cfg = quick(task, "r-lse", "q-max", 3);
        let (ma, a) = train(&cfg).unwrap();
        let (mb, b) = train(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ma.to_bytes(), mb.to_bytes());
        assert_eq!(a.losses.len(), 3);
        assert_eq!(a.seconds, 0.0);
        assert!(a.status.is_ok());
    }
}

#[test]
fn zero_learning_rate_keeps_initial_parameters() {
    let mut cfg = quick(TaskKind::Circle, "mean", "r-mean", 4);
    cfg.learning_rate = 0.0;
    let initial = Trainer::new(cfg.clone()).unwrap().model().clone();
    let (model, _) = train(&cfg).unwrap();
    assert_eq!(model, initial);
}

#[test]
fn divergence_is_reported_with_its_step() {
    let mut cfg = quick(TaskKind::Circle, "mean", "lse", 5);
    cfg.learning_rate = 1e200;
    cfg.clip_norm = 0.0;
    let (_, rec) = train(&cfg).unwrap();
    match rec.status {
        Status::NonFiniteLoss { step } => {
            assert!(step < cfg.steps);
            assert_eq!(rec.steps, step);
        }
        other => panic!("expected divergence, got {other}"),
    }

    let mut trainer = Trainer::new(quick(TaskKind::Mixture, "mean", "mean", 1)).unwrap();
    let Batch::Mixture { mut x, weights } = trainer.next_batch().unwrap() else {
        unreachable!()
    };
    x.data_mut()[0] = f64::NAN;
    let err = trainer.step_on(&Batch::Mixture { x, weights }).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss { step: 0 }));
}

#[test]
fn record_carries_metrics_and_notes() {
    let (_, rec) = train(&quick(TaskKind::Circle, "max", "mean", 6)).unwrap();
    for k in [
        metric::BEST_MSE,
        metric::CENTER_MSE,
        metric::RADIUS_MSE,
        metric::BASELINE_MSE,
    ] {
        assert!(rec.metric(k).unwrap().is_finite(), "{k}");
    }
    let total = rec.metric(metric::CENTER_MSE).unwrap() + rec.metric(metric::RADIUS_MSE).unwrap();
    assert!((rec.metric(metric::BEST_MSE).unwrap() - total).abs() < 1e-12);
    assert_eq!(rec.notes["embedding_width"], "8");
    assert_eq!(rec.notes["max_population"], "20");
    assert!(rec.metrics.keys().all(|k| metric::REGISTRY.contains(&k.as_str())));

    let (_, rec) = train(&quick(TaskKind::Mixture, "mean", "mean", 6)).unwrap();
    assert!(rec.metric(metric::BETA_NLL).unwrap().is_finite());
    assert!(rec.metric(metric::MEAN_ABS_ERROR).unwrap() < 0.5);
}

#[test]
fn config_round_trips_through_toml() {
    let mut cfg = TrainConfig::mixture(
        "r5-lse/last".parse().unwrap(),
        AggregationSpec::query(SimpleAggregation::Percentile(0.25)),
        17,
    );
    cfg.eval_n = Some(50);
    let text = cfg.to_toml();
    assert_eq!(TrainConfig::from_toml(&text).unwrap(), cfg);

    let minimal = r#"
        task = "circle"
        equivariant = "r-max"
        aggregation = "lse"
        head = "circle"
        seed = 1
        steps = 100
        n_min = 20
        n_max = 20
    "#;
    let cfg = TrainConfig::from_toml(minimal).unwrap();
    assert_eq!(cfg.learning_rate, 1e-3);
    assert_eq!(cfg.batch, 32);
    assert_eq!(cfg.clip_norm, 10.0);
    assert_eq!(cfg.width, 64);
    assert_eq!(cfg.equivariant, AggregationSpec::recurrent(SimpleAggregation::Max));

    let bad_head = minimal.replace("head = \"circle\"", "head = \"beta\"");
    assert!(matches!(
        TrainConfig::from_toml(&bad_head),
        Err(Error::InvalidConfig(_))
    ));
    let bad_range = minimal.replace("n_min = 20", "n_min = 30");
    assert!(matches!(
        TrainConfig::from_toml(&bad_range),
        Err(Error::InvalidRange { .. })
    ));
    let small_n = minimal.replace("n_min = 20", "n_min = 2");
    assert!(TrainConfig::from_toml(&small_n).is_err());
    assert!(TrainConfig::from_toml(&format!("{minimal}\nbogus = 1")).is_err());
}

#[test]
fn chunks_cover_the_batch() {
    let batch = Batch::sample(TaskKind::Circle, &mut Rng::new(1), 7, 5).unwrap();
    let parts = batch.chunks(3);
    assert_eq!(parts.iter().map(Batch::len).collect::<Vec<_>>(), vec![3, 3, 1]);
    let joined: Vec<f64> = parts.iter().flat_map(|b| b.x().data().to_vec()).collect();
    assert_eq!(joined, batch.x().data());
}

/// Loss on one fixed batch goes down over 100 default-width Adam steps for
/// every simple-aggregation pairing on both tasks.
#[test]
fn fixed_batch_loss_decreases() {
    for task in [TaskKind::Circle, TaskKind::Mixture] {
        for equiv in SimpleAggregation::GRID {
            for agg in SimpleAggregation::GRID {
                let mut cfg = TrainConfig::for_task(task, 8);
                cfg.equivariant = AggregationSpec::simple(equiv);
                cfg.aggregation = AggregationSpec::simple(agg);
                let mut trainer = Trainer::new(cfg).unwrap();
                let batch = trainer.next_batch().unwrap();
                let before = trainer.loss_on(&batch).unwrap();
                for _ in 0..100 {
                    trainer.step_on(&batch).unwrap();
                }
                let after = trainer.loss_on(&batch).unwrap();
                assert!(after < before, "{task} {equiv}/{agg}: {before} -> {after}");
            }
        }
    }
}
