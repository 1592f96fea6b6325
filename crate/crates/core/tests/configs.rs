use std::path::Path;

use deepset::aggregation::SimpleAggregation;
use deepset::model::AggregationSpec;
use deepset::tasks::TaskKind;
use deepset::training::TrainConfig;

fn load(name: &str) -> TrainConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    let config = TrainConfig::load(&path).unwrap();
    config.validate().unwrap();
    config
}

#[test]
fn circle_config_matches_its_constructor() {
    let r = AggregationSpec::recurrent(SimpleAggregation::Mean);
    assert_eq!(load("circle.toml"), TrainConfig::circle(r, r, 1));
}

#[test]
fn mixture_config_reads_the_aggregation_tree() {
    let c = load("mixture.toml");
    assert_eq!(c.task, TaskKind::Mixture);
    assert_eq!(c.aggregation, AggregationSpec::recurrent(SimpleAggregation::Sum));
    let defaults = TrainConfig::mixture(AggregationSpec::simple(SimpleAggregation::Mean), c.aggregation, 1);
    assert_eq!(c.eval_size(), defaults.eval_size());
    assert_eq!(
        c,
        TrainConfig {
            eval_n: c.eval_n,
            ..defaults
        }
    );
}

#[test]
fn written_configs_read_back() {
    for name in ["circle.toml", "mixture.toml"] {
        let c = load(name);
        assert_eq!(TrainConfig::from_toml(&c.to_toml()).unwrap(), c);
    }
}
