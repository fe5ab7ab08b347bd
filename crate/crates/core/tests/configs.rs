use std::path::PathBuf;

use promise_core::config::{PipelineConfig, DEFAULT_SEED};

fn config_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn reference_config_spells_out_the_defaults() {
    let loaded = PipelineConfig::load(config_dir().join("train.yaml")).unwrap();
    assert_eq!(loaded, PipelineConfig::default().with_seed(DEFAULT_SEED));
}

#[test]
fn desk_config_loads() {
    let desk = PipelineConfig::load(config_dir().join("desk.yaml")).unwrap();
    assert_eq!(desk.encoder.hidden_size, 32);
    assert_eq!(desk.schedule.epochs, 5);
}
