//! Shared fixtures for the benchmarks.

use promise_core::corpus::PromiseRecord;
use promise_core::featurizer::Featurizer;
use promise_core::net::{Example, ModelConfig, PromiseModel};
use promise_core::synth::{generate, SynthConfig};
use promise_core::trainer::{build_vocab, prepare_examples};

pub fn corpus(n: usize) -> Vec<PromiseRecord> {
    generate(&SynthConfig {
        n_records: n,
        ..SynthConfig::default()
    })
}

/// Combined model at desk size (d = 32, two layers).
pub fn combined_model(records: &[PromiseRecord], featurizer: &Featurizer) -> PromiseModel {
    let config = ModelConfig::combined();
    let vocab = build_vocab(&config, records, featurizer).expect("vocabulary");
    PromiseModel::new(config, vocab, 42).expect("model")
}

pub fn examples(model: &PromiseModel, records: &[PromiseRecord], featurizer: &Featurizer) -> Vec<Example> {
    prepare_examples(model, records, featurizer).expect("examples")
}
