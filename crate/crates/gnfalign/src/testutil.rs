use gnfalign_core::cascade::{train_cascade, StageKind, TrainConfig, TrainingSample};
use gnfalign_core::cascade::CascadeModel;

use crate::synth::{synth_generate, SynthConfig, SynthExample};

pub(crate) fn tiny_config(eta: f64, theta: f64) -> TrainConfig {
    TrainConfig {
        stages: vec![StageKind::Parametric, StageKind::Explicit],
        depth: 3,
        trees_parametric: 1,
        trees_explicit: 1,
        projection_dim: 8,
        updates: 30,
        eta,
        theta,
        modes: 4,
        init_range: 0.1,
        learning_rate: 0.05,
        ..Default::default()
    }
}

pub(crate) fn examples(count: usize, seed: u64) -> Vec<SynthExample> {
    synth_generate(
        &SynthConfig {
            count,
            ..Default::default()
        },
        seed,
    )
    .unwrap()
}

pub(crate) fn tiny_model(eta: f64, theta: f64) -> CascadeModel {
    let config = tiny_config(eta, theta);
    let samples = examples(8, 2)
        .iter()
        .map(|e| TrainingSample::from_image(&e.image, &e.shape, &e.bbox, config.crop_size).unwrap())
        .collect();
    train_cascade(&config, samples).unwrap()
}
