#![allow(dead_code)]

use sanitizer_core::autodiff::Activation;
use sanitizer_core::data::{AttributeSchema, Role};
use sanitizer_core::decoupler::{DecouplerConfig, DecouplerModel};
use sanitizer_core::math::{standard_normal_matrix, Matrix, RngStream};
use rand::Rng;

/// Tiny smooth decoupler: 6 inputs, m = 5, k = 2, three sensitive classes.
pub fn tiny_config() -> DecouplerConfig {
    DecouplerConfig {
        k: 2,
        m: 5,
        encoder_hidden: vec![8],
        decoder_hidden: vec![8],
        aligner_hidden: vec![8],
        adversary_hidden: vec![8],
        activation: Activation::Tanh,
        ..DecouplerConfig::default()
    }
}

pub fn tiny_model(seed: u64) -> DecouplerModel {
    DecouplerModel::init(
        &tiny_config(),
        [2, 3, 1],
        vec![AttributeSchema::new("s", 3, Role::Sensitive)],
        &mut RngStream::new(seed, 0),
    )
    .unwrap()
}

pub struct TinyBatch {
    pub x: Matrix,
    pub labels: Vec<Vec<usize>>,
    pub noise: Matrix,
}

pub fn tiny_batch(n: usize, seed: u64) -> TinyBatch {
    let mut rng = RngStream::new(seed, 1);
    let x = Matrix::from_vec(n, 6, (0..n * 6).map(|_| rng.random::<f64>()).collect()).unwrap();
    let labels = vec![(0..n).map(|i| i % 3).collect()];
    let noise = standard_normal_matrix(n, 5, &mut rng);
    TinyBatch { x, labels, noise }
}
