#![allow(dead_code)]

use std::path::PathBuf;

use holonic::data::{partition, synthetic_dataset, Dataset, PartitionScheme, SyntheticSpec};
use holonic::learner::{init_params, ModelSpec, TrainingConfig};
use holonic::ParamVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `n` shards of `per_client` 2-D blob samples over three classes.
pub fn blob_shards(n: usize, per_client: usize, seed: u64) -> Vec<Dataset<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = SyntheticSpec::blobs(n * per_client, 2, 3, 0.8, 2.5);
    let (data, _) = synthetic_dataset::<f64, _>(&spec, &mut rng).unwrap();
    partition(&data, &PartitionScheme::Iid, n, &mut rng).unwrap()
}

/// Shards with sizes differing across clients, so weighting matters.
pub fn uneven_blob_shards(sizes: &[usize], seed: u64) -> Vec<Dataset<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = sizes.iter().sum();
    let spec = SyntheticSpec::blobs(total, 2, 3, 0.8, 2.5);
    let (data, _) = synthetic_dataset::<f64, _>(&spec, &mut rng).unwrap();
    partition(&data, &PartitionScheme::UeqNiid { sizes: sizes.to_vec() }, sizes.len(), &mut rng).unwrap()
}

pub fn logistic() -> ModelSpec {
    ModelSpec::logistic(2, 3)
}

pub fn theta0(model: &ModelSpec, seed: u64) -> ParamVector<f64> {
    init_params(model, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed))
}

pub fn training(seed: u64) -> TrainingConfig {
    TrainingConfig { batch_size: 16, learning_rate: 0.1, epochs_per_round: 2, seed }
}

pub fn max_diff(a: &ParamVector<f64>, b: &ParamVector<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.max_abs_diff(b)
}

pub fn digits_paths() -> (PathBuf, PathBuf) {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    (dir.join("digits-images-idx3-ubyte"), dir.join("digits-labels-idx1-ubyte"))
}
