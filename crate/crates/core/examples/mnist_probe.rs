//! Scratch probe: reconstruction MSE on the bundled MNIST subset.

use rbmgen::dataio::{load_dataset, SplitTag};
use rbmgen::numerics::derive_seed;
use rbmgen::rbm::{dataset_mse, train_rbm, RbmTrainConfig};
use std::path::Path;

fn main() {
    let dir = Path::new("data/mnist10k");
    let train_full = load_dataset(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
        SplitTag::Train,
    )
    .unwrap();
    let test = load_dataset(
        &dir.join("test-images-idx3-ubyte"),
        &dir.join("test-labels-idx1-ubyte"),
        SplitTag::Test,
    )
    .unwrap();
    let (train, _validation) = train_full.split(42).unwrap();
    println!("train {} test {}", train.len(), test.len());

    for n_hidden in [32usize, 128] {
        let t0 = std::time::Instant::now();
        let mut values = Vec::new();
        for seed_index in 0..3u64 {
            let cfg = RbmTrainConfig {
                n_hidden,
                cd_steps: 1,
                eta: 0.1,
                batch_size: 128,
                epochs: 10,
                seed: derive_seed(99, "probe", seed_index),
            };
            let (params, series) = train_rbm(&train, &cfg).unwrap();
            let test_mse = dataset_mse(&test, &params).unwrap();
            values.push(test_mse);
            println!(
                "n={n_hidden} seed {seed_index}: train-epoch MSE first/last {:.3}/{:.3}, test {:.3}",
                series[0],
                series.last().unwrap(),
                test_mse
            );
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        println!("n={n_hidden}: mean test MSE {:.3} ({:?})", mean, t0.elapsed());
    }
}
