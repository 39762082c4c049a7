//! Scratch probe for desk-scale pipeline behavior (hyperparameter tuning).

use rbmgen::dataio::{load_dataset, SplitTag};
use rbmgen::gan::{GanArchitecture, GanTrainConfig, Optimizer};
use rbmgen::numerics::RandomStream;
use rbmgen::pipeline::run_pipeline;
use rbmgen::rbm::{dataset_mse, RbmTrainConfig};
use std::path::Path;

fn main() {
    let dir = Path::new("data/digits8x8");
    let full = load_dataset(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
        SplitTag::Train,
    )
    .unwrap();
    let (train, validation) = full.split(1234).unwrap();
    println!("train {} validation {}", train.len(), validation.len());

    // zero-weight baseline: reconstruction is 0.5 everywhere
    let mut baseline = 0.0;
    for i in 0..validation.len() {
        baseline += validation
            .image(i)
            .iter()
            .map(|&v| (v - 0.5) * (v - 0.5))
            .sum::<f64>();
    }
    baseline /= validation.len() as f64;
    println!("zero-weight baseline MSE = {baseline:.4}");

    let rbm_cfg = RbmTrainConfig {
        n_hidden: 8,
        cd_steps: 1,
        eta: 0.1,
        batch_size: 128,
        epochs: 10,
        seed: 0,
    };

    for (eta, epochs) in [(1e-3, 200), (3e-3, 200)] {
        let gan_cfg = GanTrainConfig {
            epochs,
            eta_d: eta,
            eta_g: eta,
            batch_size: 4,
            noise_dim: 256,
            seed: 0,
            optimizer: Optimizer::adam_default(),
            architecture: GanArchitecture::default(),
        };
        let t0 = std::time::Instant::now();
        let out = run_pipeline(&train, &validation, 8, 8, &rbm_cfg, &gan_cfg, 777).unwrap();
        let elapsed = t0.elapsed();

        let orig_mse: Vec<f64> = out
            .originals
            .iter()
            .map(|(p, _)| dataset_mse(&validation, p).unwrap())
            .collect();
        let art_mse: Vec<f64> = out
            .artificials
            .iter()
            .map(|p| dataset_mse(&validation, p).unwrap())
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        println!("--- eta {eta} epochs {epochs} (took {elapsed:?})");
        println!("original val MSE mean  = {:.4}", mean(&orig_mse));
        println!("artificial val MSE mean = {:.4}  (max {:.4})", mean(&art_mse),
                 art_mse.iter().cloned().fold(f64::MIN, f64::max));
        println!("best epoch {} best MSE {:.4}", out.record.best_epoch, out.record.best_mse);
        println!(
            "selection series first/last: {:.4} / {:.4}",
            out.record.validation_mse[0],
            out.record.validation_mse.last().unwrap()
        );
        println!(
            "timings: pretrain {:?} adversarial {:?} sampling {:?} ratio {:.5}",
            out.timings.pretrain,
            out.timings.adversarial,
            out.timings.sampling,
            out.timings.sampling_to_pretrain_ratio()
        );
        let _ = RandomStream::derive(0, "noop", 0);
    }
}
