//! Scratch probe: compare reconstruction-MSE variants against Table-style
//! magnitudes (mean-field vs sampled hidden vs fully sampled).

use rbmgen::dataio::{load_dataset, SplitTag};
use rbmgen::numerics::RandomStream;
use rbmgen::rbm::{prob_h_given_v, prob_v_given_h, train_rbm, RbmTrainConfig};
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
    let (train, _) = train_full.split(42).unwrap();

    for n_hidden in [32usize, 128] {
        let cfg = RbmTrainConfig {
            n_hidden,
            cd_steps: 1,
            eta: 0.1,
            batch_size: 128,
            epochs: 10,
            seed: 7,
        };
        let (p, _) = train_rbm(&train, &cfg).unwrap();
        let mut stream = RandomStream::derive(1, "variant-probe", 0);

        let mut mean_field = 0.0; // probs -> probs
        let mut sampled_h = 0.0; // binary h -> visible probs
        let mut sampled_hv_expect = 0.0; // binary h -> binary v, expectation over v
        let mut sampled_hv_draw = 0.0; // binary h -> binary v, one draw
        for i in 0..test.len() {
            let v = test.image(i);
            let ph = prob_h_given_v(v, &p).unwrap();
            let recon_mf = prob_v_given_h(&ph, &p).unwrap();
            mean_field += sq_err(v, &recon_mf);

            let hb: Vec<f64> = ph.iter().map(|&q| stream.bernoulli(q).unwrap()).collect();
            let recon_sh = prob_v_given_h(&hb, &p).unwrap();
            sampled_h += sq_err(v, &recon_sh);

            // E[(v - Bern(q))^2] = (v - q)^2 + q(1 - q)
            sampled_hv_expect += v
                .iter()
                .zip(&recon_sh)
                .map(|(&vi, &q)| (vi - q) * (vi - q) + q * (1.0 - q))
                .sum::<f64>();
            let vb: Vec<f64> = recon_sh
                .iter()
                .map(|&q| stream.bernoulli(q).unwrap())
                .collect();
            sampled_hv_draw += sq_err(v, &vb);
        }
        let n = test.len() as f64;
        println!(
            "n={n_hidden}: mean-field {:.2} | sampled-h {:.2} | sampled-hv expect {:.2} | sampled-hv draw {:.2}",
            mean_field / n,
            sampled_h / n,
            sampled_hv_expect / n,
            sampled_hv_draw / n
        );
    }
    println!("paper targets: n=32 -> 88.17, n=128 -> 64.77");
}

fn sq_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
}
