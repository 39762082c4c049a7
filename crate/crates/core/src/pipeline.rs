//! The three-stage pipeline: pre-train a population of RBMs, train a GAN on
//! their flattened weight matrices with per-epoch validation scoring, and
//! materialize artificial RBMs from the selected generator.

use crate::dataio::{Archive, ArchiveKind, Dataset, NamedTensor};
use crate::error::{Error, Result};
use crate::gan::{sample_weights, train_gan, GanModel, GanTrainConfig};
use crate::numerics::{derive_seed, Matrix, RandomStream};
use crate::rbm::{dataset_mse, train_rbm, RbmParams, RbmTrainConfig};
use rayon::prelude::*;
use std::time::{Duration, Instant};

/// K flattened weight matrices scaled into the tanh range.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDataset {
    /// K x (m*n), every entry in [-1, 1].
    pub samples: Matrix,
    pub source_shape: (usize, usize),
    /// Max absolute entry over the unscaled set (1 if all zero).
    pub weight_scale: f64,
    pub source_ids: Vec<String>,
}

impl WeightDataset {
    pub fn len(&self) -> usize {
        self.samples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inverts the scaling for one flat sample.
    pub fn unscale(&self, flat: &[f64]) -> Vec<f64> {
        flat.iter().map(|&v| v * self.weight_scale).collect()
    }

    pub fn to_archive(&self) -> Result<Archive> {
        let mut archive = Archive::new(ArchiveKind::WeightDataset);
        archive.push_tensor(NamedTensor::from_f64(
            "samples",
            vec![self.samples.rows(), self.samples.cols()],
            self.samples.data(),
        )?);
        archive.set_meta("source_m", self.source_shape.0);
        archive.set_meta("source_n", self.source_shape.1);
        archive.set_meta("weight_scale", format!("{:.17e}", self.weight_scale));
        archive.set_meta("source_ids", self.source_ids.join(","));
        Ok(archive)
    }

    pub fn from_archive(archive: &Archive) -> Result<Self> {
        let t = archive.tensor("samples")?;
        if t.dims.len() != 2 {
            return Err(Error::InvalidArgument(
                "weight dataset tensor must be 2-d".to_string(),
            ));
        }
        let samples = Matrix::from_vec(t.dims[0], t.dims[1], t.to_f64())?;
        let source_m: usize = archive
            .require_meta("source_m")?
            .parse()
            .map_err(|_| Error::InvalidArgument("bad source_m".to_string()))?;
        let source_n: usize = archive
            .require_meta("source_n")?
            .parse()
            .map_err(|_| Error::InvalidArgument("bad source_n".to_string()))?;
        let weight_scale: f64 = archive
            .require_meta("weight_scale")?
            .parse()
            .map_err(|_| Error::InvalidArgument("bad weight_scale".to_string()))?;
        let source_ids = archive
            .require_meta("source_ids")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        Ok(WeightDataset {
            samples,
            source_shape: (source_m, source_n),
            weight_scale,
            source_ids,
        })
    }
}

/// Validation trace of the adversarial stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    /// Validation MSE of the candidate sampled at each epoch (1-based).
    pub validation_mse: Vec<f64>,
    /// 1-based epoch index of the minimum (ties break to the earliest).
    pub best_epoch: usize,
    pub best_mse: f64,
    /// Which original RBM donated its slot (biases reset).
    pub candidate_rbm_id: usize,
}

/// Pre-trains K RBMs with identical hyperparameters and independent derived
/// seeds. Models are trained in parallel; the returned order is stable and
/// scheduling-independent.
pub fn pretrain_population(
    train: &Dataset,
    k: usize,
    cfg: &RbmTrainConfig,
) -> Result<Vec<(RbmParams, Vec<f64>)>> {
    if k == 0 {
        return Err(Error::InvalidArgument("population size must be >= 1".to_string()));
    }
    cfg.validate()?;
    (0..k)
        .into_par_iter()
        .map(|index| {
            let mut member_cfg = cfg.clone();
            member_cfg.seed = derive_seed(cfg.seed, "rbm-member", index as u64);
            train_rbm(train, &member_cfg)
        })
        .collect()
}

/// Flattens each weight matrix row-major and scales the set into [-1, 1] by
/// the global max absolute entry.
pub fn build_weight_dataset(models: &[RbmParams]) -> Result<WeightDataset> {
    let first = models
        .first()
        .ok_or_else(|| Error::EmptyInput("build_weight_dataset with no models".to_string()))?;
    let shape = (first.visible_dim(), first.hidden_dim());
    for (i, model) in models.iter().enumerate() {
        if (model.visible_dim(), model.hidden_dim()) != shape {
            return Err(Error::shape(
                "build_weight_dataset",
                format!("model 0 is {}x{}", shape.0, shape.1),
                format!(
                    "model {i} is {}x{}",
                    model.visible_dim(),
                    model.hidden_dim()
                ),
            ));
        }
    }
    let mut max_abs = 0.0f64;
    for model in models {
        for &w in model.w.data() {
            max_abs = max_abs.max(w.abs());
        }
    }
    let weight_scale = if max_abs == 0.0 { 1.0 } else { max_abs };

    let flat_dim = shape.0 * shape.1;
    let mut samples = Matrix::zeros(models.len(), flat_dim);
    for (r, model) in models.iter().enumerate() {
        for (dst, &w) in samples.row_mut(r).iter_mut().zip(model.w.data()) {
            *dst = w / weight_scale;
        }
    }
    Ok(WeightDataset {
        samples,
        source_shape: shape,
        weight_scale,
        source_ids: (0..models.len()).map(|i| format!("rbm-{i:04}")).collect(),
    })
}

/// Scores a candidate weight matrix: the donor RBM's weights are replaced by
/// the (already unscaled) flat weights, biases are reset to zero, and the
/// candidate is evaluated by mean reconstruction MSE over the validation
/// set. Deterministic: the reconstruction is a mean-field pass.
pub fn score_candidate(flat_weights: &[f64], donor: &RbmParams, validation: &Dataset) -> Result<f64> {
    let (m, n) = (donor.visible_dim(), donor.hidden_dim());
    if flat_weights.len() != m * n {
        return Err(Error::shape(
            "score_candidate",
            format!("{} weights", flat_weights.len()),
            format!("donor {m}x{n}"),
        ));
    }
    let candidate = RbmParams {
        w: Matrix::from_vec(m, n, flat_weights.to_vec())?,
        a: vec![0.0; m],
        b: vec![0.0; n],
    };
    dataset_mse(validation, &candidate)
}

/// Trains the GAN on `weights`, sampling one candidate matrix per epoch and
/// scoring it on the validation set through a fixed donor chosen by
/// `r_seed`. Returns the generator snapshot at the argmin epoch (S*), the
/// selection trace, and the per-epoch loss curves.
pub fn run_adversarial_stage(
    weights: &WeightDataset,
    originals: &[RbmParams],
    validation: &Dataset,
    gan_cfg: &GanTrainConfig,
    r_seed: u64,
) -> Result<(GanModel, SelectionRecord, Vec<(f64, f64)>)> {
    if weights.is_empty() || originals.is_empty() {
        return Err(Error::EmptyInput("adversarial stage needs a population".to_string()));
    }
    if weights.len() != originals.len() {
        return Err(Error::shape(
            "run_adversarial_stage",
            format!("{} weight samples", weights.len()),
            format!("{} original models", originals.len()),
        ));
    }
    let mut donor_stream = RandomStream::derive(r_seed, "donor-choice", 0);
    let donor_index = donor_stream.below(originals.len());
    let donor = &originals[donor_index];

    let mut score_stream = RandomStream::derive(gan_cfg.seed, "selection-noise", 0);
    let mut series: Vec<f64> = Vec::with_capacity(gan_cfg.epochs);
    let mut best: Option<(usize, f64, GanModel)> = None;

    let (final_model, curves) = train_gan(
        &weights.samples,
        weights.source_shape,
        weights.weight_scale,
        gan_cfg,
        |epoch, model| {
            let mut zeta = vec![0.0; model.noise_dim];
            for z in &mut zeta {
                *z = score_stream.standard_normal();
            }
            let flat = crate::gan::generator_forward(&zeta, &model.generator)?;
            let unscaled = weights.unscale(&flat);
            let mse = score_candidate(&unscaled, donor, validation)?;
            series.push(mse);
            let improved = match &best {
                Some((_, best_mse, _)) => mse < *best_mse,
                None => true,
            };
            if improved {
                best = Some((epoch, mse, model.clone()));
            }
            Ok(())
        },
    )?;
    drop(final_model);

    let (best_epoch, best_mse, mut selected) =
        best.expect("at least one epoch ran, so a best candidate exists");
    selected.selected_epoch = Some(best_epoch);
    let record = SelectionRecord {
        validation_mse: series,
        best_epoch,
        best_mse,
        candidate_rbm_id: donor_index,
    };
    Ok((selected, record, curves))
}

/// Samples L artificial RBMs from the selected generator. Weight matrices
/// come from the generator (unscaled); biases are zero.
pub fn materialize_rbms(selected: &GanModel, count: usize, stream: &mut RandomStream) -> Result<Vec<RbmParams>> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be >= 1".to_string()));
    }
    let matrices = sample_weights(selected, count, stream)?;
    Ok(matrices
        .into_iter()
        .map(|w| {
            let (m, n) = (w.rows(), w.cols());
            RbmParams {
                w,
                a: vec![0.0; m],
                b: vec![0.0; n],
            }
        })
        .collect())
}

/// Wall-clock totals for the pipeline stages, mirroring the cost model
/// alpha*K + beta + gamma + iota*L.
#[derive(Debug, Clone, Default)]
pub struct StageTimings {
    /// alpha * K: total pre-training time.
    pub pretrain: Duration,
    /// beta + gamma: GAN training plus validation scoring.
    pub adversarial: Duration,
    /// iota * L: sampling time for the artificial models.
    pub sampling: Duration,
    pub k: usize,
    pub l: usize,
    pub gan_epochs: usize,
}

impl StageTimings {
    pub fn is_empty(&self) -> bool {
        self.pretrain.is_zero() && self.adversarial.is_zero() && self.sampling.is_zero()
    }

    /// sampling / pretrain; infinity when nothing was pre-trained.
    pub fn sampling_to_pretrain_ratio(&self) -> f64 {
        let pre = self.pretrain.as_secs_f64();
        if pre == 0.0 {
            f64::INFINITY
        } else {
            self.sampling.as_secs_f64() / pre
        }
    }

    /// Multi-line text report of the empirical stage costs.
    pub fn report(&self, config_hash: &str) -> String {
        if self.is_empty() {
            return String::from("timing report: no stages instrumented\n");
        }
        let mut out = String::new();
        out.push_str("timing report\n");
        out.push_str(&format!("config_hash={config_hash}\n"));
        out.push_str(&format!("K={} L={} gan_epochs={}\n", self.k, self.l, self.gan_epochs));
        out.push_str(&format!(
            "pretrain_total_s={:.6}\n",
            self.pretrain.as_secs_f64()
        ));
        out.push_str(&format!(
            "adversarial_total_s={:.6}\n",
            self.adversarial.as_secs_f64()
        ));
        out.push_str(&format!(
            "sampling_total_s={:.6}\n",
            self.sampling.as_secs_f64()
        ));
        out.push_str(&format!(
            "sampling_to_pretrain_ratio={:.6}\n",
            self.sampling_to_pretrain_ratio()
        ));
        out
    }
}

/// Everything the full pipeline produces for one master seed.
pub struct PipelineOutput {
    pub originals: Vec<(RbmParams, Vec<f64>)>,
    pub weights: WeightDataset,
    pub selected: GanModel,
    pub record: SelectionRecord,
    pub loss_curves: Vec<(f64, f64)>,
    pub artificials: Vec<RbmParams>,
    pub timings: StageTimings,
}

/// Runs pre-training, the adversarial stage, and sampling end to end with
/// all component seeds derived from `master_seed`.
pub fn run_pipeline(
    train: &Dataset,
    validation: &Dataset,
    k: usize,
    l: usize,
    rbm_cfg: &RbmTrainConfig,
    gan_cfg: &GanTrainConfig,
    master_seed: u64,
) -> Result<PipelineOutput> {
    let mut rbm_cfg = rbm_cfg.clone();
    rbm_cfg.seed = derive_seed(master_seed, "pretrain", 0);
    let mut gan_cfg = gan_cfg.clone();
    gan_cfg.seed = derive_seed(master_seed, "gan", 0);

    let t0 = Instant::now();
    let originals = pretrain_population(train, k, &rbm_cfg)?;
    let pretrain_time = t0.elapsed();

    let models: Vec<RbmParams> = originals.iter().map(|(p, _)| p.clone()).collect();
    let weights = build_weight_dataset(&models)?;

    let t1 = Instant::now();
    let (selected, record, loss_curves) = run_adversarial_stage(
        &weights,
        &models,
        validation,
        &gan_cfg,
        derive_seed(master_seed, "donor", 0),
    )?;
    let adversarial_time = t1.elapsed();

    let t2 = Instant::now();
    let mut sample_stream = RandomStream::derive(master_seed, "sampling", 0);
    let artificials = materialize_rbms(&selected, l, &mut sample_stream)?;
    let sampling_time = t2.elapsed();

    Ok(PipelineOutput {
        originals,
        weights,
        selected,
        record,
        loss_curves,
        artificials,
        timings: StageTimings {
            pretrain: pretrain_time,
            adversarial: adversarial_time,
            sampling: sampling_time,
            k,
            l,
            gan_epochs: gan_cfg.epochs,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::SplitTag;
    use crate::gan::GanArchitecture;

    fn toy_dataset(rows: usize, dim: usize) -> Dataset {
        let images = Matrix::from_fn(rows, dim, |i, j| if (i + j) % 3 == 0 { 1.0 } else { 0.0 });
        let labels = (0..rows).map(|i| (i % 10) as u8).collect();
        Dataset::new(images, labels, 10, SplitTag::Train).unwrap()
    }

    fn toy_rbm_cfg(seed: u64) -> RbmTrainConfig {
        RbmTrainConfig {
            n_hidden: 3,
            cd_steps: 1,
            eta: 0.1,
            batch_size: 8,
            epochs: 2,
            seed,
        }
    }

    #[test]
    fn population_of_one_matches_single_training() {
        let data = toy_dataset(24, 6);
        let cfg = toy_rbm_cfg(5);
        let population = pretrain_population(&data, 1, &cfg).unwrap();
        let mut single_cfg = cfg.clone();
        single_cfg.seed = derive_seed(cfg.seed, "rbm-member", 0);
        let (single, series) = train_rbm(&data, &single_cfg).unwrap();
        assert_eq!(population.len(), 1);
        assert_eq!(population[0].0, single);
        assert_eq!(population[0].1, series);
    }

    #[test]
    fn population_is_deterministic_across_runs() {
        let data = toy_dataset(24, 6);
        let cfg = toy_rbm_cfg(9);
        let a = pretrain_population(&data, 4, &cfg).unwrap();
        let b = pretrain_population(&data, 4, &cfg).unwrap();
        for ((pa, sa), (pb, sb)) in a.iter().zip(&b) {
            assert_eq!(pa, pb);
            assert_eq!(sa, sb);
        }
    }

    #[test]
    fn weight_dataset_scaling_reference_case() {
        let model = RbmParams {
            w: Matrix::from_vec(1, 2, vec![2.0, -4.0]).unwrap(),
            a: vec![0.0],
            b: vec![0.0, 0.0],
        };
        let ds = build_weight_dataset(&[model]).unwrap();
        assert_eq!(ds.weight_scale, 4.0);
        assert_eq!(ds.samples.data(), &[0.5, -1.0]);
    }

    #[test]
    fn all_zero_weights_use_unit_scale() {
        let ds = build_weight_dataset(&[RbmParams::zeros(2, 2)]).unwrap();
        assert_eq!(ds.weight_scale, 1.0);
        assert!(ds.samples.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unscale_inverts_scaling_exactly() {
        let mut stream = RandomStream::derive(17, "scale-roundtrip", 0);
        let models: Vec<RbmParams> = (0..3).map(|_| RbmParams::init(4, 3, &mut stream)).collect();
        let ds = build_weight_dataset(&models).unwrap();
        for (r, model) in models.iter().enumerate() {
            let restored = ds.unscale(ds.samples.row(r));
            for (x, y) in restored.iter().zip(model.w.data()) {
                assert!((x - y).abs() < 1e-12 * y.abs().max(1.0));
            }
        }
        assert!(ds.samples.data().iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn heterogeneous_shapes_are_rejected() {
        let a = RbmParams::zeros(2, 2);
        let b = RbmParams::zeros(2, 3);
        assert!(build_weight_dataset(&[a, b]).is_err());
    }

    #[test]
    fn zero_weight_candidate_scores_closed_form_baseline() {
        let validation = toy_dataset(12, 6);
        let donor = RbmParams::zeros(6, 3);
        let zero_flat = vec![0.0; 18];
        let mse = score_candidate(&zero_flat, &donor, &validation).unwrap();
        let mut expected = 0.0;
        for i in 0..validation.len() {
            expected += validation
                .image(i)
                .iter()
                .map(|&v| (v - 0.5) * (v - 0.5))
                .sum::<f64>();
        }
        expected /= validation.len() as f64;
        assert!((mse - expected).abs() < 1e-12);
    }

    fn desk_gan_cfg(seed: u64) -> GanTrainConfig {
        GanTrainConfig {
            epochs: 4,
            eta_d: 1e-3,
            eta_g: 1e-3,
            batch_size: 2,
            noise_dim: 8,
            seed,
            optimizer: crate::gan::Optimizer::adam_default(),
            architecture: GanArchitecture::tiny(8),
        }
    }

    #[test]
    fn adversarial_stage_selects_argmin_epoch() {
        let data = toy_dataset(24, 6);
        let (train, validation) = data.split(3).unwrap();
        let cfg = toy_rbm_cfg(13);
        let population = pretrain_population(&train, 4, &cfg).unwrap();
        let models: Vec<RbmParams> = population.into_iter().map(|(p, _)| p).collect();
        let weights = build_weight_dataset(&models).unwrap();
        let (selected, record, curves) =
            run_adversarial_stage(&weights, &models, &validation, &desk_gan_cfg(21), 77).unwrap();
        assert_eq!(record.validation_mse.len(), 4);
        assert_eq!(curves.len(), 4);
        let argmin = record
            .validation_mse
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0
            + 1;
        assert_eq!(record.best_epoch, argmin);
        assert_eq!(record.best_mse, record.validation_mse[record.best_epoch - 1]);
        assert_eq!(selected.selected_epoch, Some(record.best_epoch));
        assert!(record.candidate_rbm_id < 4);
    }

    #[test]
    fn single_epoch_selects_epoch_one() {
        let data = toy_dataset(24, 6);
        let (train, validation) = data.split(5).unwrap();
        let cfg = toy_rbm_cfg(15);
        let population = pretrain_population(&train, 2, &cfg).unwrap();
        let models: Vec<RbmParams> = population.into_iter().map(|(p, _)| p).collect();
        let weights = build_weight_dataset(&models).unwrap();
        let mut gan_cfg = desk_gan_cfg(23);
        gan_cfg.epochs = 1;
        let (_, record, _) =
            run_adversarial_stage(&weights, &models, &validation, &gan_cfg, 5).unwrap();
        assert_eq!(record.best_epoch, 1);
    }

    #[test]
    fn materialized_rbms_have_zero_biases_and_bounded_weights() {
        let mut stream = RandomStream::derive(31, "materialize-init", 0);
        let model = GanModel::init(8, (3, 2), 0.7, &GanArchitecture::tiny(8), &mut stream).unwrap();
        let mut sample_stream = RandomStream::derive(31, "materialize", 0);
        let rbms = materialize_rbms(&model, 5, &mut sample_stream).unwrap();
        assert_eq!(rbms.len(), 5);
        for rbm in &rbms {
            assert!(rbm.a.iter().all(|&v| v == 0.0));
            assert!(rbm.b.iter().all(|&v| v == 0.0));
            assert!(rbm.w.data().iter().all(|&v| v.abs() <= 0.7));
        }
        assert!(materialize_rbms(&model, 0, &mut sample_stream).is_err());
    }

    #[test]
    fn pipeline_is_deterministic_end_to_end() {
        let data = toy_dataset(32, 6);
        let (train, validation) = data.split(7).unwrap();
        let rbm_cfg = toy_rbm_cfg(0);
        let gan_cfg = desk_gan_cfg(0);
        let run = || run_pipeline(&train, &validation, 3, 3, &rbm_cfg, &gan_cfg, 4242).unwrap();
        let a = run();
        let b = run();
        assert_eq!(a.record, b.record);
        assert_eq!(a.selected, b.selected);
        for (x, y) in a.artificials.iter().zip(&b.artificials) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn empty_timings_report_says_so() {
        let empty = StageTimings::default();
        assert!(empty.is_empty());
        assert!(empty.report("x").contains("no stages instrumented"));
    }
}
