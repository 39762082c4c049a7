//! Weight-space GAN: an MLP generator and discriminator over flattened RBM
//! weight matrices, trained as a zero-sum game with the non-saturating
//! generator objective.

mod mlp;

pub use mlp::{ForwardTrace, Layer, MlpGradients, MlpParams, Optimizer, OptimizerState};

use crate::dataio::{Archive, ArchiveKind, NamedTensor};
use crate::error::{Error, Result};
use crate::numerics::{Activation, Matrix, RandomStream};

/// Probabilities are clamped into [CLAMP, 1 - CLAMP] inside the log terms so
/// a saturated discriminator cannot produce infinite losses.
pub const PROB_CLAMP: f64 = 1e-7;

/// Hidden-layer widths for the two networks. The reference architecture is
/// three up-samplings (128, 256, 512) for the generator and three
/// down-samplings (512, 256, 128) for the discriminator, leaky-rectifier
/// activations with slope 0.01, a tanh generator output and a single
/// sigmoid discriminator unit.
#[derive(Debug, Clone, PartialEq)]
pub struct GanArchitecture {
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub leaky_slope: f64,
}

impl Default for GanArchitecture {
    fn default() -> Self {
        GanArchitecture {
            generator_hidden: vec![128, 256, 512],
            discriminator_hidden: vec![512, 256, 128],
            leaky_slope: 0.01,
        }
    }
}

impl GanArchitecture {
    /// Desk-scale architecture used by tests; keeps every dimension small.
    pub fn tiny(width: usize) -> Self {
        GanArchitecture {
            generator_hidden: vec![width, width],
            discriminator_hidden: vec![width, width],
            leaky_slope: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanModel {
    pub generator: MlpParams,
    pub discriminator: MlpParams,
    pub noise_dim: usize,
    /// Max-abs scale that maps source weights into the tanh range.
    pub weight_scale: f64,
    /// (m, n) of the source RBM weight matrices.
    pub source_shape: (usize, usize),
    /// Epoch whose sampled candidate won validation selection, once chosen.
    pub selected_epoch: Option<usize>,
}

impl GanModel {
    pub fn init(
        noise_dim: usize,
        source_shape: (usize, usize),
        weight_scale: f64,
        arch: &GanArchitecture,
        stream: &mut RandomStream,
    ) -> Result<Self> {
        if noise_dim == 0 || source_shape.0 == 0 || source_shape.1 == 0 {
            return Err(Error::InvalidArgument(
                "noise_dim and source shape must be >= 1".to_string(),
            ));
        }
        if weight_scale <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "weight_scale must be > 0, got {weight_scale}"
            )));
        }
        let flat_dim = source_shape.0 * source_shape.1;
        let leaky = Activation::LeakyRelu(arch.leaky_slope);

        let mut gen_dims = vec![noise_dim];
        gen_dims.extend_from_slice(&arch.generator_hidden);
        gen_dims.push(flat_dim);
        let mut gen_acts = vec![leaky; arch.generator_hidden.len()];
        gen_acts.push(Activation::Tanh);

        let mut disc_dims = vec![flat_dim];
        disc_dims.extend_from_slice(&arch.discriminator_hidden);
        disc_dims.push(1);
        let mut disc_acts = vec![leaky; arch.discriminator_hidden.len()];
        disc_acts.push(Activation::Sigmoid);

        Ok(GanModel {
            generator: MlpParams::init(&gen_dims, &gen_acts, stream)?,
            discriminator: MlpParams::init(&disc_dims, &disc_acts, stream)?,
            noise_dim,
            weight_scale,
            source_shape,
            selected_epoch: None,
        })
    }

    pub fn flat_dim(&self) -> usize {
        self.source_shape.0 * self.source_shape.1
    }

    pub fn to_archive(&self) -> Result<Archive> {
        let mut archive = Archive::new(ArchiveKind::Gan);
        archive.set_meta("noise_dim", self.noise_dim);
        archive.set_meta("weight_scale", format!("{:.17e}", self.weight_scale));
        archive.set_meta("source_m", self.source_shape.0);
        archive.set_meta("source_n", self.source_shape.1);
        match self.selected_epoch {
            Some(e) => archive.set_meta("selected_epoch", e),
            None => archive.set_meta("selected_epoch", "none"),
        }
        for (prefix, mlp) in [("gen", &self.generator), ("disc", &self.discriminator)] {
            archive.set_meta(format!("{prefix}_layers"), mlp.layers.len());
            for (k, layer) in mlp.layers.iter().enumerate() {
                archive.set_meta(format!("{prefix}_act{k}"), layer.activation.name());
                archive.push_tensor(NamedTensor::from_f64(
                    format!("{prefix}_w{k}"),
                    vec![layer.weights.rows(), layer.weights.cols()],
                    layer.weights.data(),
                )?);
                archive.push_tensor(NamedTensor::from_f64(
                    format!("{prefix}_b{k}"),
                    vec![layer.bias.len()],
                    &layer.bias,
                )?);
            }
        }
        Ok(archive)
    }

    pub fn from_archive(archive: &Archive) -> Result<Self> {
        let noise_dim: usize = parse_meta(archive, "noise_dim")?;
        let weight_scale: f64 = parse_meta(archive, "weight_scale")?;
        let source_m: usize = parse_meta(archive, "source_m")?;
        let source_n: usize = parse_meta(archive, "source_n")?;
        let selected_epoch = match archive.require_meta("selected_epoch")? {
            "none" => None,
            text => Some(text.parse::<usize>().map_err(|_| {
                Error::InvalidArgument(format!("bad selected_epoch metadata: {text}"))
            })?),
        };
        let mut networks = Vec::with_capacity(2);
        for prefix in ["gen", "disc"] {
            let count: usize = parse_meta(archive, &format!("{prefix}_layers"))?;
            let mut layers = Vec::with_capacity(count);
            for k in 0..count {
                let activation =
                    parse_activation(archive.require_meta(&format!("{prefix}_act{k}"))?)?;
                let w = archive.tensor(&format!("{prefix}_w{k}"))?;
                if w.dims.len() != 2 {
                    return Err(Error::InvalidArgument(format!(
                        "layer weight tensor {prefix}_w{k} must be 2-d"
                    )));
                }
                let weights = Matrix::from_vec(w.dims[0], w.dims[1], w.to_f64())?;
                let bias = archive.tensor(&format!("{prefix}_b{k}"))?.to_f64();
                layers.push(Layer {
                    weights,
                    bias,
                    activation,
                });
            }
            networks.push(MlpParams { layers });
        }
        let discriminator = networks.pop().expect("two networks");
        let generator = networks.pop().expect("two networks");
        Ok(GanModel {
            generator,
            discriminator,
            noise_dim,
            weight_scale,
            source_shape: (source_m, source_n),
            selected_epoch,
        })
    }
}

fn parse_meta<T: std::str::FromStr>(archive: &Archive, key: &str) -> Result<T> {
    archive
        .require_meta(key)?
        .parse::<T>()
        .map_err(|_| Error::InvalidArgument(format!("bad {key} metadata")))
}

fn parse_activation(name: &str) -> Result<Activation> {
    if name == "sigmoid" {
        return Ok(Activation::Sigmoid);
    }
    if name == "tanh" {
        return Ok(Activation::Tanh);
    }
    if let Some(inner) = name.strip_prefix("leaky_relu(").and_then(|s| s.strip_suffix(')')) {
        let slope = inner
            .parse::<f64>()
            .map_err(|_| Error::InvalidArgument(format!("bad activation: {name}")))?;
        return Ok(Activation::LeakyRelu(slope));
    }
    Err(Error::InvalidArgument(format!("unknown activation: {name}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanTrainConfig {
    pub epochs: usize,
    pub eta_d: f64,
    pub eta_g: f64,
    pub batch_size: usize,
    pub noise_dim: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub architecture: GanArchitecture,
}

impl GanTrainConfig {
    /// Reference configuration: learning rates 1e-4, adaptive moments,
    /// batch size K/16 supplied by the caller.
    pub fn defaults(noise_dim: usize, batch_size: usize, seed: u64) -> Self {
        GanTrainConfig {
            epochs: 4000,
            eta_d: 1e-4,
            eta_g: 1e-4,
            batch_size,
            noise_dim,
            seed,
            optimizer: Optimizer::adam_default(),
            architecture: GanArchitecture::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.noise_dim == 0 {
            return Err(Error::InvalidArgument(
                "epochs, batch_size and noise_dim must be >= 1".to_string(),
            ));
        }
        if self.eta_d < 0.0 || self.eta_g < 0.0 {
            return Err(Error::InvalidArgument(
                "learning rates must be >= 0".to_string(),
            ));
        }
        Ok(())
    }
}

/// Generator forward pass for a single noise vector.
pub fn generator_forward(zeta: &[f64], generator: &MlpParams) -> Result<Vec<f64>> {
    if zeta.len() != generator.input_dim() {
        return Err(Error::shape(
            "generator_forward",
            format!("noise {}", zeta.len()),
            format!("expected {}", generator.input_dim()),
        ));
    }
    let batch = Matrix::from_vec(1, zeta.len(), zeta.to_vec())?;
    let trace = generator.forward(&batch)?;
    Ok(trace.output().row(0).to_vec())
}

/// Discriminator forward pass: probability that `x` is a real weight vector.
pub fn discriminator_forward(x: &[f64], discriminator: &MlpParams) -> Result<f64> {
    if x.len() != discriminator.input_dim() {
        return Err(Error::shape(
            "discriminator_forward",
            format!("input {}", x.len()),
            format!("expected {}", discriminator.input_dim()),
        ));
    }
    let batch = Matrix::from_vec(1, x.len(), x.to_vec())?;
    let trace = discriminator.forward(&batch)?;
    Ok(trace.output().get(0, 0))
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn in_clamp_range(p: f64) -> bool {
    (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p)
}

/// loss_D = -mean log D(real) - mean log(1 - D(fake)),
/// loss_G = -mean log D(fake)  (non-saturating form).
pub fn losses(real_probs: &[f64], fake_probs: &[f64]) -> Result<(f64, f64)> {
    if real_probs.is_empty() || fake_probs.is_empty() {
        return Err(Error::EmptyInput("losses on empty batch".to_string()));
    }
    let real_term: f64 = real_probs.iter().map(|&p| -clamp_prob(p).ln()).sum::<f64>()
        / real_probs.len() as f64;
    let fake_term: f64 = fake_probs
        .iter()
        .map(|&p| -(1.0 - clamp_prob(p)).ln())
        .sum::<f64>()
        / fake_probs.len() as f64;
    let gen_term: f64 = fake_probs.iter().map(|&p| -clamp_prob(p).ln()).sum::<f64>()
        / fake_probs.len() as f64;
    Ok((real_term + fake_term, gen_term))
}

/// d loss_D / d p for a real sample (mean over `count` samples).
fn grad_real(p: f64, count: usize) -> f64 {
    if in_clamp_range(p) {
        -1.0 / (p * count as f64)
    } else {
        0.0
    }
}

/// d loss_D / d p for a fake sample.
fn grad_fake_d(p: f64, count: usize) -> f64 {
    if in_clamp_range(p) {
        1.0 / ((1.0 - p) * count as f64)
    } else {
        0.0
    }
}

/// d loss_G / d p for a fake sample (non-saturating).
fn grad_fake_g(p: f64, count: usize) -> f64 {
    if in_clamp_range(p) {
        -1.0 / (p * count as f64)
    } else {
        0.0
    }
}

fn sample_noise(rows: usize, noise_dim: usize, stream: &mut RandomStream) -> Matrix {
    let mut noise = Matrix::zeros(rows, noise_dim);
    for v in noise.data_mut() {
        *v = stream.standard_normal();
    }
    noise
}

/// Optimizer state for the two networks across training steps.
pub struct GanTrainerState {
    pub disc: OptimizerState,
    pub gen: OptimizerState,
}

impl GanTrainerState {
    pub fn new(model: &GanModel) -> Self {
        GanTrainerState {
            disc: OptimizerState::new(&model.discriminator),
            gen: OptimizerState::new(&model.generator),
        }
    }
}

/// One discriminator update on (real batch, fresh fakes), then one generator
/// update on fresh noise. Returns (loss_D, loss_G) measured at each update.
pub fn train_step(
    real_batch: &Matrix,
    model: &mut GanModel,
    cfg: &GanTrainConfig,
    state: &mut GanTrainerState,
    stream: &mut RandomStream,
) -> Result<(f64, f64)> {
    let batch_size = real_batch.rows();
    if batch_size == 0 {
        return Err(Error::EmptyInput("train_step on empty batch".to_string()));
    }

    // Discriminator step.
    let noise = sample_noise(batch_size, cfg.noise_dim, stream);
    let fake_batch = model.generator.forward(&noise)?.into_output();
    let real_trace = model.discriminator.forward(real_batch)?;
    let fake_trace = model.discriminator.forward(&fake_batch)?;
    let real_probs: Vec<f64> = real_trace.output().data().to_vec();
    let fake_probs: Vec<f64> = fake_trace.output().data().to_vec();
    let (loss_d, _) = losses(&real_probs, &fake_probs)?;

    let grad_real_out =
        Matrix::from_vec(batch_size, 1, real_probs.iter().map(|&p| grad_real(p, batch_size)).collect())?;
    let grad_fake_out =
        Matrix::from_vec(batch_size, 1, fake_probs.iter().map(|&p| grad_fake_d(p, batch_size)).collect())?;
    let (mut disc_grads, _) = model.discriminator.backward(&real_trace, &grad_real_out)?;
    let (fake_grads, _) = model.discriminator.backward(&fake_trace, &grad_fake_out)?;
    disc_grads.accumulate(&fake_grads)?;
    state
        .disc
        .apply(&mut model.discriminator, &disc_grads, cfg.eta_d, cfg.optimizer)?;

    // Generator step on fresh noise, through the updated discriminator.
    let noise = sample_noise(batch_size, cfg.noise_dim, stream);
    let gen_trace = model.generator.forward(&noise)?;
    let disc_trace = model.discriminator.forward(gen_trace.output())?;
    let gen_probs: Vec<f64> = disc_trace.output().data().to_vec();
    let loss_g = gen_probs.iter().map(|&p| -clamp_prob(p).ln()).sum::<f64>() / batch_size as f64;

    let grad_gen_out =
        Matrix::from_vec(batch_size, 1, gen_probs.iter().map(|&p| grad_fake_g(p, batch_size)).collect())?;
    let (_, grad_into_fake) = model.discriminator.backward(&disc_trace, &grad_gen_out)?;
    let (gen_grads, _) = model.generator.backward(&gen_trace, &grad_into_fake)?;
    state
        .gen
        .apply(&mut model.generator, &gen_grads, cfg.eta_g, cfg.optimizer)?;

    if !loss_d.is_finite() || !loss_g.is_finite() {
        return Err(Error::NonFinite {
            context: "gan losses".to_string(),
            epoch: 0,
            batch: 0,
        });
    }
    Ok((loss_d, loss_g))
}

/// Trains a GAN over the weight samples (rows of `t_a_samples`, already in
/// the tanh range). Calls `epoch_hook(epoch, &model)` once per epoch with
/// epochs counted from 1. Returns the final model and per-epoch
/// (loss_D, loss_G) means.
pub fn train_gan(
    t_a_samples: &Matrix,
    source_shape: (usize, usize),
    weight_scale: f64,
    cfg: &GanTrainConfig,
    mut epoch_hook: impl FnMut(usize, &GanModel) -> Result<()>,
) -> Result<(GanModel, Vec<(f64, f64)>)> {
    cfg.validate()?;
    if t_a_samples.rows() == 0 {
        return Err(Error::EmptyInput("train_gan on empty weight set".to_string()));
    }
    if t_a_samples.cols() != source_shape.0 * source_shape.1 {
        return Err(Error::shape(
            "train_gan",
            format!("samples {}", t_a_samples.shape_string()),
            format!("source shape {}x{}", source_shape.0, source_shape.1),
        ));
    }

    let mut init_stream = RandomStream::derive(cfg.seed, "gan-init", 0);
    let mut model = GanModel::init(
        cfg.noise_dim,
        source_shape,
        weight_scale,
        &cfg.architecture,
        &mut init_stream,
    )?;
    let mut state = GanTrainerState::new(&model);
    let mut noise_stream = RandomStream::derive(cfg.seed, "gan-noise", 0);
    let mut shuffle_stream = RandomStream::derive(cfg.seed, "gan-shuffle", 0);

    let n = t_a_samples.rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut curves = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        shuffle_stream.shuffle(&mut order);
        let mut sum_d = 0.0;
        let mut sum_g = 0.0;
        let mut batches = 0usize;
        for (batch_index, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut batch = Matrix::zeros(chunk.len(), t_a_samples.cols());
            for (r, &i) in chunk.iter().enumerate() {
                batch.row_mut(r).copy_from_slice(t_a_samples.row(i));
            }
            let (ld, lg) =
                train_step(&batch, &mut model, cfg, &mut state, &mut noise_stream).map_err(
                    |e| match e {
                        Error::NonFinite { context, .. } => Error::NonFinite {
                            context,
                            epoch,
                            batch: batch_index,
                        },
                        other => other,
                    },
                )?;
            sum_d += ld;
            sum_g += lg;
            batches += 1;
        }
        curves.push((sum_d / batches as f64, sum_g / batches as f64));
        epoch_hook(epoch, &model)?;
    }
    Ok((model, curves))
}

/// Draws `count` weight matrices from the generator: noise -> G -> inverse
/// scaling -> reshape to (m, n).
pub fn sample_weights(model: &GanModel, count: usize, stream: &mut RandomStream) -> Result<Vec<Matrix>> {
    let (m, n) = model.source_shape;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut zeta = vec![0.0; model.noise_dim];
        for z in &mut zeta {
            *z = stream.standard_normal();
        }
        let flat = generator_forward(&zeta, &model.generator)?;
        let unscaled: Vec<f64> = flat.iter().map(|&v| v * model.weight_scale).collect();
        out.push(Matrix::from_vec(m, n, unscaled)?);
    }
    Ok(out)
}
