//! Classification path: a softmax classifier on RBM-extracted features,
//! per-model prediction, and majority-voting ensembles in the original /
//! artificial / heterogeneous compositions.

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RandomStream};
use crate::rbm::{extract_features_batch, RbmParams};
use std::collections::BTreeMap;

/// Multinomial softmax over feature vectors. The classifier kind is behind
/// this struct so an external classifier can be plugged via the feature
/// export path without touching callers.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    /// n_features x n_classes.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub eta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            eta: 0.5,
            epochs: 60,
            batch_size: 128,
            seed: 0,
        }
    }
}

impl ClassifierModel {
    pub fn num_classes(&self) -> usize {
        self.weights.cols()
    }

    pub fn num_features(&self) -> usize {
        self.weights.rows()
    }

    /// Class scores for a batch of feature rows.
    pub fn scores(&self, features: &Matrix) -> Result<Matrix> {
        let mut out = features.matmul(&self.weights)?;
        out.add_row_bias(&self.bias)?;
        Ok(out)
    }
}

fn softmax_row(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Fits the softmax classifier by seeded mini-batch gradient descent with a
/// fixed schedule. Deterministic given (features, labels, cfg).
pub fn train_classifier(
    features: &Matrix,
    labels: &[u8],
    num_classes: usize,
    cfg: &ClassifierConfig,
) -> Result<ClassifierModel> {
    if features.rows() != labels.len() {
        return Err(Error::shape(
            "train_classifier",
            format!("{} feature rows", features.rows()),
            format!("{} labels", labels.len()),
        ));
    }
    if features.rows() == 0 {
        return Err(Error::EmptyInput("train_classifier with no samples".to_string()));
    }
    if !features.is_finite() {
        return Err(Error::InvalidArgument("non-finite feature values".to_string()));
    }
    let mut class_counts = vec![0usize; num_classes];
    for &label in labels {
        if label as usize >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "label {label} outside [0, {num_classes})"
            )));
        }
        class_counts[label as usize] += 1;
    }
    if let Some(empty) = class_counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidArgument(format!(
            "class {empty} has no training samples"
        )));
    }

    let n_features = features.cols();
    let mut model = ClassifierModel {
        weights: Matrix::zeros(n_features, num_classes),
        bias: vec![0.0; num_classes],
    };
    let mut shuffle_stream = RandomStream::derive(cfg.seed, "classifier-shuffle", 0);
    let mut order: Vec<usize> = (0..features.rows()).collect();

    for _ in 0..cfg.epochs {
        shuffle_stream.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch = Matrix::zeros(chunk.len(), n_features);
            for (r, &i) in chunk.iter().enumerate() {
                batch.row_mut(r).copy_from_slice(features.row(i));
            }
            let mut probs = model.scores(&batch)?;
            for r in 0..probs.rows() {
                softmax_row(probs.row_mut(r));
            }
            // d cross-entropy / d logits = probs - one_hot
            for (r, &i) in chunk.iter().enumerate() {
                let target = labels[i] as usize;
                probs.set(r, target, probs.get(r, target) - 1.0);
            }
            let grad_w = batch.matmul_tn(&probs)?;
            let scale = cfg.eta / chunk.len() as f64;
            model.weights.scaled_add_assign(-scale, &grad_w)?;
            for c in 0..num_classes {
                let mut acc = 0.0;
                for r in 0..probs.rows() {
                    acc += probs.get(r, c);
                }
                model.bias[c] -= scale * acc;
            }
        }
    }
    if !model.weights.is_finite() || !model.bias.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            context: "classifier parameters".to_string(),
            epoch: cfg.epochs,
            batch: 0,
        });
    }
    Ok(model)
}

fn argmax_lowest_index(scores: &[f64]) -> u8 {
    let mut best = 0usize;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best as u8
}

/// Predicts a class for one sample through (RBM features -> classifier).
/// Ties break to the lowest class index.
pub fn predict(rbm: &RbmParams, classifier: &ClassifierModel, v: &[f64]) -> Result<u8> {
    let features = crate::rbm::extract_features(v, rbm)?;
    let row = Matrix::from_vec(1, features.len(), features)?;
    let scores = classifier.scores(&row)?;
    Ok(argmax_lowest_index(scores.row(0)))
}

/// Batch prediction over a dataset for one (RBM, classifier) pair.
pub fn predict_dataset(rbm: &RbmParams, classifier: &ClassifierModel, data: &Dataset) -> Result<Vec<u8>> {
    let features = extract_features_batch(data.images(), rbm)?;
    let scores = classifier.scores(&features)?;
    Ok((0..scores.rows())
        .map(|r| argmax_lowest_index(scores.row(r)))
        .collect())
}

/// Majority vote over one sample's member predictions. Ties break to the
/// lowest class index.
pub fn majority_vote(predictions: &[u8]) -> Result<u8> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput("majority_vote with no predictions".to_string()));
    }
    let max_label = *predictions.iter().max().unwrap() as usize;
    let mut counts = vec![0usize; max_label + 1];
    for &p in predictions {
        counts[p as usize] += 1;
    }
    let mut best = 0usize;
    for (label, &count) in counts.iter().enumerate().skip(1) {
        if count > counts[best] {
            best = label;
        }
    }
    Ok(best as u8)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Original,
    Artificial,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Original => "original",
            ModelKind::Artificial => "artificial",
        }
    }
}

/// Named ensemble compositions. The ratio forms mix `K` originals with
/// artificials: alpha is half and half, beta is a quarter originals to three
/// quarters artificials, gamma is all K originals plus 5K artificials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Composition {
    ROnly,
    SOnly,
    Alpha,
    Beta,
    Gamma,
    Custom,
}

impl Composition {
    pub fn as_str(self) -> &'static str {
        match self {
            Composition::ROnly => "H_R",
            Composition::SOnly => "H_S",
            Composition::Alpha => "H_alpha",
            Composition::Beta => "H_beta",
            Composition::Gamma => "H_gamma",
            Composition::Custom => "custom",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "r_only" | "H_R" => Ok(Composition::ROnly),
            "s_only" | "H_S" => Ok(Composition::SOnly),
            "alpha" | "H_alpha" => Ok(Composition::Alpha),
            "beta" | "H_beta" => Ok(Composition::Beta),
            "gamma" | "H_gamma" => Ok(Composition::Gamma),
            "custom" => Ok(Composition::Custom),
            other => Err(Error::InvalidArgument(format!("unknown composition: {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub members: Vec<(String, ModelKind)>,
    pub composition: Composition,
}

impl EnsembleSpec {
    /// Builds the member list for a named composition out of the available
    /// model identifiers (ordered). K is the number of originals.
    pub fn compose(
        composition: Composition,
        original_ids: &[String],
        artificial_ids: &[String],
    ) -> Result<Self> {
        let k = original_ids.len();
        if k == 0 {
            return Err(Error::EmptyInput("composition needs at least one original".to_string()));
        }
        let (need_orig, need_art) = match composition {
            Composition::ROnly => (k, 0),
            Composition::SOnly => (0, k),
            Composition::Alpha => (k / 2, k / 2),
            Composition::Beta => (k / 4, 3 * k / 4),
            Composition::Gamma => (k, 5 * k),
            Composition::Custom => {
                return Err(Error::InvalidArgument(
                    "custom compositions list members explicitly".to_string(),
                ))
            }
        };
        if need_orig + need_art == 0 {
            return Err(Error::InvalidArgument(format!(
                "composition {} is empty at K={k}",
                composition.as_str()
            )));
        }
        if artificial_ids.len() < need_art {
            return Err(Error::MissingMember(format!(
                "composition {} needs {need_art} artificial models, have {}",
                composition.as_str(),
                artificial_ids.len()
            )));
        }
        let mut members = Vec::with_capacity(need_orig + need_art);
        for id in &original_ids[..need_orig] {
            members.push((id.clone(), ModelKind::Original));
        }
        for id in &artificial_ids[..need_art] {
            members.push((id.clone(), ModelKind::Artificial));
        }
        Ok(EnsembleSpec {
            members,
            composition,
        })
    }
}

/// Loaded models addressable by identifier.
pub type ModelStore = BTreeMap<String, (RbmParams, ClassifierModel)>;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleEvaluation {
    pub composition: Composition,
    pub member_count: usize,
    pub accuracy: f64,
}

/// Evaluates an ensemble: per-sample member predictions, majority vote,
/// accuracy as the fraction of correct votes.
pub fn compose_and_evaluate(
    spec: &EnsembleSpec,
    store: &ModelStore,
    test: &Dataset,
) -> Result<EnsembleEvaluation> {
    if spec.members.is_empty() {
        return Err(Error::EmptyInput("ensemble with no members".to_string()));
    }
    if test.is_empty() {
        return Err(Error::EmptyInput("evaluation on empty test set".to_string()));
    }
    let mut member_predictions = Vec::with_capacity(spec.members.len());
    for (id, _) in &spec.members {
        let (rbm, classifier) = store
            .get(id)
            .ok_or_else(|| Error::MissingMember(id.clone()))?;
        member_predictions.push(predict_dataset(rbm, classifier, test)?);
    }
    let mut correct = 0usize;
    let mut votes = vec![0u8; spec.members.len()];
    for sample in 0..test.len() {
        for (slot, preds) in votes.iter_mut().zip(&member_predictions) {
            *slot = preds[sample];
        }
        if majority_vote(&votes)? == test.label(sample) {
            correct += 1;
        }
    }
    Ok(EnsembleEvaluation {
        composition: spec.composition,
        member_count: spec.members.len(),
        accuracy: correct as f64 / test.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::SplitTag;

    #[test]
    fn majority_vote_reference_cases() {
        assert_eq!(majority_vote(&[1, 1, 2]).unwrap(), 1);
        assert_eq!(majority_vote(&[1, 2]).unwrap(), 1);
        assert_eq!(majority_vote(&[3]).unwrap(), 3);
        assert!(majority_vote(&[]).is_err());
    }

    #[test]
    fn majority_vote_is_permutation_invariant() {
        let mut stream = RandomStream::derive(2, "vote-perm", 0);
        for _ in 0..200 {
            let len = 1 + stream.below(9);
            let mut preds: Vec<u8> = (0..len).map(|_| stream.below(4) as u8).collect();
            let baseline = majority_vote(&preds).unwrap();
            for _ in 0..5 {
                stream.shuffle(&mut preds);
                assert_eq!(majority_vote(&preds).unwrap(), baseline);
            }
        }
    }

    #[test]
    fn odd_binary_vote_equals_median() {
        let mut stream = RandomStream::derive(3, "vote-median", 0);
        for _ in 0..100 {
            let len = 2 * stream.below(5) + 1;
            let preds: Vec<u8> = (0..len).map(|_| stream.below(2) as u8).collect();
            let mut sorted = preds.clone();
            sorted.sort_unstable();
            let median = sorted[sorted.len() / 2];
            assert_eq!(majority_vote(&preds).unwrap(), median);
        }
    }

    fn separable_features(n_per_class: usize) -> (Matrix, Vec<u8>) {
        let rows = 2 * n_per_class;
        let features = Matrix::from_fn(rows, 2, |i, j| {
            let class = i % 2;
            let jitter = ((i * 7 + j * 3) % 10) as f64 * 0.01;
            if class == 0 {
                if j == 0 {
                    0.9 + jitter * 0.1
                } else {
                    0.1 + jitter
                }
            } else if j == 0 {
                0.1 + jitter
            } else {
                0.9 + jitter * 0.1
            }
        });
        let labels = (0..rows).map(|i| (i % 2) as u8).collect();
        (features, labels)
    }

    #[test]
    fn separable_two_class_problem_is_fit_perfectly() {
        let (features, labels) = separable_features(20);
        let cfg = ClassifierConfig {
            eta: 0.5,
            epochs: 200,
            batch_size: 8,
            seed: 1,
        };
        let model = train_classifier(&features, &labels, 2, &cfg).unwrap();
        let scores = model.scores(&features).unwrap();
        let correct = (0..features.rows())
            .filter(|&r| argmax_lowest_index(scores.row(r)) == labels[r])
            .count();
        assert_eq!(correct, features.rows());
    }

    #[test]
    fn constant_features_learn_the_class_prior() {
        // 3:1 class imbalance; constant features leave only the bias to fit.
        let rows = 40;
        let features = Matrix::from_fn(rows, 4, |_, _| 0.5);
        let labels: Vec<u8> = (0..rows).map(|i| if i % 4 == 0 { 1 } else { 0 }).collect();
        let cfg = ClassifierConfig::default();
        let model = train_classifier(&features, &labels, 2, &cfg).unwrap();
        let scores = model.scores(&features).unwrap();
        let predictions: Vec<u8> = (0..rows)
            .map(|r| argmax_lowest_index(scores.row(r)))
            .collect();
        let accuracy =
            predictions.iter().zip(&labels).filter(|(p, l)| p == l).count() as f64 / rows as f64;
        assert!((accuracy - 0.75).abs() < 1e-12, "accuracy {accuracy}");
    }

    #[test]
    fn empty_class_is_rejected() {
        let features = Matrix::from_fn(4, 2, |i, j| (i + j) as f64 * 0.1);
        let labels = vec![0u8, 0, 0, 0];
        assert!(train_classifier(&features, &labels, 2, &ClassifierConfig::default()).is_err());
    }

    #[test]
    fn non_finite_features_are_rejected() {
        let features = Matrix::from_vec(2, 1, vec![0.5, f64::NAN]).unwrap();
        assert!(train_classifier(&features, &[0, 1], 2, &ClassifierConfig::default()).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let (features, labels) = separable_features(10);
        let cfg = ClassifierConfig::default();
        let a = train_classifier(&features, &labels, 2, &cfg).unwrap();
        let b = train_classifier(&features, &labels, 2, &cfg).unwrap();
        assert_eq!(a, b);
    }

    fn toy_test_set(rows: usize, dim: usize) -> Dataset {
        let images = Matrix::from_fn(rows, dim, |i, j| if (i + j) % 2 == 0 { 1.0 } else { 0.0 });
        let labels = (0..rows).map(|i| (i % 3) as u8).collect();
        Dataset::new(images, labels, 10, SplitTag::Test).unwrap()
    }

    fn toy_pair(seed: u64, dim: usize) -> (RbmParams, ClassifierModel) {
        let mut stream = RandomStream::derive(seed, "toy-pair", 0);
        let rbm = RbmParams::init(dim, 4, &mut stream);
        let classifier = ClassifierModel {
            weights: Matrix::from_fn(4, 10, |i, j| ((i * 10 + j) as f64 * 0.37).sin() * 0.5),
            bias: vec![0.0; 10],
        };
        (rbm, classifier)
    }

    #[test]
    fn predict_agrees_with_explicit_score_enumeration() {
        let (rbm, classifier) = toy_pair(5, 6);
        let mut stream = RandomStream::derive(6, "predict-oracle", 0);
        for _ in 0..10 {
            let v: Vec<f64> = (0..6).map(|_| stream.uniform01()).collect();
            let label = predict(&rbm, &classifier, &v).unwrap();
            let features = crate::rbm::extract_features(&v, &rbm).unwrap();
            let mut best_class = 0usize;
            let mut best_score = f64::NEG_INFINITY;
            for c in 0..10 {
                let mut score = classifier.bias[c];
                for (f, w_row) in features.iter().zip(0..features.len()) {
                    score += f * classifier.weights.get(w_row, c);
                }
                if score > best_score {
                    best_score = score;
                    best_class = c;
                }
            }
            assert_eq!(label as usize, best_class);
        }
    }

    #[test]
    fn ensemble_of_identical_members_equals_the_member() {
        let test = toy_test_set(50, 6);
        let (rbm, classifier) = toy_pair(9, 6);
        let single = predict_dataset(&rbm, &classifier, &test).unwrap();

        let mut store = ModelStore::new();
        let ids: Vec<String> = (0..7).map(|i| format!("copy-{i}")).collect();
        for id in &ids {
            store.insert(id.clone(), (rbm.clone(), classifier.clone()));
        }
        let spec = EnsembleSpec {
            members: ids.iter().map(|id| (id.clone(), ModelKind::Original)).collect(),
            composition: Composition::ROnly,
        };
        // identical members vote unanimously, so the ensemble reproduces the
        // member prediction on every sample
        let mut votes = Vec::new();
        for sample in 0..test.len() {
            let member_votes: Vec<u8> = (0..7).map(|_| single[sample]).collect();
            votes.push(majority_vote(&member_votes).unwrap());
        }
        assert_eq!(votes, single);

        let eval = compose_and_evaluate(&spec, &store, &test).unwrap();
        let single_accuracy = single
            .iter()
            .enumerate()
            .filter(|(i, &p)| p == test.label(*i))
            .count() as f64
            / test.len() as f64;
        assert!((eval.accuracy - single_accuracy).abs() < 1e-12);
    }

    #[test]
    fn missing_member_is_an_error() {
        let test = toy_test_set(10, 6);
        let store = ModelStore::new();
        let spec = EnsembleSpec {
            members: vec![("ghost".to_string(), ModelKind::Original)],
            composition: Composition::Custom,
        };
        assert!(matches!(
            compose_and_evaluate(&spec, &store, &test).unwrap_err(),
            Error::MissingMember(_)
        ));
    }

    #[test]
    fn composition_ratios() {
        let originals: Vec<String> = (0..8).map(|i| format!("r{i}")).collect();
        let artificials: Vec<String> = (0..40).map(|i| format!("s{i}")).collect();

        let alpha = EnsembleSpec::compose(Composition::Alpha, &originals, &artificials).unwrap();
        assert_eq!(alpha.members.len(), 8);
        assert_eq!(
            alpha.members.iter().filter(|(_, k)| *k == ModelKind::Original).count(),
            4
        );

        let beta = EnsembleSpec::compose(Composition::Beta, &originals, &artificials).unwrap();
        assert_eq!(
            beta.members.iter().filter(|(_, k)| *k == ModelKind::Original).count(),
            2
        );
        assert_eq!(
            beta.members.iter().filter(|(_, k)| *k == ModelKind::Artificial).count(),
            6
        );

        let gamma = EnsembleSpec::compose(Composition::Gamma, &originals, &artificials).unwrap();
        assert_eq!(gamma.members.len(), 48);

        let too_few = EnsembleSpec::compose(Composition::Gamma, &originals, &artificials[..4]);
        assert!(matches!(too_few.unwrap_err(), Error::MissingMember(_)));
    }
}
