//! Intent recognition: TF-IDF features and a multinomial logistic regression
//! trained by minibatch gradient descent for a student-chosen number of epochs.
//!
//! The trained [`IntentModel`] is the reference [`ClassifierBackend`]; an
//! external transformer service can stand in through the same trait.

mod artifact;
mod backend;
mod vocab;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, Dataset, ValidationReport};
use crate::text::tokenize;

pub use artifact::{deserialize_model, serialize_model, ArtifactError, MODEL_FORMAT_VERSION};
pub use backend::{check_distribution, check_label_set, BackendError, ClassifierBackend, FixedDistributionBackend};
pub use vocab::{build_vocabulary, featurize, smoothed_idf, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2_penalty: f64,
    pub seed: u64,
    pub min_document_frequency: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 0.1,
            batch_size: 16,
            l2_penalty: 1e-4,
            seed: 0,
            min_document_frequency: 1,
        }
    }
}

impl TrainingConfig {
    pub fn check(&self) -> Result<(), TrainError> {
        let bad = |what: &str| Err(TrainError::InvalidConfig(what.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return bad("l2_penalty must be non-negative");
        }
        if self.min_document_frequency == 0 {
            return bad("min_document_frequency must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Full training objective after the epoch, including the L2 term.
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("no token reaches the minimum document frequency")]
    EmptyVocabulary,
    #[error("at least 2 intents are required, found {0}")]
    TooFewIntents(usize),
    #[error("intents without questions: {}", .0.join(", "))]
    IntentsWithoutQuestions(Vec<String>),
    #[error("training set is invalid:\n{0}")]
    InvalidDataset(ValidationReport),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentScore {
    pub intent: String,
    pub probability: f64,
}

/// A trained classifier. Immutable; predictions are pure.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentModel {
    pub(crate) vocabulary: Vocabulary,
    pub(crate) idf: Vec<f64>,
    /// `[num_intents × vocabulary]`
    pub(crate) weights: Array2<f64>,
    pub(crate) bias: Array1<f64>,
    pub(crate) label_order: Vec<String>,
    pub(crate) config: TrainingConfig,
    pub(crate) metrics: Vec<EpochMetrics>,
}

impl IntentModel {
    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn label_order(&self) -> &[String] {
        &self.label_order
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn metrics(&self) -> &[EpochMetrics] {
        &self.metrics
    }

    pub fn features(&self, text: &str) -> Array1<f64> {
        featurize(&tokenize(text), &self.vocabulary, &self.idf)
    }

    /// Class probabilities in `label_order`.
    pub fn probabilities(&self, text: &str) -> Array1<f64> {
        let x = self.features(text);
        softmax(self.weights.dot(&x) + &self.bias)
    }

    /// Intents ranked by probability, ties broken by label order.
    pub fn predict(&self, text: &str) -> Vec<IntentScore> {
        rank(&self.label_order, self.probabilities(text).view())
    }
}

pub(crate) fn rank(labels: &[String], probabilities: ArrayView1<f64>) -> Vec<IntentScore> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    // stable sort keeps label order among equal probabilities
    order.sort_by(|&a, &b| probabilities[b].total_cmp(&probabilities[a]));
    order
        .into_iter()
        .map(|i| IntentScore {
            intent: labels[i].clone(),
            probability: probabilities[i],
        })
        .collect()
}

pub(crate) fn softmax(mut logits: Array1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    logits.mapv_inplace(|v| (v - max).exp());
    let total = logits.sum();
    logits /= total;
    logits
}

// ---------------------------------------------------------------------------
// Objective

/// Weights and bias of the linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Parameters {
    pub fn zeros(classes: usize, features: usize) -> Self {
        Self {
            weights: Array2::zeros((classes, features)),
            bias: Array1::zeros(classes),
        }
    }
}

/// Mean softmax cross-entropy plus `(l2 / 2)·‖W‖²` over a featurized training set.
#[derive(Debug, Clone)]
pub struct Objective {
    features: Array2<f64>,
    labels: Vec<usize>,
    classes: usize,
    l2_penalty: f64,
}

impl Objective {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, classes: usize, l2_penalty: f64) -> Self {
        assert_eq!(features.nrows(), labels.len());
        assert!(labels.iter().all(|&y| y < classes));
        Self {
            features,
            labels,
            classes,
            l2_penalty,
        }
    }

    /// Featurizes `dataset` the way [`train`] does.
    pub fn from_dataset(dataset: &Dataset, config: &TrainingConfig) -> Result<(Self, Vocabulary, Vec<f64>), TrainError> {
        let prepared = prepare(dataset, config)?;
        Ok((
            Self::new(prepared.features, prepared.labels, prepared.label_order.len(), config.l2_penalty),
            prepared.vocabulary,
            prepared.idf,
        ))
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dimension(&self) -> usize {
        self.features.ncols()
    }

    pub fn samples(&self) -> usize {
        self.labels.len()
    }

    pub fn loss(&self, params: &Parameters) -> f64 {
        let all: Vec<usize> = (0..self.samples()).collect();
        self.batch_loss(params, &all)
    }

    pub fn gradient(&self, params: &Parameters) -> Parameters {
        let all: Vec<usize> = (0..self.samples()).collect();
        self.batch_gradient(params, &all)
    }

    fn probabilities(&self, params: &Parameters, rows: &[usize]) -> Array2<f64> {
        let x = self.features.select(Axis(0), rows);
        let mut logits = x.dot(&params.weights.t()) + &params.bias;
        for mut row in logits.rows_mut() {
            let p = softmax(row.to_owned());
            row.assign(&p);
        }
        logits
    }

    fn batch_loss(&self, params: &Parameters, rows: &[usize]) -> f64 {
        let x = self.features.select(Axis(0), rows);
        let logits = x.dot(&params.weights.t()) + &params.bias;
        let mut total = 0.0;
        for (row, &i) in logits.rows().into_iter().zip(rows) {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let log_norm = max + row.mapv(|v| (v - max).exp()).sum().ln();
            total += log_norm - row[self.labels[i]];
        }
        let data = total / rows.len() as f64;
        data + 0.5 * self.l2_penalty * params.weights.iter().map(|w| w * w).sum::<f64>()
    }

    fn batch_gradient(&self, params: &Parameters, rows: &[usize]) -> Parameters {
        let mut residual = self.probabilities(params, rows);
        for (r, &i) in rows.iter().enumerate() {
            residual[[r, self.labels[i]]] -= 1.0;
        }
        let n = rows.len() as f64;
        let x = self.features.select(Axis(0), rows);
        let weights = residual.t().dot(&x) / n + &params.weights * self.l2_penalty;
        let bias = residual.sum_axis(Axis(0)) / n;
        Parameters { weights, bias }
    }

    fn accuracy(&self, params: &Parameters) -> f64 {
        let all: Vec<usize> = (0..self.samples()).collect();
        let p = self.probabilities(params, &all);
        let correct = p
            .rows()
            .into_iter()
            .zip(&self.labels)
            .filter(|(row, &y)| argmax(row.view()) == y)
            .count();
        correct as f64 / self.samples() as f64
    }
}

/// Index of the largest value; the earliest index wins ties.
pub(crate) fn argmax(values: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

struct Prepared {
    vocabulary: Vocabulary,
    idf: Vec<f64>,
    features: Array2<f64>,
    labels: Vec<usize>,
    label_order: Vec<String>,
}

fn prepare(dataset: &Dataset, config: &TrainingConfig) -> Result<Prepared, TrainError> {
    config.check()?;
    let report = dataset::validate(dataset);
    if !report.is_empty() {
        return Err(TrainError::InvalidDataset(report));
    }
    let label_order = dataset.intent_names();
    if label_order.len() < 2 {
        return Err(TrainError::TooFewIntents(label_order.len()));
    }
    let empty: Vec<String> = dataset
        .counts_per_intent()
        .into_iter()
        .filter(|(_, n)| *n == 0)
        .map(|(name, _)| name)
        .collect();
    if !empty.is_empty() {
        return Err(TrainError::IntentsWithoutQuestions(empty));
    }
    let texts: Vec<&str> = dataset.questions.iter().map(|q| q.text.as_str()).collect();
    let vocabulary = build_vocabulary(&texts, config.min_document_frequency)?;
    let idf = vocabulary.idf();
    let mut features = Array2::zeros((texts.len(), vocabulary.len()));
    for (mut row, text) in features.rows_mut().into_iter().zip(&texts) {
        row.assign(&featurize(&tokenize(text), &vocabulary, &idf));
    }
    let labels = dataset
        .questions
        .iter()
        .map(|q| label_order.iter().position(|l| *l == q.intent_name).expect("validated label"))
        .collect();
    Ok(Prepared {
        vocabulary,
        idf,
        features,
        labels,
        label_order,
    })
}

// ---------------------------------------------------------------------------
// Training

/// Trains a model on every question in `train_set`.
pub fn train(train_set: &Dataset, config: &TrainingConfig) -> Result<IntentModel, TrainError> {
    train_with_progress(train_set, config, |_| {})
}

/// Like [`train`], calling `on_epoch` after each completed epoch.
///
/// Weights start at zero; every epoch shuffles the samples with an RNG seeded
/// from `config.seed` and takes one descent step per minibatch.
pub fn train_with_progress(
    train_set: &Dataset,
    config: &TrainingConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<IntentModel, TrainError> {
    let prepared = prepare(train_set, config)?;
    let classes = prepared.label_order.len();
    let objective = Objective::new(prepared.features, prepared.labels, classes, config.l2_penalty);
    let mut params = Parameters::zeros(classes, objective.dimension());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..objective.samples()).collect();
    let mut metrics = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let grad = objective.batch_gradient(&params, batch);
            params.weights.scaled_add(-config.learning_rate, &grad.weights);
            params.bias.scaled_add(-config.learning_rate, &grad.bias);
        }
        let m = EpochMetrics {
            epoch,
            loss: objective.loss(&params),
            accuracy: objective.accuracy(&params),
        };
        tracing::debug!(epoch, loss = m.loss, accuracy = m.accuracy, "epoch finished");
        on_epoch(&m);
        metrics.push(m);
    }

    Ok(IntentModel {
        vocabulary: prepared.vocabulary,
        idf: prepared.idf,
        weights: params.weights,
        bias: params.bias,
        label_order: prepared.label_order,
        config: config.clone(),
        metrics,
    })
}

// ---------------------------------------------------------------------------
// Evaluation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub labels: Vec<String>,
    pub accuracy: f64,
    /// `confusion[true][predicted]`, both indexed by `labels`.
    pub confusion: Vec<Vec<usize>>,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("question {id} has label {label:?}, which the model does not know")]
    UnknownLabel { id: String, label: String },
}

/// Top-1 accuracy and confusion matrix of `model` on `dataset`.
pub fn evaluate(model: &IntentModel, dataset: &Dataset) -> Result<Evaluation, EvalError> {
    let labels = model.label_order.clone();
    let k = labels.len();
    let mut confusion = vec![vec![0usize; k]; k];
    let mut correct = 0;
    for q in &dataset.questions {
        let truth = labels
            .iter()
            .position(|l| *l == q.intent_name)
            .ok_or_else(|| EvalError::UnknownLabel {
                id: q.id.to_string(),
                label: q.intent_name.clone(),
            })?;
        let predicted = argmax(model.probabilities(&q.text).view());
        confusion[truth][predicted] += 1;
        if truth == predicted {
            correct += 1;
        }
    }
    let total = dataset.questions.len();
    Ok(Evaluation {
        labels,
        accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        confusion,
        total,
    })
}

// ---------------------------------------------------------------------------
// Gradient check

pub const FINITE_DIFFERENCE_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub coordinates_checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Relative error `|a − b| / max(|a|, |b|)`, or the absolute error when both
/// magnitudes are below 1e-7.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-7 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

/// Compares the analytic gradient of the training objective with central
/// finite differences at a random parameter point drawn from `config.seed`.
///
/// All bias coordinates are checked; weight coordinates are checked
/// exhaustively up to 400 of them and sampled beyond that.
pub fn gradient_check(train_set: &Dataset, config: &TrainingConfig, tolerance: f64) -> Result<GradientCheck, TrainError> {
    let (objective, _, _) = Objective::from_dataset(train_set, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6a09_e667_f3bc_c908);
    let (k, v) = (objective.classes(), objective.dimension());
    let mut params = Parameters::zeros(k, v);
    params.weights.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    params.bias.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    Ok(check_at(&objective, &params, tolerance, &mut rng))
}

fn check_at(objective: &Objective, params: &Parameters, tolerance: f64, rng: &mut ChaCha8Rng) -> GradientCheck {
    let analytic = objective.gradient(params);
    let (k, v) = (objective.classes(), objective.dimension());
    let mut coords: Vec<(usize, usize)> = (0..k).flat_map(|c| (0..v).map(move |j| (c, j))).collect();
    if coords.len() > 400 {
        coords.shuffle(rng);
        coords.truncate(400);
    }

    let h = FINITE_DIFFERENCE_STEP;
    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    for &(c, j) in &coords {
        let original = probe.weights[[c, j]];
        probe.weights[[c, j]] = original + h;
        let up = objective.loss(&probe);
        probe.weights[[c, j]] = original - h;
        let down = objective.loss(&probe);
        probe.weights[[c, j]] = original;
        worst = worst.max(relative_error(analytic.weights[[c, j]], (up - down) / (2.0 * h)));
    }
    for c in 0..k {
        let original = probe.bias[c];
        probe.bias[c] = original + h;
        let up = objective.loss(&probe);
        probe.bias[c] = original - h;
        let down = objective.loss(&probe);
        probe.bias[c] = original;
        worst = worst.max(relative_error(analytic.bias[c], (up - down) / (2.0 * h)));
    }
    GradientCheck {
        max_relative_error: worst,
        coordinates_checked: coords.len() + k,
        tolerance,
        passed: worst < tolerance,
    }
}
