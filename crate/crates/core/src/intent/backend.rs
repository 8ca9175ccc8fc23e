use std::collections::BTreeSet;

use ndarray::Array1;

use super::{rank, IntentModel, IntentScore};

/// Anything that ranks intents for a question: the in-process model or an
/// external inference service.
pub trait ClassifierBackend: Send + Sync {
    /// Intent names this backend can return, in its canonical order.
    fn labels(&self) -> Vec<String>;

    /// Intents ranked by descending probability.
    fn classify(&self, question: &str) -> Result<Vec<IntentScore>, BackendError>;
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("classifier request failed: {0}")]
    Transport(String),
    #[error("classifier returned a malformed response: {0}")]
    Malformed(String),
    #[error("classifier probabilities sum to {sum}, not 1")]
    Unnormalized { sum: f64 },
    #[error("classifier labels {got:?} do not match project intents {expected:?}")]
    LabelMismatch { expected: Vec<String>, got: Vec<String> },
}

/// Tolerance for externally produced distributions.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

impl ClassifierBackend for IntentModel {
    fn labels(&self) -> Vec<String> {
        self.label_order.clone()
    }

    fn classify(&self, question: &str) -> Result<Vec<IntentScore>, BackendError> {
        Ok(self.predict(question))
    }
}

/// Validates a label/probability pair from an external source against the
/// expected label set and ranks it.
pub fn check_distribution(expected: &[String], labels: &[String], probabilities: &[f64]) -> Result<Vec<IntentScore>, BackendError> {
    if labels.len() != probabilities.len() {
        return Err(BackendError::Malformed(format!(
            "{} labels but {} probabilities",
            labels.len(),
            probabilities.len()
        )));
    }
    check_label_set(expected, labels)?;
    if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(BackendError::Malformed(format!("probability {p} outside [0, 1]")));
    }
    let sum: f64 = probabilities.iter().sum();
    if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(BackendError::Unnormalized { sum });
    }
    // rank in the caller's label order so ties resolve the same way as the local model
    let ordered: Array1<f64> = expected
        .iter()
        .map(|l| probabilities[labels.iter().position(|x| x == l).expect("checked label set")])
        .collect();
    Ok(rank(expected, ordered.view()))
}

/// Errors unless `got` names exactly the intents in `expected`.
pub fn check_label_set(expected: &[String], got: &[String]) -> Result<(), BackendError> {
    let a: BTreeSet<&str> = expected.iter().map(String::as_str).collect();
    let b: BTreeSet<&str> = got.iter().map(String::as_str).collect();
    if a != b || got.len() != b.len() {
        return Err(BackendError::LabelMismatch {
            expected: expected.to_vec(),
            got: got.to_vec(),
        });
    }
    Ok(())
}

/// Returns the same distribution for every question.
#[derive(Debug, Clone)]
pub struct FixedDistributionBackend {
    labels: Vec<String>,
    probabilities: Vec<f64>,
}

impl FixedDistributionBackend {
    pub fn new(labels: Vec<String>, probabilities: Vec<f64>) -> Self {
        Self { labels, probabilities }
    }

    pub fn uniform(labels: Vec<String>) -> Self {
        let p = 1.0 / labels.len() as f64;
        let probabilities = vec![p; labels.len()];
        Self { labels, probabilities }
    }
}

impl ClassifierBackend for FixedDistributionBackend {
    fn labels(&self) -> Vec<String> {
        self.labels.clone()
    }

    fn classify(&self, _question: &str) -> Result<Vec<IntentScore>, BackendError> {
        check_distribution(&self.labels, &self.labels, &self.probabilities)
    }
}
