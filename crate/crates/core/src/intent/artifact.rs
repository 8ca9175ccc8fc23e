//! Versioned JSON document holding a trained [`IntentModel`].

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{EpochMetrics, IntentModel, TrainingConfig, Vocabulary};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("model artifact has format version {found}, this build reads version {expected}")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("model artifact is inconsistent: {0}")]
    Dimension(String),
    #[error("model artifact is malformed: {0}")]
    Malformed(#[from] serde_json::Error),
}

#[derive(Serialize)]
struct DocumentRef<'a> {
    format_version: u32,
    label_order: &'a [String],
    vocabulary: &'a Vocabulary,
    idf: &'a [f64],
    weights: &'a Array2<f64>,
    bias: &'a Array1<f64>,
    config: &'a TrainingConfig,
    metrics: &'a [EpochMetrics],
}

#[derive(Deserialize)]
struct Document {
    label_order: Vec<String>,
    vocabulary: Vocabulary,
    idf: Vec<f64>,
    weights: Array2<f64>,
    bias: Array1<f64>,
    config: TrainingConfig,
    metrics: Vec<EpochMetrics>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

pub fn serialize_model(model: &IntentModel) -> Vec<u8> {
    let doc = DocumentRef {
        format_version: MODEL_FORMAT_VERSION,
        label_order: &model.label_order,
        vocabulary: &model.vocabulary,
        idf: &model.idf,
        weights: &model.weights,
        bias: &model.bias,
        config: &model.config,
        metrics: &model.metrics,
    };
    let mut bytes = serde_json::to_vec(&doc).expect("model serializes");
    bytes.push(b'\n');
    bytes
}

pub fn deserialize_model(bytes: &[u8]) -> Result<IntentModel, ArtifactError> {
    let probe: VersionProbe = serde_json::from_slice(bytes)?;
    if probe.format_version != MODEL_FORMAT_VERSION {
        return Err(ArtifactError::UnsupportedVersion {
            found: probe.format_version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let doc: Document = serde_json::from_slice(bytes)?;
    let k = doc.label_order.len();
    let v = doc.vocabulary.len();
    let dim = |msg: String| Err(ArtifactError::Dimension(msg));
    if k < 2 {
        return dim(format!("{k} labels"));
    }
    if doc.weights.dim() != (k, v) {
        return dim(format!("weights are {:?}, expected ({k}, {v})", doc.weights.dim()));
    }
    if doc.bias.len() != k {
        return dim(format!("bias has {} entries, expected {k}", doc.bias.len()));
    }
    if doc.idf.len() != v {
        return dim(format!("idf has {} entries, expected {v}", doc.idf.len()));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = doc.label_order.iter().find(|l| !seen.insert(l.as_str())) {
        return dim(format!("label {dup:?} repeated"));
    }
    if !doc.weights.iter().chain(&doc.bias).chain(&doc.idf).all(|x| x.is_finite()) {
        return dim("non-finite parameter".to_string());
    }
    Ok(IntentModel {
        vocabulary: doc.vocabulary,
        idf: doc.idf,
        weights: doc.weights,
        bias: doc.bias,
        label_order: doc.label_order,
        config: doc.config,
        metrics: doc.metrics,
    })
}
