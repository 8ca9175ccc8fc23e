use std::collections::{HashMap, HashSet};

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::text::tokenize;

/// Token index plus document frequencies collected from training questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyDoc", into = "VocabularyDoc")]
pub struct Vocabulary {
    tokens: Vec<String>,
    document_frequency: Vec<usize>,
    document_count: usize,
    min_document_frequency: usize,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyDoc {
    tokens: Vec<String>,
    document_frequency: Vec<usize>,
    document_count: usize,
    min_document_frequency: usize,
}

impl TryFrom<VocabularyDoc> for Vocabulary {
    type Error = String;

    fn try_from(doc: VocabularyDoc) -> Result<Self, Self::Error> {
        if doc.tokens.len() != doc.document_frequency.len() {
            return Err(format!(
                "vocabulary has {} tokens but {} document frequencies",
                doc.tokens.len(),
                doc.document_frequency.len()
            ));
        }
        let mut index = HashMap::with_capacity(doc.tokens.len());
        for (i, (token, &df)) in doc.tokens.iter().zip(&doc.document_frequency).enumerate() {
            if index.insert(token.clone(), i).is_some() {
                return Err(format!("vocabulary token {token:?} appears twice"));
            }
            if df < doc.min_document_frequency || df > doc.document_count {
                return Err(format!("document frequency {df} of {token:?} out of range"));
            }
        }
        Ok(Self {
            tokens: doc.tokens,
            document_frequency: doc.document_frequency,
            document_count: doc.document_count,
            min_document_frequency: doc.min_document_frequency,
            index,
        })
    }
}

impl From<Vocabulary> for VocabularyDoc {
    fn from(v: Vocabulary) -> Self {
        Self {
            tokens: v.tokens,
            document_frequency: v.document_frequency,
            document_count: v.document_count,
            min_document_frequency: v.min_document_frequency,
        }
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn document_frequency(&self, token: &str) -> Option<usize> {
        self.index_of(token).map(|i| self.document_frequency[i])
    }

    pub fn document_count(&self) -> usize {
        self.document_count
    }

    pub fn min_document_frequency(&self) -> usize {
        self.min_document_frequency
    }

    /// Smoothed inverse document frequency, `ln((1 + N) / (1 + df)) + 1`, per token.
    pub fn idf(&self) -> Vec<f64> {
        self.document_frequency
            .iter()
            .map(|&df| smoothed_idf(self.document_count, df))
            .collect()
    }
}

pub fn smoothed_idf(documents: usize, df: usize) -> f64 {
    ((1.0 + documents as f64) / (1.0 + df as f64)).ln() + 1.0
}

/// Builds the vocabulary of `questions`, keeping tokens found in at least
/// `min_document_frequency` of them. Indices follow first occurrence.
pub fn build_vocabulary<S: AsRef<str>>(questions: &[S], min_document_frequency: usize) -> Result<Vocabulary, TrainError> {
    if questions.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let mut order: Vec<String> = Vec::new();
    let mut df: HashMap<String, usize> = HashMap::new();
    for q in questions {
        let mut in_doc = HashSet::new();
        for t in tokenize(q.as_ref()) {
            if !in_doc.insert(t.clone()) {
                continue;
            }
            let count = df.entry(t.clone()).or_insert(0);
            if *count == 0 {
                order.push(t);
            }
            *count += 1;
        }
    }
    order.retain(|t| df[t] >= min_document_frequency);
    if order.is_empty() {
        return Err(TrainError::EmptyVocabulary);
    }
    let document_frequency = order.iter().map(|t| df[t]).collect();
    let index = order.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
    Ok(Vocabulary {
        tokens: order,
        document_frequency,
        document_count: questions.len(),
        min_document_frequency,
        index,
    })
}

/// TF-IDF vector of `tokens`: raw counts times `idf`, L2-normalized when
/// nonzero. Tokens outside the vocabulary are ignored.
pub fn featurize<S: AsRef<str>>(tokens: &[S], vocabulary: &Vocabulary, idf: &[f64]) -> Array1<f64> {
    let mut x: Array1<f64> = Array1::zeros(vocabulary.len());
    for t in tokens {
        if let Some(i) = vocabulary.index_of(t.as_ref()) {
            x[i] += 1.0;
        }
    }
    x.iter_mut().zip(idf).for_each(|(v, w)| *v *= w);
    let norm = x.dot(&x).sqrt();
    if norm > 0.0 {
        x /= norm;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn common_token_survives_threshold() {
        let v = build_vocabulary(&["water cycle", "water vapor", "salt water"], 2).unwrap();
        assert_eq!(v.tokens(), ["water"]);
        assert_eq!(v.document_frequency("water"), Some(3));
        assert_eq!(v.document_count(), 3);
    }

    #[test]
    fn rare_token_excluded() {
        let v = build_vocabulary(&["water cycle", "water vapor"], 2).unwrap();
        assert_eq!(v.index_of("cycle"), None);
    }

    #[test]
    fn first_occurrence_order() {
        let v = build_vocabulary(&["b a", "c a b"], 1).unwrap();
        assert_eq!(v.tokens(), ["b", "a", "c"]);
    }

    #[test]
    fn errors() {
        assert_eq!(build_vocabulary::<&str>(&[], 1).unwrap_err(), TrainError::EmptyTrainingSet);
        assert_eq!(build_vocabulary(&["a", "b"], 2).unwrap_err(), TrainError::EmptyVocabulary);
    }

    #[test]
    fn idf_values() {
        assert_eq!(smoothed_idf(3, 3), 1.0);
        // ln(11/3) + 1
        assert!((smoothed_idf(10, 2) - 2.299_282_984_130_260_7).abs() < 1e-12);
    }

    #[test]
    fn featurize_ignores_oov_and_normalizes() {
        let v = build_vocabulary(&["rain cloud", "rain"], 1).unwrap();
        let idf = v.idf();
        let x = featurize(&["rain", "snow"], &v, &idf);
        assert_eq!(x.to_vec(), vec![1.0, 0.0]);
        assert_eq!(featurize(&["snow"], &v, &idf).sum(), 0.0);
        let y = featurize(&["rain", "cloud", "cloud"], &v, &idf);
        assert!((y.dot(&y) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vocabulary_document_rejects_inconsistency() {
        let v = build_vocabulary(&["a b"], 1).unwrap();
        let mut json = serde_json::to_value(&v).unwrap();
        json["document_frequency"] = serde_json::json!([1]);
        assert!(serde_json::from_value::<Vocabulary>(json).is_err());
        let back: Vocabulary = serde_json::from_value(serde_json::to_value(&v).unwrap()).unwrap();
        assert_eq!(back, v);
    }
}
