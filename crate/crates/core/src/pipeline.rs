//! One chat turn: policy filter, intent recognition, context lookup and
//! question answering, with a per-stage trace.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::intent::{check_label_set, BackendError, ClassifierBackend};
use crate::policy::RuleSet;
use crate::qa::{self, Answer, AnswerMode, ExtractiveConfig, GenerativeClient, QaError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QaMode {
    #[default]
    Extractive,
    Generative,
}

impl std::str::FromStr for QaMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "extractive" => Ok(QaMode::Extractive),
            "generative" => Ok(QaMode::Generative),
            other => Err(format!("unknown QA mode {other:?}, expected extractive or generative")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub qa_mode: QaMode,
    /// Top intent probability below which the fallback response is used. 0 disables.
    pub confidence_threshold: f64,
    pub fallback_response: String,
    pub extractive_config: ExtractiveConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            qa_mode: QaMode::Extractive,
            confidence_threshold: 0.0,
            fallback_response: "Sorry, I'm not sure what that question is about. Could you ask it another way?".into(),
            extractive_config: ExtractiveConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn check(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(format!("confidence_threshold {} is outside [0, 1]", self.confidence_threshold));
        }
        if self.confidence_threshold > 0.0 && self.fallback_response.trim().is_empty() {
            return Err("fallback_response is required when confidence_threshold is set".into());
        }
        self.extractive_config.check().map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseSource {
    Policy,
    Model,
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Filter,
    Intent,
    Qa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub input: String,
    pub output: String,
    #[serde(with = "micros")]
    pub elapsed: Duration,
}

mod micros {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_micros() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_micros)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentPrediction {
    pub name: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub answer: Answer,
    pub source: ResponseSource,
    pub intent: Option<IntentPrediction>,
    pub trace: Vec<StageRecord>,
    /// The model predates the current dataset.
    #[serde(default)]
    pub stale: bool,
}

impl ChatResponse {
    pub fn stages(&self) -> Vec<Stage> {
        self.trace.iter().map(|r| r.stage).collect()
    }

    /// Copy with every elapsed time zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        let mut copy = self.clone();
        copy.trace.iter_mut().for_each(|r| r.elapsed = Duration::ZERO);
        copy
    }
}

/// QA engines beyond the built-in extractive scorer.
#[derive(Clone, Copy)]
pub struct QaEngines<'a> {
    pub generative: &'a dyn GenerativeClient,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("empty question")]
    EmptyQuestion,
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Labels(BackendError),
    #[error("intent recognition failed: {error}")]
    Classifier { error: BackendError, trace: Vec<StageRecord> },
    #[error("question answering failed: {error}")]
    Qa { error: QaError, trace: Vec<StageRecord> },
}

impl PipelineError {
    /// Stages completed before the failure.
    pub fn trace(&self) -> &[StageRecord] {
        match self {
            PipelineError::Classifier { trace, .. } | PipelineError::Qa { trace, .. } => trace,
            _ => &[],
        }
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

/// Runs one question through the pipeline.
///
/// The classifier's labels must be exactly the dataset's intent names. The
/// context is read from `dataset` at call time, so context edits apply
/// without retraining. The returned `stale` flag is always false; callers
/// that track staleness set it.
pub fn answer_question(
    question: &str,
    rules: &RuleSet,
    classifier: &dyn ClassifierBackend,
    dataset: &Dataset,
    config: &PipelineConfig,
    engines: QaEngines<'_>,
) -> Result<ChatResponse, PipelineError> {
    if question.trim().is_empty() {
        return Err(PipelineError::EmptyQuestion);
    }
    config.check().map_err(PipelineError::InvalidConfig)?;
    check_label_set(&dataset.intent_names(), &classifier.labels()).map_err(PipelineError::Labels)?;

    let mut trace = Vec::with_capacity(3);
    let (hit, elapsed) = timed(|| rules.apply(question));
    trace.push(StageRecord {
        stage: Stage::Filter,
        input: question.to_string(),
        output: match &hit {
            Some(h) => format!("matched rule {:?}", h.rule_id),
            None => "no rule matched".into(),
        },
        elapsed,
    });
    if let Some(hit) = hit {
        return Ok(ChatResponse {
            answer: Answer {
                text: hit.response,
                mode: AnswerMode::Policy,
                span: None,
                score: 0.0,
                intent_name: None,
            },
            source: ResponseSource::Policy,
            intent: None,
            trace,
            stale: false,
        });
    }

    let (ranked, elapsed) = timed(|| classifier.classify(question));
    let ranked = match ranked {
        Ok(r) if !r.is_empty() => r,
        Ok(_) => {
            let error = BackendError::Malformed("empty ranking".into());
            return Err(PipelineError::Classifier { error, trace });
        }
        Err(error) => return Err(PipelineError::Classifier { error, trace }),
    };
    let top = &ranked[0];
    let intent = IntentPrediction {
        name: top.intent.clone(),
        probability: top.probability,
    };
    trace.push(StageRecord {
        stage: Stage::Intent,
        input: question.to_string(),
        output: ranked
            .iter()
            .take(3)
            .map(|s| format!("{} {:.3}", s.intent, s.probability))
            .collect::<Vec<_>>()
            .join(", "),
        elapsed,
    });
    if top.probability < config.confidence_threshold {
        return Ok(ChatResponse {
            answer: Answer {
                text: config.fallback_response.clone(),
                mode: AnswerMode::Policy,
                span: None,
                score: 0.0,
                intent_name: None,
            },
            source: ResponseSource::Fallback,
            intent: Some(intent),
            trace,
            stale: false,
        });
    }

    let context = dataset.context_of(&intent.name).expect("labels checked against dataset");
    let (answer, elapsed) = timed(|| match config.qa_mode {
        QaMode::Extractive => qa::extract_answer(question, context, &config.extractive_config),
        QaMode::Generative => qa::generate_answer(question, context, engines.generative),
    });
    let mut answer = match answer {
        Ok(a) => a,
        Err(error) => return Err(PipelineError::Qa { error, trace }),
    };
    answer.intent_name = Some(intent.name.clone());
    trace.push(StageRecord {
        stage: Stage::Qa,
        input: format!("{:?} context of {:?}", config.qa_mode, intent.name).to_lowercase(),
        output: answer.text.clone(),
        elapsed,
    });
    Ok(ChatResponse {
        answer,
        source: ResponseSource::Model,
        intent: Some(intent),
        trace,
        stale: false,
    })
}
