//! Projects on disk and the seven-step workflow.
//!
//! A project directory holds the dataset in its three classroom files, a
//! `manifest.json` with rules, configs and workflow state, and `model.bin`
//! once a model has been trained:
//!
//! ```text
//! my-bot/
//!   manifest.json
//!   intents.txt
//!   contexts.txt
//!   questions.csv
//!   model.bin
//! ```
//!
//! Saving writes a complete copy next to the directory and swaps it in with
//! renames, so an interrupted save leaves either the old or the new project.
//! Writers serialize on a sibling `.<name>.lock` file.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augmentation::AugmentationConfig;
use crate::dataset::{self, Dataset, DatasetFile, LabeledQuestion, ParseError, QuestionId, ValidationReport};
use crate::intent::{self, deserialize_model, serialize_model, ArtifactError, IntentModel, TrainError, TrainingConfig};
use crate::pipeline::{self, ChatResponse, IntentPrediction, PipelineConfig, PipelineError, QaEngines, QaMode};
use crate::qa;
use crate::policy::{compile_rules, PolicyRule, RuleError, RuleSet};

pub const PROJECT_FORMAT_VERSION: u32 = 1;
pub const STEP_COUNT: u8 = 7;

const MANIFEST: &str = "manifest.json";
const INTENTS: &str = "intents.txt";
const CONTEXTS: &str = "contexts.txt";
const QUESTIONS: &str = "questions.csv";
const MODEL: &str = "model.bin";

pub fn step_name(step: u8) -> &'static str {
    match step {
        1 => "Data collection",
        2 => "Data augmentation",
        3 => "Policy filtering",
        4 => "Intent recognition",
        5 => "Extractive question answering",
        6 => "Generative question answering",
        7 => "Final deployment",
        _ => "Unknown step",
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProjectError {
    #[error("dataset cannot be stored in the project files:\n{}", join_parse_errors(.0))]
    Unrepresentable(Vec<ParseError>),
    #[error("intent names {got:?} differ from the project intents {expected:?}")]
    IntentMismatch { expected: Vec<String>, got: Vec<String> },
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("no model has been trained yet")]
    NoModel,
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Split(#[from] dataset::SplitError),
    #[error(transparent)]
    Eval(#[from] intent::EvalError),
}

fn join_parse_errors(errors: &[ParseError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StepError {
    #[error("there is no step {0}; steps are numbered 1 to 7")]
    OutOfRange(u8),
    #[error("step {step} needs step {missing} to be completed first")]
    PreviousIncomplete { step: u8, missing: u8 },
    #[error("step {step} cannot be completed yet: {}", .unmet.join("; "))]
    Gate { step: u8, unmet: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepStatus {
    pub step: u8,
    pub name: String,
    pub completed: bool,
    /// Every earlier step is completed.
    pub available: bool,
    /// Gate conditions not met right now; empty when the step can be completed.
    pub unmet: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEvaluation {
    pub train_fraction: f64,
    pub seed: u64,
    pub train_size: usize,
    pub validation_size: usize,
    pub final_loss: Option<f64>,
    pub evaluation: intent::Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Answer(qa::Answer),
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectComparison {
    pub intent: IntentPrediction,
    pub extractive: Outcome,
    pub generative: Outcome,
    pub stale: bool,
}

/// In-memory project. The dataset is kept in the canonical form the project
/// files produce when read back, so saving and loading is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct Project {
    pub name: String,
    dataset: Dataset,
    rules: Vec<PolicyRule>,
    pub pipeline_config: PipelineConfig,
    pub augmentation_config: AugmentationConfig,
    pub training_config: TrainingConfig,
    model: Option<IntentModel>,
    steps: BTreeSet<u8>,
    model_stale: bool,
    chat_turns: u64,
}

/// Rewrites `dataset` the way the project files would store and read it.
pub fn canonicalize(dataset: &Dataset) -> Result<Dataset, ProjectError> {
    let ids: std::collections::HashSet<&QuestionId> = dataset.questions.iter().map(|q| &q.id).collect();
    if ids.len() != dataset.questions.len() {
        return Err(ProjectError::Unrepresentable(vec![]));
    }
    parse_project_dataset(
        &dataset::serialize_intents(dataset),
        &dataset::serialize_contexts(dataset),
        &dataset::serialize_questions(dataset),
    )
    .map_err(ProjectError::Unrepresentable)
    .and_then(|parsed| {
        // a parent that is not in the dataset has no row to point at
        let dangling = dataset
            .questions
            .iter()
            .zip(&parsed.questions)
            .any(|(a, b)| a.parent_id.is_some() != b.parent_id.is_some());
        if dangling {
            Err(ProjectError::Unrepresentable(vec![]))
        } else {
            Ok(parsed)
        }
    })
}

/// Like [`dataset::parse_dataset`], but a project that has no intents and no
/// questions yet is allowed.
fn parse_project_dataset(intents: &str, contexts: &str, questions: &str) -> Result<Dataset, Vec<ParseError>> {
    let blank = |s: &str| s.trim().is_empty();
    let header_only = questions.lines().filter(|l| !blank(l)).count() <= 1;
    if blank(intents) && blank(contexts) && header_only {
        dataset::parse_questions_csv(questions, &[]).map_err(|e| vec![e])?;
        return Ok(Dataset::default());
    }
    dataset::parse_dataset(intents, contexts, questions)
}

impl Project {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            dataset: Dataset::default(),
            rules: Vec::new(),
            pipeline_config: PipelineConfig::default(),
            augmentation_config: AugmentationConfig::default(),
            training_config: TrainingConfig::default(),
            model: None,
            steps: BTreeSet::new(),
            model_stale: false,
            chat_turns: 0,
        }
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn rules(&self) -> &[PolicyRule] {
        &self.rules
    }

    pub fn ruleset(&self) -> RuleSet {
        compile_rules(&self.rules).expect("rules are checked when set")
    }

    pub fn model(&self) -> Option<&IntentModel> {
        self.model.as_ref()
    }

    pub fn steps(&self) -> &BTreeSet<u8> {
        &self.steps
    }

    /// The model was trained on a different dataset than the current one.
    pub fn is_stale(&self) -> bool {
        self.model_stale
    }

    pub fn chat_turns(&self) -> u64 {
        self.chat_turns
    }

    pub fn validate(&self) -> ValidationReport {
        dataset::validate(&self.dataset)
    }

    /// Replaces the dataset. Marks the model stale when anything but
    /// contexts changed.
    pub fn set_dataset(&mut self, dataset: &Dataset) -> Result<ValidationReport, ProjectError> {
        let canonical = canonicalize(dataset)?;
        let training_view = |d: &Dataset| (d.intent_names(), d.questions.clone());
        if training_view(&canonical) != training_view(&self.dataset) {
            self.model_stale = self.model.is_some();
        }
        self.dataset = canonical;
        Ok(self.validate())
    }

    pub fn set_questions(&mut self, questions: Vec<LabeledQuestion>) -> Result<ValidationReport, ProjectError> {
        let mut ds = self.dataset.clone();
        ds.questions = questions;
        self.set_dataset(&ds)
    }

    /// Replaces the context passages; the set of intent names must not change.
    pub fn set_contexts(&mut self, contexts: Vec<(String, String)>) -> Result<ValidationReport, ProjectError> {
        let mut got: Vec<String> = contexts.iter().map(|(n, _)| n.clone()).collect();
        let mut expected = self.dataset.intent_names();
        got.sort();
        expected.sort();
        if got != expected {
            return Err(ProjectError::IntentMismatch { expected, got });
        }
        let mut ds = self.dataset.clone();
        for intent in &mut ds.intents {
            intent.context = contexts.iter().find(|(n, _)| *n == intent.name).expect("names checked").1.clone();
        }
        self.set_dataset(&ds)
    }

    /// Replaces one of the three dataset files with `content`.
    ///
    /// Intents keep their context and questions when renamed lists still
    /// contain them; an intent without a context, or questions left pointing
    /// at a removed intent, make the dataset unrepresentable.
    pub fn replace_file(&mut self, file: DatasetFile, content: &str) -> Result<ValidationReport, ProjectError> {
        let names = self.dataset.intent_names();
        let bad = |e: ParseError| ProjectError::Unrepresentable(vec![e]);
        match file {
            DatasetFile::Intents => {
                let new_names = dataset::parse_intents_file(content).map_err(bad)?;
                let mut ds = self.dataset.clone();
                ds.intents = new_names
                    .into_iter()
                    .map(|name| {
                        let context = self.dataset.context_of(&name).unwrap_or_default().to_string();
                        dataset::Intent { name, context }
                    })
                    .collect();
                self.set_dataset(&ds)
            }
            DatasetFile::Contexts => self.set_contexts(dataset::parse_contexts_file(content, &names).map_err(bad)?),
            DatasetFile::Questions => self.set_questions(dataset::parse_questions_csv(content, &names).map_err(bad)?),
        }
    }

    pub fn add_question(&mut self, text: &str, intent: &str) -> Result<ValidationReport, ProjectError> {
        let mut ds = self.dataset.clone();
        ds.push_human(text, intent);
        self.set_dataset(&ds)
    }

    pub fn set_rules(&mut self, rules: Vec<PolicyRule>) -> Result<(), ProjectError> {
        compile_rules(&rules)?;
        self.rules = rules;
        Ok(())
    }

    pub fn add_rule(&mut self, rule: PolicyRule) -> Result<(), ProjectError> {
        let mut rules = self.rules.clone();
        rules.push(rule);
        self.set_rules(rules)
    }

    pub fn set_pipeline_config(&mut self, config: PipelineConfig) -> Result<(), ProjectError> {
        config.check().map_err(ProjectError::Config)?;
        self.pipeline_config = config;
        Ok(())
    }

    pub fn set_training_config(&mut self, config: TrainingConfig) -> Result<(), ProjectError> {
        config.check().map_err(|e| ProjectError::Config(e.to_string()))?;
        self.training_config = config;
        Ok(())
    }

    pub fn set_augmentation_config(&mut self, config: AugmentationConfig) -> Result<(), ProjectError> {
        config.check().map_err(|e| ProjectError::Config(e.to_string()))?;
        self.augmentation_config = config;
        Ok(())
    }

    /// Stores a model trained on `trained_on`. It is stale unless that is
    /// still the project's dataset.
    pub fn install_model(&mut self, model: IntentModel, trained_on: &Dataset) {
        let same = trained_on.intent_names() == self.dataset.intent_names() && trained_on.questions == self.dataset.questions;
        self.model_stale = !(same && labels_match(&model, &self.dataset));
        self.model = Some(model);
    }

    /// Trains on the whole dataset with the project's training config.
    pub fn train(&mut self) -> Result<&IntentModel, ProjectError> {
        let model = intent::train(&self.dataset, &self.training_config)?;
        let trained_on = self.dataset.clone();
        self.install_model(model, &trained_on);
        Ok(self.model.as_ref().expect("just installed"))
    }

    /// Trains a fresh model on a stratified split of the dataset and scores it
    /// on the held-out part. The project's own model is untouched.
    pub fn evaluate_split(&self, train_fraction: f64, seed: u64) -> Result<SplitEvaluation, ProjectError> {
        let (train_set, validation) = dataset::stratified_split(&self.dataset, train_fraction, seed)?;
        let model = intent::train(&train_set, &self.training_config)?;
        let evaluation = intent::evaluate(&model, &validation)?;
        Ok(SplitEvaluation {
            train_fraction,
            seed,
            train_size: train_set.questions.len(),
            validation_size: validation.questions.len(),
            final_loss: model.metrics().last().map(|m| m.loss),
            evaluation,
        })
    }

    /// Answers one question with the current model. Does not count as a chat turn.
    pub fn answer(&self, question: &str, mode: Option<QaMode>, engines: QaEngines<'_>) -> Result<ChatResponse, ProjectError> {
        let model = self.model.as_ref().ok_or(ProjectError::NoModel)?;
        let mut config = self.pipeline_config.clone();
        if let Some(mode) = mode {
            config.qa_mode = mode;
        }
        let mut response = pipeline::answer_question(question, &self.ruleset(), model, &self.dataset, &config, engines)?;
        response.stale = self.model_stale;
        Ok(response)
    }

    /// Runs both QA modes against the context of the predicted intent.
    /// Policy rules and the confidence threshold do not apply here.
    pub fn compare(&self, question: &str, engines: QaEngines<'_>) -> Result<ProjectComparison, ProjectError> {
        let model = self.model.as_ref().ok_or(ProjectError::NoModel)?;
        if question.trim().is_empty() {
            return Err(PipelineError::EmptyQuestion.into());
        }
        let top = model.predict(question).into_iter().next().ok_or(ProjectError::NoModel)?;
        let context = self.dataset.context_of(&top.intent).ok_or(ProjectError::NoModel)?;
        let both = qa::compare(question, context, &self.pipeline_config.extractive_config, engines.generative);
        let side = |r: Result<qa::Answer, qa::QaError>| match r {
            Ok(mut a) => {
                a.intent_name = Some(top.intent.clone());
                Outcome::Answer(a)
            }
            Err(e) => Outcome::Error(e.to_string()),
        };
        Ok(ProjectComparison {
            intent: IntentPrediction {
                name: top.intent.clone(),
                probability: top.probability,
            },
            extractive: side(both.extractive),
            generative: side(both.generative),
            stale: self.model_stale,
        })
    }

    pub fn record_chat_turn(&mut self) {
        self.chat_turns += 1;
    }

    /// Unmet conditions for completing `step`, ignoring earlier steps.
    pub fn gate(&self, step: u8) -> Vec<String> {
        let mut unmet = Vec::new();
        match step {
            1 => {
                let report = self.validate();
                if !report.is_empty() {
                    unmet.push(format!("the dataset has {} validation problem(s)", report.len()));
                }
                if self.dataset.intents.len() < 2 {
                    unmet.push("at least 2 intents are required".into());
                }
            }
            4 => match &self.model {
                None => unmet.push("train a model first".into()),
                Some(m) if self.model_stale || !labels_match(m, &self.dataset) => {
                    unmet.push("retrain required: the dataset changed since the model was trained".into())
                }
                Some(_) => {}
            },
            7 => {
                if self.chat_turns == 0 {
                    unmet.push("ask the chatbot at least one question".into());
                }
            }
            _ => {}
        }
        unmet
    }

    pub fn step_status(&self) -> Vec<StepStatus> {
        (1..=STEP_COUNT)
            .map(|step| StepStatus {
                step,
                name: step_name(step).into(),
                completed: self.steps.contains(&step),
                available: (1..step).all(|s| self.steps.contains(&s)),
                unmet: self.gate(step),
            })
            .collect()
    }

    /// Marks `step` completed. Completing an already completed step is a no-op.
    pub fn complete_step(&mut self, step: u8) -> Result<(), StepError> {
        if !(1..=STEP_COUNT).contains(&step) {
            return Err(StepError::OutOfRange(step));
        }
        if self.steps.contains(&step) {
            return Ok(());
        }
        if let Some(missing) = (1..step).find(|s| !self.steps.contains(s)) {
            return Err(StepError::PreviousIncomplete { step, missing });
        }
        let unmet = self.gate(step);
        if !unmet.is_empty() {
            return Err(StepError::Gate { step, unmet });
        }
        self.steps.insert(step);
        Ok(())
    }

    /// Problems with the workflow state that no sequence of operations can produce.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for &s in &self.steps {
            if !(1..=STEP_COUNT).contains(&s) {
                out.push(format!("step {s} does not exist"));
            } else if let Some(missing) = (1..s).find(|m| !self.steps.contains(m)) {
                out.push(format!("step {s} is completed but step {missing} is not"));
            }
        }
        if self.steps.contains(&4) && self.model.is_none() {
            out.push("step 4 is completed but there is no model".into());
        }
        out
    }
}

fn labels_match(model: &IntentModel, dataset: &Dataset) -> bool {
    let mut a = model.label_order().to_vec();
    let mut b = dataset.intent_names();
    a.sort();
    b.sort();
    a == b
}

// ---------------------------------------------------------------------------
// Persistence

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0} is not a project directory (no manifest.json)")]
    NotAProject(PathBuf),
    #[error("project format version {found} is not supported (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("manifest.json is malformed: {0}")]
    Manifest(serde_json::Error),
    #[error("project dataset files are invalid:\n{}", join_parse_errors(.0))]
    Dataset(Vec<ParseError>),
    #[error("model.bin: {0}")]
    Model(#[from] ArtifactError),
    #[error("project rules are invalid: {0}")]
    Rules(RuleError),
    #[error("project state is inconsistent: {}", .0.join("; "))]
    Invariant(Vec<String>),
    #[error("{0} is locked by another writer")]
    Locked(PathBuf),
    #[error(transparent)]
    Project(#[from] ProjectError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    name: String,
    rules: Vec<PolicyRule>,
    pipeline_config: PipelineConfig,
    augmentation_config: AugmentationConfig,
    training_config: TrainingConfig,
    steps: BTreeSet<u8>,
    model_stale: bool,
    chat_turns: u64,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

/// A loaded project plus any workflow inconsistencies found on disk. A
/// project with issues is opened read-only.
#[derive(Debug)]
pub struct LoadedProject {
    pub project: Project,
    pub issues: Vec<String>,
}

impl LoadedProject {
    pub fn read_only(&self) -> bool {
        !self.issues.is_empty()
    }
}

fn sibling(dir: &Path, suffix: &str) -> PathBuf {
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "project".into());
    dir.with_file_name(format!(".{name}.{suffix}"))
}

/// Advisory single-writer lock for a project directory, released on drop.
#[derive(Debug)]
pub struct ProjectLock {
    _file: File,
    dir: PathBuf,
}

impl ProjectLock {
    pub fn acquire(dir: &Path) -> Result<Self, StoreError> {
        let dir = absolute(dir)?;
        if let Some(parent) = dir.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let path = sibling(&dir, "lock");
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(io_err(&path))?;
        match file.try_lock() {
            Ok(()) => Ok(Self { _file: file, dir }),
            Err(fs::TryLockError::WouldBlock) => Err(StoreError::Locked(dir)),
            Err(fs::TryLockError::Error(e)) => Err(io_err(&path)(e)),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

fn absolute(dir: &Path) -> Result<PathBuf, StoreError> {
    std::path::absolute(dir).map_err(io_err(dir))
}

/// Where [`save_project_with_fault`] stops, to simulate a crash.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaveFault {
    None,
    /// The new copy is fully written but nothing was renamed.
    AfterStaging,
    /// The old directory was moved aside; the new copy is not in place.
    AfterRetire,
    /// The new copy is in place; the old one was not removed.
    AfterSwap,
}

pub fn save_project(project: &Project, dir: &Path) -> Result<(), StoreError> {
    let lock = ProjectLock::acquire(dir)?;
    save_project_locked(project, &lock)
}

/// Saves while already holding the directory's lock.
pub fn save_project_locked(project: &Project, lock: &ProjectLock) -> Result<(), StoreError> {
    write_swap(project, lock.dir(), SaveFault::None)
}

#[doc(hidden)]
pub fn save_project_with_fault(project: &Project, dir: &Path, fault: SaveFault) -> Result<(), StoreError> {
    let lock = ProjectLock::acquire(dir)?;
    write_swap(project, lock.dir(), fault)
}

fn write_swap(project: &Project, dir: &Path, fault: SaveFault) -> Result<(), StoreError> {
    let staging = sibling(dir, "saving");
    let retired = sibling(dir, "old");
    recover(dir)?;
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
    }
    fs::create_dir_all(&staging).map_err(io_err(&staging))?;
    write_files(project, &staging)?;
    if fault == SaveFault::AfterStaging {
        return Ok(());
    }
    if dir.exists() {
        fs::rename(dir, &retired).map_err(io_err(dir))?;
    }
    if fault == SaveFault::AfterRetire {
        return Ok(());
    }
    fs::rename(&staging, dir).map_err(io_err(&staging))?;
    if fault == SaveFault::AfterSwap {
        return Ok(());
    }
    if retired.exists() {
        fs::remove_dir_all(&retired).map_err(io_err(&retired))?;
    }
    sync_dir(dir.parent());
    Ok(())
}

fn write_files(project: &Project, dir: &Path) -> Result<(), StoreError> {
    let manifest = Manifest {
        format_version: PROJECT_FORMAT_VERSION,
        name: project.name.clone(),
        rules: project.rules.clone(),
        pipeline_config: project.pipeline_config.clone(),
        augmentation_config: project.augmentation_config.clone(),
        training_config: project.training_config.clone(),
        steps: project.steps.clone(),
        model_stale: project.model_stale,
        chat_turns: project.chat_turns,
    };
    let mut manifest_json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    manifest_json.push(b'\n');
    let ds = &project.dataset;
    let mut files: Vec<(&str, Vec<u8>)> = vec![
        (INTENTS, dataset::serialize_intents(ds).into_bytes()),
        (CONTEXTS, dataset::serialize_contexts(ds).into_bytes()),
        (QUESTIONS, dataset::serialize_questions(ds).into_bytes()),
    ];
    if let Some(model) = &project.model {
        files.push((MODEL, serialize_model(model)));
    }
    // manifest last: a directory with a manifest has all its files
    files.push((MANIFEST, manifest_json));
    for (name, bytes) in files {
        let path = dir.join(name);
        let mut f = File::create(&path).map_err(io_err(&path))?;
        f.write_all(&bytes).map_err(io_err(&path))?;
        f.sync_all().map_err(io_err(&path))?;
    }
    sync_dir(Some(dir));
    Ok(())
}

fn sync_dir(dir: Option<&Path>) {
    // best effort; not every platform can open directories
    if let Some(d) = dir.and_then(|d| File::open(d).ok()) {
        let _ = d.sync_all();
    }
}

/// Finishes or rolls back a save that was interrupted.
fn recover(dir: &Path) -> Result<(), StoreError> {
    let staging = sibling(dir, "saving");
    let retired = sibling(dir, "old");
    if !dir.exists() {
        if staging.join(MANIFEST).exists() {
            fs::rename(&staging, dir).map_err(io_err(&staging))?;
        } else if retired.exists() {
            fs::rename(&retired, dir).map_err(io_err(&retired))?;
        }
    }
    if dir.exists() {
        for leftover in [staging, retired] {
            if leftover.exists() {
                fs::remove_dir_all(&leftover).map_err(io_err(&leftover))?;
            }
        }
    }
    Ok(())
}

fn read(path: &Path) -> Result<String, StoreError> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Loads a project, repairing an interrupted save first if no writer holds
/// the lock.
pub fn load_project(dir: &Path) -> Result<LoadedProject, StoreError> {
    let needs_recovery = !dir.join(MANIFEST).exists() || sibling(dir, "saving").exists() || sibling(dir, "old").exists();
    if needs_recovery {
        match ProjectLock::acquire(dir) {
            Ok(lock) => recover(lock.dir())?,
            Err(StoreError::Locked(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let manifest_path = dir.join(MANIFEST);
    if !manifest_path.exists() {
        return Err(StoreError::NotAProject(dir.to_path_buf()));
    }
    let text = read(&manifest_path)?;
    let probe: VersionProbe = serde_json::from_str(&text).map_err(StoreError::Manifest)?;
    if probe.format_version != PROJECT_FORMAT_VERSION {
        return Err(StoreError::UnsupportedVersion {
            found: probe.format_version,
            expected: PROJECT_FORMAT_VERSION,
        });
    }
    let manifest: Manifest = serde_json::from_str(&text).map_err(StoreError::Manifest)?;
    let dataset = parse_project_dataset(&read(&dir.join(INTENTS))?, &read(&dir.join(CONTEXTS))?, &read(&dir.join(QUESTIONS))?)
        .map_err(StoreError::Dataset)?;
    compile_rules(&manifest.rules).map_err(StoreError::Rules)?;
    let model_path = dir.join(MODEL);
    let model = if model_path.exists() {
        Some(deserialize_model(&fs::read(&model_path).map_err(io_err(&model_path))?)?)
    } else {
        None
    };
    let mut project = Project {
        name: manifest.name,
        dataset,
        rules: manifest.rules,
        pipeline_config: manifest.pipeline_config,
        augmentation_config: manifest.augmentation_config,
        training_config: manifest.training_config,
        model_stale: manifest.model_stale,
        model,
        steps: manifest.steps,
        chat_turns: manifest.chat_turns,
    };
    if let Some(m) = &project.model {
        if !labels_match(m, &project.dataset) {
            project.model_stale = true;
        }
    }
    let issues = project.invariant_violations();
    Ok(LoadedProject { project, issues })
}

/// Like [`load_project`], but inconsistent workflow state is an error.
pub fn load_project_strict(dir: &Path) -> Result<Project, StoreError> {
    let loaded = load_project(dir)?;
    if loaded.read_only() {
        return Err(StoreError::Invariant(loaded.issues));
    }
    Ok(loaded.project)
}

// ---------------------------------------------------------------------------
// Suites

pub const BUNDLED_SUITES: &[&str] = &["earth_science", "machine_learning"];

const SUITE_FILES: [(&str, &str, &str); 3] = [
    (INTENTS, "sampleIntents.txt", "intents"),
    (CONTEXTS, "sampleContexts.txt", "contexts"),
    (QUESTIONS, "sampleQuestions.csv", "questions"),
];

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error("no bundled suite named {0:?}; available: earth_science, machine_learning")]
    UnknownSuite(String),
    #[error("{dir}: missing {kind} file ({expected} or {alternate})")]
    MissingFile {
        dir: PathBuf,
        kind: &'static str,
        expected: &'static str,
        alternate: &'static str,
    },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("suite files are invalid:\n{}", join_parse_errors(.0))]
    Parse(Vec<ParseError>),
    #[error("suite dataset is invalid:\n{0}")]
    Invalid(ValidationReport),
}

fn bundled_files(name: &str) -> Option<[&'static str; 3]> {
    match name {
        "earth_science" => Some([
            include_str!("../fixtures/earth_science/intents.txt"),
            include_str!("../fixtures/earth_science/contexts.txt"),
            include_str!("../fixtures/earth_science/questions.csv"),
        ]),
        "machine_learning" => Some([
            include_str!("../fixtures/machine_learning/intents.txt"),
            include_str!("../fixtures/machine_learning/contexts.txt"),
            include_str!("../fixtures/machine_learning/questions.csv"),
        ]),
        _ => None,
    }
}

fn parse_suite(files: [&str; 3]) -> Result<Dataset, SuiteError> {
    let ds = dataset::parse_dataset(files[0], files[1], files[2]).map_err(SuiteError::Parse)?;
    let report = dataset::validate(&ds);
    if !report.is_empty() {
        return Err(SuiteError::Invalid(report));
    }
    Ok(ds)
}

/// One of the suites shipped with the library.
pub fn bundled_suite(name: &str) -> Result<Dataset, SuiteError> {
    parse_suite(bundled_files(name).ok_or_else(|| SuiteError::UnknownSuite(name.to_string()))?)
}

/// Writes a bundled suite's three files into `dir`.
pub fn write_bundled_suite(name: &str, dir: &Path) -> Result<(), SuiteError> {
    let files = bundled_files(name).ok_or_else(|| SuiteError::UnknownSuite(name.to_string()))?;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SuiteError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    for ((file, _, _), content) in SUITE_FILES.iter().zip(files) {
        let path = dir.join(file);
        fs::write(&path, content).map_err(io(&path))?;
    }
    Ok(())
}

/// Reads a suite directory holding `intents.txt`, `contexts.txt` and
/// `questions.csv` (or their `sample*` names). The dataset must validate.
pub fn read_suite(dir: &Path) -> Result<Dataset, SuiteError> {
    let mut contents = Vec::with_capacity(3);
    for (expected, alternate, kind) in SUITE_FILES {
        let path = [expected, alternate]
            .iter()
            .map(|f| dir.join(f))
            .find(|p| p.is_file())
            .ok_or_else(|| SuiteError::MissingFile {
                dir: dir.to_path_buf(),
                kind,
                expected,
                alternate,
            })?;
        contents.push(fs::read_to_string(&path).map_err(|source| SuiteError::Io { path, source })?);
    }
    parse_suite([&contents[0], &contents[1], &contents[2]])
}

impl Project {
    /// Replaces the dataset with an imported suite.
    pub fn import_suite(&mut self, suite: &Dataset) -> Result<(), ProjectError> {
        self.set_dataset(suite)?;
        self.model_stale = self.model.is_some();
        Ok(())
    }
}
