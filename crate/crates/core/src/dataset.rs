//! Intents, their context passages, and labeled student questions.
//!
//! Three plain-text files make up a dataset on disk:
//!
//! * the intents file: one intent name per line, blank lines ignored;
//! * the contexts file: a `# <intent name>` header line followed by that
//!   intent's passage, once per intent. Passage lines that begin with `#` or
//!   `\` are written with a leading `\` so they cannot be mistaken for headers;
//! * the questions file: CSV with a mandatory `question,intent` header and the
//!   optional export columns `origin` and `parent`. `parent` holds the 1-based
//!   data-row number of the human question a synthetic one was derived from.
//!
//! Parsers accept LF or CRLF line endings; serializers always emit LF.

use std::collections::{HashMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::text;

/// An instructor-defined topic and the passage its answers come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intent {
    pub name: String,
    pub context: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Human,
    Synthetic,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Human => "human",
            Origin::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuestionId(String);

impl QuestionId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for QuestionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledQuestion {
    pub id: QuestionId,
    pub text: String,
    pub intent_name: String,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<QuestionId>,
}

/// Intents plus labeled questions. May hold invalid data; see [`validate`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub intents: Vec<Intent>,
    pub questions: Vec<LabeledQuestion>,
}

impl Dataset {
    pub fn new(intents: Vec<Intent>, questions: Vec<LabeledQuestion>) -> Self {
        Self { intents, questions }
    }

    pub fn intent_names(&self) -> Vec<String> {
        self.intents.iter().map(|i| i.name.clone()).collect()
    }

    pub fn intent(&self, name: &str) -> Option<&Intent> {
        self.intents.iter().find(|i| i.name == name)
    }

    pub fn context_of(&self, name: &str) -> Option<&str> {
        self.intent(name).map(|i| i.context.as_str())
    }

    pub fn question(&self, id: &QuestionId) -> Option<&LabeledQuestion> {
        self.questions.iter().find(|q| &q.id == id)
    }

    pub fn human_questions(&self) -> impl Iterator<Item = &LabeledQuestion> {
        self.questions.iter().filter(|q| q.origin == Origin::Human)
    }

    /// Number of questions labeled with each intent, in intent order.
    pub fn counts_per_intent(&self) -> Vec<(String, usize)> {
        self.intents
            .iter()
            .map(|i| {
                let n = self
                    .questions
                    .iter()
                    .filter(|q| q.intent_name == i.name)
                    .count();
                (i.name.clone(), n)
            })
            .collect()
    }

    /// Returns an id not used by any question in the dataset.
    pub fn fresh_id(&self) -> QuestionId {
        let taken: HashSet<&str> = self.questions.iter().map(|q| q.id.as_str()).collect();
        let mut n = self.questions.len() + 1;
        loop {
            let candidate = format!("q{n}");
            if !taken.contains(candidate.as_str()) {
                return QuestionId(candidate);
            }
            n += 1;
        }
    }

    pub fn push_human(&mut self, text: impl Into<String>, intent: impl Into<String>) -> QuestionId {
        let id = self.fresh_id();
        self.questions.push(LabeledQuestion {
            id: id.clone(),
            text: text.into(),
            intent_name: intent.into(),
            origin: Origin::Human,
            parent_id: None,
        });
        id
    }

    /// Appends a synthetic question derived from `parent`, copying its label.
    pub fn push_synthetic(&mut self, text: impl Into<String>, parent: &QuestionId) -> Option<QuestionId> {
        let intent = self.question(parent)?.intent_name.clone();
        let id = self.fresh_id();
        self.questions.push(LabeledQuestion {
            id: id.clone(),
            text: text.into(),
            intent_name: intent,
            origin: Origin::Synthetic,
            parent_id: Some(parent.clone()),
        });
        Some(id)
    }
}

// ---------------------------------------------------------------------------
// Parse errors

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFile {
    Intents,
    Contexts,
    Questions,
}

impl fmt::Display for DatasetFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetFile::Intents => "intents file",
            DatasetFile::Contexts => "contexts file",
            DatasetFile::Questions => "questions file",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseIssue {
    #[error("file contains no intent names")]
    NoIntents,
    #[error("line {line}: duplicate intent {name:?} (first defined on line {first_line})")]
    DuplicateIntent { name: String, line: usize, first_line: usize },
    #[error("line {line}: text before the first `# <intent>` header")]
    ContentBeforeHeader { line: usize },
    #[error("line {line}: header has no intent name")]
    EmptyHeader { line: usize },
    #[error("line {line}: context header names unknown intent {name:?}")]
    UnknownContextIntent { name: String, line: usize },
    #[error("line {line}: second context for intent {name:?}")]
    DuplicateContext { name: String, line: usize },
    #[error("intent {name:?} has no context")]
    MissingContext { name: String },
    #[error("header must be `question,intent` (optionally followed by `origin`, `parent`), found {found:?}")]
    BadHeader { found: String },
    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount { line: usize, expected: usize, found: usize },
    #[error("line {line}: label {label:?} is not a defined intent")]
    UnknownLabel { line: usize, label: String },
    #[error("line {line}: question text is empty")]
    EmptyQuestion { line: usize },
    #[error("line {line}: origin must be `human` or `synthetic`, found {value:?}")]
    BadOrigin { line: usize, value: String },
    #[error("line {line}: bad parent reference {value:?}")]
    BadParent { line: usize, value: String },
    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
#[error("{file}: {}", join_issues(.issues))]
pub struct ParseError {
    pub file: DatasetFile,
    pub issues: Vec<ParseIssue>,
}

fn join_issues(issues: &[ParseIssue]) -> String {
    issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

fn fail<T>(file: DatasetFile, issues: Vec<ParseIssue>) -> Result<T, ParseError> {
    Err(ParseError { file, issues })
}

// ---------------------------------------------------------------------------
// Intents file

pub fn parse_intents_file(content: &str) -> Result<Vec<String>, ParseError> {
    let mut names: Vec<String> = Vec::new();
    let mut first_seen: HashMap<String, usize> = HashMap::new();
    let mut issues = Vec::new();
    for (idx, line) in strip_bom(content).lines().enumerate() {
        let name = line.trim();
        if name.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        if let Some(&first_line) = first_seen.get(name) {
            issues.push(ParseIssue::DuplicateIntent {
                name: name.to_string(),
                line: line_no,
                first_line,
            });
            continue;
        }
        first_seen.insert(name.to_string(), line_no);
        names.push(name.to_string());
    }
    if names.is_empty() {
        issues.push(ParseIssue::NoIntents);
    }
    if issues.is_empty() {
        Ok(names)
    } else {
        fail(DatasetFile::Intents, issues)
    }
}

pub fn serialize_intents(dataset: &Dataset) -> String {
    let mut out = String::new();
    for intent in &dataset.intents {
        out.push_str(&intent.name);
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Contexts file

/// Parses the contexts file into `(intent name, context)` pairs in `intents` order.
pub fn parse_contexts_file(content: &str, intents: &[String]) -> Result<Vec<(String, String)>, ParseError> {
    let known: HashSet<&str> = intents.iter().map(String::as_str).collect();
    let mut bodies: HashMap<String, Vec<&str>> = HashMap::new();
    // None: before any header; Some(None): under a rejected header.
    let mut current: Option<Option<String>> = None;
    let mut issues = Vec::new();

    for (idx, line) in strip_bom(content).lines().enumerate() {
        let line_no = idx + 1;
        if let Some(rest) = line.strip_prefix('#') {
            let name = rest.trim();
            current = Some(None);
            if name.is_empty() {
                issues.push(ParseIssue::EmptyHeader { line: line_no });
            } else if !known.contains(name) {
                issues.push(ParseIssue::UnknownContextIntent {
                    name: name.to_string(),
                    line: line_no,
                });
            } else if bodies.contains_key(name) {
                issues.push(ParseIssue::DuplicateContext {
                    name: name.to_string(),
                    line: line_no,
                });
            } else {
                bodies.insert(name.to_string(), Vec::new());
                current = Some(Some(name.to_string()));
            }
            continue;
        }
        match &current {
            Some(Some(name)) => {
                let body_line = line.strip_prefix('\\').unwrap_or(line);
                bodies.get_mut(name).expect("open record").push(body_line);
            }
            Some(None) => {}
            None if line.trim().is_empty() => {}
            None => issues.push(ParseIssue::ContentBeforeHeader { line: line_no }),
        }
    }

    let mut out = Vec::with_capacity(intents.len());
    for name in intents {
        let context = bodies
            .get(name)
            .map(|lines| lines.join("\n").trim().to_string())
            .unwrap_or_default();
        if context.is_empty() {
            issues.push(ParseIssue::MissingContext { name: name.clone() });
        } else {
            out.push((name.clone(), context));
        }
    }
    if issues.is_empty() {
        Ok(out)
    } else {
        fail(DatasetFile::Contexts, issues)
    }
}

pub fn serialize_contexts(dataset: &Dataset) -> String {
    let mut out = String::new();
    for (i, intent) in dataset.intents.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str("# ");
        out.push_str(&intent.name);
        out.push('\n');
        for line in intent.context.lines() {
            if line.starts_with('#') || line.starts_with('\\') {
                out.push('\\');
            }
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Questions file

const QUESTION_COLUMNS: [&str; 4] = ["question", "intent", "origin", "parent"];

/// Parses the questions CSV. Question ids are assigned as `q<row>`, where
/// `row` is the 1-based data row.
pub fn parse_questions_csv(content: &str, intents: &[String]) -> Result<Vec<LabeledQuestion>, ParseError> {
    let known: HashSet<&str> = intents.iter().map(String::as_str).collect();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(strip_bom(content).as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => {
            return fail(DatasetFile::Questions, vec![csv_issue(&e)]);
        }
        None => {
            return fail(
                DatasetFile::Questions,
                vec![ParseIssue::BadHeader { found: String::new() }],
            )
        }
    };
    let columns: Vec<&str> = header.iter().map(str::trim).collect();
    let width = columns.len();
    if !(2..=4).contains(&width) || columns[..] != QUESTION_COLUMNS[..width] {
        return fail(
            DatasetFile::Questions,
            vec![ParseIssue::BadHeader {
                found: columns.join(","),
            }],
        );
    }

    let mut questions = Vec::new();
    let mut issues = Vec::new();
    for record in records {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                issues.push(csv_issue(&e));
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != width {
            issues.push(ParseIssue::ColumnCount {
                line,
                expected: width,
                found: record.len(),
            });
            continue;
        }
        let row = questions.len() + 1;
        let text = record[0].trim();
        let label = record[1].trim();
        let mut ok = true;
        if text.is_empty() {
            issues.push(ParseIssue::EmptyQuestion { line });
            ok = false;
        }
        if !known.contains(label) {
            issues.push(ParseIssue::UnknownLabel {
                line,
                label: label.to_string(),
            });
            ok = false;
        }
        let origin = match record.get(2).map(str::trim) {
            None | Some("") | Some("human") => Origin::Human,
            Some("synthetic") => Origin::Synthetic,
            Some(other) => {
                issues.push(ParseIssue::BadOrigin {
                    line,
                    value: other.to_string(),
                });
                ok = false;
                Origin::Human
            }
        };
        let parent_id = match record.get(3).map(str::trim) {
            None | Some("") => None,
            Some(value) => match value.parse::<usize>() {
                Ok(p) if p >= 1 => Some(QuestionId(format!("q{p}"))),
                _ => {
                    issues.push(ParseIssue::BadParent {
                        line,
                        value: value.to_string(),
                    });
                    ok = false;
                    None
                }
            },
        };
        if ok {
            questions.push(LabeledQuestion {
                id: QuestionId(format!("q{row}")),
                text: text.to_string(),
                intent_name: label.to_string(),
                origin,
                parent_id,
            });
        } else {
            // keep row numbering aligned with the file even for rejected rows
            questions.push(LabeledQuestion {
                id: QuestionId(format!("q{row}")),
                text: String::new(),
                intent_name: String::new(),
                origin,
                parent_id: None,
            });
        }
    }
    if issues.is_empty() {
        Ok(questions)
    } else {
        fail(DatasetFile::Questions, issues)
    }
}

fn csv_issue(e: &csv::Error) -> ParseIssue {
    ParseIssue::Csv {
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    }
}

pub fn serialize_questions(dataset: &Dataset) -> String {
    let row_of: HashMap<&QuestionId, usize> = dataset
        .questions
        .iter()
        .enumerate()
        .map(|(i, q)| (&q.id, i + 1))
        .collect();
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer.write_record(QUESTION_COLUMNS).expect("in-memory write");
    for q in &dataset.questions {
        let parent = q
            .parent_id
            .as_ref()
            .and_then(|p| row_of.get(p))
            .map(|r| r.to_string())
            .unwrap_or_default();
        writer
            .write_record([q.text.as_str(), q.intent_name.as_str(), q.origin.as_str(), parent.as_str()])
            .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// Parses all three files into a dataset.
///
/// Every file is checked even if an earlier one fails, so callers get the
/// complete list of problems.
pub fn parse_dataset(intents: &str, contexts: &str, questions: &str) -> Result<Dataset, Vec<ParseError>> {
    let names = match parse_intents_file(intents) {
        Ok(n) => n,
        Err(e) => {
            // Without a name list the other files can only be syntax-checked.
            let mut errors = vec![e];
            if let Err(q) = parse_questions_header_only(questions) {
                errors.push(q);
            }
            return Err(errors);
        }
    };
    let contexts = parse_contexts_file(contexts, &names);
    let questions = parse_questions_csv(questions, &names);
    match (contexts, questions) {
        (Ok(contexts), Ok(questions)) => Ok(Dataset {
            intents: contexts
                .into_iter()
                .map(|(name, context)| Intent { name, context })
                .collect(),
            questions,
        }),
        (c, q) => Err([c.err(), q.err()].into_iter().flatten().collect()),
    }
}

fn parse_questions_header_only(content: &str) -> Result<(), ParseError> {
    let first = strip_bom(content).lines().next().unwrap_or("");
    let columns: Vec<&str> = first.split(',').map(str::trim).collect();
    let width = columns.len();
    if (2..=4).contains(&width) && columns[..] == QUESTION_COLUMNS[..width] {
        Ok(())
    } else {
        fail(
            DatasetFile::Questions,
            vec![ParseIssue::BadHeader {
                found: columns.join(","),
            }],
        )
    }
}

fn strip_bom(s: &str) -> &str {
    s.strip_prefix('\u{feff}').unwrap_or(s)
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Location {
    Intent { index: usize, name: String },
    Question { index: usize, id: QuestionId },
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Intent { index, name } => write!(f, "intent #{} ({name:?})", index + 1),
            Location::Question { index, id } => write!(f, "question #{} ({id})", index + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    EmptyIntentName,
    UntrimmedIntentName,
    DuplicateIntentName,
    EmptyContext,
    DuplicateQuestionId,
    EmptyQuestionText,
    UnknownIntent,
    SyntheticWithoutParent,
    MissingParent,
    ParentNotHuman,
    ParentIntentMismatch,
    HumanWithParent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub location: Location,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }

    fn push(&mut self, kind: ViolationKind, location: Location, message: String) {
        self.violations.push(Violation { kind, location, message });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every dataset invariant and reports all violations found.
pub fn validate(dataset: &Dataset) -> ValidationReport {
    use ViolationKind::*;

    let mut report = ValidationReport::default();
    let mut names: HashSet<&str> = HashSet::new();
    for (index, intent) in dataset.intents.iter().enumerate() {
        let loc = || Location::Intent {
            index,
            name: intent.name.clone(),
        };
        if intent.name.trim().is_empty() {
            report.push(EmptyIntentName, loc(), "intent name is empty".into());
        } else if intent.name.trim() != intent.name {
            report.push(
                UntrimmedIntentName,
                loc(),
                "intent name has leading or trailing whitespace".into(),
            );
        }
        if !names.insert(intent.name.as_str()) {
            report.push(
                DuplicateIntentName,
                loc(),
                format!("intent name {:?} is already used", intent.name),
            );
        }
        if intent.context.trim().is_empty() {
            report.push(EmptyContext, loc(), "context is empty".into());
        }
    }

    let by_id: HashMap<&QuestionId, &LabeledQuestion> =
        dataset.questions.iter().rev().map(|q| (&q.id, q)).collect();
    let mut ids: HashSet<&QuestionId> = HashSet::new();
    for (index, q) in dataset.questions.iter().enumerate() {
        let loc = || Location::Question {
            index,
            id: q.id.clone(),
        };
        if !ids.insert(&q.id) {
            report.push(DuplicateQuestionId, loc(), format!("id {} is already used", q.id));
        }
        if q.text.trim().is_empty() {
            report.push(EmptyQuestionText, loc(), "question text is empty".into());
        }
        if !names.contains(q.intent_name.as_str()) {
            report.push(
                UnknownIntent,
                loc(),
                format!("label {:?} is not a defined intent", q.intent_name),
            );
        }
        match (q.origin, &q.parent_id) {
            (Origin::Human, Some(_)) => {
                report.push(HumanWithParent, loc(), "human question has a parent".into())
            }
            (Origin::Human, None) => {}
            (Origin::Synthetic, None) => report.push(
                SyntheticWithoutParent,
                loc(),
                "synthetic question has no parent".into(),
            ),
            (Origin::Synthetic, Some(pid)) => match by_id.get(pid) {
                None => report.push(MissingParent, loc(), format!("parent {pid} does not exist")),
                Some(parent) if parent.origin != Origin::Human => report.push(
                    ParentNotHuman,
                    loc(),
                    format!("parent {pid} is not a human question"),
                ),
                Some(parent) if parent.intent_name != q.intent_name => report.push(
                    ParentIntentMismatch,
                    loc(),
                    format!(
                        "label {:?} differs from parent label {:?}",
                        q.intent_name, parent.intent_name
                    ),
                ),
                Some(_) => {}
            },
        }
    }
    report
}

/// A non-fatal dataset observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LintWarning {
    pub location: Location,
    pub message: String,
}

/// Flags questions whose text duplicates an earlier question's text under
/// [`text::question_key`] normalization.
pub fn lint(dataset: &Dataset) -> Vec<LintWarning> {
    let mut seen: HashMap<String, &QuestionId> = HashMap::new();
    let mut warnings = Vec::new();
    for (index, q) in dataset.questions.iter().enumerate() {
        let key = text::question_key(&q.text);
        match seen.get(&key) {
            Some(first) => warnings.push(LintWarning {
                location: Location::Question {
                    index,
                    id: q.id.clone(),
                },
                message: format!("duplicates the text of question {first}"),
            }),
            None => {
                seen.insert(key, &q.id);
            }
        }
    }
    warnings
}

// ---------------------------------------------------------------------------
// Splitting

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SplitError {
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("intents need at least 2 human questions to split: {}", .0.iter().map(|(n, c)| format!("{n:?} has {c}")).collect::<Vec<_>>().join(", "))]
    TooFewQuestions(Vec<(String, usize)>),
}

/// Splits a dataset per intent into train and validation parts.
///
/// Only human questions are stratified: each intent sends
/// `ceil(train_fraction * n)` of its `n` human questions to train, clamped so
/// that both sides keep at least one. Synthetic questions follow their parent.
/// Both parts keep every intent and the original question order.
pub fn stratified_split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), SplitError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SplitError::BadFraction(train_fraction));
    }
    let too_few: Vec<(String, usize)> = dataset
        .intents
        .iter()
        .map(|i| {
            let n = dataset
                .human_questions()
                .filter(|q| q.intent_name == i.name)
                .count();
            (i.name.clone(), n)
        })
        .filter(|(_, n)| *n < 2)
        .collect();
    if !too_few.is_empty() {
        return Err(SplitError::TooFewQuestions(too_few));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train: HashSet<&QuestionId> = HashSet::new();
    for intent in &dataset.intents {
        let mut members: Vec<&QuestionId> = dataset
            .human_questions()
            .filter(|q| q.intent_name == intent.name)
            .map(|q| &q.id)
            .collect();
        members.shuffle(&mut rng);
        let n = members.len();
        let wanted = (train_fraction * n as f64 - 1e-9).ceil() as usize;
        let take = wanted.clamp(1, n - 1);
        in_train.extend(members.into_iter().take(take));
    }

    let mut train = Dataset::new(dataset.intents.clone(), Vec::new());
    let mut validation = Dataset::new(dataset.intents.clone(), Vec::new());
    for q in &dataset.questions {
        let anchor = match (q.origin, &q.parent_id) {
            (Origin::Synthetic, Some(parent)) => parent,
            _ => &q.id,
        };
        let goes_to_train = in_train.contains(anchor) || (q.origin == Origin::Synthetic && dataset.question(anchor).is_none());
        if goes_to_train {
            train.questions.push(q.clone());
        } else {
            validation.questions.push(q.clone());
        }
    }
    Ok((train, validation))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    const EARTH: &str = "Patterns in Earth's Features\nEarth's Water\nWeathering and Erosion\nInteractions between Systems\nImpact on Humans\n";

    #[test]
    fn intents_file_in_order() {
        assert_eq!(
            parse_intents_file(EARTH).unwrap(),
            names(&[
                "Patterns in Earth's Features",
                "Earth's Water",
                "Weathering and Erosion",
                "Interactions between Systems",
                "Impact on Humans"
            ])
        );
    }

    #[test]
    fn intents_file_skips_blanks_and_trims() {
        assert_eq!(parse_intents_file("A\n\n  B  \n").unwrap(), names(&["A", "B"]));
        assert_eq!(parse_intents_file("A\r\nB\r\n").unwrap(), names(&["A", "B"]));
    }

    #[test]
    fn intents_file_duplicate_reports_line() {
        let err = parse_intents_file("A\nA\n").unwrap_err();
        assert_eq!(
            err.issues,
            vec![ParseIssue::DuplicateIntent {
                name: "A".into(),
                line: 2,
                first_line: 1
            }]
        );
    }

    #[test]
    fn intents_file_empty() {
        let err = parse_intents_file("\n  \n").unwrap_err();
        assert_eq!(err.issues, vec![ParseIssue::NoIntents]);
    }

    #[test]
    fn contexts_basic() {
        let got = parse_contexts_file("# A\nalpha text\n# B\nbeta text\n", &names(&["A", "B"])).unwrap();
        assert_eq!(
            got,
            vec![("A".into(), "alpha text".into()), ("B".into(), "beta text".into())]
        );
    }

    #[test]
    fn contexts_missing_intent() {
        let err = parse_contexts_file("# A\nx\n", &names(&["A", "B"])).unwrap_err();
        assert_eq!(err.issues, vec![ParseIssue::MissingContext { name: "B".into() }]);
    }

    #[test]
    fn contexts_unknown_intent() {
        let err = parse_contexts_file("# C\nx\n", &names(&["A"])).unwrap_err();
        assert!(err.issues.contains(&ParseIssue::UnknownContextIntent {
            name: "C".into(),
            line: 1
        }));
    }

    #[test]
    fn contexts_content_before_header() {
        let err = parse_contexts_file("stray\n# A\nx\n", &names(&["A"])).unwrap_err();
        assert_eq!(err.issues, vec![ParseIssue::ContentBeforeHeader { line: 1 }]);
    }

    #[test]
    fn contexts_escape_hash_lines() {
        let ds = Dataset::new(
            vec![Intent {
                name: "A".into(),
                context: "line one\n# not a header\n\\ backslash".into(),
            }],
            vec![],
        );
        let text = serialize_contexts(&ds);
        let back = parse_contexts_file(&text, &names(&["A"])).unwrap();
        assert_eq!(back[0].1, ds.intents[0].context);
    }

    #[test]
    fn questions_single_row() {
        let intents = parse_intents_file(EARTH).unwrap();
        let qs = parse_questions_csv(
            "question,intent\nWhat causes erosion?,Weathering and Erosion\n",
            &intents,
        )
        .unwrap();
        assert_eq!(qs.len(), 1);
        assert_eq!(qs[0].intent_name, "Weathering and Erosion");
        assert_eq!(qs[0].origin, Origin::Human);
        assert_eq!(qs[0].parent_id, None);
    }

    #[test]
    fn questions_unknown_label() {
        let intents = parse_intents_file(EARTH).unwrap();
        let err = parse_questions_csv("question,intent\nHow deep is the ocean?,Chemistry\n", &intents).unwrap_err();
        assert_eq!(
            err.issues,
            vec![ParseIssue::UnknownLabel {
                line: 2,
                label: "Chemistry".into()
            }]
        );
    }

    #[test]
    fn questions_header_only() {
        assert!(parse_questions_csv("question,intent\n", &names(&["A"])).unwrap().is_empty());
    }

    #[test]
    fn questions_header_errors() {
        for bad in ["", "q,intent\n", "question,intent,extra\n", "intent,question\n"] {
            let err = parse_questions_csv(bad, &names(&["A"])).unwrap_err();
            assert!(matches!(err.issues[0], ParseIssue::BadHeader { .. }), "{bad:?}");
        }
    }

    #[test]
    fn questions_column_count_and_empty_text() {
        let err = parse_questions_csv("question,intent\nonly one\n ,A\n", &names(&["A"])).unwrap_err();
        assert_eq!(
            err.issues,
            vec![
                ParseIssue::ColumnCount {
                    line: 2,
                    expected: 2,
                    found: 1
                },
                ParseIssue::EmptyQuestion { line: 3 },
            ]
        );
    }

    #[test]
    fn questions_quoting_and_crlf() {
        let qs = parse_questions_csv(
            "question,intent\r\n\"Why, oh why?\",A\r\n\"She said \"\"hi\"\"\",A\r\n",
            &names(&["A"]),
        )
        .unwrap();
        assert_eq!(qs[0].text, "Why, oh why?");
        assert_eq!(qs[1].text, "She said \"hi\"");
    }

    #[test]
    fn serialize_empty_questions_is_header_only() {
        let ds = Dataset::default();
        assert_eq!(serialize_questions(&ds), "question,intent,origin,parent\n");
    }

    #[test]
    fn serialize_quotes_commas() {
        let mut ds = Dataset::new(
            vec![Intent {
                name: "A".into(),
                context: "c".into(),
            }],
            vec![],
        );
        ds.push_human("Why, though?", "A");
        let csv = serialize_questions(&ds);
        assert!(csv.contains("\"Why, though?\",A,human,\n"), "{csv}");
    }

    #[test]
    fn synthetic_parent_round_trips() {
        let mut ds = Dataset::new(
            vec![Intent {
                name: "A".into(),
                context: "c".into(),
            }],
            vec![],
        );
        let p = ds.push_human("what is rain", "A");
        ds.push_synthetic("what is rainfall", &p).unwrap();
        let back = parse_questions_csv(&serialize_questions(&ds), &names(&["A"])).unwrap();
        assert_eq!(back, ds.questions);
    }

    fn two_intents() -> Dataset {
        Dataset::new(
            vec![
                Intent {
                    name: "A".into(),
                    context: "alpha".into(),
                },
                Intent {
                    name: "B".into(),
                    context: "beta".into(),
                },
            ],
            vec![],
        )
    }

    #[test]
    fn orphaned_synthetic_is_one_violation() {
        let mut ds = two_intents();
        ds.push_human("q", "A");
        ds.questions.push(LabeledQuestion {
            id: QuestionId::new("s1"),
            text: "q2".into(),
            intent_name: "A".into(),
            origin: Origin::Synthetic,
            parent_id: Some(QuestionId::new("nope")),
        });
        let report = validate(&ds);
        assert_eq!(report.len(), 1);
        assert_eq!(report.count(ViolationKind::MissingParent), 1);
    }

    #[test]
    fn duplicate_names_and_bad_label_are_three_violations() {
        let mut ds = two_intents();
        ds.intents.extend(two_intents().intents);
        ds.push_human("q", "Z");
        let report = validate(&ds);
        assert_eq!(report.len(), 3, "{report}");
        assert_eq!(report.count(ViolationKind::DuplicateIntentName), 2);
        assert_eq!(report.count(ViolationKind::UnknownIntent), 1);
    }

    #[test]
    fn every_violation_class_is_detected() {
        use ViolationKind::*;
        let base = || {
            let mut ds = two_intents();
            let p = ds.push_human("parent", "A");
            ds.push_synthetic("child", &p);
            ds
        };
        assert!(validate(&base()).is_empty());

        let cases: Vec<(ViolationKind, Box<dyn Fn(&mut Dataset)>)> = vec![
            (EmptyIntentName, Box::new(|d| d.intents.push(Intent { name: " ".into(), context: "c".into() }))),
            (UntrimmedIntentName, Box::new(|d| d.intents.push(Intent { name: " C".into(), context: "c".into() }))),
            (DuplicateIntentName, Box::new(|d| d.intents.push(Intent { name: "A".into(), context: "c".into() }))),
            (EmptyContext, Box::new(|d| d.intents[1].context = "  ".into())),
            (DuplicateQuestionId, Box::new(|d| { let q = d.questions[0].clone(); d.questions.push(q); })),
            (EmptyQuestionText, Box::new(|d| d.questions[0].text = "".into())),
            (UnknownIntent, Box::new(|d| { d.push_human("x", "nope"); })),
            (SyntheticWithoutParent, Box::new(|d| d.questions[1].parent_id = None)),
            (MissingParent, Box::new(|d| d.questions[1].parent_id = Some(QuestionId::new("zz")))),
            (ParentNotHuman, Box::new(|d| { let id = d.questions[1].id.clone(); d.push_synthetic("grandchild", &id); })),
            (ParentIntentMismatch, Box::new(|d| d.questions[1].intent_name = "B".into())),
            (HumanWithParent, Box::new(|d| d.questions[0].parent_id = Some(QuestionId::new("q2")))),
        ];
        for (kind, mutate) in cases {
            let mut ds = base();
            mutate(&mut ds);
            let report = validate(&ds);
            assert!(report.count(kind) >= 1, "{kind:?} not detected: {report}");
        }
    }

    fn balanced(per_intent: usize) -> Dataset {
        let mut ds = two_intents();
        for i in 0..per_intent {
            ds.push_human(format!("a question {i}"), "A");
            ds.push_human(format!("b question {i}"), "B");
        }
        ds
    }

    #[test]
    fn split_counts_follow_ceiling() {
        let (train, val) = stratified_split(&balanced(10), 0.8, 3).unwrap();
        assert_eq!(train.counts_per_intent(), vec![("A".into(), 8), ("B".into(), 8)]);
        assert_eq!(val.counts_per_intent(), vec![("A".into(), 2), ("B".into(), 2)]);
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let ds = balanced(10);
        assert_eq!(stratified_split(&ds, 0.7, 1).unwrap(), stratified_split(&ds, 0.7, 1).unwrap());
        assert_ne!(stratified_split(&ds, 0.7, 1).unwrap(), stratified_split(&ds, 0.7, 2).unwrap());
    }

    #[test]
    fn split_keeps_both_sides_nonempty() {
        let (train, val) = stratified_split(&balanced(2), 0.99, 0).unwrap();
        assert_eq!(train.counts_per_intent(), vec![("A".into(), 1), ("B".into(), 1)]);
        assert_eq!(val.counts_per_intent(), vec![("A".into(), 1), ("B".into(), 1)]);
    }

    #[test]
    fn split_rejects_small_intents_and_bad_fraction() {
        let mut ds = balanced(3);
        ds.intents.push(Intent {
            name: "C".into(),
            context: "c".into(),
        });
        ds.push_human("lonely", "C");
        assert_eq!(
            stratified_split(&ds, 0.5, 0).unwrap_err(),
            SplitError::TooFewQuestions(vec![("C".into(), 1)])
        );
        assert!(matches!(stratified_split(&balanced(3), 1.0, 0), Err(SplitError::BadFraction(_))));
    }

    #[test]
    fn synthetic_children_follow_parent() {
        let mut ds = balanced(5);
        let humans: Vec<QuestionId> = ds.human_questions().map(|q| q.id.clone()).collect();
        for id in &humans {
            ds.push_synthetic("paraphrase", id);
        }
        let (train, val) = stratified_split(&ds, 0.6, 9).unwrap();
        assert!(validate(&train).is_empty());
        assert!(validate(&val).is_empty());
        assert_eq!(train.questions.len() + val.questions.len(), ds.questions.len());
        assert_eq!(train.human_questions().count(), 6);
    }
}
