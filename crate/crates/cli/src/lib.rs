//! The `classbot` command line: every project operation without the web UI.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use classbot::augmentation::{augment_dataset, AugmentError};
use classbot::clients::{generative_client, translation_client, Endpoint};
use classbot::dataset::{self, DatasetFile, ParseError, ValidationReport};
use classbot::intent::{self, TrainError};
use classbot::pipeline::{ChatResponse, QaEngines, QaMode};
use classbot::policy::{MatchMode, PolicyRule, RuleError};
use classbot::project::{
    bundled_suite, load_project, read_suite, save_project_locked, LoadedProject, Project, ProjectError, ProjectLock,
    StepError, StepStatus, StoreError, SuiteError,
};
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(name = "classbot", version, about = "Build, train and chat with classroom question-answering bots")]
pub struct Cli {
    /// Project directory.
    #[arg(long, global = true, env = "CLASSBOT_PROJECT")]
    pub project: Option<PathBuf>,

    /// Directory holding one subdirectory per project (list, serve).
    #[arg(long, global = true, env = "CLASSBOT_DATA_ROOT", default_value = ".")]
    pub data_root: PathBuf,

    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,

    /// Translation service URL, or `stub` for the bundled dictionary translator.
    #[arg(long, global = true, env = "CLASSBOT_TRANSLATION", default_value = "stub")]
    pub translation: Endpoint,

    /// Generative QA service URL, or `stub` for the bundled sentence picker.
    #[arg(long, global = true, env = "CLASSBOT_GENERATIVE", default_value = "stub")]
    pub generative: Endpoint,

    /// Timeout for model service requests, in seconds.
    #[arg(long, global = true, default_value_t = 30)]
    pub timeout: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    /// One JSON document per result.
    Structured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Extractive,
    Generative,
}

impl From<Mode> for QaMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Extractive => QaMode::Extractive,
            Mode::Generative => QaMode::Generative,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create an empty project.
    Init {
        /// Display name; defaults to the directory name.
        #[arg(long)]
        name: Option<String>,
    },
    /// Replace the dataset from a bundled suite, a directory, or single files.
    Import(ImportArgs),
    /// Check the dataset and report every problem.
    Validate,
    /// Add backtranslated paraphrases of the human questions.
    Augment(AugmentArgs),
    /// Show or edit keyword policy rules.
    Rules {
        #[command(subcommand)]
        action: Option<RulesCommand>,
    },
    /// Show or edit pipeline, augmentation and training settings.
    Config {
        /// Dotted setting and JSON value, e.g. `training.epochs=200`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Train the intent classifier on the whole dataset.
    Train(TrainArgs),
    /// Train on a stratified split and report held-out accuracy.
    Eval {
        /// Fraction of each intent's human questions used for training.
        #[arg(long, default_value_t = 0.8)]
        split: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Answer one question.
    Ask {
        question: String,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Include the stage trace.
        #[arg(long)]
        trace: bool,
    },
    /// Answer one question both ways.
    Compare { question: String },
    /// Answer questions read from standard input, one per line.
    Chat {
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Show workflow steps, or complete one.
    Steps {
        #[arg(long, value_name = "STEP")]
        complete: Option<u8>,
    },
    /// Serve the HTTP API for every project under the data root.
    Serve {
        #[arg(long, env = "CLASSBOT_LISTEN", default_value = "127.0.0.1:8080")]
        listen: String,
        /// Pause after each training epoch, for demos.
        #[arg(long, hide = true, default_value_t = 0)]
        epoch_delay_ms: u64,
    },
    /// Write the dataset files, or print them.
    Export {
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// List projects under the data root.
    List,
    /// Summarize a project.
    Show,
    /// Delete a project directory.
    Delete {
        /// Required; deletion cannot be undone.
        #[arg(long)]
        yes: bool,
    },
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    /// Bundled suite name.
    #[arg(long, conflicts_with_all = ["dir", "intents", "contexts", "questions"])]
    pub suite: Option<String>,
    /// Directory with intents.txt, contexts.txt and questions.csv.
    #[arg(long, conflicts_with_all = ["intents", "contexts", "questions"])]
    pub dir: Option<PathBuf>,
    #[arg(long)]
    pub intents: Option<PathBuf>,
    #[arg(long)]
    pub contexts: Option<PathBuf>,
    #[arg(long)]
    pub questions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub pivot: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub max_per_question: Option<usize>,
    #[arg(long)]
    pub no_dedup: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub l2: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum RulesCommand {
    List,
    Add {
        #[arg(long)]
        id: String,
        #[arg(long = "keyword", required = true)]
        keywords: Vec<String>,
        #[arg(long)]
        response: String,
        /// Require every keyword instead of any one.
        #[arg(long)]
        all: bool,
    },
    Remove {
        #[arg(long)]
        id: String,
    },
    /// Replace all rules with a JSON array from a file.
    Set {
        #[arg(long)]
        file: PathBuf,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

macro_rules! error_kind {
    ($($ty:ty => $kind:literal),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::new($kind, e.to_string())
            }
        })*
    };
}

error_kind! {
    StoreError => "store",
    ProjectError => "project",
    StepError => "step",
    SuiteError => "suite",
    AugmentError => "augmentation",
    RuleError => "rules",
    TrainError => "training",
    ParseError => "dataset",
    std::io::Error => "io",
    serde_json::Error => "json",
}

/// A finished command: what to print and the exit code.
pub struct Output {
    pub json: Value,
    pub text: String,
    pub code: i32,
}

impl Output {
    fn new(json: Value, text: impl Into<String>) -> Self {
        Self {
            json,
            text: text.into(),
            code: 0,
        }
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Text => self.text.clone(),
            Format::Structured => serde_json::to_string(&self.json).expect("json renders"),
        }
    }
}

/// Runs one command. `input` and `out` are only used by `chat`, which
/// streams; every other command returns its result.
pub fn run(cli: &Cli, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<Output, CliError> {
    let timeout = Duration::from_secs(cli.timeout);
    match &cli.command {
        Command::Init { name } => init(cli, name.as_deref()),
        Command::Import(args) => import(cli, args),
        Command::Validate => validate(cli),
        Command::Augment(args) => augment(cli, args, timeout),
        Command::Rules { action } => rules(cli, action.as_ref().unwrap_or(&RulesCommand::List)),
        Command::Config { set } => config(cli, set),
        Command::Train(args) => train(cli, args),
        Command::Eval { split, seed } => eval(cli, *split, *seed),
        Command::Ask { question, mode, trace } => ask(cli, question, *mode, *trace, timeout),
        Command::Compare { question } => compare(cli, question, timeout),
        Command::Chat { mode } => chat(cli, *mode, timeout, input, out),
        Command::Steps { complete } => steps(cli, *complete),
        Command::Serve { listen, epoch_delay_ms } => serve(cli, listen, Duration::from_millis(*epoch_delay_ms), timeout),
        Command::Export { out } => export(cli, out.as_deref()),
        Command::List => list(cli),
        Command::Show => show(cli),
        Command::Delete { yes } => delete(cli, *yes),
    }
}

fn project_dir(cli: &Cli) -> Result<&Path, CliError> {
    cli.project
        .as_deref()
        .ok_or_else(|| CliError::new("usage", "--project DIR is required for this command"))
}

fn open(cli: &Cli) -> Result<LoadedProject, CliError> {
    Ok(load_project(project_dir(cli)?)?)
}

/// A project opened for writing; the lock is held until it is dropped.
struct Session {
    lock: ProjectLock,
    project: Project,
}

impl Session {
    fn open(cli: &Cli) -> Result<Self, CliError> {
        let dir = project_dir(cli)?;
        let lock = ProjectLock::acquire(dir)?;
        let loaded = load_project(dir)?;
        if loaded.read_only() {
            return Err(CliError::new(
                "read_only",
                format!("project is read-only until repaired:\n{}", loaded.issues.join("\n")),
            ));
        }
        Ok(Self {
            lock,
            project: loaded.project,
        })
    }

    fn save(&self) -> Result<(), CliError> {
        Ok(save_project_locked(&self.project, &self.lock)?)
    }
}

fn report_text(report: &ValidationReport) -> String {
    if report.is_empty() {
        "dataset is valid".into()
    } else {
        format!("{} problem(s):\n{}", report.len(), report.to_string().trim_end())
    }
}

fn dataset_counts(project: &Project) -> String {
    let mut s = String::new();
    for (name, n) in project.dataset().counts_per_intent() {
        let _ = writeln!(s, "  {n:>4}  {name}");
    }
    s
}

fn init(cli: &Cli, name: Option<&str>) -> Result<Output, CliError> {
    let dir = project_dir(cli)?;
    if dir.join("manifest.json").exists() {
        return Err(CliError::new("exists", format!("{} is already a project", dir.display())));
    }
    let name = match name {
        Some(n) => n.to_string(),
        None => dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .ok_or_else(|| CliError::new("usage", "cannot derive a project name; pass --name"))?,
    };
    let lock = ProjectLock::acquire(dir)?;
    let project = Project::new(&name);
    save_project_locked(&project, &lock)?;
    Ok(Output::new(
        json!({ "project": name, "dir": dir }),
        format!("created project {name:?} in {}", dir.display()),
    ))
}

fn import(cli: &Cli, args: &ImportArgs) -> Result<Output, CliError> {
    let mut s = Session::open(cli)?;
    let report = if let Some(name) = &args.suite {
        s.project.import_suite(&bundled_suite(name)?)?;
        s.project.validate()
    } else if let Some(dir) = &args.dir {
        s.project.import_suite(&read_suite(dir)?)?;
        s.project.validate()
    } else {
        let parts = [
            (DatasetFile::Intents, &args.intents),
            (DatasetFile::Contexts, &args.contexts),
            (DatasetFile::Questions, &args.questions),
        ];
        if parts.iter().all(|(_, p)| p.is_none()) {
            return Err(CliError::new("usage", "give --suite, --dir, or at least one of --intents/--contexts/--questions"));
        }
        if let (Some(i), Some(c), Some(q)) = (&args.intents, &args.contexts, &args.questions) {
            let ds = dataset::parse_dataset(&fs::read_to_string(i)?, &fs::read_to_string(c)?, &fs::read_to_string(q)?)
                .map_err(|errors| CliError::new("dataset", errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")))?;
            s.project.set_dataset(&ds)?
        } else {
            let mut report = ValidationReport::default();
            for (file, path) in parts {
                if let Some(path) = path {
                    report = s.project.replace_file(file, &fs::read_to_string(path)?)?;
                }
            }
            report
        }
    };
    s.save()?;
    let ds = s.project.dataset();
    Ok(Output::new(
        json!({
            "intents": ds.intent_names(),
            "questions": ds.questions.len(),
            "validation": report,
            "stale": s.project.is_stale(),
        }),
        format!(
            "imported {} intents, {} questions\n{}{}",
            ds.intents.len(),
            ds.questions.len(),
            dataset_counts(&s.project),
            report_text(&report)
        ),
    ))
}

fn validate(cli: &Cli) -> Result<Output, CliError> {
    let loaded = open(cli)?;
    let report = loaded.project.validate();
    let lint = dataset::lint(loaded.project.dataset());
    let mut text = report_text(&report);
    for w in &lint {
        let _ = write!(text, "\nwarning: {}: {}", w.location, w.message);
    }
    for issue in &loaded.issues {
        let _ = write!(text, "\nproject: {issue}");
    }
    let mut out = Output::new(json!({ "validation": report, "lint": lint, "issues": loaded.issues }), text);
    if !report.is_empty() || loaded.read_only() {
        out.code = 1;
    }
    Ok(out)
}

fn augment(cli: &Cli, args: &AugmentArgs, timeout: Duration) -> Result<Output, CliError> {
    let mut s = Session::open(cli)?;
    let mut cfg = s.project.augmentation_config.clone();
    if let Some(p) = &args.pivot {
        cfg.pivot_language = p.clone();
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.rounds {
        cfg.rounds_per_question = v;
    }
    if let Some(v) = args.max_per_question {
        cfg.max_synthetic_per_question = v;
    }
    if args.no_dedup {
        cfg.dedup = false;
    }
    s.project.set_augmentation_config(cfg)?;
    let client = translation_client(&cli.translation, timeout);
    let (out, report) = augment_dataset(s.project.dataset(), &s.project.augmentation_config, client.as_ref())?;
    let validation = s.project.set_dataset(&out)?;
    s.save()?;
    let mut text = format!("generated {}, dropped {}\n", report.generated(), report.dropped());
    for e in &report.per_intent {
        let _ = writeln!(text, "  {:>4} added, {:>3} dropped  {}", e.generated, e.dropped, e.intent);
    }
    text.push_str(&report_text(&validation));
    Ok(Output::new(
        json!({ "generated": report.generated(), "dropped": report.dropped(), "report": report, "validation": validation }),
        text,
    ))
}

fn rules_output(project: &Project) -> Output {
    let mut text = String::new();
    for r in project.rules() {
        let mode = if r.match_mode == MatchMode::All { "all of" } else { "any of" };
        let _ = writeln!(text, "{}: {mode} [{}] -> {}", r.id, r.keywords.join(", "), r.response);
    }
    if text.is_empty() {
        text.push_str("no rules");
    }
    Output::new(json!({ "rules": project.rules() }), text.trim_end())
}

fn rules(cli: &Cli, action: &RulesCommand) -> Result<Output, CliError> {
    if let RulesCommand::List = action {
        return Ok(rules_output(&open(cli)?.project));
    }
    let mut s = Session::open(cli)?;
    match action {
        RulesCommand::List => unreachable!(),
        RulesCommand::Add {
            id,
            keywords,
            response,
            all,
        } => {
            let keywords: Vec<&str> = keywords.iter().map(String::as_str).collect();
            let mut rule = PolicyRule::new(id.clone(), &keywords, response.clone());
            if *all {
                rule.match_mode = MatchMode::All;
            }
            s.project.add_rule(rule)?;
        }
        RulesCommand::Remove { id } => {
            let rules: Vec<PolicyRule> = s.project.rules().iter().filter(|r| r.id != *id).cloned().collect();
            if rules.len() == s.project.rules().len() {
                return Err(CliError::new("rules", format!("no rule with id {id:?}")));
            }
            s.project.set_rules(rules)?;
        }
        RulesCommand::Set { file } => {
            let rules: Vec<PolicyRule> = serde_json::from_str(&fs::read_to_string(file)?)?;
            s.project.set_rules(rules)?;
        }
    }
    s.save()?;
    Ok(rules_output(&s.project))
}

fn config_document(p: &Project) -> Value {
    json!({
        "pipeline": p.pipeline_config,
        "augmentation": p.augmentation_config,
        "training": p.training_config,
    })
}

fn config(cli: &Cli, set: &[String]) -> Result<Output, CliError> {
    if set.is_empty() {
        let doc = config_document(&open(cli)?.project);
        return Ok(Output::new(doc.clone(), serde_json::to_string_pretty(&doc)?));
    }
    let mut s = Session::open(cli)?;
    let mut doc = config_document(&s.project);
    for assignment in set {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::new("usage", format!("expected KEY=VALUE, got {assignment:?}")))?;
        let slot = key
            .split('.')
            .try_fold(&mut doc, |v, part| v.get_mut(part))
            .ok_or_else(|| CliError::new("config", format!("unknown setting {key:?}")))?;
        *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    }
    let bad = |e: serde_json::Error| CliError::new("config", e.to_string());
    s.project.set_pipeline_config(serde_json::from_value(doc["pipeline"].clone()).map_err(bad)?)?;
    s.project
        .set_augmentation_config(serde_json::from_value(doc["augmentation"].clone()).map_err(bad)?)?;
    s.project.set_training_config(serde_json::from_value(doc["training"].clone()).map_err(bad)?)?;
    s.save()?;
    let doc = config_document(&s.project);
    Ok(Output::new(doc.clone(), serde_json::to_string_pretty(&doc)?))
}

fn train(cli: &Cli, args: &TrainArgs) -> Result<Output, CliError> {
    let mut s = Session::open(cli)?;
    let mut cfg = s.project.training_config.clone();
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.l2 {
        cfg.l2_penalty = v;
    }
    s.project.set_training_config(cfg.clone())?;
    let every = (cfg.epochs / 10).max(1);
    let show_progress = cli.format == Format::Text;
    let dataset = s.project.dataset().clone();
    let model = intent::train_with_progress(&dataset, &cfg, |m| {
        if show_progress && (m.epoch % every == 0 || m.epoch == cfg.epochs) {
            eprintln!("epoch {:>4}/{}  loss {:.4}  accuracy {:.3}", m.epoch, cfg.epochs, m.loss, m.accuracy);
        }
    })?;
    let last = model.metrics().last().cloned();
    let labels = model.label_order().to_vec();
    s.project.install_model(model, &dataset);
    s.save()?;
    let (loss, accuracy) = last.map(|m| (m.loss, m.accuracy)).unwrap_or((f64::NAN, 0.0));
    Ok(Output::new(
        json!({
            "epochs": cfg.epochs,
            "final_loss": loss,
            "final_accuracy": accuracy,
            "labels": labels,
            "config": cfg,
        }),
        format!("trained {} epochs: loss {loss:.4}, training accuracy {accuracy:.3}", cfg.epochs),
    ))
}

fn eval(cli: &Cli, split: f64, seed: u64) -> Result<Output, CliError> {
    let project = open(cli)?.project;
    let result = project.evaluate_split(split, seed)?;
    let e = &result.evaluation;
    let correct: usize = (0..e.labels.len()).map(|i| e.confusion[i][i]).sum();
    let mut text = format!(
        "validation accuracy {:.4} ({correct} of {}); trained on {} questions\n",
        e.accuracy, e.total, result.train_size
    );
    text.push_str("confusion (rows: true intent, columns: predicted)\n");
    let _ = write!(text, "{:>6}", "");
    for j in 0..e.labels.len() {
        let _ = write!(text, "{:>5}", j + 1);
    }
    text.push('\n');
    for (i, row) in e.confusion.iter().enumerate() {
        let _ = write!(text, "{:>6}", i + 1);
        for n in row {
            let _ = write!(text, "{n:>5}");
        }
        let _ = writeln!(text, "   {}", e.labels[i]);
    }
    Ok(Output::new(serde_json::to_value(&result)?, text.trim_end()))
}

fn engines_for(cli: &Cli, timeout: Duration) -> Box<dyn classbot::qa::GenerativeClient> {
    generative_client(&cli.generative, timeout)
}

fn response_text(r: &ChatResponse, trace: bool) -> String {
    let mut text = r.answer.text.clone();
    let source = serde_json::to_value(r.source).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    let _ = write!(text, "\n  source: {source}");
    if let Some(i) = &r.intent {
        let _ = write!(text, "  intent: {} ({:.3})", i.name, i.probability);
    }
    if r.stale {
        text.push_str("\n  note: the model is older than the dataset; retrain to pick up changes");
    }
    if trace {
        for rec in &r.trace {
            let stage = serde_json::to_value(rec.stage).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            let _ = write!(
                text,
                "\n  [{stage}] {} -> {}  ({} us)",
                rec.input,
                rec.output,
                rec.elapsed.as_micros()
            );
        }
    }
    text
}

fn response_json(r: &ChatResponse, trace: bool) -> Value {
    let mut v = serde_json::to_value(r.without_timing()).expect("response serializes");
    if !trace {
        v.as_object_mut().expect("object").remove("trace");
    }
    v
}

fn ask(cli: &Cli, question: &str, mode: Option<Mode>, trace: bool, timeout: Duration) -> Result<Output, CliError> {
    let mut s = Session::open(cli)?;
    let client = engines_for(cli, timeout);
    let engines = QaEngines {
        generative: client.as_ref(),
    };
    let r = s.project.answer(question, mode.map(Into::into), engines)?;
    s.project.record_chat_turn();
    s.save()?;
    Ok(Output::new(response_json(&r, trace), response_text(&r, trace)))
}

fn compare(cli: &Cli, question: &str, timeout: Duration) -> Result<Output, CliError> {
    let project = open(cli)?.project;
    let client = engines_for(cli, timeout);
    let c = project.compare(
        question,
        QaEngines {
            generative: client.as_ref(),
        },
    )?;
    let side = |o: &classbot::project::Outcome| match o {
        classbot::project::Outcome::Answer(a) => a.text.clone(),
        classbot::project::Outcome::Error(e) => format!("(failed: {e})"),
    };
    let text = format!(
        "intent: {} ({:.3})\nextractive: {}\ngenerative: {}",
        c.intent.name,
        c.intent.probability,
        side(&c.extractive),
        side(&c.generative)
    );
    Ok(Output::new(serde_json::to_value(&c)?, text))
}

fn chat(cli: &Cli, mode: Option<Mode>, timeout: Duration, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<Output, CliError> {
    let mut s = Session::open(cli)?;
    let client = engines_for(cli, timeout);
    let engines = QaEngines {
        generative: client.as_ref(),
    };
    let mut turns = 0u64;
    let mut line = String::new();
    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        let question = line.trim();
        if question.is_empty() {
            continue;
        }
        if matches!(question, "quit" | "exit") {
            break;
        }
        match s.project.answer(question, mode.map(Into::into), engines) {
            Ok(r) => {
                s.project.record_chat_turn();
                turns += 1;
                match cli.format {
                    Format::Text => writeln!(out, "{}", response_text(&r, false))?,
                    Format::Structured => writeln!(out, "{}", response_json(&r, false))?,
                }
            }
            Err(e) => match cli.format {
                Format::Text => writeln!(out, "error: {e}")?,
                Format::Structured => writeln!(out, "{}", json!({ "error": { "kind": "project", "message": e.to_string() } }))?,
            },
        }
        out.flush()?;
    }
    s.save()?;
    let mut done = Output::new(json!({ "turns": turns }), "");
    // the turns were already printed
    done.text.clear();
    Ok(done)
}

fn steps_text(statuses: &[StepStatus]) -> String {
    let mut text = String::new();
    for st in statuses {
        let mark = if st.completed { "x" } else { " " };
        let state = if st.completed {
            String::new()
        } else if !st.available {
            "  (locked)".into()
        } else if st.unmet.is_empty() {
            "  (ready)".into()
        } else {
            format!("  (needs: {})", st.unmet.join("; "))
        };
        let _ = writeln!(text, "[{mark}] {} {}{state}", st.step, st.name);
    }
    text.trim_end().to_string()
}

fn steps(cli: &Cli, complete: Option<u8>) -> Result<Output, CliError> {
    let project = match complete {
        Some(n) => {
            let mut s = Session::open(cli)?;
            s.project.complete_step(n)?;
            s.save()?;
            s.project
        }
        None => open(cli)?.project,
    };
    let statuses = project.step_status();
    Ok(Output::new(json!({ "steps": statuses }), steps_text(&statuses)))
}

fn serve(cli: &Cli, listen: &str, epoch_delay: Duration, timeout: Duration) -> Result<Output, CliError> {
    let config = classbot_service::ServiceConfig {
        data_root: cli.data_root.clone(),
        translation: cli.translation.clone(),
        generative: cli.generative.clone(),
        client_timeout: timeout,
        epoch_delay,
    };
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(listen).await?;
        eprintln!("listening on http://{}/v1", listener.local_addr()?);
        classbot_service::serve(listener, std::sync::Arc::new(classbot_service::AppState::new(config))).await
    })?;
    Ok(Output::new(json!({}), ""))
}

fn export(cli: &Cli, out: Option<&Path>) -> Result<Output, CliError> {
    let project = open(cli)?.project;
    let ds = project.dataset();
    let files = [
        ("intents.txt", dataset::serialize_intents(ds)),
        ("contexts.txt", dataset::serialize_contexts(ds)),
        ("questions.csv", dataset::serialize_questions(ds)),
    ];
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut written = Vec::new();
            for (name, content) in &files {
                let path = dir.join(name);
                fs::write(&path, content)?;
                written.push(path);
            }
            let text = written.iter().map(|p| format!("wrote {}", p.display())).collect::<Vec<_>>().join("\n");
            Ok(Output::new(json!({ "written": written }), text))
        }
        None => {
            let json = json!({ "intents": files[0].1, "contexts": files[1].1, "questions": files[2].1 });
            let text = files.iter().map(|(n, c)| format!("==> {n} <==\n{c}")).collect::<Vec<_>>().join("\n");
            Ok(Output::new(json, text.trim_end()))
        }
    }
}

fn list(cli: &Cli) -> Result<Output, CliError> {
    let mut names = Vec::new();
    if cli.data_root.is_dir() {
        for entry in fs::read_dir(&cli.data_root)?.flatten() {
            let name = entry.file_name().to_string_lossy().into_owned();
            if classbot_service::valid_project_name(&name) && entry.path().join("manifest.json").is_file() {
                names.push(name);
            }
        }
    }
    names.sort();
    Ok(Output::new(json!({ "projects": names }), names.join("\n")))
}

fn show(cli: &Cli) -> Result<Output, CliError> {
    let loaded = open(cli)?;
    let p = &loaded.project;
    let ds = p.dataset();
    let statuses = p.step_status();
    let json = json!({
        "name": p.name,
        "read_only": loaded.read_only(),
        "issues": loaded.issues,
        "intents": ds.intent_names(),
        "questions": ds.questions.len(),
        "human_questions": ds.human_questions().count(),
        "has_model": p.model().is_some(),
        "stale": p.is_stale(),
        "chat_turns": p.chat_turns(),
        "rules": p.rules().len(),
        "steps": statuses,
    });
    let model = match (p.model().is_some(), p.is_stale()) {
        (false, _) => "none",
        (true, true) => "trained, stale",
        (true, false) => "trained",
    };
    let text = format!(
        "{}\n{} intents, {} questions ({} human), {} rules, model: {model}, {} chat turns\n{}{}",
        p.name,
        ds.intents.len(),
        ds.questions.len(),
        ds.human_questions().count(),
        p.rules().len(),
        p.chat_turns(),
        dataset_counts(p),
        steps_text(&statuses)
    );
    Ok(Output::new(json, text))
}

fn delete(cli: &Cli, yes: bool) -> Result<Output, CliError> {
    let dir = project_dir(cli)?;
    if !yes {
        return Err(CliError::new("usage", "refusing to delete without --yes"));
    }
    let lock = ProjectLock::acquire(dir)?;
    // fails unless the directory really is a project
    load_project(dir)?;
    fs::remove_dir_all(dir)?;
    drop(lock);
    Ok(Output::new(json!({ "deleted": dir }), format!("deleted {}", dir.display())))
}
