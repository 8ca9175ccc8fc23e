use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

use clap::CommandFactory;
use classbot_cli::Cli;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_classbot");

struct Project {
    _tmp: tempfile::TempDir,
    dir: PathBuf,
}

impl Project {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("earth");
        Self { _tmp: tmp, dir }
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(BIN)
            .arg("--project")
            .arg(&self.dir)
            .args(args)
            .env_remove("CLASSBOT_PROJECT")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    }

    fn json(&self, args: &[&str]) -> Value {
        let mut all = vec!["--format", "structured"];
        all.extend_from_slice(args);
        serde_json::from_str(&self.ok(&all)).unwrap()
    }

    fn trained() -> Self {
        let p = Self::new();
        p.ok(&["init"]);
        p.ok(&["import", "--suite", "earth_science"]);
        p.ok(&["augment"]);
        p.ok(&["rules", "add", "--id", "login", "--keyword", "login", "--response", "Ask your teacher for the class password."]);
        p.ok(&["train", "--epochs", "200", "--seed", "7"]);
        p
    }
}

#[test]
fn training_twice_gives_identical_model_files() {
    let p = Project::trained();
    let first = fs::read(p.dir.join("model.bin")).unwrap();
    p.ok(&["train", "--epochs", "200", "--seed", "7"]);
    assert_eq!(fs::read(p.dir.join("model.bin")).unwrap(), first);
}

#[test]
fn ask_policy_question_with_trace() {
    let p = Project::trained();
    let r = p.json(&["ask", "How do I login?", "--trace"]);
    assert_eq!(r["source"], "policy");
    assert_eq!(r["answer"]["text"], "Ask your teacher for the class password.");
    assert_eq!(r["trace"].as_array().unwrap().len(), 1);
    assert_eq!(r["trace"][0]["stage"], "filter");
    let text = p.ok(&["ask", "How do I login?", "--trace"]);
    assert!(text.starts_with("Ask your teacher for the class password.\n"), "{text}");
    assert!(text.contains("[filter]"));
    // structured output is stable across runs
    assert_eq!(p.ok(&["--format", "structured", "ask", "What is erosion?"]), p.ok(&["--format", "structured", "ask", "What is erosion?"]));
}

#[test]
fn eval_reports_accuracy_and_confusion() {
    let p = Project::trained();
    let e = p.json(&["eval", "--split", "0.8", "--seed", "1"]);
    let ev = &e["evaluation"];
    let accuracy = ev["accuracy"].as_f64().unwrap();
    assert!(accuracy >= 0.8, "{accuracy}");
    // 15 human questions per intent, 12 train and 3 held out, each with its paraphrase
    for row in ev["confusion"].as_array().unwrap() {
        let sum: u64 = row.as_array().unwrap().iter().map(|n| n.as_u64().unwrap()).sum();
        assert_eq!(sum, 6);
    }
    let text = p.ok(&["eval", "--split", "0.8", "--seed", "1"]);
    assert!(text.starts_with(&format!("validation accuracy {accuracy:.4}")), "{text}");
}

#[test]
fn chat_loop_reads_stdin() {
    let p = Project::trained();
    let mut child = Command::new(BIN)
        .args(["--format", "structured", "--project"])
        .arg(&p.dir)
        .arg("chat")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"How do I login?\n\nWhy is ocean water salty?\nquit\nnever asked\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3, "{lines:?}");
    assert_eq!(lines[0]["source"], "policy");
    assert_eq!(lines[1]["intent"]["name"], "Earth's Water");
    assert_eq!(lines[2]["turns"], 2);
    assert_eq!(p.json(&["show"])["chat_turns"], 2);
}

#[test]
fn steps_follow_the_gates() {
    let p = Project::new();
    p.ok(&["init"]);
    let s = p.json(&["steps"]);
    let available: Vec<bool> = s["steps"].as_array().unwrap().iter().map(|s| s["available"].as_bool().unwrap()).collect();
    assert_eq!(available, [true, false, false, false, false, false, false]);
    let out = p.run(&["steps", "--complete", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 2 intents"));

    p.ok(&["import", "--suite", "earth_science"]);
    for n in 1..=3 {
        p.ok(&["steps", "--complete", &n.to_string()]);
    }
    let out = p.run(&["--format", "structured", "steps", "--complete", "4"]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "step");
    p.ok(&["train", "--epochs", "5"]);
    p.ok(&["steps", "--complete", "4"]);
}

#[test]
fn export_then_import_round_trips() {
    let p = Project::trained();
    let out = p._tmp.path().join("files");
    p.ok(&["export", "--out", out.to_str().unwrap()]);
    let q = Project::new();
    q.ok(&["init"]);
    q.ok(&["import", "--dir", out.to_str().unwrap()]);
    assert_eq!(p.ok(&["export"]), q.ok(&["export"]));

    // single-file replacement, including a bad label
    let bad = p._tmp.path().join("bad.csv");
    fs::write(&bad, "question,intent\nWhat is a delta?,Rivers\n").unwrap();
    let r = q.run(&["import", "--questions", bad.to_str().unwrap()]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("Rivers"));
    let good = p._tmp.path().join("good.csv");
    fs::write(&good, "question,intent\nWhat is a delta?,Earth's Water\nWhat is a plate?,Patterns in Earth's Features\n").unwrap();
    let r = q.json(&["import", "--questions", good.to_str().unwrap()]);
    assert_eq!(r["questions"], 2);
    assert_eq!(r["stale"], false);
}

#[test]
fn config_and_rules_edits() {
    let p = Project::new();
    p.ok(&["init"]);
    let c = p.json(&["config", "--set", "training.epochs=12", "--set", "pipeline.qa_mode=generative"]);
    assert_eq!(c["training"]["epochs"], 12);
    assert_eq!(c["pipeline"]["qa_mode"], "generative");
    assert!(!p.run(&["config", "--set", "training.epoch=3"]).status.success());
    assert!(!p.run(&["config", "--set", "training.learning_rate=0"]).status.success());
    assert_eq!(p.json(&["config"])["training"]["epochs"], 12);

    p.ok(&["rules", "add", "--id", "grades", "--keyword", "grade", "--keyword", "score", "--response", "Ask your teacher.", "--all"]);
    let rules = p.json(&["rules"]);
    assert_eq!(rules["rules"][0]["match_mode"], "all");
    assert!(!p.run(&["rules", "add", "--id", "grades", "--keyword", "x", "--response", "dup"]).status.success());
    p.ok(&["rules", "remove", "--id", "grades"]);
    assert_eq!(p.json(&["rules", "list"])["rules"], Value::Array(vec![]));
}

#[test]
fn locked_and_read_only_projects_refuse_writes() {
    let p = Project::trained();
    let lock = classbot::project::ProjectLock::acquire(&p.dir).unwrap();
    let r = p.run(&["import", "--suite", "machine_learning"]);
    assert!(String::from_utf8_lossy(&r.stderr).contains("locked"), "{}", String::from_utf8_lossy(&r.stderr));
    // reads do not need the lock
    p.ok(&["show"]);
    drop(lock);

    let manifest = p.dir.join("manifest.json");
    let mut m: Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    m["steps"] = serde_json::json!([1, 3]);
    fs::write(&manifest, m.to_string()).unwrap();
    let r = p.run(&["import", "--suite", "machine_learning"]);
    assert!(String::from_utf8_lossy(&r.stderr).contains("read-only"));
    let v = p.run(&["validate"]);
    assert_eq!(v.status.code(), Some(1));
    assert_eq!(p.json(&["show"])["read_only"], true);
}

#[test]
fn usage_errors() {
    let p = Project::new();
    assert_eq!(p.run(&["train", "--epoks", "3"]).status.code(), Some(2));
    assert!(!p.run(&["show"]).status.success());
    p.ok(&["init"]);
    assert!(!p.run(&["init"]).status.success());
    assert!(!p.run(&["delete"]).status.success());
    p.ok(&["delete", "--yes"]);
    assert!(!p.dir.exists());
}

#[test]
fn list_projects_under_data_root() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["b", "a"] {
        let dir = tmp.path().join(name);
        let out = Command::new(BIN).arg("--project").arg(&dir).arg("init").output().unwrap();
        assert!(out.status.success());
    }
    fs::create_dir(tmp.path().join("not-a-project")).unwrap();
    let out = Command::new(BIN)
        .args(["--format", "structured", "--data-root"])
        .arg(tmp.path())
        .arg("list")
        .output()
        .unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["projects"], serde_json::json!(["a", "b"]));
}

/// `chat` is the interactive form of `ask` and has no separate endpoint.
const CLI_ONLY: &[&str] = &["chat"];

#[test]
fn every_endpoint_has_a_cli_counterpart() {
    let cmd = Cli::command();
    let names: Vec<String> = cmd.get_subcommands().map(|c| c.get_name().to_string()).collect();
    for r in classbot_service::ROUTES {
        assert!(names.iter().any(|n| n == r.cli), "{} {} -> missing `{}`", r.method, r.path, r.cli);
    }
    for n in &names {
        assert!(
            classbot_service::ROUTES.iter().any(|r| r.cli == n) || CLI_ONLY.contains(&n.as_str()),
            "command `{n}` has no endpoint"
        );
    }
}
