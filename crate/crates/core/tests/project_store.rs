use std::fs;
use std::path::Path;

use classbot::dataset::Origin;
use classbot::intent::TrainingConfig;
use classbot::policy::PolicyRule;
use classbot::project::{
    bundled_suite, load_project, load_project_strict, read_suite, save_project, save_project_with_fault, write_bundled_suite,
    Project, ProjectLock, SaveFault, StepError, StoreError, SuiteError,
};
use classbot::testing::random_dataset;
use proptest::prelude::*;

fn fixture_project() -> Project {
    let mut p = Project::new("earth");
    p.import_suite(&bundled_suite("earth_science").unwrap()).unwrap();
    p.add_rule(PolicyRule::new("login", &["login"], "Ask your teacher for the class password."))
        .unwrap();
    p.set_training_config(TrainingConfig {
        epochs: 4,
        seed: 3,
        ..Default::default()
    })
    .unwrap();
    p
}

#[test]
fn save_then_load_is_identity() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("earth");
    let mut p = fixture_project();
    save_project(&p, &dir).unwrap();
    assert_eq!(load_project_strict(&dir).unwrap(), p);

    p.train().unwrap();
    p.complete_step(1).unwrap();
    p.record_chat_turn();
    save_project(&p, &dir).unwrap();
    let loaded = load_project(&dir).unwrap();
    assert!(!loaded.read_only());
    assert_eq!(loaded.project, p);
    for f in ["manifest.json", "intents.txt", "contexts.txt", "questions.csv", "model.bin"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    assert!(!tmp.path().join(".earth.saving").exists());
    assert!(!tmp.path().join(".earth.old").exists());
}

fn edit_manifest(dir: &Path, f: impl FnOnce(&mut serde_json::Value)) {
    let path = dir.join("manifest.json");
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    f(&mut v);
    fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
}

#[test]
fn step_gap_on_disk_opens_read_only() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("p");
    let mut p = fixture_project();
    p.train().unwrap();
    save_project(&p, &dir).unwrap();
    edit_manifest(&dir, |v| v["steps"] = serde_json::json!([1, 2, 3, 5]));
    let loaded = load_project(&dir).unwrap();
    assert!(loaded.read_only());
    assert!(loaded.issues[0].contains("step 5 is completed but step 4 is not"), "{:?}", loaded.issues);
    assert!(matches!(load_project_strict(&dir), Err(StoreError::Invariant(_))));
}

#[test]
fn missing_model_with_step_four_is_invariant_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("p");
    let mut p = fixture_project();
    p.train().unwrap();
    for s in 1..=4 {
        p.complete_step(s).unwrap();
    }
    save_project(&p, &dir).unwrap();
    fs::remove_file(dir.join("model.bin")).unwrap();
    let err = load_project_strict(&dir).unwrap_err();
    assert!(err.to_string().contains("no model"), "{err}");
}

#[test]
fn version_mismatch_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("p");
    save_project(&fixture_project(), &dir).unwrap();
    edit_manifest(&dir, |v| v["format_version"] = serde_json::json!(9));
    assert!(matches!(
        load_project(&dir),
        Err(StoreError::UnsupportedVersion { found: 9, expected: 1 })
    ));
}

#[test]
fn empty_project_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("empty");
    let p = Project::new("empty");
    save_project(&p, &dir).unwrap();
    assert_eq!(load_project_strict(&dir).unwrap(), p);
}

#[test]
fn not_a_project() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(load_project(tmp.path()), Err(StoreError::NotAProject(_))));
}

#[test]
fn interrupted_saves_yield_old_or_new() {
    let old = fixture_project();
    let mut new = old.clone();
    new.add_question("What is a glacier made of?", "Earth's Water").unwrap();
    new.train().unwrap();
    for (fault, expect_new) in [
        (SaveFault::AfterStaging, false),
        (SaveFault::AfterRetire, true),
        (SaveFault::AfterSwap, true),
    ] {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("p");
        save_project(&old, &dir).unwrap();
        save_project_with_fault(&new, &dir, fault).unwrap();
        let loaded = load_project_strict(&dir).unwrap();
        let expected = if expect_new { &new } else { &old };
        assert_eq!(&loaded, expected, "{fault:?}");
        // recovery leaves no debris and the next save works
        assert!(!tmp.path().join(".p.saving").exists(), "{fault:?}");
        assert!(!tmp.path().join(".p.old").exists(), "{fault:?}");
        save_project(&new, &dir).unwrap();
        assert_eq!(load_project_strict(&dir).unwrap(), new);
    }
}

#[test]
fn interrupted_first_save_of_new_project() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("p");
    save_project_with_fault(&fixture_project(), &dir, SaveFault::AfterStaging).unwrap();
    // the staged copy is complete, so it is promoted
    assert_eq!(load_project_strict(&dir).unwrap(), fixture_project());
}

#[test]
fn second_writer_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("p");
    let lock = ProjectLock::acquire(&dir).unwrap();
    assert!(matches!(save_project(&fixture_project(), &dir), Err(StoreError::Locked(_))));
    drop(lock);
    save_project(&fixture_project(), &dir).unwrap();
}

#[test]
fn import_suite_from_directory() {
    let tmp = tempfile::tempdir().unwrap();
    write_bundled_suite("earth_science", tmp.path()).unwrap();
    let ds = read_suite(tmp.path()).unwrap();
    assert_eq!(ds.intents.len(), 5);
    assert_eq!(ds.questions.len(), 75);
    assert!(classbot::dataset::validate(&ds).is_empty());

    // the classroom file names work too
    let sample = tempfile::tempdir().unwrap();
    for (from, to) in [
        ("intents.txt", "sampleIntents.txt"),
        ("contexts.txt", "sampleContexts.txt"),
        ("questions.csv", "sampleQuestions.csv"),
    ] {
        fs::copy(tmp.path().join(from), sample.path().join(to)).unwrap();
    }
    assert_eq!(read_suite(sample.path()).unwrap(), ds);

    fs::remove_file(tmp.path().join("questions.csv")).unwrap();
    let err = read_suite(tmp.path()).unwrap_err();
    assert!(matches!(err, SuiteError::MissingFile { kind: "questions", .. }), "{err}");
}

#[test]
fn import_marks_model_stale_and_step_one_is_open() {
    let mut p = fixture_project();
    p.train().unwrap();
    assert!(!p.is_stale());
    p.import_suite(&bundled_suite("machine_learning").unwrap()).unwrap();
    assert!(p.is_stale());
    p.complete_step(1).unwrap();
}

#[test]
fn invalid_suite_reports_every_problem() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("intents.txt"), "a\nb\n").unwrap();
    fs::write(tmp.path().join("contexts.txt"), "# a\ntext\n").unwrap();
    fs::write(tmp.path().join("questions.csv"), "question,intent\nq1,c\n").unwrap();
    match read_suite(tmp.path()).unwrap_err() {
        SuiteError::Parse(errors) => assert_eq!(errors.len(), 2),
        other => panic!("{other}"),
    }
}

#[derive(Debug, Clone)]
enum Op {
    Complete(u8),
    Train,
    AddQuestion,
    Chat,
    EditContexts,
    Import,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (1u8..=8).prop_map(Op::Complete),
        1 => Just(Op::Train),
        1 => Just(Op::AddQuestion),
        1 => Just(Op::Chat),
        1 => Just(Op::EditContexts),
        1 => Just(Op::Import),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn steps_stay_a_prefix(ops in prop::collection::vec(op(), 1..30)) {
        let mut p = Project::new("m");
        p.set_training_config(TrainingConfig { epochs: 1, ..Default::default() }).unwrap();
        for op in ops {
            let before = p.steps().clone();
            match op {
                Op::Complete(n) => {
                    let r = p.complete_step(n);
                    if let Err(StepError::PreviousIncomplete { .. } | StepError::OutOfRange(_) | StepError::Gate { .. }) = r {
                        prop_assert_eq!(p.steps(), &before);
                    }
                }
                Op::Train => { let _ = p.train(); }
                Op::AddQuestion => {
                    if let Some(name) = p.dataset().intent_names().first().cloned() {
                        p.add_question("Why is the sky blue today?", &name).unwrap();
                    }
                }
                Op::Chat => p.record_chat_turn(),
                Op::EditContexts if !p.dataset().intents.is_empty() => {
                    let contexts = p.dataset().intents.iter().map(|i| (i.name.clone(), "Replaced.".to_string())).collect();
                    p.set_contexts(contexts).unwrap();
                }
                Op::EditContexts => {}
                Op::Import => p.import_suite(&bundled_suite("machine_learning").unwrap()).unwrap(),
            }
            let steps: Vec<u8> = p.steps().iter().copied().collect();
            let prefix: Vec<u8> = (1..=steps.len() as u8).collect();
            prop_assert_eq!(&steps, &prefix);
            prop_assert!(p.invariant_violations().is_empty());
            prop_assert!(before.is_subset(p.steps()));
        }
    }

    #[test]
    fn random_projects_round_trip(seed in any::<u64>(), steps in 0u8..=3, turns in 0u64..5, rules in 0usize..3) {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("r");
        let ds = random_dataset(seed);
        let mut p = Project::new(format!("project {seed}"));
        p.set_dataset(&ds).unwrap();
        for i in 0..rules {
            p.add_rule(PolicyRule::new(format!("r{i}"), &["grade", "score"], format!("response {i}"))).unwrap();
        }
        let trainable = ds.intents.len() >= 2
            && ds.counts_per_intent().iter().all(|(_, n)| *n > 0)
            && ds.questions.iter().any(|q| q.origin == Origin::Human);
        if trainable && p.train().is_ok() && steps > 0 {
            for s in 1..=steps {
                let _ = p.complete_step(s);
            }
        }
        for _ in 0..turns {
            p.record_chat_turn();
        }
        save_project(&p, &dir).unwrap();
        prop_assert_eq!(load_project_strict(&dir).unwrap(), p);
    }
}
