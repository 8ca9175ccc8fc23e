//! Seeded generators for property tests in this workspace.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, Intent, LabeledQuestion, Origin, QuestionId};

const NAMES: &[&str] = &[
    "Earth's Water",
    "Weathering and Erosion",
    "rocks, minerals",
    "the \"water\" cycle",
    "Über Wetter",
    "#hashtag topic",
    "model training",
    "data labeling",
    "ça va",
    "x",
];

const WORDS: &[&str] = &[
    "rock", "water", "ice", "river", "Wind", "sand", "érosion", "delta", "CO2", "sea", "the", "a", "of", "\"quoted\"",
    "comma,", "it's", "été", "#tag", "\\slash", "42",
];

fn sentence(rng: &mut ChaCha8Rng, max_words: usize) -> String {
    let n = rng.random_range(1..=max_words);
    (0..n).map(|_| *WORDS.choose(rng).expect("non-empty")).collect::<Vec<_>>().join(" ")
}

fn context(rng: &mut ChaCha8Rng) -> String {
    let lines = rng.random_range(1..=4);
    let mut out: Vec<String> = Vec::new();
    for i in 0..lines {
        if i > 0 && rng.random_bool(0.2) {
            out.push(String::new());
        }
        let mut line = sentence(rng, 12);
        if rng.random_bool(0.15) {
            line.insert(0, '#');
        }
        if rng.random_bool(0.1) {
            line.insert(0, '\\');
        }
        out.push(line);
    }
    out.join("\n").trim().to_string()
}

/// A valid dataset in the canonical form the dataset files round-trip to:
/// ids are `q<row>` and parents point at earlier human rows of the same intent.
pub fn random_dataset(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=5);
    let mut names: Vec<&str> = NAMES.to_vec();
    names.sort_by_key(|_| rng.random::<u32>());
    let intents: Vec<Intent> = names[..k]
        .iter()
        .map(|n| Intent {
            name: n.to_string(),
            context: context(&mut rng),
        })
        .collect();
    let mut questions: Vec<LabeledQuestion> = Vec::new();
    for row in 1..=rng.random_range(0..=25) {
        let humans: Vec<usize> = (0..questions.len()).filter(|&i| questions[i].origin == Origin::Human).collect();
        let mut text = sentence(&mut rng, 8);
        if rng.random_bool(0.05) {
            text.push_str("\nsecond line");
        }
        if rng.random_bool(0.3) {
            text.push('?');
        }
        let q = if !humans.is_empty() && rng.random_bool(0.3) {
            let parent = &questions[*humans.choose(&mut rng).expect("non-empty")];
            LabeledQuestion {
                id: QuestionId::new(format!("q{row}")),
                text,
                intent_name: parent.intent_name.clone(),
                origin: Origin::Synthetic,
                parent_id: Some(parent.id.clone()),
            }
        } else {
            LabeledQuestion {
                id: QuestionId::new(format!("q{row}")),
                text,
                intent_name: intents[rng.random_range(0..k)].name.clone(),
                origin: Origin::Human,
                parent_id: None,
            }
        };
        questions.push(q);
    }
    Dataset::new(intents, questions)
}
