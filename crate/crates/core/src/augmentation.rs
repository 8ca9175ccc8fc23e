//! Label-preserving paraphrases by round-trip translation.
//!
//! A human question is translated into a pivot language and back; the result
//! joins the dataset as a synthetic question linked to its parent. Synthetic
//! questions are never used as inputs.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clients::ClientError;
use crate::dataset::{self, Dataset, Origin, QuestionId, ValidationReport};
use crate::text;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationConfig {
    pub source_language: String,
    pub pivot_language: String,
    pub rounds_per_question: usize,
    pub max_synthetic_per_question: usize,
    pub dedup: bool,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            source_language: "en".into(),
            pivot_language: "fr".into(),
            rounds_per_question: 1,
            max_synthetic_per_question: 3,
            dedup: true,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn check(&self) -> Result<(), AugmentError> {
        let bad = |m: &str| Err(AugmentError::InvalidConfig(m.to_string()));
        if self.rounds_per_question == 0 {
            return bad("rounds_per_question must be positive");
        }
        if self.max_synthetic_per_question == 0 {
            return bad("max_synthetic_per_question must be positive");
        }
        if self.rounds_per_question > self.max_synthetic_per_question {
            return bad("rounds_per_question may not exceed max_synthetic_per_question");
        }
        if self.source_language.trim().is_empty() || self.pivot_language.trim().is_empty() {
            return bad("language codes must be non-empty");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationRequest {
    pub text: String,
    pub source: String,
    pub target: String,
    /// Sampling seed for clients that choose among several translations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

pub trait TranslationClient: Send + Sync {
    fn translate(&self, request: &TranslationRequest) -> Result<String, ClientError>;

    /// Supported `(source, target)` pairs, or `None` when any pair may be tried.
    fn language_pairs(&self) -> Option<Vec<(String, String)>>;

    fn supports(&self, source: &str, target: &str) -> bool {
        match self.language_pairs() {
            None => true,
            Some(pairs) => pairs.iter().any(|(s, t)| s == source && t == target),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("dataset must be valid before augmentation:\n{0}")]
    InvalidDataset(ValidationReport),
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
    #[error("cannot backtranslate: text is empty")]
    EmptyInput,
    #[error("translator does not support {from} -> {to}")]
    UnsupportedPair { from: String, to: String },
    #[error("backtranslation {language} -> {pivot} -> {language} failed: {error}")]
    Client {
        language: String,
        pivot: String,
        error: ClientError,
        /// Counts for the questions processed before the failure.
        partial: Box<AugmentationReport>,
    },
}

/// Translates `text` from `source` to `pivot` and back, normalizing whitespace.
pub fn backtranslate(text: &str, client: &dyn TranslationClient, source: &str, pivot: &str) -> Result<String, AugmentError> {
    backtranslate_seeded(text, client, source, pivot, None)
}

fn backtranslate_seeded(
    text: &str,
    client: &dyn TranslationClient,
    source: &str,
    pivot: &str,
    seed: Option<u64>,
) -> Result<String, AugmentError> {
    if text.trim().is_empty() {
        return Err(AugmentError::EmptyInput);
    }
    for (s, t) in [(source, pivot), (pivot, source)] {
        if !client.supports(s, t) {
            return Err(AugmentError::UnsupportedPair {
                from: s.to_string(),
                to: t.to_string(),
            });
        }
    }
    let wrap = |error| AugmentError::Client {
        language: source.to_string(),
        pivot: pivot.to_string(),
        error,
        partial: Box::default(),
    };
    let there = client
        .translate(&TranslationRequest {
            text: text.to_string(),
            source: source.to_string(),
            target: pivot.to_string(),
            seed,
        })
        .map_err(wrap)?;
    let back = client
        .translate(&TranslationRequest {
            text: there,
            source: pivot.to_string(),
            target: source.to_string(),
            seed,
        })
        .map_err(wrap)?;
    Ok(text::normalize_whitespace(&back))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentAugmentation {
    pub intent: String,
    pub generated: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationReport {
    pub per_intent: Vec<IntentAugmentation>,
}

impl AugmentationReport {
    fn for_dataset(dataset: &Dataset) -> Self {
        Self {
            per_intent: dataset
                .intents
                .iter()
                .map(|i| IntentAugmentation {
                    intent: i.name.clone(),
                    ..Default::default()
                })
                .collect(),
        }
    }

    fn entry(&mut self, intent: &str) -> &mut IntentAugmentation {
        self.per_intent
            .iter_mut()
            .find(|e| e.intent == intent)
            .expect("intent of a validated dataset")
    }

    pub fn generated(&self) -> usize {
        self.per_intent.iter().map(|e| e.generated).sum()
    }

    pub fn dropped(&self) -> usize {
        self.per_intent.iter().map(|e| e.dropped).sum()
    }
}

/// Appends backtranslated paraphrases of every human question.
///
/// Each parent gets up to `rounds_per_question` new candidates, limited so it
/// never has more than `max_synthetic_per_question` synthetic children in
/// total. With `dedup`, a candidate whose [`text::question_key`] matches any
/// question already present (including ones added earlier in this run) is
/// dropped. Client calls run in parallel; results are applied in dataset order.
pub fn augment_dataset(
    dataset: &Dataset,
    config: &AugmentationConfig,
    client: &dyn TranslationClient,
) -> Result<(Dataset, AugmentationReport), AugmentError> {
    config.check()?;
    let report = dataset::validate(dataset);
    if !report.is_empty() {
        return Err(AugmentError::InvalidDataset(report));
    }
    let (source, pivot) = (config.source_language.as_str(), config.pivot_language.as_str());
    for (s, t) in [(source, pivot), (pivot, source)] {
        if !client.supports(s, t) {
            return Err(AugmentError::UnsupportedPair {
                from: s.to_string(),
                to: t.to_string(),
            });
        }
    }

    let mut children: HashMap<&QuestionId, usize> = HashMap::new();
    for q in &dataset.questions {
        if let (Origin::Synthetic, Some(p)) = (q.origin, &q.parent_id) {
            *children.entry(p).or_default() += 1;
        }
    }
    struct Job<'a> {
        parent: &'a QuestionId,
        intent: &'a str,
        text: &'a str,
        seed: u64,
    }
    let mut jobs = Vec::new();
    for (index, q) in dataset.questions.iter().enumerate() {
        if q.origin != Origin::Human {
            continue;
        }
        let existing = children.get(&q.id).copied().unwrap_or(0);
        let room = config.max_synthetic_per_question.saturating_sub(existing);
        for round in 0..config.rounds_per_question.min(room) {
            jobs.push(Job {
                parent: &q.id,
                intent: &q.intent_name,
                text: &q.text,
                seed: job_seed(config.seed, index as u64, round as u64),
            });
        }
    }

    let candidates: Vec<Result<String, AugmentError>> = jobs
        .par_iter()
        .map(|job| backtranslate_seeded(job.text, client, source, pivot, Some(job.seed)))
        .collect();

    let mut out = dataset.clone();
    let mut report = AugmentationReport::for_dataset(dataset);
    let mut seen: HashSet<String> = dataset.questions.iter().map(|q| text::question_key(&q.text)).collect();
    for (job, candidate) in jobs.iter().zip(candidates) {
        let candidate = match candidate {
            Ok(c) => c,
            Err(AugmentError::Client { language, pivot, error, .. }) => {
                return Err(AugmentError::Client {
                    language,
                    pivot,
                    error,
                    partial: Box::new(report),
                })
            }
            Err(other) => return Err(other),
        };
        let key = text::question_key(&candidate);
        if candidate.is_empty() || (config.dedup && seen.contains(&key)) {
            report.entry(job.intent).dropped += 1;
            continue;
        }
        seen.insert(key);
        out.push_synthetic(candidate, job.parent).expect("parent exists");
        report.entry(job.intent).generated += 1;
    }
    tracing::info!(generated = report.generated(), dropped = report.dropped(), "augmentation finished");
    Ok((out, report))
}

fn job_seed(seed: u64, question: u64, round: u64) -> u64 {
    splitmix(splitmix(seed ^ splitmix(question)) ^ round)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------------
// Offline translators

/// Returns its input unchanged for every language pair.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslator;

impl TranslationClient for IdentityTranslator {
    fn translate(&self, request: &TranslationRequest) -> Result<String, ClientError> {
        Ok(request.text.clone())
    }

    fn language_pairs(&self) -> Option<Vec<(String, String)>> {
        None
    }
}

/// Word-for-word English ↔ French translator driven by [`DICTIONARY`].
///
/// English words found in the table become their French entry; on the way
/// back a French entry becomes one of its English alternatives (the first
/// when no seed is given, otherwise one picked from the seed and the word
/// position). Unknown words and punctuation pass through untouched, and an
/// initial capital is carried over.
#[derive(Debug, Clone)]
pub struct DictionaryTranslator {
    forward: HashMap<&'static str, &'static str>,
    backward: HashMap<&'static str, &'static [&'static str]>,
}

/// `(english, french, english alternatives for the way back)`.
pub const DICTIONARY: &[(&str, &str, &[&str])] = &[
    ("what", "que", &["what"]),
    ("rain", "pluie", &["rain"]),
    ("causes", "provoque", &["makes", "produces"]),
    ("cause", "provoquer", &["make", "produce"]),
    ("how", "comment", &["in what way", "by what means"]),
    ("why", "pourquoi", &["for what reason", "how come"]),
    ("where", "où", &["in what place", "at what location"]),
    ("form", "former", &["take shape", "develop"]),
    ("made", "fabriqué", &["built", "created"]),
    ("happen", "arriver", &["occur", "take place"]),
    ("happens", "arrive", &["occurs", "takes place"]),
    ("show", "montrer", &["display", "present"]),
    ("change", "changer", &["alter", "transform"]),
    ("changes", "modifie", &["alters", "shifts"]),
    ("break", "casser", &["crack", "split"]),
    ("move", "déplacer", &["shift", "carry"]),
    ("help", "aider", &["assist", "support"]),
    ("protect", "protéger", &["guard", "defend"]),
    ("affect", "affecter", &["influence", "impact"]),
    ("harm", "nuire", &["damage", "hurt"]),
    ("reduce", "réduire", &["lower", "cut"]),
    ("use", "utiliser", &["employ", "apply"]),
    ("found", "trouvé", &["located", "situated"]),
    ("find", "trouver", &["discover", "locate"]),
    ("depend", "dépendre", &["rely", "count"]),
    ("interact", "interagir", &["work together", "connect"]),
    ("difference", "différence", &["distinction", "contrast"]),
    ("major", "majeur", &["main", "principal"]),
    ("land", "terrain", &["ground", "terrain"]),
    ("rocks", "roches", &["stones", "boulders"]),
    ("rock", "roche", &["stone"]),
    ("stone", "pierre", &["rock"]),
    ("people", "gens", &["humans", "persons"]),
    ("students", "élèves", &["pupils", "learners"]),
    ("ocean", "océan", &["sea"]),
    ("oceans", "océans", &["seas"]),
    ("salty", "salé", &["salted", "briny"]),
    ("clean", "propre", &["tidy", "spotless"]),
    ("keep", "garder", &["maintain", "hold"]),
    ("important", "important", &["significant", "essential"]),
    ("pollute", "polluer", &["contaminate", "dirty"]),
    ("pollution", "pollution", &["contamination"]),
    ("conserve", "conserver", &["save", "preserve"]),
    ("conservation", "conservation", &["protection", "preservation"]),
    ("environment", "environnement", &["surroundings", "natural world"]),
    ("resources", "ressources", &["supplies", "assets"]),
    ("scientists", "scientifiques", &["researchers", "experts"]),
    ("living", "vivant", &["live", "alive"]),
    ("animals", "animaux", &["creatures", "wildlife"]),
    ("plants", "plantes", &["vegetation", "greenery"]),
    ("mountains", "montagnes", &["peaks", "summits"]),
    ("earthquakes", "séismes", &["quakes", "tremors"]),
    ("earthquake", "séisme", &["quake", "tremor"]),
    ("map", "carte", &["chart", "plan"]),
    ("height", "hauteur", &["elevation", "altitude"]),
    ("covered", "couvert", &["coated", "blanketed"]),
    ("frozen", "gelé", &["iced", "locked in ice"]),
    ("smooth", "lisse", &["sleek", "polished"]),
    ("carve", "sculpter", &["cut", "shape"]),
    ("wind", "vent", &["breeze", "moving air"]),
    ("beach", "plage", &["shore", "coast"]),
    ("trash", "déchets", &["garbage", "waste"]),
    ("fuel", "carburant", &["gasoline", "fuels"]),
    ("forests", "forêts", &["woods", "woodlands"]),
    ("farming", "agriculture", &["agriculture", "cultivation"]),
    ("cities", "villes", &["towns", "urban areas"]),
    ("communities", "communautés", &["neighborhoods", "towns"]),
    ("storm", "tempête", &["tempest", "storm system"]),
    ("soil", "terreau", &["dirt", "earth"]),
    ("organisms", "organismes", &["creatures", "life forms"]),
    ("connect", "relier", &["link", "join"]),
    ("spheres", "sphères", &["systems", "layers"]),
    ("sphere", "sphère", &["system", "layer"]),
    ("look", "regarder", &["appear", "seem"]),
    ("evaporate", "évaporer", &["vaporize", "turn to gas"]),
    ("clouds", "nuages", &["cloud formations", "mists"]),
    ("rivers", "rivières", &["streams", "waterways"]),
    ("stream", "ruisseau", &["creek", "brook"]),
    ("percent", "pourcentage", &["percentage", "share"]),
    ("waves", "vagues", &["breakers", "surf"]),
    ("roots", "racines", &["root systems", "rootlets"]),
    ("renewable", "renouvelable", &["replaceable", "sustainable"]),
    ("landform", "relief", &["land feature", "surface feature"]),
    ("landforms", "reliefs", &["land features", "surface features"]),
    ("tectonic", "tectonique", &["crustal"]),
    ("plates", "plaques", &["slabs", "sections"]),
    ("groundwater", "nappe", &["underground water", "water below ground"]),
    ("cycle", "cycle", &["loop", "circuit"]),
    ("aquifer", "aquifère", &["underground water layer", "water-bearing rock layer"]),
    ("weathering", "altération", &["rock breakdown", "wearing away"]),
    ("deposition", "dépôt", &["settling", "laying down"]),
    ("delta", "delta", &["river mouth deposit", "fan of sediment"]),
    ("sediment", "sédiment", &["silt", "loose material"]),
    ("geosphere", "géosphère", &["solid earth", "rocky part of the earth"]),
    ("biosphere", "biosphère", &["living world", "life zone"]),
    ("atmosphere", "atmosphère", &["air layer", "sky"]),
    ("hydrosphere", "hydrosphère", &["water system", "water layer"]),
    ("recycling", "recyclage", &["reuse", "reprocessing"]),
];

impl DictionaryTranslator {
    pub const SOURCE: &'static str = "en";
    pub const PIVOT: &'static str = "fr";

    pub fn new() -> Self {
        Self {
            forward: DICTIONARY.iter().map(|&(en, fr, _)| (en, fr)).collect(),
            backward: DICTIONARY.iter().map(|&(_, fr, alts)| (fr, alts)).collect(),
        }
    }

    fn map_words(&self, text: &str, lookup: impl Fn(&str, usize) -> Option<String>) -> String {
        let mut out = String::with_capacity(text.len());
        let mut last = 0;
        for (position, span) in text::tokenize_with_offsets(text).into_iter().enumerate() {
            out.push_str(&text[last..span.start]);
            let original = &text[span.start..span.end];
            match lookup(&span.token, position) {
                Some(replacement) => {
                    let capitalized = original.chars().next().is_some_and(char::is_uppercase);
                    out.push_str(&if capitalized { capitalize(&replacement) } else { replacement });
                }
                None => out.push_str(original),
            }
            last = span.end;
        }
        out.push_str(&text[last..]);
        out
    }
}

impl Default for DictionaryTranslator {
    fn default() -> Self {
        Self::new()
    }
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

impl TranslationClient for DictionaryTranslator {
    fn translate(&self, request: &TranslationRequest) -> Result<String, ClientError> {
        if request.text.trim().is_empty() {
            return Err(ClientError::EmptyInput);
        }
        match (request.source.as_str(), request.target.as_str()) {
            (Self::SOURCE, Self::PIVOT) => Ok(self.map_words(&request.text, |w, _| self.forward.get(w).map(|s| s.to_string()))),
            (Self::PIVOT, Self::SOURCE) => Ok(self.map_words(&request.text, |w, position| {
                self.backward.get(w).map(|alts| {
                    let pick = match request.seed {
                        None => 0,
                        Some(seed) => (splitmix(seed ^ position as u64) % alts.len() as u64) as usize,
                    };
                    alts[pick].to_string()
                })
            })),
            (s, t) => Err(ClientError::UnsupportedPair {
                from: s.to_string(),
                to: t.to_string(),
            }),
        }
    }

    fn language_pairs(&self) -> Option<Vec<(String, String)>> {
        Some(vec![
            (Self::SOURCE.into(), Self::PIVOT.into()),
            (Self::PIVOT.into(), Self::SOURCE.into()),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Intent;

    fn sample() -> Dataset {
        let mut ds = Dataset::new(
            vec![
                Intent {
                    name: "Earth's Water".into(),
                    context: "Water covers most of Earth.".into(),
                },
                Intent {
                    name: "Weathering and Erosion".into(),
                    context: "Wind and water wear rock down.".into(),
                },
            ],
            vec![],
        );
        ds.push_human("What causes rain?", "Earth's Water");
        ds.push_human("Where do rivers get their water?", "Earth's Water");
        ds.push_human("How does wind move sand?", "Weathering and Erosion");
        ds
    }

    #[test]
    fn identity_round_trip() {
        assert_eq!(backtranslate("what is erosion", &IdentityTranslator, "en", "fr").unwrap(), "what is erosion");
    }

    #[test]
    fn dictionary_round_trip() {
        let stub = DictionaryTranslator::new();
        assert_eq!(backtranslate("what causes rain", &stub, "en", "fr").unwrap(), "what makes rain");
        assert_eq!(
            backtranslate("How do  rivers carve canyons?", &stub, "en", "fr").unwrap(),
            "In what way do streams cut canyons?"
        );
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(backtranslate("  ", &IdentityTranslator, "en", "fr"), Err(AugmentError::EmptyInput)));
    }

    #[test]
    fn unsupported_pivot_rejected() {
        let err = backtranslate("what causes rain", &DictionaryTranslator::new(), "en", "de").unwrap_err();
        assert!(matches!(err, AugmentError::UnsupportedPair { .. }), "{err}");
    }

    #[test]
    fn dictionary_keys_are_unique_and_never_echo_the_source() {
        let mut en = HashSet::new();
        let mut fr = HashSet::new();
        for &(e, f, alts) in DICTIONARY {
            assert!(en.insert(e), "duplicate english {e}");
            assert!(fr.insert(f), "duplicate french {f}");
            assert!(!alts.is_empty());
            // identity entries have exactly one alternative: themselves
            assert!(alts.len() == 1 && alts[0] == e || !alts.contains(&e), "{e}");
            assert_eq!(text::tokenize(e), vec![e.to_string()]);
            assert_eq!(text::tokenize(f).len(), 1);
        }
    }

    #[test]
    fn identity_stub_dedups_everything() {
        let ds = sample();
        let (out, report) = augment_dataset(&ds, &AugmentationConfig::default(), &IdentityTranslator).unwrap();
        assert_eq!(out, ds);
        assert_eq!(report.generated(), 0);
        assert_eq!(report.dropped(), 3);
    }

    #[test]
    fn identity_stub_without_dedup_adds_flagged_duplicates() {
        let ds = sample();
        let cfg = AugmentationConfig {
            dedup: false,
            ..Default::default()
        };
        let (out, report) = augment_dataset(&ds, &cfg, &IdentityTranslator).unwrap();
        assert_eq!(report.generated(), 3);
        assert_eq!(out.questions.len(), 6);
        assert_eq!(dataset::lint(&out).len(), 3);
        assert!(dataset::validate(&out).is_empty());
    }

    #[test]
    fn dictionary_stub_adds_one_per_question() {
        let ds = sample();
        let (out, report) = augment_dataset(&ds, &AugmentationConfig::default(), &DictionaryTranslator::new()).unwrap();
        assert_eq!(report.generated(), 3);
        assert_eq!(
            report.per_intent,
            vec![
                IntentAugmentation {
                    intent: "Earth's Water".into(),
                    generated: 2,
                    dropped: 0
                },
                IntentAugmentation {
                    intent: "Weathering and Erosion".into(),
                    generated: 1,
                    dropped: 0
                },
            ]
        );
        assert_eq!(&out.questions[..3], &ds.questions[..]);
        for q in &out.questions[3..] {
            let parent = out.question(q.parent_id.as_ref().unwrap()).unwrap();
            assert_eq!(q.intent_name, parent.intent_name);
            assert_eq!(q.origin, Origin::Synthetic);
        }
        assert!(dataset::validate(&out).is_empty());
    }

    #[test]
    fn cap_counts_existing_children() {
        let ds = sample();
        let cfg = AugmentationConfig {
            rounds_per_question: 2,
            max_synthetic_per_question: 2,
            dedup: false,
            ..Default::default()
        };
        let stub = DictionaryTranslator::new();
        let (once, _) = augment_dataset(&ds, &cfg, &stub).unwrap();
        let (twice, report) = augment_dataset(&once, &cfg, &stub).unwrap();
        assert_eq!(report.generated(), 0);
        assert_eq!(twice, once);
        assert_eq!(once.questions.len(), 3 + 6);
    }

    #[test]
    fn config_validation() {
        let cfg = AugmentationConfig {
            rounds_per_question: 4,
            max_synthetic_per_question: 2,
            ..Default::default()
        };
        assert!(matches!(augment_dataset(&sample(), &cfg, &IdentityTranslator), Err(AugmentError::InvalidConfig(_))));
    }

    #[test]
    fn invalid_dataset_rejected() {
        let mut ds = sample();
        ds.questions[0].intent_name = "nope".into();
        assert!(matches!(
            augment_dataset(&ds, &AugmentationConfig::default(), &IdentityTranslator),
            Err(AugmentError::InvalidDataset(_))
        ));
    }

    struct FailsAfter(usize, std::sync::atomic::AtomicUsize);

    impl TranslationClient for FailsAfter {
        fn translate(&self, request: &TranslationRequest) -> Result<String, ClientError> {
            // fail on the parent with the given text index, whatever the call order
            if request.text.contains("wind") || request.text.contains("vent") {
                self.1.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                return Err(ClientError::Transport {
                    url: "http://mt".into(),
                    message: "connection reset".into(),
                });
            }
            let _ = self.0;
            Ok(format!("{} indeed", request.text))
        }

        fn language_pairs(&self) -> Option<Vec<(String, String)>> {
            None
        }
    }

    #[test]
    fn client_failure_reports_partial_progress() {
        let client = FailsAfter(0, Default::default());
        let err = augment_dataset(&sample(), &AugmentationConfig::default(), &client).unwrap_err();
        match err {
            AugmentError::Client { partial, error, .. } => {
                assert!(matches!(error, ClientError::Transport { .. }));
                assert_eq!(partial.generated(), 2);
            }
            other => panic!("unexpected {other}"),
        }
    }
}
