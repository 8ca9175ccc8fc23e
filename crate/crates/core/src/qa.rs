//! Question answering over a single context passage.
//!
//! Extractive answers are contiguous token spans of the context chosen by a
//! lexical window scorer. Generative answers come from a text-to-text client.

use serde::{Deserialize, Serialize};

use crate::clients::ClientError;
use crate::intent::smoothed_idf;
use crate::text::{self, TokenSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerMode {
    Extractive,
    Generative,
    Policy,
}

/// Half-open character range `[start, end)` into a context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        let byte = |c: usize| text.char_indices().nth(c).map_or(text.len(), |(b, _)| b);
        &text[byte(self.start)..byte(self.end)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub mode: AnswerMode,
    /// Present exactly for extractive answers.
    pub span: Option<CharSpan>,
    /// Extractive span score; 0 for generated and policy answers.
    pub score: f64,
    /// Intent whose context produced the answer, once the pipeline knows it.
    pub intent_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractiveConfig {
    pub max_span_tokens: usize,
    pub window_tokens: usize,
    pub length_penalty: f64,
}

impl Default for ExtractiveConfig {
    fn default() -> Self {
        Self {
            max_span_tokens: 30,
            window_tokens: 20,
            length_penalty: 0.05,
        }
    }
}

impl ExtractiveConfig {
    pub fn check(&self) -> Result<(), QaError> {
        if self.max_span_tokens == 0 {
            return Err(QaError::InvalidConfig("max_span_tokens must be at least 1".into()));
        }
        if !(self.length_penalty.is_finite() && self.length_penalty >= 0.0) {
            return Err(QaError::InvalidConfig("length_penalty must be a non-negative number".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QaError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("context is empty")]
    EmptyContext,
    #[error("context contains no tokens")]
    NoContextTokens,
    #[error("invalid extractive config: {0}")]
    InvalidConfig(String),
    #[error("generative client failed: {0}")]
    Client(#[from] ClientError),
    #[error("generative client returned an empty answer")]
    EmptyGeneration,
}

/// Precomputed state for scoring spans of one context against one question.
#[derive(Debug, Clone)]
pub struct SpanScorer<'a> {
    context: &'a str,
    tokens: Vec<TokenSpan>,
    terms: Vec<String>,
    weights: Vec<f64>,
    /// `prefix[k][i]` counts occurrences of term `k` among the first `i` tokens.
    prefix: Vec<Vec<u32>>,
    config: ExtractiveConfig,
}

impl<'a> SpanScorer<'a> {
    pub fn new(question: &str, context: &'a str, config: &ExtractiveConfig) -> Result<Self, QaError> {
        config.check()?;
        if question.trim().is_empty() {
            return Err(QaError::EmptyQuestion);
        }
        if context.trim().is_empty() {
            return Err(QaError::EmptyContext);
        }
        let tokens = text::tokenize_with_offsets(context);
        if tokens.is_empty() {
            return Err(QaError::NoContextTokens);
        }
        let sentence_of = sentence_ids(context, &tokens);
        let sentences = sentence_of.last().map_or(0, |s| s + 1);

        let mut terms: Vec<String> = Vec::new();
        for t in text::tokenize(question) {
            if !terms.contains(&t) && tokens.iter().any(|c| c.token == t) {
                terms.push(t);
            }
        }
        let mut weights = Vec::with_capacity(terms.len());
        let mut prefix = Vec::with_capacity(terms.len());
        for term in &terms {
            let mut in_sentence = vec![false; sentences];
            let mut counts = Vec::with_capacity(tokens.len() + 1);
            counts.push(0u32);
            for (tok, &s) in tokens.iter().zip(&sentence_of) {
                let hit = tok.token == *term;
                in_sentence[s] |= hit;
                counts.push(counts.last().unwrap() + u32::from(hit));
            }
            let df = in_sentence.iter().filter(|&&b| b).count();
            weights.push(smoothed_idf(sentences, df));
            prefix.push(counts);
        }
        Ok(Self {
            context,
            tokens,
            terms,
            weights,
            prefix,
            config: config.clone(),
        })
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    /// Distinct question tokens that occur in the context, in question order.
    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term_weight(&self, term: &str) -> Option<f64> {
        self.terms.iter().position(|t| t == term).map(|k| self.weights[k])
    }

    /// Score of the token span `[start, end)`.
    pub fn score(&self, start: usize, end: usize) -> f64 {
        assert!(start < end && end <= self.tokens.len(), "bad span {start}..{end}");
        let w = self.config.window_tokens;
        let lo = start.saturating_sub(w);
        let hi = (end + w).min(self.tokens.len());
        let mut score = 0.0;
        for (counts, weight) in self.prefix.iter().zip(&self.weights) {
            if counts[hi] > counts[lo] {
                score += weight;
            }
        }
        score - self.config.length_penalty * (end - start) as f64
    }

    /// Highest-scoring span; ties go to the earliest start, then the shortest.
    pub fn best_span(&self) -> (usize, usize, f64) {
        let n = self.tokens.len();
        let mut best = (0, 1, self.score(0, 1));
        for start in 0..n {
            for end in start + 1..=(start + self.config.max_span_tokens).min(n) {
                let s = self.score(start, end);
                if s > best.2 {
                    best = (start, end, s);
                }
            }
        }
        best
    }

    /// Builds the answer for token span `[start, end)`.
    pub fn answer(&self, start: usize, end: usize, score: f64) -> Answer {
        let bytes = (self.tokens[start].start, self.tokens[end - 1].end);
        Answer {
            text: self.context[bytes.0..bytes.1].to_string(),
            mode: AnswerMode::Extractive,
            span: Some(CharSpan {
                start: text::char_offset(self.context, bytes.0),
                end: text::char_offset(self.context, bytes.1),
            }),
            score,
            intent_name: None,
        }
    }
}

/// Sentence index of every token. A sentence ends wherever the text between
/// two consecutive tokens contains `.`, `!` or `?`.
fn sentence_ids(context: &str, tokens: &[TokenSpan]) -> Vec<usize> {
    let mut ids = Vec::with_capacity(tokens.len());
    let mut current = 0;
    for (i, tok) in tokens.iter().enumerate() {
        if i > 0 && context[tokens[i - 1].end..tok.start].contains(['.', '!', '?']) {
            current += 1;
        }
        ids.push(current);
    }
    ids
}

/// Picks the best-scoring span of `context` for `question`.
///
/// Every span of at most `max_span_tokens` tokens is scored as the summed
/// sentence-level idf of question terms occurring within `window_tokens` of
/// the span, minus `length_penalty` per span token.
pub fn extract_answer(question: &str, context: &str, config: &ExtractiveConfig) -> Result<Answer, QaError> {
    let scorer = SpanScorer::new(question, context, config)?;
    let (start, end, score) = scorer.best_span();
    Ok(scorer.answer(start, end, score))
}

pub const DEFAULT_MAX_LENGTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_length: usize,
}

pub trait GenerativeClient: Send + Sync {
    fn complete(&self, request: &GenerationRequest) -> Result<String, ClientError>;
}

pub fn build_prompt(question: &str, context: &str) -> String {
    format!("question: {question} context: {context}")
}

/// Offline generator: answers with the context sentence sharing the most
/// distinct tokens with the question (the first sentence on ties), cut to
/// `max_length` words. Prompts not in the expected layout are echoed.
#[derive(Debug, Clone, Copy, Default)]
pub struct ContextSentenceGenerator;

impl GenerativeClient for ContextSentenceGenerator {
    fn complete(&self, request: &GenerationRequest) -> Result<String, ClientError> {
        let prompt = request.prompt.trim();
        if prompt.is_empty() {
            return Err(ClientError::EmptyInput);
        }
        let Some((question, context)) = prompt
            .strip_prefix("question:")
            .and_then(|rest| rest.split_once(" context:"))
            .filter(|(_, c)| !c.trim().is_empty())
        else {
            return Ok(truncate_words(prompt, request.max_length));
        };
        let wanted: std::collections::HashSet<String> = text::tokenize(question).into_iter().collect();
        let mut best = ("", 0usize);
        for (i, sentence) in split_sentences(context).into_iter().enumerate() {
            let mut seen = std::collections::HashSet::new();
            let overlap = text::tokenize(sentence)
                .into_iter()
                .filter(|t| wanted.contains(t) && seen.insert(t.clone()))
                .count();
            if i == 0 || overlap > best.1 {
                best = (sentence, overlap);
            }
        }
        Ok(truncate_words(best.0, request.max_length))
    }
}

fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|(_, n)| n.is_whitespace()) {
            let end = i + c.len_utf8();
            out.push(text[start..end].trim());
            start = end;
        }
    }
    out.push(text[start..].trim());
    out.retain(|s| !s.is_empty());
    out
}

fn truncate_words(text: &str, max: usize) -> String {
    text.split_whitespace().take(max.max(1)).collect::<Vec<_>>().join(" ")
}

/// Asks `client` to answer `question` from `context`.
pub fn generate_answer(question: &str, context: &str, client: &dyn GenerativeClient) -> Result<Answer, QaError> {
    generate_answer_with(question, context, client, DEFAULT_MAX_LENGTH)
}

pub fn generate_answer_with(question: &str, context: &str, client: &dyn GenerativeClient, max_length: usize) -> Result<Answer, QaError> {
    if question.trim().is_empty() {
        return Err(QaError::EmptyQuestion);
    }
    if context.trim().is_empty() {
        return Err(QaError::EmptyContext);
    }
    let text = client.complete(&GenerationRequest {
        prompt: build_prompt(question, context),
        max_length,
    })?;
    let text = text.trim();
    if text.is_empty() {
        return Err(QaError::EmptyGeneration);
    }
    Ok(Answer {
        text: text.to_string(),
        mode: AnswerMode::Generative,
        span: None,
        score: 0.0,
        intent_name: None,
    })
}

/// Both answers for one question; each side fails independently.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub extractive: Result<Answer, QaError>,
    pub generative: Result<Answer, QaError>,
}

pub fn compare(question: &str, context: &str, config: &ExtractiveConfig, client: &dyn GenerativeClient) -> Comparison {
    std::thread::scope(|s| {
        let generative = s.spawn(|| generate_answer(question, context, client));
        let extractive = extract_answer(question, context, config);
        Comparison {
            extractive,
            generative: generative.join().expect("generative worker panicked"),
        }
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    const TWO: &str = "Rocks crack when water freezes inside them. Rivers carry sediment to the sea and drop it in deltas.";

    /// Scores every legal span independently of `SpanScorer`.
    fn brute_force(question: &str, context: &str, cfg: &ExtractiveConfig) -> (usize, usize, f64) {
        let toks = text::tokenize_with_offsets(context);
        // sentence membership via explicit segmentation
        let mut sentence = vec![0usize; toks.len()];
        for i in 1..toks.len() {
            let gap = &context[toks[i - 1].end..toks[i].start];
            sentence[i] = sentence[i - 1] + usize::from(gap.chars().any(|c| ".!?".contains(c)));
        }
        let n_sent = sentence[toks.len() - 1] + 1;
        let mut terms: Vec<String> = Vec::new();
        for t in text::tokenize(question) {
            if !terms.contains(&t) && toks.iter().any(|x| x.token == t) {
                terms.push(t);
            }
        }
        let idf = |t: &str| {
            let df = (0..n_sent)
                .filter(|&s| toks.iter().zip(&sentence).any(|(x, &si)| si == s && x.token == t))
                .count();
            ((1.0 + n_sent as f64) / (1.0 + df as f64)).ln() + 1.0
        };
        let mut best: Option<(usize, usize, f64)> = None;
        for s in 0..toks.len() {
            for e in s + 1..=toks.len() {
                if e - s > cfg.max_span_tokens {
                    continue;
                }
                let lo = s as isize - cfg.window_tokens as isize;
                let hi = e + cfg.window_tokens;
                let mut score = 0.0;
                for t in &terms {
                    let near = toks
                        .iter()
                        .enumerate()
                        .any(|(i, x)| (i as isize) >= lo && i < hi && x.token == *t);
                    if near {
                        score += idf(t);
                    }
                }
                score -= cfg.length_penalty * (e - s) as f64;
                if best.is_none_or(|b| score > b.2) {
                    best = Some((s, e, score));
                }
            }
        }
        best.unwrap()
    }

    #[test]
    fn single_sentence_answer_is_substring() {
        let ctx = "Quartz is a mineral.";
        let a = extract_answer("what is quartz", ctx, &ExtractiveConfig::default()).unwrap();
        assert_eq!(a.mode, AnswerMode::Extractive);
        assert!(ctx.contains(&a.text));
        assert_eq!(a.span.unwrap().slice(ctx), a.text);
    }

    #[test]
    fn answer_comes_from_the_matching_sentence() {
        let cfg = ExtractiveConfig {
            window_tokens: 2,
            ..Default::default()
        };
        let a = extract_answer("where do rivers carry sediment", TWO, &cfg).unwrap();
        let second = TWO.find("Rivers").unwrap();
        let start_char = a.span.unwrap().start;
        assert!(start_char >= second, "{a:?}");
        let scorer = SpanScorer::new("where do rivers carry sediment", TWO, &cfg).unwrap();
        assert_eq!(scorer.best_span(), brute_force("where do rivers carry sediment", TWO, &cfg));
        // "rivers" at token 7 is the earliest span touching every term within the window
        assert_eq!(a.text, "Rivers");
        assert_eq!(scorer.term_weight("rivers"), Some((3.0f64 / 2.0).ln() + 1.0));
    }

    #[test]
    fn ties_go_to_earliest_start_then_shortest() {
        // no question term occurs, so every span scores -penalty * length
        let a = extract_answer("unrelated", "alpha beta gamma", &ExtractiveConfig::default()).unwrap();
        assert_eq!(a.text, "alpha");
        assert_eq!(a.span, Some(CharSpan { start: 0, end: 5 }));
        let cfg = ExtractiveConfig {
            length_penalty: 0.0,
            ..Default::default()
        };
        let a = extract_answer("gamma", "alpha beta gamma", &cfg).unwrap();
        assert_eq!(a.text, "alpha");
    }

    #[test]
    fn span_respects_max_tokens() {
        let cfg = ExtractiveConfig {
            max_span_tokens: 1,
            window_tokens: 0,
            length_penalty: 0.0,
        };
        let a = extract_answer("crack water", TWO, &cfg).unwrap();
        assert_eq!(a.text, "crack");
    }

    #[test]
    fn char_offsets_survive_multibyte_text() {
        let ctx = "L'érosion façonne les vallées. Le gel fend les roches.";
        let a = extract_answer("gel roches", ctx, &ExtractiveConfig::default()).unwrap();
        assert_eq!(a.span.unwrap().slice(ctx), a.text);
        let tight = ExtractiveConfig {
            window_tokens: 0,
            length_penalty: 0.01,
            ..Default::default()
        };
        let a = extract_answer("façonne gel", ctx, &tight).unwrap();
        assert_eq!(a.text, "façonne les vallées. Le gel");
        assert_eq!(a.span, Some(CharSpan { start: 10, end: 37 }));
        assert_eq!(a.span.unwrap().slice(ctx), a.text);
    }

    #[test]
    fn errors() {
        let cfg = ExtractiveConfig::default();
        assert_eq!(extract_answer(" ", "ctx", &cfg), Err(QaError::EmptyQuestion));
        assert_eq!(extract_answer("q", "", &cfg), Err(QaError::EmptyContext));
        assert_eq!(extract_answer("q", "?! ...", &cfg), Err(QaError::NoContextTokens));
        let bad = ExtractiveConfig {
            max_span_tokens: 0,
            ..Default::default()
        };
        assert!(matches!(extract_answer("q", "ctx", &bad), Err(QaError::InvalidConfig(_))));
    }

    #[test]
    fn prompt_layout() {
        assert_eq!(build_prompt("q", "c"), "question: q context: c");
    }

    #[test]
    fn stub_generator_picks_overlapping_sentence() {
        let a = generate_answer("Where do rivers carry sediment?", TWO, &ContextSentenceGenerator).unwrap();
        assert_eq!(a.text, "Rivers carry sediment to the sea and drop it in deltas.");
        assert_eq!(a.mode, AnswerMode::Generative);
        assert_eq!(a.span, None);
        let first = generate_answer("unrelated words", TWO, &ContextSentenceGenerator).unwrap();
        assert_eq!(first.text, "Rocks crack when water freezes inside them.");
    }

    struct Fixed(&'static str);

    impl GenerativeClient for Fixed {
        fn complete(&self, _: &GenerationRequest) -> Result<String, ClientError> {
            Ok(self.0.to_string())
        }
    }

    struct Down;

    impl GenerativeClient for Down {
        fn complete(&self, _: &GenerationRequest) -> Result<String, ClientError> {
            Err(ClientError::Transport {
                url: "http://gen".into(),
                message: "connection refused".into(),
            })
        }
    }

    #[test]
    fn empty_generation_is_an_error() {
        assert_eq!(generate_answer("q", "c", &Fixed("  \n")), Err(QaError::EmptyGeneration));
        assert_eq!(generate_answer("q", "c", &Fixed(" ok ")).unwrap().text, "ok");
    }

    #[test]
    fn compare_keeps_extractive_when_generative_fails() {
        let cfg = ExtractiveConfig::default();
        let c = compare("what cracks rocks", TWO, &cfg, &Down);
        assert!(matches!(c.generative, Err(QaError::Client(ClientError::Transport { .. }))));
        let ex = c.extractive.unwrap();
        assert_eq!(ex, extract_answer("what cracks rocks", TWO, &cfg).unwrap());
        let both = compare("what cracks rocks", TWO, &cfg, &ContextSentenceGenerator);
        assert!(both.generative.is_ok());
        assert_eq!(both.extractive.unwrap(), ex);
    }

    fn word() -> impl Strategy<Value = String> {
        prop::sample::select(vec![
            "rock", "water", "ice", "river", "Wind", "sand", "érosion", "delta", "CO2", "sea", "the", "a", "of",
        ])
        .prop_map(str::to_string)
    }

    fn separator() -> impl Strategy<Value = String> {
        prop::sample::select(vec![" ", "  ", ", ", ". ", "! ", "? ", " - ", "\n", "'"]).prop_map(str::to_string)
    }

    fn context() -> impl Strategy<Value = String> {
        prop::collection::vec((word(), separator()), 1..60).prop_map(|parts| {
            let mut s = String::new();
            for (w, sep) in parts {
                s.push_str(&w);
                s.push_str(&sep);
            }
            s
        })
    }

    fn config() -> impl Strategy<Value = ExtractiveConfig> {
        (1usize..12, 0usize..8, 0.0f64..0.5).prop_map(|(m, w, p)| ExtractiveConfig {
            max_span_tokens: m,
            window_tokens: w,
            length_penalty: p,
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn extractive_answer_is_a_span_of_the_context(
            question in prop::collection::vec(word(), 1..6).prop_map(|w| w.join(" ")),
            ctx in context(),
            cfg in config(),
        ) {
            let a = extract_answer(&question, &ctx, &cfg).unwrap();
            let span = a.span.unwrap();
            prop_assert_eq!(span.slice(&ctx), a.text.as_str());
            prop_assert!(text::tokenize(&a.text).len() <= cfg.max_span_tokens);
            prop_assert_eq!(extract_answer(&question, &ctx, &cfg).unwrap(), a);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn scorer_matches_brute_force(
            question in prop::collection::vec(word(), 1..6).prop_map(|w| w.join(" ")),
            ctx in context(),
            cfg in config(),
        ) {
            let scorer = SpanScorer::new(&question, &ctx, &cfg).unwrap();
            prop_assert!(scorer.token_count() <= 60);
            let (s, e, score) = scorer.best_span();
            let (bs, be, bscore) = brute_force(&question, &ctx, &cfg);
            prop_assert_eq!((s, e), (bs, be));
            prop_assert!((score - bscore).abs() < 1e-9);
        }

        #[test]
        fn nearby_term_never_lowers_span_score(
            question in prop::collection::vec(word(), 1..4).prop_map(|w| w.join(" ")),
            ctx in context(),
            cfg in config(),
        ) {
            let scorer = SpanScorer::new(&question, &ctx, &cfg).unwrap();
            let (s, e, score) = scorer.best_span();
            let toks = text::tokenize(&ctx);
            let extra = &toks[s];
            let grown = format!("{question} {extra}");
            let scorer2 = SpanScorer::new(&grown, &ctx, &cfg).unwrap();
            prop_assert!(scorer2.score(s, e) >= score);
        }
    }
}
