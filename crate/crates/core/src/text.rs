//! Tokenization shared by the keyword policy, the intent classifier and the
//! answer extractor.
//!
//! A token is a maximal run of alphanumeric characters, lower-cased with
//! Unicode rules. Everything else separates tokens.

/// A token together with the byte range it occupies in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSpan {
    pub token: String,
    pub start: usize,
    pub end: usize,
}

/// Splits `text` into lower-cased alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with_offsets(text).into_iter().map(|t| t.token).collect()
}

/// Like [`tokenize`], but keeps the byte offsets of each token in `text`.
pub fn tokenize_with_offsets(text: &str) -> Vec<TokenSpan> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                spans.push(span(text, s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push(span(text, s, text.len()));
    }
    spans
}

fn span(text: &str, start: usize, end: usize) -> TokenSpan {
    TokenSpan {
        token: text[start..end].to_lowercase(),
        start,
        end,
    }
}

/// Collapses runs of whitespace to a single space and trims both ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Key under which two question texts count as duplicates: case-folded,
/// whitespace collapsed, terminal punctuation removed.
pub fn question_key(text: &str) -> String {
    let folded = normalize_whitespace(&text.to_lowercase());
    folded
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace() || c == '¿' || c == '¡')
        .to_string()
}

/// Converts a byte offset in `text` to a character offset.
pub(crate) fn char_offset(text: &str, byte: usize) -> usize {
    text[..byte].chars().count()
}
