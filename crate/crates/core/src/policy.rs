//! Keyword policy rules that answer a question before any model sees it.
//!
//! Matching is token-level with the classifier's tokenizer, so the keyword
//! `art` never fires on `partner`. Rules are tried in list order and the first
//! match wins.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::text::tokenize;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// At least one keyword present.
    #[default]
    Any,
    /// Every keyword present.
    All,
}

/// A rule as authored, before compilation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRule {
    pub id: String,
    pub keywords: Vec<String>,
    #[serde(default)]
    pub match_mode: MatchMode,
    pub response: String,
}

impl PolicyRule {
    pub fn new(id: impl Into<String>, keywords: &[&str], response: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            keywords: keywords.iter().map(|k| k.to_string()).collect(),
            match_mode: MatchMode::Any,
            response: response.into(),
        }
    }

    pub fn with_mode(mut self, mode: MatchMode) -> Self {
        self.match_mode = mode;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("rule id {0:?} is used more than once")]
    DuplicateId(String),
    #[error("rule {0:?} has an empty id")]
    EmptyId(String),
    #[error("rule {0:?} has no keywords")]
    NoKeywords(String),
    #[error("rule {rule:?}: keyword {keyword:?} must be a single word")]
    MultiTokenKeyword { rule: String, keyword: String },
    #[error("rule {rule:?}: keyword {keyword:?} contains no letters or digits")]
    EmptyKeyword { rule: String, keyword: String },
    #[error("rule {0:?} has an empty response")]
    EmptyResponse(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct CompiledRule {
    source: PolicyRule,
    tokens: Vec<String>,
}

/// Validated rules in priority order. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleSet {
    rules: Vec<CompiledRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyHit {
    pub rule_id: String,
    pub response: String,
}

/// Checks every rule and lower-cases its keywords, keeping list order.
pub fn compile_rules(rules: &[PolicyRule]) -> Result<RuleSet, RuleError> {
    let mut ids = HashSet::new();
    let mut compiled = Vec::with_capacity(rules.len());
    for rule in rules {
        if rule.id.trim().is_empty() {
            return Err(RuleError::EmptyId(rule.response.clone()));
        }
        if !ids.insert(rule.id.as_str()) {
            return Err(RuleError::DuplicateId(rule.id.clone()));
        }
        if rule.keywords.is_empty() {
            return Err(RuleError::NoKeywords(rule.id.clone()));
        }
        if rule.response.trim().is_empty() {
            return Err(RuleError::EmptyResponse(rule.id.clone()));
        }
        let mut tokens = Vec::with_capacity(rule.keywords.len());
        for keyword in &rule.keywords {
            let mut parts = tokenize(keyword);
            match parts.len() {
                0 => {
                    return Err(RuleError::EmptyKeyword {
                        rule: rule.id.clone(),
                        keyword: keyword.clone(),
                    })
                }
                1 => tokens.push(parts.pop().expect("one token")),
                _ => {
                    return Err(RuleError::MultiTokenKeyword {
                        rule: rule.id.clone(),
                        keyword: keyword.clone(),
                    })
                }
            }
        }
        let mut source = rule.clone();
        source.keywords = tokens.clone();
        compiled.push(CompiledRule { source, tokens });
    }
    Ok(RuleSet { rules: compiled })
}

impl RuleSet {
    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// The rules with normalized keywords, in priority order.
    pub fn rules(&self) -> impl Iterator<Item = &PolicyRule> {
        self.rules.iter().map(|r| &r.source)
    }

    /// Returns the response of the first rule matching `question`.
    pub fn apply(&self, question: &str) -> Option<PolicyHit> {
        let tokens: HashSet<String> = tokenize(question).into_iter().collect();
        self.rules
            .iter()
            .find(|rule| match rule.source.match_mode {
                MatchMode::Any => rule.tokens.iter().any(|t| tokens.contains(t)),
                MatchMode::All => rule.tokens.iter().all(|t| tokens.contains(t)),
            })
            .map(|rule| PolicyHit {
                rule_id: rule.source.id.clone(),
                response: rule.source.response.clone(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classroom_rules() -> RuleSet {
        compile_rules(&[
            PolicyRule::new("login", &["login"], "Log in with your student number and the class password."),
            PolicyRule::new("room", &["classroom"], "We meet in room 214."),
        ])
        .unwrap()
    }

    #[test]
    fn keeps_order() {
        let rs = classroom_rules();
        assert_eq!(rs.len(), 2);
        let ids: Vec<_> = rs.rules().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["login", "room"]);
    }

    #[test]
    fn login_question_gets_prewritten_response() {
        let hit = classroom_rules().apply("How do I login to the portal?").unwrap();
        assert_eq!(hit.rule_id, "login");
        assert_eq!(hit.response, "Log in with your student number and the class password.");
    }

    #[test]
    fn classroom_question() {
        let hit = classroom_rules().apply("Where is the classroom?").unwrap();
        assert_eq!(hit.response, "We meet in room 214.");
    }

    #[test]
    fn case_and_punctuation_insensitive() {
        assert_eq!(classroom_rules().apply("LOGIN???").unwrap().rule_id, "login");
    }

    #[test]
    fn no_substring_matches() {
        let rs = compile_rules(&[PolicyRule::new("art", &["art"], "Art is on Fridays.")]).unwrap();
        assert_eq!(rs.apply("Who is my lab partner?"), None);
        assert!(rs.apply("When is art class?").is_some());
    }

    #[test]
    fn earlier_rule_wins() {
        let rs = compile_rules(&[
            PolicyRule::new("first", &["test", "quiz"], "one"),
            PolicyRule::new("second", &["quiz"], "two"),
        ])
        .unwrap();
        assert_eq!(rs.apply("is there a quiz").unwrap().rule_id, "first");
    }

    #[test]
    fn all_mode_needs_every_keyword() {
        let rs = compile_rules(&[PolicyRule::new("r", &["late", "homework"], "Email me.").with_mode(MatchMode::All)]).unwrap();
        assert!(rs.apply("my homework is late").is_some());
        assert!(rs.apply("my homework").is_none());
    }

    #[test]
    fn keywords_are_lowercased() {
        let rs = compile_rules(&[PolicyRule::new("r", &["LOGIN"], "x")]).unwrap();
        assert_eq!(rs.rules().next().unwrap().keywords, vec!["login"]);
        assert!(rs.apply("login").is_some());
    }

    #[test]
    fn empty_list_matches_nothing() {
        let rs = compile_rules(&[]).unwrap();
        assert!(rs.is_empty());
        assert!(rs.apply("login").is_none());
    }

    #[test]
    fn rejects_bad_rules() {
        assert_eq!(
            compile_rules(&[PolicyRule::new("r", &["log in"], "x")]),
            Err(RuleError::MultiTokenKeyword {
                rule: "r".into(),
                keyword: "log in".into()
            })
        );
        assert_eq!(compile_rules(&[PolicyRule::new("r", &[], "x")]), Err(RuleError::NoKeywords("r".into())));
        assert_eq!(
            compile_rules(&[PolicyRule::new("r", &["a"], "x"), PolicyRule::new("r", &["b"], "y")]),
            Err(RuleError::DuplicateId("r".into()))
        );
        assert_eq!(compile_rules(&[PolicyRule::new("r", &["a"], " ")]), Err(RuleError::EmptyResponse("r".into())));
        assert!(matches!(compile_rules(&[PolicyRule::new("r", &["?"], "x")]), Err(RuleError::EmptyKeyword { .. })));
    }
}
