//! Keyword tokenization and single-label crime type assignment.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CategoryId, CategoryRegistry};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LexiconError {
    #[error("lexicon category {0:?} is not in the registry")]
    UnknownCategory(String),
    #[error("lexicon phrase {0:?} must be lowercase")]
    NotLowercase(String),
    #[error("lexicon phrase {0:?} has no tokens")]
    EmptyPhrase(String),
    #[error("phrase {phrase:?} appears under both {first:?} and {second:?}")]
    DuplicatePhrase {
        phrase: String,
        first: String,
        second: String,
    },
}

/// Lowercases and splits on every non-alphanumeric character. Digits stay;
/// empty tokens are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// True when `needle` occurs as a contiguous run inside `haystack`.
pub(crate) fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub category: CategoryId,
    pub phrases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct CompiledEntry {
    category: CategoryId,
    phrases: Vec<Vec<String>>,
}

/// Priority-ordered keyword lexicon. Earlier entries win.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    entries: Vec<CompiledEntry>,
}

impl Lexicon {
    pub fn new(entries: &[LexiconEntry], registry: &CategoryRegistry) -> Result<Self, LexiconError> {
        let mut seen: Vec<(Vec<String>, &CategoryId)> = Vec::new();
        let mut compiled = Vec::with_capacity(entries.len());
        for entry in entries {
            if !registry.contains(&entry.category) {
                return Err(LexiconError::UnknownCategory(entry.category.to_string()));
            }
            let mut phrases: Vec<Vec<String>> = Vec::with_capacity(entry.phrases.len());
            for phrase in &entry.phrases {
                if *phrase != phrase.to_lowercase() {
                    return Err(LexiconError::NotLowercase(phrase.clone()));
                }
                let tokens = tokenize(phrase);
                if tokens.is_empty() {
                    return Err(LexiconError::EmptyPhrase(phrase.clone()));
                }
                if let Some((_, other)) = seen.iter().find(|(t, _)| *t == tokens) {
                    if *other != &entry.category {
                        return Err(LexiconError::DuplicatePhrase {
                            phrase: phrase.clone(),
                            first: other.to_string(),
                            second: entry.category.to_string(),
                        });
                    }
                    continue;
                }
                seen.push((tokens.clone(), &entry.category));
                phrases.push(tokens);
            }
            compiled.push(CompiledEntry {
                category: entry.category.clone(),
                phrases,
            });
        }
        Ok(Self { entries: compiled })
    }

    pub fn categories(&self) -> impl Iterator<Item = &CategoryId> {
        self.entries.iter().map(|e| &e.category)
    }

    /// The highest-priority category with a phrase occurring contiguously
    /// in `tokens`.
    pub fn classify(&self, tokens: &[String]) -> Option<&CategoryId> {
        self.entries
            .iter()
            .find(|e| e.phrases.iter().any(|p| contains_run(tokens, p)))
            .map(|e| &e.category)
    }
}

pub fn classify_crime_type(tokens: &[String], lexicon: &Lexicon) -> Option<CategoryId> {
    lexicon.classify(tokens).cloned()
}
