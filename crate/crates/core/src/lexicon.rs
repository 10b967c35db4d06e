//! Synonym lexicon for form and result labels.
//!
//! File format: UTF-8 text, one synonym set per line, phrases separated by
//! `|`, the first phrase is the canonical concept label. Blank lines and
//! lines starting with `#` are ignored. Phrases are stored normalized; the
//! canonical label keeps its display form (trimmed).

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use crate::text::label_phrase;

const BOOKS_LEXICON: &str = include_str!("../data/books.lexicon");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("reading lexicon {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: phrase {raw:?} is empty after normalization")]
    EmptyPhrase { line: usize, raw: String },
    #[error("line {line}: canonical label {label:?} already defined on line {first_line}")]
    DuplicateCanonical { line: usize, label: String, first_line: usize },
    #[error("line {line}: phrase {phrase:?} already belongs to the set on line {first_line}")]
    DuplicatePhrase { line: usize, phrase: String, first_line: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynonymSet {
    pub canonical: String,
    /// Normalized phrases, canonical first.
    pub phrases: Vec<String>,
    line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelLexicon {
    sets: Vec<SynonymSet>,
    by_phrase: HashMap<String, usize>,
}

impl LabelLexicon {
    /// The shipped book-domain lexicon.
    pub fn books() -> Self {
        Self::parse(BOOKS_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn empty() -> Self {
        Self { sets: Vec::new(), by_phrase: HashMap::new() }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| LexiconError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut lexicon = Self::empty();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw_line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut parts = trimmed.split('|').map(str::trim);
            let canonical = parts.next().unwrap_or_default().to_owned();
            let mut phrases = Vec::new();
            for raw in std::iter::once(canonical.as_str()).chain(parts) {
                let phrase = label_phrase(raw);
                if phrase.is_empty() {
                    return Err(LexiconError::EmptyPhrase { line, raw: raw.to_owned() });
                }
                if let Some(&owner) = lexicon.by_phrase.get(&phrase) {
                    return Err(LexiconError::DuplicatePhrase {
                        line,
                        phrase,
                        first_line: lexicon.sets[owner].line,
                    });
                }
                if !phrases.contains(&phrase) {
                    phrases.push(phrase);
                }
            }
            if let Some(prev) = lexicon.sets.iter().find(|s| s.canonical.eq_ignore_ascii_case(&canonical)) {
                return Err(LexiconError::DuplicateCanonical { line, label: canonical, first_line: prev.line });
            }
            let set_idx = lexicon.sets.len();
            for phrase in &phrases {
                lexicon.by_phrase.insert(phrase.clone(), set_idx);
            }
            lexicon.sets.push(SynonymSet { canonical, phrases, line });
        }
        Ok(lexicon)
    }

    pub fn sets(&self) -> &[SynonymSet] {
        &self.sets
    }

    pub fn canonical_labels(&self) -> impl Iterator<Item = &str> {
        self.sets.iter().map(|s| s.canonical.as_str())
    }

    /// Index of the synonym set containing this normalized phrase.
    pub fn set_of_phrase(&self, phrase: &str) -> Option<usize> {
        self.by_phrase.get(phrase).copied()
    }

    /// Canonical concept label for a raw label, if the label is a known phrase.
    pub fn canonical_for(&self, raw_label: &str) -> Option<&str> {
        self.set_of_phrase(&label_phrase(raw_label))
            .map(|i| self.sets[i].canonical.as_str())
    }

    /// Single-token synonyms of `token`, including itself, when the token is
    /// a phrase of some set. Otherwise just the token.
    pub fn expand_token<'a>(&'a self, token: &'a str) -> Vec<&'a str> {
        match self.by_phrase.get_key_value(token) {
            Some((key, &set)) => {
                let mut out: Vec<&str> = self.sets[set]
                    .phrases
                    .iter()
                    .filter(|p| !p.contains(' '))
                    .map(String::as_str)
                    .collect();
                if !out.contains(&key.as_str()) {
                    out.push(key.as_str());
                }
                out
            }
            None => vec![token],
        }
    }

    /// Serializes back to the file format, one set per line.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for set in &self.sets {
            out.push_str(&set.canonical);
            for phrase in set.phrases.iter().skip(1) {
                out.push('|');
                out.push_str(phrase);
            }
            out.push('\n');
        }
        out
    }
}

impl Default for LabelLexicon {
    fn default() -> Self {
        Self::books()
    }
}
