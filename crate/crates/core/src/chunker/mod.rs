//! Lexicon-driven attribute phrase extraction.
//!
//! A phrase is a maximal run of attribute words (color, size or other)
//! immediately followed by a head noun, where a head noun is any token that
//! is neither an attribute word nor a stopword. Runs without such a token
//! after them ("the bird is red and ...") are dropped. Only attributive
//! (pre-noun) forms are recognized.

mod lexicon;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use lexicon::Lexicon;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeCategory {
    Color,
    Size,
    Other,
}

impl AttributeCategory {
    /// Color and size attributes may be flipped to build negatives.
    pub fn is_flippable(self) -> bool {
        matches!(self, AttributeCategory::Color | AttributeCategory::Size)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttributeToken {
    pub word: String,
    pub category: AttributeCategory,
}

/// Attribute words plus head noun, with the `[start, end)` token span it
/// occupies in the source sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttributePhrase {
    pub attributes: Vec<AttributeToken>,
    pub head_noun: String,
    pub span: (usize, usize),
}

impl AttributePhrase {
    /// Builds a phrase from words, looking categories up in `lex`. The span
    /// is set to `start .. start + words + 1`.
    pub fn from_words(attrs: &[&str], noun: &str, start: usize, lex: &Lexicon) -> crate::Result<Self> {
        if attrs.is_empty() {
            return Err(crate::Error::invalid(format!("phrase for '{noun}' has no attribute words")));
        }
        if lex.category(noun).is_some() || lex.is_stopword(noun) {
            return Err(crate::Error::invalid(format!("'{noun}' cannot be a head noun")));
        }
        let attributes = attrs
            .iter()
            .map(|w| {
                lex.category(w)
                    .map(|category| AttributeToken {
                        word: w.to_string(),
                        category,
                    })
                    .ok_or_else(|| crate::Error::invalid(format!("'{w}' is not a lexicon attribute")))
            })
            .collect::<crate::Result<Vec<_>>>()?;
        Ok(AttributePhrase {
            attributes,
            head_noun: noun.to_string(),
            span: (start, start + attrs.len() + 1),
        })
    }

    /// Normalized text: lowercase words joined by single spaces.
    pub fn text(&self) -> String {
        let mut s = String::new();
        for a in &self.attributes {
            s.push_str(&a.word);
            s.push(' ');
        }
        s.push_str(&self.head_noun);
        s
    }

    /// Attribute words followed by the head noun.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.attributes
            .iter()
            .map(|a| a.word.as_str())
            .chain(std::iter::once(self.head_noun.as_str()))
    }

    /// `(attribute, noun)` pairs mentioned by this phrase.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.attributes
            .iter()
            .map(move |a| (a.word.as_str(), self.head_noun.as_str()))
    }
}

impl fmt::Display for AttributePhrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

/// Lowercased word tokens of a sentence together with the sentence itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub source: String,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub(crate) fn is_stripped(c: char) -> bool {
    matches!(c, '.' | ',' | ';' | ':' | '!' | '?' | '"' | '\'' | '(' | ')')
}

/// Lowercases, drops apostrophes, turns the other stripped punctuation
/// (`.,;:!?"()`) into separators and splits on whitespace. Hyphens survive,
/// so "black-face" stays one token.
pub fn tokenize(sentence: &str) -> TokenSequence {
    let cleaned: String = sentence
        .chars()
        .filter(|&c| c != '\'')
        .map(|c| if is_stripped(c) { ' ' } else { c })
        .flat_map(char::to_lowercase)
        .collect();
    TokenSequence {
        tokens: cleaned.split_whitespace().map(str::to_string).collect(),
        source: sentence.to_string(),
    }
}

/// Left-to-right scan for maximal attribute runs closed by a head noun.
pub fn chunk_phrases(tokens: &TokenSequence, lex: &Lexicon) -> Vec<AttributePhrase> {
    let toks = &tokens.tokens;
    let mut phrases = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let start = i;
        let mut attributes = Vec::new();
        while let Some(category) = toks.get(i).and_then(|t| lex.category(t)) {
            attributes.push(AttributeToken {
                word: toks[i].clone(),
                category,
            });
            i += 1;
        }
        if attributes.is_empty() {
            i += 1;
            continue;
        }
        match toks.get(i) {
            Some(noun) if !lex.is_stopword(noun) => {
                phrases.push(AttributePhrase {
                    attributes,
                    head_noun: noun.clone(),
                    span: (start, i + 1),
                });
                i += 1;
            }
            // Run not closed by a noun: discard, resume at the blocking token.
            _ => {}
        }
    }
    phrases
}
