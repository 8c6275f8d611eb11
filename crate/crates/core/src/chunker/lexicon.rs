use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AttributeCategory;
use crate::error::{Error, Result};

const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.toml");

/// Word lists driving the chunker and the attribute flipper.
///
/// On disk this is a TOML document with the four keys `color`, `size`,
/// `other_attributes` and `stopwords`, each an array of strings. The
/// canonical serialization (what [`Lexicon::to_toml`] writes) lists every
/// array sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lexicon {
    pub color: BTreeSet<String>,
    pub size: BTreeSet<String>,
    pub other_attributes: BTreeSet<String>,
    pub stopwords: BTreeSet<String>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::from_toml_str(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}

impl Lexicon {
    pub fn new<I, S>(color: I, size: I, other: I, stopwords: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set = |it: I| it.into_iter().map(Into::into).collect::<BTreeSet<String>>();
        let lex = Lexicon {
            color: set(color),
            size: set(size),
            other_attributes: set(other),
            stopwords: set(stopwords),
        };
        lex.validate()?;
        Ok(lex)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let lex: Lexicon = toml::from_str(text).map_err(|e| Error::invalid(format!("lexicon: {e}")))?;
        lex.validate()?;
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::format(path, 0, format!("invalid UTF-8: {e}")))?;
        let lex: Lexicon = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::format(path, line, e.message().to_string())
        })?;
        lex.validate()
            .map_err(|e| Error::format(path, 0, e.to_string()))?;
        Ok(lex)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("lexicon serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    /// Checks lowercase single-token entries and pairwise disjoint lists.
    pub fn validate(&self) -> Result<()> {
        let lists = [
            ("color", &self.color),
            ("size", &self.size),
            ("other_attributes", &self.other_attributes),
            ("stopwords", &self.stopwords),
        ];
        for (name, words) in lists {
            for w in words {
                let bad = w.is_empty()
                    || w.chars().any(|c| c.is_whitespace() || c.is_uppercase() || super::is_stripped(c));
                if bad {
                    return Err(Error::invalid(format!(
                        "lexicon {name}: '{w}' is not a lowercase single token"
                    )));
                }
            }
        }
        for (i, (a_name, a)) in lists.iter().enumerate() {
            for (b_name, b) in &lists[i + 1..] {
                if let Some(w) = a.intersection(b).next() {
                    return Err(Error::invalid(format!(
                        "lexicon lists {a_name} and {b_name} share '{w}'"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn category(&self, word: &str) -> Option<AttributeCategory> {
        if self.color.contains(word) {
            Some(AttributeCategory::Color)
        } else if self.size.contains(word) {
            Some(AttributeCategory::Size)
        } else if self.other_attributes.contains(word) {
            Some(AttributeCategory::Other)
        } else {
            None
        }
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }

    pub fn words(&self, category: AttributeCategory) -> &BTreeSet<String> {
        match category {
            AttributeCategory::Color => &self.color,
            AttributeCategory::Size => &self.size,
            AttributeCategory::Other => &self.other_attributes,
        }
    }
}
