use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BoundingBox, Grounder, Grounding};
use crate::chunker::AttributePhrase;
use crate::error::{Error, Result};
use crate::jsonl;
use crate::tensor::DenseVector;

/// Groundings file record:
/// `{"image_id", "phrase", "box": [x, y, w, h], "score", "features": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundingRow {
    pub image_id: String,
    pub phrase: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub score: f64,
    pub features: Vec<f64>,
}

impl GroundingRow {
    pub fn from_grounding(image_id: &str, g: &Grounding) -> Self {
        GroundingRow {
            image_id: image_id.to_string(),
            phrase: g.phrase.text(),
            bbox: g.bbox,
            score: g.score,
            features: g.features.0.clone(),
        }
    }
}

/// Join key for phrase text: lowercase words separated by single spaces.
pub fn normalize_phrase(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Replays precomputed groundings keyed by `(image_id, normalized phrase)`.
#[derive(Debug, Clone, Default)]
pub struct FileGrounder {
    dim: usize,
    rows: Vec<GroundingRow>,
    index: HashMap<(String, String), usize>,
}

impl FileGrounder {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let records: Vec<(usize, GroundingRow)> = jsonl::read_jsonl_numbered(path)?;
        let mut grounder = FileGrounder::default();
        for (line, row) in records {
            grounder
                .insert(row)
                .map_err(|e| Error::format(path, line, e.to_string()))?;
        }
        Ok(grounder)
    }

    pub fn from_rows(rows: impl IntoIterator<Item = GroundingRow>) -> Result<Self> {
        let mut grounder = FileGrounder::default();
        for row in rows {
            grounder.insert(row)?;
        }
        Ok(grounder)
    }

    fn insert(&mut self, row: GroundingRow) -> Result<()> {
        if !row.score.is_finite() {
            return Err(Error::invalid("score must be finite"));
        }
        if row.features.is_empty() || row.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("features must be a nonempty list of finite reals"));
        }
        if self.rows.is_empty() {
            self.dim = row.features.len();
        } else if row.features.len() != self.dim {
            return Err(Error::invalid(format!(
                "feature dimension {} differs from {} used by earlier rows",
                row.features.len(),
                self.dim
            )));
        }
        let key = (row.image_id.clone(), normalize_phrase(&row.phrase));
        if self.index.contains_key(&key) {
            return Err(Error::invalid(format!("duplicate grounding for '{}' on '{}'", key.1, key.0)));
        }
        self.index.insert(key, self.rows.len());
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[GroundingRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write(path: impl AsRef<Path>, rows: &[GroundingRow]) -> Result<()> {
        jsonl::write_jsonl(path, rows)
    }
}

impl Grounder for FileGrounder {
    fn ground(&self, image_id: &str, phrase: &AttributePhrase) -> Result<Grounding> {
        let text = phrase.text();
        let key = (image_id.to_string(), normalize_phrase(&text));
        let row = self
            .index
            .get(&key)
            .map(|&i| &self.rows[i])
            .ok_or_else(|| Error::MissingGrounding {
                image_id: image_id.to_string(),
                phrase: text,
            })?;
        Ok(Grounding {
            phrase: phrase.clone(),
            bbox: row.bbox,
            features: DenseVector(row.features.clone()),
            score: row.score,
        })
    }

    fn feature_dim(&self) -> usize {
        self.dim
    }
}
