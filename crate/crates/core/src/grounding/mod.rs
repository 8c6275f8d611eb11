//! Attribute phrase grounding: the `(phrase, region, score)` contract and
//! two implementations, a replay of precomputed groundings from a file and
//! a deterministic synthetic grounder driven by known image attributes.

mod file;
mod synthetic;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use file::{FileGrounder, GroundingRow};
pub use synthetic::{synthetic_ground, SyntheticConfig, SyntheticGrounder};

use crate::chunker::{AttributePhrase, Lexicon};
use crate::error::{Error, Result};
use crate::tensor::DenseVector;

/// Set of true `(attribute, noun)` pairs.
pub type AttributeSet = BTreeSet<(String, String)>;

/// Axis-aligned box in pixels, top-left origin. Serialized as `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let ok = [x, y, w, h].iter().all(|v| v.is_finite()) && x >= 0.0 && y >= 0.0 && w > 0.0 && h > 0.0;
        if !ok {
            return Err(Error::invalid(format!("invalid bounding box [{x}, {y}, {w}, {h}]")));
        }
        Ok(BoundingBox { x, y, w, h })
    }

    pub fn fits_within(&self, width: f64, height: f64) -> bool {
        self.x + self.w <= width && self.y + self.h <= height
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = String;

    fn try_from(v: [f64; 4]) -> std::result::Result<Self, String> {
        BoundingBox::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

/// One grounded attribute phrase: the region it was localized to, that
/// region's feature vector and the grounder's raw (unnormalized) score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grounding {
    pub phrase: AttributePhrase,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub features: DenseVector,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AttributePair {
    pub attr: String,
    pub noun: String,
}

/// An image known by id, size and true attributes.
///
/// This is also the images file record:
/// `{"image_id", "width", "height", "attributes": [{"attr", "noun"}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRecord {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub attributes: Vec<AttributePair>,
}

impl ImageRecord {
    pub fn attribute_set(&self) -> AttributeSet {
        self.attributes
            .iter()
            .map(|p| (p.attr.clone(), p.noun.clone()))
            .collect()
    }

    pub fn has_pair(&self, attr: &str, noun: &str) -> bool {
        self.attributes.iter().any(|p| p.attr == attr && p.noun == noun)
    }

    /// One single-attribute phrase per true pair, laid out as if read from
    /// "a {attr} {noun} a {attr} {noun} ...".
    pub fn ground_truth_phrases(&self, lex: &Lexicon) -> Result<Vec<AttributePhrase>> {
        self.attributes
            .iter()
            .enumerate()
            .map(|(i, p)| AttributePhrase::from_words(&[p.attr.as_str()], &p.noun, 3 * i + 1, lex))
            .collect()
    }

    pub fn validate(&self, lex: &Lexicon) -> Result<()> {
        if self.image_id.is_empty() {
            return Err(Error::invalid("image_id must be nonempty"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid(format!("image '{}' has a zero dimension", self.image_id)));
        }
        let mut seen = BTreeSet::new();
        for p in &self.attributes {
            if lex.category(&p.attr).is_none() {
                return Err(Error::invalid(format!(
                    "image '{}': attribute '{}' is not in the lexicon",
                    self.image_id, p.attr
                )));
            }
            if !seen.insert(p) {
                return Err(Error::invalid(format!(
                    "image '{}': duplicate attribute '{} {}'",
                    self.image_id, p.attr, p.noun
                )));
            }
        }
        Ok(())
    }
}

/// Localizes attribute phrases in images.
///
/// Implementations are deterministic: the same `(image_id, phrase)` always
/// yields the same grounding.
pub trait Grounder {
    fn ground(&self, image_id: &str, phrase: &AttributePhrase) -> Result<Grounding>;
    fn feature_dim(&self) -> usize;
}

impl<G: Grounder + ?Sized> Grounder for &G {
    fn ground(&self, image_id: &str, phrase: &AttributePhrase) -> Result<Grounding> {
        (**self).ground(image_id, phrase)
    }

    fn feature_dim(&self) -> usize {
        (**self).feature_dim()
    }
}

impl<G: Grounder + ?Sized> Grounder for Box<G> {
    fn ground(&self, image_id: &str, phrase: &AttributePhrase) -> Result<Grounding> {
        (**self).ground(image_id, phrase)
    }

    fn feature_dim(&self) -> usize {
        (**self).feature_dim()
    }
}

/// Grounds every phrase in order. Failures name the offending phrase.
pub fn ground_all<G: Grounder + ?Sized>(
    grounder: &G,
    image_id: &str,
    phrases: &[AttributePhrase],
) -> Result<Vec<Grounding>> {
    if phrases.is_empty() {
        return Err(Error::invalid(format!("no phrases to ground for image '{image_id}'")));
    }
    phrases
        .iter()
        .map(|p| {
            grounder.ground(image_id, p).map_err(|e| match e {
                e @ Error::MissingGrounding { .. } => e,
                other => Error::invalid(format!("grounding '{p}' on '{image_id}': {other}")),
            })
        })
        .collect()
}
