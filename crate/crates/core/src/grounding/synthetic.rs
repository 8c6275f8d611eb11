use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{BoundingBox, Grounder, Grounding, ImageRecord};
use crate::chunker::AttributePhrase;
use crate::error::{Error, Result};
use crate::hash::fnv1a_parts;
use crate::rng::SeededRng;
use crate::tensor::DenseVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Region feature dimension.
    pub feature_dim: usize,
    /// Half-width of the uniform score noise.
    pub sigma: f64,
    pub base_match: f64,
    pub base_miss: f64,
    /// Mixed into every derived seed.
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            feature_dim: 64,
            sigma: 0.0,
            base_match: 0.8,
            base_miss: 0.2,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::invalid("synthetic feature_dim must be positive"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("synthetic sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.base_match.is_finite() && self.base_miss.is_finite()) {
            return Err(Error::invalid("synthetic base scores must be finite"));
        }
        Ok(())
    }
}

fn stream(config: &SyntheticConfig, parts: &[&str]) -> SeededRng {
    let seed = config.seed.to_string();
    let mut all = vec![seed.as_str()];
    all.extend_from_slice(parts);
    SeededRng::new(fnv1a_parts(&all))
}

/// Grounds `phrase` in `image` without any vision model.
///
/// A phrase matches when every one of its `(attribute, noun)` pairs is true
/// for the image. Features are a unit vector derived from the phrase words
/// and the match flag only, so the same phrase looks the same across images.
/// The score is `base_match` or `base_miss` plus noise in `[-σ, σ]` derived
/// from `(image_id, phrase)`; the box is a sub-rectangle of the image
/// derived the same way.
pub fn synthetic_ground(image: &ImageRecord, phrase: &AttributePhrase, config: &SyntheticConfig) -> Grounding {
    let matched = phrase.pairs().all(|(a, n)| image.has_pair(a, n));
    let attrs = phrase
        .attributes
        .iter()
        .map(|a| a.word.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    let flag = if matched { "1" } else { "0" };

    let mut feat_rng = stream(config, &["features", &phrase.head_noun, &attrs, flag]);
    let mut features: Vec<f64> = (0..config.feature_dim)
        .map(|_| feat_rng.uniform(-1.0, 1.0))
        .collect();
    let norm = features.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        features.iter_mut().for_each(|v| *v /= norm);
    } else {
        features[0] = 1.0;
    }

    let text = phrase.text();
    let base = if matched { config.base_match } else { config.base_miss };
    let noise = if config.sigma > 0.0 {
        stream(config, &["noise", &image.image_id, &text]).uniform(-config.sigma, config.sigma)
    } else {
        0.0
    };

    let mut box_rng = stream(config, &["box", &image.image_id, &text]);
    let (iw, ih) = (image.width as f64, image.height as f64);
    let w = box_rng.uniform(0.1 * iw, 0.5 * iw).max(f64::MIN_POSITIVE);
    let h = box_rng.uniform(0.1 * ih, 0.5 * ih).max(f64::MIN_POSITIVE);
    let x = box_rng.uniform(0.0, iw - w);
    let y = box_rng.uniform(0.0, ih - h);

    Grounding {
        phrase: phrase.clone(),
        bbox: BoundingBox { x, y, w, h },
        features: DenseVector(features),
        score: base + noise,
    }
}

/// [`synthetic_ground`] over a fixed set of images.
#[derive(Debug, Clone)]
pub struct SyntheticGrounder {
    config: SyntheticConfig,
    images: BTreeMap<String, ImageRecord>,
}

impl SyntheticGrounder {
    pub fn new<'a>(config: SyntheticConfig, images: impl IntoIterator<Item = &'a ImageRecord>) -> Result<Self> {
        config.validate()?;
        let images = images
            .into_iter()
            .map(|img| (img.image_id.clone(), img.clone()))
            .collect();
        Ok(SyntheticGrounder { config, images })
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.config
    }
}

impl Grounder for SyntheticGrounder {
    fn ground(&self, image_id: &str, phrase: &AttributePhrase) -> Result<Grounding> {
        let image = self.images.get(image_id).ok_or_else(|| Error::MissingGrounding {
            image_id: image_id.to_string(),
            phrase: phrase.text(),
        })?;
        Ok(synthetic_ground(image, phrase, &self.config))
    }

    fn feature_dim(&self) -> usize {
        self.config.feature_dim
    }
}
