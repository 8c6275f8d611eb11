use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{critic_score, CriticModel, LossGraph, TrainPair};
use crate::chunker::{AttributePhrase, Lexicon};
use crate::error::{Error, Result};
use crate::grounding::{ground_all, Grounder, ImageRecord};
use crate::negatives::{make_negative, sample_mismatch, FlipPolicy};
use crate::rng::SeededRng;
use crate::tensor::{adam_step, margin_ranking_loss, AdamConfig, AdamState, GradStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub margin: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub negatives_per_image: usize,
    pub flip: FlipPolicy,
    /// Stop after this many epochs without a lower mean loss; 0 disables.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            margin: 1.0,
            epochs: 50,
            learning_rate: 1e-3,
            seed: 0,
            negatives_per_image: 5,
            flip: FlipPolicy::default(),
            patience: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::invalid(format!("margin must be >= 0, got {}", self.margin)));
        }
        if self.epochs < 1 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.negatives_per_image < 1 {
            return Err(Error::invalid("negatives_per_image must be at least 1"));
        }
        self.adam().validate()?;
        self.flip.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: CriticModel,
    pub history: Vec<EpochRecord>,
}

/// Pair loss `max(0, S_r(neg) − S_r(pos) + margin)`.
pub fn train_pair_loss(model: &CriticModel, pair: &TrainPair, margin: f64) -> Result<f64> {
    pair.validate()?;
    let pos = critic_score(model, &pair.positive)?;
    let neg = critic_score(model, &pair.negative)?;
    margin_ranking_loss(pos, neg, margin)
}

/// Everything needed to sample pairs for one image, computed once.
struct ImageSource<'a> {
    image: &'a ImageRecord,
    truth: Vec<AttributePhrase>,
}

fn sources<'a>(images: &'a [ImageRecord], lex: &Lexicon) -> Result<Vec<ImageSource<'a>>> {
    images
        .iter()
        .map(|image| {
            let truth = image.ground_truth_phrases(lex)?;
            if truth.is_empty() {
                return Err(Error::invalid(format!(
                    "image '{}' has no ground-truth attributes",
                    image.image_id
                )));
            }
            Ok(ImageSource { image, truth })
        })
        .collect()
}

fn negative_phrases(
    src: &ImageSource<'_>,
    all: &BTreeMap<String, Vec<AttributePhrase>>,
    lex: &Lexicon,
    policy: &FlipPolicy,
    rng: &mut SeededRng,
) -> Result<Vec<AttributePhrase>> {
    let truth = src.image.attribute_set();
    match make_negative(&src.truth, lex, policy, rng, Some(&truth)) {
        Ok(neg) => Ok(neg),
        Err(Error::NotFlippable(_)) => sample_mismatch(all, &src.image.image_id, rng),
        Err(e) => Err(e),
    }
}

fn sample_image_pairs<G: Grounder + ?Sized>(
    src: &ImageSource<'_>,
    all: &BTreeMap<String, Vec<AttributePhrase>>,
    grounder: &G,
    lex: &Lexicon,
    policy: &FlipPolicy,
    count: usize,
    rng: &mut SeededRng,
) -> Result<Vec<TrainPair>> {
    let id = &src.image.image_id;
    let positive = ground_all(grounder, id, &src.truth)?;
    (0..count)
        .map(|_| {
            let neg = negative_phrases(src, all, lex, policy, rng)?;
            Ok(TrainPair {
                image_id: id.clone(),
                positive: positive.clone(),
                negative: ground_all(grounder, id, &neg)?,
            })
        })
        .collect()
}

fn truth_map(srcs: &[ImageSource<'_>]) -> BTreeMap<String, Vec<AttributePhrase>> {
    srcs.iter()
        .map(|s| (s.image.image_id.clone(), s.truth.clone()))
        .collect()
}

/// `per_image` positive/flipped pairs for every image, in image order.
pub fn build_pairs<G: Grounder + ?Sized>(
    images: &[ImageRecord],
    grounder: &G,
    lex: &Lexicon,
    policy: &FlipPolicy,
    per_image: usize,
    rng: &mut SeededRng,
) -> Result<Vec<TrainPair>> {
    let srcs = sources(images, lex)?;
    let all = truth_map(&srcs);
    let mut pairs = Vec::with_capacity(images.len() * per_image);
    for src in &srcs {
        pairs.extend(sample_image_pairs(src, &all, grounder, lex, policy, per_image, rng)?);
    }
    Ok(pairs)
}

/// Trains with one Adam step per pair.
///
/// Every epoch visits the images in a freshly shuffled order and draws
/// `negatives_per_image` new flipped negatives for each. Images without a
/// flippable attribute fall back to another image's phrases. All randomness
/// comes from `config.seed`, so identical inputs give identical parameters.
pub fn train<G: Grounder + ?Sized>(
    mut model: CriticModel,
    images: &[ImageRecord],
    grounder: &G,
    lex: &Lexicon,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    model.validate()?;
    if images.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if grounder.feature_dim() != model.dims().feature_dim {
        return Err(Error::invalid(format!(
            "grounder feature dimension {} does not match critic feature_dim {}",
            grounder.feature_dim(),
            model.dims().feature_dim
        )));
    }
    let srcs = sources(images, lex)?;
    let all = truth_map(&srcs);

    let mut rng = SeededRng::new(config.seed).derive("train");
    let mut adam = AdamState::new(config.adam(), &model)?;
    let mut grads = GradStore::zeros_like(&model);
    let mut order: Vec<usize> = (0..srcs.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0;

    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        let mut count = 0usize;
        for &i in &order {
            let pairs = sample_image_pairs(
                &srcs[i],
                &all,
                grounder,
                lex,
                &config.flip,
                config.negatives_per_image,
                &mut rng,
            )?;
            for pair in &pairs {
                let mut graph = LossGraph::new(&model, pair, config.margin);
                let loss = graph.forward()?;
                if !loss.is_finite() {
                    return Err(Error::NumericFailure(format!("loss became {loss} in epoch {epoch}")));
                }
                grads.zero();
                graph.backward(&mut grads)?;
                adam_step(&mut adam, &mut model, &grads)?;
                total += loss;
                count += 1;
            }
        }
        let mean_loss = total / count as f64;
        history.push(EpochRecord { epoch, mean_loss });

        if mean_loss < best {
            best = mean_loss;
            stale = 0;
        } else {
            stale += 1;
            if config.patience > 0 && stale >= config.patience {
                break;
            }
        }
    }
    if !crate::tensor::ParamSet::all_finite(&model) {
        return Err(Error::NumericFailure("training produced non-finite parameters".into()));
    }
    Ok(TrainOutcome { model, history })
}

/// Fraction of pairs with `S_r(pos) > S_r(neg)`; ties count as failures.
pub fn pairwise_accuracy(model: &CriticModel, pairs: &[TrainPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("pairwise accuracy of an empty pair list"));
    }
    let mut wins = 0usize;
    for pair in pairs {
        pair.validate()?;
        if critic_score(model, &pair.positive)? > critic_score(model, &pair.negative)? {
            wins += 1;
        }
    }
    Ok(wins as f64 / pairs.len() as f64)
}
