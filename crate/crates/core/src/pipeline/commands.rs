//! Command bodies shared by the CLI and the tests. Each takes already
//! loaded inputs and returns serializable records.

use serde::{Deserialize, Serialize};

use crate::chunker::{chunk_phrases, tokenize, AttributePhrase, Lexicon};
use crate::critic::{build_pairs, critic_score, pairwise_accuracy, train, CriticModel, EpochRecord};
use crate::error::{Error, Result};
use crate::grounding::{ground_all, Grounder, ImageRecord};
use crate::negatives::{make_negative, FlipPolicy};
use crate::ranker::{rank, ExplanationCandidate, RankOptions, RankedRecord};
use crate::rng::SeededRng;

use super::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkedPhrase {
    pub text: String,
    #[serde(flatten)]
    pub phrase: AttributePhrase,
}

impl From<AttributePhrase> for ChunkedPhrase {
    fn from(phrase: AttributePhrase) -> Self {
        ChunkedPhrase {
            text: phrase.text(),
            phrase,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub sentence: String,
    pub tokens: Vec<String>,
    pub phrases: Vec<ChunkedPhrase>,
}

pub fn chunk_sentence(sentence: &str, lex: &Lexicon) -> ChunkRecord {
    let tokens = tokenize(sentence);
    let phrases = chunk_phrases(&tokens, lex).into_iter().map(ChunkedPhrase::from).collect();
    ChunkRecord {
        sentence: sentence.to_string(),
        tokens: tokens.tokens,
        phrases,
    }
}

/// One record per non-blank line.
pub fn chunk_lines(text: &str, lex: &Lexicon) -> Vec<ChunkRecord> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| chunk_sentence(l, lex))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipRecord {
    pub sentence: String,
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

/// Chunks `sentence` and draws one flipped-attribute negative of its phrases.
pub fn flip_sentence(sentence: &str, lex: &Lexicon, policy: &FlipPolicy, rng: &mut SeededRng) -> Result<FlipRecord> {
    let phrases = chunk_phrases(&tokenize(sentence), lex);
    let negative = make_negative(&phrases, lex, policy, rng, None)?;
    Ok(FlipRecord {
        sentence: sentence.to_string(),
        positive: phrases.iter().map(AttributePhrase::text).collect(),
        negative: negative.iter().map(AttributePhrase::text).collect(),
    })
}

/// Seeded split into (train, held-out). The held-out share is rounded to
/// the nearest image count, but leaves at least one training image. Both
/// halves keep file order.
pub fn holdout_split(images: &[ImageRecord], fraction: f64, seed: u64) -> Result<(Vec<ImageRecord>, Vec<ImageRecord>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(format!("holdout fraction must be in [0, 1), got {fraction}")));
    }
    let n = images.len();
    let k = ((fraction * n as f64).round() as usize).min(n.saturating_sub(1));
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).derive("holdout").shuffle(&mut order);
    let mut held = vec![false; n];
    for &i in &order[..k] {
        held[i] = true;
    }
    let (mut train, mut holdout) = (Vec::new(), Vec::new());
    for (img, h) in images.iter().zip(held) {
        if h {
            holdout.push(img.clone());
        } else {
            train.push(img.clone());
        }
    }
    Ok((train, holdout))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_images: usize,
    pub holdout_images: usize,
    pub epochs_run: usize,
    pub final_loss: f64,
    pub holdout_accuracy: Option<f64>,
}

/// Initializes a critic from the run seed, trains it on `train_images` and
/// measures pairwise accuracy on freshly sampled pairs of `holdout`.
pub fn run_train<G: Grounder + ?Sized>(
    config: &RunConfig,
    train_images: &[ImageRecord],
    holdout: &[ImageRecord],
    grounder: &G,
    lex: &Lexicon,
) -> Result<(CriticModel, Vec<EpochRecord>, TrainReport)> {
    config.validate()?;
    let tc = config.train_config();
    let mut init_rng = SeededRng::new(config.seed).derive("init");
    let model = CriticModel::init(config.dims, &mut init_rng)?;
    let outcome = train(model, train_images, grounder, lex, &tc)?;
    let holdout_accuracy = if holdout.is_empty() {
        None
    } else {
        let mut rng = SeededRng::new(config.seed).derive("holdout-pairs");
        let pairs = build_pairs(holdout, grounder, lex, &tc.flip, tc.negatives_per_image, &mut rng)?;
        Some(pairwise_accuracy(&outcome.model, &pairs)?)
    };
    let report = TrainReport {
        train_images: train_images.len(),
        holdout_images: holdout.len(),
        epochs_run: outcome.history.len(),
        final_loss: outcome.history.last().map_or(f64::NAN, |h| h.mean_loss),
        holdout_accuracy,
    };
    Ok((outcome.model, outcome.history, report))
}

/// Ranks every image's candidates; output follows the order of `candidates`
/// grouped by image in first-appearance order.
pub fn rank_candidates<G: Grounder + ?Sized>(
    candidates: &[ExplanationCandidate],
    model: &CriticModel,
    grounder: &G,
    lex: &Lexicon,
    options: &RankOptions,
) -> Result<Vec<RankedRecord>> {
    let mut groups: Vec<(&str, Vec<ExplanationCandidate>)> = Vec::new();
    for c in candidates {
        match groups.iter_mut().find(|(id, _)| *id == c.image_id) {
            Some((_, g)) => g.push(c.clone()),
            None => groups.push((&c.image_id, vec![c.clone()])),
        }
    }
    let mut out = Vec::with_capacity(candidates.len());
    for (_, group) in &groups {
        let ranked = rank(group, model, grounder, lex, options)?;
        out.extend(ranked.iter().map(RankedRecord::from));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub image_id: String,
    pub candidate_index: usize,
    pub sentence: String,
    pub phrases: Vec<String>,
    #[serde(rename = "S_r")]
    pub s_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Critic relevance of each candidate, without reordering.
pub fn score_candidates<G: Grounder + ?Sized>(
    candidates: &[ExplanationCandidate],
    model: &CriticModel,
    grounder: &G,
    lex: &Lexicon,
) -> Result<Vec<ScoreRecord>> {
    candidates
        .iter()
        .map(|c| {
            let phrases = chunk_phrases(&c.tokens, lex);
            let mut rec = ScoreRecord {
                image_id: c.image_id.clone(),
                candidate_index: c.candidate_index,
                sentence: c.sentence.clone(),
                phrases: phrases.iter().map(AttributePhrase::text).collect(),
                s_r: None,
                failure: None,
            };
            if phrases.is_empty() {
                rec.failure = Some("no attribute phrase".into());
                return Ok(rec);
            }
            match ground_all(grounder, &c.image_id, &phrases) {
                Ok(g) => rec.s_r = Some(critic_score(model, &g)?),
                Err(e) => rec.failure = Some(e.to_string()),
            }
            Ok(rec)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::synth::{generate, SynthSpec};

    #[test]
    fn chunk_lines_skips_blank_lines() {
        let lex = Lexicon::default();
        let recs = chunk_lines("the red bird has a red beak and a black face\n\n  \nthis is a bird\n", &lex);
        assert_eq!(recs.len(), 2);
        let texts: Vec<&str> = recs[0].phrases.iter().map(|p| p.text.as_str()).collect();
        assert_eq!(texts, ["red bird", "red beak", "black face"]);
        assert!(recs[1].phrases.is_empty());
        assert!(chunk_lines("", &lex).is_empty());
    }

    #[test]
    fn chunk_record_round_trips() {
        let lex = Lexicon::default();
        let rec = chunk_sentence("a large white bird with a long neck", &lex);
        let back: ChunkRecord = serde_json::from_str(&serde_json::to_string(&rec).unwrap()).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn flip_changes_something() {
        let lex = Lexicon::default();
        let mut rng = SeededRng::new(3);
        let r = flip_sentence("this bird has a red beak", &lex, &FlipPolicy::default(), &mut rng).unwrap();
        assert_eq!(r.positive, ["red beak"]);
        assert_ne!(r.negative, r.positive);
        assert!(r.negative[0].ends_with(" beak"));
        assert!(matches!(
            flip_sentence("this is a bird", &lex, &FlipPolicy::default(), &mut rng),
            Err(Error::NotFlippable(_))
        ));
    }

    #[test]
    fn holdout_split_is_seeded_partition() {
        let lex = Lexicon::default();
        let b = generate(&SynthSpec::default(), &lex).unwrap();
        let (tr, ho) = holdout_split(&b.train, 0.2, 7).unwrap();
        assert_eq!((tr.len(), ho.len()), (32, 8));
        assert_eq!(holdout_split(&b.train, 0.2, 7).unwrap(), (tr.clone(), ho.clone()));
        let mut ids: Vec<&str> = tr.iter().chain(&ho).map(|i| i.image_id.as_str()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 40);
        let (tr0, ho0) = holdout_split(&b.train[..1], 0.5, 0).unwrap();
        assert_eq!((tr0.len(), ho0.len()), (1, 0));
    }
}
