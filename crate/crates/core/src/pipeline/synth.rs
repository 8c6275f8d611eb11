//! Seeded synthetic benchmark standing in for a real image/explanation
//! corpus.
//!
//! Each image gets a handful of true single-attribute parts ("red beak",
//! "long neck"). Each held-out image also gets candidate explanations of
//! three kinds, shuffled together: sentences built only from true phrases,
//! the same kind of sentence with one attribute flipped, and sentences that
//! mention no attribute phrase at all. Log-probabilities come from
//! [`fluency_log_prob`] plus a small seeded jitter, so fluency carries no
//! information about image relevance.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chunker::{tokenize, AttributeCategory, AttributePhrase, Lexicon};
use crate::error::Result;
use crate::grounding::{AttributePair, GroundingRow, ImageRecord, SyntheticConfig};
use crate::jsonl;
use crate::negatives::flip_phrase;
use crate::ranker::ExplanationCandidate;
use crate::rng::SeededRng;

pub const PART_NOUNS: &[&str] = &[
    "beak", "bill", "head", "crown", "nape", "throat", "breast", "belly", "back", "wing",
    "wingbar", "tail", "rump", "flank", "eye", "eyering", "face", "cheek", "neck", "leg",
];

const ATTRIBUTE_FREE: &[&str] = &[
    "this is a bird",
    "this bird is perched on a branch",
    "this is a bird with a distinctive look",
    "a bird standing on the ground",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub train_images: usize,
    pub test_images: usize,
    pub attributes_per_image: usize,
    pub candidates_per_image: usize,
    /// Probability that a true attribute is a size word rather than a color.
    pub size_share: f64,
    /// Upper bound of the uniform penalty subtracted from each log-probability.
    pub fluency_jitter: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            train_images: 40,
            test_images: 10,
            attributes_per_image: 6,
            candidates_per_image: 20,
            size_share: 0.25,
            fluency_jitter: 0.75,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    GroundTruth,
    Flipped,
    AttributeFree,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthBenchmark {
    pub lexicon: Lexicon,
    pub train: Vec<ImageRecord>,
    pub test: Vec<ImageRecord>,
    /// Candidates for the test images, grouped by image in test order.
    pub candidates: Vec<ExplanationCandidate>,
    /// Kind of each entry of `candidates`.
    pub kinds: Vec<CandidateKind>,
}

/// Log-probability assigned by the synthetic "generator": a fixed cost per
/// token plus a penalty for every bigram that already occurred earlier in
/// the sentence.
pub fn fluency_log_prob(sentence: &str) -> f64 {
    const PER_TOKEN: f64 = 0.35;
    const REPEAT: f64 = 2.0;
    let tokens = tokenize(sentence).tokens;
    let mut seen = std::collections::BTreeSet::new();
    let mut repeats = 0usize;
    for w in tokens.windows(2) {
        if !seen.insert((w[0].as_str(), w[1].as_str())) {
            repeats += 1;
        }
    }
    -(PER_TOKEN * tokens.len() as f64) - REPEAT * repeats as f64
}

/// Renders phrases into one of the explanation templates.
pub fn render_sentence(phrases: &[String], template: usize) -> String {
    let body = match phrases.len() {
        0 => String::new(),
        1 => format!("a {}", phrases[0]),
        n => {
            let head = phrases[..n - 1]
                .iter()
                .map(|p| format!("a {p}"))
                .collect::<Vec<_>>()
                .join(" , ");
            format!("{head} and a {}", phrases[n - 1])
        }
    };
    match template % 2 {
        0 => format!("this bird has {body}"),
        _ => format!("a bird with {body}"),
    }
}

fn make_image(id: String, spec: &SynthSpec, lex: &Lexicon, rng: &mut SeededRng) -> ImageRecord {
    let mut nouns: Vec<&str> = PART_NOUNS.to_vec();
    rng.shuffle(&mut nouns);
    let colors: Vec<&String> = lex.words(AttributeCategory::Color).iter().collect();
    let sizes: Vec<&String> = lex.words(AttributeCategory::Size).iter().collect();
    let attributes = nouns
        .iter()
        .take(spec.attributes_per_image.min(nouns.len()))
        .map(|noun| {
            let pool = if !sizes.is_empty() && rng.chance(spec.size_share) { &sizes } else { &colors };
            AttributePair {
                attr: pool[rng.below(pool.len())].clone(),
                noun: noun.to_string(),
            }
        })
        .collect();
    ImageRecord {
        image_id: id,
        width: 300 + rng.below(201) as u32,
        height: 300 + rng.below(201) as u32,
        attributes,
    }
}

fn image_candidates(
    image: &ImageRecord,
    truth: &[AttributePhrase],
    spec: &SynthSpec,
    lex: &Lexicon,
    rng: &mut SeededRng,
) -> Result<Vec<(ExplanationCandidate, CandidateKind)>> {
    let mut out = Vec::with_capacity(spec.candidates_per_image);
    for index in 0..spec.candidates_per_image {
        let roll = rng.uniform(0.0, 1.0);
        let kind = if roll < 0.4 {
            CandidateKind::GroundTruth
        } else if roll < 0.8 {
            CandidateKind::Flipped
        } else {
            CandidateKind::AttributeFree
        };
        let sentence = match kind {
            CandidateKind::AttributeFree => ATTRIBUTE_FREE[rng.below(ATTRIBUTE_FREE.len())].to_string(),
            _ => {
                let k = (2 + rng.below(2)).min(truth.len());
                let mut picks: Vec<usize> = (0..truth.len()).collect();
                rng.shuffle(&mut picks);
                let mut phrases: Vec<AttributePhrase> = picks[..k].iter().map(|&i| truth[i].clone()).collect();
                if kind == CandidateKind::Flipped {
                    let j = rng.below(k);
                    phrases[j] = flip_phrase(&phrases[j], lex, rng)?;
                }
                let texts: Vec<String> = phrases.iter().map(AttributePhrase::text).collect();
                render_sentence(&texts, rng.below(2))
            }
        };
        let log_prob = fluency_log_prob(&sentence) - rng.uniform(0.0, spec.fluency_jitter);
        out.push((ExplanationCandidate::new(&image.image_id, index, &sentence, log_prob)?, kind));
    }
    Ok(out)
}

/// Generates the benchmark deterministically from `spec.seed`.
pub fn generate(spec: &SynthSpec, lex: &Lexicon) -> Result<SynthBenchmark> {
    let root = SeededRng::new(spec.seed);
    let mut img_rng = root.derive("images");
    let train = (0..spec.train_images)
        .map(|i| make_image(format!("synth-train-{i:03}"), spec, lex, &mut img_rng))
        .collect();
    let test: Vec<ImageRecord> = (0..spec.test_images)
        .map(|i| make_image(format!("synth-test-{i:03}"), spec, lex, &mut img_rng))
        .collect();

    let mut cand_rng = root.derive("candidates");
    let mut candidates = Vec::new();
    let mut kinds = Vec::new();
    for image in &test {
        let truth = image.ground_truth_phrases(lex)?;
        for (c, k) in image_candidates(image, &truth, spec, lex, &mut cand_rng)? {
            candidates.push(c);
            kinds.push(k);
        }
    }
    Ok(SynthBenchmark {
        lexicon: lex.clone(),
        train,
        test,
        candidates,
        kinds,
    })
}

impl SynthBenchmark {
    /// Groundings of every phrase the test candidates mention, for replay
    /// through the file grounder.
    pub fn groundings(&self, config: &SyntheticConfig) -> Vec<GroundingRow> {
        let mut rows = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.candidates {
            let image = self
                .test
                .iter()
                .find(|i| i.image_id == c.image_id)
                .expect("candidate image exists");
            for phrase in crate::chunker::chunk_phrases(&c.tokens, &self.lexicon) {
                if seen.insert((c.image_id.clone(), phrase.text())) {
                    let g = crate::grounding::synthetic_ground(image, &phrase, config);
                    rows.push(GroundingRow::from_grounding(&c.image_id, &g));
                }
            }
        }
        rows
    }

    /// Writes `lexicon.toml`, `train_images.jsonl`, `test_images.jsonl`,
    /// `candidates.jsonl` and `groundings.jsonl` into `dir`.
    pub fn write(&self, dir: &Path, config: &SyntheticConfig) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        self.lexicon.save(dir.join("lexicon.toml"))?;
        jsonl::write_jsonl(dir.join("train_images.jsonl"), &self.train)?;
        jsonl::write_jsonl(dir.join("test_images.jsonl"), &self.test)?;
        jsonl::write_jsonl(dir.join("candidates.jsonl"), &self.candidates)?;
        jsonl::write_jsonl(dir.join("groundings.jsonl"), &self.groundings(config))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repetition_costs_fluency() {
        let fluent = "this bird has a long neck and a red beak";
        let dup = "this bird has a long neck , long neck and a red beak";
        assert!(fluency_log_prob(dup) < fluency_log_prob(fluent) - 2.0);
        assert!(fluency_log_prob(fluent) < 0.0);
    }

    #[test]
    fn templates() {
        let p = vec!["red beak".to_string(), "long neck".to_string(), "black face".to_string()];
        assert_eq!(render_sentence(&p[..2], 0), "this bird has a red beak and a long neck");
        assert_eq!(render_sentence(&p, 1), "a bird with a red beak , a long neck and a black face");
    }

    #[test]
    fn default_benchmark_shape_and_determinism() {
        let lex = Lexicon::default();
        let a = generate(&SynthSpec::default(), &lex).unwrap();
        assert_eq!(a.train.len(), 40);
        assert_eq!(a.test.len(), 10);
        assert_eq!(a.candidates.len(), 200);
        for img in a.train.iter().chain(&a.test) {
            img.validate(&lex).unwrap();
            assert_eq!(img.attributes.len(), 6);
        }
        assert_eq!(a, generate(&SynthSpec::default(), &lex).unwrap());
        let other = generate(&SynthSpec { seed: 1, ..SynthSpec::default() }, &lex).unwrap();
        assert_ne!(a.train, other.train);
    }

    #[test]
    fn candidate_kinds_match_content() {
        let lex = Lexicon::default();
        let b = generate(&SynthSpec::default(), &lex).unwrap();
        for (c, kind) in b.candidates.iter().zip(&b.kinds) {
            let img = b.test.iter().find(|i| i.image_id == c.image_id).unwrap();
            let phrases = crate::chunker::chunk_phrases(&c.tokens, &lex);
            let true_count = phrases.iter().filter(|p| p.pairs().all(|(a, n)| img.has_pair(a, n))).count();
            match kind {
                CandidateKind::AttributeFree => assert!(phrases.is_empty(), "{}", c.sentence),
                CandidateKind::GroundTruth => assert_eq!(true_count, phrases.len()),
                CandidateKind::Flipped => assert_eq!(true_count + 1, phrases.len(), "{}", c.sentence),
            }
        }
    }
}
