//! Attribute relevance of top-ranked explanations.
//!
//! An explanation's relevance for an image is the fraction of its mentioned
//! (attribute, noun) pairs that the image truly has. A top sentence that
//! mentions no attribute scores 0.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chunker::{chunk_phrases, tokenize, Lexicon};
use crate::error::{Error, Result};
use crate::grounding::ImageRecord;
use crate::ranker::RankedRecord;

/// Fraction of the sentence's (attribute, noun) pairs present in `image`.
pub fn attribute_relevance(sentence: &str, image: &ImageRecord, lex: &Lexicon) -> f64 {
    let phrases = chunk_phrases(&tokenize(sentence), lex);
    let mut total = 0usize;
    let mut hits = 0usize;
    for p in &phrases {
        for (a, n) in p.pairs() {
            total += 1;
            if image.has_pair(a, n) {
                hits += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEval {
    pub image_id: String,
    pub critic_top: usize,
    pub critic: f64,
    pub fluency_top: usize,
    pub fluency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub images: usize,
    pub critic_relevance: f64,
    pub fluency_relevance: f64,
    pub per_image: Vec<ImageEval>,
}

/// Highest `S_f` among candidates that mention at least one attribute
/// phrase, ties to the lowest index. Falls back to all candidates when none
/// mention one.
fn fluency_top<'a>(records: &[&'a RankedRecord], lex: &Lexicon) -> &'a RankedRecord {
    let best = |pool: &mut dyn Iterator<Item = &'a RankedRecord>| {
        pool.fold(None::<&'a RankedRecord>, |acc, r| match acc {
            Some(b) if b.s_f > r.s_f || (b.s_f == r.s_f && b.candidate_index < r.candidate_index) => Some(b),
            _ => Some(r),
        })
    };
    let mut with_phrases = records
        .iter()
        .copied()
        .filter(|r| !chunk_phrases(&tokenize(&r.sentence), lex).is_empty());
    best(&mut with_phrases)
        .or_else(|| best(&mut records.iter().copied()))
        .expect("non-empty group")
}

/// Compares the ranking's top-1 choices against an `S_f`-only baseline,
/// per image and averaged over every image with at least one record.
pub fn evaluate(records: &[RankedRecord], images: &[ImageRecord], lex: &Lexicon) -> Result<EvalReport> {
    let by_id: BTreeMap<&str, &ImageRecord> = images.iter().map(|i| (i.image_id.as_str(), i)).collect();
    let mut groups: BTreeMap<&str, Vec<&RankedRecord>> = BTreeMap::new();
    for r in records {
        if !by_id.contains_key(r.image_id.as_str()) {
            return Err(Error::ReferentialIntegrity(format!(
                "ranked record for unknown image '{}'",
                r.image_id
            )));
        }
        groups.entry(r.image_id.as_str()).or_default().push(r);
    }
    if groups.is_empty() {
        return Err(Error::InsufficientData("no ranked records to evaluate".into()));
    }

    let mut per_image = Vec::with_capacity(groups.len());
    for img in images {
        let Some(group) = groups.get(img.image_id.as_str()) else {
            continue;
        };
        let top = group
            .iter()
            .min_by_key(|r| (r.rank, r.candidate_index))
            .expect("non-empty group");
        let flu = fluency_top(group, lex);
        per_image.push(ImageEval {
            image_id: img.image_id.clone(),
            critic_top: top.candidate_index,
            critic: attribute_relevance(&top.sentence, img, lex),
            fluency_top: flu.candidate_index,
            fluency: attribute_relevance(&flu.sentence, img, lex),
        });
    }
    let n = per_image.len() as f64;
    Ok(EvalReport {
        images: per_image.len(),
        critic_relevance: per_image.iter().map(|e| e.critic).sum::<f64>() / n,
        fluency_relevance: per_image.iter().map(|e| e.fluency).sum::<f64>() / n,
        per_image,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounding::AttributePair;

    fn image() -> ImageRecord {
        ImageRecord {
            image_id: "img".into(),
            width: 100,
            height: 100,
            attributes: vec![
                AttributePair { attr: "red".into(), noun: "beak".into() },
                AttributePair { attr: "long".into(), noun: "neck".into() },
            ],
        }
    }

    fn record(index: usize, rank: usize, sentence: &str, s_f: f64) -> RankedRecord {
        RankedRecord {
            image_id: "img".into(),
            candidate_index: index,
            rank,
            sentence: sentence.into(),
            s_r: Some(0.0),
            s_f,
            combined: Some(s_f),
            phrases: Vec::new(),
            failure: None,
        }
    }

    #[test]
    fn relevance_fractions() {
        let lex = Lexicon::default();
        let img = image();
        assert_eq!(attribute_relevance("this bird has a red beak and a long neck", &img, &lex), 1.0);
        assert_eq!(attribute_relevance("this bird has a red beak and a black neck", &img, &lex), 0.5);
        assert_eq!(attribute_relevance("this is a bird", &img, &lex), 0.0);
    }

    #[test]
    fn critic_and_fluency_tops() {
        let lex = Lexicon::default();
        let records = vec![
            record(0, 1, "this bird has a red beak", -5.0),
            record(1, 2, "this bird has a black beak", -1.0),
            record(2, 3, "this is a bird", -0.5),
        ];
        let report = evaluate(&records, &[image()], &lex).unwrap();
        assert_eq!(report.images, 1);
        assert_eq!(report.critic_relevance, 1.0);
        assert_eq!(report.per_image[0].fluency_top, 1);
        assert_eq!(report.fluency_relevance, 0.0);
    }

    #[test]
    fn unknown_image_rejected() {
        let lex = Lexicon::default();
        let mut r = record(0, 1, "a red beak", -1.0);
        r.image_id = "ghost".into();
        assert!(matches!(evaluate(&[r], &[image()], &lex), Err(Error::ReferentialIntegrity(_))));
    }
}
