//! Negative explanations for ranking-loss training.
//!
//! The main route replaces color/size attribute words with other words of
//! the same lexicon category, producing a phrase list that still mostly
//! matches the image but is no longer fully correct. A naive sampler that
//! borrows another image's phrases is kept for ablations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chunker::{AttributePhrase, Lexicon};
use crate::error::{Error, Result};
use crate::grounding::AttributeSet;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlipPolicy {
    /// Independent flip probability of every eligible attribute token.
    pub flip_probability: f64,
    /// Lower bound on flipped tokens; met by forced flips when needed.
    pub min_flips: usize,
    /// Avoid replacements whose `(attribute, noun)` pair is true for the image.
    pub exclude_image_attributes: bool,
}

impl Default for FlipPolicy {
    fn default() -> Self {
        FlipPolicy {
            flip_probability: 0.5,
            min_flips: 1,
            exclude_image_attributes: false,
        }
    }
}

impl FlipPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.flip_probability > 0.0 && self.flip_probability <= 1.0) {
            return Err(Error::invalid(format!(
                "flip_probability must be in (0, 1], got {}",
                self.flip_probability
            )));
        }
        if self.min_flips < 1 {
            return Err(Error::invalid("min_flips must be at least 1"));
        }
        Ok(())
    }
}

/// Replacement words for one attribute token, excluding the original and,
/// when `exclude` is given, words forming a true pair with `noun`.
fn replacements<'a>(lex: &'a Lexicon, word: &str, noun: &str, category: crate::AttributeCategory, exclude: Option<&AttributeSet>) -> Vec<&'a str> {
    lex.words(category)
        .iter()
        .map(String::as_str)
        .filter(|w| *w != word)
        .filter(|w| exclude.is_none_or(|set| !set.contains(&(w.to_string(), noun.to_string()))))
        .collect()
}

/// Replaces exactly one color/size word of `phrase` with a different word of
/// the same category, chosen uniformly.
pub fn flip_phrase(phrase: &AttributePhrase, lex: &Lexicon, rng: &mut SeededRng) -> Result<AttributePhrase> {
    let eligible: Vec<(usize, Vec<&str>)> = phrase
        .attributes
        .iter()
        .enumerate()
        .filter(|(_, a)| a.category.is_flippable())
        .map(|(i, a)| (i, replacements(lex, &a.word, &phrase.head_noun, a.category, None)))
        .filter(|(_, r)| !r.is_empty())
        .collect();
    let (idx, options) = rng
        .choose(&eligible)
        .ok_or_else(|| Error::NotFlippable(format!("'{phrase}' has no flippable color or size word")))?;
    let mut out = phrase.clone();
    out.attributes[*idx].word = options[rng.below(options.len())].to_string();
    Ok(out)
}

/// Builds a flipped-attribute negative for a whole phrase list.
///
/// Each eligible token flips independently with `policy.flip_probability`;
/// if fewer than `policy.min_flips` flipped, uniformly chosen unflipped
/// eligible tokens are forced until the minimum is met.
pub fn make_negative(
    phrases: &[AttributePhrase],
    lex: &Lexicon,
    policy: &FlipPolicy,
    rng: &mut SeededRng,
    image_attributes: Option<&AttributeSet>,
) -> Result<Vec<AttributePhrase>> {
    policy.validate()?;
    let exclude = if policy.exclude_image_attributes {
        image_attributes
    } else {
        None
    };

    let mut eligible = Vec::new();
    for (p, phrase) in phrases.iter().enumerate() {
        for (t, attr) in phrase.attributes.iter().enumerate() {
            if !attr.category.is_flippable() {
                continue;
            }
            let options = replacements(lex, &attr.word, &phrase.head_noun, attr.category, exclude);
            if !options.is_empty() {
                eligible.push((p, t, options));
            }
        }
    }
    if eligible.len() < policy.min_flips {
        return Err(Error::NotFlippable(format!(
            "{} flippable attribute token(s), policy requires {}",
            eligible.len(),
            policy.min_flips
        )));
    }

    let mut flip: Vec<bool> = eligible
        .iter()
        .map(|_| rng.chance(policy.flip_probability))
        .collect();
    let mut flipped = flip.iter().filter(|&&f| f).count();
    while flipped < policy.min_flips {
        let pending: Vec<usize> = (0..flip.len()).filter(|&k| !flip[k]).collect();
        flip[pending[rng.below(pending.len())]] = true;
        flipped += 1;
    }

    let mut out = phrases.to_vec();
    for ((p, t, options), _) in eligible.iter().zip(&flip).filter(|(_, &f)| f) {
        out[*p].attributes[*t].word = options[rng.below(options.len())].to_string();
    }
    Ok(out)
}

/// Ground-truth phrases of a uniformly chosen image other than `image_id`.
pub fn sample_mismatch(
    dataset: &BTreeMap<String, Vec<AttributePhrase>>,
    image_id: &str,
    rng: &mut SeededRng,
) -> Result<Vec<AttributePhrase>> {
    let others: Vec<&String> = dataset.keys().filter(|k| k.as_str() != image_id).collect();
    if dataset.len() < 2 || others.is_empty() {
        return Err(Error::InsufficientData(format!(
            "mismatch sampling needs at least two images, dataset has {}",
            dataset.len()
        )));
    }
    Ok(dataset[others[rng.below(others.len())]].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunker::AttributeCategory;

    fn lex3() -> Lexicon {
        Lexicon::new(
            vec!["red", "black", "yellow"],
            vec!["long", "short"],
            vec!["striped"],
            vec!["a", "the", "and"],
        )
        .unwrap()
    }

    fn phrase(attrs: &[&str], noun: &str, lex: &Lexicon) -> AttributePhrase {
        AttributePhrase::from_words(attrs, noun, 0, lex).unwrap()
    }

    #[test]
    fn flip_red_head() {
        let lex = lex3();
        let p = phrase(&["red"], "head", &lex);
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..200 {
            let f = flip_phrase(&p, &lex, &mut SeededRng::new(seed)).unwrap();
            assert_eq!(f.head_noun, "head");
            assert_eq!(f.span, p.span);
            assert_eq!(f.attributes[0].category, AttributeCategory::Color);
            seen.insert(f.text());
        }
        let want: std::collections::BTreeSet<String> =
            ["black head", "yellow head"].iter().map(|s| s.to_string()).collect();
        assert_eq!(seen, want);
    }

    #[test]
    fn flip_changes_exactly_one_token() {
        let lex = lex3();
        let p = phrase(&["long", "striped", "red"], "tail", &lex);
        for seed in 0..50 {
            let f = flip_phrase(&p, &lex, &mut SeededRng::new(seed)).unwrap();
            let changed = f.attributes.iter().zip(&p.attributes).filter(|(a, b)| a.word != b.word).count();
            assert_eq!(changed, 1);
            assert_eq!(f.attributes[1].word, "striped");
        }
    }

    #[test]
    fn unflippable_phrases() {
        let lex = lex3();
        let p = phrase(&["striped"], "tail", &lex);
        assert!(matches!(flip_phrase(&p, &lex, &mut SeededRng::new(0)), Err(Error::NotFlippable(_))));
        let tiny = Lexicon::new(vec!["red"], vec![], vec![], vec![]).unwrap();
        let p = phrase(&["red"], "head", &tiny);
        assert!(matches!(flip_phrase(&p, &tiny, &mut SeededRng::new(0)), Err(Error::NotFlippable(_))));
    }

    #[test]
    fn make_negative_yellow_belly_red_head() {
        let lex = lex3();
        let pos = vec![phrase(&["yellow"], "belly", &lex), phrase(&["red"], "head", &lex)];
        for seed in 0..100 {
            let neg = make_negative(&pos, &lex, &FlipPolicy::default(), &mut SeededRng::new(seed), None).unwrap();
            let diffs = neg.iter().zip(&pos).filter(|(a, b)| a != b).count();
            assert!(diffs >= 1);
            assert_eq!(neg[0].head_noun, "belly");
            assert_eq!(neg[1].head_noun, "head");
        }
    }

    #[test]
    fn probability_one_flips_everything() {
        let lex = lex3();
        let pos = vec![phrase(&["yellow", "long"], "belly", &lex), phrase(&["red"], "head", &lex)];
        let policy = FlipPolicy {
            flip_probability: 1.0,
            ..FlipPolicy::default()
        };
        let neg = make_negative(&pos, &lex, &policy, &mut SeededRng::new(9), None).unwrap();
        for (n, p) in neg.iter().zip(&pos) {
            for (a, b) in n.attributes.iter().zip(&p.attributes) {
                assert_ne!(a.word, b.word);
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let lex = Lexicon::default();
        let pos = vec![phrase(&["yellow"], "belly", &lex), phrase(&["red"], "head", &lex)];
        let a = make_negative(&pos, &lex, &FlipPolicy::default(), &mut SeededRng::new(5), None).unwrap();
        let b = make_negative(&pos, &lex, &FlipPolicy::default(), &mut SeededRng::new(5), None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exclusion_avoids_true_pairs() {
        let lex = lex3();
        let pos = vec![phrase(&["red"], "head", &lex)];
        let truth: AttributeSet = [("red", "head"), ("black", "head")]
            .iter()
            .map(|(a, n)| (a.to_string(), n.to_string()))
            .collect();
        let policy = FlipPolicy {
            exclude_image_attributes: true,
            ..FlipPolicy::default()
        };
        for seed in 0..50 {
            let neg = make_negative(&pos, &lex, &policy, &mut SeededRng::new(seed), Some(&truth)).unwrap();
            assert_eq!(neg[0].text(), "yellow head");
        }
    }

    #[test]
    fn nothing_to_flip() {
        let lex = lex3();
        let pos = vec![phrase(&["striped"], "tail", &lex)];
        assert!(matches!(
            make_negative(&pos, &lex, &FlipPolicy::default(), &mut SeededRng::new(0), None),
            Err(Error::NotFlippable(_))
        ));
        let policy = FlipPolicy {
            min_flips: 2,
            ..FlipPolicy::default()
        };
        let one = vec![phrase(&["red"], "head", &lex)];
        assert!(make_negative(&one, &lex, &policy, &mut SeededRng::new(0), None).is_err());
    }

    #[test]
    fn mismatch_sampling() {
        let lex = lex3();
        let mut data = BTreeMap::new();
        data.insert("A".to_string(), vec![phrase(&["red"], "head", &lex)]);
        assert!(matches!(
            sample_mismatch(&data, "A", &mut SeededRng::new(0)),
            Err(Error::InsufficientData(_))
        ));
        data.insert("B".to_string(), vec![phrase(&["black"], "wing", &lex)]);
        assert_eq!(sample_mismatch(&data, "A", &mut SeededRng::new(3)).unwrap(), data["B"]);
        data.insert("C".to_string(), vec![phrase(&["long"], "tail", &lex)]);
        for seed in 0..50 {
            let a = sample_mismatch(&data, "B", &mut SeededRng::new(seed)).unwrap();
            let b = sample_mismatch(&data, "B", &mut SeededRng::new(seed)).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, data["B"]);
        }
    }
}
