use phrase_critic::chunker::AttributeCategory;
use phrase_critic::grounding::AttributeSet;
use phrase_critic::negatives::{flip_phrase, make_negative, sample_mismatch};
use phrase_critic::*;
use proptest::prelude::*;
use std::collections::BTreeMap;

fn attribute_words() -> Vec<String> {
    let lex = Lexicon::default();
    [AttributeCategory::Color, AttributeCategory::Size, AttributeCategory::Other]
        .into_iter()
        .flat_map(|c| lex.words(c).iter().cloned())
        .collect()
}

const NOUNS: [&str; 4] = ["beak", "neck", "eye", "wing"];

fn phrases() -> impl Strategy<Value = Vec<AttributePhrase>> {
    let words = attribute_words();
    let n = words.len();
    prop::collection::vec((prop::collection::vec(0..n, 1..4), 0..NOUNS.len()), 1..5).prop_map(move |spec| {
        let lex = Lexicon::default();
        let mut start = 0;
        spec.iter()
            .map(|(attrs, noun)| {
                let ws: Vec<&str> = attrs.iter().map(|&i| words[i].as_str()).collect();
                let p = AttributePhrase::from_words(&ws, NOUNS[*noun], start, &lex).unwrap();
                start = p.span.1 + 1;
                p
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn negatives_differ_only_in_flipped_words(
        input in phrases(),
        seed in any::<u64>(),
        prob in 0.01f64..=1.0,
        min_flips in 1usize..3,
        exclude in any::<bool>(),
        truth_idx in prop::collection::vec((0usize..60, 0..NOUNS.len()), 0..8),
    ) {
        let lex = Lexicon::default();
        let words = attribute_words();
        let truth: AttributeSet = truth_idx
            .iter()
            .map(|&(w, n)| (words[w % words.len()].clone(), NOUNS[n].to_string()))
            .collect();
        let policy = FlipPolicy { flip_probability: prob, min_flips, exclude_image_attributes: exclude };
        let mut rng = SeededRng::new(seed);
        match make_negative(&input, &lex, &policy, &mut rng, Some(&truth)) {
            Err(Error::NotFlippable(_)) => {}
            Err(e) => prop_assert!(false, "unexpected error {e}"),
            Ok(out) => {
                prop_assert_eq!(out.len(), input.len());
                let mut flips = 0;
                for (a, b) in input.iter().zip(&out) {
                    prop_assert_eq!(&a.head_noun, &b.head_noun);
                    prop_assert_eq!(a.span, b.span);
                    prop_assert_eq!(a.attributes.len(), b.attributes.len());
                    for (x, y) in a.attributes.iter().zip(&b.attributes) {
                        prop_assert_eq!(x.category, y.category);
                        if x.word != y.word {
                            flips += 1;
                            prop_assert!(x.category.is_flippable());
                            prop_assert_eq!(lex.category(&y.word), Some(x.category));
                            if exclude {
                                prop_assert!(!truth.contains(&(y.word.clone(), b.head_noun.clone())));
                            }
                        }
                    }
                }
                prop_assert!(flips >= min_flips);
            }
        }
    }

    #[test]
    fn flip_phrase_never_returns_the_original(input in phrases(), seed in any::<u64>()) {
        let lex = Lexicon::default();
        let mut rng = SeededRng::new(seed);
        for p in &input {
            match flip_phrase(p, &lex, &mut rng) {
                Ok(q) => {
                    prop_assert_ne!(p, &q);
                    prop_assert_eq!(&p.head_noun, &q.head_noun);
                    let changed = p.attributes.iter().zip(&q.attributes).filter(|(a, b)| a.word != b.word).count();
                    prop_assert_eq!(changed, 1);
                }
                Err(e) => {
                    prop_assert!(matches!(e, Error::NotFlippable(_)));
                    prop_assert!(p.attributes.iter().all(|a| !a.category.is_flippable()));
                }
            }
        }
    }
}

#[test]
fn draws_are_seeded() {
    let lex = Lexicon::default();
    let input = vec![AttributePhrase::from_words(&["red", "long"], "neck", 0, &lex).unwrap()];
    let policy = FlipPolicy::default();
    let draw = |seed| make_negative(&input, &lex, &policy, &mut SeededRng::new(seed), None).unwrap();
    assert_eq!(draw(9), draw(9));
    let distinct: std::collections::BTreeSet<String> = (0..50).map(|s| draw(s)[0].text()).collect();
    assert!(distinct.len() > 5);
}

#[test]
fn mismatch_draws_another_image() {
    let lex = Lexicon::default();
    let p = |a: &str, n: &str| vec![AttributePhrase::from_words(&[a], n, 0, &lex).unwrap()];
    let mut data = BTreeMap::new();
    data.insert("a".to_string(), p("red", "beak"));
    data.insert("b".to_string(), p("white", "eye"));
    data.insert("c".to_string(), p("long", "neck"));
    let mut rng = SeededRng::new(0);
    for _ in 0..100 {
        assert_ne!(sample_mismatch(&data, "a", &mut rng).unwrap(), data["a"]);
    }
    data.retain(|k, _| k == "a");
    assert!(matches!(sample_mismatch(&data, "a", &mut rng), Err(Error::InsufficientData(_))));
}
