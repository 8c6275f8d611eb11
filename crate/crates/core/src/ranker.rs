//! Reranking of candidate explanations by `S_r + λ·S_f`.
//!
//! `S_r` is the critic's relevance score over the candidate's grounded
//! phrases and `S_f` the generator's log-probability of the sentence.
//! Candidates that yield no phrase, or whose phrases cannot be grounded,
//! get a combined score of −∞ and sink to the bottom in input order.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::chunker::{chunk_phrases, tokenize, AttributePhrase, Lexicon, TokenSequence};
use crate::critic::{critic_score, CriticModel};
use crate::error::{Error, Result};
use crate::grounding::{ground_all, BoundingBox, Grounder, Grounding};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateRow {
    image_id: String,
    candidate_index: usize,
    sentence: String,
    log_prob: f64,
}

/// A generated explanation with its log-probability `S_f`.
///
/// Candidates file record: `{"image_id", "candidate_index", "sentence", "log_prob"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CandidateRow", into = "CandidateRow")]
pub struct ExplanationCandidate {
    pub image_id: String,
    pub sentence: String,
    pub tokens: TokenSequence,
    pub log_prob: f64,
    pub candidate_index: usize,
}

impl ExplanationCandidate {
    pub fn new(image_id: &str, candidate_index: usize, sentence: &str, log_prob: f64) -> Result<Self> {
        if !(log_prob.is_finite() && log_prob <= 0.0) {
            return Err(Error::invalid(format!(
                "candidate {candidate_index} of '{image_id}': log_prob must be finite and <= 0, got {log_prob}"
            )));
        }
        Ok(ExplanationCandidate {
            image_id: image_id.to_string(),
            sentence: sentence.to_string(),
            tokens: tokenize(sentence),
            log_prob,
            candidate_index,
        })
    }
}

impl TryFrom<CandidateRow> for ExplanationCandidate {
    type Error = String;

    fn try_from(r: CandidateRow) -> std::result::Result<Self, String> {
        ExplanationCandidate::new(&r.image_id, r.candidate_index, &r.sentence, r.log_prob).map_err(|e| e.to_string())
    }
}

impl From<ExplanationCandidate> for CandidateRow {
    fn from(c: ExplanationCandidate) -> Self {
        CandidateRow {
            image_id: c.image_id,
            candidate_index: c.candidate_index,
            sentence: c.sentence,
            log_prob: c.log_prob,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankOptions {
    /// Weight of the fluency term.
    pub lambda: f64,
    /// Divide `S_f` by the token count before fusing.
    pub length_normalize: bool,
}

impl Default for RankOptions {
    fn default() -> Self {
        RankOptions {
            lambda: 1.0,
            length_normalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedExplanation {
    pub candidate: ExplanationCandidate,
    pub phrases: Vec<AttributePhrase>,
    pub groundings: Vec<Grounding>,
    /// `None` when no phrase was extracted or grounding failed.
    pub relevance: Option<f64>,
    pub combined: f64,
    pub rank: usize,
    pub failure: Option<String>,
}

/// `S_r + λ·S_f`.
pub fn combined_score(relevance: f64, fluency: f64, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    Ok(relevance + lambda * fluency)
}

/// Sorts by combined score descending, ties by ascending candidate index,
/// and assigns ranks `1..=N`.
pub fn order_ranked(items: &mut [RankedExplanation]) {
    items.sort_by(|a, b| {
        b.combined
            .total_cmp(&a.combined)
            .then(a.candidate.candidate_index.cmp(&b.candidate.candidate_index))
    });
    for (i, item) in items.iter_mut().enumerate() {
        item.rank = i + 1;
    }
}

/// Chunks, grounds and scores every candidate of one image, then orders them.
pub fn rank<G: Grounder + ?Sized>(
    candidates: &[ExplanationCandidate],
    model: &CriticModel,
    grounder: &G,
    lex: &Lexicon,
    options: &RankOptions,
) -> Result<Vec<RankedExplanation>> {
    let first = candidates
        .first()
        .ok_or_else(|| Error::invalid("no candidates to rank"))?;
    combined_score(0.0, 0.0, options.lambda)?;
    let mut indices = BTreeSet::new();
    for c in candidates {
        if c.image_id != first.image_id {
            return Err(Error::invalid(format!(
                "candidates mix images '{}' and '{}'",
                first.image_id, c.image_id
            )));
        }
        if !indices.insert(c.candidate_index) {
            return Err(Error::invalid(format!(
                "duplicate candidate_index {} for image '{}'",
                c.candidate_index, c.image_id
            )));
        }
    }

    let mut out = Vec::with_capacity(candidates.len());
    for c in candidates {
        let phrases = chunk_phrases(&c.tokens, lex);
        let mut item = RankedExplanation {
            candidate: c.clone(),
            phrases,
            groundings: Vec::new(),
            relevance: None,
            combined: f64::NEG_INFINITY,
            rank: 0,
            failure: None,
        };
        if !item.phrases.is_empty() {
            match ground_all(grounder, &c.image_id, &item.phrases) {
                Ok(groundings) => {
                    let relevance = critic_score(model, &groundings)?;
                    let fluency = if options.length_normalize {
                        c.log_prob / c.tokens.len().max(1) as f64
                    } else {
                        c.log_prob
                    };
                    item.combined = combined_score(relevance, fluency, options.lambda)?;
                    item.relevance = Some(relevance);
                    item.groundings = groundings;
                }
                Err(e) => item.failure = Some(e.to_string()),
            }
        }
        out.push(item);
    }
    order_ranked(&mut out);
    Ok(out)
}

/// The rank-1 explanation.
pub fn select_best(ranked: &[RankedExplanation]) -> Result<&RankedExplanation> {
    ranked
        .iter()
        .min_by_key(|r| r.rank)
        .ok_or_else(|| Error::invalid("no ranked explanations to select from"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhraseRecord {
    pub text: String,
    #[serde(rename = "box")]
    pub bbox: Option<BoundingBox>,
    pub s_i: Option<f64>,
}

/// Ranked output record. `S_r` and `combined` are `null` for candidates
/// ranked by the −∞ sentinel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankedRecord {
    pub image_id: String,
    pub candidate_index: usize,
    pub rank: usize,
    pub sentence: String,
    #[serde(rename = "S_r")]
    pub s_r: Option<f64>,
    #[serde(rename = "S_f")]
    pub s_f: f64,
    pub combined: Option<f64>,
    pub phrases: Vec<PhraseRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl From<&RankedExplanation> for RankedRecord {
    fn from(r: &RankedExplanation) -> Self {
        let phrases = if r.groundings.is_empty() {
            r.phrases
                .iter()
                .map(|p| PhraseRecord {
                    text: p.text(),
                    bbox: None,
                    s_i: None,
                })
                .collect()
        } else {
            r.groundings
                .iter()
                .map(|g| PhraseRecord {
                    text: g.phrase.text(),
                    bbox: Some(g.bbox),
                    s_i: Some(g.score),
                })
                .collect()
        };
        RankedRecord {
            image_id: r.candidate.image_id.clone(),
            candidate_index: r.candidate.candidate_index,
            rank: r.rank,
            sentence: r.candidate.sentence.clone(),
            s_r: r.relevance,
            s_f: r.candidate.log_prob,
            combined: r.combined.is_finite().then_some(r.combined),
            phrases,
            failure: r.failure.clone(),
        }
    }
}
