//! The phrase critic: an LSTM over per-phrase grounding vectors followed by
//! a two-layer regressor producing one image-relevance score.
//!
//! Each step input is `[mean word embedding; region features; raw score]`.
//! Words are mapped to embedding rows by hashing into a fixed number of
//! buckets, so no vocabulary file is needed.

mod checkpoint;
mod train;

use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_VERSION};
pub use train::{
    build_pairs, pairwise_accuracy, train, train_pair_loss, EpochRecord, TrainConfig, TrainOutcome,
};

use crate::chunker::AttributePhrase;
use crate::error::{Error, Result};
use crate::grounding::Grounding;
use crate::hash::fnv1a;
use crate::rng::SeededRng;
use crate::tensor::{
    lstm_cell_backward, lstm_cell_forward_cached, margin_ranking_grad, margin_ranking_loss,
    two_layer_backward, two_layer_forward_cached, DenseMatrix, DenseVector, GradStore,
    LstmCellParams, LstmStepCache, ParamSet, TwoLayerCache, TwoLayerParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticDims {
    pub word_dim: usize,
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub regressor_hidden: usize,
    pub buckets: usize,
}

impl Default for CriticDims {
    fn default() -> Self {
        CriticDims {
            word_dim: 32,
            feature_dim: 64,
            hidden_dim: 64,
            regressor_hidden: 32,
            buckets: 1 << 12,
        }
    }
}

impl CriticDims {
    /// LSTM input width: embedding, region features and the score.
    pub fn step_dim(&self) -> usize {
        self.word_dim + self.feature_dim + 1
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("word_dim", self.word_dim),
            ("feature_dim", self.feature_dim),
            ("hidden_dim", self.hidden_dim),
            ("regressor_hidden", self.regressor_hidden),
            ("buckets", self.buckets),
        ];
        for (name, v) in named {
            if v == 0 {
                return Err(Error::invalid(format!("critic dimension {name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Learnable parameters of the critic.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticModel {
    dims: CriticDims,
    pub embedding: DenseMatrix,
    pub lstm: LstmCellParams,
    pub head: TwoLayerParams,
}

impl CriticModel {
    pub fn zeros(dims: CriticDims) -> Result<Self> {
        dims.validate()?;
        Ok(CriticModel {
            dims,
            embedding: DenseMatrix::zeros(dims.buckets, dims.word_dim),
            lstm: LstmCellParams::zeros(dims.step_dim(), dims.hidden_dim),
            head: TwoLayerParams::zeros(dims.hidden_dim, dims.regressor_hidden),
        })
    }

    /// Embeddings and LSTM from `uniform(-0.08, 0.08)`, regressor
    /// Xavier-uniform with zero biases.
    pub fn init(dims: CriticDims, rng: &mut SeededRng) -> Result<Self> {
        let mut model = Self::zeros(dims)?;
        model
            .embedding
            .values_mut()
            .iter_mut()
            .for_each(|v| *v = rng.uniform(-0.08, 0.08));
        model.lstm = LstmCellParams::uniform(dims.step_dim(), dims.hidden_dim, 0.08, rng);
        model.head = TwoLayerParams::xavier(dims.hidden_dim, dims.regressor_hidden, rng);
        Ok(model)
    }

    pub fn dims(&self) -> &CriticDims {
        &self.dims
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let d = &self.dims;
        if self.embedding.rows() != d.buckets || self.embedding.cols() != d.word_dim {
            return Err(Error::invalid("embedding table does not match dims"));
        }
        if self.lstm.d_in != d.step_dim() || self.lstm.d_h != d.hidden_dim {
            return Err(Error::invalid("lstm does not match dims"));
        }
        self.lstm.validate()?;
        self.head.validate()?;
        if self.head.d_in() != d.hidden_dim || self.head.d_hidden() != d.regressor_hidden {
            return Err(Error::invalid("regressor does not match dims"));
        }
        if !self.all_finite() {
            return Err(Error::NumericFailure("critic parameters contain non-finite values".into()));
        }
        Ok(())
    }

    pub fn bucket(&self, word: &str) -> usize {
        (fnv1a(word.as_bytes()) % self.dims.buckets as u64) as usize
    }
}

impl ParamSet for CriticModel {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f("embedding", &[self.dims.buckets, self.dims.word_dim], self.embedding.values());
        self.lstm.visit(&mut |n, s, v| f(&format!("lstm.{n}"), s, v));
        self.head.visit(&mut |n, s, v| f(&format!("head.{n}"), s, v));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        let shape = [self.dims.buckets, self.dims.word_dim];
        f("embedding", &shape, self.embedding.values_mut());
        self.lstm.visit_mut(&mut |n, s, v| f(&format!("lstm.{n}"), s, v));
        self.head.visit_mut(&mut |n, s, v| f(&format!("head.{n}"), s, v));
    }
}

/// Mean of the hashed-bucket embeddings of the phrase's attribute words and
/// head noun.
pub fn embed_phrase(model: &CriticModel, phrase: &AttributePhrase) -> DenseVector {
    let mut out = vec![0.0; model.dims.word_dim];
    let mut n = 0usize;
    for word in phrase.words() {
        for (o, e) in out.iter_mut().zip(model.embedding.row(model.bucket(word))) {
            *o += e;
        }
        n += 1;
    }
    out.iter_mut().for_each(|v| *v /= n as f64);
    DenseVector(out)
}

/// `[embed_phrase(g.phrase); g.features; g.score]`.
pub fn encode_step_input(model: &CriticModel, g: &Grounding) -> Result<DenseVector> {
    if g.features.len() != model.dims.feature_dim {
        return Err(Error::invalid(format!(
            "grounding features have length {}, critic expects {}",
            g.features.len(),
            model.dims.feature_dim
        )));
    }
    let emb = embed_phrase(model, &g.phrase);
    Ok(DenseVector::concat(&[emb.as_slice(), g.features.as_slice(), &[g.score]]))
}

/// Forward record of one scored sequence.
#[derive(Debug, Clone)]
pub struct ScoreTrace {
    buckets: Vec<Vec<usize>>,
    steps: Vec<LstmStepCache>,
    head: TwoLayerCache,
    pub score: f64,
}

pub fn critic_score(model: &CriticModel, groundings: &[Grounding]) -> Result<f64> {
    score_forward(model, groundings).map(|t| t.score)
}

/// Runs the LSTM from a zero state over the groundings in order and applies
/// the regressor to the final hidden state.
pub fn score_forward(model: &CriticModel, groundings: &[Grounding]) -> Result<ScoreTrace> {
    if groundings.is_empty() {
        return Err(Error::invalid("cannot score an empty grounding sequence"));
    }
    let d_h = model.dims.hidden_dim;
    let mut h = DenseVector::zeros(d_h);
    let mut c = DenseVector::zeros(d_h);
    let mut steps = Vec::with_capacity(groundings.len());
    let mut buckets = Vec::with_capacity(groundings.len());
    for g in groundings {
        let x = encode_step_input(model, g)?;
        let (h2, c2, cache) = lstm_cell_forward_cached(&model.lstm, &x, &h, &c)?;
        steps.push(cache);
        buckets.push(g.phrase.words().map(|w| model.bucket(w)).collect());
        h = h2;
        c = c2;
    }
    let (score, head) = two_layer_forward_cached(&model.head, &h)?;
    if !score.is_finite() {
        return Err(Error::NumericFailure(format!("critic produced non-finite score {score}")));
    }
    Ok(ScoreTrace {
        buckets,
        steps,
        head,
        score,
    })
}

/// Adds `upstream · ∂score/∂θ` into `grads` (backpropagation through time).
pub fn score_backward(model: &CriticModel, trace: &ScoreTrace, upstream: f64, grads: &mut GradStore) -> Result<()> {
    if upstream == 0.0 {
        return Ok(());
    }
    let d = model.dims;
    let mut g_head = TwoLayerParams::zeros(d.hidden_dim, d.regressor_hidden);
    let mut g_lstm = LstmCellParams::zeros(d.step_dim(), d.hidden_dim);
    let mut dh = two_layer_backward(&model.head, &trace.head, upstream, &mut g_head);
    let mut dc = vec![0.0; d.hidden_dim];

    let emb_grad = grads
        .get_mut("embedding")
        .ok_or_else(|| Error::invalid("gradient store has no 'embedding' entry"))?;
    if emb_grad.len() != d.buckets * d.word_dim {
        return Err(Error::invalid("embedding gradient shape mismatch"));
    }
    for (cache, words) in trace.steps.iter().zip(&trace.buckets).rev() {
        let (dx, dh_prev, dc_prev) = lstm_cell_backward(&model.lstm, cache, &dh, &dc, &mut g_lstm);
        let scale = 1.0 / words.len() as f64;
        for &b in words {
            let row = &mut emb_grad[b * d.word_dim..(b + 1) * d.word_dim];
            for (r, g) in row.iter_mut().zip(&dx[..d.word_dim]) {
                *r += g * scale;
            }
        }
        dh = dh_prev;
        dc = dc_prev;
    }
    grads.accumulate("lstm", &g_lstm)?;
    grads.accumulate("head", &g_head)?;
    Ok(())
}

/// A positive and a negative grounding sequence for the same image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPair {
    pub image_id: String,
    pub positive: Vec<Grounding>,
    pub negative: Vec<Grounding>,
}

impl TrainPair {
    pub fn validate(&self) -> Result<()> {
        if self.positive.is_empty() || self.negative.is_empty() {
            return Err(Error::invalid(format!(
                "training pair for '{}' has an empty side",
                self.image_id
            )));
        }
        Ok(())
    }
}

struct Forwarded {
    pos: ScoreTrace,
    neg: ScoreTrace,
    loss: f64,
}

/// Hinge loss of one pair, with a reverse pass into a [`GradStore`].
pub struct LossGraph<'a> {
    model: &'a CriticModel,
    pair: &'a TrainPair,
    margin: f64,
    forwarded: Option<Forwarded>,
}

impl<'a> LossGraph<'a> {
    pub fn new(model: &'a CriticModel, pair: &'a TrainPair, margin: f64) -> Self {
        LossGraph {
            model,
            pair,
            margin,
            forwarded: None,
        }
    }

    pub fn forward(&mut self) -> Result<f64> {
        self.pair.validate()?;
        let pos = score_forward(self.model, &self.pair.positive)?;
        let neg = score_forward(self.model, &self.pair.negative)?;
        let loss = margin_ranking_loss(pos.score, neg.score, self.margin)?;
        self.forwarded = Some(Forwarded { pos, neg, loss });
        Ok(loss)
    }

    pub fn scores(&self) -> Option<(f64, f64)> {
        self.forwarded.as_ref().map(|f| (f.pos.score, f.neg.score))
    }

    /// Adds `∂loss/∂θ` into `grads`, which must be shaped like the model.
    pub fn backward(&self, grads: &mut GradStore) -> Result<()> {
        let fwd = self
            .forwarded
            .as_ref()
            .ok_or_else(|| Error::State("backward called before forward".into()))?;
        grads.check_matches(self.model)?;
        if fwd.loss == 0.0 {
            return Ok(());
        }
        let (d_pos, d_neg) = margin_ranking_grad(fwd.pos.score, fwd.neg.score, self.margin)?;
        score_backward(self.model, &fwd.pos, d_pos, grads)?;
        score_backward(self.model, &fwd.neg, d_neg, grads)
    }
}
