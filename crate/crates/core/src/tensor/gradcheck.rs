//! Backward passes of LSTM → regressor → hinge compositions against central
//! finite differences on random small instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

#[derive(Clone)]
struct SeqModel {
    lstm: LstmCellParams,
    head: TwoLayerParams,
}

impl ParamSet for SeqModel {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.lstm.visit(&mut |n, s, v| f(&format!("lstm.{n}"), s, v));
        self.head.visit(&mut |n, s, v| f(&format!("head.{n}"), s, v));
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.lstm.visit_mut(&mut |n, s, v| f(&format!("lstm.{n}"), s, v));
        self.head.visit_mut(&mut |n, s, v| f(&format!("head.{n}"), s, v));
    }
}

fn score(m: &SeqModel, xs: &[DenseVector]) -> f64 {
    let mut h = DenseVector::zeros(m.lstm.d_h);
    let mut c = DenseVector::zeros(m.lstm.d_h);
    for x in xs {
        (h, c) = lstm_cell_forward(&m.lstm, x, &h, &c).unwrap();
    }
    two_layer_forward(&m.head, &h).unwrap()
}

/// Returns the score and adds `upstream · ∂score/∂θ` into `grads`.
fn score_backward(m: &SeqModel, xs: &[DenseVector], upstream: f64, grads: &mut GradStore) -> f64 {
    let d_h = m.lstm.d_h;
    let mut h = DenseVector::zeros(d_h);
    let mut c = DenseVector::zeros(d_h);
    let mut caches = Vec::new();
    for x in xs {
        let (h2, c2, cache) = lstm_cell_forward_cached(&m.lstm, x, &h, &c).unwrap();
        caches.push(cache);
        h = h2;
        c = c2;
    }
    let (y, head_cache) = two_layer_forward_cached(&m.head, &h).unwrap();

    let mut g_head = TwoLayerParams::zeros(m.head.d_in(), m.head.d_hidden());
    let mut dh = two_layer_backward(&m.head, &head_cache, upstream, &mut g_head);
    let mut dc = vec![0.0; d_h];
    let mut g_lstm = LstmCellParams::zeros(m.lstm.d_in, d_h);
    for cache in caches.iter().rev() {
        let (_, dh_prev, dc_prev) = lstm_cell_backward(&m.lstm, cache, &dh, &dc, &mut g_lstm);
        dh = dh_prev;
        dc = dc_prev;
    }
    grads.accumulate("lstm", &g_lstm).unwrap();
    grads.accumulate("head", &g_head).unwrap();
    y
}

fn random_instance(rng: &mut ChaCha8Rng) -> (SeqModel, Vec<DenseVector>, Vec<DenseVector>) {
    let d_in = rng.gen_range(1..=8);
    let d_h = rng.gen_range(1..=8);
    let d_hidden = rng.gen_range(1..=8);
    let m = SeqModel {
        lstm: LstmCellParams::uniform(d_in, d_h, 0.5, rng),
        head: TwoLayerParams::xavier(d_h, d_hidden, rng),
    };
    let seq = |rng: &mut ChaCha8Rng| {
        let len = rng.gen_range(1..=5);
        (0..len)
            .map(|_| DenseVector((0..d_in).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect::<Vec<_>>()
    };
    let a = seq(rng);
    let b = seq(rng);
    (m, a, b)
}

fn assert_close(analytic: &GradStore, numeric: &GradStore, seed: u64) {
    for ((name, a), (_, n)) in analytic.iter().zip(numeric.iter()) {
        for (k, (x, y)) in a.iter().zip(n).enumerate() {
            let tol = (1e-4 * x.abs().max(y.abs())).max(1e-7);
            assert!((x - y).abs() <= tol, "seed {seed}: {name}[{k}] analytic {x} vs numeric {y}");
        }
    }
}

#[test]
fn sequence_score_gradients_match_finite_differences() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, xs, _) = random_instance(&mut rng);
        let mut grads = GradStore::zeros_like(&m);
        score_backward(&m, &xs, 1.0, &mut grads);
        let numeric = finite_diff_params(&m, |p| score(p, &xs), 1e-5).unwrap();
        assert_close(&grads, &numeric, seed);
    }
}

#[test]
fn hinge_over_two_sequences_matches_finite_differences() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let (m, pos, neg) = random_instance(&mut rng);
        let loss = |p: &SeqModel| margin_ranking_loss(score(p, &pos), score(p, &neg), 1.0).unwrap();
        let (s_pos, s_neg) = (score(&m, &pos), score(&m, &neg));
        let (d_pos, d_neg) = margin_ranking_grad(s_pos, s_neg, 1.0).unwrap();
        let mut grads = GradStore::zeros_like(&m);
        score_backward(&m, &pos, d_pos, &mut grads);
        score_backward(&m, &neg, d_neg, &mut grads);
        let numeric = finite_diff_params(&m, loss, 1e-5).unwrap();
        assert_close(&grads, &numeric, seed);
    }
}

#[test]
fn untouched_parameter_has_exactly_zero_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (m, xs, _) = random_instance(&mut rng);
    let mut grads = GradStore::zeros_like(&m);
    // Upstream zero: loss independent of every parameter.
    score_backward(&m, &xs, 0.0, &mut grads);
    assert!(grads.iter().all(|(_, g)| g.iter().all(|&v| v == 0.0)));
}
