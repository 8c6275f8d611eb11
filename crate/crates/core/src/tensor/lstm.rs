use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{add_into, check_len, sigmoid, DenseMatrix, DenseVector, ParamSet};
use crate::error::{Error, Result};

/// Parameters of one LSTM cell. Each gate matrix acts on the concatenation
/// `[x; h_prev]` and has shape `d_h × (d_in + d_h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCellParams {
    pub d_in: usize,
    pub d_h: usize,
    pub w_i: DenseMatrix,
    pub w_f: DenseMatrix,
    pub w_o: DenseMatrix,
    pub w_g: DenseMatrix,
    pub b_i: DenseVector,
    pub b_f: DenseVector,
    pub b_o: DenseVector,
    pub b_g: DenseVector,
}

impl LstmCellParams {
    pub fn zeros(d_in: usize, d_h: usize) -> Self {
        let w = DenseMatrix::zeros(d_h, d_in + d_h);
        let b = DenseVector::zeros(d_h);
        LstmCellParams {
            d_in,
            d_h,
            w_i: w.clone(),
            w_f: w.clone(),
            w_o: w.clone(),
            w_g: w,
            b_i: b.clone(),
            b_f: b.clone(),
            b_o: b.clone(),
            b_g: b,
        }
    }

    /// Every weight and bias drawn from `uniform(-scale, scale)`.
    pub fn uniform<R: Rng + ?Sized>(d_in: usize, d_h: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(d_in, d_h);
        p.visit_mut(&mut |_, _, v| v.iter_mut().for_each(|x| *x = rng.gen_range(-scale..scale)));
        p
    }

    pub fn validate(&self) -> Result<()> {
        let cols = self.d_in + self.d_h;
        for (name, w) in [("w_i", &self.w_i), ("w_f", &self.w_f), ("w_o", &self.w_o), ("w_g", &self.w_g)] {
            if w.rows() != self.d_h || w.cols() != cols {
                return Err(Error::invalid(format!(
                    "lstm {name} is {}x{}, expected {}x{cols}",
                    w.rows(),
                    w.cols(),
                    self.d_h
                )));
            }
        }
        for (name, b) in [("b_i", &self.b_i), ("b_f", &self.b_f), ("b_o", &self.b_o), ("b_g", &self.b_g)] {
            check_len(&format!("lstm {name}"), b.len(), self.d_h)?;
        }
        Ok(())
    }
}

impl ParamSet for LstmCellParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        let ws = [self.d_h, self.d_in + self.d_h];
        let bs = [self.d_h];
        f("w_i", &ws, self.w_i.values());
        f("w_f", &ws, self.w_f.values());
        f("w_o", &ws, self.w_o.values());
        f("w_g", &ws, self.w_g.values());
        f("b_i", &bs, self.b_i.as_slice());
        f("b_f", &bs, self.b_f.as_slice());
        f("b_o", &bs, self.b_o.as_slice());
        f("b_g", &bs, self.b_g.as_slice());
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        let ws = [self.d_h, self.d_in + self.d_h];
        let bs = [self.d_h];
        f("w_i", &ws, self.w_i.values_mut());
        f("w_f", &ws, self.w_f.values_mut());
        f("w_o", &ws, self.w_o.values_mut());
        f("w_g", &ws, self.w_g.values_mut());
        f("b_i", &bs, self.b_i.as_mut_slice());
        f("b_f", &bs, self.b_f.as_mut_slice());
        f("b_o", &bs, self.b_o.as_mut_slice());
        f("b_g", &bs, self.b_g.as_mut_slice());
    }
}

/// Intermediate values of one cell step kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmStepCache {
    z: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// One LSTM step:
///
/// ```text
/// i = σ(W_i·[x; h] + b_i)    f = σ(W_f·[x; h] + b_f)
/// o = σ(W_o·[x; h] + b_o)    g = tanh(W_g·[x; h] + b_g)
/// c' = f ⊙ c + i ⊙ g         h' = o ⊙ tanh(c')
/// ```
pub fn lstm_cell_forward(
    params: &LstmCellParams,
    x: &DenseVector,
    h_prev: &DenseVector,
    c_prev: &DenseVector,
) -> Result<(DenseVector, DenseVector)> {
    let (h, c, _) = lstm_cell_forward_cached(params, x, h_prev, c_prev)?;
    Ok((h, c))
}

pub fn lstm_cell_forward_cached(
    params: &LstmCellParams,
    x: &DenseVector,
    h_prev: &DenseVector,
    c_prev: &DenseVector,
) -> Result<(DenseVector, DenseVector, LstmStepCache)> {
    check_len("lstm input x", x.len(), params.d_in)?;
    check_len("lstm h_prev", h_prev.len(), params.d_h)?;
    check_len("lstm c_prev", c_prev.len(), params.d_h)?;

    let z = DenseVector::concat(&[x.as_slice(), h_prev.as_slice()]).0;
    let gate = |w: &DenseMatrix, b: &DenseVector| {
        let mut a = w.matvec(&z);
        add_into(&mut a, b.as_slice());
        a
    };
    let i: Vec<f64> = gate(&params.w_i, &params.b_i).into_iter().map(sigmoid).collect();
    let f: Vec<f64> = gate(&params.w_f, &params.b_f).into_iter().map(sigmoid).collect();
    let o: Vec<f64> = gate(&params.w_o, &params.b_o).into_iter().map(sigmoid).collect();
    let g: Vec<f64> = gate(&params.w_g, &params.b_g).into_iter().map(f64::tanh).collect();

    let c: Vec<f64> = (0..params.d_h)
        .map(|k| f[k] * c_prev.0[k] + i[k] * g[k])
        .collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = o.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();

    let cache = LstmStepCache {
        z,
        i,
        f,
        o,
        g,
        c_prev: c_prev.0.clone(),
        tanh_c,
    };
    Ok((DenseVector(h), DenseVector(c), cache))
}

/// Backward through one step. Parameter gradients are added into `grads`;
/// returns `(dx, dh_prev, dc_prev)`.
pub fn lstm_cell_backward(
    params: &LstmCellParams,
    cache: &LstmStepCache,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmCellParams,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let d_h = params.d_h;
    let mut da_i = vec![0.0; d_h];
    let mut da_f = vec![0.0; d_h];
    let mut da_o = vec![0.0; d_h];
    let mut da_g = vec![0.0; d_h];
    let mut dc_prev = vec![0.0; d_h];

    for k in 0..d_h {
        let t = cache.tanh_c[k];
        let dc_total = dc[k] + dh[k] * cache.o[k] * (1.0 - t * t);
        let d_o = dh[k] * t;
        let d_i = dc_total * cache.g[k];
        let d_f = dc_total * cache.c_prev[k];
        let d_g = dc_total * cache.i[k];
        dc_prev[k] = dc_total * cache.f[k];

        da_i[k] = d_i * cache.i[k] * (1.0 - cache.i[k]);
        da_f[k] = d_f * cache.f[k] * (1.0 - cache.f[k]);
        da_o[k] = d_o * cache.o[k] * (1.0 - cache.o[k]);
        da_g[k] = d_g * (1.0 - cache.g[k] * cache.g[k]);
    }

    grads.w_i.add_outer(&da_i, &cache.z);
    grads.w_f.add_outer(&da_f, &cache.z);
    grads.w_o.add_outer(&da_o, &cache.z);
    grads.w_g.add_outer(&da_g, &cache.z);
    add_into(grads.b_i.as_mut_slice(), &da_i);
    add_into(grads.b_f.as_mut_slice(), &da_f);
    add_into(grads.b_o.as_mut_slice(), &da_o);
    add_into(grads.b_g.as_mut_slice(), &da_g);

    let mut dz = vec![0.0; params.d_in + d_h];
    params.w_i.add_matvec_transposed(&da_i, &mut dz);
    params.w_f.add_matvec_transposed(&da_f, &mut dz);
    params.w_o.add_matvec_transposed(&da_o, &mut dz);
    params.w_g.add_matvec_transposed(&da_g, &mut dz);
    let dh_prev = dz.split_off(params.d_in);
    (dz, dh_prev, dc_prev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector(x.to_vec())
    }

    // Straight-line scalar evaluation of the four gate equations, d_in = d_h = 1.
    fn scalar_oracle(w: [[f64; 2]; 4], b: [f64; 4], x: f64, h: f64, c: f64) -> (f64, f64) {
        let s = |a: f64| 1.0 / (1.0 + (-a).exp());
        let pre = |k: usize| w[k][0] * x + w[k][1] * h + b[k];
        let (i, f, o, g) = (s(pre(0)), s(pre(1)), s(pre(2)), pre(3).tanh());
        let c_new = f * c + i * g;
        (o * c_new.tanh(), c_new)
    }

    #[test]
    fn zero_params_zero_state_gives_zero() {
        let p = LstmCellParams::zeros(3, 2);
        let (h, c) = lstm_cell_forward(&p, &v(&[1.0, -4.0, 9.0]), &v(&[0.0, 0.0]), &v(&[0.0, 0.0])).unwrap();
        assert_eq!(h.0, vec![0.0, 0.0]);
        assert_eq!(c.0, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_params_carry_half_the_cell() {
        let p = LstmCellParams::zeros(1, 1);
        let (h, c) = lstm_cell_forward(&p, &v(&[2.0]), &v(&[0.0]), &v(&[1.0])).unwrap();
        assert_eq!(c.0, vec![0.5]);
        assert!((h.0[0] - 0.5 * 0.5f64.tanh()).abs() < 1e-15);
        assert!((h.0[0] - 0.231059).abs() < 1e-6);
    }

    #[test]
    fn matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let p = LstmCellParams::uniform(1, 1, 0.7, &mut rng);
            let (x, h0, c0) = (rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let w = [p.w_i.values(), p.w_f.values(), p.w_o.values(), p.w_g.values()]
                .map(|m| [m[0], m[1]]);
            let b = [p.b_i.0[0], p.b_f.0[0], p.b_o.0[0], p.b_g.0[0]];
            let (eh, ec) = scalar_oracle(w, b, x, h0, c0);
            let (h, c) = lstm_cell_forward(&p, &v(&[x]), &v(&[h0]), &v(&[c0])).unwrap();
            assert!((h.0[0] - eh).abs() < 1e-14);
            assert!((c.0[0] - ec).abs() < 1e-14);
        }
    }

    #[test]
    fn dimension_mismatch_names_operand() {
        let p = LstmCellParams::zeros(2, 3);
        let err = lstm_cell_forward(&p, &v(&[1.0]), &v(&[0.0; 3]), &v(&[0.0; 3])).unwrap_err();
        assert!(err.to_string().contains("input x"), "{err}");
        let err = lstm_cell_forward(&p, &v(&[1.0, 2.0]), &v(&[0.0; 2]), &v(&[0.0; 3])).unwrap_err();
        assert!(err.to_string().contains("h_prev"), "{err}");
        let err = lstm_cell_forward(&p, &v(&[1.0, 2.0]), &v(&[0.0; 3]), &v(&[0.0; 1])).unwrap_err();
        assert!(err.to_string().contains("c_prev"), "{err}");
    }
}
