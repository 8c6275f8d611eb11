use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{add_into, check_len, DenseMatrix, DenseVector, ParamSet};
use crate::error::{Error, Result};

/// `W·x + b`.
pub fn linear_forward(w: &DenseMatrix, b: &DenseVector, x: &DenseVector) -> Result<DenseVector> {
    check_len("linear input", x.len(), w.cols())?;
    check_len("linear bias", b.len(), w.rows())?;
    let mut y = w.matvec(x.as_slice());
    add_into(&mut y, b.as_slice());
    Ok(DenseVector(y))
}

/// Backward of [`linear_forward`]: adds `dy·xᵀ` into `dw`, `dy` into `db`
/// and returns `Wᵀ·dy`.
pub fn linear_backward(
    w: &DenseMatrix,
    x: &[f64],
    dy: &[f64],
    dw: &mut DenseMatrix,
    db: &mut [f64],
) -> Vec<f64> {
    dw.add_outer(dy, x);
    add_into(db, dy);
    let mut dx = vec![0.0; w.cols()];
    w.add_matvec_transposed(dy, &mut dx);
    dx
}

/// Scalar regressor `W2·tanh(W1·x + b1) + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLayerParams {
    pub w1: DenseMatrix,
    pub b1: DenseVector,
    pub w2: DenseMatrix,
    pub b2: DenseVector,
}

impl TwoLayerParams {
    pub fn zeros(d_in: usize, d_hidden: usize) -> Self {
        TwoLayerParams {
            w1: DenseMatrix::zeros(d_hidden, d_in),
            b1: DenseVector::zeros(d_hidden),
            w2: DenseMatrix::zeros(1, d_hidden),
            b2: DenseVector::zeros(1),
        }
    }

    /// Xavier-uniform weights, zero biases.
    pub fn xavier<R: Rng + ?Sized>(d_in: usize, d_hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(d_in, d_hidden);
        let a1 = (6.0 / (d_in + d_hidden) as f64).sqrt();
        let a2 = (6.0 / (d_hidden + 1) as f64).sqrt();
        p.w1.values_mut().iter_mut().for_each(|x| *x = rng.gen_range(-a1..a1));
        p.w2.values_mut().iter_mut().for_each(|x| *x = rng.gen_range(-a2..a2));
        p
    }

    pub fn d_in(&self) -> usize {
        self.w1.cols()
    }

    pub fn d_hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn validate(&self) -> Result<()> {
        check_len("regressor b1", self.b1.len(), self.w1.rows())?;
        if self.w2.rows() != 1 || self.w2.cols() != self.w1.rows() {
            return Err(Error::invalid(format!(
                "regressor w2 is {}x{}, expected 1x{}",
                self.w2.rows(),
                self.w2.cols(),
                self.w1.rows()
            )));
        }
        check_len("regressor b2", self.b2.len(), 1)
    }
}

impl ParamSet for TwoLayerParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f("w1", &[self.w1.rows(), self.w1.cols()], self.w1.values());
        f("b1", &[self.b1.len()], self.b1.as_slice());
        f("w2", &[1, self.w2.cols()], self.w2.values());
        f("b2", &[1], self.b2.as_slice());
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        let s1 = [self.w1.rows(), self.w1.cols()];
        let sb1 = [self.b1.len()];
        let s2 = [1, self.w2.cols()];
        f("w1", &s1, self.w1.values_mut());
        f("b1", &sb1, self.b1.as_mut_slice());
        f("w2", &s2, self.w2.values_mut());
        f("b2", &[1], self.b2.as_mut_slice());
    }
}

#[derive(Debug, Clone)]
pub struct TwoLayerCache {
    x: Vec<f64>,
    hidden: Vec<f64>,
}

pub fn two_layer_forward(params: &TwoLayerParams, x: &DenseVector) -> Result<f64> {
    two_layer_forward_cached(params, x).map(|(y, _)| y)
}

pub fn two_layer_forward_cached(params: &TwoLayerParams, x: &DenseVector) -> Result<(f64, TwoLayerCache)> {
    check_len("regressor input", x.len(), params.d_in())?;
    let hidden: Vec<f64> = linear_forward(&params.w1, &params.b1, x)?
        .0
        .into_iter()
        .map(f64::tanh)
        .collect();
    let y = params.w2.row(0).iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + params.b2.0[0];
    Ok((
        y,
        TwoLayerCache {
            x: x.0.clone(),
            hidden,
        },
    ))
}

/// Backward of the regressor for upstream gradient `dy`; returns `∂/∂x`.
pub fn two_layer_backward(
    params: &TwoLayerParams,
    cache: &TwoLayerCache,
    dy: f64,
    grads: &mut TwoLayerParams,
) -> Vec<f64> {
    let dh = linear_backward(&params.w2, &cache.hidden, &[dy], &mut grads.w2, grads.b2.as_mut_slice());
    let da: Vec<f64> = dh
        .iter()
        .zip(&cache.hidden)
        .map(|(d, h)| d * (1.0 - h * h))
        .collect();
    linear_backward(&params.w1, &cache.x, &da, &mut grads.w1, grads.b1.as_mut_slice())
}
