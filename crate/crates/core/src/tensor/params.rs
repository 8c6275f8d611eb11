use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// A collection of named, shaped parameter arrays.
///
/// Names are stable and unique within a set; composite models prefix the
/// names of their parts (`lstm.w_i`, `head.b2`, ...). Visiting order is fixed.
#[allow(clippy::type_complexity)]
pub trait ParamSet {
    /// Calls `f(name, shape, values)` for each parameter array.
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64]));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, _, v| n += v.len());
        n
    }

    /// All parameter values in visiting order.
    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(&mut |_, _, v| out.extend_from_slice(v));
        out
    }

    fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.param_count();
        if flat.len() != n {
            return Err(Error::invalid(format!(
                "flat parameter vector has length {}, expected {n}",
                flat.len()
            )));
        }
        let mut offset = 0;
        self.visit_mut(&mut |_, _, v| {
            v.copy_from_slice(&flat[offset..offset + v.len()]);
            offset += v.len();
        });
        Ok(())
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, _, v| ok &= v.iter().all(|x| x.is_finite()));
        ok
    }
}

#[derive(Debug, Clone, PartialEq)]
struct GradEntry {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

/// Gradient arrays keyed by parameter name, shaped like their parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradStore {
    entries: Vec<GradEntry>,
    index: BTreeMap<String, usize>,
}

impl GradStore {
    /// Zero gradients for every parameter of `params`.
    pub fn zeros_like<P: ParamSet + ?Sized>(params: &P) -> Self {
        let mut store = GradStore::default();
        params.visit(&mut |name, shape, v| {
            store.index.insert(name.to_string(), store.entries.len());
            store.entries.push(GradEntry {
                name: name.to_string(),
                shape: shape.to_vec(),
                values: vec![0.0; v.len()],
            });
        });
        store
    }

    pub fn zero(&mut self) {
        for e in &mut self.entries {
            e.values.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.index.get(name).map(|&i| self.entries[i].values.as_slice())
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.index
            .get(name)
            .map(|&i| self.entries[i].values.as_mut_slice())
    }

    pub fn shape(&self, name: &str) -> Option<&[usize]> {
        self.index.get(name).map(|&i| self.entries[i].shape.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries
            .iter()
            .map(|e| (e.name.as_str(), e.values.as_slice()))
    }

    /// Adds a parameter-shaped gradient value into the entries named
    /// `{prefix}.{name}` (or `name` when `prefix` is empty).
    pub fn accumulate<P: ParamSet + ?Sized>(&mut self, prefix: &str, grad: &P) -> Result<()> {
        let mut err = None;
        grad.visit(&mut |name, shape, v| {
            if err.is_some() {
                return;
            }
            let key = if prefix.is_empty() {
                name.to_string()
            } else {
                format!("{prefix}.{name}")
            };
            match self.index.get(&key) {
                Some(&i) if self.entries[i].shape == shape => {
                    super::add_into(&mut self.entries[i].values, v);
                }
                Some(_) => err = Some(Error::invalid(format!("gradient shape mismatch for '{key}'"))),
                None => err = Some(Error::invalid(format!("unknown parameter '{key}'"))),
            }
        });
        err.map_or(Ok(()), Err)
    }

    /// Verifies that this store covers exactly the parameters of `params`.
    pub fn check_matches<P: ParamSet + ?Sized>(&self, params: &P) -> Result<()> {
        let mut err = None;
        let mut seen = 0;
        params.visit(&mut |name, shape, v| {
            if err.is_some() {
                return;
            }
            seen += 1;
            match self.index.get(name) {
                Some(&i) if self.entries[i].shape == shape && self.entries[i].values.len() == v.len() => {}
                Some(_) => err = Some(Error::invalid(format!("gradient shape mismatch for '{name}'"))),
                None => err = Some(Error::invalid(format!("no gradient for parameter '{name}'"))),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if seen != self.entries.len() {
            return Err(Error::invalid("gradient store has entries for unknown parameters"));
        }
        Ok(())
    }
}

/// Central finite differences `(f(p + h·eᵢ) − f(p − h·eᵢ)) / 2h` per coordinate.
pub fn finite_diff_grad<F>(mut f: F, p: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {h}")));
    }
    let mut x = p.to_vec();
    let mut grad = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(&x);
        x[i] = orig - h;
        let down = f(&x);
        x[i] = orig;
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Finite-difference gradient of `f` with respect to every parameter of
/// `params`, returned in the same layout as a backward pass would fill.
pub fn finite_diff_params<P, F>(params: &P, mut f: F, h: f64) -> Result<GradStore>
where
    P: ParamSet + Clone,
    F: FnMut(&P) -> f64,
{
    let flat = params.flatten();
    let mut probe = params.clone();
    let mut failure = None;
    let grad = finite_diff_grad(
        |x| {
            if let Err(e) = probe.assign_flat(x) {
                failure.get_or_insert(e);
                return f64::NAN;
            }
            f(&probe)
        },
        &flat,
        h,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let mut store = GradStore::zeros_like(params);
    let mut offset = 0;
    for e in &mut store.entries {
        let n = e.values.len();
        e.values.copy_from_slice(&grad[offset..offset + n]);
        offset += n;
    }
    Ok(store)
}
