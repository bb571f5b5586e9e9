use serde::{Deserialize, Serialize};

use super::graph::{Gradients, ParamStore};
use super::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState<F> {
    pub step: u64,
    m: Vec<Tensor<F>>,
    v: Vec<Tensor<F>>,
}

impl<F: Real> AdamState<F> {
    pub fn new(params: &ParamStore<F>) -> Self {
        let zeros = || params.iter().map(|(_, t)| Tensor::zeros(t.shape().to_vec())).collect();
        Self {
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

/// One bias-corrected Adam step. A non-finite gradient aborts before any
/// parameter is touched.
pub fn adam_update<F: Real>(
    params: &mut ParamStore<F>,
    grads: &Gradients<F>,
    state: &mut AdamState<F>,
    cfg: &AdamConfig,
) -> Result<()> {
    for (id, g) in params.ids().zip(grads.iter()) {
        if g.shape() != params.get(id).shape() {
            return Err(Error::shape("adam gradient", format!("{:?}", params.get(id).shape()), format!("{:?}", g.shape())));
        }
        if !g.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite gradient for {} at step {}",
                params.name(id),
                state.step + 1
            )));
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let (b1, b2) = (F::of(cfg.beta1), F::of(cfg.beta2));
    let c1 = F::of(1.0 - cfg.beta1.powf(t));
    let c2 = F::of(1.0 - cfg.beta2.powf(t));
    let (lr, eps) = (F::of(cfg.lr), F::of(cfg.eps));
    let ids: Vec<_> = params.ids().collect();
    for (k, id) in ids.into_iter().enumerate() {
        let g = grads.get(id).data();
        let m = state.m[k].data_mut();
        let v = state.v[k].data_mut();
        let p = params.get_mut(id).data_mut();
        for j in 0..p.len() {
            m[j] = b1 * m[j] + (F::one() - b1) * g[j];
            v[j] = b2 * v[j] + (F::one() - b2) * g[j] * g[j];
            let mh = m[j] / c1;
            let vh = v[j] / c2;
            p[j] = p[j] - lr * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{backward, Graph};

    fn store(x: f64) -> (ParamStore<f64>, super::super::ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("x", Tensor::vector(vec![x]));
        (s, id)
    }

    fn grads_of(s: &ParamStore<f64>, scale: f64) -> Gradients<f64> {
        // loss = scale * x  →  gradient = scale
        let mut g = Graph::new(s);
        let x = g.param(s.ids().next().unwrap());
        let l = g.sum_all(x);
        let l = g.scale(l, scale);
        backward(&g, l).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (mut s, id) = store(0.5);
        let mut st = AdamState::new(&s);
        let g = grads_of(&s, 0.0);
        adam_update(&mut s, &g, &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(s.get(id).data()[0], 0.5);
    }

    #[test]
    fn first_step_closed_form() {
        let (mut s, id) = store(0.0);
        let mut st = AdamState::new(&s);
        let g = grads_of(&s, 1.0);
        let cfg = AdamConfig::default();
        adam_update(&mut s, &g, &mut st, &cfg).unwrap();
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((s.get(id).data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let (mut s, id) = store(0.0);
        let mut st = AdamState::new(&s);
        let cfg = AdamConfig::default();
        let mut prev = 0.0;
        let mut last_step = 0.0;
        for _ in 0..5000 {
            let g = grads_of(&s, -3.0);
            adam_update(&mut s, &g, &mut st, &cfg).unwrap();
            let now = s.get(id).data()[0];
            last_step = now - prev;
            prev = now;
        }
        assert!((last_step - 0.001).abs() < 1e-6, "{last_step}");
    }

    #[test]
    fn nan_gradient_fails_fast() {
        let (mut s, id) = store(1.0);
        let mut st = AdamState::new(&s);
        let mut g = s.zero_gradients();
        g.scale(f64::NAN);
        // zero * NaN is NaN
        assert!(adam_update(&mut s, &g, &mut st, &AdamConfig::default()).is_err());
        assert_eq!(s.get(id).data()[0], 1.0);
        assert_eq!(st.step, 0);
    }
}
