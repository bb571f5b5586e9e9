use super::graph::{Graph, NodeId};
use super::{dot, sigmoid, Real, Tensor};
use crate::error::{Error, Result};

/// Weights of one LSTM cell. `w` has shape `(4n, input + n)` acting on
/// `input ⊕ h`; gate blocks are ordered input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<F> {
    pub w: Tensor<F>,
    pub b: Tensor<F>,
}

impl<F: Real> LstmParams<F> {
    pub fn hidden_size(&self) -> usize {
        self.w.rows() / 4
    }

    pub fn input_size(&self) -> usize {
        self.w.cols() - self.hidden_size()
    }
}

/// One LSTM step outside of any tape: returns `(h', c')`.
pub fn lstm_step<F: Real>(
    params: &LstmParams<F>,
    input: &Tensor<F>,
    state: (&Tensor<F>, &Tensor<F>),
) -> Result<(Tensor<F>, Tensor<F>)> {
    let n = params.hidden_size();
    if params.w.shape().len() != 2 || params.w.rows() != 4 * n || params.w.cols() < n {
        return Err(Error::shape("lstm weights", "(4n, input + n)", format!("{:?}", params.w.shape())));
    }
    if params.b.len() != 4 * n {
        return Err(Error::shape("lstm bias", 4 * n, params.b.len()));
    }
    if input.len() != params.input_size() {
        return Err(Error::shape("lstm input", params.input_size(), input.len()));
    }
    let (h, c) = state;
    if h.len() != n {
        return Err(Error::shape("lstm hidden state", n, h.len()));
    }
    if c.len() != n {
        return Err(Error::shape("lstm cell state", n, c.len()));
    }
    let mut xh = input.data().to_vec();
    xh.extend_from_slice(h.data());
    let z: Vec<F> = (0..4 * n)
        .map(|r| dot(params.w.row(r), &xh) + params.b.data()[r])
        .collect();
    let mut h_new = Vec::with_capacity(n);
    let mut c_new = Vec::with_capacity(n);
    for k in 0..n {
        let i = sigmoid(z[k]);
        let f = sigmoid(z[n + k]);
        let g = z[2 * n + k].tanh();
        let o = sigmoid(z[3 * n + k]);
        let cell = f * c.data()[k] + i * g;
        c_new.push(cell);
        h_new.push(o * cell.tanh());
    }
    let (h_new, c_new) = (Tensor::vector(h_new), Tensor::vector(c_new));
    h_new.ensure_finite("lstm hidden state")?;
    Ok((h_new, c_new))
}

/// Taped LSTM step; `w`, `b` are parameter nodes laid out as in [`LstmParams`].
pub fn lstm_cell<F: Real>(
    g: &mut Graph<'_, F>,
    w: NodeId,
    b: NodeId,
    x: NodeId,
    state: (NodeId, NodeId),
) -> Result<(NodeId, NodeId)> {
    let (h, c) = state;
    let n = g.value(h).len();
    let xh = g.concat(&[x, h]);
    let z = g.linear(w, xh, Some(b))?;
    let zi = g.slice(z, 0, n)?;
    let zf = g.slice(z, n, n)?;
    let zg = g.slice(z, 2 * n, n)?;
    let zo = g.slice(z, 3 * n, n)?;
    let i = g.sigmoid(zi);
    let f = g.sigmoid(zf);
    let cand = g.tanh(zg);
    let o = g.sigmoid(zo);
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_new = g.add(keep, write)?;
    let squashed = g.tanh(c_new);
    let h_new = g.mul(o, squashed)?;
    Ok((h_new, c_new))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ParamStore;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-0.8..0.8)).collect()).unwrap()
    }

    /// Scalar-by-scalar reference evaluation of the cell equations.
    fn reference(w: &[Vec<f64>], b: &[f64], x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = h.len();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let pre = |r: usize| {
            let mut s = b[r];
            for (j, xj) in x.iter().enumerate() {
                s += w[r][j] * xj;
            }
            for (j, hj) in h.iter().enumerate() {
                s += w[r][x.len() + j] * hj;
            }
            s
        };
        let mut h2 = vec![0.0; n];
        let mut c2 = vec![0.0; n];
        for k in 0..n {
            let i = sig(pre(k));
            let f = sig(pre(n + k));
            let g = pre(2 * n + k).tanh();
            let o = sig(pre(3 * n + k));
            c2[k] = f * c[k] + i * g;
            h2[k] = o * c2[k].tanh();
        }
        (h2, c2)
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let p = LstmParams {
            w: Tensor::<f64>::zeros(vec![12, 5]),
            b: Tensor::zeros(vec![12]),
        };
        let x = Tensor::vector(vec![0.3, -1.0]);
        let zero = Tensor::zeros(vec![3]);
        let (h, _) = lstm_step(&p, &x, (&zero, &zero)).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_reference_and_tape() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, d) = (4, 3);
        let p = LstmParams {
            w: random(&mut rng, vec![4 * n, d + n]),
            b: random(&mut rng, vec![4 * n]),
        };
        let x = random(&mut rng, vec![d]);
        let h = random(&mut rng, vec![n]);
        let c = random(&mut rng, vec![n]);
        let (h2, c2) = lstm_step(&p, &x, (&h, &c)).unwrap();
        let rows: Vec<Vec<f64>> = (0..4 * n).map(|r| p.w.row(r).to_vec()).collect();
        let (rh, rc) = reference(&rows, p.b.data(), x.data(), h.data(), c.data());
        for k in 0..n {
            assert!((h2.data()[k] - rh[k]).abs() < 1e-12);
            assert!((c2.data()[k] - rc[k]).abs() < 1e-12);
        }

        let mut store = ParamStore::new();
        let wid = store.add("w", p.w.clone());
        let bid = store.add("b", p.b.clone());
        let mut g = Graph::new(&store);
        let (wn, bn) = (g.param(wid), g.param(bid));
        let (xn, hn, cn) = (g.input(x.clone()), g.input(h.clone()), g.input(c.clone()));
        let (th, tc) = lstm_cell(&mut g, wn, bn, xn, (hn, cn)).unwrap();
        assert_eq!(g.value(th), &h2);
        assert_eq!(g.value(tc), &c2);
    }

    #[test]
    fn deterministic_sequence() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = LstmParams {
            w: random(&mut rng, vec![8, 4]).cast::<f32>(),
            b: random(&mut rng, vec![8]).cast::<f32>(),
        };
        let run = || {
            let mut h = Tensor::zeros(vec![2]);
            let mut c = Tensor::zeros(vec![2]);
            for t in 0..5 {
                let x = Tensor::vector(vec![t as f32 * 0.1, -0.2]);
                let (h2, c2) = lstm_step(&p, &x, (&h, &c)).unwrap();
                h = h2;
                c = c2;
            }
            h
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_names_operand() {
        let p = LstmParams {
            w: Tensor::<f32>::zeros(vec![8, 4]),
            b: Tensor::zeros(vec![8]),
        };
        let z = Tensor::zeros(vec![2]);
        let err = lstm_step(&p, &Tensor::zeros(vec![3]), (&z, &z)).unwrap_err();
        assert!(err.to_string().contains("lstm input"));
        let err = lstm_step(&p, &z, (&Tensor::zeros(vec![3]), &z)).unwrap_err();
        assert!(err.to_string().contains("hidden state"));
    }
}
