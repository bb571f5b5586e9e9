//! Dense tensors and a small reverse-mode autodiff tape, sized for the
//! aligner: matrix-vector products, LSTM cells, tempered softmax, maxout.

mod adam;
mod checkpoint;
mod graph;
mod lstm;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::Float;

use crate::error::{Error, Result};

pub use adam::{adam_update, AdamConfig, AdamState};
pub use checkpoint::{checkpoint_from_str, checkpoint_to_string, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use graph::{backward, Gradients, Graph, NodeId, ParamId, ParamStore};
pub use lstm::{lstm_cell, lstm_step, LstmParams};

/// Floating-point element type. Training runs in `f32`; gradient checks use `f64`.
pub trait Real: Float + FromStr + Display + Debug + Default + Send + Sync + Sum + 'static {
    fn of(x: f64) -> Self {
        <Self as num_traits::NumCast>::from(x).expect("finite constant")
    }

    fn to_f64(self) -> f64 {
        <f64 as num_traits::NumCast>::from(self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Row-major dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape("tensor", format!("{n} values for shape {shape:?}"), data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![F::zero(); n],
        }
    }

    pub fn vector(data: Vec<F>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn scalar(x: F) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![x],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows of a matrix; vectors count as one row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[0],
            _ => 1,
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1],
        }
    }

    pub fn row(&self, r: usize) -> &[F] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn get2(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols() + c]
    }

    pub fn item(&self) -> F {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| G::of(x.to_f64())).collect(),
        }
    }

    pub(crate) fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Numerical(format!("non-finite value in {what}")))
        }
    }
}

/// `softmax(logits / temperature)` along the last axis, max-subtracted.
pub fn softmax_with_temperature<F: Real>(logits: &Tensor<F>, temperature: F) -> Result<Tensor<F>> {
    if !(temperature > F::zero()) {
        return Err(Error::Config(format!("softmax temperature must be positive, got {temperature}")));
    }
    logits.ensure_finite("softmax logits")?;
    let cols = logits.cols();
    let mut out = logits.data.clone();
    if cols > 0 {
        for row in out.chunks_mut(cols) {
            softmax_in_place(row, temperature);
        }
    }
    let t = Tensor {
        shape: logits.shape.clone(),
        data: out,
    };
    t.ensure_finite("softmax output")?;
    Ok(t)
}

pub(crate) fn softmax_in_place<F: Real>(row: &mut [F], temperature: F) {
    let inv_t = F::one() / temperature;
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut total = F::zero();
    for x in row.iter_mut() {
        *x = ((*x - max) * inv_t).exp();
        total = total + *x;
    }
    for x in row.iter_mut() {
        *x = *x / total;
    }
}

pub(crate) fn log_sum_exp<F: Real>(xs: &[F]) -> F {
    let max = xs.iter().copied().fold(F::neg_infinity(), F::max);
    if max == F::neg_infinity() {
        return max;
    }
    let s: F = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

pub(crate) fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [F::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let mut tail = F::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail = tail + x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy<F: Real>(alpha: F, x: &[F], y: &mut [F]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

#[inline]
pub(crate) fn add_in_place<F: Real>(y: &mut [F], x: &[F]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_uniform_for_equal_logits() {
        for t in [0.1, 1.0, 10.0] {
            let y = softmax_with_temperature(&Tensor::vector(vec![1.0f64; 3]), t).unwrap();
            for &p in y.data() {
                assert!((p - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_two_logits() {
        let x = Tensor::vector(vec![2.0f64, 0.0]);
        let y = softmax_with_temperature(&x, 1.0).unwrap();
        assert!((y.data()[0] - 0.8808).abs() < 1e-4 && (y.data()[1] - 0.1192).abs() < 1e-4);
        let y = softmax_with_temperature(&x, 10.0).unwrap();
        assert!((y.data()[0] - 0.5498).abs() < 1e-4 && (y.data()[1] - 0.4502).abs() < 1e-4);
    }

    #[test]
    fn softmax_rejects_nonpositive_temperature() {
        let x = Tensor::vector(vec![1.0f32, 2.0]);
        assert!(softmax_with_temperature(&x, 0.0).is_err());
        assert!(softmax_with_temperature(&x, -1.0).is_err());
    }

    #[test]
    fn softmax_rows_of_matrix() {
        let x = Tensor::matrix(2, 2, vec![0.0f64, 0.0, 5.0, -5.0]).unwrap();
        let y = softmax_with_temperature(&x, 1.0).unwrap();
        assert_eq!(y.shape(), &[2, 2]);
        assert!((y.get2(0, 0) - 0.5).abs() < 1e-12);
        assert!((y.row(1).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..37).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..37).map(|i| (i as f64 * 0.11).cos()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(logits in proptest::collection::vec(-50.0f32..50.0, 1..40), t in 0.05f32..100.0) {
            let y = softmax_with_temperature(&Tensor::vector(logits), t).unwrap();
            let s: f64 = y.data().iter().map(|&p| p as f64).sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
            prop_assert!(y.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
        }

        #[test]
        fn softmax_is_pure(logits in proptest::collection::vec(-5.0f32..5.0, 1..10)) {
            let x = Tensor::vector(logits);
            prop_assert_eq!(softmax_with_temperature(&x, 10.0).unwrap(), softmax_with_temperature(&x, 10.0).unwrap());
        }
    }
}
