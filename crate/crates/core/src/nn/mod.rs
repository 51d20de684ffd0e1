//! Layers with hand-written forward and backward passes.
//!
//! Every backward function accumulates into `ParamTensor::grad`; nothing here
//! ever zeroes a gradient except [`Parameters::zero_grads`].

mod gradcheck;
mod gru;

pub use gradcheck::{grad_check, relative_error, GradCheckError, GradCheckReport, TensorCheck};
pub use gru::{bigru_backward, bigru_forward, BiGruCache, BiGruOutput, GruCell, StepCache};

use crate::linalg::{self, Matrix};

/// A named trainable matrix with its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self::new(name, Matrix::zeros(rows, cols))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }
}

/// Anything that owns trainable tensors. Order of the returned vectors is
/// stable and defines the serialization order.
pub trait Parameters {
    fn params(&self) -> Vec<&ParamTensor>;
    fn params_mut(&mut self) -> Vec<&mut ParamTensor>;

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }
}

/// Row `t` of the result is `table[ids[t]]`.
pub fn embed_forward(table: &ParamTensor, ids: &[usize]) -> Matrix {
    let dim = table.value.cols();
    let mut out = Matrix::zeros(ids.len(), dim);
    for (t, &id) in ids.iter().enumerate() {
        assert!(
            id < table.value.rows(),
            "token id {} out of range for embedding table with {} rows",
            id,
            table.value.rows()
        );
        out.row_mut(t).copy_from_slice(table.value.row(id));
    }
    out
}

/// Scatter-add the rows of `d_out` into the gradient rows of `ids`.
pub fn embed_backward(table: &mut ParamTensor, ids: &[usize], d_out: &Matrix) {
    assert_eq!(d_out.rows(), ids.len(), "embedding backward row count");
    for (t, &id) in ids.iter().enumerate() {
        linalg::axpy(table.grad.row_mut(id), 1.0, d_out.row(t));
    }
}

/// `w * f + b` for a single feature vector.
pub fn dense_forward(w: &ParamTensor, b: &ParamTensor, f: &[f64]) -> Vec<f64> {
    assert!(
        b.value.shape() == (w.value.rows(), 1),
        "shape mismatch in dense layer: weight {}x{}, bias {}x{}",
        w.value.rows(),
        w.value.cols(),
        b.value.rows(),
        b.value.cols()
    );
    let mut out = b.value.data().to_vec();
    linalg::gemv_acc(&mut out, &w.value, f);
    out
}

/// Returns the gradient with respect to `f`.
pub fn dense_backward(
    w: &mut ParamTensor,
    b: &mut ParamTensor,
    f: &[f64],
    d_out: &[f64],
) -> Vec<f64> {
    linalg::outer_acc(&mut w.grad, d_out, f);
    linalg::axpy(b.grad.data_mut(), 1.0, d_out);
    let mut df = vec![0.0; f.len()];
    linalg::gemv_t_acc(&mut df, &w.value, d_out);
    df
}

/// Dense layer applied to every row of `xs`.
pub fn dense_forward_rows(w: &ParamTensor, b: &ParamTensor, xs: &Matrix) -> Matrix {
    let mut out = linalg::matmul_nt(xs, &w.value);
    for r in 0..out.rows() {
        linalg::axpy(out.row_mut(r), 1.0, b.value.data());
    }
    out
}

pub fn dense_backward_rows(
    w: &mut ParamTensor,
    b: &mut ParamTensor,
    xs: &Matrix,
    d_out: &Matrix,
) -> Matrix {
    assert_eq!(xs.rows(), d_out.rows(), "dense backward row count");
    let mut dx = Matrix::zeros(xs.rows(), xs.cols());
    for r in 0..xs.rows() {
        linalg::outer_acc(&mut w.grad, d_out.row(r), xs.row(r));
        linalg::axpy(b.grad.data_mut(), 1.0, d_out.row(r));
        linalg::gemv_t_acc(dx.row_mut(r), &w.value, d_out.row(r));
    }
    dx
}

/// Cross-entropy of `softmax(logits)` against `gold`, with its gradient.
pub fn softmax_ce(logits: &[f64], gold: usize) -> (f64, Vec<f64>) {
    assert!(
        gold < logits.len(),
        "gold class {} out of range for {} logits",
        gold,
        logits.len()
    );
    let lse = linalg::logsumexp(logits);
    let mut d: Vec<f64> = logits.iter().map(|&x| (x - lse).exp()).collect();
    d[gold] -= 1.0;
    (lse - logits[gold], d)
}
