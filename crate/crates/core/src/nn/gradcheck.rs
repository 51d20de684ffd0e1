//! Central-difference gradient checking over any [`Parameters`] owner.

use super::Parameters;
use crate::linalg::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel: f64,
    pub mean_rel: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel: f64,
    pub mean_rel: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum GradCheckError {
    #[error("non-finite loss {loss} while perturbing {tensor}[{index}]")]
    NonFiniteLoss {
        tensor: String,
        index: usize,
        loss: f64,
    },
    #[error("non-finite loss {0} at the unperturbed parameters")]
    NonFiniteBase(f64),
}

/// `|a - n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares analytic gradients with `(L(θ+ε) - L(θ-ε)) / 2ε` on up to
/// `sample` coordinates per tensor (all of them for small tensors).
///
/// `loss` must compute the loss and accumulate gradients into the model;
/// the checker zeroes gradients before every call.
pub fn grad_check<M, F>(
    model: &mut M,
    mut loss: F,
    eps: f64,
    sample: usize,
    rng: &mut Rng,
) -> Result<GradCheckReport, GradCheckError>
where
    M: Parameters,
    F: FnMut(&mut M) -> f64,
{
    model.zero_grads();
    let base = loss(model);
    if !base.is_finite() {
        return Err(GradCheckError::NonFiniteBase(base));
    }
    let analytic: Vec<Vec<f64>> = model
        .params()
        .iter()
        .map(|p| p.grad.data().to_vec())
        .collect();

    let mut tensors = Vec::with_capacity(analytic.len());
    let mut total = 0.0;
    let mut count = 0usize;
    for (ti, grads) in analytic.iter().enumerate() {
        let numel = grads.len();
        let mut coords: Vec<usize> = (0..numel).collect();
        if numel > sample {
            // partial Fisher-Yates: the first `sample` slots become a random subset
            for i in 0..sample {
                let j = i + rng.below(numel - i);
                coords.swap(i, j);
            }
            coords.truncate(sample);
        }

        let mut eval_at = |model: &mut M, idx: usize, value: f64| -> Result<f64, GradCheckError> {
            model.params_mut()[ti].value.data_mut()[idx] = value;
            model.zero_grads();
            let l = loss(model);
            if l.is_finite() {
                Ok(l)
            } else {
                Err(GradCheckError::NonFiniteLoss {
                    tensor: model.params()[ti].name.clone(),
                    index: idx,
                    loss: l,
                })
            }
        };

        let mut max_rel = 0.0f64;
        let mut sum_rel = 0.0;
        for &idx in &coords {
            let orig = model.params()[ti].value.data()[idx];
            let plus = eval_at(model, idx, orig + eps);
            let minus = eval_at(model, idx, orig - eps);
            model.params_mut()[ti].value.data_mut()[idx] = orig;
            let numeric = (plus? - minus?) / (2.0 * eps);
            let rel = relative_error(grads[idx], numeric);
            max_rel = max_rel.max(rel);
            sum_rel += rel;
        }
        let name = model.params()[ti].name.clone();
        total += sum_rel;
        count += coords.len();
        tensors.push(TensorCheck {
            name,
            checked: coords.len(),
            max_rel,
            mean_rel: if coords.is_empty() {
                0.0
            } else {
                sum_rel / coords.len() as f64
            },
        });
    }

    // leave the model with the analytic gradients at θ
    model.zero_grads();
    loss(model);

    Ok(GradCheckReport {
        max_rel: tensors.iter().map(|t| t.max_rel).fold(0.0, f64::max),
        mean_rel: if count == 0 {
            0.0
        } else {
            total / count as f64
        },
        tensors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::nn::ParamTensor;

    struct Quad(ParamTensor);

    impl Parameters for Quad {
        fn params(&self) -> Vec<&ParamTensor> {
            vec![&self.0]
        }
        fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(1.0, 0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn detects_wrong_gradient() {
        let mut q = Quad(ParamTensor::new("q", Matrix::column(&[1.0, 2.0])));
        // true gradient of sum(x^2) is 2x; report x instead
        let report = grad_check(
            &mut q,
            |q| {
                let v = q.0.value.data().to_vec();
                q.0.grad.data_mut().copy_from_slice(&v);
                v.iter().map(|x| x * x).sum()
            },
            1e-5,
            10,
            &mut Rng::new(0),
        )
        .unwrap();
        assert!(report.max_rel > 0.3);
        assert_eq!(report.tensors[0].checked, 2);
    }

    #[test]
    fn non_finite_loss_names_coordinate() {
        let mut q = Quad(ParamTensor::new("q", Matrix::column(&[0.0, 1.0])));
        let err = grad_check(
            &mut q,
            |q| {
                let x = q.0.value.data()[1];
                if x > 1.0 {
                    f64::NAN
                } else {
                    x
                }
            },
            1e-5,
            10,
            &mut Rng::new(0),
        )
        .unwrap_err();
        match err {
            GradCheckError::NonFiniteLoss { tensor, index, .. } => {
                assert_eq!(tensor, "q");
                assert_eq!(index, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        // the parameter was restored
        assert_eq!(q.0.value.data(), &[0.0, 1.0]);
    }

    #[test]
    fn samples_subset_of_large_tensor() {
        let mut q = Quad(ParamTensor::new("q", Matrix::zeros(10, 10)));
        let report = grad_check(
            &mut q,
            |q| {
                let v = q.0.value.data().to_vec();
                for (g, x) in q.0.grad.data_mut().iter_mut().zip(&v) {
                    *g = 2.0 * x + 1.0;
                }
                v.iter().map(|x| x * x + x).sum()
            },
            1e-5,
            25,
            &mut Rng::new(4),
        )
        .unwrap();
        assert_eq!(report.tensors[0].checked, 25);
        assert!(report.max_rel < 1e-8);
    }
}
