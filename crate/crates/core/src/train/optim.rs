use crate::linalg::Matrix;
use crate::nn::Parameters;

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Moment estimates mirroring a model's parameter list.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    /// Number of optimizer steps taken.
    pub t: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("non-finite gradient {value} in {tensor}[{index}]")]
pub struct NonFiniteGrad {
    pub tensor: String,
    pub index: usize,
    pub value: f64,
}

impl AdamState {
    pub fn new<M: Parameters + ?Sized>(model: &M) -> Self {
        let zeros: Vec<Matrix> = model
            .params()
            .iter()
            .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update, then zeroes every gradient. Leaves the
/// model and state untouched if any gradient is non-finite.
pub fn adam_step<M: Parameters + ?Sized>(
    model: &mut M,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), NonFiniteGrad> {
    for p in model.params() {
        if let Some((index, &value)) = p
            .grad
            .data()
            .iter()
            .enumerate()
            .find(|(_, g)| !g.is_finite())
        {
            return Err(NonFiniteGrad {
                tensor: p.name.clone(),
                index,
                value,
            });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, p) in model.params_mut().into_iter().enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let theta = p.value.data_mut();
        for (j, &g) in p.grad.data().iter().enumerate() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            theta[j] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        p.zero_grad();
    }
    Ok(())
}

/// L2 norm of all gradients concatenated.
pub fn global_grad_norm<M: Parameters + ?Sized>(model: &M) -> f64 {
    model
        .params()
        .iter()
        .map(|p| p.grad.sq_norm())
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients so their global norm is at most `clip_norm`.
/// Returns the factor applied (1.0 when no clipping happened).
pub fn clip_global<M: Parameters + ?Sized>(model: &mut M, clip_norm: f64) -> f64 {
    let norm = global_grad_norm(model);
    if norm <= clip_norm || !norm.is_finite() {
        return 1.0;
    }
    let factor = clip_norm / norm;
    for p in model.params_mut() {
        p.grad.scale_in_place(factor);
    }
    factor
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Rng;
    use crate::nn::ParamTensor;
    use proptest::prelude::*;

    struct Bag(Vec<ParamTensor>);

    impl Parameters for Bag {
        fn params(&self) -> Vec<&ParamTensor> {
            self.0.iter().collect()
        }
        fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
            self.0.iter_mut().collect()
        }
    }

    const DEFAULT: AdamConfig = AdamConfig {
        lr: 1e-3,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };

    fn scalar(value: f64, grad: f64) -> Bag {
        let mut p = ParamTensor::new("theta", Matrix::column(&[value]));
        p.grad.set(0, 0, grad);
        Bag(vec![p])
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut bag = scalar(0.75, 0.0);
        let mut st = AdamState::new(&bag);
        adam_step(&mut bag, &mut st, &DEFAULT).unwrap();
        assert_eq!(bag.0[0].value.get(0, 0), 0.75);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_on_unit_gradient() {
        let mut bag = scalar(0.0, 1.0);
        let mut st = AdamState::new(&bag);
        adam_step(&mut bag, &mut st, &DEFAULT).unwrap();
        // m_hat = v_hat = 1, so the step is lr / (1 + eps)
        let delta = bag.0[0].value.get(0, 0);
        assert!((delta + 0.000999999990).abs() < 1e-14, "{delta}");
        assert_eq!(bag.0[0].grad.get(0, 0), 0.0);
    }

    #[test]
    fn non_finite_gradient_is_reported_without_update() {
        let mut bag = scalar(2.0, 1.0);
        bag.0.push(ParamTensor::zeros("w", 2, 2));
        bag.0[1].grad.set(1, 0, f64::INFINITY);
        let mut st = AdamState::new(&bag);
        let err = adam_step(&mut bag, &mut st, &DEFAULT).unwrap_err();
        assert_eq!(err.tensor, "w");
        assert_eq!(err.index, 2);
        assert_eq!(st.t, 0);
        assert_eq!(bag.0[0].value.get(0, 0), 2.0);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut rng = Rng::new(3);
            let mut bag = Bag(vec![ParamTensor::new(
                "w",
                Matrix::from_vec(2, 3, (0..6).map(|_| rng.gauss()).collect()),
            )]);
            let mut st = AdamState::new(&bag);
            for _ in 0..50 {
                let g: Vec<f64> = (0..6).map(|_| rng.gauss()).collect();
                bag.0[0].grad.data_mut().copy_from_slice(&g);
                adam_step(&mut bag, &mut st, &DEFAULT).unwrap();
            }
            bag.0[0]
                .value
                .data()
                .iter()
                .map(|x| x.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn clip_examples() {
        let mut bag = scalar(0.0, 0.0);
        assert_eq!(clip_global(&mut bag, 5.0), 1.0);
        let mut bag = scalar(0.0, 10.0);
        assert_eq!(clip_global(&mut bag, 5.0), 0.5);
        assert_eq!(bag.0[0].grad.get(0, 0), 5.0);
    }

    proptest! {
        #[test]
        fn clipping_bounds_norm_and_never_grows(
            g in prop::collection::vec(-100.0f64..100.0, 1..20),
            clip in 0.1f64..10.0,
        ) {
            let n = g.len();
            let mut bag = Bag(vec![ParamTensor::zeros("a", n, 1), ParamTensor::zeros("b", 1, n)]);
            bag.0[0].grad.data_mut().copy_from_slice(&g);
            bag.0[1].grad.data_mut().iter_mut().zip(&g).for_each(|(d, x)| *d = -0.5 * x);
            let before: Vec<f64> = bag.0.iter().flat_map(|p| p.grad.data().to_vec()).collect();
            let factor = clip_global(&mut bag, clip);
            prop_assert!(factor > 0.0 && factor <= 1.0);
            prop_assert!(global_grad_norm(&bag) <= clip + 1e-12);
            let after: Vec<f64> = bag.0.iter().flat_map(|p| p.grad.data().to_vec()).collect();
            for (a, b) in after.iter().zip(&before) {
                prop_assert!(a.abs() <= b.abs());
            }
        }
    }
}
