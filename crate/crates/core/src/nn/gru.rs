use super::{ParamTensor, Parameters};
use crate::linalg::{self, glorot_init, sigmoid, Matrix, Rng};

/// Gated recurrent unit:
///
/// ```text
/// r  = sigmoid(W_r x + U_r h + b_r)
/// z  = sigmoid(W_z x + U_z h + b_z)
/// h~ = tanh(W_h x + U_h (r * h) + b_h)
/// h' = (1 - z) * h + z * h~
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct GruCell {
    pub w_r: ParamTensor,
    pub w_z: ParamTensor,
    pub w_h: ParamTensor,
    pub u_r: ParamTensor,
    pub u_z: ParamTensor,
    pub u_h: ParamTensor,
    pub b_r: ParamTensor,
    pub b_z: ParamTensor,
    pub b_h: ParamTensor,
}

/// Activations saved by one forward step.
#[derive(Clone, Debug)]
pub struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    h_tilde: Vec<f64>,
}

impl GruCell {
    /// Glorot-initialized weights, zero biases. Tensor names are
    /// `"{prefix}.W_r"`, `"{prefix}.U_r"`, `"{prefix}.b_r"` and so on.
    pub fn new(prefix: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut w = |gate: &str| {
            ParamTensor::new(
                format!("{prefix}.W_{gate}"),
                glorot_init(hidden, input, rng),
            )
        };
        let (w_r, w_z, w_h) = (w("r"), w("z"), w("h"));
        let mut u = |gate: &str| {
            ParamTensor::new(
                format!("{prefix}.U_{gate}"),
                glorot_init(hidden, hidden, rng),
            )
        };
        let (u_r, u_z, u_h) = (u("r"), u("z"), u("h"));
        let b = |gate: &str| ParamTensor::zeros(format!("{prefix}.b_{gate}"), hidden, 1);
        Self {
            w_r,
            w_z,
            w_h,
            u_r,
            u_z,
            u_h,
            b_r: b("r"),
            b_z: b("z"),
            b_h: b("h"),
        }
    }

    pub fn zeros(prefix: &str, input: usize, hidden: usize) -> Self {
        let mut cell = Self::new(prefix, input, hidden, &mut Rng::new(0));
        for p in cell.params_mut() {
            p.value.fill(0.0);
        }
        cell
    }

    pub fn input_dim(&self) -> usize {
        self.w_r.value.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_r.value.rows()
    }

    fn gate_preactivation(
        w: &ParamTensor,
        u: &ParamTensor,
        b: &ParamTensor,
        x: &[f64],
        h: &[f64],
    ) -> Vec<f64> {
        let mut a = b.value.data().to_vec();
        linalg::gemv_acc(&mut a, &w.value, x);
        linalg::gemv_acc(&mut a, &u.value, h);
        a
    }

    pub fn step(&self, x: &[f64], h_prev: &[f64]) -> (Vec<f64>, StepCache) {
        let hd = self.hidden_dim();
        assert!(
            x.len() == self.input_dim() && h_prev.len() == hd,
            "shape mismatch in gru_step: cell expects input {} / hidden {}, got {} / {}",
            self.input_dim(),
            hd,
            x.len(),
            h_prev.len()
        );
        let mut r = Self::gate_preactivation(&self.w_r, &self.u_r, &self.b_r, x, h_prev);
        r.iter_mut().for_each(|v| *v = sigmoid(*v));
        let mut z = Self::gate_preactivation(&self.w_z, &self.u_z, &self.b_z, x, h_prev);
        z.iter_mut().for_each(|v| *v = sigmoid(*v));
        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        let mut h_tilde = Self::gate_preactivation(&self.w_h, &self.u_h, &self.b_h, x, &rh);
        h_tilde.iter_mut().for_each(|v| *v = v.tanh());
        let h: Vec<f64> = (0..hd)
            .map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * h_tilde[i])
            .collect();
        let cache = StepCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            r,
            z,
            h_tilde,
        };
        (h, cache)
    }

    /// Backward through one step. Adds the input gradient into `dx` and
    /// returns the gradient with respect to `h_prev`.
    pub fn backward_step(&mut self, cache: StepCache, dh: &[f64], dx: &mut [f64]) -> Vec<f64> {
        let hd = self.hidden_dim();
        let StepCache {
            x,
            h_prev,
            r,
            z,
            h_tilde,
        } = cache;
        let mut dh_prev: Vec<f64> = (0..hd).map(|i| dh[i] * (1.0 - z[i])).collect();

        let da_h: Vec<f64> = (0..hd)
            .map(|i| dh[i] * z[i] * (1.0 - h_tilde[i] * h_tilde[i]))
            .collect();
        let da_z: Vec<f64> = (0..hd)
            .map(|i| dh[i] * (h_tilde[i] - h_prev[i]) * z[i] * (1.0 - z[i]))
            .collect();

        let rh: Vec<f64> = r.iter().zip(&h_prev).map(|(a, b)| a * b).collect();
        linalg::outer_acc(&mut self.w_h.grad, &da_h, &x);
        linalg::outer_acc(&mut self.u_h.grad, &da_h, &rh);
        linalg::axpy(self.b_h.grad.data_mut(), 1.0, &da_h);
        linalg::gemv_t_acc(dx, &self.w_h.value, &da_h);
        let mut d_rh = vec![0.0; hd];
        linalg::gemv_t_acc(&mut d_rh, &self.u_h.value, &da_h);

        let da_r: Vec<f64> = (0..hd)
            .map(|i| d_rh[i] * h_prev[i] * r[i] * (1.0 - r[i]))
            .collect();
        for i in 0..hd {
            dh_prev[i] += d_rh[i] * r[i];
        }

        linalg::outer_acc(&mut self.w_z.grad, &da_z, &x);
        linalg::outer_acc(&mut self.u_z.grad, &da_z, &h_prev);
        linalg::axpy(self.b_z.grad.data_mut(), 1.0, &da_z);
        linalg::gemv_t_acc(dx, &self.w_z.value, &da_z);
        linalg::gemv_t_acc(&mut dh_prev, &self.u_z.value, &da_z);

        linalg::outer_acc(&mut self.w_r.grad, &da_r, &x);
        linalg::outer_acc(&mut self.u_r.grad, &da_r, &h_prev);
        linalg::axpy(self.b_r.grad.data_mut(), 1.0, &da_r);
        linalg::gemv_t_acc(dx, &self.w_r.value, &da_r);
        linalg::gemv_t_acc(&mut dh_prev, &self.u_r.value, &da_r);

        dh_prev
    }
}

impl Parameters for GruCell {
    fn params(&self) -> Vec<&ParamTensor> {
        vec![
            &self.w_r, &self.w_z, &self.w_h, &self.u_r, &self.u_z, &self.u_h, &self.b_r, &self.b_z,
            &self.b_h,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![
            &mut self.w_r,
            &mut self.w_z,
            &mut self.w_h,
            &mut self.u_r,
            &mut self.u_z,
            &mut self.u_h,
            &mut self.b_r,
            &mut self.b_z,
            &mut self.b_h,
        ]
    }
}

/// Step caches of both directions, each in processing order.
#[derive(Debug)]
pub struct BiGruCache {
    fwd: Vec<StepCache>,
    bwd: Vec<StepCache>,
}

#[derive(Debug)]
pub struct BiGruOutput {
    /// Row `t` is `[fwd_t ; bwd_t]`.
    pub token_reps: Matrix,
    /// Forward state after the last position.
    pub last_fwd: Vec<f64>,
    /// Backward state after reading position 0.
    pub last_bwd: Vec<f64>,
    pub cache: BiGruCache,
}

/// Runs `fwd` left to right and `bwd` right to left over the rows of `xs`,
/// both from a zero state.
pub fn bigru_forward(fwd: &GruCell, bwd: &GruCell, xs: &Matrix) -> BiGruOutput {
    let n = xs.rows();
    assert!(n >= 1, "bidirectional GRU over an empty sequence");
    let hf = fwd.hidden_dim();
    let hb = bwd.hidden_dim();
    let mut reps = Matrix::zeros(n, hf + hb);

    let mut h = vec![0.0; hf];
    let mut fwd_caches = Vec::with_capacity(n);
    for t in 0..n {
        let (next, cache) = fwd.step(xs.row(t), &h);
        reps.row_mut(t)[..hf].copy_from_slice(&next);
        fwd_caches.push(cache);
        h = next;
    }
    let last_fwd = h;

    let mut h = vec![0.0; hb];
    let mut bwd_caches = Vec::with_capacity(n);
    for t in (0..n).rev() {
        let (next, cache) = bwd.step(xs.row(t), &h);
        reps.row_mut(t)[hf..].copy_from_slice(&next);
        bwd_caches.push(cache);
        h = next;
    }
    let last_bwd = h;

    BiGruOutput {
        token_reps: reps,
        last_fwd,
        last_bwd,
        cache: BiGruCache {
            fwd: fwd_caches,
            bwd: bwd_caches,
        },
    }
}

/// Full BPTT through both directions. `d_reps` is the gradient of the token
/// representations; `d_last_fwd`/`d_last_bwd` are extra gradients on the two
/// final states. Consumes the cache and returns the gradient of `xs`.
pub fn bigru_backward(
    fwd: &mut GruCell,
    bwd: &mut GruCell,
    cache: BiGruCache,
    d_reps: &Matrix,
    d_last_fwd: &[f64],
    d_last_bwd: &[f64],
) -> Matrix {
    let BiGruCache {
        fwd: mut fwd_caches,
        bwd: mut bwd_caches,
    } = cache;
    let n = fwd_caches.len();
    let hf = fwd.hidden_dim();
    let hb = bwd.hidden_dim();
    assert_eq!(
        d_reps.shape(),
        (n, hf + hb),
        "bigru backward gradient shape"
    );
    let mut dxs = Matrix::zeros(n, fwd.input_dim());

    let mut carry = d_last_fwd.to_vec();
    for t in (0..n).rev() {
        let step = fwd_caches.pop().expect("one cache per step");
        let dh: Vec<f64> = carry
            .iter()
            .zip(&d_reps.row(t)[..hf])
            .map(|(a, b)| a + b)
            .collect();
        carry = fwd.backward_step(step, &dh, dxs.row_mut(t));
    }

    // The backward direction processed positions n-1..0, so its caches are
    // unwound from position 0 upwards.
    let mut carry = d_last_bwd.to_vec();
    for t in 0..n {
        let step = bwd_caches.pop().expect("one cache per step");
        let dh: Vec<f64> = carry
            .iter()
            .zip(&d_reps.row(t)[hf..])
            .map(|(a, b)| a + b)
            .collect();
        carry = bwd.backward_step(step, &dh, dxs.row_mut(t));
    }
    dxs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;

    struct Pair {
        fwd: GruCell,
        bwd: GruCell,
    }

    impl Parameters for Pair {
        fn params(&self) -> Vec<&ParamTensor> {
            let mut v = self.fwd.params();
            v.extend(self.bwd.params());
            v
        }
        fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
            let mut v = self.fwd.params_mut();
            v.extend(self.bwd.params_mut());
            v
        }
    }

    fn randomize_biases(cell: &mut GruCell, rng: &mut Rng) {
        for b in [&mut cell.b_r, &mut cell.b_z, &mut cell.b_h] {
            b.value
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = 0.3 * rng.gauss());
        }
    }

    #[test]
    fn zero_cell_halves_state() {
        let cell = GruCell::zeros("g", 2, 2);
        let (h, _) = cell.step(&[1.0, -3.0], &[0.4, -0.2]);
        assert_eq!(h, vec![0.2, -0.1]);
        let (h, _) = cell.step(&[1.0, -3.0], &[0.0, 0.0]);
        assert_eq!(h, vec![0.0, 0.0]);
    }

    #[test]
    #[should_panic(expected = "shape mismatch in gru_step")]
    fn step_shape_mismatch() {
        GruCell::zeros("g", 2, 3).step(&[1.0], &[0.0; 3]);
    }

    #[test]
    fn single_step_gradients() {
        // loss = <g, h'> with a random upstream g; also checks the x and h_prev
        // gradients through a wrapper tensor.
        struct Step {
            cell: GruCell,
            x: ParamTensor,
            h: ParamTensor,
        }
        impl Parameters for Step {
            fn params(&self) -> Vec<&ParamTensor> {
                let mut v = self.cell.params();
                v.push(&self.x);
                v.push(&self.h);
                v
            }
            fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
                let mut v = self.cell.params_mut();
                v.push(&mut self.x);
                v.push(&mut self.h);
                v
            }
        }
        let mut rng = Rng::new(7);
        let mut cell = GruCell::new("g", 2, 3, &mut rng);
        randomize_biases(&mut cell, &mut rng);
        let mut m = Step {
            cell,
            x: ParamTensor::new("x", Matrix::column(&[0.5, -0.8])),
            h: ParamTensor::new("h", Matrix::column(&[0.1, 0.6, -0.4])),
        };
        let upstream = [0.3, -1.2, 0.7];
        let report = grad_check(
            &mut m,
            |m| {
                let (h, cache) = m.cell.step(m.x.value.data(), m.h.value.data());
                let loss = linalg::dot(&h, &upstream);
                let mut dx = vec![0.0; 2];
                let dh = m.cell.backward_step(cache, &upstream, &mut dx);
                linalg::axpy(m.x.grad.data_mut(), 1.0, &dx);
                linalg::axpy(m.h.grad.data_mut(), 1.0, &dh);
                loss
            },
            1e-5,
            25,
            &mut Rng::new(1),
        )
        .unwrap();
        assert!(report.max_rel < 1e-6, "{report:?}");
    }

    fn seq_loss(m: &mut Pair, xs: &Matrix, weights: &Matrix) -> f64 {
        let out = bigru_forward(&m.fwd, &m.bwd, xs);
        let mut loss: f64 = out
            .token_reps
            .data()
            .iter()
            .zip(weights.data())
            .map(|(a, b)| a * b)
            .sum();
        let g_last_f: Vec<f64> = (0..m.fwd.hidden_dim())
            .map(|i| 0.5 + 0.1 * i as f64)
            .collect();
        let g_last_b: Vec<f64> = (0..m.bwd.hidden_dim())
            .map(|i| -0.3 + 0.2 * i as f64)
            .collect();
        loss += linalg::dot(&out.last_fwd, &g_last_f) + linalg::dot(&out.last_bwd, &g_last_b);
        bigru_backward(
            &mut m.fwd, &mut m.bwd, out.cache, weights, &g_last_f, &g_last_b,
        );
        loss
    }

    #[test]
    fn bigru_gradients_over_seeds() {
        for seed in 0..10u64 {
            let mut rng = Rng::new(seed);
            let mut fwd = GruCell::new("f", 3, 4, &mut rng);
            let mut bwd = GruCell::new("b", 3, 2, &mut rng);
            randomize_biases(&mut fwd, &mut rng);
            randomize_biases(&mut bwd, &mut rng);
            let mut m = Pair { fwd, bwd };
            let n = 1 + rng.below(5);
            let xs = Matrix::from_vec(n, 3, (0..n * 3).map(|_| rng.gauss()).collect());
            let w = Matrix::from_vec(n, 6, (0..n * 6).map(|_| rng.gauss()).collect());
            let report = grad_check(&mut m, |m| seq_loss(m, &xs, &w), 1e-5, 25, &mut rng).unwrap();
            assert!(report.max_rel < 1e-4, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn bigru_single_step_reps_are_final_states() {
        let mut rng = Rng::new(3);
        let fwd = GruCell::new("f", 2, 3, &mut rng);
        let bwd = GruCell::new("b", 2, 3, &mut rng);
        let xs = Matrix::from_rows(&[&[0.2, -0.7]]);
        let out = bigru_forward(&fwd, &bwd, &xs);
        let mut expected = out.last_fwd.clone();
        expected.extend(&out.last_bwd);
        assert_eq!(out.token_reps.row(0), &expected[..]);
    }

    #[test]
    fn bigru_zero_cells_give_zero_reps() {
        let xs = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let out = bigru_forward(&GruCell::zeros("f", 2, 2), &GruCell::zeros("b", 2, 2), &xs);
        assert!(out.token_reps.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bigru_palindrome_symmetry() {
        let mut rng = Rng::new(21);
        let fwd = GruCell::new("f", 2, 3, &mut rng);
        let mut bwd = fwd.clone();
        for p in bwd.params_mut() {
            p.name = p.name.replacen('f', "b", 1);
        }
        let xs = Matrix::from_rows(&[
            &[0.1, 0.9],
            &[-0.5, 0.2],
            &[0.3, 0.3],
            &[-0.5, 0.2],
            &[0.1, 0.9],
        ]);
        let out = bigru_forward(&fwd, &bwd, &xs);
        let n = xs.rows();
        for t in 0..n {
            let f = &out.token_reps.row(t)[..3];
            let b = &out.token_reps.row(n - 1 - t)[3..];
            assert_eq!(f, b);
        }
    }

    #[test]
    #[should_panic(expected = "empty sequence")]
    fn bigru_rejects_empty() {
        let c = GruCell::zeros("f", 2, 2);
        bigru_forward(&c, &c, &Matrix::zeros(0, 2));
    }
}
