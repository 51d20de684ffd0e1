//! Dense row-major matrices, the splitmix64 generator and the scalar kernels
//! (stable sigmoid, logsumexp) everything else is built from.
//!
//! Shape mismatches are programming errors and panic with both shapes in the
//! message, the same way slice indexing does.

use std::fmt;

/// Dense 2-D array of `f64`, row-major, no strides or views.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.data.chunks(self.cols.max(1)))
            .finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarFn {
    Tanh,
    Sigmoid,
    Exp,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Panics unless `data.len() == rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "matrix data length {} does not match shape {}x{}",
            data.len(),
            rows,
            cols
        );
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows in Matrix::from_rows");
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    /// A `n x 1` column.
    pub fn column(values: &[f64]) -> Self {
        Self::from_vec(values.len(), 1, values.to_vec())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Sum of squares of every entry.
    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn scale_in_place(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    fn assert_same_shape(&self, other: &Matrix, what: &str) {
        assert!(
            self.shape() == other.shape(),
            "shape mismatch in {}: {}x{} vs {}x{}",
            what,
            self.rows,
            self.cols,
            other.rows,
            other.cols
        );
    }

    /// `self += other`, same shape.
    pub fn add_assign(&mut self, other: &Matrix) {
        self.assert_same_shape(other, "add_assign");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Matrix product `a * b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert!(
        a.cols == b.rows,
        "shape mismatch in matmul: {}x{} times {}x{}",
        a.rows,
        a.cols,
        b.rows,
        b.cols
    );
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let arow = a.row(i);
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            axpy(orow, aik, b.row(k));
        }
    }
    out
}

/// `a * b^T` without materializing the transpose.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Matrix {
    assert!(
        a.cols == b.cols,
        "shape mismatch in matmul_nt: {}x{} times ({}x{})^T",
        a.rows,
        a.cols,
        b.rows,
        b.cols
    );
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        for j in 0..b.rows {
            out.data[i * b.rows + j] = dot(a.row(i), b.row(j));
        }
    }
    out
}

pub fn ew(a: &Matrix, b: &Matrix, kind: Elementwise) -> Matrix {
    a.assert_same_shape(b, "elementwise op");
    let f: fn(f64, f64) -> f64 = match kind {
        Elementwise::Add => |x, y| x + y,
        Elementwise::Sub => |x, y| x - y,
        Elementwise::Mul => |x, y| x * y,
    };
    let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec(a.rows, a.cols, data)
}

pub fn map_scalar(a: &Matrix, kind: ScalarFn) -> Matrix {
    let f: fn(f64) -> f64 = match kind {
        ScalarFn::Tanh => f64::tanh,
        ScalarFn::Sigmoid => sigmoid,
        ScalarFn::Exp => f64::exp,
    };
    Matrix::from_vec(a.rows, a.cols, a.data.iter().map(|&x| f(x)).collect())
}

/// Logistic function, split on sign so `exp` never sees a large positive
/// argument.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(sum(exp(v)))`, shifted by the maximum. Panics on empty input.
pub fn logsumexp(v: &[f64]) -> f64 {
    assert!(!v.is_empty(), "logsumexp of an empty sequence");
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Softmax of `v`, stable.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let lse = logsumexp(v);
    v.iter().map(|&x| (x - lse).exp()).collect()
}

/// Index of the largest value, smallest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out += w * x` where `w` is `out.len() x x.len()`.
#[inline]
pub fn gemv_acc(out: &mut [f64], w: &Matrix, x: &[f64]) {
    assert!(
        w.rows == out.len() && w.cols == x.len(),
        "shape mismatch in gemv: {}x{} times {}",
        w.rows,
        w.cols,
        x.len()
    );
    for (o, row) in out.iter_mut().zip(w.data.chunks_exact(w.cols)) {
        *o += dot(row, x);
    }
}

/// `out += w^T * v` where `w` is `v.len() x out.len()`.
#[inline]
pub fn gemv_t_acc(out: &mut [f64], w: &Matrix, v: &[f64]) {
    assert!(
        w.rows == v.len() && w.cols == out.len(),
        "shape mismatch in gemv_t: ({}x{})^T times {}",
        w.rows,
        w.cols,
        v.len()
    );
    for (&vi, row) in v.iter().zip(w.data.chunks_exact(w.cols)) {
        if vi != 0.0 {
            axpy(out, vi, row);
        }
    }
}

/// Rank-one update `g += a * b^T`.
#[inline]
pub fn outer_acc(g: &mut Matrix, a: &[f64], b: &[f64]) {
    assert!(
        g.rows == a.len() && g.cols == b.len(),
        "shape mismatch in outer product: {}x{} vs {}x{}",
        g.rows,
        g.cols,
        a.len(),
        b.len()
    );
    for (&ai, row) in a.iter().zip(g.data.chunks_exact_mut(b.len())) {
        if ai != 0.0 {
            axpy(row, ai, b);
        }
    }
}

/// splitmix64. The only source of randomness in the crate.
#[derive(Clone, Debug)]
pub struct Rng {
    state: u64,
    cached_gauss: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed,
            cached_gauss: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller; the second value of each pair is cached.
    pub fn gauss(&mut self) -> f64 {
        if let Some(g) = self.cached_gauss.take() {
            return g;
        }
        // 1 - u lies in (0, 1], keeping ln finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached_gauss = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Uniform integer in `[0, n)`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "Rng::below(0)");
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn range_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        lo + self.below(hi - lo + 1)
    }

    pub fn choose<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.below(items.len())]
    }

    /// Fisher-Yates.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Uniform in `[-L, L]` with `L = sqrt(6 / (rows + cols))`.
pub fn glorot_init(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    assert!(
        rows >= 1 && cols >= 1,
        "glorot_init needs nonzero dimensions, got {}x{}",
        rows,
        cols
    );
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| (2.0 * rng.uniform() - 1.0) * limit)
        .collect();
    Matrix::from_vec(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::Rng;
    use super::*;
    use proptest::prelude::*;

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    fn random(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gauss()).collect())
    }

    #[test]
    fn matmul_examples() {
        let b = Matrix::from_rows(&[&[5.0, 6.0], &[7.0, 8.0]]);
        assert_eq!(matmul(&Matrix::identity(2), &b), b);
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let expected = Matrix::from_rows(&[&[19.0, 22.0], &[43.0, 50.0]]);
        assert_eq!(naive_matmul(&a, &b), expected);
        assert_eq!(matmul(&a, &b), expected);
        assert_eq!(matmul(&a, &Matrix::zeros(2, 3)), Matrix::zeros(2, 3));
    }

    #[test]
    fn matmul_nt_matches_transpose() {
        let mut rng = Rng::new(4);
        let a = random(3, 4, &mut rng);
        let b = random(5, 4, &mut rng);
        let lhs = matmul_nt(&a, &b);
        let rhs = matmul(&a, &b.transpose());
        for (x, y) in lhs.data().iter().zip(rhs.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    #[should_panic(expected = "2x3 times 2x2")]
    fn matmul_shape_error_names_both_shapes() {
        matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 2));
    }

    #[test]
    fn elementwise_examples() {
        let a = Matrix::from_rows(&[&[1.0, 2.0]]);
        assert_eq!(ew(&a, &Matrix::zeros(1, 2), Elementwise::Add), a);
        let p = ew(
            &Matrix::from_rows(&[&[2.0, 3.0]]),
            &Matrix::from_rows(&[&[4.0, 5.0]]),
            Elementwise::Mul,
        );
        assert_eq!(p, Matrix::from_rows(&[&[8.0, 15.0]]));
        assert_eq!(ew(&a, &a, Elementwise::Sub), Matrix::zeros(1, 2));
    }

    #[test]
    #[should_panic(expected = "shape mismatch")]
    fn elementwise_shape_error() {
        ew(&Matrix::zeros(1, 2), &Matrix::zeros(2, 1), Elementwise::Add);
    }

    #[test]
    fn scalar_maps() {
        let z = Matrix::zeros(1, 1);
        assert_eq!(map_scalar(&z, ScalarFn::Tanh).get(0, 0), 0.0);
        assert_eq!(map_scalar(&z, ScalarFn::Sigmoid).get(0, 0), 0.5);
        assert_eq!(map_scalar(&z, ScalarFn::Exp).get(0, 0), 1.0);
        let t = map_scalar(&Matrix::from_rows(&[&[1.0]]), ScalarFn::Tanh).get(0, 0);
        assert!((t - 0.7615941559557649).abs() < 1e-15);
        let s = sigmoid(-710.0);
        assert!(s > 0.0 && s <= 1e-300 && s.is_finite());
        assert_eq!(sigmoid(710.0), 1.0);
    }

    #[test]
    fn logsumexp_examples() {
        assert_eq!(logsumexp(&[3.25]), 3.25);
        assert!((logsumexp(&[0.0, 0.0]) - std::f64::consts::LN_2).abs() < 1e-15);
        let big = logsumexp(&[1000.0, 1000.0]);
        assert!(big.is_finite());
        assert!((big - (1000.0 + std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "empty")]
    fn logsumexp_empty_panics() {
        logsumexp(&[]);
    }

    #[test]
    fn argmax_prefers_smallest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    // Computed independently with a Python splitmix64.
    const GOLDEN_SEED_42: [u64; 16] = [
        0xbdd732262feb6e95,
        0x28efe333b266f103,
        0x47526757130f9f52,
        0x581ce1ff0e4ae394,
        0x09bc585a244823f2,
        0xde4431fa3c80db06,
        0x37e9671c45376d5d,
        0xccf635ee9e9e2fa4,
        0x5705b8770b3d7dd5,
        0x9e54d738297f77ae,
        0x3474724a775b19bf,
        0x7e348a0e451650be,
        0x836ded897f3e46e6,
        0x851f977347ed6db7,
        0xaa47e31c02e78edc,
        0x341452c54d7c33f2,
    ];

    #[test]
    fn splitmix_golden_vector() {
        let mut rng = Rng::new(42);
        let got: Vec<u64> = (0..16).map(|_| rng.next_u64()).collect();
        assert_eq!(got, GOLDEN_SEED_42);
        let mut rng = Rng::new(42);
        assert_eq!(rng.uniform(), 0.7415648787718233);
        assert_eq!(rng.uniform(), 0.1599103928769201);
    }

    #[test]
    fn rng_determinism_and_moments() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..1000 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
        let mut rng = Rng::new(1);
        let n = 100_000;
        let us: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        assert!(us.iter().all(|&u| (0.0..1.0).contains(&u)));
        let mean = us.iter().sum::<f64>() / n as f64;
        assert!((0.49..=0.51).contains(&mean), "uniform mean {mean}");

        let mut rng = Rng::new(1);
        let gs: Vec<f64> = (0..n).map(|_| rng.gauss()).collect();
        let gm = gs.iter().sum::<f64>() / n as f64;
        let var = gs.iter().map(|g| (g - gm).powi(2)).sum::<f64>() / n as f64;
        assert!((0.97..=1.03).contains(&var), "gauss variance {var}");
    }

    #[test]
    fn glorot_bounds_and_determinism() {
        let m = glorot_init(10, 10, &mut Rng::new(3));
        let l = 0.3f64.sqrt();
        assert!(m.data().iter().all(|&x| (-l..=l).contains(&x)));
        assert_eq!(m, glorot_init(10, 10, &mut Rng::new(3)));
        assert_ne!(
            glorot_init(4, 4, &mut Rng::new(0)),
            glorot_init(4, 4, &mut Rng::new(1))
        );
    }

    #[test]
    #[should_panic(expected = "nonzero dimensions")]
    fn glorot_zero_dim_panics() {
        glorot_init(0, 3, &mut Rng::new(0));
    }

    #[test]
    fn shuffle_is_permutation() {
        let mut v: Vec<usize> = (0..50).collect();
        Rng::new(9).shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(v, sorted);
    }

    proptest! {
        #[test]
        fn matmul_is_associative(n in 1usize..=8, k in 1usize..=8, p in 1usize..=8, q in 1usize..=8, seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let a = random(n, k, &mut rng);
            let b = random(k, p, &mut rng);
            let c = random(p, q, &mut rng);
            let lhs = matmul(&matmul(&a, &b), &c);
            let rhs = matmul(&a, &matmul(&b, &c));
            for (x, y) in lhs.data().iter().zip(rhs.data()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn logsumexp_shift(v in prop::collection::vec(-50.0f64..50.0, 1..10), c in -100.0f64..100.0) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            prop_assert!((logsumexp(&shifted) - (logsumexp(&v) + c)).abs() < 1e-12);
        }

        #[test]
        fn sigmoid_symmetry(x in -30.0f64..30.0) {
            prop_assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
    }
}
