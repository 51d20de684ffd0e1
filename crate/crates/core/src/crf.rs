//! Linear-chain CRF: path scoring, the forward algorithm in log space,
//! forward-backward gradients and Viterbi decoding.
//!
//! Path scores are always accumulated in the same order
//! (`start + e_0`, then `(s + trans) + e_t`, then `+ end`) so that the
//! Viterbi score is bit-identical to [`score`] of the decoded path.

#![allow(clippy::needless_range_loop)]

use crate::linalg::{logsumexp, Matrix, Rng};
use crate::nn::{ParamTensor, Parameters};

#[derive(Clone, Debug, PartialEq)]
pub struct CrfParams {
    /// `trans[i][j]`: score of moving from tag `i` to tag `j`.
    pub trans: ParamTensor,
    pub start: ParamTensor,
    pub end: ParamTensor,
}

impl CrfParams {
    pub fn zeros(tags: usize) -> Self {
        Self {
            trans: ParamTensor::zeros("crf.trans", tags, tags),
            start: ParamTensor::zeros("crf.start", tags, 1),
            end: ParamTensor::zeros("crf.end", tags, 1),
        }
    }

    /// Small gaussian initialization.
    pub fn random(tags: usize, scale: f64, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(tags);
        for t in p.params_mut() {
            t.value
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = scale * rng.gauss());
        }
        p
    }

    pub fn tag_count(&self) -> usize {
        self.trans.value.rows()
    }

    fn check_emissions(&self, emissions: &Matrix) {
        assert!(emissions.rows() >= 1, "CRF over an empty sequence");
        assert_eq!(
            emissions.cols(),
            self.tag_count(),
            "emission width {} does not match CRF tag count {}",
            emissions.cols(),
            self.tag_count()
        );
    }
}

impl Parameters for CrfParams {
    fn params(&self) -> Vec<&ParamTensor> {
        vec![&self.trans, &self.start, &self.end]
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![&mut self.trans, &mut self.start, &mut self.end]
    }
}

/// Unnormalized score of one tag path.
pub fn score(emissions: &Matrix, tags: &[usize], p: &CrfParams) -> f64 {
    p.check_emissions(emissions);
    assert_eq!(
        tags.len(),
        emissions.rows(),
        "tag path length {} does not match sequence length {}",
        tags.len(),
        emissions.rows()
    );
    let k = p.tag_count();
    assert!(
        tags.iter().all(|&t| t < k),
        "tag id out of range for {k} tags"
    );
    let trans = &p.trans.value;
    let mut s = p.start.value.data()[tags[0]] + emissions.get(0, tags[0]);
    for t in 1..tags.len() {
        s = s + trans.get(tags[t - 1], tags[t]) + emissions.get(t, tags[t]);
    }
    s + p.end.value.data()[tags[tags.len() - 1]]
}

/// Result of the forward and backward recursions.
#[derive(Clone, Debug)]
pub struct Partition {
    pub log_z: f64,
    /// `alphas[t][j]`: log-sum of all prefixes ending in tag `j` at `t`,
    /// including `e_t`.
    pub alphas: Matrix,
    /// `betas[t][i]`: log-sum of all suffixes after `t` given tag `i` at `t`,
    /// including the end score.
    pub betas: Matrix,
}

pub fn log_partition(emissions: &Matrix, p: &CrfParams) -> Partition {
    p.check_emissions(emissions);
    let n = emissions.rows();
    let k = p.tag_count();
    let trans = &p.trans.value;
    let start = p.start.value.data();
    let end = p.end.value.data();

    let mut alphas = Matrix::zeros(n, k);
    for j in 0..k {
        alphas.set(0, j, start[j] + emissions.get(0, j));
    }
    let mut buf = vec![0.0; k];
    for t in 1..n {
        for j in 0..k {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = alphas.get(t - 1, i) + trans.get(i, j);
            }
            alphas.set(t, j, logsumexp(&buf) + emissions.get(t, j));
        }
    }

    let mut betas = Matrix::zeros(n, k);
    betas.row_mut(n - 1).copy_from_slice(end);
    for t in (0..n - 1).rev() {
        for i in 0..k {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = trans.get(i, j) + emissions.get(t + 1, j) + betas.get(t + 1, j);
            }
            betas.set(t, i, logsumexp(&buf));
        }
    }

    for (j, b) in buf.iter_mut().enumerate() {
        *b = alphas.get(n - 1, j) + end[j];
    }
    Partition {
        log_z: logsumexp(&buf),
        alphas,
        betas,
    }
}

/// Negative log-likelihood of `gold` and its gradients.
///
/// Returns `(nll, d_emissions)`; both the returned emission gradient and the
/// gradients accumulated into `p` are multiplied by `weight`. The returned
/// `nll` is not.
pub fn nll_and_grads(
    emissions: &Matrix,
    gold: &[usize],
    p: &mut CrfParams,
    weight: f64,
) -> (f64, Matrix) {
    let gold_score = score(emissions, gold, p);
    let Partition {
        log_z,
        alphas,
        betas,
    } = log_partition(emissions, p);
    let n = emissions.rows();
    let k = p.tag_count();

    let mut d_em = Matrix::zeros(n, k);
    for t in 0..n {
        for j in 0..k {
            let marginal = (alphas.get(t, j) + betas.get(t, j) - log_z).exp();
            d_em.set(t, j, weight * marginal);
        }
        let g = d_em.get(t, gold[t]);
        d_em.set(t, gold[t], g - weight);
    }

    {
        let start_g = p.start.grad.data_mut();
        for j in 0..k {
            start_g[j] += d_em.get(0, j);
        }
    }
    {
        let end_g = p.end.grad.data_mut();
        for j in 0..k {
            end_g[j] += d_em.get(n - 1, j);
        }
    }

    let trans_v = p.trans.value.clone();
    let trans_g = &mut p.trans.grad;
    for t in 1..n {
        for i in 0..k {
            let a = alphas.get(t - 1, i);
            for j in 0..k {
                let pair =
                    (a + trans_v.get(i, j) + emissions.get(t, j) + betas.get(t, j) - log_z).exp();
                let g = trans_g.get(i, j);
                trans_g.set(i, j, g + weight * pair);
            }
        }
        let (a, b) = (gold[t - 1], gold[t]);
        let g = trans_g.get(a, b);
        trans_g.set(a, b, g - weight);
    }

    (log_z - gold_score, d_em)
}

/// Highest-scoring path and its score. At every argmax the smallest tag id
/// wins among equal scores.
pub fn viterbi(emissions: &Matrix, p: &CrfParams) -> (Vec<usize>, f64) {
    p.check_emissions(emissions);
    let n = emissions.rows();
    let k = p.tag_count();
    let trans = &p.trans.value;
    let start = p.start.value.data();
    let end = p.end.value.data();

    let mut delta: Vec<f64> = (0..k).map(|j| start[j] + emissions.get(0, j)).collect();
    let mut back = vec![vec![0usize; k]; n];
    let mut next = vec![0.0; k];
    for t in 1..n {
        for j in 0..k {
            let mut best_i = 0;
            let mut best = delta[0] + trans.get(0, j);
            for (i, &d) in delta.iter().enumerate().skip(1) {
                let cand = d + trans.get(i, j);
                if cand > best {
                    best = cand;
                    best_i = i;
                }
            }
            back[t][j] = best_i;
            next[j] = best + emissions.get(t, j);
        }
        std::mem::swap(&mut delta, &mut next);
    }

    let mut last = 0;
    let mut best = delta[0] + end[0];
    for j in 1..k {
        let cand = delta[j] + end[j];
        if cand > best {
            best = cand;
            last = j;
        }
    }
    let mut path = vec![0; n];
    path[n - 1] = last;
    for t in (1..n).rev() {
        path[t - 1] = back[t][path[t]];
    }
    (path, best)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Every tag path of length `n` over `k` tags, in lexicographic order.
    fn all_paths(n: usize, k: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (0..k).map(move |t| {
                        let mut q = p.clone();
                        q.push(t);
                        q
                    })
                })
                .collect();
        }
        out
    }

    fn random_instance(seed: u64, n: usize, k: usize) -> (Matrix, CrfParams) {
        let mut rng = Rng::new(seed);
        let em = Matrix::from_vec(n, k, (0..n * k).map(|_| rng.gauss()).collect());
        (em, CrfParams::random(k, 1.0, &mut rng))
    }

    #[test]
    fn score_examples() {
        let p = CrfParams::zeros(3);
        let em = Matrix::from_rows(&[&[1.0, 3.0, 2.0]]);
        assert_eq!(score(&em, &[2], &p), 2.0);
        assert_eq!(score(&Matrix::zeros(3, 3), &[0, 2, 1], &p), 0.0);

        let mut p = CrfParams::zeros(2);
        p.trans.value = Matrix::from_rows(&[&[0.5, 0.0], &[0.0, 0.5]]);
        let em = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(score(&em, &[0, 1], &p), 2.0);
    }

    #[test]
    #[should_panic(expected = "tag path length")]
    fn score_length_mismatch() {
        score(&Matrix::zeros(2, 2), &[0], &CrfParams::zeros(2));
    }

    #[test]
    fn partition_examples() {
        let p = CrfParams::zeros(3);
        let z = log_partition(&Matrix::from_rows(&[&[1.0, 3.0, 2.0]]), &p).log_z;
        // 3 + ln(1 + e^-2 + e^-1), by enumerating the three paths
        assert!((z - 3.4076059644443806).abs() < 1e-12, "{z}");
        let z = log_partition(&Matrix::zeros(2, 2), &CrfParams::zeros(2)).log_z;
        assert!((z - 4f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn partition_matches_enumeration_and_normalizes() {
        for seed in 0..40 {
            let n = 1 + (seed as usize % 4);
            let k = 2 + (seed as usize % 2);
            let (em, p) = random_instance(seed, n, k);
            let scores: Vec<f64> = all_paths(n, k).iter().map(|y| score(&em, y, &p)).collect();
            let brute = logsumexp(&scores);
            let z = log_partition(&em, &p).log_z;
            assert!((z - brute).abs() < 1e-8);
            let total: f64 = scores.iter().map(|s| (s - z).exp()).sum();
            assert!((total - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn emission_rows_of_nll_gradient_sum_to_zero() {
        let (em, mut p) = random_instance(3, 4, 3);
        let (nll, d) = nll_and_grads(&em, &[0, 2, 2, 1], &mut p, 1.0);
        assert!(nll >= -1e-9);
        for t in 0..4 {
            assert!(d.row(t).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn overwhelming_gold_has_vanishing_nll() {
        let gold = [1, 0, 2];
        let mut em = Matrix::zeros(3, 3);
        for (t, &g) in gold.iter().enumerate() {
            em.set(t, g, 50.0);
        }
        let (nll, _) = nll_and_grads(&em, &gold, &mut CrfParams::zeros(3), 1.0);
        assert!(nll.abs() < 1e-10, "{nll}");
    }

    #[test]
    fn nll_gradients_match_finite_differences() {
        struct Inst {
            em: ParamTensor,
            crf: CrfParams,
        }
        impl Parameters for Inst {
            fn params(&self) -> Vec<&ParamTensor> {
                let mut v = vec![&self.em];
                v.extend(self.crf.params());
                v
            }
            fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
                let mut v = vec![&mut self.em];
                v.extend(self.crf.params_mut());
                v
            }
        }
        for seed in 0..5 {
            let (em, crf) = random_instance(100 + seed, 4, 3);
            let mut inst = Inst {
                em: ParamTensor::new("em", em),
                crf,
            };
            let gold = [2, 0, 0, 1];
            let report = crate::nn::grad_check(
                &mut inst,
                |m| {
                    let (nll, d) = nll_and_grads(&m.em.value.clone(), &gold, &mut m.crf, 0.7);
                    m.em.grad.add_assign(&d);
                    0.7 * nll
                },
                1e-5,
                25,
                &mut Rng::new(seed),
            )
            .unwrap();
            assert!(report.max_rel < 1e-6, "{report:?}");
        }
    }

    #[test]
    fn viterbi_examples() {
        let (path, s) = viterbi(
            &Matrix::from_rows(&[&[1.0, 3.0, 2.0]]),
            &CrfParams::zeros(3),
        );
        assert_eq!(path, vec![1]);
        assert_eq!(s, 3.0);

        let em = Matrix::from_rows(&[&[0.1, 0.5, 0.2], &[0.9, -1.0, 0.0], &[0.0, 0.0, 0.3]]);
        let (path, _) = viterbi(&em, &CrfParams::zeros(3));
        assert_eq!(path, vec![1, 0, 2]);

        // all ties resolve to tag 0
        let (path, _) = viterbi(&Matrix::zeros(4, 3), &CrfParams::zeros(3));
        assert_eq!(path, vec![0; 4]);
    }

    #[test]
    fn viterbi_matches_brute_force() {
        for seed in 0..40 {
            let n = 1 + (seed as usize % 4);
            let k = 2 + (seed as usize % 2);
            let (em, p) = random_instance(seed, n, k);
            let (path, s) = viterbi(&em, &p);
            assert_eq!(s, score(&em, &path, &p));
            for y in all_paths(n, k) {
                assert!(s >= score(&em, &y, &p));
            }
        }
    }

    #[test]
    fn per_timestep_shift_moves_log_z_only() {
        let (em, p) = random_instance(9, 4, 3);
        let mut shifted = em.clone();
        let c = 2.5;
        shifted.row_mut(2).iter_mut().for_each(|v| *v += c);
        let z0 = log_partition(&em, &p).log_z;
        let z1 = log_partition(&shifted, &p).log_z;
        assert!((z1 - (z0 + c)).abs() < 1e-12);
        assert_eq!(viterbi(&em, &p).0, viterbi(&shifted, &p).0);
    }
}
