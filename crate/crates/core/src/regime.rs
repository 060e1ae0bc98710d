//! Markov regime inference: per-regime likelihoods, forward filtering,
//! backward sampling and the conjugate transition-matrix updates.
//!
//! All recursions run in log space with max-subtraction and renormalize the
//! filtered probabilities each period.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::log_abs_det;
use crate::model::Dataset;
use crate::priors::sample_dirichlet;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Reduced-form residuals `ε_t = y_t - A x_t`, laid out `T × N`.
pub fn reduced_form_residuals(dataset: &Dataset, a: &DMatrix<f64>) -> DMatrix<f64> {
    &dataset.y - &dataset.x * a.transpose()
}

/// `T × M` matrix of `log p(y_t | s_t = m, ·)`.
pub fn regime_loglik_matrix(
    dataset: &Dataset,
    a: &DMatrix<f64>,
    b: &[DMatrix<f64>],
    omega: &DMatrix<f64>,
    h: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let eps = reduced_form_residuals(dataset, a);
    loglik_from_residuals(&eps, b, omega, h)
}

pub fn loglik_from_residuals(
    eps: &DMatrix<f64>,
    b: &[DMatrix<f64>],
    omega: &DMatrix<f64>,
    h: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (t_len, n_vars) = eps.shape();
    let n_regimes = b.len();
    if omega.shape() != (n_vars, n_regimes) || h.shape() != (n_vars, t_len) {
        return Err(Error::dimension("ω must be N × M and h must be N × T"));
    }
    let mut out = DMatrix::zeros(t_len, n_regimes);
    for (m, bm) in b.iter().enumerate() {
        let (sign, log_det) = log_abs_det(bm);
        if sign == 0.0 || !log_det.is_finite() {
            return Err(Error::numerical(format!(
                "structural matrix of regime {} is singular",
                m + 1
            )));
        }
        // u = ε Bᵀ, T × N
        let u = eps * bm.transpose();
        for t in 0..t_len {
            let mut ll = log_det;
            for n in 0..n_vars {
                let log_var = omega[(n, m)] * h[(n, t)];
                let un = u[(t, n)];
                ll -= HALF_LN_2PI + 0.5 * log_var + 0.5 * un * un * (-log_var).exp();
            }
            out[(t, m)] = ll;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    /// `T × M` filtered probabilities `Pr(s_t = m | y_1..t)`.
    pub filtered: DMatrix<f64>,
    /// `T × M` one-step predicted probabilities `Pr(s_t = m | y_1..t-1)`.
    pub predicted: DMatrix<f64>,
    /// `log p(y_1..T)`.
    pub log_marginal: f64,
}

fn check_stochastic(p: &DMatrix<f64>, pi0: &[f64]) -> Result<()> {
    let m = p.nrows();
    if p.ncols() != m || pi0.len() != m {
        return Err(Error::dimension("P must be M × M and π0 of length M"));
    }
    for i in 0..m {
        let row = p.row(i);
        if row.iter().any(|v| *v < 0.0) || (row.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("row {} of P is not a probability vector", i + 1)));
        }
    }
    Ok(())
}

/// Hamilton filter in log-stabilized arithmetic; `π0` is the distribution
/// of the first regime.
pub fn forward_filter(loglik: &DMatrix<f64>, p: &DMatrix<f64>, pi0: &[f64]) -> Result<FilterOutput> {
    check_stochastic(p, pi0)?;
    let (t_len, m) = loglik.shape();
    if m != p.nrows() {
        return Err(Error::dimension("likelihood columns must match the number of regimes"));
    }
    let mut filtered = DMatrix::zeros(t_len, m);
    let mut predicted = DMatrix::zeros(t_len, m);
    let mut log_marginal = 0.0;
    let mut pred: Vec<f64> = pi0.to_vec();
    let mut post = vec![0.0; m];
    for t in 0..t_len {
        if t > 0 {
            for j in 0..m {
                pred[j] = (0..m).map(|i| post[i] * p[(i, j)]).sum();
            }
        }
        let max = (0..m)
            .filter(|&j| pred[j] > 0.0)
            .map(|j| loglik[(t, j)])
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::numerical(format!(
                "zero likelihood for every regime at t = {}",
                t + 1
            )));
        }
        let mut total = 0.0;
        for j in 0..m {
            post[j] = if pred[j] > 0.0 {
                pred[j] * (loglik[(t, j)] - max).exp()
            } else {
                0.0
            };
            total += post[j];
        }
        if !(total > 0.0) {
            return Err(Error::numerical(format!(
                "zero likelihood for every regime at t = {}",
                t + 1
            )));
        }
        log_marginal += max + total.ln();
        for j in 0..m {
            post[j] /= total;
            filtered[(t, j)] = post[j];
            predicted[(t, j)] = pred[j];
        }
    }
    Ok(FilterOutput {
        filtered,
        predicted,
        log_marginal,
    })
}

/// Smoothed probabilities `Pr(s_t = m | y_1..T)`.
pub fn smooth(filter: &FilterOutput, p: &DMatrix<f64>) -> DMatrix<f64> {
    let (t_len, m) = filter.filtered.shape();
    let mut out = filter.filtered.clone();
    for t in (0..t_len.saturating_sub(1)).rev() {
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..m {
                let pred = filter.predicted[(t + 1, j)];
                if pred > 0.0 {
                    acc += p[(i, j)] * out[(t + 1, j)] / pred;
                }
            }
            out[(t, i)] = filter.filtered[(t, i)] * acc;
        }
        let total: f64 = out.row(t).sum();
        if total > 0.0 {
            for i in 0..m {
                out[(t, i)] /= total;
            }
        }
    }
    out
}

fn draw_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            last = i;
            u -= w;
            if u <= 0.0 {
                return i;
            }
        }
    }
    last
}

/// Draws a regime path from `p(s_1..T | y, ·)` by backward sampling.
pub fn backward_sample<R: Rng + ?Sized>(filtered: &DMatrix<f64>, p: &DMatrix<f64>, rng: &mut R) -> Vec<usize> {
    let (t_len, m) = filtered.shape();
    let mut path = vec![0; t_len];
    if t_len == 0 {
        return path;
    }
    let last: Vec<f64> = filtered.row(t_len - 1).iter().copied().collect();
    path[t_len - 1] = draw_index(&last, rng);
    let mut w = vec![0.0; m];
    for t in (0..t_len - 1).rev() {
        let next = path[t + 1];
        for i in 0..m {
            w[i] = filtered[(t, i)] * p[(i, next)];
        }
        if w.iter().sum::<f64>() > 0.0 {
            path[t] = draw_index(&w, rng);
        } else {
            let row: Vec<f64> = filtered.row(t).iter().copied().collect();
            path[t] = draw_index(&row, rng);
        }
    }
    path
}

/// `counts[i][j]` = number of transitions from regime `i` to `j`.
pub fn transition_counts(path: &[usize], n_regimes: usize) -> DMatrix<f64> {
    let mut counts = DMatrix::zeros(n_regimes, n_regimes);
    for w in path.windows(2) {
        counts[(w[0], w[1])] += 1.0;
    }
    counts
}

/// Dirichlet parameters of each row of `P`: `1 + d_m e_m + counts`.
pub fn transition_posterior_parameters(path: &[usize], n_regimes: usize, persistence: f64) -> DMatrix<f64> {
    let counts = transition_counts(path, n_regimes);
    DMatrix::from_fn(n_regimes, n_regimes, |i, j| {
        1.0 + counts[(i, j)] + if i == j { persistence } else { 0.0 }
    })
}

pub fn draw_transition_matrix<R: Rng + ?Sized>(
    path: &[usize],
    n_regimes: usize,
    persistence: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let alpha = transition_posterior_parameters(path, n_regimes, persistence);
    let mut p = DMatrix::zeros(n_regimes, n_regimes);
    for i in 0..n_regimes {
        let row: Vec<f64> = alpha.row(i).iter().copied().collect();
        let draw = sample_dirichlet(&row, rng)?;
        for j in 0..n_regimes {
            p[(i, j)] = draw[j];
        }
    }
    Ok(p)
}

/// Draws `π0 ~ Dirichlet(1 + e_{s_1})`, or from the flat prior without data.
pub fn draw_initial_probs<R: Rng + ?Sized>(first: Option<usize>, n_regimes: usize, rng: &mut R) -> Result<Vec<f64>> {
    let mut alpha = vec![1.0; n_regimes];
    if let Some(s1) = first {
        alpha[s1] += 1.0;
    }
    sample_dirichlet(&alpha, rng)
}

/// Prior mean of the transition matrix: rows `(1 + d e_m) / (M + d)`.
pub fn prior_mean_transition(n_regimes: usize, persistence: f64) -> DMatrix<f64> {
    let total = n_regimes as f64 + persistence;
    DMatrix::from_fn(n_regimes, n_regimes, |i, j| {
        (1.0 + if i == j { persistence } else { 0.0 }) / total
    })
}

/// Stationary distribution `π P = π`, `Σ π = 1`.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let m = p.nrows();
    check_stochastic(p, &vec![1.0 / m as f64; m])?;
    let a = p.transpose() - DMatrix::identity(m, m);
    let svd = a.clone().svd(false, false);
    let unit = svd.singular_values.iter().filter(|s| **s < 1e-10).count();
    if unit > 1 {
        return Err(Error::domain(
            "transition matrix is reducible: the unit eigenvalue is repeated",
        ));
    }
    let mut system = a;
    for j in 0..m {
        system[(m - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(m);
    rhs[m - 1] = 1.0;
    system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numerical("stationary system is singular"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uninformative_data_gives_predicted_marginals() {
        let p = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.3, 0.7]);
        let pi0 = [0.2, 0.8];
        let ll = DMatrix::zeros(5, 2);
        let out = forward_filter(&ll, &p, &pi0).unwrap();
        let mut marg = DVector::from_row_slice(&pi0).transpose();
        for t in 0..5 {
            for j in 0..2 {
                assert!((out.filtered[(t, j)] - marg[j]).abs() < 1e-14);
            }
            marg = &marg * &p;
        }
        assert!(out.log_marginal.abs() < 1e-14);
    }

    #[test]
    fn absorbing_chain() {
        let p = DMatrix::identity(2, 2);
        let ll = DMatrix::from_fn(6, 2, |t, j| (t as f64 - 2.5) * (j as f64 + 1.0));
        let out = forward_filter(&ll, &p, &[1.0, 0.0]).unwrap();
        for t in 0..6 {
            assert_eq!(out.filtered[(t, 0)], 1.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let random = DMatrix::from_fn(6, 2, |t, _| if t % 2 == 0 { 0.3 } else { 0.7 });
        let random = DMatrix::from_fn(6, 2, |t, j| if j == 0 { random[(t, 0)] } else { 1.0 - random[(t, 0)] });
        for _ in 0..50 {
            let path = backward_sample(&random, &p, &mut rng);
            assert!(path.iter().all(|&s| s == path[0]));
        }
    }

    #[test]
    fn degenerate_filter_gives_deterministic_path() {
        let filtered = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        let p = DMatrix::from_element(2, 2, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(backward_sample(&filtered, &p, &mut rng), vec![0, 1, 1, 0]);
    }

    #[test]
    fn zero_likelihood_row_is_an_error() {
        let p = DMatrix::identity(2, 2);
        let ll = DMatrix::from_element(2, 2, f64::NEG_INFINITY);
        assert!(forward_filter(&ll, &p, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn transition_posterior_example() {
        // five 1→1 and one 1→2 transitions
        let path = [0, 0, 0, 0, 0, 0, 1];
        let alpha = transition_posterior_parameters(&path, 2, 11.0);
        assert_eq!(alpha.row(0).iter().copied().collect::<Vec<_>>(), vec![17.0, 2.0]);
        let prior = transition_posterior_parameters(&[], 2, 11.0);
        assert_eq!(prior, DMatrix::from_row_slice(2, 2, &[12.0, 1.0, 1.0, 12.0]));
        let mean = prior_mean_transition(2, 11.0);
        assert!((mean[(0, 0)] - 12.0 / 13.0).abs() < 1e-15);
        // mean-based expected duration 1 / (1 - E[P11]) = 13
        assert!((1.0 / (1.0 - mean[(0, 0)]) - 13.0).abs() < 1e-12);
    }

    #[test]
    fn transition_draws_are_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = draw_transition_matrix(&[0, 1, 1, 2, 0], 3, 5.0, &mut rng).unwrap();
        for i in 0..3 {
            assert!((p.row(i).sum() - 1.0).abs() < 1e-12);
        }
        let pi0 = draw_initial_probs(Some(1), 3, &mut rng).unwrap();
        assert!((pi0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stationary_two_state() {
        let p = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]);
        let pi = stationary_distribution(&p).unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((pi[1] - 1.0 / 3.0).abs() < 1e-14);
        assert!(stationary_distribution(&DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn stationary_fixed_point_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in 2..6 {
            for _ in 0..20 {
                let p = draw_transition_matrix(&[], m, 2.0, &mut rng).unwrap();
                let pi = stationary_distribution(&p).unwrap();
                let next = pi.transpose() * &p;
                for j in 0..m {
                    assert!((next[j] - pi[j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn standard_normal_likelihood() {
        let y = DMatrix::from_row_slice(3, 2, &[0.5, -1.0, 2.0, 0.0, -0.3, 0.7]);
        let ds = Dataset::from_series_unchecked(
            vec!["a".into(), "b".into()],
            &DMatrix::from_fn(4, 2, |t, j| if t == 0 { 0.0 } else { y[(t - 1, j)] }),
            &DMatrix::from_element(4, 1, 1.0),
            1,
        )
        .unwrap();
        let a = DMatrix::zeros(2, 3);
        let b = vec![DMatrix::identity(2, 2)];
        let ll = regime_loglik_matrix(&ds, &a, &b, &DMatrix::zeros(2, 1), &DMatrix::zeros(2, 3)).unwrap();
        for t in 0..3 {
            let direct: f64 = (0..2).map(|n| -HALF_LN_2PI - 0.5 * y[(t, n)].powi(2)).sum();
            assert!((ll[(t, 0)] - direct).abs() < 1e-14);
        }
        let b2 = vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)];
        let ll2 = regime_loglik_matrix(&ds, &a, &b2, &DMatrix::zeros(2, 2), &DMatrix::zeros(2, 3)).unwrap();
        assert_eq!(ll2.column(0), ll2.column(1));
        let singular = vec![DMatrix::zeros(2, 2)];
        assert!(regime_loglik_matrix(&ds, &a, &singular, &DMatrix::zeros(2, 1), &DMatrix::zeros(2, 3)).is_err());
    }
}
