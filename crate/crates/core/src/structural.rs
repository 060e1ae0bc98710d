//! Pattern indicators and free coefficients of structural rows.
//!
//! For row `n` of `B_m` under pattern `k` the row is `b V_k`, and with all
//! other rows fixed `det B_m = bᵀ w_k` where `w_k = V_k c` and `c` is the
//! cofactor vector of row `n`. The conditional kernel of `b` is
//!
//! ```text
//! |bᵀ w|^{T_m} exp(-½ bᵀ S b),   S = γ⁻¹ I + V (Σ_t ε_t ε_tᵀ / σ²_{n,t}) Vᵀ
//! ```
//!
//! whose integral is available in closed form. The pattern indicator is drawn
//! with `b` integrated out and `b` is then drawn exactly given the pattern.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, log_det_from_cholesky, solve_lower, solve_upper_transposed};
use crate::model::Pattern;
use crate::priors::sample_gamma;

const LN_2: f64 = std::f64::consts::LN_2;
const LN_PI: f64 = 1.144_729_885_849_400_2;

/// Cofactor vector `c` of row `n`: `det` of `B` with row `n` replaced by `x`
/// equals `xᵀ c` for every `x`.
pub fn full_cofactor_vector(b: &DMatrix<f64>, n: usize) -> Vec<f64> {
    let dim = b.nrows();
    let mut work = b.clone();
    (0..dim)
        .map(|j| {
            for i in 0..dim {
                work[(n, i)] = if i == j { 1.0 } else { 0.0 };
            }
            work.clone().lu().determinant()
        })
        .collect()
}

/// `w = V c` for the free columns of `pattern`.
pub fn cofactor_vector(b: &DMatrix<f64>, n: usize, pattern: &Pattern) -> Vec<f64> {
    let c = full_cofactor_vector(b, n);
    pattern.free_columns().iter().map(|&j| c[j]).collect()
}

/// Weighted residual moment `Σ_t ε_t ε_tᵀ / σ²_t` over the given periods.
pub fn weighted_moment(residuals: &[&[f64]], variances: &[f64]) -> Result<DMatrix<f64>> {
    if residuals.len() != variances.len() {
        return Err(Error::dimension("one variance per residual vector is required"));
    }
    let dim = residuals.first().map_or(0, |r| r.len());
    let mut g = DMatrix::zeros(dim, dim);
    for (e, &v) in residuals.iter().zip(variances) {
        if e.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("non-finite residual"));
        }
        if !(v > 0.0) {
            return Err(Error::domain("conditional variances must be positive"));
        }
        for i in 0..dim {
            let wi = e[i] / v;
            for j in 0..=i {
                g[(i, j)] += wi * e[j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            g[(j, i)] = g[(i, j)];
        }
    }
    Ok(g)
}

/// `S = γ⁻¹ I + V G Vᵀ` from a precomputed weighted moment `G`.
pub fn precision_from_moment(moment: &DMatrix<f64>, pattern: &Pattern, gamma: f64) -> DMatrix<f64> {
    let free = pattern.free_columns();
    let r = free.len();
    DMatrix::from_fn(r, r, |i, j| {
        moment[(free[i], free[j])] + if i == j { 1.0 / gamma } else { 0.0 }
    })
}

/// Posterior precision of the free coefficients of one row from the regime's
/// reduced-form residuals and the row's conditional variances.
pub fn row_posterior_precision(
    residuals: &[&[f64]],
    variances: &[f64],
    pattern: &Pattern,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    if !(gamma > 0.0) {
        return Err(Error::domain("prior variance must be positive"));
    }
    if residuals.is_empty() {
        let r = pattern.rank();
        return Ok(DMatrix::identity(r, r) / gamma);
    }
    let g = weighted_moment(residuals, variances)?;
    Ok(precision_from_moment(&g, pattern, gamma))
}

/// Log of `∫ N(b; 0, γ I_r) |bᵀ w|^{T_m} exp(-½ bᵀ (S - γ⁻¹ I) b) db`, the
/// pattern's marginal likelihood contribution.
pub fn pattern_log_marginal(s: &DMatrix<f64>, w: &[f64], gamma: f64, t_m: usize) -> Result<f64> {
    let r = s.nrows();
    if w.len() != r {
        return Err(Error::dimension("w must match the precision dimension"));
    }
    let chol = cholesky_with_jitter(s)?;
    let log_det = log_det_from_cholesky(&chol);
    let t = t_m as f64;
    let mut value = -0.5 * r as f64 * gamma.ln() - 0.5 * log_det;
    if t_m > 0 {
        let w_hat = solve_lower(&chol, &DVector::from_column_slice(w));
        let tau2 = w_hat.norm_squared();
        if tau2 == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        value += 0.5 * t * tau2.ln() + 0.5 * t * LN_2 + ln_gamma(0.5 * (t + 1.0)) - 0.5 * LN_PI;
    }
    Ok(value)
}

/// Categorical draw with probabilities `softmax(log_weights)`.
pub fn draw_tvi_indicator<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Result<usize> {
    if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::domain("pattern log weights must be finite or -inf"));
    }
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::domain("every pattern has zero posterior weight"));
    }
    let probs: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (k, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            last = k;
            u -= p;
            if u <= 0.0 {
                return Ok(k);
            }
        }
    }
    Ok(last)
}

/// Normalized pattern probabilities from log marginals.
pub fn pattern_probabilities(log_weights: &[f64]) -> Vec<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let probs: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    probs.into_iter().map(|p| p / total).collect()
}

/// Exact draw from the kernel `|bᵀ w|^{T_m} exp(-½ bᵀ S b)`.
///
/// With `S = L Lᵀ` and `z = Lᵀ b` the kernel is `|zᵀ ŵ|^{T_m} exp(-½ |z|²)`
/// for `ŵ = L⁻¹ w`. A Householder reflection maps `ŵ / |ŵ|` to the first
/// axis, along which `z₁² ~ Gamma((T_m + 1) / 2, scale 2)` with a random
/// sign; the remaining coordinates are standard normal.
pub fn draw_row_coefficients<R: Rng + ?Sized>(
    s: &DMatrix<f64>,
    w: &[f64],
    t_m: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let r = s.nrows();
    if w.len() != r {
        return Err(Error::dimension("w must match the precision dimension"));
    }
    let chol = cholesky_with_jitter(s)?;
    let mut z = DVector::from_fn(r, |_, _| rng.sample::<f64, _>(StandardNormal));
    if t_m > 0 {
        let w_hat = solve_lower(&chol, &DVector::from_column_slice(w));
        let tau = w_hat.norm();
        if !(tau > 0.0) {
            return Err(Error::numerical(
                "cofactor vector vanishes: the determinant kernel is degenerate",
            ));
        }
        let radial = sample_gamma(0.5 * (t_m as f64 + 1.0), 2.0, rng)?.sqrt();
        z[0] = if rng.random::<bool>() { radial } else { -radial };
        // reflection H with H e₁ = ŵ / τ
        let mut u = -(&w_hat / tau);
        u[0] += 1.0;
        let uu = u.norm_squared();
        if uu > 1e-30 {
            let proj = 2.0 * u.dot(&z) / uu;
            z.axpy(-proj, &u, 1.0);
        }
    }
    let b = solve_upper_transposed(&chol, &z);
    Ok(b.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_cofactor() {
        let b = DMatrix::<f64>::identity(2, 2);
        let p = Pattern::unrestricted("u", 2).unwrap();
        assert_eq!(cofactor_vector(&b, 0, &p), vec![1.0, 0.0]);
    }

    #[test]
    fn determinant_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let b = DMatrix::from_fn(4, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
            let det = b.clone().lu().determinant();
            for n in 0..4 {
                let c = full_cofactor_vector(&b, n);
                let expanded: f64 = (0..4).map(|j| b[(n, j)] * c[j]).sum();
                assert!((expanded - det).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn singular_remaining_rows_give_zero() {
        let b = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 0.5, 0.1, 2.0, 0.5, 0.1, 2.0]);
        let c = full_cofactor_vector(&b, 0);
        assert!(c.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn precision_examples() {
        let p = Pattern::unrestricted("u", 1).unwrap();
        let s = row_posterior_precision(&[], &[], &p, 2.0).unwrap();
        assert_eq!(s[(0, 0)], 0.5);
        let e = [2.0];
        let s = row_posterior_precision(&[&e], &[1.0], &p, 1.0).unwrap();
        assert_eq!(s[(0, 0)], 5.0);
        let bad = [f64::NAN];
        assert!(row_posterior_precision(&[&bad], &[1.0], &p, 1.0).is_err());
    }

    #[test]
    fn no_data_gives_flat_pattern_weights() {
        let gamma = 3.7;
        let lm: Vec<f64> = (1..=3)
            .map(|r| {
                let s = DMatrix::identity(r, r) / gamma;
                pattern_log_marginal(&s, &vec![0.0; r], gamma, 0).unwrap()
            })
            .collect();
        for v in lm {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn identical_patterns_get_equal_weight() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let a = pattern_log_marginal(&s, &[0.4, -1.0], 1.5, 7).unwrap();
        let probs = pattern_probabilities(&[a, a]);
        assert_eq!(probs, vec![0.5, 0.5]);
    }

    #[test]
    fn indicator_draw_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let k = draw_tvi_indicator(
                &[0.0, f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
                &mut rng,
            );
            assert_eq!(k.unwrap(), 0);
        }
        assert!(draw_tvi_indicator(&[f64::NEG_INFINITY; 2], &mut rng).is_err());
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[draw_tvi_indicator(&[1.0; 4], &mut rng).unwrap()] += 1;
        }
        assert!(counts.iter().all(|&c| (c as f64 / n as f64 - 0.25).abs() < 0.01));
        let mut first = 0;
        for _ in 0..n {
            first += usize::from(draw_tvi_indicator(&[2f64.ln(), 0.0], &mut rng).unwrap() == 0);
        }
        assert!((first as f64 / n as f64 - 2.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn prior_draw_without_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = DMatrix::identity(2, 2);
        let n = 100_000;
        let mut m = [0.0; 2];
        let mut v = [0.0; 2];
        for _ in 0..n {
            let b = draw_row_coefficients(&s, &[0.0, 0.0], 0, &mut rng).unwrap();
            for i in 0..2 {
                m[i] += b[i];
                v[i] += b[i] * b[i];
            }
        }
        for i in 0..2 {
            assert!((m[i] / n as f64).abs() < 0.01);
            assert!((v[i] / n as f64 - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn scalar_kernel_is_chi_square_three() {
        // b² ~ χ²₃: mean 3, variance 6
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = DMatrix::identity(1, 1);
        let n = 200_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| draw_row_coefficients(&s, &[1.0], 2, &mut rng).unwrap()[0].powi(2))
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 3.0).abs() < 3.0 * (6.0 / n as f64).sqrt());
        assert!((var - 6.0).abs() < 0.15);
    }

    #[test]
    fn zero_cofactor_with_data_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = DMatrix::identity(2, 2);
        assert!(draw_row_coefficients(&s, &[0.0, 0.0], 3, &mut rng).is_err());
        assert_eq!(
            pattern_log_marginal(&s, &[0.0, 0.0], 1.0, 3).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn draws_are_sign_symmetric_and_respect_the_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = DMatrix::from_row_slice(2, 2, &[3.0, -0.8, -0.8, 1.5]);
        let w = [0.7, 1.9];
        let n = 100_000;
        let mut mean = [0.0; 2];
        for _ in 0..n {
            let b = draw_row_coefficients(&s, &w, 5, &mut rng).unwrap();
            assert!((b[0] * w[0] + b[1] * w[1]).abs() > 0.0);
            mean[0] += b[0];
            mean[1] += b[1];
        }
        assert!((mean[0] / n as f64).abs() < 0.02);
        assert!((mean[1] / n as f64).abs() < 0.02);
    }
}
