//! Autoregressive block: Minnesota-style prior moments and the joint
//! Gaussian full conditional of `A`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, solve_upper_transposed};
use crate::model::Dataset;
use crate::priors::CoefficientSummary;

/// Prior of row `n` of `A`: `N(mean[n], γ_A[n] · diag(scale))`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinnesotaPrior {
    /// `N × (N p + d)` prior means.
    pub mean: DMatrix<f64>,
    /// Diagonal of `Ω_A`, length `N p + d`.
    pub scale: Vec<f64>,
}

/// Own first lag centered at one, `Ω_A = (l⁻² per lag, 100 per deterministic term)`.
pub fn minnesota_moments(n_vars: usize, lags: usize, d_dim: usize) -> MinnesotaPrior {
    minnesota_moments_centered(n_vars, lags, d_dim, 1.0)
}

pub fn minnesota_moments_centered(n_vars: usize, lags: usize, d_dim: usize, own_lag_mean: f64) -> MinnesotaPrior {
    let k = n_vars * lags + d_dim;
    let mut mean = DMatrix::zeros(n_vars, k);
    for n in 0..n_vars {
        mean[(n, n)] = own_lag_mean;
    }
    let mut scale = Vec::with_capacity(k);
    for lag in 1..=lags {
        scale.extend(std::iter::repeat_n(1.0 / (lag * lag) as f64, n_vars));
    }
    scale.extend(std::iter::repeat_n(100.0, d_dim));
    MinnesotaPrior { mean, scale }
}

impl MinnesotaPrior {
    /// Standardized squared deviations of each row of `A` from the prior
    /// mean, the sufficient statistics of the `γ_A` update.
    pub fn shrinkage_summaries(&self, a: &DMatrix<f64>) -> Vec<CoefficientSummary> {
        (0..a.nrows())
            .map(|n| {
                let sum_squares = (0..a.ncols())
                    .map(|j| (a[(n, j)] - self.mean[(n, j)]).powi(2) / self.scale[j])
                    .sum();
                CoefficientSummary {
                    sum_squares,
                    count: a.ncols(),
                }
            })
            .collect()
    }

    /// Draws `A` from the prior.
    pub fn sample<R: Rng + ?Sized>(&self, gamma: &[f64], rng: &mut R) -> DMatrix<f64> {
        let (n_vars, k) = self.mean.shape();
        DMatrix::from_fn(n_vars, k, |n, j| {
            let z: f64 = rng.sample(StandardNormal);
            self.mean[(n, j)] + (gamma[n] * self.scale[j]).sqrt() * z
        })
    }
}

/// Precision and linear term of the Gaussian full conditional of
/// `vec(A)` stacked row by row.
pub fn autoregressive_posterior(
    dataset: &Dataset,
    b: &[DMatrix<f64>],
    s: &[usize],
    variances: &DMatrix<f64>,
    prior: &MinnesotaPrior,
    gamma: &[f64],
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n_vars = dataset.n_vars();
    let k = dataset.n_regressors();
    let t_len = dataset.len();
    let n_regimes = b.len();
    if prior.mean.shape() != (n_vars, k) || gamma.len() != n_vars {
        return Err(Error::dimension("prior moments do not match the dataset"));
    }
    if s.len() != t_len || variances.shape() != (n_vars, t_len) {
        return Err(Error::dimension("regime path or variances do not match the sample"));
    }
    let dim = n_vars * k;
    let mut precision = DMatrix::zeros(dim, dim);
    let mut linear = DVector::zeros(dim);
    let mut w = vec![DMatrix::<f64>::zeros(k, k); n_regimes * n_vars];
    let mut z = vec![DVector::<f64>::zeros(k); n_regimes * n_vars];
    for t in 0..t_len {
        let m = s[t];
        let x = dataset.x.row(t).transpose();
        let y = dataset.y.row(t).transpose();
        let bm = &b[m];
        for n in 0..n_vars {
            let inv = 1.0 / variances[(n, t)];
            let slot = m * n_vars + n;
            w[slot].ger(inv, &x, &x, 1.0);
            let by = bm.row(n).dot(&y.transpose());
            z[slot].axpy(inv * by, &x, 1.0);
        }
    }
    for m in 0..n_regimes {
        let bm = &b[m];
        for n in 0..n_vars {
            let slot = m * n_vars + n;
            for i in 0..n_vars {
                let bi = bm[(n, i)];
                if bi == 0.0 {
                    continue;
                }
                linear.rows_mut(i * k, k).axpy(bi, &z[slot], 1.0);
                for j in 0..n_vars {
                    let bj = bm[(n, j)];
                    if bj == 0.0 {
                        continue;
                    }
                    let mut block = precision.view_mut((i * k, j * k), (k, k));
                    block += &w[slot] * (bi * bj);
                }
            }
        }
    }
    for n in 0..n_vars {
        for j in 0..k {
            let prior_precision = 1.0 / (gamma[n] * prior.scale[j]);
            let idx = n * k + j;
            precision[(idx, idx)] += prior_precision;
            linear[idx] += prior_precision * prior.mean[(n, j)];
        }
    }
    Ok((precision, linear))
}

/// Exact draw of `A` from its Gaussian full conditional.
pub fn draw_autoregressive<R: Rng + ?Sized>(
    dataset: &Dataset,
    b: &[DMatrix<f64>],
    s: &[usize],
    variances: &DMatrix<f64>,
    prior: &MinnesotaPrior,
    gamma: &[f64],
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let (precision, linear) = autoregressive_posterior(dataset, b, s, variances, prior, gamma)?;
    let chol = cholesky_with_jitter(&precision)?;
    let mean = chol.solve(&linear);
    let noise = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let draw = mean + solve_upper_transposed(&chol, &noise);
    let k = dataset.n_regressors();
    Ok(DMatrix::from_row_slice(dataset.n_vars(), k, draw.as_slice()))
}

/// Posterior mean of `A` given everything else.
pub fn autoregressive_posterior_mean(
    dataset: &Dataset,
    b: &[DMatrix<f64>],
    s: &[usize],
    variances: &DMatrix<f64>,
    prior: &MinnesotaPrior,
    gamma: &[f64],
) -> Result<DMatrix<f64>> {
    let (precision, linear) = autoregressive_posterior(dataset, b, s, variances, prior, gamma)?;
    let chol = cholesky_with_jitter(&precision)?;
    let mean = chol.solve(&linear);
    Ok(DMatrix::from_row_slice(
        dataset.n_vars(),
        dataset.n_regressors(),
        mean.as_slice(),
    ))
}

/// Equation-by-equation least squares: returns `A` and the residual
/// covariance.
pub fn least_squares(dataset: &Dataset) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let t_len = dataset.len();
    let k = dataset.n_regressors();
    if t_len <= k {
        return Err(Error::InsufficientData {
            rows: t_len,
            required: k + 1,
        });
    }
    let xtx = dataset.x.transpose() * &dataset.x;
    let chol = xtx
        .cholesky()
        .ok_or_else(|| Error::Numerical("design matrix is rank deficient".into()))?;
    let coef = chol.solve(&(dataset.x.transpose() * &dataset.y));
    let a = coef.transpose();
    let resid = &dataset.y - &dataset.x * &coef;
    let cov = resid.transpose() * &resid / (t_len - k) as f64;
    Ok((a, cov))
}
