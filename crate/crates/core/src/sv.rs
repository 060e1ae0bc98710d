//! Non-centered stochastic volatility with regime-dependent loadings.
//!
//! The conditional variance of shock `n` at `t` is `exp(ω_n(s_t) h_{n,t})`
//! with `h_{n,t} = ρ_n h_{n,t-1} + v_{n,t}`, `h_{n,0} = 0`. Squared
//! structural residuals are linearized as
//! `log u² = ω h + log χ²₁`, and `log χ²₁` is replaced by a ten-component
//! normal mixture with auxiliary indicators.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::priors::{sample_gig, sample_truncated_normal};

/// Squared residuals are floored here before taking logs.
pub const RESIDUAL_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent {
    pub probability: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Normal mixture approximating the law of `log χ²₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureTable {
    components: Vec<MixtureComponent>,
    log_weights: Vec<f64>,
}

const OMORI_PROBS: [f64; 10] = [
    0.00609, 0.04775, 0.13057, 0.20674, 0.22715, 0.18842, 0.12047, 0.05591, 0.01575, 0.00115,
];
const OMORI_MEANS: [f64; 10] = [
    1.92677, 1.34744, 0.73504, 0.02266, -0.85173, -1.97278, -3.46788, -5.55246, -8.68384, -14.65000,
];
const OMORI_VARS: [f64; 10] = [
    0.11265, 0.17788, 0.26768, 0.40611, 0.62699, 0.98583, 1.57469, 2.54498, 4.16591, 7.33342,
];

impl MixtureTable {
    /// The ten-component table of Omori, Chib, Shephard and Nakajima (2007).
    pub fn ten_component() -> Self {
        let components = (0..10)
            .map(|j| MixtureComponent {
                probability: OMORI_PROBS[j],
                mean: OMORI_MEANS[j],
                variance: OMORI_VARS[j],
            })
            .collect();
        Self::new(components).expect("reference table is valid")
    }

    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() || components.len() > u8::MAX as usize {
            return Err(Error::domain("mixture needs between 1 and 255 components"));
        }
        let total: f64 = components.iter().map(|c| c.probability).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("mixture probabilities sum to {total}")));
        }
        if components.iter().any(|c| !(c.variance > 0.0) || !(c.probability > 0.0)) {
            return Err(Error::domain("mixture probabilities and variances must be positive"));
        }
        // log p_j - ½ log v_j, the component-specific part of p_j N(x; m_j, v_j)
        let log_weights = components
            .iter()
            .map(|c| c.probability.ln() - 0.5 * c.variance.ln())
            .collect();
        Ok(MixtureTable {
            components,
            log_weights,
        })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component(&self, j: usize) -> &MixtureComponent {
        &self.components[j]
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    /// Posterior probabilities of the components given the residual
    /// `e = log u² - ω h`.
    pub fn posterior(&self, e: f64) -> Vec<f64> {
        let mut logp: Vec<f64> = self
            .components
            .iter()
            .zip(&self.log_weights)
            .map(|(c, lw)| lw - 0.5 * (e - c.mean).powi(2) / c.variance)
            .collect();
        let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in logp.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        logp.iter_mut().for_each(|v| *v /= total);
        logp
    }

    fn draw<R: Rng + ?Sized>(&self, e: f64, scratch: &mut [f64], rng: &mut R) -> u8 {
        let mut max = f64::NEG_INFINITY;
        for (j, c) in self.components.iter().enumerate() {
            let v = self.log_weights[j] - 0.5 * (e - c.mean).powi(2) / c.variance;
            scratch[j] = v;
            max = max.max(v);
        }
        let mut total = 0.0;
        for v in scratch.iter_mut().take(self.components.len()) {
            *v = (*v - max).exp();
            total += *v;
        }
        let mut u = rng.random::<f64>() * total;
        for (j, v) in scratch.iter().take(self.components.len()).enumerate() {
            u -= v;
            if u <= 0.0 {
                return j as u8;
            }
        }
        (self.components.len() - 1) as u8
    }
}

impl Default for MixtureTable {
    fn default() -> Self {
        Self::ten_component()
    }
}

/// `σ²_{n,t} = exp(ω_n(s_t) h_{n,t})`, returned as `N × T`.
pub fn conditional_variances(omega: &DMatrix<f64>, h: &DMatrix<f64>, s: &[usize]) -> DMatrix<f64> {
    let (n_vars, t_len) = h.shape();
    DMatrix::from_fn(n_vars, t_len, |n, t| (omega[(n, s[t])] * h[(n, t)]).exp())
}

/// `log max(u², floor)` for structural residuals `u` laid out `N × T`.
pub fn log_squared_residuals(u: &DMatrix<f64>) -> DMatrix<f64> {
    u.map(|v| (v * v).max(RESIDUAL_FLOOR).ln())
}

/// Draws the mixture indicator of every `(n, t)` from its discrete
/// posterior.
pub fn draw_mixture_indicators<R: Rng + ?Sized>(
    log_sq: &DMatrix<f64>,
    omega: &DMatrix<f64>,
    h: &DMatrix<f64>,
    s: &[usize],
    table: &MixtureTable,
    rng: &mut R,
) -> Vec<Vec<u8>> {
    let (n_vars, t_len) = log_sq.shape();
    let mut scratch = vec![0.0; table.len()];
    (0..n_vars)
        .map(|n| {
            (0..t_len)
                .map(|t| {
                    let e = log_sq[(n, t)] - omega[(n, s[t])] * h[(n, t)];
                    table.draw(e, &mut scratch, rng)
                })
                .collect()
        })
        .collect()
}

/// Cholesky factor of a symmetric tridiagonal matrix: returns the diagonal
/// and sub-diagonal of the lower bidiagonal `L` with `L Lᵀ = Q`.
pub fn tridiagonal_cholesky(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    if n > 0 && off.len() + 1 != n {
        return Err(Error::dimension("off-diagonal must have length n - 1"));
    }
    let mut l = Vec::with_capacity(n);
    let mut m = Vec::with_capacity(n.saturating_sub(1));
    for t in 0..n {
        let mut d = diag[t];
        if t > 0 {
            let sub = off[t - 1] / l[t - 1];
            d -= sub * sub;
            m.push(sub);
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::numerical(format!(
                "tridiagonal precision not positive definite at {t}"
            )));
        }
        l.push(d.sqrt());
    }
    Ok((l, m))
}

/// Solves `L Lᵀ x = rhs` given the bidiagonal factor.
pub fn tridiagonal_solve(l: &[f64], m: &[f64], rhs: &[f64]) -> Vec<f64> {
    let mut z = forward_bidiagonal(l, m, rhs);
    backward_bidiagonal(l, m, &mut z);
    z
}

fn forward_bidiagonal(l: &[f64], m: &[f64], rhs: &[f64]) -> Vec<f64> {
    let mut z = Vec::with_capacity(l.len());
    for t in 0..l.len() {
        let prev = if t > 0 { m[t - 1] * z[t - 1] } else { 0.0 };
        z.push((rhs[t] - prev) / l[t]);
    }
    z
}

/// Solves `Lᵀ x = z` in place.
fn backward_bidiagonal(l: &[f64], m: &[f64], z: &mut [f64]) {
    let n = l.len();
    for t in (0..n).rev() {
        let next = if t + 1 < n { m[t] * z[t + 1] } else { 0.0 };
        z[t] = (z[t] - next) / l[t];
    }
}

/// Draws one log-volatility path `h_{n,1..T}` from its Gaussian full
/// conditional given the mixture indicators.
pub fn draw_log_volatilities<R: Rng + ?Sized>(
    indicators: &[u8],
    log_sq: &[f64],
    omega: &[f64],
    rho: f64,
    s: &[usize],
    table: &MixtureTable,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::domain(format!("|ρ| must be below 1, got {rho}")));
    }
    let t_len = log_sq.len();
    if t_len == 0 {
        return Ok(Vec::new());
    }
    let mut diag = vec![1.0 + rho * rho; t_len];
    diag[t_len - 1] = 1.0;
    let off = vec![-rho; t_len - 1];
    let mut rhs = vec![0.0; t_len];
    for t in 0..t_len {
        let c = table.component(indicators[t] as usize);
        let w = omega[s[t]];
        diag[t] += w * w / c.variance;
        rhs[t] = w * (log_sq[t] - c.mean) / c.variance;
    }
    let (l, m) = tridiagonal_cholesky(&diag, &off)?;
    let mut mean = forward_bidiagonal(&l, &m, &rhs);
    // add the N(0, I) draw before the backward pass: x = L⁻ᵀ (L⁻¹ rhs + z)
    for v in mean.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v += z;
    }
    backward_bidiagonal(&l, &m, &mut mean);
    Ok(mean)
}

/// Output of the `ω` update: the draw and the conditional posterior moments
/// that feed the Rao-Blackwellized Savage-Dickey ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaDraw {
    pub omega: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Draws `ω_n(m)` for every regime from its normal full conditional.
///
/// `variance_inflation` multiplies the conditional variance of the draw and
/// must be 1 for a valid sampler; other values exist for mutation tests of
/// the correctness harness.
#[allow(clippy::too_many_arguments)]
pub fn draw_omega<R: Rng + ?Sized>(
    h: &[f64],
    s: &[usize],
    indicators: &[u8],
    log_sq: &[f64],
    sigma2_omega: f64,
    n_regimes: usize,
    table: &MixtureTable,
    variance_inflation: f64,
    rng: &mut R,
) -> Result<OmegaDraw> {
    if !(sigma2_omega > 0.0) {
        return Err(Error::domain("ω prior variance must be positive"));
    }
    let mut precision = vec![1.0 / sigma2_omega; n_regimes];
    let mut linear = vec![0.0; n_regimes];
    for t in 0..h.len() {
        let c = table.component(indicators[t] as usize);
        let m = s[t];
        precision[m] += h[t] * h[t] / c.variance;
        linear[m] += h[t] * (log_sq[t] - c.mean) / c.variance;
    }
    let mut out = OmegaDraw {
        omega: Vec::with_capacity(n_regimes),
        mean: Vec::with_capacity(n_regimes),
        variance: Vec::with_capacity(n_regimes),
    };
    for m in 0..n_regimes {
        let var = 1.0 / precision[m];
        let mean = linear[m] * var;
        let z: f64 = rng.sample(StandardNormal);
        out.omega.push(mean + (var * variance_inflation).sqrt() * z);
        out.mean.push(mean);
        out.variance.push(var);
    }
    Ok(out)
}

/// Draws `σ²_ω` from its GIG conditional given one equation's loadings.
pub fn draw_omega_variance<R: Rng + ?Sized>(
    omega: &[f64],
    prior_shape: f64,
    prior_scale: f64,
    rng: &mut R,
) -> Result<f64> {
    let chi: f64 = omega.iter().map(|w| w * w).sum();
    let lambda = prior_shape - omega.len() as f64 / 2.0;
    sample_gig(lambda, chi, 2.0 / prior_scale, rng)
}

/// Draws `ρ` under a uniform prior on (-1, 1).
pub fn draw_rho<R: Rng + ?Sized>(h: &[f64], rng: &mut R) -> Result<f64> {
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for t in 1..h.len() {
        sxx += h[t - 1] * h[t - 1];
        sxy += h[t] * h[t - 1];
    }
    if !(sxx > 0.0) {
        return Ok(2.0 * rng.random::<f64>() - 1.0);
    }
    let draw = sample_truncated_normal(sxy / sxx, 1.0 / sxx, -1.0, 1.0, rng)?;
    // keep strictly inside the stationarity region
    Ok(draw.clamp(-1.0 + 1e-12, 1.0 - 1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn table_is_a_distribution() {
        let table = MixtureTable::ten_component();
        let total: f64 = table.components().iter().map(|c| c.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // E[log χ²₁] = ψ(1/2) + ln 2 ≈ -1.2704
        let mean: f64 = table.components().iter().map(|c| c.probability * c.mean).sum();
        assert!((mean + 1.2704).abs() < 1e-3, "{mean}");
        // Var[log χ²₁] = π²/2
        let second: f64 = table
            .components()
            .iter()
            .map(|c| c.probability * (c.variance + c.mean * c.mean))
            .sum();
        assert!((second - mean * mean - std::f64::consts::PI.powi(2) / 2.0).abs() < 0.01);
    }

    #[test]
    fn variance_special_cases() {
        let omega = DMatrix::from_element(2, 2, 0.0);
        let h = DMatrix::from_fn(2, 4, |n, t| (n + t) as f64 - 1.5);
        let s = [0, 1, 1, 0];
        assert!(conditional_variances(&omega, &h, &s).iter().all(|&v| v == 1.0));
        let omega = DMatrix::from_element(1, 1, 2.0);
        let h0 = DMatrix::zeros(1, 3);
        assert!(conditional_variances(&omega, &h0, &[0, 0, 0]).iter().all(|&v| v == 1.0));
        let h = DMatrix::from_element(1, 1, 0.5);
        assert!((conditional_variances(&omega, &h, &[0])[(0, 0)] - 1f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn sign_flip_leaves_variances_unchanged() {
        let omega = DMatrix::from_row_slice(2, 2, &[0.3, -1.2, 0.7, 0.05]);
        let h = DMatrix::from_fn(2, 5, |n, t| ((n * 5 + t) as f64).sin() * 2.0);
        let s = [0, 1, 0, 1, 1];
        let a = conditional_variances(&omega, &h, &s);
        let b = conditional_variances(&(-&omega), &(-&h), &s);
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_indicator_posterior() {
        let mut comps: Vec<MixtureComponent> = MixtureTable::ten_component().components().to_vec();
        comps[3].variance = 1e-16;
        let table = MixtureTable::new(comps).unwrap();
        let post = table.posterior(table.component(3).mean);
        assert!(post[3] > 1.0 - 1e-6);
    }

    #[test]
    fn indicator_posterior_matches_direct_enumeration() {
        // with ω = 0 the posterior depends only on log u²
        let table = MixtureTable::ten_component();
        let e = -0.7;
        let post = table.posterior(e);
        let dens: Vec<f64> = table
            .components()
            .iter()
            .map(|c| {
                c.probability * (-(e - c.mean).powi(2) / (2.0 * c.variance)).exp()
                    / (2.0 * std::f64::consts::PI * c.variance).sqrt()
            })
            .collect();
        let total: f64 = dens.iter().sum();
        for j in 0..10 {
            assert!((post[j] - dens[j] / total).abs() < 1e-14);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let log_sq = DMatrix::from_element(1, 1, e);
        let omega = DMatrix::zeros(1, 1);
        let h = DMatrix::from_element(1, 1, 3.0);
        let mut counts = [0usize; 10];
        let n = 100_000;
        for _ in 0..n {
            let ind = draw_mixture_indicators(&log_sq, &omega, &h, &[0], &table, &mut rng);
            counts[ind[0][0] as usize] += 1;
        }
        for j in 0..10 {
            assert!((counts[j] as f64 / n as f64 - post[j]).abs() < 0.01);
        }
    }

    #[test]
    fn banded_solve_matches_dense() {
        let diag = [2.5, 3.0, 1.7];
        let off = [-0.4, 0.9];
        let rhs = [1.0, -2.0, 0.5];
        let (l, m) = tridiagonal_cholesky(&diag, &off).unwrap();
        let x = tridiagonal_solve(&l, &m, &rhs);
        let q = DMatrix::from_row_slice(3, 3, &[2.5, -0.4, 0.0, -0.4, 3.0, 0.9, 0.0, 0.9, 1.7]);
        let dense = q.lu().solve(&nalgebra::DVector::from_column_slice(&rhs)).unwrap();
        for i in 0..3 {
            assert!((x[i] - dense[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn single_period_volatility_posterior() {
        let table = MixtureTable::ten_component();
        let (w, rho, j, y) = (0.8, 0.5, 4u8, 0.3);
        let c = table.component(j as usize);
        let var = 1.0 / (1.0 + w * w / c.variance);
        let mean = (w / c.variance) * (y - c.mean) * var;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..n {
            let h = draw_log_volatilities(&[j], &[y], &[w], rho, &[0], &table, &mut rng).unwrap()[0];
            acc += h;
            acc2 += h * h;
        }
        let m = acc / n as f64;
        let v = acc2 / n as f64 - m * m;
        assert!((m - mean).abs() < 3.0 * (var / n as f64).sqrt());
        assert!((v - var).abs() < 0.01 * var.max(0.1));
    }

    #[test]
    fn omega_conjugate_arithmetic() {
        let mut comps = vec![MixtureComponent {
            probability: 1.0,
            mean: 0.0,
            variance: 1.0,
        }];
        comps[0].variance = 1.0;
        let table = MixtureTable::new(comps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = draw_omega(&[1.0], &[0], &[0], &[2.0], 1.0, 1, &table, 1.0, &mut rng).unwrap();
        assert!((d.mean[0] - 1.0).abs() < 1e-15);
        assert!((d.variance[0] - 0.5).abs() < 1e-15);
        // regime without observations and zero design fall back to the prior
        let d = draw_omega(
            &[0.0, 0.0],
            &[0, 0],
            &[0, 0],
            &[2.0, 1.0],
            3.0,
            2,
            &table,
            1.0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(d.mean, vec![0.0, 0.0]);
        assert_eq!(d.variance, vec![3.0, 3.0]);
    }

    #[test]
    fn rho_uniform_when_h_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut draws: Vec<f64> = (0..10_000).map(|_| draw_rho(&[0.0; 20], &mut rng).unwrap()).collect();
        draws.sort_by(f64::total_cmp);
        let n = draws.len() as f64;
        let ks = draws
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = (x + 1.0) / 2.0;
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 1.628 / n.sqrt(), "ks {ks}");
    }

    #[test]
    fn rho_recovered_from_long_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut h = vec![0.0; 5000];
        for t in 1..h.len() {
            let z: f64 = rng.sample(StandardNormal);
            h[t] = 0.9 * h[t - 1] + z;
        }
        let n = 2000;
        let mean = (0..n).map(|_| draw_rho(&h, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 0.9).abs() < 0.05);
    }

    #[test]
    fn nonstationary_rho_rejected() {
        let table = MixtureTable::ten_component();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(draw_log_volatilities(&[0], &[0.0], &[1.0], 1.0, &[0], &table, &mut rng).is_err());
    }
}
