//! Distribution primitives and the hierarchical shrinkage prior.
//!
//! Parameterizations used throughout the crate:
//!
//! * `IG2(s, ν)`: density ∝ x^{-(ν+2)/2} exp(-s / (2x)), so that `s / x ~ χ²_ν`.
//! * `Gamma(shape a, scale θ)`: density ∝ x^{a-1} exp(-x / θ), mean `a θ`.
//! * `GIG(λ, χ, ψ)`: density ∝ x^{λ-1} exp(-(χ / x + ψ x) / 2).

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "{name} must be positive and finite, got {value}"
        )))
    }
}

/// Draws from `Gamma(shape, scale)`.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    check_positive("gamma shape", shape)?;
    check_positive("gamma scale", scale)?;
    let g = Gamma::new(shape, scale).map_err(|e| Error::domain(e.to_string()))?;
    Ok(g.sample(rng))
}

pub fn gamma_log_density(x: f64, shape: f64, scale: f64) -> Result<f64> {
    check_positive("gamma shape", shape)?;
    check_positive("gamma scale", scale)?;
    if x <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok((shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln())
}

/// Draws from `IG2(scale, shape)`.
pub fn sample_ig2<R: Rng + ?Sized>(scale: f64, shape: f64, rng: &mut R) -> Result<f64> {
    check_positive("IG2 scale", scale)?;
    check_positive("IG2 shape", shape)?;
    // s / x ~ χ²_ν = Gamma(ν/2, 2)
    let chi2 = sample_gamma(shape / 2.0, 2.0, rng)?;
    Ok(scale / chi2)
}

pub fn ig2_log_density(x: f64, scale: f64, shape: f64) -> Result<f64> {
    check_positive("IG2 scale", scale)?;
    check_positive("IG2 shape", shape)?;
    if x <= 0.0 {
        return Err(Error::domain(format!("IG2 density evaluated at non-positive {x}")));
    }
    let half = shape / 2.0;
    Ok(half * (scale / 2.0).ln() - ln_gamma(half) - (half + 1.0) * x.ln() - scale / (2.0 * x))
}

/// Mean of `IG2(s, ν)` when it exists, otherwise the mode.
pub fn ig2_center(scale: f64, shape: f64) -> f64 {
    if shape > 2.0 {
        scale / (shape - 2.0)
    } else {
        scale / (shape + 2.0)
    }
}

/// Fixed hyperparameters of a three-level local-global shrinkage chain:
/// `γ[n] | s[n] ~ IG2(s[n], ν)`, `s[n] | s_γ ~ Gamma(shape ν_γ, scale s_γ)`,
/// `s_γ ~ IG2(s_s, ν_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkagePrior {
    pub nu: f64,
    pub nu_gamma: f64,
    pub s_s: f64,
    pub nu_s: f64,
}

impl ShrinkagePrior {
    pub fn validate(&self) -> Result<()> {
        check_positive("nu", self.nu)?;
        check_positive("nu_gamma", self.nu_gamma)?;
        check_positive("s_s", self.s_s)?;
        check_positive("nu_s", self.nu_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageChainState {
    pub prior: ShrinkagePrior,
    /// Equation-level variances `γ[n]`.
    pub gamma: Vec<f64>,
    /// Equation-level scales `s[n]`.
    pub scale: Vec<f64>,
    /// Global scale `s_γ`.
    pub global: f64,
}

impl ShrinkageChainState {
    /// State at the prior centers (means where they exist, modes otherwise).
    pub fn at_prior_center(prior: ShrinkagePrior, n_eq: usize) -> Self {
        let global = ig2_center(prior.s_s, prior.nu_s);
        let scale = prior.nu_gamma * global;
        let gamma = ig2_center(scale, prior.nu);
        ShrinkageChainState {
            prior,
            gamma: vec![gamma; n_eq],
            scale: vec![scale; n_eq],
            global,
        }
    }

    /// Draws the whole chain top-down from its prior.
    pub fn sample_prior<R: Rng + ?Sized>(prior: ShrinkagePrior, n_eq: usize, rng: &mut R) -> Result<Self> {
        prior.validate()?;
        let global = sample_ig2(prior.s_s, prior.nu_s, rng)?;
        let mut scale = Vec::with_capacity(n_eq);
        let mut gamma = Vec::with_capacity(n_eq);
        for _ in 0..n_eq {
            let s = sample_gamma(prior.nu_gamma, global, rng)?;
            scale.push(s);
            gamma.push(sample_ig2(s, prior.nu, rng)?);
        }
        Ok(ShrinkageChainState {
            prior,
            gamma,
            scale,
            global,
        })
    }

    pub fn is_valid(&self) -> bool {
        self.global > 0.0
            && self.global.is_finite()
            && self.gamma.iter().chain(&self.scale).all(|v| *v > 0.0 && v.is_finite())
    }
}

/// Sufficient statistics of the coefficients governed by one `γ[n]`: the sum
/// of squared (prior-standardized) deviations and their count.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CoefficientSummary {
    pub sum_squares: f64,
    pub count: usize,
}

impl CoefficientSummary {
    pub fn from_vectors<'a>(vectors: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut out = CoefficientSummary::default();
        for v in vectors {
            out.sum_squares += v.iter().map(|x| x * x).sum::<f64>();
            out.count += v.len();
        }
        out
    }
}

/// One Gibbs pass through the shrinkage chain given the coefficient
/// summaries for every equation.
pub fn update_shrinkage_chain<R: Rng + ?Sized>(
    state: &ShrinkageChainState,
    coefficients: &[CoefficientSummary],
    rng: &mut R,
) -> Result<ShrinkageChainState> {
    let prior = state.prior;
    prior.validate()?;
    let n_eq = state.gamma.len();
    if coefficients.len() != n_eq {
        return Err(Error::dimension(format!(
            "{} coefficient summaries for {n_eq} equations",
            coefficients.len()
        )));
    }
    if coefficients.iter().any(|c| !c.sum_squares.is_finite()) {
        return Err(Error::domain("non-finite coefficients in shrinkage update"));
    }
    let mut gamma = Vec::with_capacity(n_eq);
    let mut scale = Vec::with_capacity(n_eq);
    for (n, c) in coefficients.iter().enumerate() {
        let g = sample_ig2(state.scale[n] + c.sum_squares, prior.nu + c.count as f64, rng)?;
        let rate = 1.0 / state.global + 1.0 / (2.0 * g);
        let s = sample_gamma(prior.nu_gamma + prior.nu / 2.0, 1.0 / rate, rng)?;
        gamma.push(g);
        scale.push(s);
    }
    let global = sample_ig2(
        prior.s_s + 2.0 * scale.iter().sum::<f64>(),
        prior.nu_s + 2.0 * n_eq as f64 * prior.nu_gamma,
        rng,
    )?;
    Ok(ShrinkageChainState {
        prior,
        gamma,
        scale,
        global,
    })
}

/// Marginal prior of a structural coefficient after integrating over the
/// pattern indicator: returns `(slab weight, spike weight)` where the spike
/// is a point mass at zero.
pub fn spike_slab_weights(k: usize, k_restricting: usize) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::domain("pattern count must be at least 1"));
    }
    if k_restricting > k {
        return Err(Error::domain(format!(
            "{k_restricting} restricting patterns out of only {k}"
        )));
    }
    let spike = k_restricting as f64 / k as f64;
    let slab = (k - k_restricting) as f64 / k as f64;
    Ok((slab, spike))
}

/// Marginal prior density of `ω` at zero when `ω | σ² ~ N(0, σ²)` and
/// `σ² ~ Gamma(shape, scale)`: `(2π)^{-1/2} E[σ^{-1}]`.
pub fn omega_prior_density_at_zero(shape: f64, scale: f64) -> Result<f64> {
    check_positive("shape", shape)?;
    check_positive("scale", scale)?;
    if shape <= 0.5 {
        return Err(Error::domain(format!("E[1/σ] diverges for gamma shape {shape} <= 1/2")));
    }
    let log_moment = ln_gamma(shape - 0.5) - ln_gamma(shape) - 0.5 * scale.ln();
    Ok((log_moment - 0.5 * LN_2PI).exp())
}

pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(Error::domain("Dirichlet needs at least one component"));
    }
    let mut draws = alpha
        .iter()
        .map(|&a| sample_gamma(a, 1.0, rng))
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = draws.iter().sum();
    if !(total > 0.0) {
        // every component underflowed: fall back to the largest shape
        let best = alpha
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        draws
            .iter_mut()
            .enumerate()
            .for_each(|(i, d)| *d = f64::from(u8::from(i == best)));
        return Ok(draws);
    }
    draws.iter_mut().for_each(|d| *d /= total);
    Ok(draws)
}

/// Draws from `N(mean, var)` truncated to `(lo, hi)`; infinite bounds are
/// allowed.
pub fn sample_truncated_normal<R: Rng + ?Sized>(mean: f64, var: f64, lo: f64, hi: f64, rng: &mut R) -> Result<f64> {
    check_positive("variance", var)?;
    if !(lo < hi) || mean.is_nan() {
        return Err(Error::domain(format!("empty truncation interval ({lo}, {hi})")));
    }
    let sd = var.sqrt();
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    let z = standard_truncated(a, b, rng);
    Ok((mean + sd * z).clamp(lo, hi))
}

/// Standard normal truncated to `(a, b)`, by the accept-reject schemes of
/// Robert (1995): normal, uniform or translated-exponential proposals.
fn standard_truncated<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if b <= 0.0 {
        return -standard_truncated(-b, -a, rng);
    }
    if a < 0.0 {
        // interval straddles zero
        if b - a >= (2.0 * std::f64::consts::PI).sqrt() {
            loop {
                let z: f64 = rng.sample(StandardNormal);
                if z > a && z < b {
                    return z;
                }
            }
        }
        loop {
            let z = a + (b - a) * rng.random::<f64>();
            if rng.random::<f64>() <= (-0.5 * z * z).exp() {
                return z;
            }
        }
    }
    // 0 <= a < b
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    let exp_worth = b - a
        > 2.0 * std::f64::consts::E.sqrt() / (a + (a * a + 4.0).sqrt())
            * ((a * a - a * (a * a + 4.0).sqrt()) / 4.0).exp();
    if a < 0.3 && b - a >= (2.0 * std::f64::consts::PI).sqrt() {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let z = z.abs();
            if z > a && z < b {
                return z;
            }
        }
    }
    if exp_worth {
        loop {
            let e: f64 = rng.sample(Exp1);
            let z = a + e / alpha;
            if z < b && rng.random::<f64>() <= (-0.5 * (z - alpha).powi(2)).exp() {
                return z;
            }
        }
    }
    loop {
        let z = a + (b - a) * rng.random::<f64>();
        if rng.random::<f64>() <= (0.5 * (a * a - z * z)).exp() {
            return z;
        }
    }
}

/// Unnormalized log density of `GIG(λ, χ, ψ)`.
pub fn gig_log_kernel(x: f64, lambda: f64, chi: f64, psi: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    (lambda - 1.0) * x.ln() - 0.5 * (chi / x + psi * x)
}

fn check_gig(lambda: f64, chi: f64, psi: f64) -> Result<()> {
    let ok = lambda.is_finite()
        && chi >= 0.0
        && psi >= 0.0
        && chi.is_finite()
        && psi.is_finite()
        && ((chi > 0.0 && psi > 0.0)
            || (chi == 0.0 && lambda > 0.0 && psi > 0.0)
            || (psi == 0.0 && lambda < 0.0 && chi > 0.0));
    if ok {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "invalid GIG parameters λ={lambda}, χ={chi}, ψ={psi}"
        )))
    }
}

/// Draws from `GIG(λ, χ, ψ)`.
///
/// Works on `z = log x`, whose density exp(-G(z)) is log-concave. The
/// envelope is flat between the two points where `G` exceeds its minimum
/// by one and exponential beyond them.
pub fn sample_gig<R: Rng + ?Sized>(lambda: f64, chi: f64, psi: f64, rng: &mut R) -> Result<f64> {
    check_gig(lambda, chi, psi)?;
    if chi == 0.0 {
        return sample_gamma(lambda, 2.0 / psi, rng);
    }
    if psi == 0.0 {
        return Ok(1.0 / sample_gamma(-lambda, 2.0 / chi, rng)?);
    }
    // mode of the log-density in z: ψ e^{2z} - 2λ e^z - χ = 0
    let root = (lambda * lambda + chi * psi).sqrt();
    let mode_x = if lambda > 0.0 {
        (lambda + root) / psi
    } else {
        chi / (root - lambda)
    };
    let mode = mode_x.ln();
    // G(d) = -λ d + c1 (e^{-d} - 1) + c2 (e^{d} - 1), d = z - mode
    let c1 = 0.5 * chi / mode_x;
    let c2 = 0.5 * psi * mode_x;
    let g = |d: f64| -lambda * d + c1 * (-d).exp_m1() + c2 * d.exp_m1();
    let dg = |d: f64| -lambda - c1 * (-d).exp() + c2 * d.exp();
    let right = solve_level(&g, 1.0);
    let left = -solve_level(&|d: f64| g(-d), 1.0);
    let slope_r = dg(right);
    let slope_l = -dg(left);
    let mass_mid = right - left;
    let mass_r = (-1.0f64).exp() / slope_r;
    let mass_l = (-1.0f64).exp() / slope_l;
    let total = mass_mid + mass_r + mass_l;
    loop {
        let u = rng.random::<f64>() * total;
        let (d, log_env) = if u < mass_mid {
            (left + rng.random::<f64>() * mass_mid, 0.0)
        } else if u < mass_mid + mass_r {
            let e: f64 = rng.sample(Exp1);
            (right + e / slope_r, -1.0 - e)
        } else {
            let e: f64 = rng.sample(Exp1);
            (left - e / slope_l, -1.0 - e)
        };
        let log_u = rng.random::<f64>().ln();
        if log_u + log_env <= -g(d) {
            return Ok((mode + d).exp());
        }
    }
}

/// Smallest positive `d` with `f(d) = level` for convex increasing `f` on
/// `d > 0` with `f(0) = 0`.
fn solve_level(f: &dyn Fn(f64) -> f64, level: f64) -> f64 {
    let mut hi = 1.0;
    while f(hi) < level {
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn ig2_is_a_scale_family() {
        let mut r1 = rng(3);
        let mut r2 = rng(3);
        for _ in 0..100 {
            let a = sample_ig2(2.0, 7.0, &mut r1).unwrap();
            let b = sample_ig2(6.0, 7.0, &mut r2).unwrap();
            assert!((b - 3.0 * a).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn ig2_mean_by_monte_carlo() {
        let mut r = rng(11);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_ig2(10.0, 12.0, &mut r).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn nonpositive_arguments_rejected() {
        let mut r = rng(0);
        assert!(sample_ig2(0.0, 1.0, &mut r).is_err());
        assert!(sample_ig2(1.0, -1.0, &mut r).is_err());
        assert!(ig2_log_density(-1.0, 1.0, 1.0).is_err());
        assert!(sample_gamma(1.0, 0.0, &mut r).is_err());
    }

    #[test]
    fn spike_slab_examples() {
        assert_eq!(spike_slab_weights(4, 2).unwrap(), (0.5, 0.5));
        assert_eq!(spike_slab_weights(4, 0).unwrap(), (1.0, 0.0));
        assert_eq!(spike_slab_weights(2, 1).unwrap(), (0.5, 0.5));
        assert!(spike_slab_weights(2, 3).is_err());
        for k in 1..12 {
            for kr in 0..=k {
                let (a, b) = spike_slab_weights(k, kr).unwrap();
                assert_eq!(a + b, 1.0);
            }
        }
    }

    #[test]
    fn omega_density_at_zero_closed_form() {
        let v = omega_prior_density_at_zero(1.0, 1.0).unwrap();
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
        let quarter = omega_prior_density_at_zero(1.0, 4.0).unwrap();
        assert!((quarter - v / 2.0).abs() < 1e-14);
        assert!(omega_prior_density_at_zero(0.4, 1.0).is_err());
    }

    #[test]
    fn omega_density_at_zero_monte_carlo() {
        let mut r = rng(5);
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let s2 = sample_gamma(2.0, 0.5, &mut r).unwrap();
            acc += (-0.5 * LN_2PI - 0.5 * s2.ln()).exp();
        }
        let mc = acc / n as f64;
        let exact = omega_prior_density_at_zero(2.0, 0.5).unwrap();
        assert!((mc - exact).abs() < 2e-3, "{mc} vs {exact}");
    }

    #[test]
    fn shrinkage_prior_only_update() {
        // no coefficients: γ[n] ~ IG2(s[n], ν) exactly, compare draw streams
        let prior = ShrinkagePrior {
            nu: 10.0,
            nu_gamma: 10.0,
            s_s: 100.0,
            nu_s: 1.0,
        };
        let state = ShrinkageChainState::at_prior_center(prior, 1);
        let mut r1 = rng(9);
        let mut r2 = rng(9);
        let next = update_shrinkage_chain(&state, &[CoefficientSummary::default()], &mut r1).unwrap();
        let direct = sample_ig2(state.scale[0], prior.nu, &mut r2).unwrap();
        assert_eq!(next.gamma[0], direct);
        assert!(next.is_valid());
    }

    #[test]
    fn dirichlet_sums_to_one() {
        let mut r = rng(1);
        for _ in 0..1000 {
            let d = sample_dirichlet(&[0.3, 1.0, 12.0], &mut r).unwrap();
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(d.iter().all(|&p| p >= 0.0));
        }
        assert!(sample_dirichlet(&[1.0, 0.0], &mut r).is_err());
    }

    #[test]
    fn dirichlet_flat_mean() {
        let mut r = rng(2);
        let n = 1_000_000;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..n {
            let d = sample_dirichlet(&[1.0, 1.0], &mut r).unwrap();
            acc += d[0];
            acc2 += d[0] * d[0];
        }
        let mean = acc / n as f64;
        let se = ((acc2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn truncated_normal_without_truncation() {
        let mut r = rng(4);
        let n = 200_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_truncated_normal(0.0, 1.0, -1e10, 1e10, &mut r).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| x * x).sum::<f64>() / n as f64 - mean * mean;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.02);
    }

    #[test]
    fn truncated_normal_far_tail_stays_inside() {
        let mut r = rng(6);
        for _ in 0..10_000 {
            let z = sample_truncated_normal(1.5, 1e-4, -1.0, 1.0, &mut r).unwrap();
            assert!(z > -1.0 && z < 1.0 && z > 0.99);
            let z = sample_truncated_normal(-400.0, 1.0, -1.0, 1.0, &mut r).unwrap();
            assert!((-1.0..-0.9).contains(&z));
        }
        assert!(sample_truncated_normal(0.0, 1.0, 1.0, 1.0, &mut r).is_err());
    }

    #[test]
    fn gig_degenerate_branches() {
        let mut r = rng(8);
        assert!(sample_gig(0.0, 0.0, 1.0, &mut r).is_err());
        assert!(sample_gig(1.0, -1.0, 1.0, &mut r).is_err());
        let n = 200_000;
        // χ = 0: Gamma(λ, 2/ψ) with mean 2λ/ψ
        let mean = (0..n).map(|_| sample_gig(1.5, 0.0, 3.0, &mut r).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01);
    }

    #[test]
    fn gig_extreme_parameters_are_finite() {
        let mut r = rng(10);
        for &(l, c, p) in &[
            (0.0, 1e-12, 2.0),
            (-0.5, 1e6, 1e-6),
            (50.0, 1.0, 1.0),
            (-30.0, 5.0, 0.1),
            (0.0, 1e-300, 2.0),
        ] {
            for _ in 0..200 {
                let x = sample_gig(l, c, p, &mut r).unwrap();
                assert!(x > 0.0 && x.is_finite(), "{l} {c} {p} -> {x}");
            }
        }
    }
}
