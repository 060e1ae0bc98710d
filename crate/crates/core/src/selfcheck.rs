//! Independent oracles for the samplers: adaptive quadrature, exhaustive
//! path enumeration and Kolmogorov-Smirnov tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use statrs::distribution::{Beta, ChiSquared, ContinuousCDF, Gamma as GammaDist, Normal};

use crate::error::Result;
use crate::gibbs::{chain_rng, geweke_joint_test, geweke_reference_config, GewekeSettings, SweepOptions};
use crate::priors::{
    omega_prior_density_at_zero, sample_dirichlet, sample_gamma, sample_gig, sample_ig2, sample_truncated_normal,
};
use crate::regime::{backward_sample, forward_filter, smooth};
use crate::structural::{draw_row_coefficients, pattern_log_marginal};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive Gauss-Kronrod (7-15) integration over `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    integrate_pieces(f, &[a, b], rel_tol)
}

fn integrate_pieces(f: &dyn Fn(f64) -> f64, breaks: &[f64], rel_tol: f64) -> f64 {
    let mut parts: Vec<(f64, f64, f64, f64)> = breaks
        .windows(2)
        .map(|w| {
            let (v, e) = gk15(f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    for _ in 0..4000 {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= rel_tol * total.abs() || err < 1e-300 {
            break;
        }
        let worst = (0..parts.len())
            .max_by(|&i, &j| parts[i].3.total_cmp(&parts[j].3))
            .expect("non-empty");
        let (a, b, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (a + b);
        let (v1, e1) = gk15(f, a, mid);
        let (v2, e2) = gk15(f, mid, b);
        parts.push((a, mid, v1, e1));
        parts.push((mid, b, v2, e2));
    }
    parts.iter().map(|p| p.2).sum()
}

/// `∫ f` over the real line via `x = center + scale · t / (1 - t²)`, with a
/// break at `x = center`.
pub fn integrate_line(f: &dyn Fn(f64) -> f64, center: f64, scale: f64, rel_tol: f64) -> f64 {
    let g = |t: f64| {
        let d = 1.0 - t * t;
        if d <= 0.0 {
            return 0.0;
        }
        let x = center + scale * t / d;
        let v = f(x);
        if v == 0.0 {
            0.0
        } else {
            v * scale * (1.0 + t * t) / (d * d)
        }
    };
    integrate_pieces(&g, &[-1.0, 0.0, 1.0], rel_tol)
}

/// Log of `∫ N(b; 0, γ I_r) |bᵀ w|^{T_m} exp(-½ bᵀ (S - γ⁻¹ I) b) db` by
/// nested adaptive quadrature, for `r ≤ 3`.
pub fn pattern_log_marginal_quadrature(s: &DMatrix<f64>, w: &[f64], gamma: f64, t_m: usize) -> f64 {
    let r = s.nrows();
    assert!((1..=3).contains(&r), "quadrature oracle supports r ≤ 3");
    let w = DVector::from_column_slice(w);
    let w_norm = w.norm();
    let mut v = w.clone();
    v[0] += if w[0] >= 0.0 { w_norm } else { -w_norm };
    let q = if v.norm_squared() > 0.0 {
        DMatrix::identity(r, r) - (&v * v.transpose()) * (2.0 / v.norm_squared())
    } else {
        DMatrix::identity(r, r)
    };
    let sr = &q * s * &q;
    let t = t_m as f64;
    // conditional moments of z_j given z_0..z_{j-1}
    let mut coef: Vec<Vec<f64>> = Vec::new();
    let mut sd = Vec::new();
    for j in 0..r {
        let rest = r - j;
        let srr = sr.view((j, j), (rest, rest)).into_owned();
        let inv = srr.try_inverse().expect("positive definite");
        sd.push(inv[(0, 0)].sqrt());
        let srp = sr.view((j, 0), (rest, j)).into_owned();
        let c = -(&inv * srp);
        coef.push(c.row(0).iter().copied().collect());
    }
    let s_eff = 1.0 / sd[0].powi(2);
    let offset = if t_m > 0 {
        0.5 * t * (t / s_eff).ln() - 0.5 * t
    } else {
        0.0
    };
    let log_kernel = |z: &[f64]| -> f64 {
        let mut quad = 0.0;
        for i in 0..r {
            for j in 0..r {
                quad += z[i] * sr[(i, j)] * z[j];
            }
        }
        let lead = if t_m > 0 { t * z[0].abs().ln() } else { 0.0 };
        lead - 0.5 * quad - offset
    };
    let tol = 1e-10;
    let inner = 1e-7;
    let value = match r {
        1 => integrate_line(&|z0| log_kernel(&[z0]).exp(), 0.0, (t.max(1.0) / s_eff).sqrt(), tol),
        2 => integrate_line(
            &|z0| {
                let m1 = coef[1][0] * z0;
                integrate_line(&|z1| log_kernel(&[z0, z1]).exp(), m1, sd[1], inner)
            },
            0.0,
            (t.max(1.0) / s_eff).sqrt(),
            tol,
        ),
        _ => integrate_line(
            &|z0| {
                let m1 = coef[1][0] * z0;
                integrate_line(
                    &|z1| {
                        let m2 = coef[2][0] * z0 + coef[2][1] * z1;
                        integrate_line(&|z2| log_kernel(&[z0, z1, z2]).exp(), m2, sd[2], inner)
                    },
                    m1,
                    sd[1],
                    inner,
                )
            },
            0.0,
            (t.max(1.0) / s_eff).sqrt(),
            tol,
        ),
    };
    -0.5 * r as f64 * (LN_2PI + gamma.ln()) + t * w_norm.ln() + offset + value.ln()
}

/// Random structural-row instance: `(S, w, γ, T_m)` with `r ≤ 3` and
/// `T_m ≤ 20`.
pub fn random_pattern_instance<R: Rng + ?Sized>(rng: &mut R) -> (DMatrix<f64>, Vec<f64>, f64, usize) {
    let r = rng.random_range(1..=3);
    let t_m = rng.random_range(0..=20);
    let gamma = (rng.random_range(-1.5..1.5f64)).exp();
    let x = DMatrix::from_fn(t_m.max(1), r, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut s = x.transpose() * &x * rng.random_range(0.2..2.0);
    for i in 0..r {
        s[(i, i)] += 1.0 / gamma;
    }
    let w: Vec<f64> = (0..r).map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0).collect();
    (s, w, gamma, t_m)
}

/// Largest absolute log-space gap between the closed-form pattern marginal
/// and quadrature over `instances` random cases.
pub fn pattern_marginal_check<R: Rng + ?Sized>(instances: usize, rng: &mut R) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (s, w, gamma, t_m) = random_pattern_instance(rng);
        let closed = pattern_log_marginal(&s, &w, gamma, t_m)?;
        let quad = pattern_log_marginal_quadrature(&s, &w, gamma, t_m);
        worst = worst.max((closed - quad).abs());
    }
    Ok(worst)
}

/// Exact regime-path quantities by enumerating all `M^T` paths.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnumeration {
    pub filtered: DMatrix<f64>,
    pub smoothed: DMatrix<f64>,
    pub log_marginal: f64,
    /// Posterior probability of each path, indexed in base `M` with `s_1`
    /// as the most significant digit.
    pub path_probabilities: Vec<f64>,
}

pub fn path_index(path: &[usize], m: usize) -> usize {
    path.iter().fold(0, |acc, &s| acc * m + s)
}

pub fn enumerate_paths(loglik: &DMatrix<f64>, p: &DMatrix<f64>, pi0: &[f64]) -> PathEnumeration {
    let (t_len, m) = loglik.shape();
    let count = m.pow(t_len as u32);
    let mut prefix_mass = vec![DMatrix::<f64>::zeros(1, m); t_len];
    let mut log_joint = Vec::with_capacity(count);
    let mut path = vec![0usize; t_len];
    for idx in 0..count {
        let mut rem = idx;
        for t in (0..t_len).rev() {
            path[t] = rem % m;
            rem /= m;
        }
        let mut lp = 0.0;
        for t in 0..t_len {
            lp += if t == 0 {
                pi0[path[0]].ln()
            } else {
                p[(path[t - 1], path[t])].ln()
            };
            lp += loglik[(t, path[t])];
            // every prefix appears M^(T-1-t) times; the factor cancels on normalization
            prefix_mass[t][(0, path[t])] += lp.exp();
        }
        log_joint.push(lp);
    }
    let max = log_joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = log_joint.iter().map(|l| (l - max).exp()).sum();
    let log_marginal = max + total.ln();
    let path_probabilities: Vec<f64> = log_joint.iter().map(|l| (l - log_marginal).exp()).collect();
    let mut smoothed = DMatrix::zeros(t_len, m);
    for (idx, prob) in path_probabilities.iter().enumerate() {
        let mut rem = idx;
        for t in (0..t_len).rev() {
            smoothed[(t, rem % m)] += prob;
            rem /= m;
        }
    }
    let mut filtered = DMatrix::zeros(t_len, m);
    for t in 0..t_len {
        let row = &prefix_mass[t];
        let total = row.sum();
        for j in 0..m {
            filtered[(t, j)] = row[(0, j)] / total;
        }
    }
    PathEnumeration {
        filtered,
        smoothed,
        log_marginal,
        path_probabilities,
    }
}

/// Errors of the forward filter, smoother and backward sampler against
/// enumeration on a random problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FfbsCheck {
    pub filtered: f64,
    pub smoothed: f64,
    pub log_marginal: f64,
    /// Largest gap between empirical and exact marginal `Pr(s_t = m)`.
    pub marginal_frequency: f64,
    /// Largest gap between empirical and exact path probabilities.
    pub path_frequency: f64,
}

pub fn ffbs_check<R: Rng + ?Sized>(t_len: usize, m: usize, draws: usize, rng: &mut R) -> Result<FfbsCheck> {
    let loglik = DMatrix::from_fn(t_len, m, |_, _| rng.random_range(-2.0..0.0));
    let mut p = DMatrix::zeros(m, m);
    for i in 0..m {
        let alpha: Vec<f64> = (0..m).map(|j| if i == j { 4.0 } else { 1.0 }).collect();
        let row = sample_dirichlet(&alpha, rng)?;
        for j in 0..m {
            p[(i, j)] = row[j];
        }
    }
    let pi0 = sample_dirichlet(&vec![2.0; m], rng)?;
    let exact = enumerate_paths(&loglik, &p, &pi0);
    let filter = forward_filter(&loglik, &p, &pi0)?;
    let smoothed = smooth(&filter, &p);
    let mut freq = DMatrix::zeros(t_len, m);
    let mut path_freq = vec![0.0; exact.path_probabilities.len()];
    for _ in 0..draws {
        let path = backward_sample(&filter.filtered, &p, rng);
        for (t, &s) in path.iter().enumerate() {
            freq[(t, s)] += 1.0;
        }
        path_freq[path_index(&path, m)] += 1.0;
    }
    freq /= draws as f64;
    Ok(FfbsCheck {
        filtered: (&filter.filtered - &exact.filtered).amax(),
        smoothed: (&smoothed - &exact.smoothed).amax(),
        log_marginal: (filter.log_marginal - exact.log_marginal).abs(),
        marginal_frequency: (&freq - &exact.smoothed).amax(),
        path_frequency: path_freq
            .iter()
            .zip(&exact.path_probabilities)
            .map(|(f, e)| (f / draws as f64 - e).abs())
            .fold(0.0, f64::max),
    })
}

/// One-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(samples: &[f64], cdf: &dyn Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Asymptotic p-value of the Kolmogorov distribution with the
/// Stephens small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, value: f64, threshold: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed,
            value,
            threshold: threshold.into(),
        }
    }
}

/// KS p-values of the distribution samplers against their CDFs.
pub fn distribution_checks<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    let mut run = |name: &str, xs: Vec<f64>, cdf: &dyn Fn(f64) -> f64| {
        let d = ks_statistic(&xs, cdf);
        out.push((name.to_string(), ks_p_value(d, xs.len())));
    };

    let (shape, scale) = (2.5, 0.7);
    let xs = (0..n)
        .map(|_| sample_gamma(shape, scale, rng))
        .collect::<Result<Vec<_>>>()?;
    let g = GammaDist::new(shape, 1.0 / scale).expect("valid gamma");
    run("gamma", xs, &|x| g.cdf(x));

    let (s, nu) = (3.0, 5.0);
    let xs = (0..n).map(|_| sample_ig2(s, nu, rng)).collect::<Result<Vec<_>>>()?;
    let chi = ChiSquared::new(nu).expect("valid chi-squared");
    run("ig2", xs, &|x| 1.0 - chi.cdf(s / x));

    let (lambda, chi_p, psi) = (-0.7, 2.0, 3.0);
    let xs = (0..n)
        .map(|_| sample_gig(lambda, chi_p, psi, rng))
        .collect::<Result<Vec<_>>>()?;
    let kernel = |x: f64| {
        if x <= 0.0 {
            0.0
        } else {
            ((lambda - 1.0) * x.ln() - 0.5 * (chi_p / x + psi * x)).exp()
        }
    };
    let norm = integrate_pieces(&kernel, &[0.0, 1.0, 5.0, 50.0], 1e-12);
    run("gig", xs, &|x| {
        if x <= 0.0 {
            0.0
        } else {
            integrate(&kernel, 0.0, x, 1e-10) / norm
        }
    });

    let (mean, var, lo, hi) = (0.3, 2.0, -1.0, 0.5);
    let xs = (0..n)
        .map(|_| sample_truncated_normal(mean, var, lo, hi, rng))
        .collect::<Result<Vec<_>>>()?;
    let z = Normal::new(mean, var.sqrt()).expect("valid normal");
    let (fa, fb) = (z.cdf(lo), z.cdf(hi));
    run("truncated-normal", xs, &|x| {
        ((z.cdf(x) - fa) / (fb - fa)).clamp(0.0, 1.0)
    });

    let tail_lo = 3.5;
    let xs = (0..n)
        .map(|_| sample_truncated_normal(0.0, 1.0, tail_lo, f64::INFINITY, rng))
        .collect::<Result<Vec<_>>>()?;
    let std = Normal::new(0.0, 1.0).expect("valid normal");
    let tail_mass = std.sf(tail_lo);
    run("truncated-normal-tail", xs, &|x| 1.0 - std.sf(x) / tail_mass);

    let alpha = [1.5, 2.0, 0.7];
    let xs = (0..n)
        .map(|_| sample_dirichlet(&alpha, rng).map(|v| v[0]))
        .collect::<Result<Vec<_>>>()?;
    let beta = Beta::new(alpha[0], alpha[1] + alpha[2]).expect("valid beta");
    run("dirichlet-marginal", xs, &|x| beta.cdf(x));

    // |b| √S for r = 1: its square is Gamma((T + 1) / 2, scale 2)
    let (s1, t_m) = (2.3, 7usize);
    let sm = DMatrix::from_element(1, 1, s1);
    let xs = (0..n)
        .map(|_| draw_row_coefficients(&sm, &[1.3], t_m, rng).map(|b| b[0].abs() * s1.sqrt()))
        .collect::<Result<Vec<_>>>()?;
    let chi_row = ChiSquared::new(t_m as f64 + 1.0).expect("valid chi-squared");
    run("row-coefficient", xs, &|x| chi_row.cdf(x * x));
    Ok(out)
}

/// Monte Carlo estimate of the prior density of `ω` at zero:
/// the sample mean of `(2π σ²)^{-1/2}` over `σ² ~ Gamma(shape, scale)`.
pub fn omega_density_monte_carlo<R: Rng + ?Sized>(shape: f64, scale: f64, n: usize, rng: &mut R) -> Result<f64> {
    let mut sum = 0.0;
    for _ in 0..n {
        let v = sample_gamma(shape, scale, rng)?;
        sum += (-0.5 * (LN_2PI + v.ln())).exp();
    }
    Ok(sum / n as f64)
}

/// Runs the oracle suite. `fast` shrinks every experiment.
pub fn run_selfcheck(fast: bool, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = chain_rng(seed, 0);
    let mut out = Vec::new();

    let worst = pattern_marginal_check(if fast { 10 } else { 50 }, &mut rng)?;
    out.push(CheckResult::new(
        "pattern marginal vs quadrature",
        worst < 1e-6,
        worst,
        "< 1e-6",
    ));

    let ffbs = ffbs_check(8, 2, 10_000, &mut rng)?;
    let exact = ffbs.filtered.max(ffbs.smoothed).max(ffbs.log_marginal);
    out.push(CheckResult::new(
        "ffbs filter/smoother vs enumeration",
        exact < 1e-10,
        exact,
        "< 1e-10",
    ));
    let freq = ffbs.marginal_frequency.max(ffbs.path_frequency);
    out.push(CheckResult::new(
        "ffbs backward-sample frequencies",
        freq < 0.01,
        freq,
        "< 0.01",
    ));

    for (name, p) in distribution_checks(if fast { 4_000 } else { 20_000 }, &mut rng)? {
        out.push(CheckResult::new(&format!("ks {name}"), p > 1e-3, p, "p > 0.001"));
    }

    let exact = omega_prior_density_at_zero(1.0, 1.0)?;
    let mc = omega_density_monte_carlo(1.0, 1.0, if fast { 1_000_000 } else { 10_000_000 }, &mut rng)?;
    let tol = if fast { 3e-3 } else { 1e-3 };
    out.push(CheckResult::new(
        "omega prior density at zero vs Monte Carlo",
        (exact - mc).abs() < tol,
        (exact - mc).abs(),
        format!("< {tol}"),
    ));

    let settings = if fast {
        GewekeSettings {
            iterations: 3_000,
            ..GewekeSettings::reference()
        }
    } else {
        GewekeSettings::reference()
    };
    let report = geweke_joint_test(&geweke_reference_config(), settings, SweepOptions::default(), &mut rng)?;
    let z = report.max_abs_z();
    out.push(CheckResult::new("geweke joint-distribution max |z|", z < 4.0, z, "< 4"));
    Ok(out)
}
