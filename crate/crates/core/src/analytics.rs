//! Posterior post-processing of stored draws.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::inverse;
use crate::model::Dataset;
use crate::priors::omega_prior_density_at_zero;
use crate::simulator::companion_matrix;
use crate::store::{DrawStore, StoredDraw};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    None,
    /// Flip each structural row so its diagonal element is positive.
    SignDiag,
    /// Relabel regimes per draw to match the reference regime path.
    Labels,
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "sign-diag" => Ok(Normalization::SignDiag),
            "labels" => Ok(Normalization::Labels),
            other => Err(Error::Config(format!("unknown normalization {other:?}"))),
        }
    }
}

impl std::fmt::Display for Normalization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Normalization::None => "none",
            Normalization::SignDiag => "sign-diag",
            Normalization::Labels => "labels",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NormalizationReport {
    /// `(draw, regime, row)` triples whose diagonal element is zero.
    pub zero_diagonal: Vec<(usize, usize, usize)>,
    /// Draws whose labels were permuted.
    pub relabeled: usize,
}

/// Applies a normalization policy to every draw.
pub fn normalize_draws(store: &DrawStore, policy: Normalization) -> Result<(DrawStore, NormalizationReport)> {
    let mut report = NormalizationReport::default();
    let draws: Vec<StoredDraw> = match policy {
        Normalization::None => store.draws().collect(),
        Normalization::SignDiag => store
            .draws()
            .enumerate()
            .map(|(i, mut d)| {
                for (m, bm) in d.b.iter_mut().enumerate() {
                    for n in 0..bm.nrows() {
                        let diag = bm[(n, n)];
                        if diag == 0.0 {
                            report.zero_diagonal.push((i, m, n));
                        } else if diag < 0.0 {
                            let mut row = bm.row_mut(n);
                            row.neg_mut();
                        }
                    }
                }
                d
            })
            .collect(),
        Normalization::Labels => {
            let m = store.manifest.regimes;
            if m == 1 || store.is_empty() {
                store.draws().collect()
            } else {
                let reference = reference_draw(store);
                let ref_s = store.draw(reference).s;
                let perms = permutations(m)?;
                store
                    .draws()
                    .map(|d| {
                        let best = perms
                            .iter()
                            .min_by_key(|perm| hamming(&d.s, &ref_s, perm))
                            .expect("at least one permutation");
                        if best.iter().enumerate().any(|(i, &p)| i != p) {
                            report.relabeled += 1;
                        }
                        relabel(&d, best)
                    })
                    .collect()
            }
        }
    };
    let mut out = store.with_draws(draws)?;
    if policy != Normalization::None {
        out.manifest.normalization.push(policy.to_string());
    }
    Ok((out, report))
}

/// Index of the draw with the highest stored log-likelihood.
pub fn reference_draw(store: &DrawStore) -> usize {
    let ll = store.block("loglik").unwrap_or(&[]);
    ll.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &v)| if v > best.1 { (i, v) } else { best },
        )
        .0
}

fn hamming(s: &[usize], reference: &[usize], perm: &[usize]) -> usize {
    s.iter().zip(reference).filter(|(a, b)| perm[**a] != **b).count()
}

/// All permutations of `0..m`, for `m ≤ 8`.
pub fn permutations(m: usize) -> Result<Vec<Vec<usize>>> {
    if m > 8 {
        return Err(Error::Config("label normalization supports at most 8 regimes".into()));
    }
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..m).collect();
    heap_permute(m, &mut current, &mut out);
    out.sort();
    Ok(out)
}

fn heap_permute(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if k <= 1 {
        out.push(a.clone());
        return;
    }
    for i in 0..k {
        heap_permute(k - 1, a, out);
        if k.is_multiple_of(2) {
            a.swap(i, k - 1);
        } else {
            a.swap(0, k - 1);
        }
    }
}

/// Renames regime `m` to `perm[m]` throughout a draw.
pub fn relabel(d: &StoredDraw, perm: &[usize]) -> StoredDraw {
    let m = perm.len();
    let mut out = d.clone();
    for old in 0..m {
        let new = perm[old];
        out.b[new] = d.b[old].clone();
        out.pi0[new] = d.pi0[old];
        out.filtered_last[new] = d.filtered_last[old];
        for n in 0..d.kappa.len() {
            out.kappa[n][new] = d.kappa[n][old];
        }
        out.omega.set_column(new, &d.omega.column(old));
        out.omega_mean.set_column(new, &d.omega_mean.column(old));
        out.omega_var.set_column(new, &d.omega_var.column(old));
        for old2 in 0..m {
            out.p[(new, perm[old2])] = d.p[(old, old2)];
        }
    }
    out.s = d.s.iter().map(|&s| perm[s]).collect();
    out
}

/// Fraction of draws selecting each pattern per regime for equation `n`
/// (zero-based), `M × K`.
pub fn tvi_probabilities(store: &DrawStore, n: usize) -> Result<DMatrix<f64>> {
    let man = &store.manifest;
    if n >= man.n_vars {
        return Err(Error::dimension(format!("equation {} out of range", n + 1)));
    }
    let k = man.pattern_set()?.equation(n).len();
    let m = man.regimes;
    let mut counts = DMatrix::zeros(m, k);
    let kappa = store.block("kappa").expect("kappa block");
    let width = store.block_width("kappa").expect("kappa block");
    for i in 0..store.len() {
        for r in 0..m {
            let idx = kappa[i * width + n * m + r] as usize;
            counts[(r, idx)] += 1.0;
        }
    }
    if store.is_empty() {
        return Err(Error::Domain("store has no draws".into()));
    }
    Ok(counts / store.len() as f64)
}

/// Posterior mean of the regime indicators, `T × M`.
pub fn regime_probabilities(store: &DrawStore) -> Result<DMatrix<f64>> {
    let man = &store.manifest;
    if store.is_empty() {
        return Err(Error::Domain("store has no draws".into()));
    }
    let t_len = man.t_len;
    let mut out = DMatrix::zeros(t_len, man.regimes);
    let s = store.block("s").expect("s block");
    for i in 0..store.len() {
        for t in 0..t_len {
            out[(t, s[i * t_len + t] as usize)] += 1.0;
        }
    }
    Ok(out / store.len() as f64)
}

/// Fraction of draws in which the selected pattern differs between some pair
/// of regimes in at least one equation with more than one pattern.
pub fn joint_tvi_change_probability(store: &DrawStore) -> Result<f64> {
    let tvi = store.manifest.pattern_set()?.tvi_equations();
    if store.is_empty() {
        return Err(Error::Domain("store has no draws".into()));
    }
    let changed = store
        .draws()
        .filter(|d| tvi.iter().any(|&n| d.kappa[n].iter().any(|&k| k != d.kappa[n][0])))
        .count();
    Ok(changed as f64 / store.len() as f64)
}

/// Scales the shock so that the impact response of `variable` equals
/// `value`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpulseNormalization {
    pub variable: usize,
    pub value: f64,
}

/// Responses to structural shock `shock` in regime `b`, `(H + 1) × N`:
/// `Θ_0 = B⁻¹`, `Θ_h = J Fʰ Jᵀ B⁻¹`.
pub fn impulse_responses(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    lags: usize,
    horizon: usize,
    shock: usize,
    normalization: Option<ImpulseNormalization>,
) -> Result<DMatrix<f64>> {
    let n = b.nrows();
    if shock >= n {
        return Err(Error::dimension(format!("shock {} out of range", shock + 1)));
    }
    let binv = inverse(b)?;
    let mut impact: DVector<f64> = binv.column(shock).into_owned();
    if let Some(norm) = normalization {
        if norm.variable >= n {
            return Err(Error::dimension("normalization variable out of range"));
        }
        let base = impact[norm.variable];
        if base == 0.0 {
            return Err(Error::Domain(
                "impact response of the normalization variable is zero".into(),
            ));
        }
        impact *= norm.value / base;
        impact[norm.variable] = norm.value;
    }
    let f = companion_matrix(a, n, lags);
    let np = n * lags;
    let mut out = DMatrix::zeros(horizon + 1, n);
    let mut state = DVector::zeros(np);
    state.rows_mut(0, n).copy_from(&impact);
    for h in 0..=horizon {
        out.row_mut(h).copy_from(&state.rows(0, n).transpose());
        if h < horizon {
            state = &f * state;
        }
    }
    Ok(out)
}

/// Running sums of the responses of the flagged variables.
pub fn cumulate(responses: &DMatrix<f64>, variables: &[usize]) -> DMatrix<f64> {
    let mut out = responses.clone();
    for &j in variables {
        for h in 1..out.nrows() {
            out[(h, j)] += out[(h - 1, j)];
        }
    }
    out
}

/// Log Savage-Dickey ratio for `ω_n(m) = 0`: the log of the draw-averaged
/// conditional posterior density at zero minus the log prior density at
/// zero. Negative values favor heteroskedasticity.
pub fn heteroskedasticity_sddr(store: &DrawStore, n: usize, m: usize, shape: f64, scale: f64) -> Result<f64> {
    let man = &store.manifest;
    if n >= man.n_vars || m >= man.regimes {
        return Err(Error::dimension("equation or regime out of range"));
    }
    let (Some(mean), Some(var)) = (store.block("omega_mean"), store.block("omega_var")) else {
        return Err(Error::Domain("store lacks the ω conditional moments".into()));
    };
    if store.is_empty() {
        return Err(Error::Domain("store has no draws".into()));
    }
    let width = man.regimes;
    let idx = |i: usize| i * man.n_vars * width + n * width + m;
    let mut logs = Vec::with_capacity(store.len());
    for i in 0..store.len() {
        let mu = mean[idx(i)];
        let v = var[idx(i)];
        if !(v > 0.0) {
            return Err(Error::Domain(
                "missing ω conditional moments (was the chain run with ω fixed?)".into(),
            ));
        }
        logs.push(-0.5 * (LN_2PI + v.ln()) - 0.5 * mu * mu / v);
    }
    let log_post = log_mean_exp(&logs);
    Ok(log_post - omega_prior_density_at_zero(shape, scale)?.ln())
}

pub(crate) fn log_mean_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + (sum / values.len() as f64).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    /// Equal-tailed interval with the requested mass.
    pub lower: f64,
    pub upper: f64,
    /// Shortest interval containing the requested mass.
    pub hdi_lower: f64,
    pub hdi_upper: f64,
}

/// Quantile by linear interpolation of the order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median, equal-tailed interval and HDI with probability `mass`.
pub fn summarize(values: &[f64], mass: f64) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Domain("cannot summarize an empty sample".into()));
    }
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::Domain("interval mass must lie in (0, 1)".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let tail = 0.5 * (1.0 - mass);
    let width = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let (mut lo, mut hi) = (sorted[0], sorted[n - 1]);
    let mut best = f64::INFINITY;
    for i in 0..=(n - width) {
        let w = sorted[i + width - 1] - sorted[i];
        if w < best {
            best = w;
            lo = sorted[i];
            hi = sorted[i + width - 1];
        }
    }
    Ok(Summary {
        mean: values.iter().sum::<f64>() / n as f64,
        median: quantile(&sorted, 0.5),
        lower: quantile(&sorted, tail),
        upper: quantile(&sorted, 1.0 - tail),
        hdi_lower: lo,
        hdi_upper: hi,
    })
}

/// Pointwise summaries of impulse responses over all draws.
pub struct IrfSummary {
    /// `[h][variable]`.
    pub bands: Vec<Vec<Summary>>,
}

#[allow(clippy::too_many_arguments)]
pub fn impulse_response_bands(
    store: &DrawStore,
    regime: usize,
    horizon: usize,
    shock: usize,
    normalization: Option<ImpulseNormalization>,
    cumulated: &[usize],
    mass: f64,
) -> Result<IrfSummary> {
    let man = &store.manifest;
    if regime >= man.regimes {
        return Err(Error::dimension("regime out of range"));
    }
    let n = man.n_vars;
    let mut all: Vec<Vec<Vec<f64>>> = vec![vec![Vec::with_capacity(store.len()); n]; horizon + 1];
    for d in store.draws() {
        let irf = impulse_responses(&d.a, &d.b[regime], man.lags, horizon, shock, normalization)?;
        let irf = cumulate(&irf, cumulated);
        for h in 0..=horizon {
            for j in 0..n {
                all[h][j].push(irf[(h, j)]);
            }
        }
    }
    let bands = all
        .iter()
        .map(|row| row.iter().map(|v| summarize(v, mass)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(IrfSummary { bands })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Assignment {
    /// Each period goes to its most probable regime.
    Hard,
    /// Every period contributes to each regime with its probability.
    Weighted,
}

/// Sample moments of the data within one regime; `None` when the regime has
/// no observations.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeMoments {
    pub weight: f64,
    pub mean: Option<DVector<f64>>,
    pub sd: Option<DVector<f64>>,
    pub covariance: Option<DMatrix<f64>>,
}

pub fn regime_moments(
    dataset: &Dataset,
    probabilities: &DMatrix<f64>,
    assignment: Assignment,
) -> Result<Vec<RegimeMoments>> {
    let (t_len, m) = probabilities.shape();
    if t_len != dataset.len() {
        return Err(Error::dimension("regime probabilities and dataset differ in length"));
    }
    let n = dataset.n_vars();
    let weights: DMatrix<f64> = match assignment {
        Assignment::Weighted => probabilities.clone(),
        Assignment::Hard => {
            let mut w = DMatrix::zeros(t_len, m);
            for t in 0..t_len {
                let row = probabilities.row(t);
                let best = (0..m).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                w[(t, best)] = 1.0;
            }
            w
        }
    };
    let mut out = Vec::with_capacity(m);
    for r in 0..m {
        let w = weights.column(r);
        let total: f64 = w.sum();
        let total_sq: f64 = w.iter().map(|v| v * v).sum();
        let denom = total - total_sq / total.max(f64::MIN_POSITIVE);
        if total <= 0.0 || denom <= 0.0 {
            out.push(RegimeMoments {
                weight: total,
                mean: None,
                sd: None,
                covariance: None,
            });
            continue;
        }
        let mut mean = DVector::zeros(n);
        for t in 0..t_len {
            mean.axpy(w[t], &dataset.y.row(t).transpose(), 1.0);
        }
        mean /= total;
        let mut cov = DMatrix::zeros(n, n);
        for t in 0..t_len {
            let e = dataset.y.row(t).transpose() - &mean;
            cov.ger(w[t], &e, &e, 1.0);
        }
        cov /= denom;
        let sd = cov.diagonal().map(f64::sqrt);
        out.push(RegimeMoments {
            weight: total,
            mean: Some(mean),
            sd: Some(sd),
            covariance: Some(cov),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_count() {
        assert_eq!(permutations(1).unwrap(), vec![vec![0]]);
        assert_eq!(permutations(3).unwrap().len(), 6);
        assert!(permutations(9).is_err());
    }

    #[test]
    fn no_dynamics() {
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.0]);
        let a = DMatrix::zeros(2, 3);
        let irf = impulse_responses(&a, &b, 1, 4, 0, None).unwrap();
        let binv = inverse(&b).unwrap();
        assert_eq!(irf.row(0).transpose(), binv.column(0).into_owned());
        assert!(irf.rows(1, 4).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_ar1() {
        let a = DMatrix::from_row_slice(1, 2, &[0.5, 0.0]);
        let b = DMatrix::identity(1, 1);
        let irf = impulse_responses(&a, &b, 1, 6, 0, None).unwrap();
        for h in 0..=6 {
            assert!((irf[(h, 0)] - 0.5f64.powi(h as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn normalization_sets_impact_exactly() {
        let a = DMatrix::from_row_slice(2, 3, &[0.3, 0.1, 0.0, 0.2, 0.5, 0.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.3, -0.7, 0.4, 2.1]);
        let norm = ImpulseNormalization {
            variable: 1,
            value: -0.25,
        };
        let irf = impulse_responses(&a, &b, 1, 3, 1, Some(norm)).unwrap();
        assert_eq!(irf[(0, 1)], -0.25);
        let zero = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(impulse_responses(&a, &zero, 1, 3, 0, Some(norm)).is_err());
    }

    #[test]
    fn constant_summary() {
        let s = summarize(&[2.5; 100], 0.68).unwrap();
        assert_eq!(s.median, 2.5);
        assert_eq!(s.hdi_lower, s.hdi_upper);
        assert_eq!(s.lower, s.upper);
    }

    #[test]
    fn weighted_moments_uniform_probabilities() {
        let series = DMatrix::from_fn(21, 2, |t, j| ((t * 7 + j * 3) % 5) as f64 + 0.1 * t as f64);
        let ds = Dataset::from_series_unchecked(
            vec!["a".into(), "b".into()],
            &series,
            &DMatrix::from_element(21, 1, 1.0),
            1,
        )
        .unwrap();
        let probs = DMatrix::from_element(20, 2, 0.5);
        let full = regime_moments(&ds, &DMatrix::from_element(20, 1, 1.0), Assignment::Hard).unwrap();
        let split = regime_moments(&ds, &probs, Assignment::Weighted).unwrap();
        for r in &split {
            let diff = r.covariance.as_ref().unwrap() - full[0].covariance.as_ref().unwrap();
            assert!(diff.amax() < 1e-12);
            assert!((r.mean.as_ref().unwrap() - full[0].mean.as_ref().unwrap()).amax() < 1e-12);
        }
        let hard = regime_moments(
            &ds,
            &DMatrix::from_fn(20, 2, |_, j| if j == 0 { 1.0 } else { 0.0 }),
            Assignment::Hard,
        )
        .unwrap();
        assert!(hard[1].mean.is_none());
    }
}
