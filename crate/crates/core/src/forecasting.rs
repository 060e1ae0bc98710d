//! Predictive simulation and pseudo-out-of-sample evaluation.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analytics::log_mean_exp;
use crate::error::{Error, Result};
use crate::gibbs::run_chain;
use crate::linalg::{inverse, log_abs_det};
use crate::model::{Dataset, ModelConfig};
use crate::store::{DrawStore, StoredDraw};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Which predictive density is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreTarget {
    /// Joint density of all variables.
    #[default]
    Joint,
    /// Marginal density of one variable (zero-based).
    Marginal(usize),
}

/// One simulated future.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictivePath {
    /// `H × N`.
    pub y: DMatrix<f64>,
    pub s: Vec<usize>,
    /// `N × H`.
    pub h: DMatrix<f64>,
}

fn categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (j, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return j;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn first_step_probabilities(draw: &StoredDraw) -> Vec<f64> {
    let m = draw.n_regimes();
    (0..m)
        .map(|j| (0..m).map(|i| draw.filtered_last[i] * draw.p[(i, j)]).sum())
        .collect()
}

fn future_deterministic(dataset: &Dataset, future_d: Option<&DMatrix<f64>>, step: usize) -> Result<Vec<f64>> {
    match future_d {
        Some(d) => {
            if step >= d.nrows() || d.ncols() != dataset.d_dim() {
                return Err(Error::dimension("future deterministic terms do not cover the horizon"));
            }
            Ok(d.row(step).iter().copied().collect())
        }
        None if dataset.d_dim() == 1 => Ok(vec![1.0]),
        None => Err(Error::dimension("future deterministic terms are required when d > 1")),
    }
}

struct Walker<'a> {
    draw: &'a StoredDraw,
    dataset: &'a Dataset,
    history: DMatrix<f64>,
    s: Option<usize>,
    h: Vec<f64>,
    b_inv: Vec<DMatrix<f64>>,
}

impl<'a> Walker<'a> {
    fn new(draw: &'a StoredDraw, dataset: &'a Dataset) -> Result<Self> {
        let b_inv = draw.b.iter().map(inverse).collect::<Result<Vec<_>>>()?;
        Ok(Walker {
            draw,
            dataset,
            history: dataset.full_series(),
            s: None,
            h: draw.h_last.clone(),
            b_inv,
        })
    }

    fn regime_probabilities(&self) -> Vec<f64> {
        match self.s {
            None => first_step_probabilities(self.draw),
            Some(prev) => self.draw.p.row(prev).iter().copied().collect(),
        }
    }

    fn mean(&self, d_next: &[f64]) -> DVector<f64> {
        let x = DVector::from_vec(self.dataset.next_design_row(&self.history, d_next));
        &self.draw.a * x
    }

    fn advance_volatility<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for (n, h) in self.h.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *h = self.draw.rho[n] * *h + z;
        }
    }

    fn step<R: Rng + ?Sized>(&mut self, d_next: &[f64], rng: &mut R) -> (DVector<f64>, usize) {
        let probs = self.regime_probabilities();
        let s = categorical(&probs, rng);
        self.advance_volatility(rng);
        let n = self.h.len();
        let u = DVector::from_fn(n, |i, _| {
            let z: f64 = rng.sample(StandardNormal);
            z * (0.5 * self.draw.omega[(i, s)] * self.h[i]).exp()
        });
        let y = self.mean(d_next) + &self.b_inv[s] * u;
        self.push(&y, s);
        (y, s)
    }

    fn push(&mut self, y: &DVector<f64>, s: usize) {
        let rows = self.history.nrows();
        let mut grown = self.history.clone().insert_row(rows, 0.0);
        grown.row_mut(rows).copy_from(&y.transpose());
        self.history = grown;
        self.s = Some(s);
    }
}

/// Simulates `y_{T+1..T+H}` given one posterior draw. `future_d` holds the
/// deterministic terms of the forecast periods; an intercept is assumed when
/// it is `None` and `d = 1`.
pub fn predictive_draws<R: Rng + ?Sized>(
    draw: &StoredDraw,
    dataset: &Dataset,
    horizon: usize,
    future_d: Option<&DMatrix<f64>>,
    rng: &mut R,
) -> Result<PredictivePath> {
    let n = dataset.n_vars();
    let mut walker = Walker::new(draw, dataset)?;
    let mut y = DMatrix::zeros(horizon, n);
    let mut h = DMatrix::zeros(n, horizon);
    let mut s = Vec::with_capacity(horizon);
    for step in 0..horizon {
        let d_next = future_deterministic(dataset, future_d, step)?;
        let (yt, st) = walker.step(&d_next, rng);
        y.row_mut(step).copy_from(&yt.transpose());
        h.set_column(step, &DVector::from_column_slice(&walker.h));
        s.push(st);
    }
    Ok(PredictivePath { y, s, h })
}

/// Log predictive density of `realized` at `T + horizon` for one draw.
/// The terminal regime is integrated out exactly; steps before the terminal
/// one follow a single simulated path.
pub fn log_predictive_density<R: Rng + ?Sized>(
    draw: &StoredDraw,
    dataset: &Dataset,
    horizon: usize,
    future_d: Option<&DMatrix<f64>>,
    realized: &[f64],
    target: ScoreTarget,
    rng: &mut R,
) -> Result<f64> {
    let n = dataset.n_vars();
    if horizon == 0 {
        return Err(Error::Domain("forecast horizon must be at least 1".into()));
    }
    if realized.len() != n {
        return Err(Error::dimension("realized vector does not match N"));
    }
    if let ScoreTarget::Marginal(i) = target {
        if i >= n {
            return Err(Error::dimension("marginal score variable out of range"));
        }
    }
    let mut walker = Walker::new(draw, dataset)?;
    for step in 0..horizon - 1 {
        let d_next = future_deterministic(dataset, future_d, step)?;
        walker.step(&d_next, rng);
    }
    let probs = walker.regime_probabilities();
    walker.advance_volatility(rng);
    let d_next = future_deterministic(dataset, future_d, horizon - 1)?;
    let mu = walker.mean(&d_next);
    let e = DVector::from_column_slice(realized) - mu;
    let mut terms = Vec::with_capacity(probs.len());
    for (j, &pj) in probs.iter().enumerate() {
        if pj <= 0.0 {
            continue;
        }
        let log_var: Vec<f64> = (0..n).map(|i| draw.omega[(i, j)] * walker.h[i]).collect();
        let ld = match target {
            ScoreTarget::Joint => {
                let u = &draw.b[j] * &e;
                let (_, log_det) = log_abs_det(&draw.b[j]);
                log_det
                    + (0..n)
                        .map(|i| -0.5 * (LN_2PI + log_var[i] + u[i] * u[i] * (-log_var[i]).exp()))
                        .sum::<f64>()
            }
            ScoreTarget::Marginal(i) => {
                let binv = &walker.b_inv[j];
                let var: f64 = (0..n).map(|k| binv[(i, k)].powi(2) * log_var[k].exp()).sum();
                -0.5 * (LN_2PI + var.ln() + e[i] * e[i] / var)
            }
        };
        terms.push(pj.ln() + ld);
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln())
}

/// Log of the draw-averaged predictive density from per-draw log densities.
pub fn log_predictive_score(log_densities: &[f64]) -> Result<f64> {
    if log_densities.is_empty() {
        return Err(Error::Domain("log score needs at least one draw".into()));
    }
    let score = log_mean_exp(log_densities);
    if !score.is_finite() {
        return Err(Error::numerical("average predictive density is zero"));
    }
    Ok(score)
}

/// Root-mean-squared error per variable over origins.
pub fn rmsfe(forecasts: &[Vec<f64>], realized: &[Vec<f64>]) -> Result<Vec<f64>> {
    if forecasts.len() != realized.len() || forecasts.is_empty() {
        return Err(Error::dimension("forecasts and realizations are misaligned"));
    }
    let n = forecasts[0].len();
    let mut sse = vec![0.0; n];
    for (f, r) in forecasts.iter().zip(realized) {
        if f.len() != n || r.len() != n {
            return Err(Error::dimension("forecasts and realizations are misaligned"));
        }
        for j in 0..n {
            sse[j] += (f[j] - r[j]).powi(2);
        }
    }
    Ok(sse.into_iter().map(|v| (v / forecasts.len() as f64).sqrt()).collect())
}

/// Log score and posterior-mean point forecast of one origin and horizon.
pub fn evaluate_store<R: Rng + ?Sized>(
    store: &DrawStore,
    dataset: &Dataset,
    horizon: usize,
    future_d: Option<&DMatrix<f64>>,
    realized: &[f64],
    target: ScoreTarget,
    rng: &mut R,
) -> Result<(f64, Vec<f64>)> {
    let n = dataset.n_vars();
    let mut logs = Vec::with_capacity(store.len());
    let mut point = vec![0.0; n];
    for draw in store.draws() {
        logs.push(log_predictive_density(
            &draw, dataset, horizon, future_d, realized, target, rng,
        )?);
        let path = predictive_draws(&draw, dataset, horizon, future_d, rng)?;
        for j in 0..n {
            point[j] += path.y[(horizon - 1, j)];
        }
    }
    let count = store.len().max(1) as f64;
    point.iter_mut().for_each(|v| *v /= count);
    Ok((log_predictive_score(&logs)?, point))
}

/// A model variant entering the rolling comparison.
#[derive(Debug, Clone)]
pub struct ForecastModel {
    pub name: String,
    pub config: ModelConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct ForecastRecord {
    pub model: String,
    /// Effective-sample index of the last estimation observation, one-based.
    pub origin: usize,
    pub origin_label: String,
    pub horizon: usize,
    pub log_score: f64,
    /// Log score minus the benchmark's at the same origin and horizon.
    pub relative_log_score: f64,
    pub point: Vec<f64>,
    pub realized: Vec<f64>,
    pub squared_errors: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ForecastSummary {
    pub model: String,
    pub horizon: usize,
    pub origins: usize,
    pub mean_log_score: f64,
    pub relative_log_score: f64,
    pub rmsfe: Vec<f64>,
    /// RMSFE divided by the benchmark's.
    pub relative_rmsfe: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ForecastReport {
    pub names: Vec<String>,
    pub models: Vec<String>,
    pub records: Vec<ForecastRecord>,
}

impl ForecastReport {
    /// Builds relative metrics from records with the first model as benchmark.
    pub fn new(names: Vec<String>, models: Vec<String>, mut records: Vec<ForecastRecord>) -> Result<Self> {
        let Some(benchmark) = models.first().cloned() else {
            return Err(Error::Config("at least one model is required".into()));
        };
        let lookup: Vec<(usize, usize, f64)> = records
            .iter()
            .filter(|r| r.model == benchmark)
            .map(|r| (r.origin, r.horizon, r.log_score))
            .collect();
        for r in records.iter_mut() {
            let base = lookup
                .iter()
                .find(|(o, h, _)| *o == r.origin && *h == r.horizon)
                .map(|x| x.2)
                .ok_or_else(|| Error::dimension("benchmark lacks a matching origin"))?;
            r.relative_log_score = r.log_score - base;
        }
        Ok(ForecastReport { names, models, records })
    }

    pub fn horizons(&self) -> Vec<usize> {
        let mut h: Vec<usize> = self.records.iter().map(|r| r.horizon).collect();
        h.sort_unstable();
        h.dedup();
        h
    }

    pub fn summary(&self) -> Result<Vec<ForecastSummary>> {
        let mut out = Vec::new();
        let mut bench_rmsfe = Vec::new();
        for model in &self.models {
            for h in self.horizons() {
                let rows: Vec<&ForecastRecord> = self
                    .records
                    .iter()
                    .filter(|r| &r.model == model && r.horizon == h)
                    .collect();
                if rows.is_empty() {
                    continue;
                }
                let count = rows.len() as f64;
                let forecasts: Vec<Vec<f64>> = rows.iter().map(|r| r.point.clone()).collect();
                let realized: Vec<Vec<f64>> = rows.iter().map(|r| r.realized.clone()).collect();
                let r = rmsfe(&forecasts, &realized)?;
                if model == &self.models[0] {
                    bench_rmsfe.push((h, r.clone()));
                }
                let base = &bench_rmsfe
                    .iter()
                    .find(|(bh, _)| *bh == h)
                    .ok_or_else(|| Error::dimension("benchmark lacks a matching horizon"))?
                    .1;
                out.push(ForecastSummary {
                    model: model.clone(),
                    horizon: h,
                    origins: rows.len(),
                    mean_log_score: rows.iter().map(|r| r.log_score).sum::<f64>() / count,
                    relative_log_score: rows.iter().map(|r| r.relative_log_score).sum::<f64>() / count,
                    relative_rmsfe: r.iter().zip(base).map(|(a, b)| a / b).collect(),
                    rmsfe: r,
                });
            }
        }
        Ok(out)
    }

    /// Per-record table: model, origin date, horizon, log score, relative log
    /// score and one squared-error column per variable.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![
            "model".to_string(),
            "origin".into(),
            "horizon".into(),
            "log_score".into(),
            "relative_log_score".into(),
        ];
        header.extend(self.names.iter().map(|n| format!("sq_err_{n}")));
        w.write_record(&header).map_err(csv_error)?;
        for r in &self.records {
            let mut row = vec![
                r.model.clone(),
                r.origin_label.clone(),
                r.horizon.to_string(),
                r.log_score.to_string(),
                r.relative_log_score.to_string(),
            ];
            row.extend(r.squared_errors.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush().map_err(|e| Error::io("writing forecast report", e))?;
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![
            "model".to_string(),
            "horizon".into(),
            "origins".into(),
            "mean_log_score".into(),
            "relative_log_score".into(),
        ];
        header.extend(self.names.iter().map(|n| format!("rmsfe_{n}")));
        header.extend(self.names.iter().map(|n| format!("relative_rmsfe_{n}")));
        w.write_record(&header).map_err(csv_error)?;
        for s in self.summary()? {
            let mut row = vec![
                s.model.clone(),
                s.horizon.to_string(),
                s.origins.to_string(),
                s.mean_log_score.to_string(),
                s.relative_log_score.to_string(),
            ];
            row.extend(s.rmsfe.iter().map(|v| v.to_string()));
            row.extend(s.relative_rmsfe.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush().map_err(|e| Error::io("writing forecast summary", e))?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::io("writing CSV", std::io::Error::other(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RollingSettings {
    /// Number of effective observations used for estimation at each origin.
    pub origins: Vec<usize>,
    pub horizons: Vec<usize>,
    pub target: ScoreTarget,
    /// Replaces the configured draw count at every origin.
    pub draws: Option<usize>,
    pub burnin: Option<usize>,
}

/// Re-estimates every model on data up to each origin and scores the
/// forecasts against the realized values. The first model is the benchmark.
pub fn rolling_evaluation(
    models: &[ForecastModel],
    dataset: &Dataset,
    settings: &RollingSettings,
) -> Result<ForecastReport> {
    if models.is_empty() {
        return Err(Error::Config("at least one model is required".into()));
    }
    if settings.horizons.contains(&0) {
        return Err(Error::Config("forecast horizons must be at least 1".into()));
    }
    let mut records = Vec::new();
    for model in models {
        let mut config = model.config.clone();
        if let Some(d) = settings.draws {
            config.chain.draws = d;
        }
        if let Some(b) = settings.burnin {
            config.chain.burnin = b;
        }
        config.validate()?;
        for (origin_idx, &origin) in settings.origins.iter().enumerate() {
            if origin == 0 || origin > dataset.len() {
                return Err(Error::Config(format!("origin {origin} lies outside the sample")));
            }
            let window = dataset.truncate(origin);
            let store = run_chain(&config, &window, origin_idx as u64)?;
            for &h in &settings.horizons {
                let target_idx = origin + h - 1;
                if target_idx >= dataset.len() {
                    continue;
                }
                let future_d = dataset.d.rows(origin, h).into_owned();
                let realized: Vec<f64> = dataset.y.row(target_idx).iter().copied().collect();
                let mut rng = crate::gibbs::chain_rng(config.chain.seed ^ 0x5eed_f0ca, (origin_idx * 1000 + h) as u64);
                let (score, point) = evaluate_store(
                    &store,
                    &window,
                    h,
                    Some(&future_d),
                    &realized,
                    settings.target,
                    &mut rng,
                )?;
                records.push(ForecastRecord {
                    model: model.name.clone(),
                    origin,
                    origin_label: dataset
                        .dates
                        .get(origin - 1)
                        .cloned()
                        .unwrap_or_else(|| origin.to_string()),
                    horizon: h,
                    log_score: score,
                    relative_log_score: 0.0,
                    squared_errors: point.iter().zip(&realized).map(|(f, r)| (f - r).powi(2)).collect(),
                    point,
                    realized,
                });
            }
        }
    }
    ForecastReport::new(
        dataset.names.clone(),
        models.iter().map(|m| m.name.clone()).collect(),
        records,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_standard_normal() {
        let s = log_predictive_score(&[-0.5 * LN_2PI]).unwrap();
        assert!((s - (-0.91894)).abs() < 1e-5);
        let two = log_predictive_score(&[-0.5 * LN_2PI, -0.5 * LN_2PI]).unwrap();
        assert!((two - s).abs() < 1e-15);
    }

    #[test]
    fn two_component_mixture() {
        let s = log_predictive_score(&[-0.5 * LN_2PI, -0.5 * LN_2PI - 0.5]).unwrap();
        let phi0 = (-0.5 * LN_2PI).exp();
        let phi1 = (-0.5 * LN_2PI - 0.5).exp();
        assert!((s - (0.5 * (phi0 + phi1)).ln()).abs() < 1e-14);
        assert!((s - (-1.13801)).abs() < 1e-5);
    }

    #[test]
    fn zero_density_errors() {
        assert!(log_predictive_score(&[f64::NEG_INFINITY]).is_err());
        assert!(log_predictive_score(&[]).is_err());
    }

    #[test]
    fn rmsfe_examples() {
        let r = rmsfe(&[vec![1.0], vec![2.0]], &[vec![1.0], vec![4.0]]).unwrap();
        assert!((r[0] - 2f64.sqrt()).abs() < 1e-15);
        let z = rmsfe(&[vec![3.0, 1.0]], &[vec![3.0, 1.0]]).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
        assert!(rmsfe(&[vec![1.0]], &[]).is_err());
    }
}
