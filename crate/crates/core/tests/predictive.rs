mod common;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use common::point_draw;
use tvisvar::analytics::summarize;
use tvisvar::forecasting::{predictive_draws, ForecastRecord, ForecastReport};
use tvisvar::gibbs::chain_rng;
use tvisvar::model::Dataset;
use tvisvar::selfcheck::{ks_p_value, ks_statistic};

fn dataset(last: &[f64]) -> Dataset {
    let series = DMatrix::from_row_slice(2, last.len(), &[vec![0.0; last.len()], last.to_vec()].concat());
    Dataset::from_series_unchecked(common::names(last.len()), &series, &DMatrix::from_element(2, 1, 1.0), 1).unwrap()
}

#[test]
fn homoskedastic_predictive_moments_match_the_gaussian_oracle() {
    let a = DMatrix::from_row_slice(2, 3, &[0.6, 0.2, 0.5, -0.1, 0.4, -0.3]);
    let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -0.8, 2.0]);
    let draw = point_draw(
        a.clone(),
        vec![b.clone()],
        DMatrix::zeros(2, 1),
        DMatrix::identity(1, 1),
        vec![1.0],
    );
    let data = dataset(&[1.0, -2.0]);
    let sigma = (b.transpose() * &b).try_inverse().unwrap();
    let a1 = a.columns(0, 2).into_owned();
    let c = a.column(2).into_owned();
    let mean1 = &a1 * DVector::from_vec(vec![1.0, -2.0]) + &c;
    let mean2 = &a1 * &mean1 + &c;
    let cov2 = &a1 * &sigma * a1.transpose() + &sigma;

    let n = 40_000;
    let mut rng = chain_rng(21, 0);
    let paths: Vec<DMatrix<f64>> = (0..n)
        .map(|_| predictive_draws(&draw, &data, 2, None, &mut rng).unwrap().y)
        .collect();
    for (h, mean, cov) in [(0, &mean1, &sigma), (1, &mean2, &cov2)] {
        let rows: Vec<DVector<f64>> = paths.iter().map(|y| y.row(h).transpose()).collect();
        let emp_mean = rows.iter().fold(DVector::zeros(2), |acc, r| acc + r) / n as f64;
        let emp_cov = rows.iter().fold(DMatrix::zeros(2, 2), |acc, r| {
            let d = r - &emp_mean;
            acc + &d * d.transpose()
        }) / (n - 1) as f64;
        for i in 0..2 {
            let se = (cov[(i, i)] / n as f64).sqrt();
            assert!((emp_mean[i] - mean[i]).abs() < 3.0 * se, "h={} mean {i}", h + 1);
            for j in 0..2 {
                let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / n as f64).sqrt();
                assert!(
                    (emp_cov[(i, j)] - cov[(i, j)]).abs() < 3.0 * se,
                    "h={} cov ({i},{j})",
                    h + 1
                );
            }
        }
    }
}

#[test]
fn absorbing_regime_never_changes() {
    let b = vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2) * 2.0];
    let draw = point_draw(
        DMatrix::zeros(2, 3),
        b,
        DMatrix::zeros(2, 2),
        DMatrix::identity(2, 2),
        vec![0.0, 1.0],
    );
    let data = dataset(&[0.0, 0.0]);
    let mut rng = chain_rng(22, 0);
    for _ in 0..200 {
        let path = predictive_draws(&draw, &data, 6, None, &mut rng).unwrap();
        assert!(path.s.iter().all(|&s| s == 1));
    }
}

#[test]
fn white_noise_system_gives_standard_normal_forecasts() {
    let draw = point_draw(
        DMatrix::zeros(2, 3),
        vec![DMatrix::identity(2, 2)],
        DMatrix::zeros(2, 1),
        DMatrix::identity(1, 1),
        vec![1.0],
    );
    let data = dataset(&[3.0, -1.0]);
    let mut rng = chain_rng(23, 0);
    let paths: Vec<DMatrix<f64>> = (0..5000)
        .map(|_| predictive_draws(&draw, &data, 3, None, &mut rng).unwrap().y)
        .collect();
    let normal = StatNormal::standard();
    for h in 0..3 {
        for j in 0..2 {
            let x: Vec<f64> = paths.iter().map(|y| y[(h, j)]).collect();
            let d = ks_statistic(&x, &|v| normal.cdf(v));
            assert!(ks_p_value(d, x.len()) > 1e-3, "h={} variable {j}: D = {d}", h + 1);
        }
    }
}

#[test]
fn intervals_cover_their_nominal_mass() {
    let mut rng = chain_rng(24, 0);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<f64> = (0..50_000).map(|_| normal.sample(&mut rng)).collect();
    let s = summarize(&x, 0.68).unwrap();
    let covered = |lo: f64, hi: f64| x.iter().filter(|v| **v >= lo && **v <= hi).count() as f64 / x.len() as f64;
    assert!((covered(s.hdi_lower, s.hdi_upper) - 0.68).abs() < 1e-3);
    assert!((covered(s.lower, s.upper) - 0.68).abs() < 1e-3);
    assert!((s.hdi_lower + 0.994).abs() < 0.03 && (s.hdi_upper - 0.994).abs() < 0.03);
    assert!(s.median.abs() < 0.02);
}

fn record(model: &str, origin: usize, log_score: f64, point: f64, realized: f64) -> ForecastRecord {
    ForecastRecord {
        model: model.into(),
        origin,
        origin_label: origin.to_string(),
        horizon: 1,
        log_score,
        relative_log_score: 0.0,
        point: vec![point],
        realized: vec![realized],
        squared_errors: vec![(point - realized).powi(2)],
    }
}

#[test]
fn relative_metrics_flip_with_the_benchmark() {
    let records = vec![
        record("a", 1, -1.0, 0.5, 1.0),
        record("a", 2, -2.0, 0.0, 1.5),
        record("b", 1, -1.4, 1.5, 1.0),
        record("b", 2, -0.7, 1.0, 1.5),
    ];
    let names = vec!["y".to_string()];
    let ab = ForecastReport::new(names.clone(), vec!["a".into(), "b".into()], records.clone()).unwrap();
    let ba = ForecastReport::new(names, vec!["b".into(), "a".into()], records).unwrap();
    for (x, y) in ab.records.iter().zip(&ba.records) {
        if x.model == "a" {
            assert_eq!(x.relative_log_score, 0.0);
        }
        let swapped = ba
            .records
            .iter()
            .find(|r| r.model != x.model && r.origin == x.origin)
            .unwrap();
        assert_eq!(x.model, y.model);
        if x.model == "b" {
            assert!((x.relative_log_score + swapped.relative_log_score).abs() < 1e-15);
        }
    }
    let sab = ab.summary().unwrap();
    let sba = ba.summary().unwrap();
    let find = |s: &[tvisvar::forecasting::ForecastSummary], m: &str| s.iter().find(|r| r.model == m).unwrap().clone();
    assert_eq!(find(&sab, "a").relative_rmsfe, vec![1.0]);
    let r_ab = find(&sab, "b").relative_rmsfe[0];
    let r_ba = find(&sba, "a").relative_rmsfe[0];
    assert!((r_ab * r_ba - 1.0).abs() < 1e-12);
    assert!((find(&sab, "b").relative_log_score + find(&sba, "a").relative_log_score).abs() < 1e-12);
}
