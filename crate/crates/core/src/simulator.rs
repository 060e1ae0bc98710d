//! Synthetic data from known parameters.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::inverse;
use crate::model::Dataset;

/// Burn-in periods discarded by [`generate_dgp`].
pub const BURN_IN: usize = 100;

/// True parameters of a data-generating process.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub names: Vec<String>,
    pub lags: usize,
    /// `N × (N p + 1)`; the last column multiplies the intercept.
    pub a: DMatrix<f64>,
    pub b: Vec<DMatrix<f64>>,
    pub p: DMatrix<f64>,
    pub pi0: Vec<f64>,
    /// `N × M`.
    pub omega: DMatrix<f64>,
    pub rho: Vec<f64>,
}

/// Latent paths behind a simulated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentRecord {
    pub s: Vec<usize>,
    /// `N × T`.
    pub h: DMatrix<f64>,
    /// Structural shocks, `T × N`.
    pub u: DMatrix<f64>,
    /// Spectral radius of the companion matrix.
    pub spectral_radius: f64,
    /// Set when the companion matrix has spectral radius at least one.
    pub explosive: bool,
}

impl Truth {
    pub fn n_vars(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_regimes(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        let m = self.n_regimes();
        if m == 0 || self.lags == 0 {
            return Err(Error::Config("truth needs at least one regime and one lag".into()));
        }
        if self.a.ncols() != n * self.lags + 1 {
            return Err(Error::dimension(format!(
                "A must be {n} × {} (lags then intercept)",
                n * self.lags + 1
            )));
        }
        if self.names.len() != n {
            return Err(Error::dimension("one name per variable is required"));
        }
        if self.p.shape() != (m, m) || self.pi0.len() != m || self.omega.shape() != (n, m) || self.rho.len() != n {
            return Err(Error::dimension("P, π0, ω or ρ do not match N and M"));
        }
        for (r, bm) in self.b.iter().enumerate() {
            if bm.shape() != (n, n) || bm.determinant().abs() < 1e-12 {
                return Err(Error::Domain(format!(
                    "B of regime {} must be N × N and nonsingular",
                    r + 1
                )));
            }
        }
        if self.rho.iter().any(|r| !(r.abs() < 1.0)) {
            return Err(Error::Domain("|ρ| must be below 1".into()));
        }
        for i in 0..m {
            let row = self.p.row(i);
            if row.iter().any(|v| *v < 0.0) || (row.sum() - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!("row {} of P is not stochastic", i + 1)));
            }
        }
        if self.pi0.iter().any(|v| *v < 0.0) || (self.pi0.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Domain("π0 is not a probability vector".into()));
        }
        Ok(())
    }
}

/// Companion matrix of the lag polynomial in `A` (deterministic columns
/// ignored), `N p × N p`.
pub fn companion_matrix(a: &DMatrix<f64>, n_vars: usize, lags: usize) -> DMatrix<f64> {
    let np = n_vars * lags;
    let mut f = DMatrix::zeros(np, np);
    f.view_mut((0, 0), (n_vars, np))
        .copy_from(&a.view((0, 0), (n_vars, np)));
    for i in n_vars..np {
        f[(i, i - n_vars)] = 1.0;
    }
    f
}

pub fn spectral_radius(f: &DMatrix<f64>) -> f64 {
    f.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn draw_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let mut u = rng.random::<f64>();
    for (i, p) in probs.iter().enumerate() {
        u -= p;
        if u < 0.0 {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Markov chain path of length `t_len` started from `π0`.
pub fn simulate_regimes<R: Rng + ?Sized>(p: &DMatrix<f64>, pi0: &[f64], t_len: usize, rng: &mut R) -> Vec<usize> {
    let mut s = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let next = if t == 0 {
            draw_categorical(pi0, rng)
        } else {
            let row: Vec<f64> = p.row(s[t - 1]).iter().copied().collect();
            draw_categorical(&row, rng)
        };
        s.push(next);
    }
    s
}

/// AR(1) log-volatility paths from `h_0 = 0` with unit innovations, `N × T`.
pub fn simulate_log_volatilities<R: Rng + ?Sized>(rho: &[f64], t_len: usize, rng: &mut R) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(rho.len(), t_len);
    for n in 0..rho.len() {
        let mut prev = 0.0;
        for t in 0..t_len {
            let z: f64 = rng.sample(StandardNormal);
            prev = rho[n] * prev + z;
            h[(n, t)] = prev;
        }
    }
    h
}

/// Simulates observations given every latent quantity. `presample` holds
/// the `p` initial rows and `deterministic` one row per simulated period.
/// Returns the full `(p + T) × N` series and the structural shocks.
#[allow(clippy::too_many_arguments)]
pub fn simulate_observations<R: Rng + ?Sized>(
    a: &DMatrix<f64>,
    b: &[DMatrix<f64>],
    omega: &DMatrix<f64>,
    s: &[usize],
    h: &DMatrix<f64>,
    presample: &DMatrix<f64>,
    deterministic: &DMatrix<f64>,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let lags = presample.nrows();
    let t_len = s.len();
    let binv = b.iter().map(inverse).collect::<Result<Vec<_>>>()?;
    let mut series = DMatrix::zeros(lags + t_len, n);
    series.rows_mut(0, lags).copy_from(presample);
    let mut shocks = DMatrix::zeros(t_len, n);
    let k = a.ncols();
    let mut x = DVector::zeros(k);
    for t in 0..t_len {
        let raw = t + lags;
        for lag in 1..=lags {
            for j in 0..n {
                x[(lag - 1) * n + j] = series[(raw - lag, j)];
            }
        }
        for j in 0..deterministic.ncols() {
            x[n * lags + j] = deterministic[(t, j)];
        }
        let m = s[t];
        let u = DVector::from_fn(n, |i, _| {
            let z: f64 = rng.sample(StandardNormal);
            z * (0.5 * omega[(i, m)] * h[(i, t)]).exp()
        });
        let y = a * &x + &binv[m] * &u;
        series.row_mut(raw).copy_from(&y.transpose());
        shocks.row_mut(t).copy_from(&u.transpose());
    }
    Ok((series, shocks))
}

/// Runs the generative model forward: regimes, volatilities, shocks and
/// observations, discarding [`BURN_IN`] initial periods. The returned
/// dataset has an intercept and `p` presample rows.
pub fn generate_dgp<R: Rng + ?Sized>(truth: &Truth, t_len: usize, rng: &mut R) -> Result<(Dataset, LatentRecord)> {
    truth.validate()?;
    let n = truth.n_vars();
    let p = truth.lags;
    let total = BURN_IN + t_len;
    let s = simulate_regimes(&truth.p, &truth.pi0, total, rng);
    let h = simulate_log_volatilities(&truth.rho, total, rng);
    let det = DMatrix::from_element(total, 1, 1.0);
    let (series, shocks) = simulate_observations(
        &truth.a,
        &truth.b,
        &truth.omega,
        &s,
        &h,
        &DMatrix::zeros(p, n),
        &det,
        rng,
    )?;
    // keep the last p burn-in rows as presample
    let start = BURN_IN;
    let kept = series.rows(start, p + t_len).into_owned();
    let dataset =
        Dataset::from_series_unchecked(truth.names.clone(), &kept, &DMatrix::from_element(p + t_len, 1, 1.0), p)?;
    let radius = spectral_radius(&companion_matrix(&truth.a, n, p));
    let record = LatentRecord {
        s: s[BURN_IN..].to_vec(),
        h: h.columns(BURN_IN, t_len).into_owned(),
        u: shocks.rows(BURN_IN, t_len).into_owned(),
        spectral_radius: radius,
        explosive: radius >= 1.0,
    };
    Ok((dataset, record))
}

/// Writes the latent record as CSV: `t, regime, h_1..h_N, u_1..u_N`.
pub fn write_latent_csv<W: std::io::Write>(record: &LatentRecord, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let n = record.h.nrows();
    let mut header = vec!["t".to_string(), "regime".to_string()];
    header.extend((1..=n).map(|i| format!("h{i}")));
    header.extend((1..=n).map(|i| format!("u{i}")));
    w.write_record(&header).map_err(csv_error)?;
    for t in 0..record.s.len() {
        let mut row = vec![(t + 1).to_string(), (record.s[t] + 1).to_string()];
        row.extend((0..n).map(|i| record.h[(i, t)].to_string()));
        row.extend((0..n).map(|i| record.u[(t, i)].to_string()));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::io("writing latent record", e))
}

fn csv_error(e: csv::Error) -> Error {
    Error::io("writing CSV", std::io::Error::other(e.to_string()))
}

/// Truth in a plain serializable layout (rows as nested arrays), used by the
/// `simulate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFile {
    pub names: Vec<String>,
    pub lags: usize,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<Vec<f64>>>,
    pub p: Vec<Vec<f64>>,
    pub pi0: Vec<f64>,
    pub omega: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::dimension(format!("{what} has ragged rows")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl TruthFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn into_truth(self) -> Result<Truth> {
        let truth = Truth {
            names: self.names,
            lags: self.lags,
            a: rows_to_matrix(&self.a, "a")?,
            b: self.b.iter().map(|b| rows_to_matrix(b, "b")).collect::<Result<_>>()?,
            p: rows_to_matrix(&self.p, "p")?,
            pi0: self.pi0,
            omega: rows_to_matrix(&self.omega, "omega")?,
            rho: self.rho,
        };
        truth.validate()?;
        Ok(truth)
    }

    pub fn from_truth(truth: &Truth) -> Self {
        TruthFile {
            names: truth.names.clone(),
            lags: truth.lags,
            a: matrix_to_rows(&truth.a),
            b: truth.b.iter().map(matrix_to_rows).collect(),
            p: matrix_to_rows(&truth.p),
            pi0: truth.pi0.clone(),
            omega: matrix_to_rows(&truth.omega),
            rho: truth.rho.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("truth serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn white_noise(n: usize) -> Truth {
        Truth {
            names: (1..=n).map(|i| format!("y{i}")).collect(),
            lags: 1,
            a: DMatrix::zeros(n, n + 1),
            b: vec![DMatrix::identity(n, n)],
            p: DMatrix::identity(1, 1),
            pi0: vec![1.0],
            omega: DMatrix::zeros(n, 1),
            rho: vec![0.5; n],
        }
    }

    #[test]
    fn white_noise_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t_len = 100_000;
        let (ds, rec) = generate_dgp(&white_noise(2), t_len, &mut rng).unwrap();
        let cov = ds.y.transpose() * &ds.y / t_len as f64;
        let se = (2.0 / t_len as f64).sqrt();
        assert!((cov[(0, 0)] - 1.0).abs() < 4.0 * se);
        assert!((cov[(1, 1)] - 1.0).abs() < 4.0 * se);
        assert!(cov[(0, 1)].abs() < 4.0 / (t_len as f64).sqrt());
        assert!(!rec.explosive);
    }

    #[test]
    fn structural_covariance() {
        let mut truth = white_noise(2);
        truth.b = vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -0.5, 2.0])];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t_len = 100_000;
        let (ds, _) = generate_dgp(&truth, t_len, &mut rng).unwrap();
        let cov = ds.y.transpose() * &ds.y / t_len as f64;
        let binv = inverse(&truth.b[0]).unwrap();
        let target = &binv * binv.transpose();
        assert!((cov - target).amax() < 0.02);
    }

    #[test]
    fn absorbing_second_regime() {
        let mut truth = white_noise(1);
        truth.b = vec![DMatrix::identity(1, 1), DMatrix::from_element(1, 1, 2.0)];
        truth.p = DMatrix::identity(2, 2);
        truth.pi0 = vec![0.0, 1.0];
        truth.omega = DMatrix::zeros(1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (_, rec) = generate_dgp(&truth, 200, &mut rng).unwrap();
        assert!(rec.s.iter().all(|&s| s == 1));
    }

    #[test]
    fn shocks_round_trip() {
        let truth = Truth {
            names: vec!["a".into(), "b".into()],
            lags: 2,
            a: DMatrix::from_row_slice(2, 5, &[0.5, 0.1, 0.1, 0.0, 0.2, -0.1, 0.3, 0.0, 0.1, -0.1]),
            b: vec![
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.4, 1.5]),
                DMatrix::from_row_slice(2, 2, &[2.0, -0.3, 0.0, 0.7]),
            ],
            p: DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]),
            pi0: vec![0.5, 0.5],
            omega: DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 0.0, 0.8]),
            rho: vec![0.9, 0.3],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (ds, rec) = generate_dgp(&truth, 300, &mut rng).unwrap();
        for t in 0..300 {
            let x = ds.x.row(t).transpose();
            let eps = ds.y.row(t).transpose() - &truth.a * x;
            let u = &truth.b[rec.s[t]] * eps;
            for n in 0..2 {
                assert!((u[n] - rec.u[(t, n)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn explosive_flag() {
        let mut truth = white_noise(1);
        truth.a = DMatrix::from_row_slice(1, 2, &[1.05, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (_, rec) = generate_dgp(&truth, 10, &mut rng).unwrap();
        assert!(rec.explosive);
    }

    #[test]
    fn truth_file_roundtrip() {
        let truth = white_noise(2);
        let file = TruthFile::from_truth(&truth);
        let back = TruthFile::parse(&file.to_toml()).unwrap().into_truth().unwrap();
        assert_eq!(back, truth);
    }
}
