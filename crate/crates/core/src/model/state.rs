//! A single point of the posterior sampling space.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::priors::ShrinkageChainState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    /// Autoregressive matrix, `N × (N p + d)`.
    pub a: DMatrix<f64>,
    /// Structural matrix of each regime with the selected patterns applied.
    pub b: Vec<DMatrix<f64>>,
    /// `kappa[n][m]`: pattern index of equation `n` in regime `m`.
    pub kappa: Vec<Vec<usize>>,
    /// Regime path, values in `0..M`.
    pub s: Vec<usize>,
    pub p: DMatrix<f64>,
    pub pi0: Vec<f64>,
    /// Log-volatilities, `N × T`.
    pub h: DMatrix<f64>,
    /// Volatility loadings, `N × M`.
    pub omega: DMatrix<f64>,
    pub rho: Vec<f64>,
    pub sigma2_omega: Vec<f64>,
    /// Mixture indicators `[n][t]` in `0..10`.
    pub indicators: Vec<Vec<u8>>,
    pub shrink_b: ShrinkageChainState,
    pub shrink_a: ShrinkageChainState,
    /// Conditional posterior mean of `ω_n(m)` from the last `ω` update.
    pub omega_mean: DMatrix<f64>,
    /// Conditional posterior variance of `ω_n(m)` from the last `ω` update.
    pub omega_var: DMatrix<f64>,
}

impl ParameterState {
    pub fn n_regimes(&self) -> usize {
        self.b.len()
    }

    pub fn n_vars(&self) -> usize {
        self.a.nrows()
    }

    /// Free coefficients of row `n` in regime `m` under its current pattern.
    pub fn free_coefficients(&self, config: &ModelConfig, n: usize, m: usize) -> Vec<f64> {
        let pattern = config.patterns.equation(n).get(self.kappa[n][m]);
        let row: Vec<f64> = self.b[m].row(n).iter().copied().collect();
        pattern.extract(&row).expect("row length equals N")
    }

    /// Checks every structural invariant of the state.
    pub fn validate(&self, config: &ModelConfig, t_len: usize) -> Result<()> {
        let n = config.n_vars;
        let m = config.regimes;
        let bad = |msg: String| Err(Error::Numerical(format!("invalid state: {msg}")));
        if self.a.shape() != (n, config.n_regressors()) || self.b.len() != m {
            return bad("dimension mismatch in A or B".into());
        }
        if self.a.iter().any(|v| !v.is_finite()) {
            return bad("non-finite entry in A".into());
        }
        if self.s.len() != t_len || self.s.iter().any(|&r| r >= m) {
            return bad("regime path out of range".into());
        }
        if self.p.shape() != (m, m) || self.pi0.len() != m {
            return bad("transition matrix dimensions".into());
        }
        for i in 0..m {
            let row = self.p.row(i);
            if row.iter().any(|v| *v < 0.0) || (row.sum() - 1.0).abs() > 1e-12 {
                return bad(format!("row {} of P is not stochastic", i + 1));
            }
        }
        if self.pi0.iter().any(|v| *v < 0.0) || (self.pi0.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return bad("π0 is not a probability vector".into());
        }
        if self.h.shape() != (n, t_len) || self.h.iter().any(|v| !v.is_finite()) {
            return bad("log-volatility block".into());
        }
        if self.omega.shape() != (n, m) || self.omega.iter().any(|v| !v.is_finite()) {
            return bad("ω block".into());
        }
        if self.rho.iter().any(|r| !(r.abs() < 1.0)) {
            return bad("|ρ| must be below 1".into());
        }
        if self.sigma2_omega.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("σ²_ω must be positive".into());
        }
        if !self.shrink_a.is_valid() || !self.shrink_b.is_valid() {
            return bad("shrinkage hyperparameters must be positive".into());
        }
        for (r, bm) in self.b.iter().enumerate() {
            if bm.shape() != (n, n) || bm.iter().any(|v| !v.is_finite()) {
                return bad(format!("structural matrix of regime {}", r + 1));
            }
            for eq in 0..n {
                let k = self.kappa[eq][r];
                let patterns = config.patterns.equation(eq);
                if k >= patterns.len() {
                    return bad(format!("pattern index {k} out of range for equation {}", eq + 1));
                }
                let pattern = patterns.get(k);
                for j in 0..n {
                    if !pattern.is_free(j) && bm[(eq, j)] != 0.0 {
                        return bad(format!(
                            "B_{} row {} is nonzero at restricted column {}",
                            r + 1,
                            eq + 1,
                            j + 1
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}
