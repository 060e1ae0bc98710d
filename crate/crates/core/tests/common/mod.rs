#![allow(dead_code)]

use nalgebra::DMatrix;

use tvisvar::gibbs::{chain_rng, run_chain};
use tvisvar::model::{Dataset, DefaultRows, ModelConfig, PatternSet};
use tvisvar::simulator::{generate_dgp, Truth};
use tvisvar::store::{DrawStore, StoredDraw};

pub fn names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("y{i}")).collect()
}

pub fn two_regime_truth() -> Truth {
    Truth {
        names: names(3),
        lags: 1,
        a: DMatrix::from_row_slice(3, 4, &[0.5, 0.0, 0.0, 0.1, 0.1, 0.5, 0.0, 0.0, 0.0, 0.1, 0.5, -0.1]),
        b: vec![
            DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.5, 1.0, 0.0, 0.0, -2.0, 1.0]),
            DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.5, 1.0, 0.0, 2.0, 0.0, 1.0]),
        ],
        p: DMatrix::from_row_slice(2, 2, &[0.95, 0.05, 0.05, 0.95]),
        pi0: vec![0.5, 0.5],
        omega: DMatrix::from_row_slice(3, 2, &[0.8, -0.8, 0.8, 0.8, 0.8, 1.0]),
        rho: vec![0.9; 3],
    }
}

pub fn tvi_config(draws: usize, burnin: usize) -> ModelConfig {
    let patterns = PatternSet::parse(
        "3 full ***\n3 x1 0**\n3 x2 *0*\n3 x12 00*\n",
        3,
        DefaultRows::LowerTriangular,
    )
    .unwrap();
    let mut cfg = ModelConfig::new(3, 1, 1, 2, patterns).unwrap();
    cfg.chain.draws = draws;
    cfg.chain.burnin = burnin;
    cfg
}

pub fn small_fit(seed: u64) -> (ModelConfig, Dataset, DrawStore) {
    let (data, _) = generate_dgp(&two_regime_truth(), 120, &mut chain_rng(seed, 0)).unwrap();
    let cfg = tvi_config(60, 40);
    let store = run_chain(&cfg, &data, 0).unwrap();
    (cfg, data, store)
}

/// A draw with the given dynamics and placeholder hyperparameters.
pub fn point_draw(
    a: DMatrix<f64>,
    b: Vec<DMatrix<f64>>,
    omega: DMatrix<f64>,
    p: DMatrix<f64>,
    filtered_last: Vec<f64>,
) -> StoredDraw {
    let n = a.nrows();
    let m = b.len();
    StoredDraw {
        a,
        b,
        kappa: vec![vec![0; m]; n],
        s: Vec::new(),
        p,
        pi0: vec![1.0 / m as f64; m],
        omega,
        rho: vec![0.0; n],
        sigma2_omega: vec![1.0; n],
        gamma_b: vec![1.0; n],
        s_b: vec![1.0; n],
        s_gamma_b: 1.0,
        gamma_a: vec![1.0; n],
        s_a: vec![1.0; n],
        s_gamma_a: 1.0,
        h_last: vec![0.0; n],
        omega_mean: DMatrix::zeros(n, m),
        omega_var: DMatrix::from_element(n, m, 1.0),
        log_likelihood: 0.0,
        filtered_last,
        h: None,
    }
}
