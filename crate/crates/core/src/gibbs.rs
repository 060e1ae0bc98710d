//! The Gibbs sampler: initialization, the sweep, chains and the
//! joint-distribution correctness harness.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, inverse, log_abs_det};
use crate::model::{Dataset, DefaultRows, ModelConfig, ParameterState, PatternSet};
use crate::priors::{sample_gamma, update_shrinkage_chain, CoefficientSummary, ShrinkageChainState};
use crate::regime::{
    backward_sample, draw_initial_probs, draw_transition_matrix, forward_filter, loglik_from_residuals,
    prior_mean_transition, reduced_form_residuals,
};
use crate::simulator::{simulate_log_volatilities, simulate_observations, simulate_regimes};
use crate::store::{DrawStore, Manifest, StoredDraw};
use crate::structural::{
    draw_row_coefficients, draw_tvi_indicator, full_cofactor_vector, pattern_log_marginal, precision_from_moment,
};
use crate::sv::{
    conditional_variances, draw_log_volatilities, draw_mixture_indicators, draw_omega, draw_omega_variance, draw_rho,
    log_squared_residuals, MixtureTable,
};
use crate::var::{draw_autoregressive, least_squares, minnesota_moments_centered, MinnesotaPrior};

/// Which blocks of the sweep are updated; frozen blocks keep their values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Blocks {
    pub regimes: bool,
    pub transition: bool,
    pub volatility: bool,
    pub loadings: bool,
    pub structural: bool,
    pub structural_shrinkage: bool,
    pub autoregressive: bool,
    pub autoregressive_shrinkage: bool,
}

impl Blocks {
    pub const ALL: Blocks = Blocks {
        regimes: true,
        transition: true,
        volatility: true,
        loadings: true,
        structural: true,
        structural_shrinkage: true,
        autoregressive: true,
        autoregressive_shrinkage: true,
    };

    pub const NONE: Blocks = Blocks {
        regimes: false,
        transition: false,
        volatility: false,
        loadings: false,
        structural: false,
        structural_shrinkage: false,
        autoregressive: false,
        autoregressive_shrinkage: false,
    };
}

impl Default for Blocks {
    fn default() -> Self {
        Blocks::ALL
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub blocks: Blocks,
    /// Hold `ω ≡ 0`, reducing the model to homoskedastic shocks.
    pub homoskedastic: bool,
    /// Multiplier on the conditional variance of the `ω` draw. Must be 1 for
    /// a valid sampler; other values are used to check the harness.
    pub omega_inflation: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            blocks: Blocks::ALL,
            homoskedastic: false,
            omega_inflation: 1.0,
        }
    }
}

/// Seeded generator for one chain: the seed selects the key and the chain
/// id the stream.
pub fn chain_rng(seed: u64, chain_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain_id);
    rng
}

/// Sweep machinery bound to one model.
pub struct Sampler<'a> {
    pub config: &'a ModelConfig,
    pub prior_a: MinnesotaPrior,
    pub table: MixtureTable,
    pub options: SweepOptions,
}

impl<'a> Sampler<'a> {
    pub fn new(config: &'a ModelConfig, options: SweepOptions) -> Result<Self> {
        config.validate()?;
        if !(options.omega_inflation > 0.0) {
            return Err(Error::Config("omega_inflation must be positive".into()));
        }
        Ok(Sampler {
            config,
            prior_a: minnesota_moments_centered(config.n_vars, config.lags, config.d_dim, config.priors.own_lag_mean),
            table: MixtureTable::ten_component(),
            options,
        })
    }

    /// One full Gibbs sweep in the fixed block order.
    pub fn sweep<R: Rng + ?Sized>(&self, state: &mut ParameterState, data: &Dataset, rng: &mut R) -> Result<()> {
        let cfg = self.config;
        let n_regimes = cfg.regimes;
        let n_vars = cfg.n_vars;
        let t_len = data.len();
        let blocks = self.options.blocks;
        let eps = reduced_form_residuals(data, &state.a);

        // (1) regime path
        if blocks.regimes {
            if n_regimes == 1 {
                state.s = vec![0; t_len];
            } else if t_len > 0 {
                let ll = loglik_from_residuals(&eps, &state.b, &state.omega, &state.h)?;
                let filter = forward_filter(&ll, &state.p, &state.pi0)?;
                state.s = backward_sample(&filter.filtered, &state.p, rng);
            }
        }

        // (2) transition matrix and initial distribution
        if blocks.transition {
            if n_regimes == 1 {
                state.p = DMatrix::identity(1, 1);
                state.pi0 = vec![1.0];
            } else {
                state.p = draw_transition_matrix(&state.s, n_regimes, cfg.priors.d_m, rng)?;
                state.pi0 = draw_initial_probs(state.s.first().copied(), n_regimes, rng)?;
            }
        }

        // (3)-(5) stochastic volatility
        if !self.options.homoskedastic && (blocks.volatility || blocks.loadings) {
            let u = structural_residuals(&eps, &state.b, &state.s);
            let log_sq = log_squared_residuals(&u);
            state.indicators = draw_mixture_indicators(&log_sq, &state.omega, &state.h, &state.s, &self.table, rng);
            for n in 0..n_vars {
                let ls: Vec<f64> = log_sq.row(n).iter().copied().collect();
                let omega_row: Vec<f64> = state.omega.row(n).iter().copied().collect();
                if blocks.volatility {
                    let h = draw_log_volatilities(
                        &state.indicators[n],
                        &ls,
                        &omega_row,
                        state.rho[n],
                        &state.s,
                        &self.table,
                        rng,
                    )?;
                    for t in 0..t_len {
                        state.h[(n, t)] = h[t];
                    }
                }
                if blocks.loadings {
                    let h: Vec<f64> = state.h.row(n).iter().copied().collect();
                    let draw = draw_omega(
                        &h,
                        &state.s,
                        &state.indicators[n],
                        &ls,
                        state.sigma2_omega[n],
                        n_regimes,
                        &self.table,
                        self.options.omega_inflation,
                        rng,
                    )?;
                    for m in 0..n_regimes {
                        state.omega[(n, m)] = draw.omega[m];
                        state.omega_mean[(n, m)] = draw.mean[m];
                        state.omega_var[(n, m)] = draw.variance[m];
                    }
                    let omega_row: Vec<f64> = state.omega.row(n).iter().copied().collect();
                    state.sigma2_omega[n] =
                        draw_omega_variance(&omega_row, cfg.priors.omega_shape, cfg.priors.omega_scale, rng)?;
                }
                if blocks.volatility {
                    let h: Vec<f64> = state.h.row(n).iter().copied().collect();
                    state.rho[n] = draw_rho(&h, rng)?;
                }
            }
        }

        let variances = conditional_variances(&state.omega, &state.h, &state.s);

        // (6) pattern indicators and structural rows
        if blocks.structural {
            self.structural_step(state, &eps, &variances, rng)?;
        }

        // (7) structural shrinkage
        if blocks.structural_shrinkage {
            let summaries: Vec<CoefficientSummary> = (0..n_vars)
                .map(|n| {
                    let rows: Vec<Vec<f64>> = (0..n_regimes).map(|m| state.free_coefficients(cfg, n, m)).collect();
                    CoefficientSummary::from_vectors(rows.iter().map(Vec::as_slice))
                })
                .collect();
            state.shrink_b = update_shrinkage_chain(&state.shrink_b, &summaries, rng)?;
        }

        // (8) autoregressive matrix
        if blocks.autoregressive {
            state.a = draw_autoregressive(
                data,
                &state.b,
                &state.s,
                &variances,
                &self.prior_a,
                &state.shrink_a.gamma,
                rng,
            )?;
        }

        // (9) autoregressive shrinkage
        if blocks.autoregressive_shrinkage {
            let summaries = self.prior_a.shrinkage_summaries(&state.a);
            state.shrink_a = update_shrinkage_chain(&state.shrink_a, &summaries, rng)?;
        }
        Ok(())
    }

    fn structural_step<R: Rng + ?Sized>(
        &self,
        state: &mut ParameterState,
        eps: &DMatrix<f64>,
        variances: &DMatrix<f64>,
        rng: &mut R,
    ) -> Result<()> {
        let cfg = self.config;
        let n_vars = cfg.n_vars;
        let t_len = eps.nrows();
        let mut periods: Vec<Vec<usize>> = vec![Vec::new(); cfg.regimes];
        for t in 0..t_len {
            periods[state.s[t]].push(t);
        }
        let mut log_weights = Vec::new();
        for (m, times) in periods.iter().enumerate() {
            let t_m = times.len();
            for n in 0..n_vars {
                let gamma = state.shrink_b.gamma[n];
                let mut g = DMatrix::<f64>::zeros(n_vars, n_vars);
                for &t in times {
                    let inv = 1.0 / variances[(n, t)];
                    for i in 0..n_vars {
                        let ei = eps[(t, i)] * inv;
                        for j in 0..=i {
                            g[(i, j)] += ei * eps[(t, j)];
                        }
                    }
                }
                for i in 0..n_vars {
                    for j in 0..i {
                        g[(j, i)] = g[(i, j)];
                    }
                }
                let cofactors = full_cofactor_vector(&state.b[m], n);
                let patterns = cfg.patterns.equation(n);
                let k = if patterns.is_tvi() {
                    log_weights.clear();
                    for pattern in patterns.iter() {
                        let s = precision_from_moment(&g, pattern, gamma);
                        let w = pattern.extract(&cofactors)?;
                        log_weights.push(pattern_log_marginal(&s, &w, gamma, t_m)?);
                    }
                    draw_tvi_indicator(&log_weights, rng)?
                } else {
                    0
                };
                let pattern = patterns.get(k);
                let s = precision_from_moment(&g, pattern, gamma);
                let w = pattern.extract(&cofactors)?;
                let b = draw_row_coefficients(&s, &w, t_m, rng)?;
                let row = pattern.apply(&b)?;
                for j in 0..n_vars {
                    state.b[m][(n, j)] = row[j];
                }
                state.kappa[n][m] = k;
            }
        }
        Ok(())
    }

    /// `log p(y | θ, h)` and `Pr(s_T | y, θ, h)` at the current state.
    pub fn filter_state(&self, state: &ParameterState, data: &Dataset) -> Result<(f64, Vec<f64>)> {
        let eps = reduced_form_residuals(data, &state.a);
        let ll = loglik_from_residuals(&eps, &state.b, &state.omega, &state.h)?;
        if data.is_empty() {
            return Ok((0.0, state.pi0.clone()));
        }
        let filter = forward_filter(&ll, &state.p, &state.pi0)?;
        let last = filter.filtered.row(data.len() - 1).iter().copied().collect();
        Ok((filter.log_marginal, last))
    }
}

/// Structural residuals `u_t = B_{s_t} ε_t`, laid out `N × T`.
pub fn structural_residuals(eps: &DMatrix<f64>, b: &[DMatrix<f64>], s: &[usize]) -> DMatrix<f64> {
    let (t_len, n_vars) = eps.shape();
    let mut u = DMatrix::zeros(n_vars, t_len);
    for t in 0..t_len {
        let bm = &b[s[t]];
        for n in 0..n_vars {
            let mut acc = 0.0;
            for j in 0..n_vars {
                acc += bm[(n, j)] * eps[(t, j)];
            }
            u[(n, t)] = acc;
        }
    }
    u
}

/// Starting point of a chain: least-squares `A`, `B_m` from the inverse
/// Cholesky factor of the residual covariance masked to each equation's first
/// pattern, `h ≡ 0`, `ω ≡ 0.1`, `ρ ≡ 0.5`, uniform random regimes and
/// hyperparameters at their prior centers.
pub fn initialize_state<R: Rng + ?Sized>(
    config: &ModelConfig,
    data: &Dataset,
    options: &SweepOptions,
    rng: &mut R,
) -> Result<ParameterState> {
    config.validate()?;
    config.check_dataset(data)?;
    let n = config.n_vars;
    let m = config.regimes;
    let t_len = data.len();
    let prior_a = minnesota_moments_centered(n, config.lags, config.d_dim, config.priors.own_lag_mean);
    let (a, cov) = if t_len > config.n_regressors() + n {
        least_squares(data)?
    } else {
        (prior_a.mean.clone(), DMatrix::identity(n, n))
    };
    let chol = cholesky_with_jitter(&cov)?;
    let b0 = inverse(&chol.l())?;
    let mut b = DMatrix::zeros(n, n);
    for eq in 0..n {
        let pattern = config.patterns.equation(eq).get(0);
        for j in pattern.free_columns() {
            b[(eq, *j)] = b0[(eq, *j)];
        }
    }
    let scale = b0.diagonal().iter().map(|d| d.abs()).fold(0.0, f64::max).max(1e-8);
    let mut attempts = 0;
    while !is_well_conditioned(&b) {
        attempts += 1;
        if attempts > 100 {
            return Err(Error::Numerical(
                "could not find a nonsingular starting structural matrix".into(),
            ));
        }
        for eq in 0..n {
            let pattern = config.patterns.equation(eq).get(0);
            for j in pattern.free_columns() {
                let z: f64 = rng.sample(StandardNormal);
                b[(eq, *j)] += 0.5 * scale * z;
            }
        }
    }
    let s: Vec<usize> = (0..t_len).map(|_| rng.random_range(0..m)).collect();
    let omega0 = if options.homoskedastic { 0.0 } else { 0.1 };
    let shape = config.priors.omega_shape;
    Ok(ParameterState {
        a,
        b: vec![b; m],
        kappa: vec![vec![0; m]; n],
        s,
        p: prior_mean_transition(m, config.priors.d_m),
        pi0: vec![1.0 / m as f64; m],
        h: DMatrix::zeros(n, t_len),
        omega: DMatrix::from_element(n, m, omega0),
        rho: vec![0.5; n],
        sigma2_omega: vec![shape * config.priors.omega_scale; n],
        indicators: vec![vec![0; t_len]; n],
        shrink_b: ShrinkageChainState::at_prior_center(config.priors.structural(), n),
        shrink_a: ShrinkageChainState::at_prior_center(config.priors.autoregressive(), n),
        omega_mean: DMatrix::zeros(n, m),
        omega_var: DMatrix::zeros(n, m),
    })
}

fn is_well_conditioned(b: &DMatrix<f64>) -> bool {
    let (sign, log_det) = log_abs_det(b);
    if sign == 0.0 {
        return false;
    }
    let log_norms: f64 = (0..b.nrows()).map(|i| b.row(i).norm().max(1e-300).ln()).sum();
    log_det - log_norms > -12.0
}

/// One sweep with default options.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &mut ParameterState,
    data: &Dataset,
    config: &ModelConfig,
    rng: &mut R,
) -> Result<()> {
    Sampler::new(config, SweepOptions::default())?.sweep(state, data, rng)
}

/// Runs one chain: burn-in, then `draws` sweeps keeping every `thin`-th.
pub fn run_chain(config: &ModelConfig, data: &Dataset, chain_id: u64) -> Result<DrawStore> {
    run_chain_with(config, data, chain_id, SweepOptions::default())
}

pub fn run_chain_with(config: &ModelConfig, data: &Dataset, chain_id: u64, options: SweepOptions) -> Result<DrawStore> {
    let sampler = Sampler::new(config, options)?;
    let mut rng = chain_rng(config.chain.seed, chain_id);
    let mut state = initialize_state(config, data, &options, &mut rng)?;
    let manifest = Manifest::new(config, data.names.clone(), data.dates.clone(), data.len(), chain_id);
    let mut store = DrawStore::new(manifest);
    let chain = config.chain;
    for _ in 0..chain.burnin {
        sampler.sweep(&mut state, data, &mut rng)?;
    }
    for i in 0..chain.draws {
        sampler.sweep(&mut state, data, &mut rng)?;
        if (i + 1) % chain.thin == 0 {
            let (loglik, filtered) = sampler.filter_state(&state, data)?;
            if !loglik.is_finite() {
                return Err(Error::Numerical(format!("non-finite log-likelihood at draw {}", i + 1)));
            }
            store.push(&StoredDraw::from_state(&state, loglik, filtered, chain.store_paths))?;
        }
    }
    Ok(store)
}

/// Runs `chains` independent chains with stream ids `0..chains`, on
/// separate threads when `parallel` is set. The result does not depend on
/// `parallel`.
pub fn run_chains(
    config: &ModelConfig,
    data: &Dataset,
    chains: usize,
    options: SweepOptions,
    parallel: bool,
) -> Result<Vec<DrawStore>> {
    if !parallel {
        return (0..chains as u64)
            .map(|id| run_chain_with(config, data, id, options))
            .collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..chains as u64)
            .map(|id| scope.spawn(move || run_chain_with(config, data, id, options)))
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::Numerical("chain worker panicked".into())))
            })
            .collect()
    })
}

/// Draws a complete state from the prior for a sample of length `t_len`.
pub fn sample_prior_state<R: Rng + ?Sized>(
    config: &ModelConfig,
    t_len: usize,
    options: &SweepOptions,
    rng: &mut R,
) -> Result<ParameterState> {
    let n = config.n_vars;
    let m = config.regimes;
    let priors = &config.priors;
    let prior_a = minnesota_moments_centered(n, config.lags, config.d_dim, priors.own_lag_mean);
    let shrink_a = ShrinkageChainState::sample_prior(priors.autoregressive(), n, rng)?;
    let shrink_b = ShrinkageChainState::sample_prior(priors.structural(), n, rng)?;
    let a = prior_a.sample(&shrink_a.gamma, rng);
    let p = if m == 1 {
        DMatrix::identity(1, 1)
    } else {
        draw_transition_matrix(&[], m, priors.d_m, rng)?
    };
    let pi0 = if m == 1 {
        vec![1.0]
    } else {
        draw_initial_probs(None, m, rng)?
    };
    let mut kappa = vec![vec![0; m]; n];
    let mut b = vec![DMatrix::zeros(n, n); m];
    for r in 0..m {
        for eq in 0..n {
            let patterns = config.patterns.equation(eq);
            let k = rng.random_range(0..patterns.len());
            kappa[eq][r] = k;
            let pattern = patterns.get(k);
            let sd = shrink_b.gamma[eq].sqrt();
            for &j in pattern.free_columns() {
                let z: f64 = rng.sample(StandardNormal);
                b[r][(eq, j)] = sd * z;
            }
        }
    }
    let mut sigma2_omega = Vec::with_capacity(n);
    let mut omega = DMatrix::zeros(n, m);
    for eq in 0..n {
        let v = sample_gamma(priors.omega_shape, priors.omega_scale, rng)?;
        sigma2_omega.push(v);
        for r in 0..m {
            let z: f64 = rng.sample(StandardNormal);
            omega[(eq, r)] = if options.homoskedastic { 0.0 } else { v.sqrt() * z };
        }
    }
    let rho: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let s = if m == 1 {
        vec![0; t_len]
    } else {
        simulate_regimes(&p, &pi0, t_len, rng)
    };
    let h = simulate_log_volatilities(&rho, t_len, rng);
    Ok(ParameterState {
        a,
        b,
        kappa,
        s,
        p,
        pi0,
        h,
        omega,
        rho,
        sigma2_omega,
        indicators: vec![vec![0; t_len]; n],
        shrink_b,
        shrink_a,
        omega_mean: DMatrix::zeros(n, m),
        omega_var: DMatrix::zeros(n, m),
    })
}

/// Simulates a sample given every latent quantity of `state`, with a zero
/// presample and an intercept.
pub fn simulate_data<R: Rng + ?Sized>(state: &ParameterState, config: &ModelConfig, rng: &mut R) -> Result<Dataset> {
    let n = config.n_vars;
    let t_len = state.s.len();
    if config.d_dim != 1 {
        return Err(Error::Config(
            "data simulation assumes a single intercept column".into(),
        ));
    }
    let presample = DMatrix::zeros(config.lags, n);
    let det = DMatrix::from_element(t_len, 1, 1.0);
    let (series, _) = simulate_observations(
        &state.a,
        &state.b,
        &state.omega,
        &state.s,
        &state.h,
        &presample,
        &det,
        rng,
    )?;
    let names = (1..=n).map(|i| format!("y{i}")).collect();
    Dataset::from_series_unchecked(
        names,
        &series,
        &DMatrix::from_element(config.lags + t_len, 1, 1.0),
        config.lags,
    )
}

/// Named scalar functionals of a state compared by the harness.
pub fn monitored_statistics(state: &ParameterState, config: &ModelConfig) -> Vec<(String, f64)> {
    let n = config.n_vars;
    let m = config.regimes;
    let mut out = Vec::new();
    for eq in config.patterns.tvi_equations() {
        for r in 0..m {
            out.push((
                format!("kappa[{}][{}]==1", eq + 1, r + 1),
                f64::from(state.kappa[eq][r] == 0),
            ));
        }
    }
    for eq in 0..n {
        for r in 0..m {
            out.push((format!("omega[{}][{}]", eq + 1, r + 1), state.omega[(eq, r)]));
            out.push((format!("omega[{}][{}]^2", eq + 1, r + 1), state.omega[(eq, r)].powi(2)));
            out.push((format!("|omega[{}][{}]|", eq + 1, r + 1), state.omega[(eq, r)].abs()));
            out.push((
                format!("B{}[{},{}]^2", r + 1, eq + 1, eq + 1),
                state.b[r][(eq, eq)].powi(2),
            ));
        }
        out.push((format!("log gamma_B[{}]", eq + 1), state.shrink_b.gamma[eq].ln()));
        out.push((format!("log gamma_A[{}]", eq + 1), state.shrink_a.gamma[eq].ln()));
        out.push((format!("rho[{}]", eq + 1), state.rho[eq]));
        out.push((format!("sigma2_omega[{}]", eq + 1), state.sigma2_omega[eq]));
        out.push((format!("log sigma2_omega[{}]", eq + 1), state.sigma2_omega[eq].ln()));
        if let Some(t) = state.h.ncols().checked_sub(1) {
            out.push((format!("h[{}][T]", eq + 1), state.h[(eq, t)]));
        }
        for j in 0..state.a.ncols() {
            out.push((format!("A[{},{}]", eq + 1, j + 1), state.a[(eq, j)]));
        }
    }
    for r in 0..m {
        if m > 1 {
            out.push((format!("P[{},{}]", r + 1, r + 1), state.p[(r, r)]));
            out.push((format!("pi0[{}]", r + 1), state.pi0[r]));
        }
        if !state.s.is_empty() {
            let share = state.s.iter().filter(|&&s| s == r).count() as f64 / state.s.len() as f64;
            out.push((format!("share[{}]", r + 1), share));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GewekeStatistic {
    pub name: String,
    pub prior_mean: f64,
    pub gibbs_mean: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GewekeReport {
    pub iterations: usize,
    pub statistics: Vec<GewekeStatistic>,
}

impl GewekeReport {
    pub fn max_abs_z(&self) -> f64 {
        self.statistics.iter().map(|s| s.z.abs()).fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<&GewekeStatistic> {
        self.statistics.iter().find(|s| s.name == name)
    }
}

/// Size of a joint-distribution test run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GewekeSettings {
    pub t_len: usize,
    pub iterations: usize,
    /// Gibbs sweeps between successive data re-simulations.
    pub sweeps_per_cycle: usize,
}

impl GewekeSettings {
    /// Full-size run: 20 000 cycles of five sweeps on `T = 30`.
    pub fn reference() -> Self {
        GewekeSettings {
            t_len: 30,
            iterations: 20_000,
            sweeps_per_cycle: 5,
        }
    }
}

/// Two equations, one lag, two regimes; the second equation chooses between
/// an unrestricted row and one excluding the first variable. The priors keep
/// simulated data away from explosive dynamics and heavy-tailed `B`.
pub fn geweke_reference_config() -> ModelConfig {
    let patterns =
        PatternSet::parse("2 full **\n2 excl 0*\n", 2, DefaultRows::LowerTriangular).expect("valid reference patterns");
    let mut cfg = ModelConfig::new(2, 1, 1, 2, patterns).expect("valid reference config");
    cfg.priors.s_s_a = 0.32;
    cfg.priors.own_lag_mean = 0.0;
    cfg.priors.s_s_b = 6.4;
    cfg.priors.nu_s_b = 10.0;
    cfg
}

/// Joint-distribution test: compares the monitored statistics under
/// independent prior draws with those along the successive-conditional
/// chain that alternates Gibbs sweeps with re-simulating the data.
/// Standard errors of the chain use Geyer's initial monotone sequence.
pub fn geweke_joint_test<R: Rng + ?Sized>(
    config: &ModelConfig,
    settings: GewekeSettings,
    options: SweepOptions,
    rng: &mut R,
) -> Result<GewekeReport> {
    let GewekeSettings {
        t_len,
        iterations,
        sweeps_per_cycle,
    } = settings;
    if iterations < 100 || sweeps_per_cycle == 0 {
        return Err(Error::Config(
            "the harness needs at least 100 iterations and one sweep per cycle".into(),
        ));
    }
    let sampler = Sampler::new(config, options)?;
    let mut marginal: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    for i in 0..iterations {
        let state = sample_prior_state(config, t_len, &options, rng)?;
        let stats = monitored_statistics(&state, config);
        if i == 0 {
            names = stats.iter().map(|(n, _)| n.clone()).collect();
            marginal = vec![Vec::with_capacity(iterations); names.len()];
        }
        for (j, (_, v)) in stats.into_iter().enumerate() {
            marginal[j].push(v);
        }
    }
    let mut successive: Vec<Vec<f64>> = vec![Vec::with_capacity(iterations); names.len()];
    let mut state = sample_prior_state(config, t_len, &options, rng)?;
    for _ in 0..iterations {
        let data = simulate_data(&state, config, rng)?;
        for _ in 0..sweeps_per_cycle {
            sampler.sweep(&mut state, &data, rng)?;
        }
        for (j, (_, v)) in monitored_statistics(&state, config).into_iter().enumerate() {
            successive[j].push(v);
        }
    }
    let statistics = names
        .into_iter()
        .enumerate()
        .map(|(j, name)| {
            let (m1, v1) = mean_var(&marginal[j]);
            let (m2, se2) = mcmc_standard_error(&successive[j]);
            let se = (v1 / iterations as f64 + se2 * se2).sqrt();
            let z = if se > 0.0 {
                (m1 - m2) / se
            } else if m1 == m2 {
                0.0
            } else {
                f64::INFINITY
            };
            GewekeStatistic {
                name,
                prior_mean: m1,
                gibbs_mean: m2,
                z,
            }
        })
        .collect();
    Ok(GewekeReport { iterations, statistics })
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Mean and Monte Carlo standard error of a correlated sequence using
/// Geyer's initial monotone positive sequence estimator.
pub fn mcmc_standard_error(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let autocov = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let gamma0 = autocov(0);
    if gamma0 == 0.0 {
        return (mean, 0.0);
    }
    let mut sum = -gamma0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = autocov(lag) + autocov(lag + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    (mean, (sum.max(gamma0) / n as f64).sqrt())
}
