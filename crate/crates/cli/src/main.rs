use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tvisvar::analytics::{
    heteroskedasticity_sddr, impulse_response_bands, normalize_draws, regime_moments, regime_probabilities, summarize,
    tvi_probabilities, Assignment, ImpulseNormalization, Normalization,
};
use tvisvar::forecasting::{predictive_draws, rolling_evaluation, ForecastModel, RollingSettings, ScoreTarget};
use tvisvar::gibbs::{chain_rng, run_chains, SweepOptions};
use tvisvar::model::{load_dataset, ConfigFile, Dataset, ModelConfig};
use tvisvar::selfcheck::run_selfcheck;
use tvisvar::simulator::{generate_dgp, write_latent_csv, TruthFile};
use tvisvar::store::DrawStore;
use tvisvar::{Error, Result};

#[derive(Parser)]
#[command(
    name = "tvisvar",
    version,
    about = "Markov-switching SVARs with time-varying identification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset from a truth file.
    Simulate(SimulateArgs),
    /// Run the Gibbs sampler and write a draw store.
    Estimate(EstimateArgs),
    /// Turn a draw store into CSV tables.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Predictive summaries from a store, or a rolling-origin evaluation.
    Forecast(ForecastArgs),
    /// Run the oracle suite.
    Selfcheck(SelfcheckArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    truth: PathBuf,
    /// Effective sample length.
    #[arg(long, default_value_t = 600)]
    periods: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Where to write regimes, log-volatilities and shocks.
    #[arg(long)]
    latent: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    chains: usize,
    #[arg(long)]
    store_paths: bool,
    /// Output directory; with several chains each goes to `chain-<k>`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct StoreArgs {
    #[arg(long)]
    store: PathBuf,
    /// Comma-separated normalization policies applied in order.
    #[arg(long, default_value = "labels,sign-diag")]
    normalize: String,
    /// Config to compare against the store's digest.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Proceed when the config digest differs from the store's.
    #[arg(long)]
    allow_config_mismatch: bool,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Pattern probabilities per regime.
    Tvi {
        #[command(flatten)]
        store: StoreArgs,
        /// One-based equation; all equations when omitted.
        #[arg(long)]
        equation: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Posterior regime probabilities per period.
    Regimes {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Impulse-response bands.
    Irf {
        #[command(flatten)]
        store: StoreArgs,
        /// One-based regime.
        #[arg(long, default_value_t = 1)]
        regime: usize,
        /// One-based structural shock.
        #[arg(long)]
        shock: usize,
        #[arg(long, default_value_t = 60)]
        horizon: usize,
        /// Variable whose impact response is fixed.
        #[arg(long, requires = "normalize_value")]
        normalize_variable: Option<String>,
        #[arg(long, allow_negative_numbers = true)]
        normalize_value: Option<f64>,
        /// Comma-separated variables whose responses are cumulated.
        #[arg(long)]
        cumulate: Option<String>,
        #[arg(long, default_value_t = 0.68)]
        mass: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Log Savage-Dickey ratios for ω = 0 in every equation and regime.
    Sddr {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regime-specific sample moments of the data.
    Moments {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        data: PathBuf,
        /// Probability-weighted moments instead of hard assignment.
        #[arg(long)]
        weighted: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a normalized copy of a store.
    Normalize {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ForecastArgs {
    #[arg(long)]
    data: PathBuf,
    /// Model configs; the first is the benchmark. With `--store` only the
    /// first is used, to read the data.
    #[arg(long, required_unless_present = "store")]
    config: Vec<PathBuf>,
    /// Summarize predictive draws from this store at its sample end.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Horizon for `--store` mode.
    #[arg(long, default_value_t = 12)]
    horizon: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Replaces the per-origin draw count.
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    /// Per-model/horizon summary table.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelfcheckArgs {
    #[arg(long)]
    fast: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Analyze(a) => analyze(a),
        Command::Forecast(a) => forecast(a),
        Command::Selfcheck(a) => selfcheck(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            context: format!("creating {}", parent.display()),
            source: e,
        })?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io {
        context: format!("creating {}", path.display()),
        source: e,
    })
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io {
        context: format!("opening {}", path.display()),
        source: e,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io {
        context: "writing CSV".into(),
        source: std::io::Error::other(e.to_string()),
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.truth).map_err(|e| Error::Io {
        context: format!("reading {}", a.truth.display()),
        source: e,
    })?;
    let truth = TruthFile::parse(&text)?.into_truth()?;
    let mut rng = chain_rng(a.seed, 0);
    let (dataset, latent) = generate_dgp(&truth, a.periods, &mut rng)?;
    if latent.explosive {
        eprintln!(
            "warning: companion matrix has spectral radius {:.4}; the simulated series is explosive",
            latent.spectral_radius
        );
    }
    dataset.write_csv(create(&a.out)?)?;
    if let Some(path) = a.latent {
        write_latent_csv(&latent, create(&path)?)?;
    }
    Ok(())
}

fn load_config_and_data(config: &Path, data: &Path) -> Result<(ConfigFile, Dataset, ModelConfig)> {
    let file = ConfigFile::read(config)?;
    let table_names = tvisvar::model::read_table(open(data)?)?.names;
    let transforms = file.transforms_for(&table_names)?;
    let dataset = load_dataset(open(data)?, &transforms, file.model.lags)?;
    let model = file.resolve(dataset.n_vars(), dataset.d_dim())?;
    model.check_dataset(&dataset)?;
    Ok((file, dataset, model))
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let (_, dataset, mut model) = load_config_and_data(&a.config, &a.data)?;
    if let Some(d) = a.draws {
        model.chain.draws = d;
    }
    if let Some(b) = a.burnin {
        model.chain.burnin = b;
    }
    if let Some(t) = a.thin {
        model.chain.thin = t;
    }
    if let Some(s) = a.seed {
        model.chain.seed = s;
    }
    if a.store_paths {
        model.chain.store_paths = true;
    }
    if a.chains == 0 {
        return Err(Error::Config("--chains must be at least 1".into()));
    }
    model.validate()?;
    let stores = run_chains(&model, &dataset, a.chains, SweepOptions::default(), a.chains > 1)?;
    if stores.len() == 1 {
        stores[0].persist(&a.out)?;
    } else {
        for (k, store) in stores.iter().enumerate() {
            store.persist(&a.out.join(format!("chain-{}", k + 1)))?;
        }
    }
    Ok(())
}

fn load_store(args: &StoreArgs) -> Result<DrawStore> {
    let mut store = DrawStore::load(&args.store)?;
    if let Some(config) = &args.config {
        let file = ConfigFile::read(config)?;
        let man = &store.manifest;
        let model = file.resolve(man.n_vars, man.d_dim)?;
        if model.digest() != man.config_digest {
            eprintln!(
                "warning: config {} does not match the configuration that produced {}",
                config.display(),
                args.store.display()
            );
            if !args.allow_config_mismatch {
                return Err(Error::Config(
                    "config digest mismatch; pass --allow-config-mismatch to proceed".into(),
                ));
            }
        }
    }
    for policy in args.normalize.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let policy: Normalization = policy.parse()?;
        let (normalized, report) = normalize_draws(&store, policy)?;
        if !report.zero_diagonal.is_empty() {
            eprintln!(
                "warning: {} structural rows with a zero diagonal were left unflipped",
                report.zero_diagonal.len()
            );
        }
        store = normalized;
    }
    Ok(store)
}

fn variable_index(names: &[String], name: &str) -> Result<usize> {
    names
        .iter()
        .position(|n| n == name)
        .or_else(|| {
            name.parse::<usize>()
                .ok()
                .filter(|&i| i >= 1 && i <= names.len())
                .map(|i| i - 1)
        })
        .ok_or_else(|| Error::Config(format!("unknown variable {name:?}")))
}

fn analyze(cmd: AnalyzeCommand) -> Result<()> {
    match cmd {
        AnalyzeCommand::Tvi { store, equation, out } => {
            let store = load_store(&store)?;
            let patterns = store.manifest.pattern_set()?;
            let equations: Vec<usize> = match equation {
                Some(n) if n >= 1 && n <= store.manifest.n_vars => vec![n - 1],
                Some(n) => return Err(Error::Config(format!("equation {n} out of range"))),
                None => (0..store.manifest.n_vars).collect(),
            };
            let mut w = csv_writer(&out)?;
            w.write_record(["equation", "regime", "pattern", "label", "restrictions", "probability"])
                .map_err(csv_err)?;
            for n in equations {
                let probs = tvi_probabilities(&store, n)?;
                let eq = patterns.equation(n);
                for m in 0..probs.nrows() {
                    for k in 0..probs.ncols() {
                        let p = eq.get(k);
                        w.write_record([
                            (n + 1).to_string(),
                            (m + 1).to_string(),
                            (k + 1).to_string(),
                            p.label().to_string(),
                            p.to_pattern_string(),
                            probs[(m, k)].to_string(),
                        ])
                        .map_err(csv_err)?;
                    }
                }
            }
            w.flush().map_err(|e| Error::Io {
                context: "writing tvi table".into(),
                source: e,
            })
        }
        AnalyzeCommand::Regimes { store, out } => {
            let store = load_store(&store)?;
            let probs = regime_probabilities(&store)?;
            let mut w = csv_writer(&out)?;
            let mut header = vec!["date".to_string()];
            header.extend((1..=probs.ncols()).map(|m| format!("regime{m}")));
            w.write_record(&header).map_err(csv_err)?;
            for t in 0..probs.nrows() {
                let mut row = vec![store
                    .manifest
                    .dates
                    .get(t)
                    .cloned()
                    .unwrap_or_else(|| (t + 1).to_string())];
                row.extend(probs.row(t).iter().map(|v| v.to_string()));
                w.write_record(&row).map_err(csv_err)?;
            }
            w.flush().map_err(|e| Error::Io {
                context: "writing regime table".into(),
                source: e,
            })
        }
        AnalyzeCommand::Irf {
            store,
            regime,
            shock,
            horizon,
            normalize_variable,
            normalize_value,
            cumulate,
            mass,
            out,
        } => {
            let store = load_store(&store)?;
            let names = store.manifest.names.clone();
            if regime == 0 || shock == 0 {
                return Err(Error::Config("regime and shock are one-based".into()));
            }
            let normalization = match (normalize_variable, normalize_value) {
                (Some(v), Some(value)) => Some(ImpulseNormalization {
                    variable: variable_index(&names, &v)?,
                    value,
                }),
                _ => None,
            };
            let cumulated = match cumulate {
                Some(list) => list
                    .split(',')
                    .map(|v| variable_index(&names, v.trim()))
                    .collect::<Result<Vec<_>>>()?,
                None => Vec::new(),
            };
            let bands =
                impulse_response_bands(&store, regime - 1, horizon, shock - 1, normalization, &cumulated, mass)?;
            let mut w = csv_writer(&out)?;
            w.write_record([
                "horizon",
                "variable",
                "mean",
                "median",
                "lower",
                "upper",
                "hdi_lower",
                "hdi_upper",
            ])
            .map_err(csv_err)?;
            for (h, row) in bands.bands.iter().enumerate() {
                for (j, s) in row.iter().enumerate() {
                    w.write_record([
                        h.to_string(),
                        names[j].clone(),
                        s.mean.to_string(),
                        s.median.to_string(),
                        s.lower.to_string(),
                        s.upper.to_string(),
                        s.hdi_lower.to_string(),
                        s.hdi_upper.to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
            w.flush().map_err(|e| Error::Io {
                context: "writing irf table".into(),
                source: e,
            })
        }
        AnalyzeCommand::Sddr { store: args, out } => {
            let store = load_store(&args)?;
            let (shape, scale) = match &args.config {
                Some(c) => {
                    let f = ConfigFile::read(c)?;
                    (f.priors.omega_shape, f.priors.omega_scale)
                }
                None => {
                    let d = tvisvar::model::PriorConfig::default();
                    (d.omega_shape, d.omega_scale)
                }
            };
            let mut w = csv_writer(&out)?;
            w.write_record(["equation", "regime", "log_sddr"]).map_err(csv_err)?;
            for n in 0..store.manifest.n_vars {
                for m in 0..store.manifest.regimes {
                    let v = heteroskedasticity_sddr(&store, n, m, shape, scale)?;
                    w.write_record([(n + 1).to_string(), (m + 1).to_string(), v.to_string()])
                        .map_err(csv_err)?;
                }
            }
            w.flush().map_err(|e| Error::Io {
                context: "writing sddr table".into(),
                source: e,
            })
        }
        AnalyzeCommand::Moments {
            store: args,
            data,
            weighted,
            out,
        } => {
            let store = load_store(&args)?;
            let dataset = match &args.config {
                Some(c) => load_config_and_data(c, &data)?.1,
                None => load_dataset(open(&data)?, &[], store.manifest.lags)?,
            };
            if dataset.len() != store.manifest.t_len {
                return Err(Error::Dimension(
                    "dataset length differs from the store's sample".into(),
                ));
            }
            let probs = regime_probabilities(&store)?;
            let assignment = if weighted {
                Assignment::Weighted
            } else {
                Assignment::Hard
            };
            let moments = regime_moments(&dataset, &probs, assignment)?;
            let names = &dataset.names;
            let mut w = csv_writer(&out)?;
            let mut header = vec![
                "regime".to_string(),
                "weight".into(),
                "variable".into(),
                "mean".into(),
                "sd".into(),
            ];
            header.extend(names.iter().map(|n| format!("cov_{n}")));
            w.write_record(&header).map_err(csv_err)?;
            for (m, mom) in moments.iter().enumerate() {
                for (j, name) in names.iter().enumerate() {
                    let na = || "NA".to_string();
                    let mut row = vec![
                        (m + 1).to_string(),
                        mom.weight.to_string(),
                        name.clone(),
                        mom.mean.as_ref().map_or_else(na, |v| v[j].to_string()),
                        mom.sd.as_ref().map_or_else(na, |v| v[j].to_string()),
                    ];
                    row.extend(
                        (0..names.len()).map(|k| mom.covariance.as_ref().map_or_else(na, |c| c[(j, k)].to_string())),
                    );
                    w.write_record(&row).map_err(csv_err)?;
                }
            }
            w.flush().map_err(|e| Error::Io {
                context: "writing moments table".into(),
                source: e,
            })
        }
        AnalyzeCommand::Normalize { store, out } => load_store(&store)?.persist(&out),
    }
}

fn forecast(a: ForecastArgs) -> Result<()> {
    if let Some(path) = &a.store {
        let store = DrawStore::load(path)?;
        let dataset = match a.config.first() {
            Some(c) => load_config_and_data(c, &a.data)?.1,
            None => load_dataset(open(&a.data)?, &[], store.manifest.lags)?,
        };
        if dataset.len() != store.manifest.t_len || dataset.names != store.manifest.names {
            return Err(Error::Dimension("dataset does not match the store's sample".into()));
        }
        if a.horizon == 0 {
            return Err(Error::Config("--horizon must be at least 1".into()));
        }
        let mut rng = chain_rng(a.seed, 0);
        let n = dataset.n_vars();
        let mut values = vec![vec![Vec::with_capacity(store.len()); n]; a.horizon];
        for draw in store.draws() {
            let path = predictive_draws(&draw, &dataset, a.horizon, None, &mut rng)?;
            for h in 0..a.horizon {
                for j in 0..n {
                    values[h][j].push(path.y[(h, j)]);
                }
            }
        }
        let mut w = csv_writer(&a.out)?;
        w.write_record(["horizon", "variable", "mean", "median", "lower", "upper"])
            .map_err(csv_err)?;
        for (h, row) in values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let s = summarize(v, 0.68)?;
                w.write_record([
                    (h + 1).to_string(),
                    dataset.names[j].clone(),
                    s.mean.to_string(),
                    s.median.to_string(),
                    s.lower.to_string(),
                    s.upper.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        return w.flush().map_err(|e| Error::Io {
            context: "writing predictive table".into(),
            source: e,
        });
    }

    let mut models = Vec::new();
    let mut first: Option<(ConfigFile, Dataset)> = None;
    for path in &a.config {
        let (file, dataset, model) = load_config_and_data(path, &a.data)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("model{}", models.len() + 1));
        if let Some((_, d0)) = &first {
            if d0.y != dataset.y {
                return Err(Error::Config(
                    "all models must see the same sample (matching lags and transforms)".into(),
                ));
            }
        }
        models.push(ForecastModel { name, config: model });
        if first.is_none() {
            first = Some((file, dataset));
        }
    }
    let (file, dataset) = first.expect("at least one config");
    let origins = file.forecast.origin_positions(&dataset.dates)?;
    if origins.is_empty() {
        return Err(Error::Config("no forecast origins configured".into()));
    }
    let target = match &file.forecast.marginal {
        Some(v) => ScoreTarget::Marginal(variable_index(&dataset.names, v)?),
        None => ScoreTarget::Joint,
    };
    let settings = RollingSettings {
        origins,
        horizons: file.forecast.horizons.clone(),
        target,
        draws: a.draws.or(file.forecast.draws),
        burnin: a.burnin.or(file.forecast.burnin),
    };
    let report = rolling_evaluation(&models, &dataset, &settings)?;
    report.write_csv(create(&a.out)?)?;
    if let Some(path) = &a.summary {
        report.write_summary_csv(create(path)?)?;
    }
    Ok(())
}

fn selfcheck(a: SelfcheckArgs) -> Result<()> {
    let results = run_selfcheck(a.fast, a.seed)?;
    let mut failed = 0;
    for r in &results {
        println!(
            "{} {:<45} {:>12.4e} ({})",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.value,
            r.threshold
        );
        if !r.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(Error::Numerical(format!("{failed} self-check(s) failed")));
    }
    Ok(())
}
