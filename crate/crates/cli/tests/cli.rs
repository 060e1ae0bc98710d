use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TRUTH: &str = r#"
names = ["gdp", "infl", "rate"]
lags = 1
a = [[0.5, 0.0, 0.0, 0.1], [0.1, 0.5, 0.0, 0.0], [0.0, 0.1, 0.5, -0.1]]
b = [
  [[1.0, 0.0, 0.0], [0.5, 1.0, 0.0], [0.0, -2.0, 1.0]],
  [[1.0, 0.0, 0.0], [0.5, 1.0, 0.0], [2.0, 0.0, 1.0]],
]
p = [[0.95, 0.05], [0.05, 0.95]]
pi0 = [0.5, 0.5]
omega = [[0.8, -0.8], [0.8, 0.8], [0.8, 1.0]]
rho = [0.9, 0.9, 0.9]
"#;

const CONFIG: &str = r#"
[model]
lags = 1
regimes = 2

[chain]
draws = 100
burnin = 50
seed = 3

[patterns]
declaration = """
3 full ***
3 x1 0**
3 x2 *0*
"""
"#;

fn tvisvar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tvisvar"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Simulated data, config and an estimated store in a temporary directory.
fn fitted() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("truth.toml"), TRUTH).unwrap();
    fs::write(p.join("model.toml"), CONFIG).unwrap();
    let out = tvisvar(&[
        "simulate",
        "--truth",
        s(&p.join("truth.toml")),
        "--periods",
        "150",
        "--out",
        s(&p.join("data.csv")),
        "--latent",
        s(&p.join("latent.csv")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = tvisvar(&[
        "estimate",
        "--data",
        s(&p.join("data.csv")),
        "--config",
        s(&p.join("model.toml")),
        "--out",
        s(&p.join("store")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn estimate_writes_a_store_and_tvi_rows_sum_to_one() {
    let dir = fitted();
    let p = dir.path();
    let manifest = fs::read_to_string(p.join("store/manifest.json")).unwrap();
    assert!(manifest.contains("\"draws\": 100"));

    let out = tvisvar(&[
        "analyze",
        "tvi",
        "--store",
        s(&p.join("store")),
        "--out",
        s(&p.join("tvi.csv")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&p.join("tvi.csv"));
    let prob_col = header
        .iter()
        .position(|h| h == "probability")
        .expect("probability column");
    let eq_col = header.iter().position(|h| h == "equation").unwrap();
    let regime_col = header.iter().position(|h| h == "regime").unwrap();
    let mut sums = std::collections::BTreeMap::new();
    for row in &rows {
        let key = (row[eq_col].clone(), row[regime_col].clone());
        *sums.entry(key).or_insert(0.0) += row[prob_col].parse::<f64>().unwrap();
    }
    assert_eq!(sums.len(), 6);
    for total in sums.values() {
        assert!((total - 1.0).abs() < 1e-9);
    }

    for (cmd, extra) in [
        ("regimes", vec![]),
        ("sddr", vec![]),
        ("irf", vec!["--shock", "3", "--horizon", "8"]),
    ] {
        let file = p.join(format!("{cmd}.csv"));
        let store = p.join("store");
        let mut args = vec!["analyze", cmd, "--store", s(&store), "--out", s(&file)];
        args.extend(extra);
        let out = tvisvar(&args);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!read_csv(&file).1.is_empty());
    }
}

#[test]
fn config_digest_mismatch_is_refused_unless_overridden() {
    let dir = fitted();
    let p = dir.path();
    let changed = CONFIG.replace("regimes = 2", "regimes = 2\n\n[priors]\nd_m = 5.0");
    fs::write(p.join("other.toml"), changed).unwrap();
    let (store, other, model) = (p.join("store"), p.join("other.toml"), p.join("model.toml"));
    let (r1, r2) = (p.join("r.csv"), p.join("r2.csv"));
    let base = [
        "analyze",
        "regimes",
        "--store",
        s(&store),
        "--config",
        s(&other),
        "--out",
        s(&r1),
    ];
    let out = tvisvar(&base);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("digest"));
    let mut args = base.to_vec();
    args.push("--allow-config-mismatch");
    assert!(tvisvar(&args).status.success());
    let same = [
        "analyze",
        "regimes",
        "--store",
        s(&store),
        "--config",
        s(&model),
        "--out",
        s(&r2),
    ];
    assert!(tvisvar(&same).status.success());
}

#[test]
fn unknown_flags_and_bad_inputs_exit_with_one() {
    assert_eq!(tvisvar(&["estimate", "--frobnicate"]).status.code(), Some(1));
    assert_eq!(tvisvar(&["--help"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("bad.toml"), "[model]\nlags = 0\n").unwrap();
    fs::write(p.join("data.csv"), "date,a\n1,1\n2,2\n").unwrap();
    let out = tvisvar(&[
        "estimate",
        "--data",
        s(&p.join("data.csv")),
        "--config",
        s(&p.join("bad.toml")),
        "--out",
        s(&p.join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_store_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = tvisvar(&[
        "analyze",
        "tvi",
        "--store",
        s(&dir.path().join("nope")),
        "--out",
        s(&dir.path().join("t.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn store_forecast_writes_predictive_summaries() {
    let dir = fitted();
    let p = dir.path();
    let out = tvisvar(&[
        "forecast",
        "--data",
        s(&p.join("data.csv")),
        "--config",
        s(&p.join("model.toml")),
        "--store",
        s(&p.join("store")),
        "--horizon",
        "4",
        "--out",
        s(&p.join("fc.csv")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = read_csv(&p.join("fc.csv"));
    assert!(!rows.is_empty());
}

#[test]
fn fast_selfcheck_passes() {
    let out = tvisvar(&["selfcheck", "--fast"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("PASS") && !stdout.contains("FAIL"));
}

#[test]
fn rolling_evaluation_compares_models_against_the_benchmark() {
    let dir = fitted();
    let p = dir.path();
    let forecast = "\n[forecast]\norigin_start = \"2012-03-01\"\norigin_end = \"2012-05-01\"\nhorizons = [1, 2]\ndraws = 40\nburnin = 20\n";
    fs::write(p.join("switching.toml"), format!("{CONFIG}{forecast}")).unwrap();
    let single = CONFIG.replace("regimes = 2", "regimes = 1");
    fs::write(p.join("single.toml"), format!("{single}{forecast}")).unwrap();
    let (data, a, b) = (p.join("data.csv"), p.join("single.toml"), p.join("switching.toml"));
    let (out_path, summary) = (p.join("rolling.csv"), p.join("summary.csv"));
    let out = tvisvar(&[
        "forecast",
        "--data",
        s(&data),
        "--config",
        s(&a),
        "--config",
        s(&b),
        "--out",
        s(&out_path),
        "--summary",
        s(&summary),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&out_path);
    assert_eq!(rows.len(), 3 * 2 * 2);
    let model = header.iter().position(|h| h == "model").unwrap();
    let rel = header.iter().position(|h| h == "relative_log_score").unwrap();
    for row in rows.iter().filter(|r| r[model] == "single") {
        assert_eq!(row[rel].parse::<f64>().unwrap(), 0.0);
    }
    assert_eq!(read_csv(&summary).1.len(), 2 * 2);
}
