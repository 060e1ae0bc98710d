//! Model configuration: the TOML document read from disk and the resolved
//! [`ModelConfig`] used by the sampler.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::Transform;
use super::patterns::{DefaultRows, PatternSet};
use crate::error::{Error, Result};
use crate::priors::ShrinkagePrior;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    #[serde(rename = "nu_B")]
    pub nu_b: f64,
    #[serde(rename = "nu_gamma_B")]
    pub nu_gamma_b: f64,
    #[serde(rename = "s_s_B")]
    pub s_s_b: f64,
    #[serde(rename = "nu_s_B")]
    pub nu_s_b: f64,
    #[serde(rename = "nu_A")]
    pub nu_a: f64,
    #[serde(rename = "nu_gamma_A")]
    pub nu_gamma_a: f64,
    #[serde(rename = "s_s_A")]
    pub s_s_a: f64,
    #[serde(rename = "nu_s_A")]
    pub nu_s_a: f64,
    /// Dirichlet persistence `d_m` added to the diagonal of `P`.
    pub d_m: f64,
    pub omega_shape: f64,
    pub omega_scale: f64,
    /// Prior mean of each equation's own first lag.
    pub own_lag_mean: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            nu_b: 10.0,
            nu_gamma_b: 10.0,
            s_s_b: 100.0,
            nu_s_b: 1.0,
            nu_a: 10.0,
            nu_gamma_a: 10.0,
            s_s_a: 10.0,
            nu_s_a: 10.0,
            d_m: 11.0,
            omega_shape: 1.0,
            omega_scale: 1.0,
            own_lag_mean: 1.0,
        }
    }
}

impl PriorConfig {
    pub fn structural(&self) -> ShrinkagePrior {
        ShrinkagePrior {
            nu: self.nu_b,
            nu_gamma: self.nu_gamma_b,
            s_s: self.s_s_b,
            nu_s: self.nu_s_b,
        }
    }

    pub fn autoregressive(&self) -> ShrinkagePrior {
        ShrinkagePrior {
            nu: self.nu_a,
            nu_gamma: self.nu_gamma_a,
            s_s: self.s_s_a,
            nu_s: self.nu_s_a,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("nu_B", self.nu_b),
            ("nu_gamma_B", self.nu_gamma_b),
            ("s_s_B", self.s_s_b),
            ("nu_s_B", self.nu_s_b),
            ("nu_A", self.nu_a),
            ("nu_gamma_A", self.nu_gamma_a),
            ("s_s_A", self.s_s_a),
            ("nu_s_A", self.nu_s_a),
            ("omega_shape", self.omega_shape),
            ("omega_scale", self.omega_scale),
        ];
        for (name, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.d_m >= 0.0 && self.d_m.is_finite()) {
            return Err(Error::Config(format!("d_m must be nonnegative, got {}", self.d_m)));
        }
        if !self.own_lag_mean.is_finite() {
            return Err(Error::Config("own_lag_mean must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    /// Retained sweeps before thinning.
    pub draws: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    /// Store the full log-volatility paths (otherwise only `h_T`).
    pub store_paths: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            draws: 10_000,
            burnin: 5_000,
            thin: 1,
            seed: 1,
            store_paths: false,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::Config("draws must be positive".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be positive".into()));
        }
        Ok(())
    }

    pub fn stored_draws(&self) -> usize {
        self.draws / self.thin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub lags: usize,
    pub regimes: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { lags: 1, regimes: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformSection {
    /// Transform for columns not listed in `columns`.
    pub default: Option<String>,
    pub columns: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatternSection {
    pub default_rows: DefaultRows,
    pub declaration: Option<String>,
    pub file: Option<String>,
}

/// Pseudo-out-of-sample settings. Origins are the dates of the last
/// estimation observation, given as a list or as an inclusive range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastSection {
    pub origins: Vec<String>,
    pub origin_start: Option<String>,
    pub origin_end: Option<String>,
    pub horizons: Vec<usize>,
    /// Per-origin draw count; defaults to the chain section.
    pub draws: Option<usize>,
    pub burnin: Option<usize>,
    /// Score the marginal density of this variable instead of the joint.
    pub marginal: Option<String>,
}

impl Default for ForecastSection {
    fn default() -> Self {
        ForecastSection {
            origins: Vec::new(),
            origin_start: None,
            origin_end: None,
            horizons: vec![1],
            draws: None,
            burnin: None,
            marginal: None,
        }
    }
}

impl ForecastSection {
    /// One-based effective-sample positions of the origins in `dates`.
    pub fn origin_positions(&self, dates: &[String]) -> Result<Vec<usize>> {
        let find = |d: &String| {
            dates
                .iter()
                .position(|x| x == d)
                .map(|i| i + 1)
                .ok_or_else(|| Error::Config(format!("origin date {d:?} is not in the sample")))
        };
        let mut out: Vec<usize> = self.origins.iter().map(find).collect::<Result<_>>()?;
        match (&self.origin_start, &self.origin_end) {
            (Some(a), Some(b)) => {
                let (a, b) = (find(a)?, find(b)?);
                if a > b {
                    return Err(Error::Config("origin_start lies after origin_end".into()));
                }
                out.extend(a..=b);
            }
            (None, None) => {}
            _ => return Err(Error::Config("origin_start and origin_end go together".into())),
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }
}

/// The configuration document as written on disk.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub model: ModelSection,
    pub priors: PriorConfig,
    pub chain: ChainConfig,
    pub transforms: TransformSection,
    pub patterns: PatternSection,
    pub forecast: ForecastSection,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(file) = cfg.patterns.file.take() {
            let base = path.parent().unwrap_or_else(|| Path::new("."));
            let pattern_path = base.join(&file);
            let decl = std::fs::read_to_string(&pattern_path)
                .map_err(|e| Error::io(format!("reading patterns {}", pattern_path.display()), e))?;
            let mut text = cfg.patterns.declaration.take().unwrap_or_default();
            text.push_str(&decl);
            cfg.patterns.declaration = Some(text);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Per-column transforms for the given column names.
    pub fn transforms_for(&self, names: &[String]) -> Result<Vec<Transform>> {
        for key in self.transforms.columns.keys() {
            if !names.contains(key) {
                return Err(Error::Config(format!("transform given for unknown column {key:?}")));
            }
        }
        let default: Transform = match &self.transforms.default {
            Some(s) => s.parse()?,
            None => Transform::NONE,
        };
        names
            .iter()
            .map(|name| match self.transforms.columns.get(name) {
                Some(s) => s.parse(),
                None => Ok(default),
            })
            .collect()
    }

    pub fn pattern_set(&self, n_vars: usize) -> Result<PatternSet> {
        if self.patterns.file.is_some() {
            return Err(Error::Config(
                "pattern file must be resolved with ConfigFile::read".into(),
            ));
        }
        match &self.patterns.declaration {
            Some(text) => PatternSet::parse(text, n_vars, self.patterns.default_rows),
            None => PatternSet::fixed(n_vars, self.patterns.default_rows),
        }
    }

    /// Resolves the document against a dataset's dimensions.
    pub fn resolve(&self, n_vars: usize, d_dim: usize) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            n_vars,
            lags: self.model.lags,
            d_dim,
            regimes: self.model.regimes,
            patterns: self.pattern_set(n_vars)?,
            priors: self.priors,
            chain: self.chain,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Fully resolved model: dimensions, restriction patterns, priors and chain
/// controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_vars: usize,
    pub lags: usize,
    pub d_dim: usize,
    pub regimes: usize,
    pub patterns: PatternSet,
    pub priors: PriorConfig,
    pub chain: ChainConfig,
}

impl ModelConfig {
    pub fn new(n_vars: usize, lags: usize, d_dim: usize, regimes: usize, patterns: PatternSet) -> Result<Self> {
        let cfg = ModelConfig {
            n_vars,
            lags,
            d_dim,
            regimes,
            patterns,
            priors: PriorConfig::default(),
            chain: ChainConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_vars == 0 {
            return Err(Error::Config("at least one variable is required".into()));
        }
        if self.lags == 0 {
            return Err(Error::Config("lag order must be at least 1".into()));
        }
        if self.regimes == 0 {
            return Err(Error::Config("at least one regime is required".into()));
        }
        if self.patterns.n_vars() != self.n_vars {
            return Err(Error::Config(format!(
                "pattern set covers {} variables, model has {}",
                self.patterns.n_vars(),
                self.n_vars
            )));
        }
        self.priors.validate()?;
        self.chain.validate()
    }

    /// Columns of the design matrix.
    pub fn n_regressors(&self) -> usize {
        self.n_vars * self.lags + self.d_dim
    }

    /// SHA-256 over the model definition (dimensions, patterns, priors).
    /// Chain controls are excluded so that runs differing only in length or
    /// seed share a digest.
    pub fn digest(&self) -> String {
        let doc = serde_json::json!({
            "n_vars": self.n_vars,
            "lags": self.lags,
            "d_dim": self.d_dim,
            "regimes": self.regimes,
            "patterns": self.patterns.to_declaration(),
            "priors": self.priors,
        });
        hex::encode(Sha256::digest(doc.to_string().as_bytes()))
    }

    /// Check the dataset dimensions against the model.
    pub fn check_dataset(&self, dataset: &super::Dataset) -> Result<()> {
        if dataset.n_vars() != self.n_vars || dataset.p != self.lags || dataset.d_dim() != self.d_dim {
            return Err(Error::dimension(format!(
                "dataset has N={}, p={}, d={} but the model expects N={}, p={}, d={}",
                dataset.n_vars(),
                dataset.p,
                dataset.d_dim(),
                self.n_vars,
                self.lags,
                self.d_dim
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip() {
        let cfg = ConfigFile::default();
        let back = ConfigFile::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.priors.d_m, 11.0);
        assert_eq!(cfg.priors.s_s_b, 100.0);
    }

    #[test]
    fn parse_document() {
        let text = r#"
[model]
lags = 2
regimes = 2

[priors]
nu_B = 5.0
omega_scale = 2.0

[chain]
draws = 100
seed = 7

[transforms]
default = "log-diff*100"
columns = { rate = "none" }

[patterns]
default_rows = "lower-triangular"
declaration = """
3 baseline ***
3 only_m 0**
"""
"#;
        let cfg = ConfigFile::parse(text).unwrap();
        assert_eq!(cfg.priors.nu_b, 5.0);
        assert_eq!(cfg.priors.nu_gamma_b, 10.0);
        let names: Vec<String> = ["gdp", "cpi", "rate"].iter().map(|s| s.to_string()).collect();
        let tr = cfg.transforms_for(&names).unwrap();
        assert_eq!(tr[0].to_string(), "log-diff*100");
        assert_eq!(tr[2], Transform::NONE);
        let model = cfg.resolve(3, 1).unwrap();
        assert_eq!(model.patterns.tvi_equations(), vec![2]);
        assert_eq!(model.n_regressors(), 7);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ConfigFile::parse("[priors]\nnu_B = -1.0\n")
            .unwrap()
            .resolve(2, 1)
            .is_err());
        assert!(ConfigFile::parse("[chain]\ndraws = 0\n")
            .unwrap()
            .resolve(2, 1)
            .is_err());
        assert!(ConfigFile::parse("[model]\nregimes = 0\n")
            .unwrap()
            .resolve(2, 1)
            .is_err());
        assert!(ConfigFile::parse("[model]\nbogus = 1\n").is_err());
    }

    #[test]
    fn digest_ignores_chain_controls() {
        let cfg = ConfigFile::default();
        let a = cfg.resolve(2, 1).unwrap();
        let mut b = a.clone();
        b.chain.seed = 99;
        assert_eq!(a.digest(), b.digest());
        b.priors.d_m = 3.0;
        assert_ne!(a.digest(), b.digest());
    }
}
