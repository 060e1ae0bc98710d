//! Persisted posterior draws.
//!
//! A store is a directory with a JSON manifest and one file per parameter
//! block. Each block file holds little-endian `f64` values in draw-major
//! order, `draws × width`. The manifest records a SHA-256 digest per file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ParameterState, PatternSet};

pub const STORE_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub width: usize,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub n_vars: usize,
    pub lags: usize,
    pub d_dim: usize,
    pub regimes: usize,
    pub t_len: usize,
    pub draws: usize,
    pub seed: u64,
    pub chain_id: u64,
    pub config_digest: String,
    pub names: Vec<String>,
    pub dates: Vec<String>,
    /// Pattern declaration in the text format of [`PatternSet::parse`].
    pub patterns: String,
    pub store_paths: bool,
    /// Normalization policies applied after sampling.
    pub normalization: Vec<String>,
    pub blocks: Vec<BlockInfo>,
}

impl Manifest {
    pub fn new(config: &ModelConfig, names: Vec<String>, dates: Vec<String>, t_len: usize, chain_id: u64) -> Self {
        Manifest {
            version: STORE_VERSION,
            n_vars: config.n_vars,
            lags: config.lags,
            d_dim: config.d_dim,
            regimes: config.regimes,
            t_len,
            draws: 0,
            seed: config.chain.seed,
            chain_id,
            config_digest: config.digest(),
            names,
            dates,
            patterns: config.patterns.to_declaration(),
            store_paths: config.chain.store_paths,
            normalization: Vec::new(),
            blocks: Vec::new(),
        }
    }

    pub fn n_regressors(&self) -> usize {
        self.n_vars * self.lags + self.d_dim
    }

    pub fn pattern_set(&self) -> Result<PatternSet> {
        PatternSet::parse(&self.patterns, self.n_vars, Default::default())
    }

    fn widths(&self) -> Vec<(&'static str, usize)> {
        let n = self.n_vars;
        let m = self.regimes;
        let mut out = vec![
            ("A", n * self.n_regressors()),
            ("B", m * n * n),
            ("kappa", n * m),
            ("s", self.t_len),
            ("P", m * m),
            ("pi0", m),
            ("omega", n * m),
            ("rho", n),
            ("sigma2_omega", n),
            ("gamma_B", n),
            ("s_B", n),
            ("s_gamma_B", 1),
            ("gamma_A", n),
            ("s_A", n),
            ("s_gamma_A", 1),
            ("h_last", n),
            ("omega_mean", n * m),
            ("omega_var", n * m),
            ("loglik", 1),
            ("filtered_last", m),
        ];
        if self.store_paths {
            out.push(("h", n * self.t_len));
        }
        out
    }
}

/// One stored posterior draw, decoded.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredDraw {
    pub a: DMatrix<f64>,
    pub b: Vec<DMatrix<f64>>,
    pub kappa: Vec<Vec<usize>>,
    pub s: Vec<usize>,
    pub p: DMatrix<f64>,
    pub pi0: Vec<f64>,
    pub omega: DMatrix<f64>,
    pub rho: Vec<f64>,
    pub sigma2_omega: Vec<f64>,
    pub gamma_b: Vec<f64>,
    pub s_b: Vec<f64>,
    pub s_gamma_b: f64,
    pub gamma_a: Vec<f64>,
    pub s_a: Vec<f64>,
    pub s_gamma_a: f64,
    pub h_last: Vec<f64>,
    pub omega_mean: DMatrix<f64>,
    pub omega_var: DMatrix<f64>,
    /// `log p(y | θ, h)` from the forward filter at the stored state.
    pub log_likelihood: f64,
    /// `Pr(s_T = m | y, θ, h)`.
    pub filtered_last: Vec<f64>,
    pub h: Option<DMatrix<f64>>,
}

impl StoredDraw {
    pub fn from_state(state: &ParameterState, log_likelihood: f64, filtered_last: Vec<f64>, keep_path: bool) -> Self {
        let t_len = state.h.ncols();
        StoredDraw {
            a: state.a.clone(),
            b: state.b.clone(),
            kappa: state.kappa.clone(),
            s: state.s.clone(),
            p: state.p.clone(),
            pi0: state.pi0.clone(),
            omega: state.omega.clone(),
            rho: state.rho.clone(),
            sigma2_omega: state.sigma2_omega.clone(),
            gamma_b: state.shrink_b.gamma.clone(),
            s_b: state.shrink_b.scale.clone(),
            s_gamma_b: state.shrink_b.global,
            gamma_a: state.shrink_a.gamma.clone(),
            s_a: state.shrink_a.scale.clone(),
            s_gamma_a: state.shrink_a.global,
            h_last: if t_len == 0 {
                vec![0.0; state.h.nrows()]
            } else {
                state.h.column(t_len - 1).iter().copied().collect()
            },
            omega_mean: state.omega_mean.clone(),
            omega_var: state.omega_var.clone(),
            log_likelihood,
            filtered_last,
            h: keep_path.then(|| state.h.clone()),
        }
    }

    pub fn n_regimes(&self) -> usize {
        self.b.len()
    }

    fn encode(&self, name: &str, out: &mut Vec<f64>) {
        let row_major = |m: &DMatrix<f64>, out: &mut Vec<f64>| {
            for i in 0..m.nrows() {
                out.extend(m.row(i).iter());
            }
        };
        match name {
            "A" => row_major(&self.a, out),
            "B" => self.b.iter().for_each(|b| row_major(b, out)),
            "kappa" => self
                .kappa
                .iter()
                .for_each(|row| out.extend(row.iter().map(|&k| k as f64))),
            "s" => out.extend(self.s.iter().map(|&s| s as f64)),
            "P" => row_major(&self.p, out),
            "pi0" => out.extend(&self.pi0),
            "omega" => row_major(&self.omega, out),
            "rho" => out.extend(&self.rho),
            "sigma2_omega" => out.extend(&self.sigma2_omega),
            "gamma_B" => out.extend(&self.gamma_b),
            "s_B" => out.extend(&self.s_b),
            "s_gamma_B" => out.push(self.s_gamma_b),
            "gamma_A" => out.extend(&self.gamma_a),
            "s_A" => out.extend(&self.s_a),
            "s_gamma_A" => out.push(self.s_gamma_a),
            "h_last" => out.extend(&self.h_last),
            "omega_mean" => row_major(&self.omega_mean, out),
            "omega_var" => row_major(&self.omega_var, out),
            "loglik" => out.push(self.log_likelihood),
            "filtered_last" => out.extend(&self.filtered_last),
            "h" => {
                if let Some(h) = &self.h {
                    row_major(h, out)
                }
            }
            _ => unreachable!("unknown block {name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    width: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrawStore {
    pub manifest: Manifest,
    blocks: BTreeMap<String, Block>,
}

impl DrawStore {
    pub fn new(mut manifest: Manifest) -> Self {
        manifest.draws = 0;
        manifest.blocks.clear();
        let blocks = manifest
            .widths()
            .into_iter()
            .map(|(name, width)| {
                (
                    name.to_string(),
                    Block {
                        width,
                        data: Vec::new(),
                    },
                )
            })
            .collect();
        DrawStore { manifest, blocks }
    }

    pub fn len(&self) -> usize {
        self.manifest.draws
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.draws == 0
    }

    pub fn push(&mut self, draw: &StoredDraw) -> Result<()> {
        let mut buf = Vec::new();
        for (name, block) in self.blocks.iter_mut() {
            buf.clear();
            draw.encode(name, &mut buf);
            if buf.len() != block.width {
                return Err(Error::dimension(format!(
                    "block {name} expects width {} but the draw provides {}",
                    block.width,
                    buf.len()
                )));
            }
            block.data.extend_from_slice(&buf);
        }
        self.manifest.draws += 1;
        Ok(())
    }

    /// Flat `draws × width` values of a block.
    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.blocks.get(name).map(|b| b.data.as_slice())
    }

    pub fn block_width(&self, name: &str) -> Option<usize> {
        self.blocks.get(name).map(|b| b.width)
    }

    fn row(&self, name: &str, i: usize) -> &[f64] {
        let b = &self.blocks[name];
        &b.data[i * b.width..(i + 1) * b.width]
    }

    pub fn draw(&self, i: usize) -> StoredDraw {
        let man = &self.manifest;
        let n = man.n_vars;
        let m = man.regimes;
        let k = man.n_regressors();
        let mat = |name: &str, rows: usize, cols: usize| DMatrix::from_row_slice(rows, cols, self.row(name, i));
        let bflat = self.row("B", i);
        StoredDraw {
            a: mat("A", n, k),
            b: (0..m)
                .map(|r| DMatrix::from_row_slice(n, n, &bflat[r * n * n..(r + 1) * n * n]))
                .collect(),
            kappa: self
                .row("kappa", i)
                .chunks(m)
                .map(|c| c.iter().map(|&v| v as usize).collect())
                .collect(),
            s: self.row("s", i).iter().map(|&v| v as usize).collect(),
            p: mat("P", m, m),
            pi0: self.row("pi0", i).to_vec(),
            omega: mat("omega", n, m),
            rho: self.row("rho", i).to_vec(),
            sigma2_omega: self.row("sigma2_omega", i).to_vec(),
            gamma_b: self.row("gamma_B", i).to_vec(),
            s_b: self.row("s_B", i).to_vec(),
            s_gamma_b: self.row("s_gamma_B", i)[0],
            gamma_a: self.row("gamma_A", i).to_vec(),
            s_a: self.row("s_A", i).to_vec(),
            s_gamma_a: self.row("s_gamma_A", i)[0],
            h_last: self.row("h_last", i).to_vec(),
            omega_mean: mat("omega_mean", n, m),
            omega_var: mat("omega_var", n, m),
            log_likelihood: self.row("loglik", i)[0],
            filtered_last: self.row("filtered_last", i).to_vec(),
            h: man.store_paths.then(|| mat("h", n, man.t_len)),
        }
    }

    pub fn draws(&self) -> impl Iterator<Item = StoredDraw> + '_ {
        (0..self.len()).map(|i| self.draw(i))
    }

    /// A store with the same manifest holding the given draws.
    pub fn with_draws(&self, draws: impl IntoIterator<Item = StoredDraw>) -> Result<DrawStore> {
        let mut out = DrawStore::new(self.manifest.clone());
        out.manifest.normalization = self.manifest.normalization.clone();
        for d in draws {
            out.push(&d)?;
        }
        Ok(out)
    }

    /// Writes the store into `dir`, creating it if needed.
    pub fn persist(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let mut manifest = self.manifest.clone();
        manifest.blocks.clear();
        for (name, block) in &self.blocks {
            let bytes: Vec<u8> = block.data.iter().flat_map(|v| v.to_le_bytes()).collect();
            let file = format!("{name}.f64");
            let path = dir.join(&file);
            fs::write(&path, &bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
            manifest.blocks.push(BlockInfo {
                name: name.clone(),
                width: block.width,
                file,
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let path = dir.join(MANIFEST);
        fs::write(&path, json).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    /// Reads a store, verifying the version, block sizes and digests.
    pub fn load(dir: &Path) -> Result<DrawStore> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Corrupt {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != STORE_VERSION {
            return Err(Error::Version {
                found: version,
                expected: STORE_VERSION,
            });
        }
        let manifest: Manifest = serde_json::from_value(value).map_err(|e| Error::Corrupt {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let expected: BTreeMap<&str, usize> = manifest.widths().into_iter().collect();
        if expected.len() != manifest.blocks.len() {
            return Err(Error::Corrupt {
                path,
                message: "block list does not match the manifest dimensions".into(),
            });
        }
        let mut blocks = BTreeMap::new();
        for info in &manifest.blocks {
            let file = dir.join(&info.file);
            let corrupt = |message: String| Error::Corrupt {
                path: file.clone(),
                message,
            };
            if expected.get(info.name.as_str()) != Some(&info.width) {
                return Err(corrupt(format!(
                    "unexpected block {} of width {}",
                    info.name, info.width
                )));
            }
            let bytes = fs::read(&file).map_err(|e| Error::io(format!("reading {}", file.display()), e))?;
            let want = manifest.draws * info.width * 8;
            if bytes.len() != want {
                return Err(corrupt(format!("expected {want} bytes, found {}", bytes.len())));
            }
            if hex::encode(Sha256::digest(&bytes)) != info.sha256 {
                return Err(corrupt("digest mismatch".into()));
            }
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            blocks.insert(
                info.name.clone(),
                Block {
                    width: info.width,
                    data,
                },
            );
        }
        Ok(DrawStore { manifest, blocks })
    }

    /// Raw bytes of every block, for equality checks.
    pub fn block_bytes(&self) -> BTreeMap<String, Vec<u8>> {
        self.blocks
            .iter()
            .map(|(k, b)| (k.clone(), b.data.iter().flat_map(|v| v.to_le_bytes()).collect()))
            .collect()
    }
}
