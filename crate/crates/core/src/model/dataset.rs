//! Observations, deterministic terms and lagged design rows.

use std::io::Read;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column transformation applied on ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub kind: TransformKind,
    /// Multiply the transformed value by 100.
    pub percent: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    None,
    Log,
    LogDiff,
}

impl Transform {
    pub const NONE: Transform = Transform {
        kind: TransformKind::None,
        percent: false,
    };

    pub fn new(kind: TransformKind, percent: bool) -> Self {
        Transform { kind, percent }
    }

    fn consumes_row(&self) -> bool {
        self.kind == TransformKind::LogDiff
    }

    fn scale(&self) -> f64 {
        if self.percent {
            100.0
        } else {
            1.0
        }
    }
}

impl Default for Transform {
    fn default() -> Self {
        Transform::NONE
    }
}

impl FromStr for Transform {
    type Err = Error;

    /// Accepts `none`, `log`, `log-diff`, optionally suffixed with `*100`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (base, percent) = match s.strip_suffix("*100") {
            Some(base) => (base.trim(), true),
            None => (s, false),
        };
        let kind = match base {
            "none" | "level" => TransformKind::None,
            "log" => TransformKind::Log,
            "log-diff" | "logdiff" | "dlog" => TransformKind::LogDiff,
            other => return Err(Error::Config(format!("unknown transform {other:?}"))),
        };
        Ok(Transform { kind, percent })
    }
}

impl std::fmt::Display for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let base = match self.kind {
            TransformKind::None => "none",
            TransformKind::Log => "log",
            TransformKind::LogDiff => "log-diff",
        };
        if self.percent {
            write!(f, "{base}*100")
        } else {
            f.write_str(base)
        }
    }
}

/// Applies per-column transforms to a raw table. When any column is
/// log-differenced the first row is dropped for every column.
pub fn apply_transforms(raw: &DMatrix<f64>, transforms: &[Transform]) -> Result<DMatrix<f64>> {
    let (rows, cols) = raw.shape();
    if transforms.len() != cols {
        return Err(Error::dimension(format!(
            "{} transforms for {cols} columns",
            transforms.len()
        )));
    }
    let drop = usize::from(transforms.iter().any(Transform::consumes_row));
    if rows <= drop {
        return Err(Error::InsufficientData {
            rows,
            required: drop + 1,
        });
    }
    let mut out = DMatrix::zeros(rows - drop, cols);
    for (j, tr) in transforms.iter().enumerate() {
        for t in drop..rows {
            let v = raw[(t, j)];
            let value = match tr.kind {
                TransformKind::None => v,
                TransformKind::Log => checked_ln(v, t, j)?,
                TransformKind::LogDiff => checked_ln(v, t, j)? - checked_ln(raw[(t - 1, j)], t - 1, j)?,
            };
            out[(t - drop, j)] = value * tr.scale();
        }
    }
    Ok(out)
}

fn checked_ln(v: f64, row: usize, column: usize) -> Result<f64> {
    if v > 0.0 {
        Ok(v.ln())
    } else {
        Err(Error::Parse {
            row: row + 1,
            column: column + 1,
            message: format!("log transform of non-positive value {v}"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub names: Vec<String>,
    /// Dates of the effective sample; empty when the data carry no dates.
    pub dates: Vec<String>,
    pub presample_dates: Vec<String>,
    /// The `p` rows preceding the effective sample.
    pub presample: DMatrix<f64>,
    /// `T × N` effective observations.
    pub y: DMatrix<f64>,
    /// `T × d` deterministic terms.
    pub d: DMatrix<f64>,
    /// `T × (N p + d)` design rows `(y_{t-1}, …, y_{t-p}, d_t)`.
    pub x: DMatrix<f64>,
    pub p: usize,
}

impl Dataset {
    /// Builds a dataset from `T_raw × N` levels; the first `p` rows become
    /// presample. `deterministic` must have one row per raw observation and
    /// defaults to an intercept.
    pub fn from_series(
        names: Vec<String>,
        dates: Vec<String>,
        series: &DMatrix<f64>,
        deterministic: Option<&DMatrix<f64>>,
        p: usize,
    ) -> Result<Self> {
        let (rows, n) = series.shape();
        if names.len() != n {
            return Err(Error::dimension(format!("{} names for {n} series", names.len())));
        }
        if !dates.is_empty() && dates.len() != rows {
            return Err(Error::dimension(format!("{} dates for {rows} rows", dates.len())));
        }
        if p == 0 {
            return Err(Error::Config("lag order must be at least 1".into()));
        }
        let intercept;
        let det = match deterministic {
            Some(d) => {
                if d.nrows() != rows {
                    return Err(Error::dimension("deterministic terms and series differ in length"));
                }
                d
            }
            None => {
                intercept = DMatrix::from_element(rows, 1, 1.0);
                &intercept
            }
        };
        let d_dim = det.ncols();
        let required = n * p + d_dim + 1;
        if rows < p || rows - p < required {
            return Err(Error::InsufficientData {
                rows: rows.saturating_sub(p),
                required,
            });
        }
        Self::assemble(names, dates, series, det, p)
    }

    /// Like [`Dataset::from_series`] but without the sample-size check; used
    /// by simulators and prior-only runs where `T` may be tiny or zero.
    pub fn from_series_unchecked(
        names: Vec<String>,
        series: &DMatrix<f64>,
        deterministic: &DMatrix<f64>,
        p: usize,
    ) -> Result<Self> {
        if series.nrows() < p {
            return Err(Error::InsufficientData {
                rows: series.nrows(),
                required: p,
            });
        }
        Self::assemble(names, Vec::new(), series, deterministic, p)
    }

    fn assemble(
        names: Vec<String>,
        dates: Vec<String>,
        series: &DMatrix<f64>,
        det: &DMatrix<f64>,
        p: usize,
    ) -> Result<Self> {
        let (rows, n) = series.shape();
        if let Some((t, j)) = find_non_finite(series).or_else(|| find_non_finite(det)) {
            return Err(Error::Parse {
                row: t + 1,
                column: j + 1,
                message: "non-finite value".into(),
            });
        }
        let t_eff = rows - p;
        let d_dim = det.ncols();
        let k = n * p + d_dim;
        let mut x = DMatrix::zeros(t_eff, k);
        for t in 0..t_eff {
            let raw_t = t + p;
            for lag in 1..=p {
                for j in 0..n {
                    x[(t, (lag - 1) * n + j)] = series[(raw_t - lag, j)];
                }
            }
            for j in 0..d_dim {
                x[(t, n * p + j)] = det[(raw_t, j)];
            }
        }
        Ok(Dataset {
            names,
            presample_dates: if dates.is_empty() {
                Vec::new()
            } else {
                dates[..p].to_vec()
            },
            dates: if dates.is_empty() { dates } else { dates[p..].to_vec() },
            presample: series.rows(0, p).into_owned(),
            y: series.rows(p, t_eff).into_owned(),
            d: det.rows(p, t_eff).into_owned(),
            x,
            p,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.y.ncols()
    }

    /// Effective sample size `T`.
    pub fn len(&self) -> usize {
        self.y.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.y.nrows() == 0
    }

    pub fn d_dim(&self) -> usize {
        self.d.ncols()
    }

    /// Columns of the design matrix, `N p + d`.
    pub fn n_regressors(&self) -> usize {
        self.x.ncols()
    }

    /// All observations including the presample, `(p + T) × N`.
    pub fn full_series(&self) -> DMatrix<f64> {
        let n = self.n_vars();
        let mut out = DMatrix::zeros(self.p + self.len(), n);
        out.rows_mut(0, self.p).copy_from(&self.presample);
        out.rows_mut(self.p, self.len()).copy_from(&self.y);
        out
    }

    /// Dataset restricted to the first `t_end` effective observations.
    pub fn truncate(&self, t_end: usize) -> Dataset {
        let t_end = t_end.min(self.len());
        Dataset {
            names: self.names.clone(),
            dates: if self.dates.is_empty() {
                Vec::new()
            } else {
                self.dates[..t_end].to_vec()
            },
            presample_dates: self.presample_dates.clone(),
            presample: self.presample.clone(),
            y: self.y.rows(0, t_end).into_owned(),
            d: self.d.rows(0, t_end).into_owned(),
            x: self.x.rows(0, t_end).into_owned(),
            p: self.p,
        }
    }

    /// Design row for the period after the sample, given its deterministic terms.
    pub fn next_design_row(&self, history: &DMatrix<f64>, d_next: &[f64]) -> Vec<f64> {
        let n = self.n_vars();
        let rows = history.nrows();
        let mut x = Vec::with_capacity(self.n_regressors());
        for lag in 1..=self.p {
            for j in 0..n {
                x.push(history[(rows - lag, j)]);
            }
        }
        x.extend_from_slice(d_next);
        x
    }

    /// Writes the dataset (presample included) in the CSV layout read by
    /// [`load_dataset`].
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        let full = self.full_series();
        for t in 0..full.nrows() {
            let date = match (t < self.p, self.dates.is_empty()) {
                (_, true) => synthetic_date(t),
                (true, false) => self.presample_dates[t].clone(),
                (false, false) => self.dates[t - self.p].clone(),
            };
            let mut record = vec![date];
            record.extend((0..full.ncols()).map(|j| format!("{:e}", full[(t, j)])));
            w.write_record(&record).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("writing csv", e))
    }
}

fn synthetic_date(t: usize) -> String {
    format!("{:04}-{:02}-01", 2000 + t / 12, t % 12 + 1)
}

fn csv_err(e: csv::Error) -> Error {
    Error::io("csv", std::io::Error::other(e))
}

fn find_non_finite(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    for j in 0..m.ncols() {
        for t in 0..m.nrows() {
            if !m[(t, j)].is_finite() {
                return Some((t, j));
            }
        }
    }
    None
}

/// Raw CSV table: dates plus numeric columns.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub names: Vec<String>,
    pub dates: Vec<String>,
    pub values: DMatrix<f64>,
}

/// Reads a CSV with a header row, dates in the first column and numeric
/// columns after it.
pub fn read_table<R: Read>(source: R) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let header = reader
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            column: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.len() < 2 {
        return Err(Error::Parse {
            row: 1,
            column: 1,
            message: "expected a date column and at least one series".into(),
        });
    }
    let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: 1,
            message: e.to_string(),
        })?;
        if record.len() != header.len() {
            return Err(Error::Parse {
                row,
                column: record.len().min(header.len()) + 1,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        dates.push(record[0].trim().to_string());
        for (j, cell) in record.iter().enumerate().skip(1) {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row,
                column: j + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            values.push(v);
        }
    }
    let n = names.len();
    let rows = dates.len();
    Ok(RawTable {
        names,
        dates,
        values: DMatrix::from_row_slice(rows, n, &values),
    })
}

/// Loads a CSV, applies the column transforms and builds the lagged design
/// with an intercept.
pub fn load_dataset<R: Read>(source: R, transforms: &[Transform], p: usize) -> Result<Dataset> {
    let table = read_table(source)?;
    let transforms: Vec<Transform> = if transforms.is_empty() {
        vec![Transform::NONE; table.names.len()]
    } else {
        transforms.to_vec()
    };
    let series = apply_transforms(&table.values, &transforms)?;
    let drop = table.values.nrows() - series.nrows();
    let dates = table.dates[drop..].to_vec();
    Dataset::from_series(table.names, dates, &series, None, p)
}
