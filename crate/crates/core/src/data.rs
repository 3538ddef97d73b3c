//! Two-sample dataset model and CSV ingestion.
//!
//! Records `0..n` form the validation sample (outcome, treatment, `x` and `s`);
//! records `n..N` form the auxiliary sample, which never carries `s`.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FqteError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub y: f64,
    pub t: u8,
    pub x: Vec<f64>,
    /// Detailed covariates; `Some` on validation rows only.
    pub s: Option<Vec<f64>>,
}

impl Record {
    pub fn validation(y: f64, t: u8, x: Vec<f64>, s: Vec<f64>) -> Self {
        Self {
            y,
            t,
            x,
            s: Some(s),
        }
    }

    pub fn auxiliary(y: f64, t: u8, x: Vec<f64>) -> Self {
        Self { y, t, x, s: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedDataset {
    records: Vec<Record>,
    n: usize,
}

impl FusedDataset {
    pub fn new(validation: Vec<Record>, auxiliary: Vec<Record>) -> Result<Self> {
        let n = validation.len();
        let mut records = validation;
        records.extend(auxiliary);
        let ds = Self { records, n };
        ds.check()?;
        Ok(ds)
    }

    fn check(&self) -> Result<()> {
        if self.n == 0 {
            return Err(FqteError::InvalidDataset(
                "validation sample is empty".into(),
            ));
        }
        if self.records.len() <= self.n {
            return Err(FqteError::InvalidDataset(
                "auxiliary sample is empty".into(),
            ));
        }
        let p_x = self.records[0].x.len();
        let p_s = match &self.records[0].s {
            Some(s) if !s.is_empty() => s.len(),
            _ => {
                return Err(FqteError::InvalidDataset(
                    "validation records need at least one detailed covariate".into(),
                ))
            }
        };
        for (i, r) in self.records.iter().enumerate() {
            let row = i + 1;
            if r.x.len() != p_x {
                return Err(FqteError::InvalidDataset(format!(
                    "record {row}: x has dimension {} (expected {p_x})",
                    r.x.len()
                )));
            }
            if r.t > 1 {
                return Err(FqteError::InvalidDataset(format!(
                    "record {row}: non-binary treatment {}",
                    r.t
                )));
            }
            match (&r.s, i < self.n) {
                (Some(s), true) if s.len() == p_s => {}
                (Some(s), true) => {
                    return Err(FqteError::InvalidDataset(format!(
                        "record {row}: s has dimension {} (expected {p_s})",
                        s.len()
                    )))
                }
                (None, false) => {}
                (None, true) => {
                    return Err(FqteError::InvalidDataset(format!(
                        "validation record {row} is missing s"
                    )))
                }
                (Some(_), false) => {
                    return Err(FqteError::InvalidDataset(format!(
                        "auxiliary record {row} carries s"
                    )))
                }
            }
            let finite = r.y.is_finite()
                && r.x.iter().all(|v| v.is_finite())
                && r.s.iter().flatten().all(|v| v.is_finite());
            if !finite {
                return Err(FqteError::InvalidDataset(format!(
                    "record {row} contains a non-finite value"
                )));
            }
        }
        for arm in [0u8, 1] {
            if !self.validation().iter().any(|r| r.t == arm) {
                return Err(FqteError::EmptyArm {
                    sample: "validation",
                    arm,
                });
            }
            if !self.records.iter().any(|r| r.t == arm) {
                return Err(FqteError::EmptyArm {
                    sample: "pooled",
                    arm,
                });
            }
        }
        Ok(())
    }

    /// Validation sample size `n`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Entire sample size `N` (validation plus auxiliary).
    pub fn big_n(&self) -> usize {
        self.records.len()
    }

    /// Sampling ratio `n / N`.
    pub fn nu(&self) -> f64 {
        self.n as f64 / self.records.len() as f64
    }

    pub fn validation(&self) -> &[Record] {
        &self.records[..self.n]
    }

    pub fn auxiliary(&self) -> &[Record] {
        &self.records[self.n..]
    }

    /// All `N` records, validation first.
    pub fn entire(&self) -> &[Record] {
        &self.records
    }

    pub fn p_x(&self) -> usize {
        self.records[0].x.len()
    }

    pub fn p_s(&self) -> usize {
        self.records[0].s.as_ref().map_or(0, Vec::len)
    }
}

/// Column names used to read and write the two CSV files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub y: String,
    pub t: String,
    pub x: Vec<String>,
    pub s: Vec<String>,
}

impl Schema {
    /// Default naming used by the simulation writer: `y`, `t`, `x1..`, `s1..`.
    pub fn numbered(p_x: usize, p_s: usize) -> Self {
        Self {
            y: "y".into(),
            t: "t".into(),
            x: (1..=p_x).map(|k| format!("x{k}")).collect(),
            s: (1..=p_s).map(|k| format!("s{k}")).collect(),
        }
    }
}

/// Target quantile level and the ordered calibration levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileSpec {
    pub p: f64,
    pub p_cal: Vec<f64>,
}

impl QuantileSpec {
    pub fn new(p: f64, p_cal: Option<Vec<f64>>) -> Result<Self> {
        check_level(p)?;
        let p_cal = p_cal.unwrap_or_else(|| vec![p]);
        if p_cal.is_empty() {
            return Err(FqteError::Config(
                "calibration levels must not be empty".into(),
            ));
        }
        for &level in &p_cal {
            check_level(level)?;
        }
        if p_cal.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FqteError::UnorderedLevels(p_cal));
        }
        Ok(Self { p, p_cal })
    }

    /// Number of calibration levels `d`.
    pub fn d(&self) -> usize {
        self.p_cal.len()
    }
}

fn check_level(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(FqteError::LevelOutOfRange(p))
    }
}

pub fn load_fused_dataset(
    validation_path: impl AsRef<Path>,
    auxiliary_path: impl AsRef<Path>,
    schema: &Schema,
) -> Result<FusedDataset> {
    let validation = read_records(validation_path.as_ref(), schema, true)?;
    let auxiliary = read_records(auxiliary_path.as_ref(), schema, false)?;
    if validation.is_empty() {
        return Err(FqteError::InvalidDataset(
            "validation file has no rows".into(),
        ));
    }
    if auxiliary.is_empty() {
        return Err(FqteError::InvalidDataset(
            "auxiliary file has no rows".into(),
        ));
    }
    FusedDataset::new(validation, auxiliary)
}

fn read_records(path: &Path, schema: &Schema, with_s: bool) -> Result<Vec<Record>> {
    let file = path.display().to_string();
    let handle = File::open(path).map_err(|source| FqteError::Io {
        path: file.clone(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(handle);
    let headers = reader
        .headers()
        .map_err(|e| FqteError::Csv {
            file: file.clone(),
            message: e.to_string(),
        })?
        .clone();

    let locate = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| FqteError::MissingColumn {
                file: file.clone(),
                column: name.to_string(),
            })
    };
    if !with_s {
        if let Some(name) = schema
            .s
            .iter()
            .find(|c| headers.iter().any(|h| h.trim() == c.as_str()))
        {
            return Err(FqteError::UnexpectedColumn {
                file: file.clone(),
                column: name.clone(),
            });
        }
    }
    let y_idx = locate(&schema.y)?;
    let t_idx = locate(&schema.t)?;
    let x_idx = schema
        .x
        .iter()
        .map(|c| locate(c))
        .collect::<Result<Vec<_>>>()?;
    let s_idx = if with_s {
        schema
            .s
            .iter()
            .map(|c| locate(c))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };

    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| FqteError::Csv {
            file: file.clone(),
            message: e.to_string(),
        })?;
        // 1-based data row (header excluded)
        let row_no = i + 1;
        let cell = |idx: usize, column: &str| -> Result<f64> {
            let raw = row.get(idx).unwrap_or("").trim();
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(FqteError::NonFinite {
                    file: file.clone(),
                    row: row_no,
                    column: column.to_string(),
                    value: raw.to_string(),
                }),
            }
        };
        let y = cell(y_idx, &schema.y)?;
        let raw_t = row.get(t_idx).unwrap_or("").trim();
        let t = match raw_t.parse::<f64>() {
            Ok(0.0) => 0,
            Ok(1.0) => 1,
            _ => {
                return Err(FqteError::NonBinaryTreatment {
                    file: file.clone(),
                    row: row_no,
                    column: schema.t.clone(),
                    value: raw_t.to_string(),
                })
            }
        };
        let x = x_idx
            .iter()
            .zip(&schema.x)
            .map(|(&idx, c)| cell(idx, c))
            .collect::<Result<Vec<_>>>()?;
        let s = if with_s {
            Some(
                s_idx
                    .iter()
                    .zip(&schema.s)
                    .map(|(&idx, c)| cell(idx, c))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        out.push(Record { y, t, x, s });
    }
    Ok(out)
}

/// Writes the two samples as CSV files readable by [`load_fused_dataset`]
/// with the same schema. Floats use the shortest round-trip representation.
pub fn write_fused_dataset(
    ds: &FusedDataset,
    validation_path: impl AsRef<Path>,
    auxiliary_path: impl AsRef<Path>,
    schema: &Schema,
) -> Result<()> {
    if schema.x.len() != ds.p_x() || schema.s.len() != ds.p_s() {
        return Err(FqteError::DimensionMismatch(format!(
            "schema has {} x / {} s columns, dataset has {} / {}",
            schema.x.len(),
            schema.s.len(),
            ds.p_x(),
            ds.p_s()
        )));
    }
    write_records(validation_path.as_ref(), schema, ds.validation(), true)?;
    write_records(auxiliary_path.as_ref(), schema, ds.auxiliary(), false)
}

fn write_records(path: &Path, schema: &Schema, records: &[Record], with_s: bool) -> Result<()> {
    let file = path.display().to_string();
    let io_err = |source| FqteError::Io {
        path: file.clone(),
        source,
    };
    let mut out = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
    let mut header = vec![schema.y.as_str(), schema.t.as_str()];
    header.extend(schema.x.iter().map(String::as_str));
    if with_s {
        header.extend(schema.s.iter().map(String::as_str));
    }
    writeln!(out, "{}", header.join(",")).map_err(io_err)?;
    let mut line = String::new();
    for r in records {
        line.clear();
        line.push_str(&format!("{},{}", r.y, r.t));
        for v in &r.x {
            line.push_str(&format!(",{v}"));
        }
        if with_s {
            for v in r.s.iter().flatten() {
                line.push_str(&format!(",{v}"));
            }
        }
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
