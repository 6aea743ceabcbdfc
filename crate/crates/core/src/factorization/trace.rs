use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns present in every trace, in file order.
pub const BASE_COLUMNS: [&str; 8] = [
    "iter",
    "loss",
    "trace_phi",
    "trace_psi",
    "sigma_min_phi",
    "sigma_min_psi",
    "grad_norm",
    "wall_time",
];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TraceRecord {
    pub iter: u64,
    pub loss: f64,
    pub trace_phi: f64,
    pub trace_psi: f64,
    pub sigma_min_phi: f64,
    pub sigma_min_psi: f64,
    pub grad_norm: f64,
    /// Seconds since the start of the run; zero unless wall time recording is on.
    pub wall_time: f64,
}

/// Run parameters written to the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub algorithm: String,
    pub seed: u64,
    pub eta: f64,
    pub gamma: Option<f64>,
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub r_a: usize,
    pub kappa: Option<f64>,
    /// Anything else worth recording (initialization, schedule, outcome).
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl RunMetadata {
    /// `<algo>_<kappa>_<r>_<seed>`; runs without a condition number use `na`.
    pub fn file_stem(&self) -> String {
        let kappa = match self.kappa {
            Some(k) => format!("{k}"),
            None => "na".to_string(),
        };
        format!("{}_{}_{}_{}", self.algorithm, kappa, self.r, self.seed)
    }
}

/// Per-iteration log of a run, with optional extra columns after the base set.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub meta: RunMetadata,
    pub extra_columns: Vec<String>,
    pub records: Vec<TraceRecord>,
    /// One row per record, `extra_columns.len()` values each.
    pub extra_values: Vec<Vec<f64>>,
}

impl RunTrace {
    pub fn new(meta: RunMetadata) -> Self {
        Self::with_extra_columns(meta, Vec::new())
    }

    pub fn with_extra_columns(meta: RunMetadata, extra_columns: Vec<String>) -> Self {
        Self {
            meta,
            extra_columns,
            records: Vec::new(),
            extra_values: Vec::new(),
        }
    }

    pub fn push(&mut self, rec: TraceRecord) {
        self.push_with_extra(rec, Vec::new());
    }

    /// Panics if `iter` does not increase or the extra row has the wrong width.
    pub fn push_with_extra(&mut self, rec: TraceRecord, extra: Vec<f64>) {
        if let Some(last) = self.records.last() {
            assert!(rec.iter > last.iter, "trace iterations must increase");
        }
        assert_eq!(extra.len(), self.extra_columns.len(), "extra column count");
        self.records.push(rec);
        self.extra_values.push(extra);
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn columns(&self) -> Vec<String> {
        BASE_COLUMNS
            .iter()
            .map(|s| s.to_string())
            .chain(self.extra_columns.iter().cloned())
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut line = self.columns().join(",");
        line.push('\n');
        for (rec, extra) in self.records.iter().zip(&self.extra_values) {
            let _ = write!(
                line,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                rec.iter,
                rec.loss,
                rec.trace_phi,
                rec.trace_psi,
                rec.sigma_min_phi,
                rec.sigma_min_psi,
                rec.grad_norm,
                rec.wall_time
            );
            for v in extra {
                let _ = write!(line, ",{v:e}");
            }
            line.push('\n');
            if line.len() > 1 << 16 {
                w.write_all(line.as_bytes())?;
                line.clear();
            }
        }
        w.write_all(line.as_bytes())?;
        Ok(())
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`, returning the CSV path.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let stem = self.meta.file_stem();
        let csv = dir.join(format!("{stem}.csv"));
        let file = std::fs::File::create(&csv)?;
        self.write_csv(std::io::BufWriter::new(file))?;
        let json = serde_json::to_string_pretty(&self.meta)?;
        std::fs::write(dir.join(format!("{stem}.json")), json + "\n")?;
        Ok(csv)
    }
}

/// A trace CSV read back as named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TraceTable {
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty trace file".into()))??;
        let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("trace line {}: {e}", k + 2)))
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != columns.len() {
                return Err(Error::Parse(format!(
                    "trace line {}: expected {} fields, found {}",
                    k + 2,
                    columns.len(),
                    row.len()
                )));
            }
            rows.push(row);
        }
        Ok(Self { columns, rows })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f))
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}
