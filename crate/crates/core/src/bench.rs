//! Timing of one retraction update against one landing update on `m × r`
//! factors.
//!
//! Each sample times a single update on a fresh Gaussian gradient. Sampling
//! stops once the interquartile range falls to `iqr_tol` times the median, or
//! at `max_samples`, in which case the result is flagged unstable.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landing::{landing_field, landing_update_into};
use crate::linalg::{inverse_sqrt_spd, EIGEN_FLOOR};
use crate::matrix::DenseMatrix;
use crate::stiefel::{polar_retract, project_tangent, sample_stiefel_uniform, stiefel_residual};

/// Column set of the standard tables.
pub const TABLE_RANKS: [usize; 4] = [4, 32, 64, 256];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchOp {
    Retraction,
    Landing,
}

impl BenchOp {
    pub const ALL: [BenchOp; 2] = [BenchOp::Retraction, BenchOp::Landing];

    pub fn name(self) -> &'static str {
        match self {
            BenchOp::Retraction => "retraction",
            BenchOp::Landing => "landing",
        }
    }
}

impl fmt::Display for BenchOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "retraction" => Ok(BenchOp::Retraction),
            "landing" => Ok(BenchOp::Landing),
            _ => Err(Error::InvalidArgument(format!(
                "unknown benchmark op {s:?} (expected retraction or landing)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub m: usize,
    pub r: usize,
    pub op: BenchOp,
    pub warmup_iters: usize,
    /// Samples taken before the stopping rule is first checked.
    pub min_samples: usize,
    pub max_samples: usize,
    pub iqr_tol: f64,
    pub eta: f64,
    pub lambda: f64,
}

impl BenchSpec {
    pub fn new(m: usize, r: usize, op: BenchOp) -> Self {
        Self {
            m,
            r,
            op,
            warmup_iters: 10,
            min_samples: 10,
            max_samples: 200,
            iqr_tol: 0.15,
            eta: 1e-3,
            lambda: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 || self.m < self.r {
            return Err(Error::InvalidArgument(format!(
                "benchmark needs m >= r >= 1, got m = {}, r = {}",
                self.m, self.r
            )));
        }
        if self.min_samples < 4 || self.max_samples < self.min_samples {
            return Err(Error::InvalidArgument(format!(
                "benchmark needs 4 <= min_samples <= max_samples, got {} and {}",
                self.min_samples, self.max_samples
            )));
        }
        if !(self.iqr_tol > 0.0) || !(self.eta > 0.0) || !(self.lambda > 0.0) {
            return Err(Error::InvalidArgument(
                "benchmark iqr_tol, eta and lambda must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub op: BenchOp,
    pub m: usize,
    pub r: usize,
    pub median_micros: f64,
    pub samples: usize,
    pub iqr_over_median: f64,
    /// True when `max_samples` was reached before the IQR rule was met.
    pub unstable: bool,
    /// The timing loop always runs on one thread.
    pub threads: usize,
}

/// Quantile with linear interpolation between order statistics.
/// `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

fn sorted_copy(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn median(samples: &[f64]) -> f64 {
    quantile_sorted(&sorted_copy(samples), 0.5)
}

/// `(Q3 − Q1) / median`.
pub fn iqr_over_median(samples: &[f64]) -> f64 {
    let v = sorted_copy(samples);
    let med = quantile_sorted(&v, 0.5);
    let iqr = quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25);
    if med > 0.0 {
        iqr / med
    } else {
        f64::INFINITY
    }
}

fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Projects `g` onto the tangent space at `x` and writes the polar retraction
/// of the step into `out`. Same arithmetic as [`polar_retract`] applied to
/// [`project_tangent`], without the certification pass.
fn retraction_update_into(
    x: &DenseMatrix,
    g: &DenseMatrix,
    eta: f64,
    step: &mut DenseMatrix,
    out: &mut DenseMatrix,
) -> Result<()> {
    let r = x.cols();
    // X − η(G − X sym(XᵀG)) = X(I + η sym(XᵀG)) − ηG
    let mut keep = x.t_mul(g).symmetric_part().scale(eta);
    for i in 0..r {
        keep[(i, i)] += 1.0;
    }
    x.mul_into(&keep, 1.0, 0.0, step);
    step.add_scaled(-eta, g);
    let inv_sqrt = inverse_sqrt_spd(&step.t_mul(step), EIGEN_FLOOR)?;
    step.mul_into(&inv_sqrt, 1.0, 0.0, out);
    Ok(())
}

fn verify_kernels<R: Rng + ?Sized>(spec: &BenchSpec, rng: &mut R) -> Result<()> {
    let (m, r) = (spec.m.min(64).max(spec.r.min(16)), spec.r.min(16));
    let x = sample_stiefel_uniform(m, r, rng)?;
    let g = gaussian(m, r, rng);
    let mut step = DenseMatrix::zeros(m, r);
    let mut out = DenseMatrix::zeros(m, r);
    match spec.op {
        BenchOp::Retraction => {
            retraction_update_into(x.as_matrix(), &g, spec.eta, &mut step, &mut out)?;
            let want = polar_retract(&x, &project_tangent(x.as_matrix(), &g), spec.eta)?;
            let err = (&out - want.as_matrix()).max_abs();
            if !(err <= 1e-10) || !(stiefel_residual(&out) <= 1e-9) {
                return Err(Error::InvalidArgument(format!(
                    "retraction kernel failed its check (deviation {err:e})"
                )));
            }
        }
        BenchOp::Landing => {
            landing_update_into(x.as_matrix(), &g, spec.lambda, spec.eta, &mut out)?;
            let mut want = x.as_matrix().clone();
            want.add_scaled(-spec.eta, &landing_field(x.as_matrix(), &g, spec.lambda)?);
            let err = (&out - &want).max_abs();
            if !out.is_finite() || !(err <= 1e-10) {
                return Err(Error::InvalidArgument(format!(
                    "landing kernel failed its check (deviation {err:e})"
                )));
            }
        }
    }
    Ok(())
}

/// Times `spec.op` after checking the kernel against its reference form.
pub fn run_bench<R: Rng + ?Sized>(spec: &BenchSpec, rng: &mut R) -> Result<BenchResult> {
    spec.validate()?;
    verify_kernels(spec, rng)?;

    let x = sample_stiefel_uniform(spec.m, spec.r, rng)?.into_inner();
    let mut step = DenseMatrix::zeros(spec.m, spec.r);
    let mut out = DenseMatrix::zeros(spec.m, spec.r);
    let mut once = |g: &DenseMatrix, out: &mut DenseMatrix| -> Result<f64> {
        let start = Instant::now();
        match spec.op {
            BenchOp::Retraction => retraction_update_into(&x, g, spec.eta, &mut step, out)?,
            BenchOp::Landing => landing_update_into(&x, g, spec.lambda, spec.eta, out)?,
        }
        Ok(start.elapsed().as_secs_f64() * 1e6)
    };

    for _ in 0..spec.warmup_iters {
        let g = gaussian(spec.m, spec.r, rng);
        once(&g, &mut out)?;
    }
    let mut samples = Vec::with_capacity(spec.min_samples);
    let mut ratio = f64::INFINITY;
    while samples.len() < spec.max_samples {
        let g = gaussian(spec.m, spec.r, rng);
        samples.push(once(&g, &mut out)?);
        if !out.is_finite() {
            return Err(Error::NonFinite { op: "run_bench" });
        }
        if samples.len() >= spec.min_samples {
            ratio = iqr_over_median(&samples);
            if ratio <= spec.iqr_tol {
                break;
            }
        }
    }
    Ok(BenchResult {
        op: spec.op,
        m: spec.m,
        r: spec.r,
        median_micros: median(&samples),
        samples: samples.len(),
        iqr_over_median: ratio,
        unstable: ratio > spec.iqr_tol,
        threads: 1,
    })
}

/// Results for one `m`: rows are ops, columns are ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub m: usize,
    pub ranks: Vec<usize>,
    pub results: Vec<BenchResult>,
}

impl BenchTable {
    /// Runs both ops at every rank, skipping ranks above `template.m`.
    pub fn run<R: Rng + ?Sized>(
        template: &BenchSpec,
        ranks: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let ranks: Vec<usize> = ranks.iter().copied().filter(|&r| r <= template.m).collect();
        let mut results = Vec::new();
        for op in BenchOp::ALL {
            for &r in &ranks {
                let spec = BenchSpec { r, op, ..*template };
                results.push(run_bench(&spec, rng)?);
            }
        }
        Ok(Self {
            m: template.m,
            ranks,
            results,
        })
    }

    pub fn get(&self, op: BenchOp, r: usize) -> Option<&BenchResult> {
        self.results.iter().find(|b| b.op == op && b.r == r)
    }

    /// `op,<r1>,<r2>,...` followed by one row of median microseconds per op.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "op")?;
        for r in &self.ranks {
            write!(w, ",{r}")?;
        }
        writeln!(w)?;
        for op in BenchOp::ALL {
            write!(w, "{op}")?;
            for &r in &self.ranks {
                match self.get(op, r) {
                    Some(b) => write!(w, ",{:.3}", b.median_micros)?,
                    None => write!(w, ",")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// One row per measurement with its sample count and spread.
    pub fn write_details_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "op,m,r,median_micros,samples,iqr_over_median,unstable,threads"
        )?;
        for b in &self.results {
            writeln!(
                w,
                "{},{},{},{:.3},{},{:.4},{},{}",
                b.op,
                b.m,
                b.r,
                b.median_micros,
                b.samples,
                b.iqr_over_median,
                b.unstable,
                b.threads
            )?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut header = vec![format!("m = {}", self.m)];
        header.extend(self.ranks.iter().map(|r| format!("r = {r}")));
        let mut rows = vec![header];
        for op in BenchOp::ALL {
            let mut row = vec![op.to_string()];
            for &r in &self.ranks {
                row.push(match self.get(op, r) {
                    Some(b) if b.unstable => format!("{:.1}*", b.median_micros),
                    Some(b) => format!("{:.1}", b.median_micros),
                    None => "-".into(),
                });
            }
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|j| rows.iter().map(|row| row[j].len()).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        for row in &rows {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    if j == 0 {
                        format!("{c:<w$}", w = widths[j])
                    } else {
                        format!("{c:>w$}", w = widths[j])
                    }
                })
                .collect();
            s.push_str(cells.join("  ").trim_end());
            s.push('\n');
        }
        s.push_str("median microseconds per update, single thread; * = IQR rule not met\n");
        s
    }

    /// Writes `bench_m<m>.csv`, `bench_m<m>.txt` and `bench_m<m>_details.csv`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<std::path::PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let stem = format!("bench_m{}", self.m);
        let csv = dir.join(format!("{stem}.csv"));
        self.write_csv(std::fs::File::create(&csv)?)?;
        self.write_details_csv(std::fs::File::create(
            dir.join(format!("{stem}_details.csv")),
        )?)?;
        std::fs::write(dir.join(format!("{stem}.txt")), self.to_text())?;
        Ok(csv)
    }
}

/// Least-squares slope of `ln t` against `ln r`.
pub fn growth_exponent(points: &[(usize, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(r, _)| (r as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, t)| t.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
