//! `polar analyze`: spectra, row-direction distances and feasibility curves
//! for checkpoints, update matrices and trace files.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use polar_core::factorization::TraceTable;
use polar_core::landing::{diversity_of, Checkpoint, MANIFEST};
use polar_core::matrix::DenseMatrix;
use serde::Serialize;

use crate::config::{key, Key, Settings};
use crate::{echo_config, resolve, CliError, GlobalArgs, Outcome};

pub const SCHEMA: [Key; 1] = [key("out", "out", "output directory")];

/// Trace columns copied into feasibility curves, when present.
pub const CURVE_COLUMNS: [&str; 7] = [
    "loss",
    "n_x",
    "n_y",
    "trace_phi",
    "trace_psi",
    "stable_rank",
    "component_cosine",
];

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Checkpoint directories, matrix CSV files, trace CSV files, or
    /// directories searched recursively for any of these.
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

pub fn settings(globals: &GlobalArgs, a: &AnalyzeArgs) -> Result<Settings, CliError> {
    resolve(&SCHEMA, globals, &[], &a.sets)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Checkpoint(PathBuf),
    Matrix(PathBuf),
    Trace(PathBuf),
}

#[derive(Debug, Clone, Serialize)]
pub struct UpdateReport {
    pub name: String,
    pub path: String,
    pub kind: String,
    pub rows: usize,
    pub cols: usize,
    pub stable_rank: f64,
    pub spectral_norm: f64,
    pub frobenius_norm: f64,
    pub singular_values: Vec<f64>,
    pub mean_pairwise_distance: f64,
    pub excluded_rows: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceReport {
    pub name: String,
    pub path: String,
    pub records: usize,
    pub columns: Vec<String>,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Report {
    pub updates: Vec<UpdateReport>,
    pub traces: Vec<TraceReport>,
}

fn first_line(path: &Path) -> Result<String, CliError> {
    use std::io::BufRead;
    let f = std::fs::File::open(path)?;
    let mut line = String::new();
    std::io::BufReader::new(f).read_line(&mut line)?;
    Ok(line.trim().to_string())
}

/// Classifies a CSV file by its header: traces start with `iter`, matrices
/// with a `rows,cols` pair of integers.
fn classify_csv(path: &Path) -> Result<Option<Source>, CliError> {
    let head = first_line(path)?;
    if head.split(',').next() == Some("iter") {
        return Ok(Some(Source::Trace(path.to_path_buf())));
    }
    let dims: Vec<&str> = head.split(',').collect();
    if dims.len() == 2 && dims.iter().all(|d| d.trim().parse::<usize>().is_ok()) {
        return Ok(Some(Source::Matrix(path.to_path_buf())));
    }
    Ok(None)
}

/// Sources under `root` in sorted path order. Files inside a checkpoint
/// directory belong to the checkpoint.
pub fn discover(root: &Path) -> Result<Vec<Source>, CliError> {
    if root.is_file() {
        return classify_csv(root)?.map(|s| vec![s]).ok_or_else(|| {
            CliError::Config(format!(
                "{} is neither a trace nor a matrix CSV",
                root.display()
            ))
        });
    }
    if !root.is_dir() {
        return Err(CliError::Config(format!(
            "{} does not exist",
            root.display()
        )));
    }
    if root.join(MANIFEST).is_file() {
        return Ok(vec![Source::Checkpoint(root.to_path_buf())]);
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(root)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    entries.sort();
    let mut out = Vec::new();
    for p in entries {
        if p.is_dir() {
            out.extend(discover(&p)?);
        } else if p.extension().is_some_and(|e| e == "csv") {
            out.extend(classify_csv(&p)?);
        }
    }
    Ok(out)
}

/// Stable file name for `path` relative to `root`.
fn source_name(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    let base = if rel.as_os_str().is_empty() {
        path.file_name()
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("input"))
    } else {
        rel.to_path_buf()
    };
    let s: Vec<String> = base
        .with_extension("")
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect();
    s.join("__")
}

fn analyze_update(
    name: String,
    path: &Path,
    kind: String,
    dw: &DenseMatrix,
    out: &Path,
) -> Result<UpdateReport, CliError> {
    let div = diversity_of(dw)?;
    div.distances
        .save(out.join("distances").join(format!("{name}.csv")))?;
    Ok(UpdateReport {
        name,
        path: path.display().to_string(),
        kind,
        rows: dw.rows(),
        cols: dw.cols(),
        stable_rank: div.stable_rank,
        spectral_norm: div.spectrum.spectral_norm,
        frobenius_norm: div.spectrum.frobenius_norm,
        singular_values: div.spectrum.singular_values,
        mean_pairwise_distance: div.mean_pairwise_distance,
        excluded_rows: div.excluded_rows,
    })
}

fn analyze_trace(name: String, path: &Path, out: &Path) -> Result<TraceReport, CliError> {
    let t = TraceTable::load(path)?;
    let keep: Vec<&str> = CURVE_COLUMNS
        .iter()
        .copied()
        .filter(|c| t.columns.iter().any(|h| h == c))
        .collect();
    let iters = t.column("iter").expect("classified by its iter column");
    let cols: Vec<Vec<f64>> = keep.iter().map(|c| t.column(c).unwrap()).collect();
    let file = out.join("feasibility").join(format!("{name}.csv"));
    let mut f = std::io::BufWriter::new(std::fs::File::create(file)?);
    writeln!(f, "iter,{}", keep.join(","))?;
    for (i, it) in iters.iter().enumerate() {
        let row: Vec<String> = cols.iter().map(|c| format!("{:e}", c[i])).collect();
        writeln!(f, "{},{}", *it as u64, row.join(","))?;
    }
    f.flush()?;
    Ok(TraceReport {
        name,
        path: path.display().to_string(),
        records: t.rows.len(),
        columns: keep.iter().map(|s| s.to_string()).collect(),
        final_loss: t.column("loss").and_then(|l| l.last().copied()),
    })
}

pub fn execute(s: &Settings, paths: &[PathBuf]) -> Result<(Outcome, Report), CliError> {
    let out = PathBuf::from(s.raw("out"));
    let mut found = Vec::new();
    for root in paths {
        for src in discover(root)? {
            found.push((root.clone(), src));
        }
    }
    if found.is_empty() {
        return Err(CliError::Config(
            "no checkpoints, matrices or traces found".into(),
        ));
    }
    echo_config(&out, "analyze", s)?;
    std::fs::create_dir_all(out.join("distances"))?;
    std::fs::create_dir_all(out.join("feasibility"))?;

    let prefix_roots = paths.len() > 1;
    let name_of = |root: &Path, p: &Path| {
        let name = source_name(root, p);
        match root.file_name() {
            Some(base) if prefix_roots && root != p => {
                format!("{}__{name}", base.to_string_lossy())
            }
            _ => name,
        }
    };
    let mut report = Report::default();
    for (root, src) in &found {
        match src {
            Source::Checkpoint(p) => {
                let ck = Checkpoint::load(p)?;
                let kind = serde_json::to_value(ck.kind())?
                    .as_str()
                    .unwrap_or("adapter")
                    .to_string();
                let r = analyze_update(name_of(root, p), p, kind, &ck.delta_w(), &out)?;
                report.updates.push(r);
            }
            Source::Matrix(p) => {
                let dw = DenseMatrix::load(p)?;
                let r = analyze_update(name_of(root, p), p, "matrix".into(), &dw, &out)?;
                report.updates.push(r);
            }
            Source::Trace(p) => report
                .traces
                .push(analyze_trace(name_of(root, p), p, &out)?),
        }
    }

    let mut f = std::io::BufWriter::new(std::fs::File::create(out.join("stable_rank.csv"))?);
    writeln!(
        f,
        "name,kind,rows,cols,stable_rank,spectral_norm,frobenius_norm,mean_pairwise_distance"
    )?;
    for u in &report.updates {
        writeln!(
            f,
            "{},{},{},{},{:e},{:e},{:e},{:e}",
            u.name,
            u.kind,
            u.rows,
            u.cols,
            u.stable_rank,
            u.spectral_norm,
            u.frobenius_norm,
            u.mean_pairwise_distance
        )?;
    }
    f.flush()?;

    let mut f = std::io::BufWriter::new(std::fs::File::create(out.join("spectra.csv"))?);
    writeln!(f, "name,index,singular_value")?;
    for u in &report.updates {
        for (i, s) in u.singular_values.iter().enumerate() {
            writeln!(f, "{},{},{:e}", u.name, i + 1, s)?;
        }
    }
    f.flush()?;

    std::fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    for u in &report.updates {
        println!(
            "{} ({}): stable rank {:.4}, mean row distance {:.4}",
            u.name, u.kind, u.stable_rank, u.mean_pairwise_distance
        );
    }
    for t in &report.traces {
        println!(
            "{}: {} records -> feasibility/{}.csv",
            t.name, t.records, t.name
        );
    }
    Ok((Outcome::Done, report))
}
