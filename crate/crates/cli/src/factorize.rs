//! `polar factorize`: matrix factorization runs, optionally over a grid.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use polar_core::factorization::{run, Algorithm, RunConfig, RunStatus, Spacing};
use serde_json::json;

use crate::config::{key, Key, Settings};
use crate::{
    cell_name, echo_config, fan_out, parse_bool, resolve, threads, CliError, GlobalArgs, Outcome,
};

pub const SCHEMA: [Key; 17] = [
    key("algo", "polar-rgd", "polar-rgd, bm-gd or sym-rgd"),
    key("m", "50", "rows of the target"),
    key("n", "50", "columns of the target (ignored by sym-rgd)"),
    key("r", "20", "factor rank"),
    key("r_a", "4", "rank of the target"),
    key("kappa", "10", "condition number of the target"),
    key(
        "spacing",
        "linear",
        "singular value spacing: linear or geometric",
    ),
    key("scale", "1", "largest singular value of the target"),
    key("eta", "1e-3", "step size"),
    key("gamma", "1", "Theta refresh weight in (0, 1]"),
    key("max_iters", "100000", "iteration budget"),
    key(
        "threshold",
        "1e-8",
        "stop once the loss is at or below this",
    ),
    key("log_every", "100", "trace every k-th iteration"),
    key("seed", "0", "seed for target and initialization"),
    key("wall_time", "false", "record wall-clock seconds in traces"),
    key("out", "out", "output directory"),
    key("threads", "1", "worker threads for grid cells"),
];

#[derive(Debug, Clone, Args)]
pub struct FactorizeArgs {
    #[arg(long)]
    pub algo: Option<String>,
    #[arg(long)]
    pub m: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub r: Option<String>,
    #[arg(long)]
    pub r_a: Option<String>,
    #[arg(long)]
    pub kappa: Option<String>,
    #[arg(long)]
    pub eta: Option<String>,
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub threshold: Option<String>,
    /// Any schema key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

pub fn settings(globals: &GlobalArgs, a: &FactorizeArgs) -> Result<Settings, CliError> {
    resolve(
        &SCHEMA,
        globals,
        &[
            ("algo", a.algo.as_ref()),
            ("m", a.m.as_ref()),
            ("n", a.n.as_ref()),
            ("r", a.r.as_ref()),
            ("r_a", a.r_a.as_ref()),
            ("kappa", a.kappa.as_ref()),
            ("eta", a.eta.as_ref()),
            ("gamma", a.gamma.as_ref()),
            ("threshold", a.threshold.as_ref()),
        ],
        &a.sets,
    )
}

pub fn run_config(s: &Settings) -> Result<RunConfig, CliError> {
    Ok(RunConfig {
        algorithm: s.get::<Algorithm>("algo")?,
        m: s.get("m")?,
        n: s.get("n")?,
        r: s.get("r")?,
        r_a: s.get("r_a")?,
        kappa: s.get("kappa")?,
        spacing: s.get::<Spacing>("spacing")?,
        target_scale: s.get("scale")?,
        eta: s.get("eta")?,
        gamma: s.get("gamma")?,
        max_iters: s.get("max_iters")?,
        loss_threshold: s.get("threshold")?,
        log_every: s.get("log_every")?,
        seed: s.get("seed")?,
        record_wall_time: parse_bool(s, "wall_time")?,
    })
}

#[derive(Debug, Clone)]
pub struct CellReport {
    pub dir: PathBuf,
    pub trace: PathBuf,
    pub status: RunStatus,
    pub final_loss: f64,
    pub last_iter: u64,
}

impl CellReport {
    pub fn outcome(&self) -> Outcome {
        match self.status {
            RunStatus::Converged { .. } => Outcome::Done,
            _ => Outcome::Stalled,
        }
    }
}

fn run_cell(dir: &Path, cell: &Settings) -> Result<CellReport, CliError> {
    let cfg = run_config(cell)?;
    cfg.validate()?;
    echo_config(dir, "factorize", cell)?;
    let out = run(&cfg)?;
    let trace = out.trace.save(dir)?;
    let summary = json!({
        "status": out.status,
        "final_loss": out.final_loss,
        "last_iter": out.last_iter,
    });
    std::fs::write(
        dir.join("outcome.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok(CellReport {
        dir: dir.to_path_buf(),
        trace,
        status: out.status,
        final_loss: out.final_loss,
        last_iter: out.last_iter,
    })
}

fn status_name(s: &RunStatus) -> &'static str {
    match s {
        RunStatus::Converged { .. } => "converged",
        RunStatus::BudgetExhausted => "budget_exhausted",
        RunStatus::Diverged { .. } => "diverged",
    }
}

/// Runs every grid cell. A single cell writes straight into `out`; a grid
/// writes one subdirectory per cell plus `grid.csv`.
pub fn execute(s: &Settings) -> Result<(Outcome, Vec<CellReport>), CliError> {
    let out = PathBuf::from(s.raw("out"));
    let axes = s.grid_axes();
    let cells = s.expand_grid(&["out", "threads", "wall_time"])?;
    // validate everything before any run starts
    for c in &cells {
        run_config(c)?.validate()?;
    }
    echo_config(&out, "factorize", s)?;
    let dirs: Vec<PathBuf> = cells
        .iter()
        .map(|c| {
            if axes.is_empty() {
                out.clone()
            } else {
                out.join(cell_name(c, &axes))
            }
        })
        .collect();
    let reports = fan_out(&cells, threads(s)?, |i, c| run_cell(&dirs[i], c))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    if !axes.is_empty() {
        let mut f = std::io::BufWriter::new(std::fs::File::create(out.join("grid.csv"))?);
        writeln!(f, "cell,{},status,final_loss,last_iter", axes.join(","))?;
        for (c, r) in cells.iter().zip(&reports) {
            let vals: Vec<&str> = axes.iter().map(|a| c.raw(a)).collect();
            writeln!(
                f,
                "{},{},{},{:e},{}",
                cell_name(c, &axes),
                vals.join(","),
                status_name(&r.status),
                r.final_loss,
                r.last_iter
            )?;
        }
        f.flush()?;
    }
    for r in &reports {
        println!(
            "{}: {} at iter {}, loss {:.3e}",
            r.dir.display(),
            status_name(&r.status),
            r.last_iter,
            r.final_loss
        );
    }
    Ok((
        Outcome::all(reports.iter().map(CellReport::outcome)),
        reports,
    ))
}
