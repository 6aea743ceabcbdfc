//! `polar finetune-toy`: polar and plain adapters on a whitened linear task.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use polar_core::landing::{
    diversity_of, make_whitened_task_with, train_lora, train_polar, AdamParams, AdapterState,
    Checkpoint, EtaSchedule, FactorUpdate, LandingConfig, LoraState, TaskOptions, ThetaMode,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{key, Key, Settings};
use crate::{
    cell_name, echo_config, fan_out, parse_bool, resolve, threads, CliError, GlobalArgs, Outcome,
};

pub const SCHEMA: [Key; 27] = [
    key("adapter", "both", "polar, lora or both"),
    key("m", "32", "output dimension"),
    key("n", "32", "input dimension"),
    key("samples", "64", "number of whitened samples (>= n)"),
    key("r", "8", "adapter rank"),
    key("r_a", "3", "rank of the planted update"),
    key("kappa", "10", "condition number of the planted update"),
    key("scale", "1", "largest singular value of the planted update"),
    key("noise", "0.1", "norm of the unexplainable label component"),
    key("w0_std", "1", "W0 entries have std w0_std / sqrt(n)"),
    key(
        "alpha",
        "8",
        "adapter scale; the update is (alpha / r) times the product",
    ),
    key("lambda", "1e-3", "penalty weight of the landing field"),
    key("eta", "1e-3", "step size"),
    key("schedule", "constant", "constant or cosine"),
    key("eta_min", "0", "final step size of the cosine schedule"),
    key("theta", "full", "full or diagonal"),
    key("factor_update", "landing", "landing or euclidean"),
    key("beta1", "0.9", "Adam first-moment decay"),
    key("beta2", "0.999", "Adam second-moment decay"),
    key("epsilon", "1e-8", "Adam denominator offset"),
    key("max_iters", "1000", "training steps"),
    key("log_every", "50", "trace every k-th step"),
    key("threshold", "none", "exit 2 if any final loss exceeds this"),
    key("seed", "0", "seed for task and initialization"),
    key("wall_time", "false", "record wall-clock seconds in traces"),
    key("out", "out", "output directory"),
    key("threads", "1", "worker threads for grid cells"),
];

#[derive(Debug, Clone, Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub adapter: Option<String>,
    #[arg(long)]
    pub r: Option<String>,
    #[arg(long)]
    pub eta: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub alpha: Option<String>,
    /// Any schema key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

pub fn settings(globals: &GlobalArgs, a: &FinetuneArgs) -> Result<Settings, CliError> {
    resolve(
        &SCHEMA,
        globals,
        &[
            ("adapter", a.adapter.as_ref()),
            ("r", a.r.as_ref()),
            ("eta", a.eta.as_ref()),
            ("lambda", a.lambda.as_ref()),
            ("alpha", a.alpha.as_ref()),
        ],
        &a.sets,
    )
}

fn adapters(s: &Settings) -> Result<(bool, bool), CliError> {
    match s.raw("adapter") {
        "both" => Ok((true, true)),
        "polar" => Ok((true, false)),
        "lora" => Ok((false, true)),
        other => Err(CliError::Config(format!(
            "bad value {other:?} for key \"adapter\": expected polar, lora or both"
        ))),
    }
}

pub fn landing_config(s: &Settings) -> Result<LandingConfig, CliError> {
    let eta: f64 = s.get("eta")?;
    let max_iters: u64 = s.get("max_iters")?;
    let schedule = match s.raw("schedule") {
        "constant" => EtaSchedule::Constant { eta },
        "cosine" => EtaSchedule::Cosine {
            eta,
            eta_min: s.get("eta_min")?,
            total: max_iters,
        },
        other => {
            return Err(CliError::Config(format!(
                "bad value {other:?} for key \"schedule\": expected constant or cosine"
            )))
        }
    };
    let theta_mode = match s.raw("theta") {
        "full" => ThetaMode::Full,
        "diagonal" => ThetaMode::Diagonal,
        other => {
            return Err(CliError::Config(format!(
                "bad value {other:?} for key \"theta\": expected full or diagonal"
            )))
        }
    };
    let factor_update = match s.raw("factor_update") {
        "landing" => FactorUpdate::Landing,
        "euclidean" => FactorUpdate::Euclidean,
        other => {
            return Err(CliError::Config(format!(
                "bad value {other:?} for key \"factor_update\": expected landing or euclidean"
            )))
        }
    };
    let cfg = LandingConfig {
        lambda: s.get("lambda")?,
        schedule,
        adam: AdamParams {
            beta1: s.get("beta1")?,
            beta2: s.get("beta2")?,
            epsilon: s.get("epsilon")?,
        },
        max_iters,
        seed: s.get("seed")?,
        theta_mode,
        factor_update,
        log_every: s.get("log_every")?,
        record_wall_time: parse_bool(s, "wall_time")?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn task_options(s: &Settings) -> Result<TaskOptions, CliError> {
    Ok(TaskOptions {
        kappa: s.get("kappa")?,
        scale: s.get("scale")?,
        w0_std: s.get("w0_std")?,
        noise: s.get("noise")?,
    })
}

fn validate(s: &Settings) -> Result<(), CliError> {
    adapters(s)?;
    landing_config(s)?;
    task_options(s)?;
    let r: usize = s.get("r")?;
    let (m, n): (usize, usize) = (s.get("m")?, s.get("n")?);
    if r == 0 || r > m.min(n) {
        return Err(CliError::Config(format!(
            "r = {r} must lie in [1, min(m, n)]"
        )));
    }
    s.get::<f64>("alpha")?;
    s.get::<usize>("samples")?;
    s.get::<usize>("r_a")?;
    s.optional::<f64>("threshold")?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct AdapterReport {
    pub name: &'static str,
    pub final_loss: f64,
    pub stable_rank: f64,
    pub trace: PathBuf,
    pub checkpoint: PathBuf,
}

fn run_cell(dir: &Path, s: &Settings) -> Result<Vec<AdapterReport>, CliError> {
    echo_config(dir, "finetune-toy", s)?;
    let cfg = landing_config(s)?;
    let (want_polar, want_lora) = adapters(s)?;
    let (r, alpha): (usize, f64) = (s.get("r")?, s.get("alpha")?);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let task = make_whitened_task_with(
        s.get("m")?,
        s.get("n")?,
        s.get("samples")?,
        s.get("r_a")?,
        &task_options(s)?,
        &mut rng,
    )?;
    // both initial states are always drawn so each adapter sees the same
    // stream regardless of which ones run
    let polar0 = AdapterState::init(task.w0.clone(), r, alpha, &mut rng)?;
    let lora0 = LoraState::init(task.w0.clone(), r, alpha, &mut rng)?;

    let mut reports = Vec::new();
    let mut summary = serde_json::Map::new();
    if want_polar {
        let out = train_polar(polar0, &task, &cfg)?;
        let ck = Checkpoint::Polar(out.state);
        let div = diversity_of(&ck.delta_w())?;
        let ck_dir = dir.join("checkpoint_polar");
        ck.save(&ck_dir)?;
        let trace = out.trace.save(dir)?;
        summary.insert(
            "polar".into(),
            json!({
                "final_loss": out.final_loss,
                "max_component_cosine": out.max_component_cosine,
                "stable_rank": div.stable_rank,
                "mean_pairwise_distance": div.mean_pairwise_distance,
            }),
        );
        reports.push(AdapterReport {
            name: "polar",
            final_loss: out.final_loss,
            stable_rank: div.stable_rank,
            trace,
            checkpoint: ck_dir,
        });
    }
    if want_lora {
        let out = train_lora(lora0, &task, &cfg)?;
        let ck = Checkpoint::Lora(out.state);
        let div = diversity_of(&ck.delta_w())?;
        let ck_dir = dir.join("checkpoint_lora");
        ck.save(&ck_dir)?;
        let trace = out.trace.save(dir)?;
        summary.insert(
            "lora".into(),
            json!({
                "final_loss": out.final_loss,
                "stable_rank": div.stable_rank,
                "mean_pairwise_distance": div.mean_pairwise_distance,
            }),
        );
        reports.push(AdapterReport {
            name: "lora",
            final_loss: out.final_loss,
            stable_rank: div.stable_rank,
            trace,
            checkpoint: ck_dir,
        });
    }
    summary.insert("optimal_loss".into(), task.constant.into());
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok(reports)
}

pub fn execute(s: &Settings) -> Result<(Outcome, Vec<Vec<AdapterReport>>), CliError> {
    let out = PathBuf::from(s.raw("out"));
    let axes = s.grid_axes();
    let cells = s.expand_grid(&["out", "threads", "wall_time", "adapter"])?;
    for c in &cells {
        validate(c)?;
    }
    echo_config(&out, "finetune-toy", s)?;
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
        writeln!(f, "cell,{},adapter,final_loss,stable_rank", axes.join(","))?;
        for (c, rs) in cells.iter().zip(&reports) {
            let vals: Vec<&str> = axes.iter().map(|a| c.raw(a)).collect();
            for r in rs {
                writeln!(
                    f,
                    "{},{},{},{:e},{:e}",
                    cell_name(c, &axes),
                    vals.join(","),
                    r.name,
                    r.final_loss,
                    r.stable_rank
                )?;
            }
        }
        f.flush()?;
    }

    let mut outcomes = Vec::new();
    for (c, (dir, rs)) in cells.iter().zip(dirs.iter().zip(&reports)) {
        let threshold = c.optional::<f64>("threshold")?;
        for r in rs {
            println!(
                "{}: {} loss {:.4e}, stable rank {:.3}",
                dir.display(),
                r.name,
                r.final_loss,
                r.stable_rank
            );
            outcomes.push(match threshold {
                Some(t) if r.final_loss > t => Outcome::Stalled,
                _ => Outcome::Done,
            });
        }
    }
    Ok((Outcome::all(outcomes), reports))
}
