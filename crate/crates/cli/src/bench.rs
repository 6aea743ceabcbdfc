//! `polar bench`: landing versus retraction step timings, one table per `m`.

use std::path::PathBuf;

use clap::Args;
use polar_core::bench::{BenchOp, BenchSpec, BenchTable, TABLE_RANKS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{key, Key, Settings};
use crate::{echo_config, resolve, CliError, GlobalArgs, Outcome};

pub const SCHEMA: [Key; 10] = [
    key(
        "m",
        "4096",
        "row count; a comma list writes one table per value",
    ),
    key("ranks", "4,32,64,256", "table columns"),
    key("warmup", "10", "untimed iterations before sampling"),
    key(
        "min_samples",
        "10",
        "samples before the stopping rule is checked",
    ),
    key("max_samples", "200", "sample budget per cell"),
    key(
        "iqr_tol",
        "0.15",
        "stop once IQR / median is at or below this",
    ),
    key("eta", "1e-3", "step size used by both kernels"),
    key("lambda", "1e-3", "landing penalty weight"),
    key("seed", "0", "seed for kernel inputs"),
    key("out", "out", "output directory"),
];

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub m: Option<String>,
    #[arg(long)]
    pub ranks: Option<String>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

pub fn settings(globals: &GlobalArgs, a: &BenchArgs) -> Result<Settings, CliError> {
    resolve(
        &SCHEMA,
        globals,
        &[("m", a.m.as_ref()), ("ranks", a.ranks.as_ref())],
        &a.sets,
    )
}

pub fn execute(s: &Settings) -> Result<(Outcome, Vec<BenchTable>), CliError> {
    let out = PathBuf::from(s.raw("out"));
    let ms: Vec<usize> = s.list("m")?;
    let ranks: Vec<usize> = s.list("ranks")?;
    let template = |m: usize| -> Result<BenchSpec, CliError> {
        let spec = BenchSpec {
            warmup_iters: s.get("warmup")?,
            min_samples: s.get("min_samples")?,
            max_samples: s.get("max_samples")?,
            iqr_tol: s.get("iqr_tol")?,
            eta: s.get("eta")?,
            lambda: s.get("lambda")?,
            ..BenchSpec::new(
                m,
                ranks.iter().copied().min().unwrap_or(1).min(m),
                BenchOp::Retraction,
            )
        };
        spec.validate()?;
        Ok(spec)
    };
    for &m in &ms {
        template(m)?;
    }
    if ranks.is_empty() || ranks.contains(&0) {
        return Err(CliError::Config("ranks must be positive".into()));
    }
    if ranks != TABLE_RANKS {
        eprintln!("note: ranks {ranks:?} differ from the reference columns {TABLE_RANKS:?}");
    }
    echo_config(&out, "bench", s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.get("seed")?);
    let mut tables = Vec::new();
    for &m in &ms {
        let table = BenchTable::run(&template(m)?, &ranks, &mut rng)?;
        let path = table.save(&out)?;
        print!("{}", table.to_text());
        println!("wrote {}", path.display());
        tables.push(table);
    }
    let stable = tables.iter().flat_map(|t| &t.results).all(|r| !r.unstable);
    Ok((
        if stable {
            Outcome::Done
        } else {
            Outcome::Stalled
        },
        tables,
    ))
}
