//! Command implementations behind the `polar` binary.
//!
//! Every command resolves its settings in the same order: schema defaults,
//! then `--config`, then global flags, then command flags, then `--set`.
//! The resolved settings are echoed into the output directory.

pub mod analyze;
pub mod bench;
pub mod config;
pub mod factorize;
pub mod finetune;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::Args;
use thiserror::Error;

use config::{Key, Settings};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const RESOLVED_CONFIG: &str = "config.resolved";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] polar_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// What a successful command reports back to the shell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Every run reached its target.
    Done,
    /// At least one run exhausted its budget, diverged, or was unstable.
    Stalled,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Done => 0,
            Outcome::Stalled => 2,
        }
    }

    pub fn all(items: impl IntoIterator<Item = Outcome>) -> Outcome {
        if items.into_iter().all(|o| o == Outcome::Done) {
            Outcome::Done
        } else {
            Outcome::Stalled
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Flat key = value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub max_iters: Option<String>,
    /// Worker threads for grid cells; each cell runs single-threaded.
    #[arg(long, global = true)]
    pub threads: Option<String>,
}

/// Layers defaults, config file, globals, command flags and `--set` pairs.
pub fn resolve(
    schema: &[Key],
    globals: &GlobalArgs,
    flags: &[(&str, Option<&String>)],
    sets: &[String],
) -> Result<Settings, CliError> {
    let mut s = Settings::defaults(schema);
    if let Some(path) = &globals.config {
        s.apply_file(path)?;
    }
    let out = globals.out.as_ref().map(|p| p.display().to_string());
    for (name, v) in [
        ("seed", globals.seed.as_ref()),
        ("out", out.as_ref()),
        ("max_iters", globals.max_iters.as_ref()),
        ("threads", globals.threads.as_ref()),
    ] {
        if let Some(v) = v {
            s.set(name, v, &format!("--{}", name.replace('_', "-")))?;
        }
    }
    for (name, v) in flags {
        if let Some(v) = v {
            s.set(name, v, &format!("--{}", name.replace('_', "-")))?;
        }
    }
    for pair in sets {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects key=value, got {pair:?}")))?;
        s.set(k.trim(), v, "--set")?;
    }
    Ok(s)
}

/// Creates `dir` and writes the resolved settings into it.
pub fn echo_config(dir: &Path, command: &str, s: &Settings) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let header = [format!("polar {VERSION}"), format!("command {command}")];
    std::fs::write(dir.join(RESOLVED_CONFIG), s.render(&header))?;
    Ok(())
}

/// Directory name for a grid cell: `axis-value` pairs joined by `_`.
pub fn cell_name(cell: &Settings, axes: &[&str]) -> String {
    axes.iter()
        .map(|a| format!("{a}-{}", cell.raw(a)))
        .collect::<Vec<_>>()
        .join("_")
}

/// Runs `f` over `cells` on up to `threads` workers, keeping input order.
pub fn fan_out<T, F>(cells: &[Settings], threads: usize, f: F) -> Vec<Result<T, CliError>>
where
    T: Send,
    F: Fn(usize, &Settings) -> Result<T, CliError> + Sync,
{
    let threads = threads.clamp(1, cells.len().max(1));
    if threads == 1 {
        return cells.iter().enumerate().map(|(i, c)| f(i, c)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T, CliError>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cells.len() {
                    break;
                }
                let r = f(i, &cells[i]);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect()
}

pub fn threads(s: &Settings) -> Result<usize, CliError> {
    let t: usize = s.get("threads")?;
    if t == 0 {
        return Err(CliError::Config("threads must be >= 1".into()));
    }
    Ok(t)
}

pub fn parse_bool(s: &Settings, name: &str) -> Result<bool, CliError> {
    match s.raw(name) {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(CliError::Config(format!(
            "bad value {other:?} for key {name:?}: expected true or false"
        ))),
    }
}
