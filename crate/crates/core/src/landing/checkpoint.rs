//! Adapter checkpoints: a directory of matrix CSV files plus `adapter.json`.
//!
//! Polar adapters store `w0.csv`, `x.csv`, `theta.csv`, `y.csv`; plain
//! adapters store `w0.csv`, `z1.csv`, `z2.csv`. A bare `delta_w.csv` is also
//! accepted by [`load_update`] for externally produced updates.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

use super::train::{AdapterState, LoraState};

pub const MANIFEST: &str = "adapter.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    Polar,
    Lora,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: AdapterKind,
    pub scale_alpha: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Polar(AdapterState),
    Lora(LoraState),
}

impl Checkpoint {
    pub fn delta_w(&self) -> DenseMatrix {
        match self {
            Checkpoint::Polar(s) => s.delta_w(),
            Checkpoint::Lora(s) => s.delta_w(),
        }
    }

    pub fn kind(&self) -> AdapterKind {
        match self {
            Checkpoint::Polar(_) => AdapterKind::Polar,
            Checkpoint::Lora(_) => AdapterKind::Lora,
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let manifest = match self {
            Checkpoint::Polar(s) => {
                s.w0.save(dir.join("w0.csv"))?;
                s.x.save(dir.join("x.csv"))?;
                s.theta.save(dir.join("theta.csv"))?;
                s.y.save(dir.join("y.csv"))?;
                Manifest {
                    kind: AdapterKind::Polar,
                    scale_alpha: s.scale_alpha,
                    rank: s.rank(),
                }
            }
            Checkpoint::Lora(s) => {
                s.w0.save(dir.join("w0.csv"))?;
                s.z1.save(dir.join("z1.csv"))?;
                s.z2.save(dir.join("z2.csv"))?;
                Manifest {
                    kind: AdapterKind::Lora,
                    scale_alpha: s.scale_alpha,
                    rank: s.rank(),
                }
            }
        };
        let json = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(dir.join(MANIFEST), json + "\n")?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let text = std::fs::read_to_string(dir.join(MANIFEST))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let w0 = DenseMatrix::load(dir.join("w0.csv"))?;
        let ck = match manifest.kind {
            AdapterKind::Polar => Checkpoint::Polar(AdapterState {
                w0,
                x: DenseMatrix::load(dir.join("x.csv"))?,
                theta: DenseMatrix::load(dir.join("theta.csv"))?,
                y: DenseMatrix::load(dir.join("y.csv"))?,
                scale_alpha: manifest.scale_alpha,
            }),
            AdapterKind::Lora => Checkpoint::Lora(LoraState {
                w0,
                z1: DenseMatrix::load(dir.join("z1.csv"))?,
                z2: DenseMatrix::load(dir.join("z2.csv"))?,
                scale_alpha: manifest.scale_alpha,
            }),
        };
        ck.validate(manifest.rank)?;
        Ok(ck)
    }

    fn validate(&self, rank: usize) -> Result<()> {
        let (m, n) = match self {
            Checkpoint::Polar(s) => s.w0.shape(),
            Checkpoint::Lora(s) => s.w0.shape(),
        };
        let ok = match self {
            Checkpoint::Polar(s) => {
                s.x.shape() == (m, rank)
                    && s.theta.shape() == (rank, rank)
                    && s.y.shape() == (n, rank)
            }
            Checkpoint::Lora(s) => s.z1.shape() == (m, rank) && s.z2.shape() == (n, rank),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::shape(
                "checkpoint",
                format!("factors consistent with w0 {m}x{n} and rank {rank}"),
                "inconsistent factor shapes",
            ))
        }
    }
}

/// `ΔW` from a checkpoint directory, or from a single matrix CSV file.
pub fn load_update(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    if path.is_file() {
        return DenseMatrix::load(path);
    }
    if path.join(MANIFEST).is_file() {
        return Ok(Checkpoint::load(path)?.delta_w());
    }
    let bare = path.join("delta_w.csv");
    if bare.is_file() {
        return DenseMatrix::load(bare);
    }
    Err(Error::InvalidArgument(format!(
        "{} is neither a matrix file nor a checkpoint directory",
        path.display()
    )))
}
