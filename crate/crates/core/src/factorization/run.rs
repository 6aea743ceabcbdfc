use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::DenseMatrix;
use crate::stiefel::{polar_retract, StiefelMatrix};

use super::alignment::{sigma_min_alignment, trace_alignment};
use super::steps::{
    bm_gradients, projected_euclidean_grad_sym, projected_euclidean_grads, riemannian_grad_sym,
    riemannian_grads_asym, theta_update, theta_update_sym, DIVERGENCE_LOSS,
};
use super::target::{
    make_sym_target, make_target_scaled, BMFactors, FactorizationTarget, PolarFactors, Spacing,
    SymFactors, SymTarget,
};
use super::trace::{RunMetadata, RunTrace, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    /// Riemannian GD on `XΘYᵀ`.
    #[serde(rename = "polar-rgd")]
    PolarRgd,
    /// Plain GD on `Z₁Z₂ᵀ`.
    #[serde(rename = "bm-gd")]
    BmGd,
    /// Riemannian GD on `XΘXᵀ` against a PSD target.
    #[serde(rename = "sym-rgd")]
    SymRgd,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::PolarRgd => "polar-rgd",
            Algorithm::BmGd => "bm-gd",
            Algorithm::SymRgd => "sym-rgd",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "polar-rgd" => Ok(Algorithm::PolarRgd),
            "bm-gd" => Ok(Algorithm::BmGd),
            "sym-rgd" => Ok(Algorithm::SymRgd),
            other => Err(Error::Parse(format!("unknown algorithm {other:?}"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub m: usize,
    /// Ignored by the symmetric problem.
    pub n: usize,
    pub r: usize,
    pub r_a: usize,
    pub kappa: f64,
    pub spacing: Spacing,
    /// Multiplies the normalized singular values; `κ` puts them on `[1, κ]`.
    pub target_scale: f64,
    pub eta: f64,
    pub gamma: f64,
    pub max_iters: u64,
    pub loss_threshold: f64,
    /// Record every `log_every`-th iteration plus the last one.
    pub log_every: u64,
    pub seed: u64,
    /// Off by default so traces are byte-identical across runs.
    pub record_wall_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::PolarRgd,
            m: 50,
            n: 50,
            r: 20,
            r_a: 4,
            kappa: 10.0,
            spacing: Spacing::Linear,
            target_scale: 1.0,
            eta: 1e-3,
            gamma: 1.0,
            max_iters: 100_000,
            loss_threshold: 1e-8,
            log_every: 100,
            seed: 0,
            record_wall_time: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.r == 0 || self.r_a == 0 {
            return bad("ranks must be >= 1".into());
        }
        let n = if self.algorithm == Algorithm::SymRgd {
            self.m
        } else {
            self.n
        };
        if self.r > self.m.min(n) {
            return bad(format!(
                "r = {} exceeds min(m, n) = {}",
                self.r,
                self.m.min(n)
            ));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if self.log_every == 0 {
            return bad("log_every must be >= 1".into());
        }
        if !(self.loss_threshold >= 0.0) {
            return bad("loss_threshold must be nonnegative".into());
        }
        Ok(())
    }

    fn metadata(&self, m: usize, n: usize) -> RunMetadata {
        let mut extra = BTreeMap::new();
        extra.insert(
            "spacing".into(),
            serde_json::to_value(self.spacing).unwrap(),
        );
        extra.insert("target_scale".into(), self.target_scale.into());
        extra.insert("max_iters".into(), self.max_iters.into());
        extra.insert("loss_threshold".into(), self.loss_threshold.into());
        extra.insert("log_every".into(), self.log_every.into());
        let init = match self.algorithm {
            Algorithm::BmGd => "gaussian(0, 1/max(m,n))",
            _ => "uniform-stiefel, theta=0",
        };
        extra.insert("init".into(), init.into());
        RunMetadata {
            algorithm: self.algorithm.name().into(),
            seed: self.seed,
            eta: self.eta,
            gamma: match self.algorithm {
                Algorithm::BmGd => None,
                _ => Some(self.gamma),
            },
            m,
            n,
            r: self.r,
            r_a: self.r_a,
            kappa: Some(self.kappa),
            extra,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Converged { iter: u64 },
    BudgetExhausted,
    Diverged { iter: u64, loss: f64 },
}

#[derive(Debug, Clone)]
pub enum FinalState {
    Polar(PolarFactors),
    Bm(BMFactors),
    Sym(SymFactors),
}

#[derive(Debug, Clone)]
pub enum Problem {
    Asymmetric(FactorizationTarget),
    Symmetric(SymTarget),
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub final_loss: f64,
    /// Last iteration whose loss was evaluated.
    pub last_iter: u64,
    pub trace: RunTrace,
    pub state: FinalState,
    pub problem: Problem,
}

/// Iterations whose loss reached `threshold` first, if any.
pub fn first_iter_below(trace: &RunTrace, threshold: f64) -> Option<u64> {
    trace
        .records
        .iter()
        .find(|r| r.loss <= threshold)
        .map(|r| r.iter)
}

struct Clock {
    start: Instant,
    enabled: bool,
}

impl Clock {
    fn now(&self) -> f64 {
        if self.enabled {
            self.start.elapsed().as_secs_f64()
        } else {
            0.0
        }
    }
}

/// Generates the target and the initial factors from `cfg.seed`, then runs
/// until the loss threshold, the iteration budget, or divergence.
///
/// The target is drawn first from the seeded stream, so runs that differ
/// only in `r` or the algorithm share the same target.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    match cfg.algorithm {
        Algorithm::PolarRgd | Algorithm::BmGd => {
            let target = make_target_scaled(
                cfg.m,
                cfg.n,
                cfg.r_a,
                cfg.kappa,
                cfg.spacing,
                cfg.target_scale,
                &mut rng,
            )?;
            if cfg.algorithm == Algorithm::PolarRgd {
                let init = PolarFactors::random(target.m(), target.n(), cfg.r, &mut rng)?;
                run_polar(cfg, target, init)
            } else {
                let init = BMFactors::random(target.m(), target.n(), cfg.r, &mut rng)?;
                run_bm(cfg, target, init)
            }
        }
        Algorithm::SymRgd => {
            let target = make_sym_target(
                cfg.m,
                cfg.r_a,
                cfg.kappa,
                cfg.spacing,
                cfg.target_scale,
                &mut rng,
            )?;
            let init = SymFactors::random(cfg.m, cfg.r, &mut rng)?;
            run_sym(cfg, target, init)
        }
    }
}

fn should_log(cfg: &RunConfig, t: u64) -> bool {
    t.is_multiple_of(cfg.log_every)
}

pub fn run_polar(
    cfg: &RunConfig,
    target: FactorizationTarget,
    init: PolarFactors,
) -> Result<RunOutcome> {
    let clock = Clock {
        start: Instant::now(),
        enabled: cfg.record_wall_time,
    };
    let mut trace = RunTrace::new(cfg.metadata(target.m(), target.n()));
    let mut f = init;
    let mut t = 0u64;
    let (status, loss) = loop {
        f.theta = theta_update(&f, &target, cfg.gamma);
        let loss = 0.5 * (&f.product() - &target.a).frobenius_norm_sq();
        let (e, g) = if cfg.gamma == 1.0 {
            riemannian_grads_asym(&f, &target)?
        } else {
            projected_euclidean_grads(&f, &target)?
        };
        let grad_norm = (e.frobenius_norm_sq() + g.frobenius_norm_sq()).sqrt();
        let status = if !loss.is_finite() {
            Some(RunStatus::Diverged { iter: t, loss })
        } else if loss <= cfg.loss_threshold {
            Some(RunStatus::Converged { iter: t })
        } else if t == cfg.max_iters {
            Some(RunStatus::BudgetExhausted)
        } else {
            None
        };
        if should_log(cfg, t) || status.is_some() {
            trace.push(TraceRecord {
                iter: t,
                loss,
                trace_phi: trace_alignment(&target.u, &f.x),
                trace_psi: trace_alignment(&target.v, &f.y),
                sigma_min_phi: sigma_min_alignment(&target.u, &f.x),
                sigma_min_psi: sigma_min_alignment(&target.v, &f.y),
                grad_norm,
                wall_time: clock.now(),
            });
        }
        if let Some(s) = status {
            break (s, loss);
        }
        f.x = polar_retract(&f.x, &e, cfg.eta)?;
        f.y = polar_retract(&f.y, &g, cfg.eta)?;
        t += 1;
    };
    Ok(RunOutcome {
        status,
        final_loss: loss,
        last_iter: t,
        trace,
        state: FinalState::Polar(f),
        problem: Problem::Asymmetric(target),
    })
}

/// Orthonormal basis of the column space of `z` (left singular vectors).
fn column_basis(z: &DenseMatrix) -> StiefelMatrix {
    let d = linalg::svd(z);
    StiefelMatrix::certify(d.u, 1e-8).expect("singular vectors are orthonormal")
}

pub fn run_bm(cfg: &RunConfig, target: FactorizationTarget, init: BMFactors) -> Result<RunOutcome> {
    let clock = Clock {
        start: Instant::now(),
        enabled: cfg.record_wall_time,
    };
    let mut trace = RunTrace::new(cfg.metadata(target.m(), target.n()));
    let mut f = init;
    let mut t = 0u64;
    let (status, loss) = loop {
        let (g1, g2) = bm_gradients(&f, &target)?;
        let loss = 0.5 * (&f.product() - &target.a).frobenius_norm_sq();
        let status = if !(loss <= DIVERGENCE_LOSS) {
            Some(RunStatus::Diverged { iter: t, loss })
        } else if loss <= cfg.loss_threshold {
            Some(RunStatus::Converged { iter: t })
        } else if t == cfg.max_iters {
            Some(RunStatus::BudgetExhausted)
        } else {
            None
        };
        if should_log(cfg, t) || status.is_some() {
            let finite = f.z1.is_finite() && f.z2.is_finite();
            let (bx, by) = if finite {
                (Some(column_basis(&f.z1)), Some(column_basis(&f.z2)))
            } else {
                (None, None)
            };
            let tr = |u: &StiefelMatrix, b: &Option<StiefelMatrix>| {
                b.as_ref().map_or(f64::NAN, |b| trace_alignment(u, b))
            };
            let sm = |u: &StiefelMatrix, b: &Option<StiefelMatrix>| {
                b.as_ref().map_or(f64::NAN, |b| sigma_min_alignment(u, b))
            };
            trace.push(TraceRecord {
                iter: t,
                loss,
                trace_phi: tr(&target.u, &bx),
                trace_psi: tr(&target.v, &by),
                sigma_min_phi: sm(&target.u, &bx),
                sigma_min_psi: sm(&target.v, &by),
                grad_norm: (g1.frobenius_norm_sq() + g2.frobenius_norm_sq()).sqrt(),
                wall_time: clock.now(),
            });
        }
        if let Some(s) = status {
            break (s, loss);
        }
        f.z1.add_scaled(-cfg.eta, &g1);
        f.z2.add_scaled(-cfg.eta, &g2);
        t += 1;
    };
    Ok(RunOutcome {
        status,
        final_loss: loss,
        last_iter: t,
        trace,
        state: FinalState::Bm(f),
        problem: Problem::Asymmetric(target),
    })
}

pub fn run_sym(cfg: &RunConfig, target: SymTarget, init: SymFactors) -> Result<RunOutcome> {
    let clock = Clock {
        start: Instant::now(),
        enabled: cfg.record_wall_time,
    };
    let mut trace = RunTrace::new(cfg.metadata(target.m(), target.m()));
    let mut f = init;
    let mut t = 0u64;
    let (status, loss) = loop {
        f.theta = theta_update_sym(&f, &target, cfg.gamma);
        let loss = 0.5 * (&f.product() - &target.b).frobenius_norm_sq();
        let g = if cfg.gamma == 1.0 {
            riemannian_grad_sym(&f, &target)?
        } else {
            projected_euclidean_grad_sym(&f, &target)?
        };
        let status = if !loss.is_finite() {
            Some(RunStatus::Diverged { iter: t, loss })
        } else if loss <= cfg.loss_threshold {
            Some(RunStatus::Converged { iter: t })
        } else if t == cfg.max_iters {
            Some(RunStatus::BudgetExhausted)
        } else {
            None
        };
        if should_log(cfg, t) || status.is_some() {
            let tr = trace_alignment(&target.u, &f.x);
            let sm = sigma_min_alignment(&target.u, &f.x);
            trace.push(TraceRecord {
                iter: t,
                loss,
                trace_phi: tr,
                trace_psi: tr,
                sigma_min_phi: sm,
                sigma_min_psi: sm,
                grad_norm: g.frobenius_norm(),
                wall_time: clock.now(),
            });
        }
        if let Some(s) = status {
            break (s, loss);
        }
        f.x = polar_retract(&f.x, &g, cfg.eta)?;
        t += 1;
    };
    Ok(RunOutcome {
        status,
        final_loss: loss,
        last_iter: t,
        trace,
        state: FinalState::Sym(f),
        problem: Problem::Symmetric(target),
    })
}
