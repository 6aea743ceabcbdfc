use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{pairwise_direction_distances, stable_rank, SpectrumSummary};
use crate::error::{Error, Result};
use crate::factorization::{RunMetadata, RunTrace, TraceRecord};
use crate::matrix::DenseMatrix;
use crate::stiefel::{distance_to_stiefel, sample_stiefel_uniform};

use super::adam::{adam_transform, AdamParams, AdamState};
use super::field::{landing_components, LandingComponents};
use super::task::WhitenedTask;

/// Step size as a function of the iteration index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EtaSchedule {
    Constant {
        eta: f64,
    },
    /// Cosine decay from `eta` to `eta_min` over `total` iterations, then flat.
    Cosine {
        eta: f64,
        eta_min: f64,
        total: u64,
    },
}

impl EtaSchedule {
    pub fn at(&self, t: u64) -> f64 {
        match *self {
            EtaSchedule::Constant { eta } => eta,
            EtaSchedule::Cosine {
                eta,
                eta_min,
                total,
            } => {
                if total == 0 || t >= total {
                    return eta_min;
                }
                let p = t as f64 / total as f64;
                eta_min + 0.5 * (eta - eta_min) * (1.0 + (std::f64::consts::PI * p).cos())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            EtaSchedule::Constant { eta } => eta > 0.0 && eta.is_finite(),
            EtaSchedule::Cosine { eta, eta_min, .. } => {
                eta > 0.0 && eta.is_finite() && eta_min >= 0.0 && eta_min <= eta
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid step schedule {self:?}"
            )))
        }
    }
}

/// How `Θ` is parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMode {
    #[default]
    Full,
    /// `Θ` restricted to diagonal matrices.
    Diagonal,
}

/// Direction used for `X` and `Y` before the Adam transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FactorUpdate {
    /// The landing field.
    #[default]
    Landing,
    /// The raw Euclidean gradient (no manifold handling at all).
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandingConfig {
    pub lambda: f64,
    pub schedule: EtaSchedule,
    pub adam: AdamParams,
    pub max_iters: u64,
    pub seed: u64,
    pub theta_mode: ThetaMode,
    pub factor_update: FactorUpdate,
    pub log_every: u64,
    pub record_wall_time: bool,
}

impl Default for LandingConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            schedule: EtaSchedule::Constant { eta: 1e-3 },
            adam: AdamParams::default(),
            max_iters: 5000,
            seed: 0,
            theta_mode: ThetaMode::Full,
            factor_update: FactorUpdate::Landing,
            log_every: 50,
            record_wall_time: false,
        }
    }
}

impl LandingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.log_every == 0 {
            return Err(Error::InvalidArgument("log_every must be >= 1".into()));
        }
        self.schedule.validate()?;
        self.adam.validate()
    }
}

/// `W₀ + (α/r)·XΘYᵀ` with `X`, `Y` only approximately orthonormal.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterState {
    pub w0: DenseMatrix,
    pub x: DenseMatrix,
    pub theta: DenseMatrix,
    pub y: DenseMatrix,
    pub scale_alpha: f64,
}

impl AdapterState {
    /// `X₀`, `Y₀` uniform on their Stiefel manifolds and `Θ₀ = 0`.
    pub fn init<R: Rng + ?Sized>(
        w0: DenseMatrix,
        r: usize,
        scale_alpha: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let x = sample_stiefel_uniform(w0.rows(), r, rng)?.into_inner();
        let y = sample_stiefel_uniform(w0.cols(), r, rng)?.into_inner();
        Ok(Self {
            w0,
            x,
            theta: DenseMatrix::zeros(r, r),
            y,
            scale_alpha,
        })
    }

    pub fn rank(&self) -> usize {
        self.theta.rows()
    }

    pub fn multiplier(&self) -> f64 {
        self.scale_alpha / self.rank() as f64
    }

    pub fn delta_w(&self) -> DenseMatrix {
        self.x
            .mul(&self.theta)
            .mul_t(&self.y)
            .scale(self.multiplier())
    }

    /// `(XΘ, Y)`: the update with `Θ` folded into the left factor.
    pub fn merged(&self) -> (DenseMatrix, DenseMatrix) {
        (self.x.mul(&self.theta), self.y.clone())
    }

    pub fn delta_w_merged(&self) -> DenseMatrix {
        let (l, r) = self.merged();
        l.mul_t(&r).scale(self.multiplier())
    }
}

/// Plain `W₀ + (α/r)·Z₁Z₂ᵀ` adapter.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraState {
    pub w0: DenseMatrix,
    pub z1: DenseMatrix,
    pub z2: DenseMatrix,
    pub scale_alpha: f64,
}

impl LoraState {
    /// `Z₁` entries `N(0, 1/m)`, `Z₂ = 0`.
    pub fn init<R: Rng + ?Sized>(
        w0: DenseMatrix,
        r: usize,
        scale_alpha: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let (m, n) = w0.shape();
        let normal = Normal::new(0.0, 1.0 / (m as f64).sqrt())
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let z1 = DenseMatrix::from_fn(m, r, |_, _| normal.sample(rng));
        Ok(Self {
            w0,
            z1,
            z2: DenseMatrix::zeros(n, r),
            scale_alpha,
        })
    }

    pub fn rank(&self) -> usize {
        self.z1.cols()
    }

    pub fn multiplier(&self) -> f64 {
        self.scale_alpha / self.rank() as f64
    }

    pub fn delta_w(&self) -> DenseMatrix {
        self.z1.mul_t(&self.z2).scale(self.multiplier())
    }
}

/// Euclidean gradients of the task loss with respect to `X`, `Θ`, `Y`.
#[derive(Debug, Clone)]
pub struct PolarGradients {
    pub loss: f64,
    pub x: DenseMatrix,
    pub theta: DenseMatrix,
    pub y: DenseMatrix,
}

pub fn polar_gradients(s: &AdapterState, task: &WhitenedTask) -> Result<PolarGradients> {
    let dw = s.delta_w();
    let loss = task.loss(&dw)?;
    let gw = task.grad(&dw)?.scale(s.multiplier());
    let gy = gw.mul(&s.y);
    let gtx = gw.t_mul(&s.x);
    Ok(PolarGradients {
        loss,
        x: gy.mul_t(&s.theta),
        theta: s.x.t_mul(&gy),
        y: gtx.mul(&s.theta),
    })
}

pub struct LoraGradients {
    pub loss: f64,
    pub z1: DenseMatrix,
    pub z2: DenseMatrix,
}

pub fn lora_gradients(s: &LoraState, task: &WhitenedTask) -> Result<LoraGradients> {
    let dw = s.delta_w();
    let loss = task.loss(&dw)?;
    let gw = task.grad(&dw)?.scale(s.multiplier());
    Ok(LoraGradients {
        loss,
        z1: gw.mul(&s.z2),
        z2: gw.t_mul(&s.z1),
    })
}

/// Adam moments for `X`, `Θ`, `Y`.
#[derive(Debug, Clone)]
pub struct PolarOptimizer {
    pub x: AdamState,
    pub theta: AdamState,
    pub y: AdamState,
}

impl PolarOptimizer {
    pub fn for_state(s: &AdapterState) -> Self {
        Self {
            x: AdamState::like(&s.x),
            theta: AdamState::like(&s.theta),
            y: AdamState::like(&s.y),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoraOptimizer {
    pub z1: AdamState,
    pub z2: AdamState,
}

impl LoraOptimizer {
    pub fn for_state(s: &LoraState) -> Self {
        Self {
            z1: AdamState::like(&s.z1),
            z2: AdamState::like(&s.z2),
        }
    }
}

/// What a training step saw at the pre-step state.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub loss: f64,
    pub grad_norm: f64,
    /// Landing components at `X` and `Y`; `None` for Euclidean factor updates.
    pub components: Option<(LandingComponents, LandingComponents)>,
}

fn ensure_finite_loss(loss: f64, iter: u64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged { iter, loss })
    }
}

/// One iteration of the retraction-free update. All three directions come
/// from gradients at the current state.
pub fn polar_train_step(
    s: &AdapterState,
    task: &WhitenedTask,
    cfg: &LandingConfig,
    opt: &mut PolarOptimizer,
) -> Result<(AdapterState, StepReport)> {
    let t = opt.theta.step;
    let eta = cfg.schedule.at(t);
    let g = polar_gradients(s, task)?;
    ensure_finite_loss(g.loss, t)?;
    let grad_norm =
        (g.x.frobenius_norm_sq() + g.theta.frobenius_norm_sq() + g.y.frobenius_norm_sq()).sqrt();

    let (dx, dy, components) = match cfg.factor_update {
        FactorUpdate::Landing => {
            let cx = landing_components(&s.x, &g.x)?;
            let cy = landing_components(&s.y, &g.y)?;
            let fx = cx.field(cfg.lambda);
            let fy = cy.field(cfg.lambda);
            (fx, fy, Some((cx, cy)))
        }
        FactorUpdate::Euclidean => (g.x.clone(), g.y.clone(), None),
    };
    let gtheta = match cfg.theta_mode {
        ThetaMode::Full => g.theta,
        ThetaMode::Diagonal => g.theta.diagonal_part(),
    };
    let ux = adam_transform(&mut opt.x, &dx, &cfg.adam)?;
    let uy = adam_transform(&mut opt.y, &dy, &cfg.adam)?;
    let ut = adam_transform(&mut opt.theta, &gtheta, &cfg.adam)?;

    let mut next = s.clone();
    next.x.add_scaled(-eta, &ux);
    next.y.add_scaled(-eta, &uy);
    next.theta.add_scaled(-eta, &ut);
    Ok((
        next,
        StepReport {
            loss: g.loss,
            grad_norm,
            components,
        },
    ))
}

pub fn lora_train_step(
    s: &LoraState,
    task: &WhitenedTask,
    cfg: &LandingConfig,
    opt: &mut LoraOptimizer,
) -> Result<(LoraState, StepReport)> {
    let t = opt.z1.step;
    let eta = cfg.schedule.at(t);
    let g = lora_gradients(s, task)?;
    ensure_finite_loss(g.loss, t)?;
    let grad_norm = (g.z1.frobenius_norm_sq() + g.z2.frobenius_norm_sq()).sqrt();
    let u1 = adam_transform(&mut opt.z1, &g.z1, &cfg.adam)?;
    let u2 = adam_transform(&mut opt.z2, &g.z2, &cfg.adam)?;
    let mut next = s.clone();
    next.z1.add_scaled(-eta, &u1);
    next.z2.add_scaled(-eta, &u2);
    Ok((
        next,
        StepReport {
            loss: g.loss,
            grad_norm,
            components: None,
        },
    ))
}

/// Extra trace columns written by training runs.
pub const TRAIN_COLUMNS: [&str; 4] = ["n_x", "n_y", "stable_rank", "component_cosine"];

fn stable_rank_or_zero(dw: &DenseMatrix) -> f64 {
    stable_rank(dw).map_or(0.0, |s| s.stable_rank)
}

/// `Tr(UᵀX XᵀU)` without assuming `X` is orthonormal.
fn raw_alignment(u: &DenseMatrix, x: &DenseMatrix) -> f64 {
    u.t_mul(x).frobenius_norm_sq()
}

fn train_metadata(
    algorithm: &str,
    task: &WhitenedTask,
    r: usize,
    alpha: f64,
    cfg: &LandingConfig,
) -> RunMetadata {
    let mut extra = BTreeMap::new();
    extra.insert("lambda".into(), cfg.lambda.into());
    extra.insert(
        "schedule".into(),
        serde_json::to_value(cfg.schedule).unwrap(),
    );
    extra.insert("adam".into(), serde_json::to_value(cfg.adam).unwrap());
    extra.insert("max_iters".into(), cfg.max_iters.into());
    extra.insert(
        "theta_mode".into(),
        serde_json::to_value(cfg.theta_mode).unwrap(),
    );
    extra.insert(
        "factor_update".into(),
        serde_json::to_value(cfg.factor_update).unwrap(),
    );
    extra.insert("scale_alpha".into(), alpha.into());
    extra.insert("samples".into(), task.samples().into());
    RunMetadata {
        algorithm: algorithm.into(),
        seed: cfg.seed,
        eta: cfg.schedule.at(0),
        gamma: None,
        m: task.m(),
        n: task.n(),
        r,
        r_a: task.rank(),
        kappa: None,
        extra,
    }
}

struct Clock(Instant, bool);

impl Clock {
    fn now(&self) -> f64 {
        if self.1 {
            self.0.elapsed().as_secs_f64()
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct PolarTrainOutcome {
    pub state: AdapterState,
    pub trace: RunTrace,
    pub final_loss: f64,
    /// Largest component cosine over logged steps.
    pub max_component_cosine: f64,
}

/// Runs `cfg.max_iters` steps from `init`, logging every `log_every`-th
/// pre-step state and the final state.
pub fn train_polar(
    init: AdapterState,
    task: &WhitenedTask,
    cfg: &LandingConfig,
) -> Result<PolarTrainOutcome> {
    cfg.validate()?;
    let algo = match (cfg.theta_mode, cfg.factor_update) {
        (ThetaMode::Full, FactorUpdate::Landing) => "polar-landing",
        (ThetaMode::Diagonal, FactorUpdate::Landing) => "polar-landing-diag",
        (ThetaMode::Full, FactorUpdate::Euclidean) => "polar-euclid",
        (ThetaMode::Diagonal, FactorUpdate::Euclidean) => "polar-euclid-diag",
    };
    let clock = Clock(Instant::now(), cfg.record_wall_time);
    let mut trace = RunTrace::with_extra_columns(
        train_metadata(algo, task, init.rank(), init.scale_alpha, cfg),
        TRAIN_COLUMNS.iter().map(|s| s.to_string()).collect(),
    );
    let mut opt = PolarOptimizer::for_state(&init);
    let mut s = init;
    let mut max_cos = 0.0f64;
    let record = |trace: &mut RunTrace, t: u64, s: &AdapterState, loss: f64, gn: f64, cos: f64| {
        let dw = s.delta_w();
        trace.push_with_extra(
            TraceRecord {
                iter: t,
                loss,
                trace_phi: raw_alignment(task.u.as_matrix(), &s.x),
                trace_psi: raw_alignment(task.v.as_matrix(), &s.y),
                sigma_min_phi: f64::NAN,
                sigma_min_psi: f64::NAN,
                grad_norm: gn,
                wall_time: clock.now(),
            },
            vec![
                distance_to_stiefel(&s.x).unwrap_or(f64::NAN),
                distance_to_stiefel(&s.y).unwrap_or(f64::NAN),
                stable_rank_or_zero(&dw),
                cos,
            ],
        );
    };
    for t in 0..cfg.max_iters {
        let (next, rep) = polar_train_step(&s, task, cfg, &mut opt)?;
        let cos = rep
            .components
            .as_ref()
            .map_or(0.0, |(cx, cy)| cx.cosine().max(cy.cosine()));
        if t % cfg.log_every == 0 {
            max_cos = max_cos.max(cos);
            record(&mut trace, t, &s, rep.loss, rep.grad_norm, cos);
        }
        s = next;
    }
    let g = polar_gradients(&s, task)?;
    ensure_finite_loss(g.loss, cfg.max_iters)?;
    let gn =
        (g.x.frobenius_norm_sq() + g.theta.frobenius_norm_sq() + g.y.frobenius_norm_sq()).sqrt();
    let cos = match cfg.factor_update {
        FactorUpdate::Landing => {
            let cx = landing_components(&s.x, &g.x)?;
            let cy = landing_components(&s.y, &g.y)?;
            cx.cosine().max(cy.cosine())
        }
        FactorUpdate::Euclidean => 0.0,
    };
    max_cos = max_cos.max(cos);
    record(&mut trace, cfg.max_iters, &s, g.loss, gn, cos);
    Ok(PolarTrainOutcome {
        state: s,
        trace,
        final_loss: g.loss,
        max_component_cosine: max_cos,
    })
}

#[derive(Debug, Clone)]
pub struct LoraTrainOutcome {
    pub state: LoraState,
    pub trace: RunTrace,
    pub final_loss: f64,
}

pub fn train_lora(
    init: LoraState,
    task: &WhitenedTask,
    cfg: &LandingConfig,
) -> Result<LoraTrainOutcome> {
    cfg.validate()?;
    let clock = Clock(Instant::now(), cfg.record_wall_time);
    let mut trace = RunTrace::with_extra_columns(
        train_metadata("lora", task, init.rank(), init.scale_alpha, cfg),
        TRAIN_COLUMNS.iter().map(|s| s.to_string()).collect(),
    );
    let mut opt = LoraOptimizer::for_state(&init);
    let mut s = init;
    let record = |trace: &mut RunTrace, t: u64, s: &LoraState, loss: f64, gn: f64| {
        trace.push_with_extra(
            TraceRecord {
                iter: t,
                loss,
                trace_phi: f64::NAN,
                trace_psi: f64::NAN,
                sigma_min_phi: f64::NAN,
                sigma_min_psi: f64::NAN,
                grad_norm: gn,
                wall_time: clock.now(),
            },
            vec![f64::NAN, f64::NAN, stable_rank_or_zero(&s.delta_w()), 0.0],
        );
    };
    for t in 0..cfg.max_iters {
        let (next, rep) = lora_train_step(&s, task, cfg, &mut opt)?;
        if t % cfg.log_every == 0 {
            record(&mut trace, t, &s, rep.loss, rep.grad_norm);
        }
        s = next;
    }
    let g = lora_gradients(&s, task)?;
    ensure_finite_loss(g.loss, cfg.max_iters)?;
    let gn = (g.z1.frobenius_norm_sq() + g.z2.frobenius_norm_sq()).sqrt();
    record(&mut trace, cfg.max_iters, &s, g.loss, gn);
    Ok(LoraTrainOutcome {
        state: s,
        trace,
        final_loss: g.loss,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DiversityReport {
    pub stable_rank: f64,
    pub mean_pairwise_distance: f64,
    pub spectrum: SpectrumSummary,
    #[serde(skip)]
    pub distances: DenseMatrix,
    pub excluded_rows: Vec<usize>,
}

/// Stable rank and row-direction spread of an update matrix.
pub fn diversity_of(dw: &DenseMatrix) -> Result<DiversityReport> {
    let spectrum = stable_rank(dw)?;
    let div = pairwise_direction_distances(dw)?;
    Ok(DiversityReport {
        stable_rank: spectrum.stable_rank,
        mean_pairwise_distance: div.mean_distance,
        spectrum,
        distances: div.distances,
        excluded_rows: div.excluded_rows,
    })
}

pub fn diversity_report(s: &AdapterState) -> Result<DiversityReport> {
    diversity_of(&s.delta_w())
}
