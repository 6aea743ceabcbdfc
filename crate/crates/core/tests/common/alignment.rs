//! Replays seeded RGD trajectories on small targets and checks the alignment
//! lemmas step by step.

use polar_core::factorization::{
    alignment_growth_predicate, loss_from_alignment_bound, make_target, misalignment_ordering_gap,
    rgd_step_asym, sigma_min_alignment, theta_update, trace_alignment, PolarFactors, Spacing,
};
use polar_core::stiefel::StiefelMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{explicit_complement, squared_singular_values};

pub const MONOTONE_SLACK: f64 = 1e-10;
pub const ORDERING_SLACK: f64 = 1e-9;
pub const PAIRING_TOL: f64 = 1e-8;

#[derive(Debug, Default, Clone)]
pub struct LemmaSummary {
    pub steps: usize,
    /// Steps at which the predicate held, counted per side.
    pub predicate_hits: usize,
    pub monotone_violations: usize,
    /// Smallest eigenvalue seen for either misalignment ordering.
    pub ordering_min: f64,
    pub ordering_violations: usize,
    pub sigma_min_violations: usize,
    pub pairing_worst: f64,
    pub bound_violations: usize,
}

/// `|σ²(Φ)↓ + σ²(Ω)↑ − 1|`, worst entry, with `Ω` from an explicit complement.
pub fn pairing_error(u: &StiefelMatrix, x: &StiefelMatrix) -> f64 {
    let r = x.cols();
    let phi = u.as_matrix().t_mul(x.as_matrix());
    let omega = explicit_complement(u.as_matrix()).t_mul(x.as_matrix());
    let sp = squared_singular_values(&phi, r);
    let mut so = squared_singular_values(&omega, r);
    so.reverse();
    sp.iter()
        .zip(&so)
        .map(|(a, b)| (a + b - 1.0).abs())
        .fold(0.0, f64::max)
}

pub fn run_suite(trajectories: u64, steps: usize) -> LemmaSummary {
    let (m, n, ra, r) = (8, 6, 2, 3);
    let mut s = LemmaSummary {
        ordering_min: f64::INFINITY,
        ..Default::default()
    };
    for seed in 0..trajectories {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kappa = rng.random_range(1.0..10.0);
        let eta = rng.random_range(0.05..0.9);
        let t = make_target(m, n, ra, kappa, Spacing::Linear, &mut rng).unwrap();
        let mut f = PolarFactors::random(m, n, r, &mut rng).unwrap();
        for _ in 0..steps {
            let refreshed = PolarFactors {
                theta: theta_update(&f, &t, 1.0),
                ..f.clone()
            };
            let pred = alignment_growth_predicate(&refreshed, &t, eta);
            if !loss_from_alignment_bound(&refreshed, &t).unwrap().holds() {
                s.bound_violations += 1;
            }
            s.pairing_worst = s
                .pairing_worst
                .max(pairing_error(&t.u, &f.x))
                .max(pairing_error(&t.v, &f.y));

            let next = rgd_step_asym(&f, &t, eta, 1.0).unwrap();
            s.steps += 1;
            for (holds, u, now, after) in [
                (pred.holds_x, &t.u, &f.x, &next.x),
                (pred.holds_y, &t.v, &f.y, &next.y),
            ] {
                if holds {
                    s.predicate_hits += 1;
                    if trace_alignment(u, after) < trace_alignment(u, now) - MONOTONE_SLACK {
                        s.monotone_violations += 1;
                    }
                }
                let gap = misalignment_ordering_gap(u, now, after).unwrap();
                s.ordering_min = s.ordering_min.min(gap);
                if gap < -ORDERING_SLACK {
                    s.ordering_violations += 1;
                }
                let (a, b) = (sigma_min_alignment(u, now), sigma_min_alignment(u, after));
                if b * b < a * a - ORDERING_SLACK {
                    s.sigma_min_violations += 1;
                }
            }
            f = next;
        }
    }
    s
}
