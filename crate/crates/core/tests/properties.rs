mod common;

use common::{alignment::pairing_error, gaussian, tangent_projection};
use polar_core::bench::median;
use polar_core::diagnostics::{
    alignment, misalignment_trace, pairwise_direction_distances, stable_rank,
};
use polar_core::factorization::{
    make_sym_target, make_target, rgd_step_asym, run, Algorithm, PolarFactors, RunConfig, Spacing,
};
use polar_core::landing::{landing_components, make_whitened_task, penalty_gradient, AdapterState};
use polar_core::linalg::sym_eigenvalues;
use polar_core::matrix::DenseMatrix;
use polar_core::stiefel::{
    distance_to_stiefel, polar_decompose, polar_retract, sample_stiefel_uniform, stiefel_residual,
    tangency_residual,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `(m, r)` with `1 <= r <= m <= max_m`.
fn tall(max_m: usize) -> impl Strategy<Value = (usize, usize)> {
    (1..=max_m).prop_flat_map(|m| (Just(m), 1..=m))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_points_are_feasible((m, r) in tall(12), seed: u64) {
        let x = sample_stiefel_uniform(m, r, &mut rng(seed)).unwrap();
        prop_assert!(stiefel_residual(x.as_matrix()) <= 1e-9);
    }

    #[test]
    fn retraction_of_tangent_step_is_feasible(
        (m, r) in tall(10), seed: u64, eta in 0.0f64..5.0, spread in 0.0f64..10.0,
    ) {
        let mut g = rng(seed);
        let x = sample_stiefel_uniform(m, r, &mut g).unwrap();
        let d = tangent_projection(x.as_matrix(), &gaussian(m, r, &mut g).scale(spread));
        let next = polar_retract(&x, &d, eta).unwrap();
        prop_assert!(stiefel_residual(next.as_matrix()) <= 1e-9);
    }

    #[test]
    fn polar_decomposition_reconstructs((m, r) in tall(9), seed: u64, scale in 1e-3f64..1e3) {
        let z = gaussian(m, r, &mut rng(seed)).scale(scale);
        let (x, theta) = polar_decompose(&z).unwrap();
        let zn = z.frobenius_norm();
        prop_assert!((&x.as_matrix().mul(&theta) - &z).frobenius_norm() <= 1e-10 * zn);
        let spectral = polar_core::linalg::singular_values(&z)[0];
        prop_assert!(sym_eigenvalues(&theta).unwrap()[0] >= -1e-10 * spectral);
        prop_assert!(stiefel_residual(x.as_matrix()) <= 1e-9);
    }

    #[test]
    fn stable_rank_is_scale_invariant_and_bounded(
        rows in 1usize..8, cols in 1usize..8, seed: u64, c in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3],
    ) {
        let w = gaussian(rows, cols, &mut rng(seed));
        let a = stable_rank(&w).unwrap();
        let b = stable_rank(&w.scale(c)).unwrap();
        prop_assert!((a.stable_rank - b.stable_rank).abs() <= 1e-10 * a.stable_rank);
        let nonzero = a.singular_values.iter().filter(|&&s| s > 1e-12 * a.spectral_norm).count();
        prop_assert!(a.stable_rank >= 1.0 - 1e-12);
        prop_assert!(a.stable_rank <= nonzero as f64 + 1e-12);
        let ratio = a.frobenius_norm.powi(2) / a.spectral_norm.powi(2);
        prop_assert!((a.stable_rank - ratio).abs() <= 1e-12 * ratio);
    }

    #[test]
    fn principal_angle_pairing(m in 2usize..10, seed: u64, ra_frac in 0.0f64..1.0, r_frac in 0.0f64..1.0) {
        let ra = 1 + ((m - 1) as f64 * ra_frac) as usize;
        let r = ra + ((m - ra) as f64 * r_frac) as usize;
        let mut g = rng(seed);
        let u = sample_stiefel_uniform(m, ra.min(m - 1).max(1), &mut g).unwrap();
        let x = sample_stiefel_uniform(m, r.max(u.cols()), &mut g).unwrap();
        prop_assert!(pairing_error(&u, &x) <= 1e-8);
    }

    #[test]
    fn alignment_report_is_consistent(m in 3usize..12, seed: u64) {
        let mut g = rng(seed);
        let ra = 1 + (seed as usize) % (m / 2).max(1);
        let r = ra + (seed as usize / 7) % (m - ra + 1);
        let u = sample_stiefel_uniform(m, ra, &mut g).unwrap();
        let x = sample_stiefel_uniform(m, r, &mut g).unwrap();
        let rep = alignment(&u, &x).unwrap();
        prop_assert!(rep.trace_phi >= -1e-12 && rep.trace_phi <= ra as f64 + 1e-12);
        prop_assert!(rep.singular_values.iter().all(|&s| (-1e-12..=1.0 + 1e-12).contains(&s)));
        prop_assert!((rep.trace_phi + rep.misalignment_trace - ra as f64).abs() <= 1e-8);
        let omega = misalignment_trace(&u, &x).unwrap();
        prop_assert!((omega + rep.trace_phi - r as f64).abs() <= 1e-8);
    }

    #[test]
    fn direction_distances_are_bounded(rows in 1usize..10, cols in 1usize..6, seed: u64) {
        let w = gaussian(rows, cols, &mut rng(seed));
        let d = pairwise_direction_distances(&w).unwrap().distances;
        for i in 0..d.rows() {
            prop_assert_eq!(d[(i, i)], 0.0);
            for j in 0..d.cols() {
                prop_assert!(d[(i, j)] >= 0.0 && d[(i, j)] <= 2.0);
                prop_assert_eq!(d[(i, j)], d[(j, i)]);
            }
        }
    }

    #[test]
    fn landing_components_are_orthogonal((m, r) in tall(10), seed: u64, spread in 0.0f64..2.0) {
        let mut g = rng(seed);
        let mut x = sample_stiefel_uniform(m, r, &mut g).unwrap().into_inner();
        x.add_scaled(spread, &gaussian(m, r, &mut g));
        let grad = gaussian(m, r, &mut g);
        let c = landing_components(&x, &grad).unwrap();
        // rounding in each component is about ε times its input scale
        let xn = x.frobenius_norm();
        let rel_scale = grad.frobenius_norm() * xn * xn;
        let pen_scale = 4.0 * xn * (xn * xn + (r as f64).sqrt());
        let floor = 1e-14
            * (rel_scale * c.penalty.frobenius_norm() + pen_scale * c.relative.frobenius_norm());
        let bound = 1e-8 * c.relative.frobenius_norm() * c.penalty.frobenius_norm() + floor;
        prop_assert!(c.relative.dot(&c.penalty).abs() <= bound);
    }

    #[test]
    fn penalty_step_does_not_increase_infeasibility(
        (m, r) in tall(10), seed: u64, spread in 0.0f64..0.1, lambda in 1e-4f64..1e-1, s in 0.0f64..1.0,
    ) {
        let mut g = rng(seed);
        let mut x = sample_stiefel_uniform(m, r, &mut g).unwrap().into_inner();
        x.add_scaled(spread, &gaussian(m, r, &mut g));
        let eta = s * 1e-3 / lambda;
        let mut next = x.clone();
        next.add_scaled(-eta * lambda, &penalty_gradient(&x));
        let before = distance_to_stiefel(&x).unwrap();
        prop_assert!(distance_to_stiefel(&next).unwrap() <= before * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn folding_theta_into_x_preserves_update(m in 2usize..10, n in 2usize..10, seed: u64, alpha in 0.5f64..64.0) {
        let mut g = rng(seed);
        let r = 1 + (seed as usize) % m.min(n);
        let w0 = gaussian(m, n, &mut g);
        let mut s = AdapterState::init(w0, r, alpha, &mut g).unwrap();
        s.theta = gaussian(r, r, &mut g);
        let a = s.delta_w();
        let b = s.delta_w_merged();
        prop_assert!((&a - &b).frobenius_norm() <= 1e-12 * a.frobenius_norm().max(1e-300));
    }

    #[test]
    fn median_is_monotone_under_union(
        a in prop::collection::vec(-1e6f64..1e6, 1..30),
        b in prop::collection::vec(-1e6f64..1e6, 1..30),
    ) {
        let (ma, mb) = (median(&a), median(&b));
        let mut both = a.clone();
        both.extend_from_slice(&b);
        let mu = median(&both);
        prop_assert!(mu >= ma.min(mb) && mu <= ma.max(mb));
    }

    #[test]
    fn matrix_csv_round_trip_is_exact(rows in 1usize..6, cols in 1usize..6, seed: u64) {
        let w = gaussian(rows, cols, &mut rng(seed)).map(|v| v * 1e-7 + v.powi(3));
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        let back = DenseMatrix::read_csv(std::io::Cursor::new(buf)).unwrap();
        prop_assert_eq!(back, w);
    }

    #[test]
    fn targets_match_their_construction(m in 2usize..12, n in 2usize..12, seed: u64, kappa in 1.0f64..200.0) {
        let ra = 1 + (seed as usize) % (m.min(n) / 2).max(1);
        prop_assume!(2 * ra <= m.min(n));
        let kappa = if ra == 1 { 1.0 } else { kappa };
        let t = make_target(m, n, ra, kappa, Spacing::Linear, &mut rng(seed)).unwrap();
        prop_assert!(t.m() >= t.n());
        prop_assert_eq!(t.transposed, m < n);
        prop_assert!((t.sigma[0] - 1.0).abs() <= 1e-15);
        prop_assert!((t.sigma[ra - 1] - 1.0 / kappa).abs() <= 1e-12);
        prop_assert!(t.sigma.windows(2).all(|p| p[0] >= p[1]));
        let us = DenseMatrix::from_fn(t.m(), ra, |i, j| t.u.as_matrix()[(i, j)] * t.sigma[j]);
        let rebuilt = us.mul_t(t.v.as_matrix());
        prop_assert!((&rebuilt - &t.a).frobenius_norm() <= 1e-12 * t.a.frobenius_norm());
    }

    #[test]
    fn symmetric_targets_have_bounded_spectrum(m in 2usize..12, seed: u64, kappa in 1.0f64..200.0) {
        let rb = 1 + (seed as usize) % (m / 2);
        let kappa = if rb == 1 { 1.0 } else { kappa };
        let t = make_sym_target(m, rb, kappa, Spacing::Linear, 1.0, &mut rng(seed)).unwrap();
        prop_assert!((&t.b - &t.b.transpose()).max_abs() <= 1e-12);
        let lo = 1.0 / kappa;
        for l in sym_eigenvalues(&t.b).unwrap() {
            prop_assert!(l.abs() <= 1e-12 || (l >= lo - 1e-12 && l <= 1.0 + 1e-12), "{l}");
        }
    }

    #[test]
    fn whitened_design_is_orthonormal_and_loss_splits(
        m in 2usize..8, n in 2usize..8, extra in 0usize..10, seed: u64,
    ) {
        let ra = 1 + (seed as usize) % m.min(n);
        let mut g = rng(seed);
        let task = make_whitened_task(m, n, n + extra, ra, &mut g).unwrap();
        let ddt = task.d.mul_t(&task.d);
        prop_assert!((&ddt - &DenseMatrix::identity(n)).frobenius_norm() <= 1e-10);
        let dw = gaussian(m, n, &mut g);
        let full = task.loss_full(&dw).unwrap();
        let split = (&dw - &task.target).frobenius_norm_sq() + task.constant;
        prop_assert!((full - split).abs() <= 1e-10 * (1.0 + full));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rgd_iterates_stay_feasible_with_tangent_gradients(seed: u64, eta in 1e-3f64..0.9, kappa in 1.0f64..50.0) {
        let mut g = rng(seed);
        let t = make_target(8, 6, 2, kappa, Spacing::Linear, &mut g).unwrap();
        let mut f = PolarFactors::random(8, 6, 4, &mut g).unwrap();
        for _ in 0..40 {
            let refreshed = PolarFactors {
                theta: polar_core::factorization::theta_update(&f, &t, 1.0),
                ..f.clone()
            };
            let (e, gy) = polar_core::factorization::riemannian_grads_asym(&refreshed, &t).unwrap();
            prop_assert!(tangency_residual(f.x.as_matrix(), &e) <= 1e-8);
            prop_assert!(tangency_residual(f.y.as_matrix(), &gy) <= 1e-8);
            f = rgd_step_asym(&f, &t, eta, 1.0).unwrap();
            prop_assert!(stiefel_residual(f.x.as_matrix()) <= 1e-8);
            prop_assert!(stiefel_residual(f.y.as_matrix()) <= 1e-8);
        }
    }

    #[test]
    fn traces_have_increasing_iters_and_nonnegative_loss(
        seed in 0u64..1000, algo in prop_oneof![Just(Algorithm::PolarRgd), Just(Algorithm::BmGd), Just(Algorithm::SymRgd)],
        log_every in 1u64..40,
    ) {
        let cfg = RunConfig {
            algorithm: algo,
            m: 10,
            n: 10,
            r: 4,
            r_a: 2,
            kappa: 5.0,
            eta: 0.05,
            max_iters: 200,
            loss_threshold: 1e-10,
            log_every,
            seed,
            ..RunConfig::default()
        };
        let out = run(&cfg).unwrap();
        let recs = &out.trace.records;
        prop_assert!(!recs.is_empty());
        prop_assert!(recs.windows(2).all(|p| p[0].iter < p[1].iter));
        prop_assert!(recs.iter().all(|r| r.loss >= 0.0));
    }
}
