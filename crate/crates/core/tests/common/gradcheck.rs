//! Finite-difference checks for every analytic gradient. Each function draws
//! `instances` random problems and returns the worst relative error.

use polar_core::factorization::{
    bm_gradients, make_sym_target, make_target, projected_euclidean_grads, riemannian_grad_sym,
    riemannian_grads_asym, theta_gradient, theta_update, theta_update_sym, BMFactors, PolarFactors,
    Spacing, SymFactors,
};
use polar_core::landing::{
    lora_gradients, make_whitened_task, penalty_gradient, polar_gradients, AdapterState, LoraState,
};
use polar_core::matrix::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{fd_gradient, gaussian, rel_err, tangent_projection};

fn half_sq(m: &DenseMatrix) -> f64 {
    0.5 * m.frobenius_norm_sq()
}

fn polar_loss(x: &DenseMatrix, th: &DenseMatrix, y: &DenseMatrix, a: &DenseMatrix) -> f64 {
    half_sq(&(&x.mul(th).mul_t(y) - a))
}

fn kappa(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(1.0..20.0)
}

/// `E` and `F` against the tangent projection of the differenced loss in `X`
/// (resp. `Y`) at the refreshed `Θ`.
pub fn riemannian_asym(instances: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let k = kappa(&mut rng);
        let t = make_target(6, 6, 2, k, Spacing::Linear, &mut rng).unwrap();
        let mut f = PolarFactors::random(6, 6, 3, &mut rng).unwrap();
        f.theta = theta_update(&f, &t, 1.0);
        let (e, g) = riemannian_grads_asym(&f, &t).unwrap();
        let x = f.x.as_matrix();
        let y = f.y.as_matrix();
        let fx = fd_gradient(x, |p| polar_loss(p, &f.theta, y, &t.a));
        let fy = fd_gradient(y, |p| polar_loss(x, &f.theta, p, &t.a));
        worst = worst
            .max(rel_err(&e, &tangent_projection(x, &fx)))
            .max(rel_err(&g, &tangent_projection(y, &fy)));
    }
    worst
}

/// Projected gradients at an arbitrary `Θ` (the `γ < 1` path).
pub fn projected_asym(instances: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let k = kappa(&mut rng);
        let t = make_target(6, 5, 2, k, Spacing::Linear, &mut rng).unwrap();
        let mut f = PolarFactors::random(6, 5, 3, &mut rng).unwrap();
        f.theta = gaussian(3, 3, &mut rng);
        let (e, g) = projected_euclidean_grads(&f, &t).unwrap();
        let x = f.x.as_matrix();
        let y = f.y.as_matrix();
        let fx = fd_gradient(x, |p| polar_loss(p, &f.theta, y, &t.a));
        let fy = fd_gradient(y, |p| polar_loss(x, &f.theta, p, &t.a));
        worst = worst
            .max(rel_err(&e, &tangent_projection(x, &fx)))
            .max(rel_err(&g, &tangent_projection(y, &fy)));
    }
    worst
}

pub fn theta(instances: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let k = kappa(&mut rng);
        let t = make_target(6, 5, 2, k, Spacing::Linear, &mut rng).unwrap();
        let mut f = PolarFactors::random(6, 5, 3, &mut rng).unwrap();
        f.theta = gaussian(3, 3, &mut rng);
        let got = theta_gradient(&f, &t).unwrap();
        let want = fd_gradient(&f.theta, |p| {
            polar_loss(f.x.as_matrix(), p, f.y.as_matrix(), &t.a)
        });
        worst = worst.max(rel_err(&got, &want));
    }
    worst
}

/// `G` against half the tangent projection of the differenced symmetric loss
/// at `Θ = XᵀBX`, with `X` perturbed in both slots.
pub fn riemannian_sym(instances: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
        let k = kappa(&mut rng);
        let t = make_sym_target(6, 2, k, Spacing::Linear, 1.0, &mut rng).unwrap();
        let mut f = SymFactors::random(6, 3, &mut rng).unwrap();
        f.theta = theta_update_sym(&f, &t, 1.0);
        let got = riemannian_grad_sym(&f, &t).unwrap();
        let x = f.x.as_matrix();
        let fd = fd_gradient(x, |p| half_sq(&(&p.mul(&f.theta).mul_t(p) - &t.b)));
        worst = worst.max(rel_err(&got, &tangent_projection(x, &fd).scale(0.5)));
    }
    worst
}

pub fn burer_monteiro(instances: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + seed);
        let k = kappa(&mut rng);
        let t = make_target(6, 5, 2, k, Spacing::Linear, &mut rng).unwrap();
        let f = BMFactors {
            z1: gaussian(6, 3, &mut rng),
            z2: gaussian(5, 3, &mut rng),
        };
        let (g1, g2) = bm_gradients(&f, &t).unwrap();
        let w1 = fd_gradient(&f.z1, |p| half_sq(&(&p.mul_t(&f.z2) - &t.a)));
        let w2 = fd_gradient(&f.z2, |p| half_sq(&(&f.z1.mul_t(p) - &t.a)));
        worst = worst.max(rel_err(&g1, &w1)).max(rel_err(&g2, &w2));
    }
    worst
}

pub fn penalty(instances: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(6000 + seed);
        let mut x = polar_core::stiefel::sample_stiefel_uniform(7, 3, &mut rng)
            .unwrap()
            .into_inner();
        let spread = rng.random_range(0.01..0.5);
        x.add_scaled(spread, &gaussian(7, 3, &mut rng));
        let got = penalty_gradient(&x);
        let want = fd_gradient(&x, |p| {
            let mut g = p.t_mul(p);
            for i in 0..g.rows() {
                g[(i, i)] -= 1.0;
            }
            g.frobenius_norm_sq()
        });
        worst = worst.max(rel_err(&got, &want));
    }
    worst
}

fn near_stiefel(m: usize, r: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let mut x = polar_core::stiefel::sample_stiefel_uniform(m, r, rng)
        .unwrap()
        .into_inner();
    x.add_scaled(0.1, &gaussian(m, r, rng));
    x
}

/// Adapter gradients against differences of the full `N`-column loss.
pub fn whitened(instances: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + seed);
        let task = make_whitened_task(6, 5, 12, 2, &mut rng).unwrap();
        let alpha = rng.random_range(1.0..8.0);
        let s = AdapterState {
            w0: task.w0.clone(),
            x: near_stiefel(6, 3, &mut rng),
            theta: gaussian(3, 3, &mut rng),
            y: near_stiefel(5, 3, &mut rng),
            scale_alpha: alpha,
        };
        let g = polar_gradients(&s, &task).unwrap();
        let c = alpha / 3.0;
        let loss = |x: &DenseMatrix, th: &DenseMatrix, y: &DenseMatrix| {
            task.loss_full(&x.mul(th).mul_t(y).scale(c)).unwrap()
        };
        let wx = fd_gradient(&s.x, |p| loss(p, &s.theta, &s.y));
        let wt = fd_gradient(&s.theta, |p| loss(&s.x, p, &s.y));
        let wy = fd_gradient(&s.y, |p| loss(&s.x, &s.theta, p));
        worst = worst
            .max(rel_err(&g.x, &wx))
            .max(rel_err(&g.theta, &wt))
            .max(rel_err(&g.y, &wy));

        let l = LoraState {
            w0: task.w0.clone(),
            z1: gaussian(6, 3, &mut rng),
            z2: gaussian(5, 3, &mut rng),
            scale_alpha: alpha,
        };
        let lg = lora_gradients(&l, &task).unwrap();
        let w1 = fd_gradient(&l.z1, |p| task.loss_full(&p.mul_t(&l.z2).scale(c)).unwrap());
        let w2 = fd_gradient(&l.z2, |p| task.loss_full(&l.z1.mul_t(p).scale(c)).unwrap());
        worst = worst.max(rel_err(&lg.z1, &w1)).max(rel_err(&lg.z2, &w2));
    }
    worst
}
