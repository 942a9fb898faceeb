//! Standard 5-point Dirichlet Laplacian (zero ghosts on all four sides)
//! and the conjugate-gradient Poisson solve behind the discrete H^{-1}
//! inner product.
//!
//! This operator is distinct from [`crate::grid::laplacian`], which is the
//! exact composition of the one-sided gradient/divergence pair; the
//! symmetric all-ghost stencil is the one with the classical sine
//! eigenstructure and is what the dual (porous-media) solves use.

use crate::error::SolveError;
use crate::grid::{BoundaryCondition, ImageGrid};
use crate::scalar::{lit, Scalar};

/// Standard 5-point Laplacian with zero Dirichlet ghosts on every side.
pub fn laplacian_dirichlet<T: Scalar>(u: &ImageGrid<T>) -> ImageGrid<T> {
    let (rows, cols) = (u.rows(), u.cols());
    let mut out = ImageGrid::zeros(rows, cols, BoundaryCondition::Dirichlet);
    let four = lit::<T>(4.0);
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = -four * u[(i, j)];
            if i > 0 {
                acc += u[(i - 1, j)];
            }
            if i + 1 < rows {
                acc += u[(i + 1, j)];
            }
            if j > 0 {
                acc += u[(i, j - 1)];
            }
            if j + 1 < cols {
                acc += u[(i, j + 1)];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// Smallest eigenvalue-style sine mode of the Dirichlet Laplacian, useful
/// as an analytic test vector: `laplacian_dirichlet(mode) = -eigenvalue * mode`.
pub fn dirichlet_sine_mode<T: Scalar>(rows: usize, cols: usize) -> (ImageGrid<T>, T) {
    let pi = lit::<T>(std::f64::consts::PI);
    let rn = lit::<T>((rows + 1) as f64);
    let cn = lit::<T>((cols + 1) as f64);
    let mode = ImageGrid::from_fn(rows, cols, BoundaryCondition::Dirichlet, |i, j| {
        (pi * lit::<T>((i + 1) as f64) / rn).sin() * (pi * lit::<T>((j + 1) as f64) / cn).sin()
    });
    let half = lit::<T>(0.5);
    let s_r = (half * pi / rn).sin();
    let s_c = (half * pi / cn).sin();
    let eig = lit::<T>(4.0) * (s_r * s_r + s_c * s_c);
    (mode, eig)
}

/// Solves `-laplacian_dirichlet(w) = f` by conjugate gradients until the
/// relative residual drops below `tol`. Deterministic for fixed inputs.
pub fn poisson_solve_dirichlet<T: Scalar>(
    f: &ImageGrid<T>,
    tol: T,
) -> Result<ImageGrid<T>, SolveError> {
    assert!(tol > T::zero(), "tolerance must be positive");
    let b_norm = f.norm_l2();
    if b_norm == T::zero() {
        return Ok(ImageGrid::zeros(
            f.rows(),
            f.cols(),
            BoundaryCondition::Dirichlet,
        ));
    }
    let apply = |v: &ImageGrid<T>| laplacian_dirichlet(v).scale(-T::one());
    let max_iters = 2 * f.len() + 100;
    let threshold = tol * b_norm;

    let mut x = ImageGrid::zeros(f.rows(), f.cols(), BoundaryCondition::Dirichlet);
    let mut r = f.clone().with_bc(BoundaryCondition::Dirichlet);
    let mut p = r.clone();
    let mut rs = r.dot(&r);
    for iter in 0..max_iters {
        let ap = apply(&p);
        let p_ap = p.dot(&ap);
        if p_ap <= T::zero() {
            // Round-off exhausted the Krylov direction; report as stalled.
            return Err(SolveError::IterationLimitExceeded {
                max_iters: iter,
                residual: rs.sqrt().to_f64().unwrap_or(f64::NAN),
                tol: threshold.to_f64().unwrap_or(f64::NAN),
            });
        }
        let alpha = rs / p_ap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        // Periodically recompute the true residual to shed recurrence drift.
        if (iter + 1) % 64 == 0 {
            r = f.sub(&apply(&x)).with_bc(BoundaryCondition::Dirichlet);
        }
        let rs_new = r.dot(&r);
        if rs_new.sqrt() <= threshold {
            let true_res = f.sub(&apply(&x)).norm_l2();
            if true_res <= threshold {
                return Ok(x);
            }
            r = f.sub(&apply(&x)).with_bc(BoundaryCondition::Dirichlet);
            let refreshed = r.dot(&r);
            p = r.clone();
            rs = refreshed;
            continue;
        }
        let beta = rs_new / rs;
        p = r.add(&p.scale(beta)).with_bc(BoundaryCondition::Dirichlet);
        rs = rs_new;
    }
    let residual = f.sub(&apply(&x)).norm_l2();
    Err(SolveError::IterationLimitExceeded {
        max_iters,
        residual: residual.to_f64().unwrap_or(f64::NAN),
        tol: threshold.to_f64().unwrap_or(f64::NAN),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sine_mode_is_eigenvector() {
        let (mode, eig) = dirichlet_sine_mode::<f64>(9, 7);
        let l = laplacian_dirichlet(&mode);
        for (lv, mv) in l.values().iter().zip(mode.values()) {
            assert!((lv + eig * mv).abs() <= 1e-10 * mv.abs().max(1e-3));
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let f = ImageGrid::<f64>::zeros(5, 5, BoundaryCondition::Dirichlet);
        let w = poisson_solve_dirichlet(&f, 1e-10).unwrap();
        assert!(w.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eigenmode_rhs_recovers_mode() {
        let tol = 1e-11;
        let (mode, eig) = dirichlet_sine_mode::<f64>(8, 8);
        let f = mode.scale(eig);
        let w = poisson_solve_dirichlet(&f, tol).unwrap();
        let err = w.sub(&mode).norm_l2();
        assert!(err <= 10.0 * tol * f.norm_l2() / eig + 1e-12, "err {err}");
    }

    #[test]
    fn solve_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let f = ImageGrid::from_fn(7, 6, BoundaryCondition::Dirichlet, |_, _| {
                rng.gen_range(-1.0..1.0)
            });
            let g = ImageGrid::from_fn(7, 6, BoundaryCondition::Dirichlet, |_, _| {
                rng.gen_range(-1.0..1.0)
            });
            let a = f.dot(&poisson_solve_dirichlet(&g, 1e-12).unwrap());
            let b = poisson_solve_dirichlet(&f, 1e-12).unwrap().dot(&g);
            assert!((a - b).abs() <= 1e-8 * a.abs().max(b.abs()).max(1e-12));
        }
    }

    #[test]
    fn residual_contract_on_random_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = ImageGrid::from_fn(12, 10, BoundaryCondition::Dirichlet, |_, _| {
            rng.gen_range(-100.0..100.0)
        });
        let tol = 1e-10;
        let w = poisson_solve_dirichlet(&f, tol).unwrap();
        let res = f.sub(&laplacian_dirichlet(&w).scale(-1.0)).norm_l2();
        assert!(res <= tol * f.norm_l2());
    }
}
