//! Porous-media restoration in the discrete H^{-1} geometry.
//!
//! The implicit step `u - h Laplacian(beta(u)) = u_prev` is solved through
//! the dual substitution `w = beta(u)`: the system
//! `gamma(w) - h Laplacian(w) = u_prev` (with `gamma = beta^{-1}` and zero
//! Dirichlet ghosts on `w`) is swept pixel by pixel, each scalar
//! sub-equation being strictly monotone in `w`.

use crate::engine::{EnergyModel, SolverConfig, StepReport};
use crate::error::SolveError;
use crate::grid::{BoundaryCondition, ImageGrid};
use crate::model::{FlowModel, PorousParams};
use crate::poisson::{laplacian_dirichlet, poisson_solve_dirichlet};
use crate::scalar::{lit, Scalar};
use thiserror::Error;

/// `beta(r) = |r|^a r`, strictly increasing, odd.
pub fn beta_pm<T: Scalar>(r: T, a: T) -> T {
    if a == T::zero() {
        return r;
    }
    r.abs().powf(a) * r
}

/// Inverse nonlinearity `gamma(w) = sgn(w) |w|^{1/(1+a)}`.
pub fn gamma_pm<T: Scalar>(w: T, a: T) -> T {
    if a == T::zero() {
        return w;
    }
    if w == T::zero() {
        return T::zero();
    }
    let q = (T::one() + a).recip();
    w.signum() * w.abs().powf(q)
}

/// Antiderivative of `beta`: the convex potential `|r|^{a+2} / (a+2)`
/// whose H^{-1} gradient flow is the porous-media model.
pub fn porous_energy<T: Scalar>(u: &ImageGrid<T>, params: PorousParams<T>) -> T {
    let expo = params.a + lit::<T>(2.0);
    u.values().iter().map(|&r| r.abs().powf(expo) / expo).sum()
}

/// Pointwise porous potential as an [`EnergyModel`], used by the proximal
/// oracle in the H^{-1} metric. The spatial coupling lives entirely in the
/// metric, so the gradient is just `beta(u)`.
#[derive(Debug, Clone, Copy)]
pub struct PorousEnergy<T: Scalar> {
    pub params: PorousParams<T>,
}

impl<T: Scalar> EnergyModel<T> for PorousEnergy<T> {
    fn descriptor(&self) -> FlowModel<T> {
        FlowModel::PorousMedia(self.params)
    }

    fn bc(&self) -> BoundaryCondition {
        BoundaryCondition::Dirichlet
    }

    fn energy(&self, u: &ImageGrid<T>) -> T {
        porous_energy(u, self.params)
    }

    fn energy_gradient(&self, u: &ImageGrid<T>) -> ImageGrid<T> {
        u.map(|r| beta_pm(r, self.params.a))
    }
}

/// Squared discrete H^{-1} norm `<(-Laplacian)^{-1} u, u>` with the
/// Dirichlet Laplacian, regardless of the image's own boundary tag.
pub fn h_minus1_norm_sq<T: Scalar>(u: &ImageGrid<T>, tol: T) -> Result<T, SolveError> {
    let w = poisson_solve_dirichlet(u, tol)?;
    Ok(w.dot(u))
}

/// Discrete H^{-1} inner product `<(-Laplacian)^{-1} u, v>`.
pub fn h_minus1_inner<T: Scalar>(u: &ImageGrid<T>, v: &ImageGrid<T>, tol: T) -> Result<T, SolveError> {
    let w = poisson_solve_dirichlet(u, tol)?;
    Ok(w.dot(v))
}

/// Solves the strictly monotone scalar equation `gamma(w) + c w = rhs`
/// (`c > 0`) by safeguarded Newton with a bisection fallback; `gamma` has
/// unbounded slope at the origin, so pure Newton is unsafe there.
/// `w_init` warm-starts the iteration (pass 0 when nothing is known).
fn solve_scalar_dual<T: Scalar>(c: T, rhs: T, a: T, w_init: T) -> T {
    if rhs == T::zero() {
        return T::zero();
    }
    if a == T::zero() {
        return rhs / (T::one() + c);
    }
    let s = rhs.abs();
    let q = (T::one() + a).recip();
    // f(w) = w^q + c w - s on w >= 0; f(0) < 0 <= f(hi).
    let mut lo = T::zero();
    let mut hi = (s / c).min(s.powf(q.recip()));
    let f = |w: T| w.powf(q) + c * w - s;
    if f(hi) < T::zero() {
        // Guard against round-off at the analytic bracket edge.
        hi = hi * lit::<T>(1.0001) + lit::<T>(1e-300);
    }
    let tol = lit::<T>(1e-12) * (T::one() + s);
    let newton_floor = lit::<T>(1e-10);
    let guess = w_init.abs();
    let mut w = if guess > lo && guess < hi { guess } else { hi };
    for _ in 0..200 {
        let fw = f(w);
        if fw.abs() <= tol {
            break;
        }
        if fw > T::zero() {
            hi = w;
        } else {
            lo = w;
        }
        let mut next = if w > newton_floor {
            w - fw / (q * w.powf(q - T::one()) + c)
        } else {
            T::nan()
        };
        if !(next.is_finite() && next > lo && next < hi) {
            next = lit::<T>(0.5) * (lo + hi);
        }
        if (next - w).abs() <= lit::<T>(1e-15) * (T::one() + w) {
            w = next;
            break;
        }
        w = next;
    }
    w * rhs.signum()
}

struct DualSweepOutcome<T: Scalar> {
    u: ImageGrid<T>,
    w: ImageGrid<T>,
    residual: T,
    sweeps: usize,
}

/// Gauss-Seidel sweeps (lexicographic, deterministic) on
/// `gamma(w) + h_scale (-Laplacian_D) w = b` until the primal residual
/// meets `threshold`.
fn dual_gauss_seidel<T: Scalar>(
    b: &ImageGrid<T>,
    h_scale: T,
    a: T,
    threshold: T,
    max_sweeps: usize,
) -> Result<DualSweepOutcome<T>, SolveError> {
    let (rows, cols) = (b.rows(), b.cols());
    let mut w = ImageGrid::zeros(rows, cols, BoundaryCondition::Dirichlet);
    let c = lit::<T>(4.0) * h_scale;
    let mut last_residual = T::infinity();
    for sweep in 1..=max_sweeps {
        for i in 0..rows {
            for j in 0..cols {
                let mut nb = T::zero();
                if i > 0 {
                    nb += w[(i - 1, j)];
                }
                if i + 1 < rows {
                    nb += w[(i + 1, j)];
                }
                if j > 0 {
                    nb += w[(i, j - 1)];
                }
                if j + 1 < cols {
                    nb += w[(i, j + 1)];
                }
                let rhs = b[(i, j)] + h_scale * nb;
                w[(i, j)] = solve_scalar_dual(c, rhs, a, w[(i, j)]);
            }
        }
        // Primal residual of u + h_scale (-Lap) w = b with u = gamma(w).
        let u = w.map(|v| gamma_pm(v, a));
        let lap_w = laplacian_dirichlet(&w);
        let mut res_sq = T::zero();
        for k in 0..u.len() {
            let r = u.values()[k] - h_scale * lap_w.values()[k] - b.values()[k];
            res_sq += r * r;
        }
        last_residual = res_sq.sqrt();
        if last_residual <= threshold {
            return Ok(DualSweepOutcome {
                u,
                w,
                residual: last_residual,
                sweeps: sweep,
            });
        }
    }
    Err(SolveError::IterationLimitExceeded {
        max_iters: max_sweeps,
        residual: last_residual.to_f64().unwrap_or(f64::NAN),
        tol: threshold.to_f64().unwrap_or(f64::NAN),
    })
}

/// One implicit step `u - h Laplacian(beta(u)) = u_prev` of the
/// porous-media flow, solved in the dual variable `w = beta(u)`.
pub fn porous_resolvent<T: Scalar>(
    u_prev: &ImageGrid<T>,
    h: T,
    params: PorousParams<T>,
    cfg: &SolverConfig<T>,
) -> Result<(ImageGrid<T>, StepReport<T>), SolveError> {
    assert!(h > T::zero(), "step size must be positive");
    let threshold = cfg.prox_tol * (T::one() + u_prev.norm_l2());
    let outcome = dual_gauss_seidel(u_prev, h, params.a, threshold, cfg.max_iters)?;
    let energy_before = porous_energy(u_prev, params);
    let energy_after = porous_energy(&outcome.u, params);
    let u = {
        let mut u = outcome.u;
        u.bc = u_prev.bc;
        u
    };
    Ok((
        u,
        StepReport {
            step_index: 0,
            energy_before,
            energy_after,
            residual: outcome.residual,
            inner_iterations: outcome.sweeps,
        },
    ))
}

/// Composes porous resolvent steps with `h = T/n_steps` starting from the
/// degraded image `f`.
pub fn porous_evolve<T: Scalar>(
    f: &ImageGrid<T>,
    t_final: T,
    n_steps: usize,
    params: PorousParams<T>,
    cfg: &SolverConfig<T>,
) -> Result<(ImageGrid<T>, Vec<StepReport<T>>), SolveError> {
    assert!(t_final > T::zero(), "final time must be positive");
    assert!(n_steps >= 1, "need at least one step");
    let h = t_final / T::from_usize(n_steps).expect("step count fits in scalar");
    let nonneg_input = f.min_value() >= T::zero();
    let mut u = f.clone();
    let mut reports = Vec::with_capacity(n_steps);
    for step in 0..n_steps {
        let (next, mut report) =
            porous_resolvent(&u, h, params, cfg).map_err(|e| e.at_step(step))?;
        report.step_index = step;
        u = next;
        reports.push(report);
    }
    if nonneg_input && u.min_value() < lit::<T>(-1e-8) {
        log::warn!(
            "porous_evolve: nonnegative input produced min value {}",
            u.min_value()
        );
    }
    Ok((u, reports))
}

/// Sparse observation: point masses `weight` carrying gray `value` at
/// individual pixels. The deposited load at a pixel is `weight * value`
/// (a pure point mass has `value = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseObservation<T: Scalar> {
    pub samples: Vec<SparseSample<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseSample<T: Scalar> {
    pub row: usize,
    pub col: usize,
    pub weight: T,
    pub value: T,
}

/// Failures while loading or validating sparse observations.
#[derive(Debug, Error)]
pub enum ObservationError {
    #[error("i/o failure reading observations: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing or malformed header; expected 'row,col,weight,value'")]
    BadHeader,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: weight must be positive")]
    NonPositiveWeight { line: usize },
    #[error("duplicate pixel ({row}, {col})")]
    DuplicatePixel { row: usize, col: usize },
    #[error("pixel ({row}, {col}) outside a {rows}x{cols} grid")]
    OutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
}

impl<T: Scalar> SparseObservation<T> {
    /// Parses the CSV schema `row,col,weight,value` (header required).
    pub fn from_csv_str(text: &str) -> Result<Self, ObservationError> {
        let mut lines = text.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((_, l)) if l.trim().is_empty() => continue,
                Some((_, l)) => break l,
                None => return Err(ObservationError::BadHeader),
            }
        };
        let normalized: Vec<&str> = header.split(',').map(|s| s.trim()).collect();
        if normalized != ["row", "col", "weight", "value"] {
            return Err(ObservationError::BadHeader);
        }
        let mut samples = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(|s| s.trim()).collect();
            if fields.len() != 4 {
                return Err(ObservationError::Parse {
                    line: line_no,
                    msg: format!("expected 4 fields, got {}", fields.len()),
                });
            }
            let row: usize = fields[0].parse().map_err(|e| ObservationError::Parse {
                line: line_no,
                msg: format!("row: {e}"),
            })?;
            let col: usize = fields[1].parse().map_err(|e| ObservationError::Parse {
                line: line_no,
                msg: format!("col: {e}"),
            })?;
            let weight: f64 = fields[2].parse().map_err(|e| ObservationError::Parse {
                line: line_no,
                msg: format!("weight: {e}"),
            })?;
            let value: f64 = fields[3].parse().map_err(|e| ObservationError::Parse {
                line: line_no,
                msg: format!("value: {e}"),
            })?;
            if !(weight > 0.0) {
                return Err(ObservationError::NonPositiveWeight { line: line_no });
            }
            samples.push(SparseSample {
                row,
                col,
                weight: lit(weight),
                value: lit(value),
            });
        }
        Ok(Self { samples })
    }

    pub fn from_csv_path(path: &std::path::Path) -> Result<Self, ObservationError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text)
    }

    /// Checks index bounds and pixel uniqueness against a target grid.
    pub fn validate(&self, rows: usize, cols: usize) -> Result<(), ObservationError> {
        let mut seen = std::collections::HashSet::new();
        for s in &self.samples {
            if s.row >= rows || s.col >= cols {
                return Err(ObservationError::OutOfRange {
                    row: s.row,
                    col: s.col,
                    rows,
                    cols,
                });
            }
            if !seen.insert((s.row, s.col)) {
                return Err(ObservationError::DuplicatePixel {
                    row: s.row,
                    col: s.col,
                });
            }
        }
        Ok(())
    }

    /// Rasterizes the point masses onto a grid: each sample deposits
    /// `weight * value` at its pixel.
    pub fn load_image(&self, rows: usize, cols: usize) -> ImageGrid<T> {
        let mut f = ImageGrid::zeros(rows, cols, BoundaryCondition::Dirichlet);
        for s in &self.samples {
            f[(s.row, s.col)] += s.weight * s.value;
        }
        f
    }
}

/// Stationary restorer with dense observations: solves
/// `-Laplacian(w) + gamma(w) = f` with `w = beta(u)` Dirichlet, returning
/// both the restored image `u = gamma(w)` and the dual `w` (the smooth
/// object).
pub fn porous_stationary_restore<T: Scalar>(
    f: &ImageGrid<T>,
    params: PorousParams<T>,
    cfg: &SolverConfig<T>,
) -> Result<(ImageGrid<T>, ImageGrid<T>), SolveError> {
    let threshold = cfg.prox_tol * (T::one() + f.norm_l2());
    let outcome = dual_gauss_seidel(f, T::one(), params.a, threshold, cfg.max_iters)?;
    Ok((outcome.u, outcome.w))
}

/// Stationary restorer with sparse point-mass observations on a
/// `rows x cols` grid.
pub fn porous_stationary_restore_sparse<T: Scalar>(
    obs: &SparseObservation<T>,
    rows: usize,
    cols: usize,
    params: PorousParams<T>,
    cfg: &SolverConfig<T>,
) -> Result<(ImageGrid<T>, ImageGrid<T>), SolveError> {
    if obs.samples.is_empty() {
        return Err(SolveError::EmptyObservation);
    }
    obs.validate(rows, cols)
        .map_err(|e| SolveError::InvalidObservation(e.to_string()))?;
    let f = obs.load_image(rows, cols);
    porous_stationary_restore(&f, params, cfg)
}
