//! The concrete divergence-form energies: heat (Dirichlet integral),
//! p-Laplacian, Huber-regularized total variation, the gradient-constrained
//! Perona-Malik model with its penalized projection, and the L1-fidelity
//! total-variation restorer.
//!
//! Every energy here is convex; the flow gradients are assembled as
//! `-divergence(flux(gradient(u)))` so the discrete adjoint identity makes
//! each one the true gradient of its energy sum.

use crate::engine::{
    resolvent_step, EnergyModel, RestoreError, SolverConfig, StepReport,
};
use crate::error::SolveError;
use crate::grid::{divergence, gradient_bc, BoundaryCondition, ImageGrid, VectorField};
use crate::model::{
    FlowModel, L1FidelityParams, PLaplacianParams, PeronaMalikParams, TvEpsParams,
};
use crate::scalar::{lit, Scalar, Vec2};

/// Density floor used by the p-Laplacian descent surrogate when p < 2.
/// Applied inside iterations only; residuals use the exact density.
const PLAP_DELTA_FLOOR: f64 = 1e-8;

/// Huber-smoothed direction field: `v/eps` inside the ball `|v| <= eps`,
/// `v/|v|` outside. Bounded by 1 and continuous at the knee.
pub fn psi_eps<T: Scalar>(v: Vec2<T>, eps: T) -> Vec2<T> {
    debug_assert!(eps > T::zero());
    let n = (v.0 * v.0 + v.1 * v.1).sqrt();
    if n <= eps {
        (v.0 / eps, v.1 / eps)
    } else {
        (v.0 / n, v.1 / n)
    }
}

/// Huber density: `r^2/(2 eps)` for `r <= eps`, `r - eps/2` beyond. C^1,
/// convex; its derivative is the radial magnitude of [`psi_eps`].
pub fn j_eps<T: Scalar>(r: T, eps: T) -> T {
    debug_assert!(r >= T::zero() && eps > T::zero());
    let half = lit::<T>(0.5);
    if r <= eps {
        r * r / (eps + eps)
    } else {
        r - half * eps
    }
}

/// Smoothed absolute value on signed arguments, same knee shape as
/// [`j_eps`]; used for the L1 fidelity term.
pub fn smooth_abs<T: Scalar>(t: T, delta: T) -> T {
    j_eps(t.abs(), delta)
}

/// Derivative of [`smooth_abs`]: `t/delta` clamped to [-1, 1].
pub fn smooth_sign<T: Scalar>(t: T, delta: T) -> T {
    (t / delta).max(-T::one()).min(T::one())
}

/// Perona-Malik diffusivity `g(s) = alpha^2 / (alpha^2 + s)`, `s = |grad|^2`.
pub fn pm_g<T: Scalar>(s: T, alpha: T) -> T {
    debug_assert!(s >= T::zero() && alpha > T::zero());
    let a2 = alpha * alpha;
    a2 / (a2 + s)
}

/// Diffusivity truncated at the well-posedness boundary: equals
/// [`pm_g`] for `s <= alpha^2` (i.e. `|grad| <= alpha`) and stays at the
/// boundary value 1/2 beyond, which keeps the flux
/// `r -> pm_g_trunc(|r|^2) r` continuous and nondecreasing in `|r|`.
pub fn pm_g_trunc<T: Scalar>(s: T, alpha: T) -> T {
    let a2 = alpha * alpha;
    if s <= a2 {
        pm_g(s, alpha)
    } else {
        lit(0.5)
    }
}

/// Energy density of the truncated Perona-Malik flux: the exact
/// antiderivative of `r -> pm_g_trunc(r^2) r`, continuous by construction.
pub fn pm_j_alpha<T: Scalar>(r: T, alpha: T) -> T {
    let half = lit::<T>(0.5);
    let quarter = lit::<T>(0.25);
    let a2 = alpha * alpha;
    if r <= alpha {
        half * a2 * (T::one() + r * r / a2).ln()
    } else {
        half * a2 * lit::<T>(std::f64::consts::LN_2) + quarter * (r * r - a2)
    }
}

/// Penalization of the gradient bound: zero inside `|v| <= alpha`, radial
/// push-back `(|v| - alpha)/eps_pen` outside.
pub fn beta_eps_penalty<T: Scalar>(v: Vec2<T>, alpha: T, eps_pen: T) -> Vec2<T> {
    let n = (v.0 * v.0 + v.1 * v.1).sqrt();
    if n <= alpha {
        (T::zero(), T::zero())
    } else {
        let scale = (n - alpha) / (eps_pen * n);
        (scale * v.0, scale * v.1)
    }
}

/// Antiderivative of the radial penalty: `(r - alpha)^2 / (2 eps_pen)`
/// past the bound, zero inside.
pub fn penalty_density<T: Scalar>(r: T, alpha: T, eps_pen: T) -> T {
    if r <= alpha {
        T::zero()
    } else {
        let d = r - alpha;
        d * d / (eps_pen + eps_pen)
    }
}

fn field_energy<T: Scalar>(
    u: &ImageGrid<T>,
    bc: BoundaryCondition,
    density: impl Fn(T, T) -> T,
) -> T {
    let g = gradient_bc(u, bc);
    let mut acc = T::zero();
    for k in 0..g.vx.len() {
        acc += density(g.vx[k], g.vy[k]);
    }
    acc
}

fn field_flux_gradient<T: Scalar>(
    u: &ImageGrid<T>,
    bc: BoundaryCondition,
    flux: impl Fn(T, T) -> (T, T),
) -> ImageGrid<T> {
    let mut g = gradient_bc(u, bc);
    g.map_inplace(|x, y| flux(x, y));
    divergence(&g, bc).scale(-T::one())
}

/// Huber-regularized total-variation energy
/// `sum j_eps(|grad u|) + (eps/2)|grad u|^2`.
pub fn tv_eps_energy<T: Scalar>(u: &ImageGrid<T>, params: TvEpsParams<T>) -> T {
    let half = lit::<T>(0.5);
    let eps = params.eps;
    field_energy(u, u.bc, |x, y| {
        let n2 = x * x + y * y;
        j_eps(n2.sqrt(), eps) + half * eps * n2
    })
}

/// p-Laplacian energy `sum |grad u|^p / p`.
pub fn plap_energy<T: Scalar>(u: &ImageGrid<T>, params: PLaplacianParams<T>) -> T {
    let p = params.p;
    field_energy(u, u.bc, |x, y| (x * x + y * y).sqrt().powf(p) / p)
}

/// Heat flow / Dirichlet integral `1/2 sum |grad u|^2`.
#[derive(Debug, Clone, Copy)]
pub struct HeatEnergy {
    pub bc: BoundaryCondition,
}

impl<T: Scalar> EnergyModel<T> for HeatEnergy {
    fn descriptor(&self) -> FlowModel<T> {
        FlowModel::Heat
    }

    fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    fn energy(&self, u: &ImageGrid<T>) -> T {
        let half = lit::<T>(0.5);
        field_energy(u, self.bc, |x, y| half * (x * x + y * y))
    }

    fn energy_gradient(&self, u: &ImageGrid<T>) -> ImageGrid<T> {
        // flux = grad u, so the gradient is minus the Laplacian.
        field_flux_gradient(u, self.bc, |x, y| (x, y))
    }
}

/// `sum |grad u|^p / p` with flux `|grad u|^{p-2} grad u` (zero where the
/// gradient vanishes and p < 2).
#[derive(Debug, Clone, Copy)]
pub struct PLaplacianEnergy<T: Scalar> {
    pub params: PLaplacianParams<T>,
    pub bc: BoundaryCondition,
}

impl<T: Scalar> PLaplacianEnergy<T> {
    fn flux_exact(&self, x: T, y: T) -> (T, T) {
        let n = (x * x + y * y).sqrt();
        if n == T::zero() {
            return (T::zero(), T::zero());
        }
        let mag = n.powf(self.params.p - T::one());
        (mag * x / n, mag * y / n)
    }

    fn flux_floored(&self, x: T, y: T) -> (T, T) {
        let floor = lit::<T>(PLAP_DELTA_FLOOR);
        let n = (x * x + y * y).sqrt().max(floor);
        let scale = n.powf(self.params.p - lit::<T>(2.0));
        (scale * x, scale * y)
    }
}

impl<T: Scalar> EnergyModel<T> for PLaplacianEnergy<T> {
    fn descriptor(&self) -> FlowModel<T> {
        FlowModel::PLaplacian(self.params)
    }

    fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    fn energy(&self, u: &ImageGrid<T>) -> T {
        let p = self.params.p;
        field_energy(u, self.bc, |x, y| (x * x + y * y).sqrt().powf(p) / p)
    }

    fn energy_gradient(&self, u: &ImageGrid<T>) -> ImageGrid<T> {
        field_flux_gradient(u, self.bc, |x, y| self.flux_exact(x, y))
    }

    fn descent_gradient(&self, u: &ImageGrid<T>) -> ImageGrid<T> {
        if self.params.p >= lit(2.0) {
            self.energy_gradient(u)
        } else {
            field_flux_gradient(u, self.bc, |x, y| self.flux_floored(x, y))
        }
    }
}

/// Huber-regularized TV energy with flux `psi_eps(grad u) + eps grad u`.
#[derive(Debug, Clone, Copy)]
pub struct TvEpsEnergy<T: Scalar> {
    pub params: TvEpsParams<T>,
    pub bc: BoundaryCondition,
}

impl<T: Scalar> EnergyModel<T> for TvEpsEnergy<T> {
    fn descriptor(&self) -> FlowModel<T> {
        FlowModel::TvEps(self.params)
    }

    fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    fn energy(&self, u: &ImageGrid<T>) -> T {
        let half = lit::<T>(0.5);
        let eps = self.params.eps;
        field_energy(u, self.bc, |x, y| {
            let n2 = x * x + y * y;
            j_eps(n2.sqrt(), eps) + half * eps * n2
        })
    }

    fn energy_gradient(&self, u: &ImageGrid<T>) -> ImageGrid<T> {
        let eps = self.params.eps;
        field_flux_gradient(u, self.bc, |x, y| {
            let (px, py) = psi_eps((x, y), eps);
            (px + eps * x, py + eps * y)
        })
    }
}

/// Truncated Perona-Malik energy `sum j_alpha(|grad u|)` plus optional
/// viscosity `eps_visc/2 |grad u|^2`.
#[derive(Debug, Clone, Copy)]
pub struct PeronaMalikEnergy<T: Scalar> {
    pub params: PeronaMalikParams<T>,
    pub bc: BoundaryCondition,
}

impl<T: Scalar> EnergyModel<T> for PeronaMalikEnergy<T> {
    fn descriptor(&self) -> FlowModel<T> {
        FlowModel::PeronaMalik(self.params)
    }

    fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    fn energy(&self, u: &ImageGrid<T>) -> T {
        let alpha = self.params.alpha;
        let visc = self.params.eps_visc;
        let half = lit::<T>(0.5);
        field_energy(u, self.bc, |x, y| {
            let n2 = x * x + y * y;
            pm_j_alpha(n2.sqrt(), alpha) + half * visc * n2
        })
    }

    fn energy_gradient(&self, u: &ImageGrid<T>) -> ImageGrid<T> {
        let alpha = self.params.alpha;
        let visc = self.params.eps_visc;
        field_flux_gradient(u, self.bc, |x, y| {
            let g = pm_g_trunc(x * x + y * y, alpha);
            (g * x + visc * x, g * y + visc * y)
        })
    }
}

/// Energy of the penalized gradient-bound projection,
/// `sum penalty_density(|grad v|)` under Dirichlet boundaries.
#[derive(Debug, Clone, Copy)]
pub struct GradientBoundPenaltyEnergy<T: Scalar> {
    pub alpha: T,
    pub eps_pen: T,
}

impl<T: Scalar> EnergyModel<T> for GradientBoundPenaltyEnergy<T> {
    fn descriptor(&self) -> FlowModel<T> {
        FlowModel::PeronaMalik(PeronaMalikParams {
            alpha: self.alpha,
            eps_pen: self.eps_pen,
            eps_visc: T::zero(),
        })
    }

    fn bc(&self) -> BoundaryCondition {
        BoundaryCondition::Dirichlet
    }

    fn energy(&self, u: &ImageGrid<T>) -> T {
        let (alpha, eps_pen) = (self.alpha, self.eps_pen);
        field_energy(u, BoundaryCondition::Dirichlet, |x, y| {
            penalty_density((x * x + y * y).sqrt(), alpha, eps_pen)
        })
    }

    fn energy_gradient(&self, u: &ImageGrid<T>) -> ImageGrid<T> {
        let (alpha, eps_pen) = (self.alpha, self.eps_pen);
        field_flux_gradient(u, BoundaryCondition::Dirichlet, |x, y| {
            beta_eps_penalty((x, y), alpha, eps_pen)
        })
    }
}

/// Outcome of the penalized projection onto the gradient-bounded set.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionReport<T: Scalar> {
    pub step: StepReport<T>,
    /// Largest gradient magnitude of the projected image.
    pub max_gradient: T,
    /// Constraint overshoot expressed as `c` in `max|grad| <= alpha + c*eps_pen`.
    pub overshoot: T,
}

/// Projects `f` onto the gradient-bounded set `{ max|grad v| <= alpha }`
/// by solving the penalized problem
/// `min 1/2 |v - f|^2 + sum penalty_density(|grad v|)` with Dirichlet
/// boundaries, i.e. `v - div(beta_eps(grad v)) = f`.
pub fn project_k<T: Scalar>(
    f: &ImageGrid<T>,
    alpha: T,
    eps_pen: T,
    cfg: &SolverConfig<T>,
) -> Result<(ImageGrid<T>, ProjectionReport<T>), SolveError> {
    assert!(alpha > T::zero() && eps_pen > T::zero());
    let energy = GradientBoundPenaltyEnergy { alpha, eps_pen };
    let f_d = f.clone().with_bc(BoundaryCondition::Dirichlet);
    let (v, step) = resolvent_step(&energy, &f_d, T::one(), cfg)?;
    let max_gradient = gradient_bc(&v, BoundaryCondition::Dirichlet).max_norm();
    let overshoot = ((max_gradient - alpha).max(T::zero())) / eps_pen;
    Ok((
        v,
        ProjectionReport {
            step,
            max_gradient,
            overshoot,
        },
    ))
}

/// Gradient-constrained Perona-Malik denoising: project the input onto the
/// gradient-bounded set, then run implicit steps of the truncated flow.
///
/// The first report is the projection step; flow steps follow in order.
/// Iterates that leave the (slack-extended) constraint set are reported
/// through `log::warn`, never silently accepted.
pub fn pm_denoise<T: Scalar>(
    u0: &ImageGrid<T>,
    params: PeronaMalikParams<T>,
    h: T,
    n_steps: usize,
    cfg: &SolverConfig<T>,
) -> Result<(ImageGrid<T>, Vec<StepReport<T>>), SolveError> {
    if u0.bc != BoundaryCondition::Dirichlet {
        return Err(SolveError::UnsupportedBoundary {
            op: "pm_denoise",
            required: BoundaryCondition::Dirichlet,
            got: u0.bc,
        });
    }
    let (mut u, proj) = project_k(u0, params.alpha, params.eps_pen, cfg)?;
    let mut reports = vec![proj.step];
    let energy = PeronaMalikEnergy {
        params,
        bc: BoundaryCondition::Dirichlet,
    };
    let bound = params.alpha * lit::<T>(1.05);
    for step in 1..=n_steps {
        let (next, mut report) = resolvent_step(&energy, &u, h, cfg).map_err(|e| e.at_step(step))?;
        report.step_index = step;
        u = next;
        let max_grad = gradient_bc(&u, BoundaryCondition::Dirichlet).max_norm();
        if max_grad > bound {
            log::warn!(
                "pm_denoise step {step}: max gradient {max_grad} exceeds 1.05*alpha = {bound}"
            );
        }
        reports.push(report);
    }
    Ok((u, reports))
}

/// TV restoration with smoothed L1 fidelity:
/// `Phi(u) = tv_eps_energy(u) + lambda sum smooth_abs(u - u0)`.
pub struct L1TvEnergy<'a, T: Scalar> {
    pub tv: TvEpsParams<T>,
    pub fid: L1FidelityParams<T>,
    pub target: &'a ImageGrid<T>,
    pub bc: BoundaryCondition,
}

impl<'a, T: Scalar> EnergyModel<T> for L1TvEnergy<'a, T> {
    fn descriptor(&self) -> FlowModel<T> {
        FlowModel::TvEps(self.tv)
    }

    fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    fn energy(&self, u: &ImageGrid<T>) -> T {
        let half = lit::<T>(0.5);
        let eps = self.tv.eps;
        let tv_part = field_energy(u, self.bc, |x, y| {
            let n2 = x * x + y * y;
            j_eps(n2.sqrt(), eps) + half * eps * n2
        });
        let mut fid_part = T::zero();
        for (&a, &b) in u.values().iter().zip(self.target.values()) {
            fid_part += smooth_abs(a - b, self.fid.sign_smooth);
        }
        tv_part + self.fid.lambda * fid_part
    }

    fn energy_gradient(&self, u: &ImageGrid<T>) -> ImageGrid<T> {
        let tv_energy = TvEpsEnergy {
            params: self.tv,
            bc: self.bc,
        };
        let mut g = tv_energy.energy_gradient(u);
        let lambda = self.fid.lambda;
        let delta = self.fid.sign_smooth;
        for (gv, (&uv, &tv)) in g
            .values_mut()
            .iter_mut()
            .zip(u.values().iter().zip(self.target.values()))
        {
            *gv += lambda * smooth_sign(uv - tv, delta);
        }
        g
    }
}

/// Runs the implicit evolution of the smoothed L1-fidelity TV energy
/// toward its stationary point, starting from the observation itself.
///
/// Stops early once the update norm drops below `prox_tol`; if `n_steps`
/// is exhausted first the error carries the last iterate.
pub fn l1_tv_restore<T: Scalar>(
    u0: &ImageGrid<T>,
    tv: TvEpsParams<T>,
    fid: L1FidelityParams<T>,
    n_steps: usize,
    h: T,
    cfg: &SolverConfig<T>,
) -> Result<(ImageGrid<T>, Vec<StepReport<T>>), RestoreError<T>> {
    let energy = L1TvEnergy {
        tv,
        fid,
        target: u0,
        bc: u0.bc,
    };
    let mut u = u0.clone();
    let mut reports = Vec::new();
    let mut update = T::infinity();
    for step in 0..n_steps {
        let (next, mut report) =
            resolvent_step(&energy, &u, h, cfg).map_err(|e| SolveError::at_step(e, step))?;
        report.step_index = step;
        update = next.sub(&u).norm_l2();
        u = next;
        reports.push(report);
        if update <= cfg.prox_tol {
            return Ok((u, reports));
        }
    }
    Err(RestoreError::NotConverged {
        last: u,
        reports,
        update_norm: update,
    })
}
