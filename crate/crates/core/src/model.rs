//! Model descriptors and their parameter sets.
//!
//! Every flow in the toolkit is identified by a [`FlowModel`] value; the
//! parameter structs validate their admissible ranges on construction and
//! carry the documented defaults used by the command-line tool.

use crate::error::ParamError;
use crate::scalar::{lit, Scalar};

/// p-Laplacian flow parameters; energy density `|r|^p / p` with `p > 1`.
///
/// This density satisfies two-sided power growth bounds of order `p` with
/// constants `1/p` (not runtime-checked).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PLaplacianParams<T: Scalar> {
    pub p: T,
}

impl<T: Scalar> PLaplacianParams<T> {
    pub fn new(p: T) -> Result<Self, ParamError> {
        if !(p > T::one()) || !p.is_finite() {
            return Err(ParamError::new("p", "> 1", p));
        }
        Ok(Self { p })
    }
}

impl<T: Scalar> Default for PLaplacianParams<T> {
    fn default() -> Self {
        Self { p: lit(1.3) }
    }
}

/// Regularized total-variation parameters: `eps` is the Huber knee in the
/// density `j_eps(|grad u|)` and the weight of the extra quadratic term
/// `eps/2 |grad u|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvEpsParams<T: Scalar> {
    pub eps: T,
}

impl<T: Scalar> TvEpsParams<T> {
    pub fn new(eps: T) -> Result<Self, ParamError> {
        if !(eps > T::zero()) || !eps.is_finite() {
            return Err(ParamError::new("eps", "> 0", eps));
        }
        Ok(Self { eps })
    }
}

impl<T: Scalar> Default for TvEpsParams<T> {
    fn default() -> Self {
        Self { eps: lit(0.05) }
    }
}

/// Gradient-constrained Perona-Malik parameters.
///
/// `alpha` is both the diffusivity scale in `g(s) = alpha^2/(alpha^2 + s)`
/// and the gradient bound of the constraint set; `eps_pen` is the
/// penalization width of the projection onto that set; `eps_visc >= 0`
/// optionally adds `eps_visc/2 |grad u|^2` of extra viscosity (default 0,
/// the truncated flux is already monotone discretely).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeronaMalikParams<T: Scalar> {
    pub alpha: T,
    pub eps_pen: T,
    pub eps_visc: T,
}

impl<T: Scalar> PeronaMalikParams<T> {
    pub fn new(alpha: T, eps_pen: T, eps_visc: T) -> Result<Self, ParamError> {
        if !(alpha > T::zero()) || !alpha.is_finite() {
            return Err(ParamError::new("alpha", "> 0", alpha));
        }
        if !(eps_pen > T::zero()) || !eps_pen.is_finite() {
            return Err(ParamError::new("eps_pen", "> 0", eps_pen));
        }
        if !(eps_visc >= T::zero()) || !eps_visc.is_finite() {
            return Err(ParamError::new("eps_visc", ">= 0", eps_visc));
        }
        Ok(Self {
            alpha,
            eps_pen,
            eps_visc,
        })
    }
}

impl<T: Scalar> Default for PeronaMalikParams<T> {
    fn default() -> Self {
        Self {
            alpha: lit(60.0),
            eps_pen: lit(1e-3),
            eps_visc: T::zero(),
        }
    }
}

/// L1-fidelity restoration parameters: `lambda` weighs the fidelity term
/// and `sign_smooth` is the width of the C^1 smoothing of `|.|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1FidelityParams<T: Scalar> {
    pub lambda: T,
    pub sign_smooth: T,
}

impl<T: Scalar> L1FidelityParams<T> {
    pub fn new(lambda: T, sign_smooth: T) -> Result<Self, ParamError> {
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(ParamError::new("lambda", "> 0", lambda));
        }
        if !(sign_smooth > T::zero()) || !sign_smooth.is_finite() {
            return Err(ParamError::new("sign_smooth", "> 0", sign_smooth));
        }
        Ok(Self {
            lambda,
            sign_smooth,
        })
    }
}

impl<T: Scalar> Default for L1FidelityParams<T> {
    fn default() -> Self {
        Self {
            lambda: T::one(),
            sign_smooth: lit(0.05),
        }
    }
}

/// Porous-media nonlinearity `beta(r) = |r|^a r` with exponent `0 < a < 1`.
///
/// `a = 0` is admitted as the explicit linear special case used by the
/// oracle reductions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PorousParams<T: Scalar> {
    pub a: T,
}

impl<T: Scalar> PorousParams<T> {
    pub fn new(a: T) -> Result<Self, ParamError> {
        if !(a >= T::zero() && a < T::one()) || !a.is_finite() {
            return Err(ParamError::new("a", "in [0, 1)", a));
        }
        Ok(Self { a })
    }
}

impl<T: Scalar> Default for PorousParams<T> {
    fn default() -> Self {
        Self { a: lit(0.5) }
    }
}

/// Tagged union naming each diffusion model together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowModel<T: Scalar> {
    Heat,
    PLaplacian(PLaplacianParams<T>),
    TvEps(TvEpsParams<T>),
    PeronaMalik(PeronaMalikParams<T>),
    PorousMedia(PorousParams<T>),
}

impl<T: Scalar> FlowModel<T> {
    pub fn name(&self) -> &'static str {
        match self {
            FlowModel::Heat => "heat",
            FlowModel::PLaplacian(_) => "plap",
            FlowModel::TvEps(_) => "tveps",
            FlowModel::PeronaMalik(_) => "pm",
            FlowModel::PorousMedia(_) => "porous",
        }
    }
}
