//! Heat operator, Dirichlet-penalized loss and the function-space residual
//! fed to the natural-gradient step.
//!
//! Gradient scale convention: differentiating the mean-square loss gives
//! `2α(u_target − û)/N` pointwise. The residual here is `α(u_target − û)`;
//! the `1/N`, `λ_D/N_b` factors live in the least-squares weights instead, so
//! `α = 1` is the full projection onto the tangent space.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::ansatz::{Ansatz, ParamVector};
use crate::linalg::Vector;
use crate::scalar::{Point, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, PdeError>;

/// `L u = ν Δu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatOperator<T> {
    nu: T,
}

impl<T: Real> HeatOperator<T> {
    pub fn new(nu: T) -> Result<Self> {
        if !(nu > T::zero() && nu.is_finite()) {
            return Err(PdeError::InvalidParameter(format!("diffusivity must be > 0, got {nu}")));
        }
        Ok(Self { nu })
    }

    pub fn nu(&self) -> T {
        self.nu
    }
}

/// `ν Δû_θ` at each point.
pub fn apply_operator<T: Real, A: Ansatz<T> + ?Sized>(
    op: &HeatOperator<T>,
    ansatz: &A,
    theta: &ParamVector<T>,
    points: &[Point<T>],
) -> Vec<T> {
    let mut lap = ansatz.laplacian(theta, points);
    lap.iter_mut().for_each(|v| *v *= op.nu);
    lap
}

pub type BoundaryFn<T> = Arc<dyn Fn(&Point<T>) -> T + Send + Sync>;

/// Prescribed boundary values and the penalty weight `λ_D`.
#[derive(Clone)]
pub struct DirichletBC<T> {
    boundary_value: BoundaryFn<T>,
    lambda_d: T,
}

impl<T: Real> DirichletBC<T> {
    pub fn new(boundary_value: BoundaryFn<T>, lambda_d: T) -> Result<Self> {
        if !(lambda_d >= T::zero() && lambda_d.is_finite()) {
            return Err(PdeError::InvalidParameter(format!("lambda_d must be finite and >= 0, got {lambda_d}")));
        }
        Ok(Self { boundary_value, lambda_d })
    }

    /// `u = 0` on the boundary.
    pub fn homogeneous(lambda_d: T) -> Result<Self> {
        Self::new(Arc::new(|_| T::zero()), lambda_d)
    }

    pub fn lambda_d(&self) -> T {
        self.lambda_d
    }

    pub fn value(&self, p: &Point<T>) -> T {
        (self.boundary_value)(p)
    }

    pub fn values(&self, points: &[Point<T>]) -> Vec<T> {
        points.iter().map(|p| self.value(p)).collect()
    }
}

impl<T: Real> fmt::Debug for DirichletBC<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DirichletBC").field("lambda_d", &self.lambda_d).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport<T> {
    /// `(1/N) Σ (û − u_target)²` over interior samples.
    pub interior_term: T,
    /// `(1/N_b) Σ (û − u_D)²` over boundary samples, before weighting.
    pub boundary_term: T,
    /// `interior_term + λ_D · boundary_term`.
    pub total: T,
}

impl<T: Real> LossReport<T> {
    pub fn zero() -> Self {
        Self { interior_term: T::zero(), boundary_term: T::zero(), total: T::zero() }
    }
}

fn mean_square<T: Real>(a: &[T], b: impl Iterator<Item = T>) -> T {
    if a.is_empty() {
        return T::zero();
    }
    let sum = a.iter().zip(b).fold(T::zero(), |acc, (&x, y)| acc + (x - y) * (x - y));
    sum / T::from_count(a.len())
}

pub fn loss<T: Real>(
    u_hat_interior: &[T],
    u_target_interior: &[T],
    u_hat_boundary: &[T],
    bc: &DirichletBC<T>,
    boundary_points: &[Point<T>],
) -> Result<LossReport<T>> {
    if u_hat_interior.len() != u_target_interior.len() {
        return Err(PdeError::LengthMismatch(format!(
            "{} interior values vs {} targets",
            u_hat_interior.len(),
            u_target_interior.len()
        )));
    }
    if u_hat_boundary.len() != boundary_points.len() {
        return Err(PdeError::LengthMismatch(format!(
            "{} boundary values vs {} boundary points",
            u_hat_boundary.len(),
            boundary_points.len()
        )));
    }
    let interior_term = mean_square(u_hat_interior, u_target_interior.iter().copied());
    let boundary_term = mean_square(u_hat_boundary, boundary_points.iter().map(|p| bc.value(p)));
    Ok(LossReport { interior_term, boundary_term, total: interior_term + bc.lambda_d * boundary_term })
}

/// `Δu = −α ∂L/∂û` up to the measure factors (see module docs).
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualField<T> {
    pub interior_delta_u: Vector<T>,
    pub boundary_delta_u: Vector<T>,
    pub alpha: T,
}

impl<T: Real> ResidualField<T> {
    /// Interior entries followed by boundary entries.
    pub fn stacked(&self) -> Vec<T> {
        let mut out = self.interior_delta_u.to_vec();
        out.extend_from_slice(&self.boundary_delta_u);
        out
    }
}

pub fn functional_gradient<T: Real>(
    u_hat_interior: &[T],
    u_target_interior: &[T],
    u_hat_boundary: &[T],
    bc: &DirichletBC<T>,
    boundary_points: &[Point<T>],
    alpha: T,
) -> Result<ResidualField<T>> {
    if !(alpha > T::zero()) {
        return Err(PdeError::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
    }
    if u_hat_interior.len() != u_target_interior.len() || u_hat_boundary.len() != boundary_points.len() {
        return Err(PdeError::LengthMismatch("residual inputs".into()));
    }
    let interior = u_hat_interior.iter().zip(u_target_interior).map(|(&u, &t)| alpha * (t - u)).collect();
    let boundary = u_hat_boundary
        .iter()
        .zip(boundary_points)
        .map(|(&u, p)| alpha * (bc.value(p) - u))
        .collect();
    let field = |v: Vec<T>| Vector::new(v).map_err(|e| PdeError::InvalidParameter(format!("non-finite residual: {e}")));
    Ok(ResidualField { interior_delta_u: field(interior)?, boundary_delta_u: field(boundary)?, alpha })
}
