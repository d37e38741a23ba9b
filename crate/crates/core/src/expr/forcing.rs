//! Forcing terms and boundary data synthesized from an exact solution.

use std::collections::BTreeMap;

use super::{add, div, mul, sub, Expr, Var};
use crate::model::CoefficientSet;
use crate::quad::FaceId;

/// Exact fields of a manufactured solution, as functions of (x, y, z, t).
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub u: Vec<Expr>,
    pub p: Expr,
    pub theta: Expr,
    pub psi: Expr,
}

impl ExactSolution {
    pub fn dim(&self) -> usize {
        self.u.len()
    }

    fn all(&self) -> impl Iterator<Item = &Expr> {
        self.u.iter().chain([&self.p, &self.theta, &self.psi])
    }

    /// Symbolic ∇·u.
    pub fn divergence(&self) -> Expr {
        self.u
            .iter()
            .enumerate()
            .fold(Expr::zero(), |acc, (axis, ui)| add(acc, ui.diff(Var::space(axis))))
    }
}

/// Everything an exact solution induces on the problem data.
#[derive(Debug, Clone, PartialEq)]
pub struct MmsForcing {
    /// Darcy right-hand side divided by γ.
    pub f: Vec<Expr>,
    pub h1: Expr,
    pub h2: Expr,
    pub theta_d: Expr,
    pub psi_d: Expr,
    /// ∂_n ϑ on each face.
    pub theta_flux: BTreeMap<FaceId, Expr>,
    /// ∂_n Ψ on each face.
    pub psi_flux: BTreeMap<FaceId, Expr>,
    /// u·n on each face.
    pub normal_velocity: BTreeMap<FaceId, Expr>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ForcingError {
    #[error("exact solution must not reference the state variables T or C")]
    StateInExact,
    #[error("exact solution is {0}D but the coefficient set has {1} force components")]
    DimensionMismatch(usize, usize),
    #[error("γ must be positive, got {0}")]
    BadGamma(f64),
}

/// Freezes a state-dependent coefficient along the exact solution.
fn along(coef: &Expr, exact: &ExactSolution) -> Expr {
    coef.substitute(Var::Temp, &exact.theta)
        .substitute(Var::Conc, &exact.psi)
}

/// ∇·(λ∇w) in `dim` dimensions.
fn div_flux(lambda: &Expr, w: &Expr, dim: usize) -> Expr {
    (0..dim).fold(Expr::zero(), |acc, axis| {
        let v = Var::space(axis);
        add(acc, mul(lambda.clone(), w.diff(v)).diff(v))
    })
}

fn advect(u: &[Expr], w: &Expr) -> Expr {
    u.iter()
        .enumerate()
        .fold(Expr::zero(), |acc, (axis, ui)| add(acc, mul(ui.clone(), w.diff(Var::space(axis)))))
}

/// Derives the sources, Dirichlet traces, and face fluxes that make `exact`
/// solve the coupled system with coefficients `coeffs`.
///
/// The Darcy forcing replaces `coeffs.f`: γ·f = ∂_t u + α u + ∇p with α
/// evaluated along the exact (ϑ, Ψ). The cross-diffusion placement follows
/// the heat and concentration steps: λ₁₂ multiplies ∇Ψ in the heat equation
/// and λ₂₁ multiplies ∇ϑ in the concentration equation.
pub fn mms_forcing(exact: &ExactSolution, coeffs: &CoefficientSet) -> Result<MmsForcing, ForcingError> {
    if exact
        .all()
        .any(|e| e.depends_on(Var::Temp) || e.depends_on(Var::Conc))
    {
        return Err(ForcingError::StateInExact);
    }
    let dim = exact.dim();
    if coeffs.f.len() != dim {
        return Err(ForcingError::DimensionMismatch(dim, coeffs.f.len()));
    }
    if !(coeffs.gamma > 0.0) {
        return Err(ForcingError::BadGamma(coeffs.gamma));
    }

    let alpha = along(&coeffs.alpha, exact);
    let l11 = along(&coeffs.lambda11, exact);
    let l12 = along(&coeffs.lambda12, exact);
    let l21 = along(&coeffs.lambda21, exact);
    let l22 = along(&coeffs.lambda22, exact);

    let f = exact
        .u
        .iter()
        .enumerate()
        .map(|(axis, ui)| {
            let rhs = add(
                add(ui.diff(Var::T), mul(alpha.clone(), ui.clone())),
                exact.p.diff(Var::space(axis)),
            );
            div(rhs, Expr::num(coeffs.gamma))
        })
        .collect();

    let h1 = sub(
        sub(
            add(exact.theta.diff(Var::T), advect(&exact.u, &exact.theta)),
            div_flux(&l11, &exact.theta, dim),
        ),
        div_flux(&l12, &exact.psi, dim),
    );
    let h2 = sub(
        sub(
            add(exact.psi.diff(Var::T), advect(&exact.u, &exact.psi)),
            div_flux(&l22, &exact.psi, dim),
        ),
        div_flux(&l21, &exact.theta, dim),
    );

    let normal = |w: &Expr| -> BTreeMap<FaceId, Expr> {
        FaceId::all(dim)
            .into_iter()
            .map(|face| {
                let d = w.diff(Var::space(face.axis));
                (face, mul(Expr::num(face.normal_sign()), d))
            })
            .collect()
    };
    let normal_velocity = FaceId::all(dim)
        .into_iter()
        .map(|face| (face, mul(Expr::num(face.normal_sign()), exact.u[face.axis].clone())))
        .collect();

    Ok(MmsForcing {
        f,
        h1,
        h2,
        theta_d: exact.theta.clone(),
        psi_d: exact.psi.clone(),
        theta_flux: normal(&exact.theta),
        psi_flux: normal(&exact.psi),
        normal_velocity,
    })
}
