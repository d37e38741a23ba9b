//! Problem definition: box domain, coefficients, boundary partition and data,
//! sources, and initial state.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::expr::{add, div, mul, sub, Env, EvalError, Expr, Var};
use crate::quad::{FaceId, QuadError, TensorGrid};
use crate::space::{DofPartition, NodalField, PartitionError};
use crate::stepper::TimePartition;

/// State-dependent coefficients. Every entry may reference x, y, z, t, T, C.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub alpha: Expr,
    pub lambda11: Expr,
    pub lambda12: Expr,
    pub lambda21: Expr,
    pub lambda22: Expr,
    /// Scaling of the buoyancy term γ f(ϑ, Ψ).
    pub gamma: f64,
    /// Components of f(ϑ, Ψ).
    pub f: Vec<Expr>,
}

impl CoefficientSet {
    /// Unit diffusion, no cross terms, α = 1, no buoyancy.
    pub fn identity(dim: usize) -> Self {
        Self {
            alpha: Expr::one(),
            lambda11: Expr::one(),
            lambda12: Expr::zero(),
            lambda21: Expr::zero(),
            lambda22: Expr::one(),
            gamma: 1.0,
            f: vec![Expr::zero(); dim],
        }
    }

    fn lambdas(&self) -> [(&'static str, &Expr); 4] {
        [
            ("lambda11", &self.lambda11),
            ("lambda12", &self.lambda12),
            ("lambda21", &self.lambda21),
            ("lambda22", &self.lambda22),
        ]
    }
}

/// Face data with an optional per-face override.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceData {
    pub default: Expr,
    pub faces: BTreeMap<FaceId, Expr>,
}

impl FaceData {
    pub fn uniform(e: Expr) -> Self {
        Self {
            default: e,
            faces: BTreeMap::new(),
        }
    }

    pub fn zero() -> Self {
        Self::uniform(Expr::zero())
    }

    pub fn on(&self, face: FaceId) -> &Expr {
        self.faces.get(&face).unwrap_or(&self.default)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    pub dirichlet: Vec<FaceId>,
    pub neumann: Vec<FaceId>,
    pub theta_d: Expr,
    pub psi_d: Expr,
    /// ϑ_♯ = ∂_n ϑ on the Neumann faces.
    pub theta_flux: FaceData,
    /// Ψ_♯ = ∂_n Ψ on the Neumann faces.
    pub psi_flux: FaceData,
    /// Prescribed u·n; zero is the sliding condition.
    pub normal_velocity: FaceData,
    /// Prescribed pressure on ∂Ω. When set, the divergence constraint is
    /// tested only against interior pressure nodes, u·n is left free and
    /// `normal_velocity` is ignored.
    pub pressure: Option<Expr>,
}

impl BoundarySpec {
    /// Homogeneous Dirichlet data on every face.
    pub fn homogeneous_dirichlet(dim: usize) -> Self {
        Self {
            dirichlet: FaceId::all(dim),
            neumann: Vec::new(),
            theta_d: Expr::zero(),
            psi_d: Expr::zero(),
            theta_flux: FaceData::zero(),
            psi_flux: FaceData::zero(),
            normal_velocity: FaceData::zero(),
            pressure: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub dim: usize,
    pub degree: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainSpec {
    pub fn grid(&self) -> Result<TensorGrid, QuadError> {
        TensorGrid::new(self.dim, self.degree, &self.lower, &self.upper)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub domain: DomainSpec,
    pub coefficients: CoefficientSet,
    pub boundary: BoundarySpec,
    pub h1: Expr,
    pub h2: Expr,
    pub u0: Vec<Expr>,
    pub theta0: Expr,
    pub psi0: Expr,
    pub partition: TimePartition,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("{what} has {got} components, expected {want}")]
    Components { what: &'static str, got: usize, want: usize },
    #[error("`{what}` references `{var}`, which is not allowed there")]
    ForbiddenVariable { what: String, var: &'static str },
    #[error("γ must be positive, got {0}")]
    BadGamma(f64),
    #[error("evaluating {what}: {source}")]
    Eval { what: String, source: EvalError },
}

impl ProblemSpec {
    /// Identity coefficients, zero data, homogeneous Dirichlet conditions.
    pub fn homogeneous(domain: DomainSpec, partition: TimePartition) -> Self {
        let dim = domain.dim;
        Self {
            coefficients: CoefficientSet::identity(dim),
            boundary: BoundarySpec::homogeneous_dirichlet(dim),
            h1: Expr::zero(),
            h2: Expr::zero(),
            u0: vec![Expr::zero(); dim],
            theta0: Expr::zero(),
            psi0: Expr::zero(),
            domain,
            partition,
        }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn final_time(&self) -> f64 {
        self.partition.final_time()
    }

    /// Structural checks: shapes, variable usage, γ > 0, face partition.
    pub fn check(&self) -> Result<(), ModelError> {
        let dim = self.dim();
        let grid = self.domain.grid()?;
        DofPartition::new(&grid, &self.boundary.dirichlet, &self.boundary.neumann)?;
        for (what, n) in [("f", self.coefficients.f.len()), ("u0", self.u0.len())] {
            if n != dim {
                return Err(ModelError::Components { what, got: n, want: dim });
            }
        }
        if !(self.coefficients.gamma > 0.0) {
            return Err(ModelError::BadGamma(self.coefficients.gamma));
        }
        let no_state: Vec<(String, &Expr)> = [
            ("theta_d", &self.boundary.theta_d),
            ("psi_d", &self.boundary.psi_d),
            ("h1", &self.h1),
            ("h2", &self.h2),
            ("theta0", &self.theta0),
            ("psi0", &self.psi0),
        ]
        .into_iter()
        .map(|(n, e)| (n.to_string(), e))
        .chain(self.u0.iter().enumerate().map(|(i, e)| (format!("u0[{i}]"), e)))
        .collect();
        let mut checks: Vec<(String, &Expr, bool)> =
            no_state.into_iter().map(|(n, e)| (n, e, false)).collect();
        let c = &self.coefficients;
        checks.push(("alpha".into(), &c.alpha, true));
        for (n, e) in c.lambdas() {
            checks.push((n.into(), e, true));
        }
        for (i, e) in c.f.iter().enumerate() {
            checks.push((format!("f[{i}]"), e, true));
        }
        for e in [&self.boundary.theta_flux, &self.boundary.psi_flux, &self.boundary.normal_velocity] {
            checks.push(("boundary flux".into(), &e.default, false));
            for v in e.faces.values() {
                checks.push(("boundary flux".into(), v, false));
            }
        }
        if let Some(pd) = &self.boundary.pressure {
            checks.push(("boundary pressure".into(), pd, false));
        }
        for (what, e, state_ok) in checks {
            for v in e.free_vars() {
                let spatial_bad = matches!(v, Var::Z) && dim == 2;
                let state_bad = !state_ok && matches!(v, Var::Temp | Var::Conc);
                if spatial_bad || state_bad {
                    return Err(ModelError::ForbiddenVariable { what, var: v.name() });
                }
            }
        }
        Ok(())
    }
}

/// Diagnostics of one time step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepDiagnostics {
    pub picard_iterations: usize,
    pub picard_residual: f64,
    pub picard_converged: bool,
    pub gmres_iters_heat: usize,
    pub gmres_iters_conc: usize,
    pub cg_iters_darcy: usize,
}

/// The discrete state (u, p, ϑ, Ψ) at one knot of the time partition.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSnapshot {
    pub step: usize,
    pub time: f64,
    pub u: NodalField,
    pub p: NodalField,
    pub theta: NodalField,
    pub psi: NodalField,
    pub diagnostics: StepDiagnostics,
}

impl StateSnapshot {
    pub fn zero(grid: &Arc<TensorGrid>, time: f64) -> Self {
        Self {
            step: 0,
            time,
            u: NodalField::zeros(grid.clone(), grid.dim()),
            p: NodalField::zeros(grid.clone(), 1),
            theta: NodalField::zeros(grid.clone(), 1),
            psi: NodalField::zeros(grid.clone(), 1),
            diagnostics: StepDiagnostics::default(),
        }
    }
}

/// Ranges sampled by [`validate_coefficients`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBox {
    pub space: Vec<(f64, f64)>,
    pub time: (f64, f64),
    pub temp: (f64, f64),
    pub conc: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientBounds {
    pub name: &'static str,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub samples: usize,
    /// Estimate of λ₁ (smallest sampled diffusion coefficient).
    pub lambda_min: f64,
    /// Estimate of λ₂ (largest sampled diffusion coefficient).
    pub lambda_max: f64,
    /// Smallest sampled eigenvalue of (Λ + Λᵗ)/2, the coercivity constant β.
    pub beta: f64,
    pub per_coefficient: Vec<CoefficientBounds>,
    pub alpha_min: f64,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty()
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

/// Smallest eigenvalue of the symmetric part of [[a, b], [c, d]].
pub fn min_sym_eigenvalue(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let off = 0.5 * (b + c);
    let mean = 0.5 * (a + d);
    let half_gap = 0.5 * (a - d);
    mean - (half_gap * half_gap + off * off).sqrt()
}

/// Samples the diffusion matrix Λ and α over `ranges` on a Halton sequence.
///
/// The sample set for `n` is a prefix of the one for any larger `n`, so the
/// reported bounds only tighten as `n_samples` grows. Cross coefficients that
/// are identically zero are treated as absent in the λ bounds.
pub fn validate_coefficients(
    c: &CoefficientSet,
    ranges: &SampleBox,
    n_samples: usize,
) -> Result<ValidationReport, ModelError> {
    let n_samples = n_samples.max(1);
    const PRIMES: [u64; 6] = [2, 3, 5, 7, 11, 13];
    let lambdas = c.lambdas();
    let mut per: Vec<CoefficientBounds> = lambdas
        .iter()
        .map(|(name, _)| CoefficientBounds {
            name,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        })
        .collect();
    let mut beta = f64::INFINITY;
    let mut alpha_min = f64::INFINITY;
    let dims = ranges.space.len();
    let lerp = |(lo, hi): (f64, f64), s: f64| lo + (hi - lo) * s;

    for i in 1..=n_samples as u64 {
        let mut env = Env::new();
        for (axis, &r) in ranges.space.iter().enumerate() {
            env.set(Var::space(axis), lerp(r, radical_inverse(i, PRIMES[axis])));
        }
        env.set(Var::T, lerp(ranges.time, radical_inverse(i, PRIMES[dims])));
        env.set(Var::Temp, lerp(ranges.temp, radical_inverse(i, PRIMES[dims + 1])));
        env.set(Var::Conc, lerp(ranges.conc, radical_inverse(i, PRIMES[dims + 2])));
        let mut vals = [0.0; 4];
        for (k, (name, e)) in lambdas.iter().enumerate() {
            vals[k] = e.eval(&env).map_err(|source| ModelError::Eval {
                what: name.to_string(),
                source,
            })?;
            per[k].min = per[k].min.min(vals[k]);
            per[k].max = per[k].max.max(vals[k]);
        }
        beta = beta.min(min_sym_eigenvalue(vals[0], vals[1], vals[2], vals[3]));
        let a = c.alpha.eval(&env).map_err(|source| ModelError::Eval {
            what: "alpha".into(),
            source,
        })?;
        alpha_min = alpha_min.min(a);
    }

    let present: Vec<&CoefficientBounds> = per
        .iter()
        .zip(lambdas.iter())
        .filter(|(_, (_, e))| !e.is_zero())
        .map(|(b, _)| b)
        .collect();
    let lambda_min = present.iter().map(|b| b.min).fold(f64::INFINITY, f64::min);
    let lambda_max = present.iter().map(|b| b.max).fold(f64::NEG_INFINITY, f64::max);

    let mut warnings = Vec::new();
    for b in &present {
        if b.min <= 0.0 {
            warnings.push(format!(
                "{} is not bounded away from zero (sampled minimum {:.4e})",
                b.name, b.min
            ));
        }
    }
    if beta <= 0.0 {
        warnings.push(format!("diffusion matrix is not coercive (sampled beta {beta:.4e})"));
    }
    if alpha_min < 0.0 {
        warnings.push(format!("alpha takes negative values (sampled minimum {alpha_min:.4e})"));
    }

    Ok(ValidationReport {
        samples: n_samples,
        lambda_min,
        lambda_max,
        beta,
        per_coefficient: per,
        alpha_min,
        warnings,
    })
}

/// Linear Boussinesq buoyancy F(T, C) = ρ₀(1 − β_T T + β_C C) g and a bound γ
/// on |∇F|.
#[derive(Debug, Clone, PartialEq)]
pub struct BuoyancyForce {
    pub force: Vec<Expr>,
    pub gamma: f64,
}

impl BuoyancyForce {
    /// f = F/γ, or F itself when γ vanishes.
    pub fn normalized(&self) -> Vec<Expr> {
        if self.gamma > 0.0 {
            self.force
                .iter()
                .map(|e| div(e.clone(), Expr::num(self.gamma)))
                .collect()
        } else {
            self.force.clone()
        }
    }
}

pub fn boussinesq_f(beta_t: f64, beta_c: f64, rho0: f64, g: &[f64]) -> BuoyancyForce {
    let density = add(
        sub(Expr::one(), mul(Expr::num(beta_t), Expr::var(Var::Temp))),
        mul(Expr::num(beta_c), Expr::var(Var::Conc)),
    );
    let force = g
        .iter()
        .map(|&gk| mul(Expr::num(rho0 * gk), density.clone()))
        .collect();
    let g_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    BuoyancyForce {
        force,
        gamma: rho0 * g_norm * beta_t.abs().max(beta_c.abs()) * std::f64::consts::SQRT_2,
    }
}

/// Rewrites a function of physical (T, C) in terms of the shifted state
/// ϑ = T − T_b, Ψ = C − C_b.
pub fn shift_state(e: &Expr, t_b: f64, c_b: f64) -> Expr {
    e.substitute(Var::Temp, &add(Expr::var(Var::Temp), Expr::num(t_b)))
        .substitute(Var::Conc, &add(Expr::var(Var::Conc), Expr::num(c_b)))
}

/// Subtracts a constant reference value from boundary or initial data.
pub fn shift_data(e: &Expr, reference: f64) -> Expr {
    sub(e.clone(), Expr::num(reference))
}
