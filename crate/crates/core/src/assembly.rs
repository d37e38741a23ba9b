//! Discrete operators for the three sub-steps of one backward-Euler step.
//!
//! All forms are collocated at the LGL nodes, so the mass matrix is the
//! diagonal of quadrature weights W. With D_k the differentiation matrix along
//! axis k:
//!
//! * Darcy: the velocity is eliminated node by node,
//!   u = (u_prev/τ + γ f − ∇p) / (1/τ + α), and the pressure solves the
//!   semidefinite Schur system Σ_k D_kᵀ W (1/τ + α)⁻¹ D_k p = rhs on
//!   zero-mean pressures.
//! * Heat and concentration: W/τ + W (u·∇) + Σ_k D_kᵀ W λ D_k acting on the
//!   nodes off the Dirichlet boundary, solved with GMRES.

use std::sync::Arc;

use crate::expr::{Env, EvalError, Expr, Var};
use crate::krylov::{
    cg_semidefinite, gmres, CgConfig, DiagonalInverse, GmresConfig, LinearOp, NoProjection, SolveReport,
    ZeroMean,
};
use crate::model::{BoundarySpec, FaceData, ProblemSpec};
use crate::quad::{FaceId, TensorGrid};
use crate::space::{BoundaryValues, Differentiator, DofPartition, NodalField, PartitionError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AssemblyError {
    #[error("evaluating {what}: {source}")]
    Eval { what: String, source: EvalError },
    #[error("{solver} did not converge: {iterations} iterations, relative residual {residual:.3e}")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("Darcy reaction coefficient 1/τ + α = {value} is not positive at node {node}")]
    NonPositiveReaction { node: usize, value: f64 },
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

/// Inner solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InnerSolvers {
    pub gmres: GmresConfig,
    pub cg: CgConfig,
}

/// Grid-level data shared by every solve of a run.
#[derive(Debug, Clone)]
pub struct Discretization {
    grid: Arc<TensorGrid>,
    diff: Differentiator,
    weights: Vec<f64>,
    partition: DofPartition,
    free: Vec<usize>,
    neumann_faces: Vec<(FaceId, Vec<(usize, f64)>)>,
    all_faces: Vec<(FaceId, Vec<(usize, f64)>)>,
    boundary_nodes: Vec<usize>,
    pressure_interior: Vec<usize>,
}

impl Discretization {
    pub fn new(grid: Arc<TensorGrid>, dirichlet: &[FaceId], neumann: &[FaceId]) -> Result<Self, AssemblyError> {
        let partition = DofPartition::new(&grid, dirichlet, neumann)?;
        let face_list = |faces: &[FaceId]| -> Vec<(FaceId, Vec<(usize, f64)>)> {
            faces
                .iter()
                .map(|&f| (f, grid.face_nodes(f).expect("face validated by partition")))
                .collect()
        };
        let neumann_faces = face_list(neumann);
        let all_faces = face_list(&FaceId::all(grid.dim()));
        let faces = FaceId::all(grid.dim());
        let (boundary_nodes, pressure_interior): (Vec<usize>, Vec<usize>) =
            (0..grid.len()).partition(|&k| faces.iter().any(|&f| grid.on_face(k, f)));
        Ok(Self {
            boundary_nodes,
            pressure_interior,
            diff: Differentiator::new(&grid),
            weights: grid.weights(),
            free: partition.free(),
            partition,
            neumann_faces,
            all_faces,
            grid,
        })
    }

    pub fn for_problem(spec: &ProblemSpec) -> Result<Self, AssemblyError> {
        let grid = Arc::new(spec.domain.grid().map_err(PartitionError::from)?);
        Self::new(grid, &spec.boundary.dirichlet, &spec.boundary.neumann)
    }

    pub fn grid(&self) -> &Arc<TensorGrid> {
        &self.grid
    }

    pub fn diff(&self) -> &Differentiator {
        &self.diff
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn partition(&self) -> &DofPartition {
        &self.partition
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    fn n(&self) -> usize {
        self.grid.len()
    }

    /// Evaluates `e` at every node at time `t`, binding T and C to the given
    /// nodal state when provided.
    pub fn eval_nodal(
        &self,
        e: &Expr,
        what: &str,
        t: f64,
        theta: Option<&[f64]>,
        psi: Option<&[f64]>,
    ) -> Result<Vec<f64>, AssemblyError> {
        let dim = self.grid.dim();
        (0..self.n())
            .map(|k| {
                let mut env = Env::at(&self.grid.point(k)[..dim], t);
                if let Some(th) = theta {
                    env.set(Var::Temp, th[k]);
                }
                if let Some(ps) = psi {
                    env.set(Var::Conc, ps[k]);
                }
                e.eval(&env).map_err(|source| AssemblyError::Eval {
                    what: what.to_string(),
                    source,
                })
            })
            .collect()
    }

    /// Dirichlet values i_N^{Γ_D} g(t).
    pub fn dirichlet_values(&self, g: &Expr, what: &str, t: f64) -> Result<BoundaryValues, AssemblyError> {
        let dim = self.grid.dim();
        crate::space::boundary_interpolate(&self.grid, &self.partition, |x| {
            g.eval(&Env::at(&x[..dim], t)).map_err(|source| AssemblyError::Eval {
                what: what.to_string(),
                source,
            })
        })
    }

    /// Σ_ℓ (g_ℓ, ·)^{Γ_ℓ}_N as a nodal load vector over the given faces, with
    /// `scale` multiplying the face data node by node.
    fn face_load(
        &self,
        faces: &[(FaceId, Vec<(usize, f64)>)],
        data: &FaceData,
        what: &str,
        t: f64,
        scale: Option<&[f64]>,
    ) -> Result<Vec<f64>, AssemblyError> {
        let dim = self.grid.dim();
        let mut load = vec![0.0; self.n()];
        for (face, nodes) in faces {
            let e = data.on(*face);
            if e.is_zero() {
                continue;
            }
            for &(k, w) in nodes {
                let v = e
                    .eval(&Env::at(&self.grid.point(k)[..dim], t))
                    .map_err(|source| AssemblyError::Eval {
                        what: format!("{what} on face {face}"),
                        source,
                    })?;
                let s = scale.map_or(1.0, |s| s[k]);
                load[k] += w * s * v;
            }
        }
        Ok(load)
    }

    /// out = Σ_k D_kᵀ W c D_k f, with `c` a nodal coefficient.
    fn stiffness_apply(&self, coef: &[f64], f: &[f64], out: &mut [f64]) {
        let n = self.n();
        let mut d = vec![0.0; n];
        let mut t = vec![0.0; n];
        out.iter_mut().for_each(|v| *v = 0.0);
        for a in 0..self.grid.dim() {
            let m = self.diff.axis(a);
            m.apply(&self.grid, f, &mut d);
            for k in 0..n {
                d[k] *= self.weights[k] * coef[k];
            }
            m.apply_transpose(&self.grid, &d, &mut t);
            for k in 0..n {
                out[k] += t[k];
            }
        }
    }

    /// Diagonal of Σ_k D_kᵀ W c D_k.
    fn stiffness_diagonal(&self, coef: &[f64]) -> Vec<f64> {
        let n = self.n();
        let n1 = self.grid.n1d();
        let mut diag = vec![0.0; n];
        for a in 0..self.grid.dim() {
            let m = self.diff.axis(a);
            let stride = self.grid.stride(a);
            for (j, dj) in diag.iter_mut().enumerate() {
                let ij = self.grid.multi_index(j)[a];
                let line_start = j - ij * stride;
                for i in 0..n1 {
                    let node = line_start + i * stride;
                    let dij = m.entry(i, ij);
                    *dj += dij * dij * self.weights[node] * coef[node];
                }
            }
        }
        diag
    }

    /// Residual of the weak divergence constraint for every pressure test
    /// basis function ℓ_j: (u, ∇ℓ_j)_N − (g_n, ℓ_j)_N^{∂Ω}. With a prescribed
    /// boundary pressure the test functions are the interior ones only and
    /// the boundary term vanishes.
    pub fn divergence_residual(
        &self,
        u: &NodalField,
        boundary: &BoundarySpec,
        t: f64,
    ) -> Result<Vec<f64>, AssemblyError> {
        let n = self.n();
        let mut out = vec![0.0; n];
        let mut wu = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        for a in 0..self.grid.dim() {
            for k in 0..n {
                wu[k] = self.weights[k] * u.component(a)[k];
            }
            self.diff.axis(a).apply_transpose(&self.grid, &wu, &mut tmp);
            for k in 0..n {
                out[k] += tmp[k];
            }
        }
        if boundary.pressure.is_some() {
            return Ok(self.pressure_interior.iter().map(|&k| out[k]).collect());
        }
        let flux = self.face_load(&self.all_faces, &boundary.normal_velocity, "normal velocity", t, None)?;
        for (o, f) in out.iter_mut().zip(flux) {
            *o -= f;
        }
        Ok(out)
    }
}

/// Pressure Schur operator p ↦ Σ_k D_kᵀ W (1/τ + α)⁻¹ D_k p.
pub struct DarcyOperator<'a> {
    disc: &'a Discretization,
    inv_reaction: Vec<f64>,
}

impl<'a> DarcyOperator<'a> {
    pub fn new(disc: &'a Discretization, tau: f64, alpha: &[f64]) -> Result<Self, AssemblyError> {
        if !(tau > 0.0) {
            return Err(AssemblyError::BadTimeStep(tau));
        }
        let inv_reaction = alpha
            .iter()
            .enumerate()
            .map(|(node, a)| {
                let r = 1.0 / tau + a;
                if r > 0.0 {
                    Ok(1.0 / r)
                } else {
                    Err(AssemblyError::NonPositiveReaction { node, value: r })
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { disc, inv_reaction })
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.disc.stiffness_diagonal(&self.inv_reaction)
    }
}

impl LinearOp for DarcyOperator<'_> {
    fn dim(&self) -> usize {
        self.disc.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.disc.stiffness_apply(&self.inv_reaction, x, y);
    }
}

/// `op` restricted to the rows and columns of `nodes`.
struct Restricted<'a> {
    op: &'a dyn LinearOp,
    n: usize,
    nodes: &'a [usize],
}

impl LinearOp for Restricted<'_> {
    fn dim(&self) -> usize {
        self.nodes.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut full = vec![0.0; self.n];
        for (&k, v) in self.nodes.iter().zip(x) {
            full[k] = *v;
        }
        let mut out = vec![0.0; self.n];
        self.op.apply(&full, &mut out);
        for (&k, v) in self.nodes.iter().zip(y.iter_mut()) {
            *v = out[k];
        }
    }
}

/// Nodal state used to freeze the T, C dependence of the coefficients.
#[derive(Debug, Clone, Copy)]
pub struct LaggedState<'a> {
    pub theta: &'a NodalField,
    pub psi: &'a NodalField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DarcySolution {
    pub u: NodalField,
    pub p: NodalField,
    pub report: SolveReport,
}

/// Darcy step: returns (u, p) with p of zero discrete mean.
///
/// α and f are evaluated at the lagged `state`; the weak divergence
/// constraint carries the prescribed normal velocity.
pub fn solve_darcy(
    disc: &Discretization,
    spec: &ProblemSpec,
    u_prev: &NodalField,
    state: LaggedState<'_>,
    tau: f64,
    t: f64,
    solvers: &InnerSolvers,
) -> Result<DarcySolution, AssemblyError> {
    let n = disc.n();
    let dim = disc.grid.dim();
    let coeffs = &spec.coefficients;
    let th = Some(state.theta.values());
    let ps = Some(state.psi.values());
    let alpha = disc.eval_nodal(&coeffs.alpha, "alpha", t, th, ps)?;
    let op = DarcyOperator::new(disc, tau, &alpha)?;

    // g = u_prev/τ + γ f
    let mut g = vec![0.0; dim * n];
    for a in 0..dim {
        let f = disc.eval_nodal(&coeffs.f[a], "f", t, th, ps)?;
        for k in 0..n {
            g[a * n + k] = u_prev.component(a)[k] / tau + coeffs.gamma * f[k];
        }
    }

    let mut rhs = vec![0.0; n];
    let mut scaled = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for a in 0..dim {
        for k in 0..n {
            scaled[k] = disc.weights[k] * op.inv_reaction[k] * g[a * n + k];
        }
        disc.diff.axis(a).apply_transpose(&disc.grid, &scaled, &mut tmp);
        for k in 0..n {
            rhs[k] += tmp[k];
        }
    }
    let (p, report) = match &spec.boundary.pressure {
        None => {
            let flux = disc.face_load(&disc.all_faces, &spec.boundary.normal_velocity, "normal velocity", t, None)?;
            for k in 0..n {
                rhs[k] -= flux[k];
            }
            let precond = DiagonalInverse::new(&op.diagonal());
            let projector = ZeroMean::new(disc.weights.clone());
            cg_semidefinite(&op, &rhs, &precond, &projector, &solvers.cg)
        }
        Some(pd) => {
            let mut p = vec![0.0; n];
            let dim_s = dim;
            for &k in &disc.boundary_nodes {
                p[k] = pd
                    .eval(&Env::at(&disc.grid.point(k)[..dim_s], t))
                    .map_err(|source| AssemblyError::Eval {
                        what: "boundary pressure".into(),
                        source,
                    })?;
            }
            let mut lift = vec![0.0; n];
            op.apply(&p, &mut lift);
            let inner = &disc.pressure_interior;
            let b: Vec<f64> = inner.iter().map(|&k| rhs[k] - lift[k]).collect();
            let restricted = Restricted { op: &op, n, nodes: inner };
            let full_diag = op.diagonal();
            let precond = DiagonalInverse::new(&inner.iter().map(|&k| full_diag[k]).collect::<Vec<_>>());
            let (x, report) = cg_semidefinite(&restricted, &b, &precond, &NoProjection, &solvers.cg);
            for (&k, v) in inner.iter().zip(x) {
                p[k] = v;
            }
            (p, report)
        }
    };
    if !report.converged {
        return Err(AssemblyError::NotConverged {
            solver: "Darcy pressure CG",
            iterations: report.iterations,
            residual: report.relative_residual,
        });
    }

    let mut u = vec![0.0; dim * n];
    let mut dp = vec![0.0; n];
    for a in 0..dim {
        disc.diff.axis(a).apply(&disc.grid, &p, &mut dp);
        for k in 0..n {
            u[a * n + k] = (g[a * n + k] - dp[k]) * op.inv_reaction[k];
        }
    }
    Ok(DarcySolution {
        u: NodalField::from_values(disc.grid.clone(), dim, u),
        p: NodalField::from_values(disc.grid.clone(), 1, p),
        report,
    })
}

/// W/τ + W(u·∇) + Σ_k D_kᵀ W λ D_k restricted to the free (non-Dirichlet)
/// nodes. Vectors passed to `apply` are indexed like
/// [`Discretization::free_dofs`].
pub struct AdvectionDiffusionOperator<'a> {
    disc: &'a Discretization,
    tau: f64,
    velocity: &'a NodalField,
    diffusivity: Vec<f64>,
}

impl<'a> AdvectionDiffusionOperator<'a> {
    pub fn new(
        disc: &'a Discretization,
        tau: f64,
        velocity: &'a NodalField,
        diffusivity: Vec<f64>,
    ) -> Result<Self, AssemblyError> {
        if !(tau > 0.0) {
            return Err(AssemblyError::BadTimeStep(tau));
        }
        Ok(Self {
            disc,
            tau,
            velocity,
            diffusivity,
        })
    }

    /// Applies the operator to a full nodal vector, all rows.
    pub fn apply_full(&self, f: &[f64], out: &mut [f64]) {
        let disc = self.disc;
        let n = disc.n();
        disc.stiffness_apply(&self.diffusivity, f, out);
        let mut d = vec![0.0; n];
        let mut adv = vec![0.0; n];
        for a in 0..disc.grid.dim() {
            disc.diff.axis(a).apply(&disc.grid, f, &mut d);
            let ua = self.velocity.component(a);
            for k in 0..n {
                adv[k] += ua[k] * d[k];
            }
        }
        for k in 0..n {
            out[k] += disc.weights[k] * (f[k] / self.tau + adv[k]);
        }
    }

    /// Reaction plus diffusion diagonal on the free nodes.
    pub fn diagonal(&self) -> Vec<f64> {
        let stiff = self.disc.stiffness_diagonal(&self.diffusivity);
        self.disc
            .free
            .iter()
            .map(|&k| self.disc.weights[k] / self.tau + stiff[k])
            .collect()
    }

    fn embed(&self, x: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.disc.n()];
        for (&k, v) in self.disc.free.iter().zip(x) {
            full[k] = *v;
        }
        full
    }
}

impl LinearOp for AdvectionDiffusionOperator<'_> {
    fn dim(&self) -> usize {
        self.disc.free.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let full = self.embed(x);
        let mut out = vec![0.0; self.disc.n()];
        self.apply_full(&full, &mut out);
        for (yi, &k) in y.iter_mut().zip(&self.disc.free) {
            *yi = out[k];
        }
    }
}

/// Data of one heat or concentration solve, all nodal.
struct TransportProblem<'a> {
    name: &'static str,
    prev: &'a [f64],
    guess: &'a [f64],
    velocity: &'a NodalField,
    own: Vec<f64>,
    cross: Vec<f64>,
    cross_field: &'a [f64],
    source: Vec<f64>,
    neumann_load: Vec<f64>,
    dirichlet: BoundaryValues,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution {
    pub field: NodalField,
    pub report: SolveReport,
}

fn solve_transport(
    disc: &Discretization,
    tau: f64,
    prob: TransportProblem<'_>,
    cfg: &GmresConfig,
) -> Result<TransportSolution, AssemblyError> {
    let n = disc.n();
    let op = AdvectionDiffusionOperator::new(disc, tau, prob.velocity, prob.own)?;

    // full-row right-hand side
    let mut rhs = vec![0.0; n];
    disc.stiffness_apply(&prob.cross, prob.cross_field, &mut rhs);
    for k in 0..n {
        rhs[k] = disc.weights[k] * (prob.prev[k] / tau + prob.source[k]) + prob.neumann_load[k] - rhs[k];
    }
    let mut lift = vec![0.0; n];
    for (&k, &v) in prob.dirichlet.nodes.iter().zip(&prob.dirichlet.values) {
        lift[k] = v;
    }
    let mut a_lift = vec![0.0; n];
    op.apply_full(&lift, &mut a_lift);
    let b: Vec<f64> = disc.free.iter().map(|&k| rhs[k] - a_lift[k]).collect();
    let x0: Vec<f64> = disc.free.iter().map(|&k| prob.guess[k]).collect();

    let precond = DiagonalInverse::new(&op.diagonal());
    let (x, report) = gmres(&op, &b, &precond, Some(&x0), cfg);
    if !report.converged {
        return Err(AssemblyError::NotConverged {
            solver: prob.name,
            iterations: report.iterations,
            residual: report.relative_residual,
        });
    }
    let mut values = lift;
    for (&k, v) in disc.free.iter().zip(x) {
        values[k] = v;
    }
    Ok(TransportSolution {
        field: NodalField::from_values(disc.grid.clone(), 1, values),
        report,
    })
}

/// Heat step for ϑ at time `t`.
///
/// λ₁₁ and λ₁₂ are frozen at `state`; the Dufour term uses `state.psi`.
pub fn solve_heat(
    disc: &Discretization,
    spec: &ProblemSpec,
    theta_prev: &NodalField,
    velocity: &NodalField,
    state: LaggedState<'_>,
    tau: f64,
    t: f64,
    solvers: &InnerSolvers,
) -> Result<TransportSolution, AssemblyError> {
    let c = &spec.coefficients;
    let b = &spec.boundary;
    let th = Some(state.theta.values());
    let ps = Some(state.psi.values());
    let l11 = disc.eval_nodal(&c.lambda11, "lambda11", t, th, ps)?;
    let l12 = disc.eval_nodal(&c.lambda12, "lambda12", t, th, ps)?;
    let mut neumann_load = disc.face_load(&disc.neumann_faces, &b.theta_flux, "theta_flux", t, Some(&l11))?;
    if !c.lambda12.is_zero() {
        let cross = disc.face_load(&disc.neumann_faces, &b.psi_flux, "psi_flux", t, Some(&l12))?;
        neumann_load.iter_mut().zip(cross).for_each(|(a, c)| *a += c);
    }
    let prob = TransportProblem {
        name: "heat GMRES",
        prev: theta_prev.values(),
        guess: state.theta.values(),
        velocity,
        own: l11,
        cross: l12,
        cross_field: state.psi.values(),
        source: disc.eval_nodal(&spec.h1, "h1", t, None, None)?,
        neumann_load,
        dirichlet: disc.dirichlet_values(&b.theta_d, "theta_d", t)?,
    };
    solve_transport(disc, tau, prob, &solvers.gmres)
}

/// Concentration step for Ψ at time `t`.
///
/// λ₂₂ and λ₂₁ are frozen at (`theta_updated`, `state.psi`); the Soret term
/// uses `theta_updated`.
pub fn solve_concentration(
    disc: &Discretization,
    spec: &ProblemSpec,
    psi_prev: &NodalField,
    velocity: &NodalField,
    theta_updated: &NodalField,
    state: LaggedState<'_>,
    tau: f64,
    t: f64,
    solvers: &InnerSolvers,
) -> Result<TransportSolution, AssemblyError> {
    let c = &spec.coefficients;
    let b = &spec.boundary;
    let th = Some(theta_updated.values());
    let ps = Some(state.psi.values());
    let l22 = disc.eval_nodal(&c.lambda22, "lambda22", t, th, ps)?;
    let l21 = disc.eval_nodal(&c.lambda21, "lambda21", t, th, ps)?;
    let mut neumann_load = disc.face_load(&disc.neumann_faces, &b.psi_flux, "psi_flux", t, Some(&l22))?;
    if !c.lambda21.is_zero() {
        let cross = disc.face_load(&disc.neumann_faces, &b.theta_flux, "theta_flux", t, Some(&l21))?;
        neumann_load.iter_mut().zip(cross).for_each(|(a, c)| *a += c);
    }
    let prob = TransportProblem {
        name: "concentration GMRES",
        prev: psi_prev.values(),
        guess: state.psi.values(),
        velocity,
        own: l22,
        cross: l21,
        cross_field: theta_updated.values(),
        source: disc.eval_nodal(&spec.h2, "h2", t, None, None)?,
        neumann_load,
        dirichlet: disc.dirichlet_values(&b.psi_d, "psi_d", t)?,
    };
    solve_transport(disc, tau, prob, &solvers.gmres)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::model::DomainSpec;
    use crate::stepper::TimePartition;

    fn spec(dim: usize, n: usize) -> ProblemSpec {
        ProblemSpec::homogeneous(
            DomainSpec {
                dim,
                degree: n,
                lower: vec![-1.0; dim],
                upper: vec![1.0; dim],
            },
            TimePartition::uniform(1.0, 10).unwrap(),
        )
    }

    fn field(disc: &Discretization, text: &str, t: f64) -> NodalField {
        let e = parse(text).unwrap();
        NodalField::from_values(disc.grid().clone(), 1, disc.eval_nodal(&e, "test", t, None, None).unwrap())
    }

    fn lagged(disc: &Discretization) -> (NodalField, NodalField) {
        (
            NodalField::zeros(disc.grid().clone(), 1),
            NodalField::zeros(disc.grid().clone(), 1),
        )
    }

    #[test]
    fn darcy_gradient_forcing_is_absorbed_by_pressure() {
        let mut s = spec(2, 6);
        s.coefficients.alpha = parse("2 + x^2").unwrap();
        s.coefficients.f = vec![parse("2*x*y").unwrap(), parse("x^2 - 3*y^2").unwrap()];
        let disc = Discretization::for_problem(&s).unwrap();
        let (th, ps) = lagged(&disc);
        let u0 = NodalField::zeros(disc.grid().clone(), 2);
        let state = LaggedState { theta: &th, psi: &ps };
        let sol = solve_darcy(&disc, &s, &u0, state, 0.1, 0.1, &InnerSolvers::default()).unwrap();
        assert!(sol.report.converged);
        assert!(sol.u.max_abs() < 1e-10, "{}", sol.u.max_abs());
        // f = ∇(x²y − y³); mean over the square is zero
        let p = field(&disc, "x^2*y - y^3", 0.0);
        assert!(sol.p.sub(&p).max_abs() < 1e-10);
        assert!(sol.p.discrete_mean()[0].abs() < 1e-13);
    }

    #[test]
    fn darcy_operator_is_symmetric_semidefinite() {
        let s = spec(2, 5);
        let disc = Discretization::for_problem(&s).unwrap();
        let alpha: Vec<f64> = (0..disc.n()).map(|k| 1.0 + (k % 7) as f64 * 0.3).collect();
        let op = DarcyOperator::new(&disc, 0.05, &alpha).unwrap();
        let x: Vec<f64> = (0..disc.n()).map(|k| ((k * 37) % 11) as f64 - 5.0).collect();
        let y: Vec<f64> = (0..disc.n()).map(|k| ((k * 13) % 5) as f64 * 0.7).collect();
        let (mut sx, mut sy) = (vec![0.0; disc.n()], vec![0.0; disc.n()]);
        op.apply(&x, &mut sx);
        op.apply(&y, &mut sy);
        let xsy: f64 = x.iter().zip(&sy).map(|(a, b)| a * b).sum();
        let ysx: f64 = y.iter().zip(&sx).map(|(a, b)| a * b).sum();
        assert!((xsy - ysx).abs() < 1e-10 * xsy.abs().max(1.0));
        assert!(x.iter().zip(&sx).map(|(a, b)| a * b).sum::<f64>() >= 0.0);
        op.apply(&vec![1.0; disc.n()], &mut sx);
        assert!(sx.iter().all(|v| v.abs() < 1e-10));
        assert!(DarcyOperator::new(&disc, 0.0, &alpha).is_err());
        assert!(matches!(
            DarcyOperator::new(&disc, 1.0, &vec![-2.0; disc.n()]),
            Err(AssemblyError::NonPositiveReaction { .. })
        ));
    }

    #[test]
    fn stiffness_diagonal_matches_operator() {
        let s = spec(3, 3);
        let disc = Discretization::for_problem(&s).unwrap();
        let coef: Vec<f64> = (0..disc.n()).map(|k| 1.0 + (k % 3) as f64).collect();
        let diag = disc.stiffness_diagonal(&coef);
        let mut e = vec![0.0; disc.n()];
        let mut out = vec![0.0; disc.n()];
        for j in 0..disc.n() {
            e[j] = 1.0;
            disc.stiffness_apply(&coef, &e, &mut out);
            assert!((out[j] - diag[j]).abs() < 1e-12 * diag[j].abs().max(1.0));
            e[j] = 0.0;
        }
    }

    #[test]
    fn heat_keeps_dirichlet_values_exactly() {
        let mut s = spec(2, 7);
        s.boundary.theta_d = parse("sin(x) + y^3").unwrap();
        s.h1 = parse("x*y").unwrap();
        let disc = Discretization::for_problem(&s).unwrap();
        let (th, ps) = lagged(&disc);
        let vel = NodalField::constant(disc.grid().clone(), 2, 0.5);
        let state = LaggedState { theta: &th, psi: &ps };
        let sol = solve_heat(&disc, &s, &th, &vel, state, 0.1, 0.3, &InnerSolvers::default()).unwrap();
        assert!(sol.report.converged);
        let data = disc.dirichlet_values(&s.boundary.theta_d, "theta_d", 0.3).unwrap();
        for (k, v) in data.nodes.iter().zip(&data.values) {
            assert_eq!(sol.field.values()[*k].to_bits(), v.to_bits());
        }
    }

    #[test]
    fn transport_reproduces_polynomial_steady_state() {
        // λ = 1, u = (1, 0): −Δθ + ∂x θ = h with θ = x² + y  ⇒  h = −2 + 2x,
        // stepping from θ itself so the time derivative vanishes.
        let mut s = spec(2, 4);
        s.boundary.theta_d = parse("x^2 + y").unwrap();
        s.h1 = parse("-2 + 2*x").unwrap();
        let disc = Discretization::for_problem(&s).unwrap();
        let exact = field(&disc, "x^2 + y", 0.0);
        let mut vel = NodalField::zeros(disc.grid().clone(), 2);
        vel.component_mut(0).iter_mut().for_each(|v| *v = 1.0);
        let ps = NodalField::zeros(disc.grid().clone(), 1);
        let state = LaggedState { theta: &exact, psi: &ps };
        let sol = solve_heat(&disc, &s, &exact, &vel, state, 0.1, 0.1, &InnerSolvers::default()).unwrap();
        assert!(sol.field.sub(&exact).max_abs() < 1e-11);
    }

    #[test]
    fn neumann_flux_enters_weakly() {
        // θ = x² on [-1,1]² with λ = 1, no flow, Neumann on x±: ∂nθ = 2 on
        // both x faces, Dirichlet on y±.
        let mut s = spec(2, 4);
        s.boundary.dirichlet = vec![FaceId::parse("y-").unwrap(), FaceId::parse("y+").unwrap()];
        s.boundary.neumann = vec![FaceId::parse("x-").unwrap(), FaceId::parse("x+").unwrap()];
        s.boundary.theta_d = parse("x^2").unwrap();
        s.boundary.theta_flux = FaceData::uniform(parse("2").unwrap());
        s.h1 = parse("-2").unwrap();
        let disc = Discretization::for_problem(&s).unwrap();
        let exact = field(&disc, "x^2", 0.0);
        let vel = NodalField::zeros(disc.grid().clone(), 2);
        let ps = NodalField::zeros(disc.grid().clone(), 1);
        let state = LaggedState { theta: &exact, psi: &ps };
        let sol = solve_heat(&disc, &s, &exact, &vel, state, 0.5, 0.5, &InnerSolvers::default()).unwrap();
        assert!(sol.field.sub(&exact).max_abs() < 1e-11, "{}", sol.field.sub(&exact).max_abs());
    }

    #[test]
    fn divergence_residual_vanishes_after_solve() {
        let mut s = spec(2, 6);
        s.coefficients.f = vec![parse("y^2").unwrap(), parse("x").unwrap()];
        s.boundary.normal_velocity = FaceData::uniform(Expr::zero());
        let disc = Discretization::for_problem(&s).unwrap();
        let (th, ps) = lagged(&disc);
        let u0 = NodalField::zeros(disc.grid().clone(), 2);
        let state = LaggedState { theta: &th, psi: &ps };
        let sol = solve_darcy(&disc, &s, &u0, state, 0.2, 0.2, &InnerSolvers::default()).unwrap();
        let r = disc.divergence_residual(&sol.u, &s.boundary, 0.2).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-11));
        assert!(sol.u.max_abs() > 1e-3);
    }
}
