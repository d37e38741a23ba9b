//! Backward-Euler time loop with a Picard decoupling iteration per step.

use std::io::{self, Write};

use log::{debug, warn};

use crate::assembly::{
    solve_concentration, solve_darcy, solve_heat, AssemblyError, Discretization, InnerSolvers, LaggedState,
};
use crate::expr::{Env, EvalError, Expr};
use crate::model::{ProblemSpec, StateSnapshot, StepDiagnostics};
use crate::space::{h1_norm, interpolate, l2_norm, NodalField};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StepError {
    #[error("time partition needs at least one step")]
    EmptyPartition,
    #[error("time partition must start at 0 and increase strictly (knot {index} = {value})")]
    BadKnots { index: usize, value: f64 },
    #[error("Picard tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("evaluating initial data {what}: {source}")]
    InitialData { what: String, source: EvalError },
    #[error("step {step} (t = {time}): {source}")]
    Solve { step: usize, time: f64, source: AssemblyError },
    #[error(transparent)]
    Setup(#[from] AssemblyError),
}

/// Knots 0 = t_0 < t_1 < … < t_M = T_f.
#[derive(Debug, Clone, PartialEq)]
pub struct TimePartition {
    knots: Vec<f64>,
}

impl TimePartition {
    pub fn from_knots(knots: Vec<f64>) -> Result<Self, StepError> {
        if knots.len() < 2 {
            return Err(StepError::EmptyPartition);
        }
        if knots[0] != 0.0 {
            return Err(StepError::BadKnots { index: 0, value: knots[0] });
        }
        for i in 1..knots.len() {
            if !(knots[i] > knots[i - 1]) || !knots[i].is_finite() {
                return Err(StepError::BadKnots { index: i, value: knots[i] });
            }
        }
        Ok(Self { knots })
    }

    /// `steps` equal steps up to `final_time`; t_m = T_f·m/M.
    pub fn uniform(final_time: f64, steps: usize) -> Result<Self, StepError> {
        if steps == 0 {
            return Err(StepError::EmptyPartition);
        }
        let knots = (0..=steps)
            .map(|m| if m == steps { final_time } else { final_time * m as f64 / steps as f64 })
            .collect();
        Self::from_knots(knots)
    }

    /// Uniform partition with step closest to `dt`.
    pub fn with_step(final_time: f64, dt: f64) -> Result<Self, StepError> {
        if !(dt > 0.0) || !(final_time > 0.0) {
            return Err(StepError::EmptyPartition);
        }
        Self::uniform(final_time, (final_time / dt).round().max(1.0) as usize)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn steps(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn final_time(&self) -> f64 {
        *self.knots.last().expect("nonempty partition")
    }

    /// τ_m = t_m − t_{m−1}, for m ≥ 1.
    pub fn step(&self, m: usize) -> f64 {
        self.knots[m] - self.knots[m - 1]
    }

    /// σ_τ = max τ_m / τ_{m−1}; 1 for a single step.
    pub fn ratio_bound(&self) -> f64 {
        (2..=self.steps())
            .map(|m| self.step(m) / self.step(m - 1))
            .fold(1.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iterations: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepperConfig {
    pub picard: PicardConfig,
    pub solvers: InnerSolvers,
}

/// The squared Picard increment: ‖Δu‖² + ‖Δp‖²_{H¹} + ‖Δϑ‖²_{H¹} + ‖ΔΨ‖²_{H¹}.
pub fn picard_increment(a: &StateSnapshot, b: &StateSnapshot) -> f64 {
    let du = l2_norm(&a.u.sub(&b.u));
    let dp = h1_norm(&a.p.sub(&b.p));
    let dt = h1_norm(&a.theta.sub(&b.theta));
    let dc = h1_norm(&a.psi.sub(&b.psi));
    du * du + dp * dp + dt * dt + dc * dc
}

fn step_err(step: usize, time: f64) -> impl Fn(AssemblyError) -> StepError {
    move |source| StepError::Solve { step, time, source }
}

/// Extra per-step measurements not part of the state.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepChecks {
    /// Largest weak-divergence residual over every Darcy solve of the step,
    /// max_j |(u, ∇ℓ_j)_N − (g_n, ℓ_j)^{∂Ω}_N| / (1 + ‖u‖).
    pub divergence_residual: f64,
}

/// One backward-Euler step from `prev` to time `t` with step `tau`.
pub fn advance(
    disc: &Discretization,
    spec: &ProblemSpec,
    prev: &StateSnapshot,
    tau: f64,
    t: f64,
    cfg: &StepperConfig,
) -> Result<(StateSnapshot, StepChecks), StepError> {
    if !(cfg.picard.tolerance > 0.0) {
        return Err(StepError::BadTolerance(cfg.picard.tolerance));
    }
    let step = prev.step + 1;
    let err = step_err(step, t);
    let mut iterate = prev.clone();
    let mut diag = StepDiagnostics::default();
    let mut checks = StepChecks::default();

    for k in 1..=cfg.picard.max_iterations.max(1) {
        let state = LaggedState {
            theta: &iterate.theta,
            psi: &iterate.psi,
        };
        let darcy = solve_darcy(disc, spec, &prev.u, state, tau, t, &cfg.solvers).map_err(&err)?;
        let div = disc
            .divergence_residual(&darcy.u, &spec.boundary, t)
            .map_err(&err)?;
        let div_max = div.iter().fold(0.0_f64, |m, v| m.max(v.abs())) / (1.0 + l2_norm(&darcy.u));
        checks.divergence_residual = checks.divergence_residual.max(div_max);

        let heat = solve_heat(disc, spec, &prev.theta, &darcy.u, state, tau, t, &cfg.solvers).map_err(&err)?;
        let conc = solve_concentration(
            disc,
            spec,
            &prev.psi,
            &darcy.u,
            &heat.field,
            state,
            tau,
            t,
            &cfg.solvers,
        )
        .map_err(&err)?;

        diag.cg_iters_darcy += darcy.report.iterations;
        diag.gmres_iters_heat += heat.report.iterations;
        diag.gmres_iters_conc += conc.report.iterations;

        let next = StateSnapshot {
            step,
            time: t,
            u: darcy.u,
            p: darcy.p,
            theta: heat.field,
            psi: conc.field,
            diagnostics: StepDiagnostics::default(),
        };
        let increment = picard_increment(&next, &iterate);
        debug!("step {step} picard {k}: increment {increment:.3e}");
        iterate = next;
        diag.picard_iterations = k;
        diag.picard_residual = increment;
        if increment <= cfg.picard.tolerance {
            diag.picard_converged = true;
            break;
        }
    }
    if !diag.picard_converged {
        warn!(
            "step {step} (t = {t}): Picard did not converge in {} iterations (increment {:.3e})",
            diag.picard_iterations, diag.picard_residual
        );
    }
    iterate.diagnostics = diag;
    Ok((iterate, checks))
}

fn interpolate_expr(disc: &Discretization, e: &Expr, what: &str, t: f64) -> Result<NodalField, StepError> {
    let dim = disc.grid().dim();
    interpolate(disc.grid(), |x| {
        e.eval(&Env::at(&x[..dim], t)).map_err(|source| StepError::InitialData {
            what: what.to_string(),
            source,
        })
    })
}

/// Initial snapshot: interpolated u₀, ϑ₀, Ψ₀ and p⁰ = 0.
pub fn initial_state(disc: &Discretization, spec: &ProblemSpec) -> Result<StateSnapshot, StepError> {
    let grid = disc.grid();
    let u_parts = spec
        .u0
        .iter()
        .enumerate()
        .map(|(i, e)| interpolate_expr(disc, e, &format!("u0[{i}]"), 0.0))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StateSnapshot {
        step: 0,
        time: 0.0,
        u: NodalField::stack(&u_parts),
        p: NodalField::zeros(grid.clone(), 1),
        theta: interpolate_expr(disc, &spec.theta0, "theta0", 0.0)?,
        psi: interpolate_expr(disc, &spec.psi0, "psi0", 0.0)?,
        diagnostics: StepDiagnostics::default(),
    })
}

/// Output of [`run`]: one snapshot per knot, with per-step checks.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub snapshots: Vec<StateSnapshot>,
    pub checks: Vec<StepChecks>,
}

impl RunResult {
    pub fn last(&self) -> &StateSnapshot {
        self.snapshots.last().expect("at least the initial snapshot")
    }

    pub fn all_picard_converged(&self) -> bool {
        self.snapshots[1..].iter().all(|s| s.diagnostics.picard_converged)
    }

    pub fn max_divergence_residual(&self) -> f64 {
        self.checks.iter().fold(0.0, |m, c| m.max(c.divergence_residual))
    }
}

/// Runs the whole time loop of `spec`.
pub fn run(spec: &ProblemSpec, cfg: &StepperConfig) -> Result<RunResult, StepError> {
    let disc = Discretization::for_problem(spec)?;
    run_on(&disc, spec, cfg)
}

pub fn run_on(disc: &Discretization, spec: &ProblemSpec, cfg: &StepperConfig) -> Result<RunResult, StepError> {
    let partition = &spec.partition;
    let mut snapshots = Vec::with_capacity(partition.steps() + 1);
    let mut checks = Vec::with_capacity(partition.steps());
    snapshots.push(initial_state(disc, spec)?);
    for m in 1..=partition.steps() {
        let prev = snapshots.last().expect("initial snapshot");
        let (mut next, c) = advance(disc, spec, prev, partition.step(m), partition.knots()[m], cfg)?;
        next.step = m;
        snapshots.push(next);
        checks.push(c);
    }
    Ok(RunResult { snapshots, checks })
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the per-step run log as CSV.
pub fn write_run_log(result: &RunResult, mut out: impl Write) -> io::Result<()> {
    writeln!(
        out,
        "m,t_m,picard_iters,picard_residual,gmres_iters_heat,gmres_iters_conc,cg_iters_darcy"
    )?;
    for s in &result.snapshots[1..] {
        let d = &s.diagnostics;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.step,
            fmt_f64(s.time),
            d.picard_iterations,
            fmt_f64(d.picard_residual),
            d.gmres_iters_heat,
            d.gmres_iters_conc,
            d.cg_iters_darcy
        )?;
    }
    Ok(())
}

/// Largest nodal magnitude over all fields of a snapshot.
pub fn snapshot_max_abs(s: &StateSnapshot) -> f64 {
    [&s.u, &s.p, &s.theta, &s.psi]
        .iter()
        .map(|f| f.max_abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{mms_forcing, parse, ExactSolution};
    use crate::model::{DomainSpec, FaceData};
    use crate::quad::FaceId;

    fn domain(dim: usize, degree: usize) -> DomainSpec {
        DomainSpec {
            dim,
            degree,
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    #[test]
    fn uniform_partition_knots() {
        let p = TimePartition::uniform(1.0, 10).unwrap();
        assert_eq!(p.steps(), 10);
        assert_eq!(p.knots()[3], 0.3);
        assert_eq!(p.final_time(), 1.0);
        assert!((p.ratio_bound() - 1.0).abs() < 1e-12);
        assert_eq!(TimePartition::with_step(1.0, 1.0 / 160.0).unwrap().steps(), 160);
        let q = TimePartition::from_knots(vec![0.0, 0.1, 0.3, 0.4]).unwrap();
        assert!((q.ratio_bound() - 2.0).abs() < 1e-12);
        assert!(TimePartition::from_knots(vec![0.0]).is_err());
        assert!(TimePartition::from_knots(vec![0.0, 0.2, 0.2]).is_err());
        assert!(TimePartition::from_knots(vec![0.1, 0.2]).is_err());
        assert!(TimePartition::uniform(1.0, 0).is_err());
    }

    #[test]
    fn zero_data_stays_zero() {
        let spec = ProblemSpec::homogeneous(domain(2, 6), TimePartition::uniform(1.0, 5).unwrap());
        let res = run(&spec, &StepperConfig::default()).unwrap();
        assert_eq!(res.snapshots.len(), 6);
        for s in &res.snapshots {
            assert_eq!(snapshot_max_abs(s), 0.0);
        }
        assert!(res.snapshots[1..].iter().all(|s| s.diagnostics.picard_iterations == 1));
        assert!(res.all_picard_converged());
    }

    #[test]
    fn decoupled_constant_coefficients_need_two_picard_passes() {
        let mut spec = ProblemSpec::homogeneous(domain(2, 6), TimePartition::uniform(0.5, 5).unwrap());
        spec.coefficients.alpha = parse("3").unwrap();
        spec.coefficients.lambda11 = parse("2").unwrap();
        spec.coefficients.lambda22 = parse("0.5").unwrap();
        spec.coefficients.f = vec![parse("y").unwrap(), parse("-x*t").unwrap()];
        spec.h1 = parse("1 + x").unwrap();
        spec.h2 = parse("sin(y)").unwrap();
        spec.theta0 = parse("x*(1-x)").unwrap();
        let res = run(&spec, &StepperConfig::default()).unwrap();
        for s in &res.snapshots[1..] {
            assert!(s.diagnostics.picard_converged);
            assert!(s.diagnostics.picard_iterations <= 2, "{:?}", s.diagnostics);
        }
        assert!(res.last().theta.max_abs() > 1e-3);
    }

    #[test]
    fn time_affine_polynomial_solution_is_exact_for_any_step() {
        let exact = ExactSolution {
            u: vec![parse("1 + t").unwrap(), parse("2*t - 1").unwrap()],
            p: parse("x*y - 0.25").unwrap(),
            theta: parse("t*(x^2 + y) + 1").unwrap(),
            psi: parse("x - t*y^2").unwrap(),
        };
        let mut coefficients = crate::model::CoefficientSet::identity(2);
        coefficients.alpha = parse("2").unwrap();
        coefficients.lambda21 = parse("0.3").unwrap();
        let forcing = mms_forcing(&exact, &coefficients).unwrap();
        coefficients.f = forcing.f.clone();
        let at0 = |e: &Expr| e.substitute(crate::expr::Var::T, &Expr::zero());
        let build = |steps: usize| ProblemSpec {
            domain: domain(2, 4),
            coefficients: coefficients.clone(),
            boundary: crate::model::BoundarySpec {
                dirichlet: FaceId::all(2),
                neumann: vec![],
                theta_d: forcing.theta_d.clone(),
                psi_d: forcing.psi_d.clone(),
                theta_flux: FaceData::zero(),
                psi_flux: FaceData::zero(),
                normal_velocity: FaceData {
                    default: Expr::zero(),
                    faces: forcing.normal_velocity.clone(),
                },
                pressure: None,
            },
            h1: forcing.h1.clone(),
            h2: forcing.h2.clone(),
            u0: exact.u.iter().map(at0).collect(),
            theta0: at0(&exact.theta),
            psi0: at0(&exact.psi),
            partition: TimePartition::uniform(1.0, steps).unwrap(),
        };
        for steps in [5, 10] {
            let spec = build(steps);
            let res = run(&spec, &StepperConfig::default()).unwrap();
            let last = res.last();
            let disc = Discretization::for_problem(&spec).unwrap();
            let theta = interpolate_expr(&disc, &exact.theta, "theta", 1.0).unwrap();
            let psi = interpolate_expr(&disc, &exact.psi, "psi", 1.0).unwrap();
            assert!(last.theta.sub(&theta).max_abs() < 1e-9);
            assert!(last.psi.sub(&psi).max_abs() < 1e-9);
            assert!((last.u.component(0)[0] - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn run_log_has_one_row_per_step() {
        let spec = ProblemSpec::homogeneous(domain(2, 2), TimePartition::uniform(1.0, 3).unwrap());
        let res = run(&spec, &StepperConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_run_log(&res, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "m,t_m,picard_iters,picard_residual,gmres_iters_heat,gmres_iters_conc,cg_iters_darcy"
        );
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("3,1.0000000000000000e0,1,"));
    }

    #[test]
    fn bad_picard_tolerance_is_rejected() {
        let spec = ProblemSpec::homogeneous(domain(2, 3), TimePartition::uniform(1.0, 1).unwrap());
        let mut cfg = StepperConfig::default();
        cfg.picard.tolerance = 0.0;
        assert!(matches!(run(&spec, &cfg), Err(StepError::BadTolerance(_))));
    }
}
