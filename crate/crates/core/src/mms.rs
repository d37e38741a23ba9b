//! Manufactured-solution catalog, error functionals, and convergence studies.

use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::expr::{mms_forcing, parse, Env, ExactSolution, Expr, Var};
use crate::model::{BoundarySpec, CoefficientSet, DomainSpec, FaceData, ProblemSpec, StateSnapshot};
use crate::quad::{FaceId, TensorGrid};
use crate::space::{gradient, NodalField};
use crate::stepper::{fmt_f64, run, RunResult, StepError, StepperConfig, TimePartition};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MmsError {
    #[error("convergence rate needs positive errors, got {0} and {1}")]
    NonPositiveError(f64, f64),
    #[error("invalid manufactured case: {0}")]
    InvalidCase(String),
    #[error(transparent)]
    Step(#[from] StepError),
}

/// How the Darcy divergence constraint treats the boundary in a
/// manufactured run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityBoundary {
    /// Weak constraint carries the exact normal flux u·n.
    ExactFlux,
    /// Homogeneous sliding condition u·n = 0 regardless of the exact field.
    Sliding,
    /// Exact pressure on ∂Ω, u·n left free.
    ExactPressure,
}

/// A manufactured solution together with its coefficients and domain.
#[derive(Debug, Clone, PartialEq)]
pub struct MmsCase {
    pub name: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub exact: ExactSolution,
    pub coefficients: CoefficientSet,
    pub neumann: Vec<FaceId>,
    pub velocity_boundary: VelocityBoundary,
}

fn p(s: &str) -> Expr {
    parse(s).expect("catalog expressions parse")
}

impl MmsCase {
    pub fn dim(&self) -> usize {
        self.exact.dim()
    }

    /// Three-dimensional, time-dependent case on the unit cube. All fields
    /// are polynomials of degree ≤ 3 in space, so with N = 5 only the time
    /// discretization error remains. `sin(pi+t)` and `cos(pi*t)` are taken
    /// literally (a phase shift and a frequency π respectively).
    pub fn temporal_3d() -> Self {
        Self {
            name: "temporal-3d".into(),
            lower: vec![0.0; 3],
            upper: vec![1.0; 3],
            exact: ExactSolution {
                u: vec![
                    p("cos(t)*y - sin(pi+t)*z^2"),
                    p("sin(t)*(x-1) + cos(pi*t)"),
                    p("-2*t*x"),
                ],
                p: p("sin(t)*x + cos(t)*(y+z^2)"),
                theta: p("cos(t)*(x^2+2*y^2-z)"),
                psi: p("sin(t)*(-x+y^3)"),
            },
            coefficients: CoefficientSet {
                alpha: p("T^2+C^2+2"),
                lambda11: p("T+C+10"),
                lambda12: p("0"),
                lambda21: p("T+C"),
                lambda22: p("T^2+C^2+2"),
                gamma: 1.0,
                f: vec![Expr::zero(); 3],
            },
            neumann: Vec::new(),
            velocity_boundary: VelocityBoundary::ExactPressure,
        }
    }

    /// Two-dimensional case on (-1, 1)² whose fields are affine in time, so
    /// backward Euler adds no temporal error.
    pub fn spatial_2d() -> Self {
        Self {
            name: "spatial-2d".into(),
            lower: vec![-1.0; 2],
            upper: vec![1.0; 2],
            exact: ExactSolution {
                u: vec![
                    p("-t*sin(pi*x)*cos(pi*y) + t + 1"),
                    p("t*cos(pi*x)*sin(pi*y) + 2*t + 1"),
                ],
                p: p("-1/pi*sin(pi*x)*cos(pi*y)"),
                theta: p("t*(2*cos(pi*x)*sin(pi*y) + 1)"),
                psi: p("t*sin(pi*x)*cos(pi*y)*sin(pi*(x+y)) + t - 1"),
            },
            coefficients: CoefficientSet {
                alpha: p("1/(T^2+C^2+1)"),
                lambda11: p("T^2+C^2+2"),
                lambda12: p("0"),
                lambda21: p("T^2+C^2+2"),
                lambda22: p("T^2+C^2+2"),
                gamma: 1.0,
                f: vec![Expr::zero(); 2],
            },
            neumann: Vec::new(),
            velocity_boundary: VelocityBoundary::ExactPressure,
        }
    }

    /// Builds the discrete problem: derived forcing, Dirichlet traces on the
    /// non-Neumann faces, exact fluxes on the Neumann faces, and the exact
    /// state at t = 0 as initial data.
    pub fn problem(&self, degree: usize, partition: TimePartition) -> Result<ProblemSpec, MmsError> {
        let dim = self.dim();
        let forcing = mms_forcing(&self.exact, &self.coefficients)
            .map_err(|e| MmsError::InvalidCase(e.to_string()))?;
        let dirichlet: Vec<FaceId> = FaceId::all(dim)
            .into_iter()
            .filter(|f| !self.neumann.contains(f))
            .collect();
        let normal_velocity = match self.velocity_boundary {
            VelocityBoundary::ExactFlux => FaceData {
                default: Expr::zero(),
                faces: forcing.normal_velocity.clone(),
            },
            VelocityBoundary::Sliding | VelocityBoundary::ExactPressure => FaceData::zero(),
        };
        let pressure = (self.velocity_boundary == VelocityBoundary::ExactPressure).then(|| self.exact.p.clone());
        let at_zero = |e: &Expr| e.substitute(Var::T, &Expr::zero());
        let mut coefficients = self.coefficients.clone();
        coefficients.f = forcing.f.clone();
        let spec = ProblemSpec {
            domain: DomainSpec {
                dim,
                degree,
                lower: self.lower.clone(),
                upper: self.upper.clone(),
            },
            coefficients,
            boundary: BoundarySpec {
                dirichlet,
                neumann: self.neumann.clone(),
                theta_d: forcing.theta_d.clone(),
                psi_d: forcing.psi_d.clone(),
                theta_flux: FaceData {
                    default: Expr::zero(),
                    faces: forcing.theta_flux.clone(),
                },
                psi_flux: FaceData {
                    default: Expr::zero(),
                    faces: forcing.psi_flux.clone(),
                },
                normal_velocity,
                pressure,
            },
            h1: forcing.h1,
            h2: forcing.h2,
            u0: self.exact.u.iter().map(at_zero).collect(),
            theta0: at_zero(&self.exact.theta),
            psi0: at_zero(&self.exact.psi),
            partition,
        };
        spec.check().map_err(|e| MmsError::InvalidCase(e.to_string()))?;
        Ok(spec)
    }
}

/// Final-time errors of one run. `param` is δt or N depending on the study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRecord {
    pub param: f64,
    pub err_u_l2: f64,
    pub err_p_h1: f64,
    pub err_t_h1: f64,
    pub err_c_h1: f64,
    pub total: f64,
}

impl ErrorRecord {
    /// Combines component errors into the Euclidean total.
    pub fn new(param: f64, err_u_l2: f64, err_p_h1: f64, err_t_h1: f64, err_c_h1: f64) -> Self {
        let total = (err_u_l2 * err_u_l2 + err_p_h1 * err_p_h1 + err_t_h1 * err_t_h1 + err_c_h1 * err_c_h1).sqrt();
        Self {
            param,
            err_u_l2,
            err_p_h1,
            err_t_h1,
            err_c_h1,
            total,
        }
    }
}

/// Convergence rate log(e_coarse / e_fine) / log 2.
pub fn rate(e_coarse: f64, e_fine: f64) -> Result<f64, MmsError> {
    if !(e_coarse > 0.0) || !(e_fine > 0.0) {
        return Err(MmsError::NonPositiveError(e_coarse, e_fine));
    }
    Ok((e_coarse / e_fine).log2())
}

/// Degree of the Legendre rule used for the analytic pressure mean.
const MEAN_RULE_DEGREE: usize = 40;

/// Exact spatial mean of `e` at time `t` over the box of `grid`.
fn exact_mean(e: &Expr, grid: &TensorGrid, t: f64) -> f64 {
    let fine = TensorGrid::new(grid.dim(), MEAN_RULE_DEGREE, grid.lower(), grid.upper())
        .expect("box already validated");
    let dim = fine.dim();
    let total: f64 = (0..fine.len())
        .map(|k| fine.weight(k) * e.eval(&Env::at(&fine.point(k)[..dim], t)).unwrap_or(f64::NAN))
        .sum();
    total / fine.volume()
}

/// Errors of `snap` against `exact` at the snapshot time, measured with an
/// LGL rule of degree N + 4 and off-grid evaluation of the discrete fields.
/// The exact pressure is shifted to zero mean first.
pub fn snapshot_errors(snap: &StateSnapshot, exact: &ExactSolution, param: f64) -> ErrorRecord {
    let grid = snap.u.grid();
    let dim = grid.dim();
    let t = snap.time;
    let fine = TensorGrid::new(dim, grid.degree() + 4, grid.lower(), grid.upper()).expect("box already validated");
    let p_mean = exact_mean(&exact.p, grid, t);
    let ph_mean = snap.p.discrete_mean()[0];

    let grad = |f: &NodalField| gradient(f);
    let (gp, gt, gc) = (grad(&snap.p), grad(&snap.theta), grad(&snap.psi));
    let grads_exact = |e: &Expr| -> Vec<Expr> { (0..dim).map(|a| e.diff(Var::space(a))).collect() };
    let (ep, et, ec) = (grads_exact(&exact.p), grads_exact(&exact.theta), grads_exact(&exact.psi));

    let mut sums = [0.0; 4];
    for k in 0..fine.len() {
        let x = &fine.point(k)[..dim];
        let w = fine.weight(k);
        let env = Env::at(x, t);
        let ev = |e: &Expr| e.eval(&env).unwrap_or(f64::NAN);

        let uh = snap.u.evaluate_at(x);
        let du: f64 = (0..dim).map(|a| (uh[a] - ev(&exact.u[a])).powi(2)).sum();
        sums[0] += w * du;

        let scalar_sq = |field: &NodalField, g: &NodalField, e: &Expr, ge: &[Expr], shift: f64| -> f64 {
            let v = field.evaluate_at(x)[0] - (ev(e) - shift);
            let gh = g.evaluate_at(x);
            v * v + (0..dim).map(|a| (gh[a] - ev(&ge[a])).powi(2)).sum::<f64>()
        };
        sums[1] += w * scalar_sq(&snap.p, &gp, &exact.p, &ep, p_mean - ph_mean);
        sums[2] += w * scalar_sq(&snap.theta, &gt, &exact.theta, &et, 0.0);
        sums[3] += w * scalar_sq(&snap.psi, &gc, &exact.psi, &ec, 0.0);
    }
    ErrorRecord::new(param, sums[0].sqrt(), sums[1].sqrt(), sums[2].sqrt(), sums[3].sqrt())
}

/// Errors at the final snapshot of a run.
pub fn final_time_errors(result: &RunResult, case: &MmsCase, param: f64) -> ErrorRecord {
    snapshot_errors(result.last(), &case.exact, param)
}

/// Nodal interpolant of the exact solution at time `t`, with the pressure
/// shifted to zero mean.
pub fn interpolated_exact(case: &MmsCase, grid: &Arc<TensorGrid>, t: f64) -> StateSnapshot {
    let dim = grid.dim();
    let sample = |e: &Expr| NodalField::from_fn(grid.clone(), |x| e.eval(&Env::at(&x[..dim], t)).unwrap_or(f64::NAN));
    let mean = exact_mean(&case.exact.p, grid, t);
    let mut pf = sample(&case.exact.p);
    pf.values_mut().iter_mut().for_each(|v| *v -= mean);
    let mut snap = StateSnapshot::zero(grid, t);
    snap.u = NodalField::stack(&case.exact.u.iter().map(sample).collect::<Vec<_>>());
    snap.p = pf;
    snap.theta = sample(&case.exact.theta);
    snap.psi = sample(&case.exact.psi);
    snap
}

/// Outcome of one run inside a study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub record: ErrorRecord,
    pub picard_converged: bool,
    pub max_picard_iterations: usize,
    pub max_divergence_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub rows: Vec<StudyRow>,
}

impl Study {
    pub fn records(&self) -> Vec<ErrorRecord> {
        self.rows.iter().map(|r| r.record).collect()
    }

    /// Rates between consecutive rows; `None` for the first row.
    pub fn rates(&self) -> Vec<Option<f64>> {
        std::iter::once(None)
            .chain(
                self.rows
                    .windows(2)
                    .map(|w| rate(w[0].record.total, w[1].record.total).ok()),
            )
            .collect()
    }
}

fn run_case(case: &MmsCase, degree: usize, partition: TimePartition, param: f64, cfg: &StepperConfig) -> Result<StudyRow, MmsError> {
    let spec = case.problem(degree, partition)?;
    let result = run(&spec, cfg)?;
    Ok(StudyRow {
        record: final_time_errors(&result, case, param),
        picard_converged: result.all_picard_converged(),
        max_picard_iterations: result.snapshots[1..]
            .iter()
            .map(|s| s.diagnostics.picard_iterations)
            .max()
            .unwrap_or(0),
        max_divergence_residual: result.max_divergence_residual(),
    })
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

/// Runs `case` at fixed degree for each time step in `dts` (up to `final_time`).
pub fn temporal_study(
    case: &MmsCase,
    degree: usize,
    dts: &[f64],
    final_time: f64,
    cfg: &StepperConfig,
    threads: Option<usize>,
) -> Result<Study, MmsError> {
    let rows = in_pool(threads, || {
        dts.par_iter()
            .map(|&dt| run_case(case, degree, TimePartition::with_step(final_time, dt)?, dt, cfg))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(Study { rows })
}

/// Runs `case` with time step `dt` for each polynomial degree in `degrees`.
pub fn spatial_study(
    case: &MmsCase,
    degrees: &[usize],
    dt: f64,
    final_time: f64,
    cfg: &StepperConfig,
    threads: Option<usize>,
) -> Result<Study, MmsError> {
    let rows = in_pool(threads, || {
        degrees
            .par_iter()
            .map(|&n| run_case(case, n, TimePartition::with_step(final_time, dt)?, n as f64, cfg))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(Study { rows })
}

/// Temporal study CSV: dt, errU_L2, errP_H1, errT_H1, errC_H1, E_total, rate.
pub fn write_temporal_csv(study: &Study, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "dt,errU_L2,errP_H1,errT_H1,errC_H1,E_total,rate")?;
    for (row, r) in study.rows.iter().zip(study.rates()) {
        let e = &row.record;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_f64(e.param),
            fmt_f64(e.err_u_l2),
            fmt_f64(e.err_p_h1),
            fmt_f64(e.err_t_h1),
            fmt_f64(e.err_c_h1),
            fmt_f64(e.total),
            r.map(fmt_f64).unwrap_or_default()
        )?;
    }
    Ok(())
}

/// Spatial study CSV: N, errU_L2, errP_H1, errT_H1, errC_H1, E_total.
pub fn write_spatial_csv(study: &Study, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "N,errU_L2,errP_H1,errT_H1,errC_H1,E_total")?;
    for row in &study.rows {
        let e = &row.record;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            e.param as usize,
            fmt_f64(e.err_u_l2),
            fmt_f64(e.err_p_h1),
            fmt_f64(e.err_t_h1),
            fmt_f64(e.err_c_h1),
            fmt_f64(e.total)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_examples() {
        assert_eq!(rate(0.3, 0.3).unwrap(), 0.0);
        assert_eq!(rate(4.0, 1.0).unwrap(), 2.0);
        for a in [1e-9, 0.0867, 3.0, 1e5] {
            assert_eq!(rate(a, a / 2.0).unwrap(), 1.0);
        }
        assert!(rate(0.0, 1.0).is_err());
        assert!(rate(1.0, -1.0).is_err());
    }

    #[test]
    fn total_error_combination() {
        let e = ErrorRecord::new(0.1, 0.0857, 0.0129, 0.0014, 0.0023);
        assert!((e.total - 0.0867).abs() < 5e-5);
        let d = ErrorRecord::new(0.1, 2.0 * 0.0857, 2.0 * 0.0129, 2.0 * 0.0014, 2.0 * 0.0023);
        assert!((d.total - 2.0 * e.total).abs() < 1e-16);
    }

    #[test]
    fn catalog_velocities_are_solenoidal() {
        for case in [MmsCase::temporal_3d(), MmsCase::spatial_2d()] {
            let div = case.exact.divergence();
            for i in 0..20 {
                let s = i as f64 / 20.0;
                let env = Env::new()
                    .with(Var::X, 0.9 * s - 0.3)
                    .with(Var::Y, 0.7 - s * 0.5)
                    .with(Var::Z, s * s)
                    .with(Var::T, s);
                assert!(div.eval(&env).unwrap().abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn interpolated_polynomial_solution_has_no_error() {
        let case = MmsCase::temporal_3d();
        let grid = Arc::new(TensorGrid::new(3, 5, &case.lower, &case.upper).unwrap());
        let snap = interpolated_exact(&case, &grid, 1.0);
        let e = snapshot_errors(&snap, &case.exact, 0.0);
        assert!(e.total <= 1e-11, "{e:?}");
    }
}
