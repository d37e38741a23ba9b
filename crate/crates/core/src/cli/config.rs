//! TOML run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::assembly::InnerSolvers;
use crate::expr::{parse, ExactSolution, Expr, ParseError};
use crate::krylov::{CgConfig, GmresConfig};
use crate::mms::{MmsCase, VelocityBoundary};
use crate::model::{
    boussinesq_f, BoundarySpec, CoefficientSet, DomainSpec, FaceData, ModelError, ProblemSpec, SampleBox,
};
use crate::quad::FaceId;
use crate::stepper::{PicardConfig, StepError, StepperConfig, TimePartition};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Toml(#[from] toml::de::Error),
    #[error("expression for {field}: {source}")]
    Expr { field: String, source: ParseError },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Time(#[from] StepError),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

fn expr(field: &str, text: &str) -> Result<Expr, ConfigError> {
    parse(text).map_err(|source| ConfigError::Expr {
        field: field.to_string(),
        source,
    })
}

fn opt_expr(field: &str, text: &Option<String>, default: &str) -> Result<Expr, ConfigError> {
    expr(field, text.as_deref().unwrap_or(default))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSection,
    #[serde(default)]
    pub coefficients: CoefficientsSection,
    #[serde(default)]
    pub boundary: BoundarySection,
    #[serde(default)]
    pub sources: SourcesSection,
    #[serde(default)]
    pub initial: InitialSection,
    pub time: TimeSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
    pub study: Option<StudySection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub dim: usize,
    pub degree: usize,
    /// Defaults to -1 on every axis.
    pub lower: Option<Vec<f64>>,
    /// Defaults to 1 on every axis.
    pub upper: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Buoyancy {
    pub beta_t: f64,
    pub beta_c: f64,
    pub rho0: f64,
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsSection {
    pub alpha: Option<String>,
    pub lambda11: Option<String>,
    pub lambda12: Option<String>,
    pub lambda21: Option<String>,
    pub lambda22: Option<String>,
    pub gamma: Option<f64>,
    pub f: Option<Vec<String>>,
    pub buoyancy: Option<Buoyancy>,
    /// Temperature range sampled by `validate`.
    pub temp_range: Option<[f64; 2]>,
    /// Concentration range sampled by `validate`.
    pub conc_range: Option<[f64; 2]>,
}

/// Face data: one expression for every face, or a table keyed by face name
/// ("x-", "y+", …) with an optional "default".
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum FaceDataText {
    Uniform(String),
    PerFace(BTreeMap<String, String>),
}

impl FaceDataText {
    fn build(&self, field: &str, dim: usize) -> Result<FaceData, ConfigError> {
        match self {
            FaceDataText::Uniform(s) => Ok(FaceData::uniform(expr(field, s)?)),
            FaceDataText::PerFace(map) => {
                let mut data = FaceData::zero();
                for (key, text) in map {
                    let e = expr(&format!("{field}.{key}"), text)?;
                    if key == "default" {
                        data.default = e;
                    } else {
                        data.faces.insert(parse_face(key, dim)?, e);
                    }
                }
                Ok(data)
            }
        }
    }
}

fn parse_face(name: &str, dim: usize) -> Result<FaceId, ConfigError> {
    let face = FaceId::parse(name).ok_or_else(|| invalid(format!("unknown face '{name}'")))?;
    if face.axis >= dim {
        return Err(invalid(format!("face '{name}' does not exist in {dim}D")));
    }
    Ok(face)
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    /// Defaults to every face not listed as Neumann.
    pub dirichlet: Option<Vec<String>>,
    #[serde(default)]
    pub neumann: Vec<String>,
    /// ϑ_D on the Dirichlet part.
    pub theta: Option<String>,
    /// Ψ_D on the Dirichlet part.
    pub psi: Option<String>,
    pub theta_flux: Option<FaceDataText>,
    pub psi_flux: Option<FaceDataText>,
    pub normal_velocity: Option<FaceDataText>,
    pub pressure: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactSection {
    pub u: Vec<String>,
    pub p: String,
    pub theta: String,
    pub psi: String,
    /// "pressure" (default), "flux" or "sliding".
    pub velocity_boundary: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourcesSection {
    pub h1: Option<String>,
    pub h2: Option<String>,
    /// Manufactured solution; forcing, boundary and initial data are then
    /// derived from it.
    pub exact: Option<ExactSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub u: Option<Vec<String>>,
    pub theta: Option<String>,
    pub psi: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub final_time: Option<f64>,
    pub steps: Option<usize>,
    pub dt: Option<f64>,
    pub knots: Option<Vec<f64>>,
}

impl TimeSection {
    fn partition(&self) -> Result<TimePartition, ConfigError> {
        match (self.final_time, self.steps, self.dt, &self.knots) {
            (Some(tf), Some(m), None, None) => Ok(TimePartition::uniform(tf, m)?),
            (Some(tf), None, Some(dt), None) => Ok(TimePartition::with_step(tf, dt)?),
            (tf, None, None, Some(k)) => {
                let p = TimePartition::from_knots(k.clone())?;
                match tf {
                    Some(tf) if tf != p.final_time() => {
                        Err(invalid("[time] final_time disagrees with the last knot"))
                    }
                    _ => Ok(p),
                }
            }
            _ => Err(invalid(
                "[time] needs final_time with exactly one of steps or dt, or a knots list",
            )),
        }
    }

    /// Final time implied by the section.
    fn final_time(&self) -> Option<f64> {
        self.final_time
            .or_else(|| self.knots.as_ref().and_then(|k| k.last().copied()))
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub gmres_tol: Option<f64>,
    pub gmres_restart: Option<usize>,
    pub gmres_max_iter: Option<usize>,
    pub cg_tol: Option<f64>,
    pub cg_max_iter: Option<usize>,
    pub picard_tol: Option<f64>,
    pub picard_max_iter: Option<usize>,
}

impl SolverSection {
    fn build(&self) -> Result<StepperConfig, ConfigError> {
        let g = GmresConfig::default();
        let c = CgConfig::default();
        let p = PicardConfig::default();
        let cfg = StepperConfig {
            picard: PicardConfig {
                tolerance: self.picard_tol.unwrap_or(p.tolerance),
                max_iterations: self.picard_max_iter.unwrap_or(p.max_iterations),
            },
            solvers: InnerSolvers {
                gmres: GmresConfig {
                    tol: self.gmres_tol.unwrap_or(g.tol),
                    restart: self.gmres_restart.unwrap_or(g.restart),
                    max_iter: self.gmres_max_iter.unwrap_or(g.max_iter),
                },
                cg: CgConfig {
                    tol: self.cg_tol.unwrap_or(c.tol),
                    max_iter: self.cg_max_iter.unwrap_or(c.max_iter),
                },
            },
        };
        for (name, v) in [
            ("picard_tol", cfg.picard.tolerance),
            ("gmres_tol", cfg.solvers.gmres.tol),
            ("cg_tol", cfg.solvers.cg.tol),
        ] {
            if !(v > 0.0) {
                return Err(invalid(format!("[solver] {name} must be positive")));
            }
        }
        if cfg.solvers.gmres.restart == 0 || cfg.picard.max_iterations == 0 {
            return Err(invalid("[solver] gmres_restart and picard_max_iter must be positive"));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Relative paths are resolved against the config file's directory.
    pub directory: Option<PathBuf>,
    pub summary: Option<String>,
    pub log: Option<String>,
    pub study: Option<String>,
    /// error, warn, info, debug or trace.
    pub verbosity: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    /// "temporal" or "spatial".
    pub kind: String,
    pub dts: Option<Vec<f64>>,
    pub degrees: Option<Vec<usize>>,
}

/// What a study run should sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum StudyPlan {
    Temporal { degree: usize, dts: Vec<f64>, final_time: f64 },
    Spatial { degrees: Vec<usize>, dt: f64, final_time: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    pub directory: PathBuf,
    pub summary: PathBuf,
    pub log: PathBuf,
    pub study: PathBuf,
    pub verbosity: log::LevelFilter,
}

/// A validated configuration, ready to run.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub spec: ProblemSpec,
    pub stepper: StepperConfig,
    pub case: Option<MmsCase>,
    pub study: Option<StudyPlan>,
    pub output: OutputPaths,
    pub sample_box: SampleBox,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Validates the configuration; relative output paths are resolved
    /// against `base`.
    pub fn plan(&self, base: &Path) -> Result<RunPlan, ConfigError> {
        let d = &self.domain;
        if !(2..=3).contains(&d.dim) {
            return Err(invalid(format!("[domain] dim must be 2 or 3, got {}", d.dim)));
        }
        let dim = d.dim;
        let lower = d.lower.clone().unwrap_or_else(|| vec![-1.0; dim]);
        let upper = d.upper.clone().unwrap_or_else(|| vec![1.0; dim]);
        if lower.len() != dim || upper.len() != dim {
            return Err(invalid("[domain] lower and upper need one entry per dimension"));
        }
        let domain = DomainSpec {
            dim,
            degree: d.degree,
            lower: lower.clone(),
            upper: upper.clone(),
        };
        domain.grid().map_err(|e| invalid(format!("[domain] {e}")))?;

        let coefficients = self.coefficients(dim)?;
        let b = &self.boundary;
        let neumann = b
            .neumann
            .iter()
            .map(|s| parse_face(s, dim))
            .collect::<Result<Vec<_>, _>>()?;
        let dirichlet = match &b.dirichlet {
            Some(list) => list.iter().map(|s| parse_face(s, dim)).collect::<Result<Vec<_>, _>>()?,
            None => FaceId::all(dim).into_iter().filter(|f| !neumann.contains(f)).collect(),
        };
        let partition = self.time.partition()?;
        let stepper = self.solver.build()?;

        let (spec, case) = match &self.sources.exact {
            Some(ex) => {
                self.reject_derived_fields()?;
                let mut covered = dirichlet.clone();
                covered.extend(&neumann);
                if FaceId::all(dim).iter().any(|f| !covered.contains(f)) {
                    return Err(invalid("with [sources.exact] every face must be Dirichlet or Neumann"));
                }
                let velocity_boundary = match ex.velocity_boundary.as_deref().unwrap_or("pressure") {
                    "pressure" => VelocityBoundary::ExactPressure,
                    "flux" => VelocityBoundary::ExactFlux,
                    "sliding" => VelocityBoundary::Sliding,
                    other => return Err(invalid(format!("unknown velocity_boundary '{other}'"))),
                };
                let case = MmsCase {
                    name: "config".into(),
                    lower,
                    upper,
                    exact: ExactSolution {
                        u: ex
                            .u
                            .iter()
                            .enumerate()
                            .map(|(i, s)| expr(&format!("exact.u[{i}]"), s))
                            .collect::<Result<_, _>>()?,
                        p: expr("exact.p", &ex.p)?,
                        theta: expr("exact.theta", &ex.theta)?,
                        psi: expr("exact.psi", &ex.psi)?,
                    },
                    coefficients,
                    neumann,
                    velocity_boundary,
                };
                if case.exact.u.len() != dim {
                    return Err(invalid("exact.u needs one component per dimension"));
                }
                let spec = case
                    .problem(d.degree, partition)
                    .map_err(|e| invalid(e.to_string()))?;
                (spec, Some(case))
            }
            None => {
                let dim_exprs = |field: &str, list: &Option<Vec<String>>| -> Result<Vec<Expr>, ConfigError> {
                    match list {
                        None => Ok(vec![Expr::zero(); dim]),
                        Some(v) if v.len() == dim => v
                            .iter()
                            .enumerate()
                            .map(|(i, s)| expr(&format!("{field}[{i}]"), s))
                            .collect(),
                        Some(_) => Err(invalid(format!("{field} needs one entry per dimension"))),
                    }
                };
                let face = |field: &str, t: &Option<FaceDataText>| -> Result<FaceData, ConfigError> {
                    t.as_ref().map_or(Ok(FaceData::zero()), |t| t.build(field, dim))
                };
                let spec = ProblemSpec {
                    domain,
                    coefficients,
                    boundary: BoundarySpec {
                        dirichlet,
                        neumann,
                        theta_d: opt_expr("boundary.theta", &b.theta, "0")?,
                        psi_d: opt_expr("boundary.psi", &b.psi, "0")?,
                        theta_flux: face("boundary.theta_flux", &b.theta_flux)?,
                        psi_flux: face("boundary.psi_flux", &b.psi_flux)?,
                        normal_velocity: face("boundary.normal_velocity", &b.normal_velocity)?,
                        pressure: b
                            .pressure
                            .as_ref()
                            .map(|s| expr("boundary.pressure", s))
                            .transpose()?,
                    },
                    h1: opt_expr("sources.h1", &self.sources.h1, "0")?,
                    h2: opt_expr("sources.h2", &self.sources.h2, "0")?,
                    u0: dim_exprs("initial.u", &self.initial.u)?,
                    theta0: opt_expr("initial.theta", &self.initial.theta, "0")?,
                    psi0: opt_expr("initial.psi", &self.initial.psi, "0")?,
                    partition,
                };
                spec.check()?;
                (spec, None)
            }
        };

        let study = match &self.study {
            None => None,
            Some(s) => Some(self.study_plan(s, &spec, case.is_some())?),
        };
        let final_time = spec.partition.final_time();
        let c = &self.coefficients;
        let range = |r: Option<[f64; 2]>| r.map_or((-1.0, 1.0), |[a, b]| (a, b));
        let sample_box = SampleBox {
            space: spec.domain.lower.iter().copied().zip(spec.domain.upper.iter().copied()).collect(),
            time: (0.0, final_time),
            temp: range(c.temp_range),
            conc: range(c.conc_range),
        };
        Ok(RunPlan {
            output: self.output_paths(base)?,
            spec,
            stepper,
            case,
            study,
            sample_box,
        })
    }

    fn coefficients(&self, dim: usize) -> Result<CoefficientSet, ConfigError> {
        let c = &self.coefficients;
        let mut set = CoefficientSet {
            alpha: opt_expr("coefficients.alpha", &c.alpha, "1")?,
            lambda11: opt_expr("coefficients.lambda11", &c.lambda11, "1")?,
            lambda12: opt_expr("coefficients.lambda12", &c.lambda12, "0")?,
            lambda21: opt_expr("coefficients.lambda21", &c.lambda21, "0")?,
            lambda22: opt_expr("coefficients.lambda22", &c.lambda22, "1")?,
            gamma: c.gamma.unwrap_or(1.0),
            f: vec![Expr::zero(); dim],
        };
        match (&c.f, &c.buoyancy) {
            (Some(_), Some(_)) => return Err(invalid("[coefficients] give either f or buoyancy, not both")),
            (Some(f), None) => {
                if f.len() != dim {
                    return Err(invalid("coefficients.f needs one entry per dimension"));
                }
                set.f = f
                    .iter()
                    .enumerate()
                    .map(|(i, s)| expr(&format!("coefficients.f[{i}]"), s))
                    .collect::<Result<_, _>>()?;
            }
            (None, Some(b)) => {
                if b.g.len() != dim {
                    return Err(invalid("buoyancy.g needs one entry per dimension"));
                }
                if c.gamma.is_some() {
                    return Err(invalid("[coefficients] gamma is derived from buoyancy"));
                }
                let force = boussinesq_f(b.beta_t, b.beta_c, b.rho0, &b.g);
                set.f = force.normalized();
                set.gamma = if force.gamma > 0.0 { force.gamma } else { 1.0 };
            }
            (None, None) => {}
        }
        Ok(set)
    }

    fn reject_derived_fields(&self) -> Result<(), ConfigError> {
        let b = &self.boundary;
        let clashes = [
            ("boundary.theta", b.theta.is_some()),
            ("boundary.psi", b.psi.is_some()),
            ("boundary.theta_flux", b.theta_flux.is_some()),
            ("boundary.psi_flux", b.psi_flux.is_some()),
            ("boundary.normal_velocity", b.normal_velocity.is_some()),
            ("boundary.pressure", b.pressure.is_some()),
            ("boundary.dirichlet", b.dirichlet.is_some()),
            ("sources.h1", self.sources.h1.is_some()),
            ("sources.h2", self.sources.h2.is_some()),
            ("initial.u", self.initial.u.is_some()),
            ("initial.theta", self.initial.theta.is_some()),
            ("initial.psi", self.initial.psi.is_some()),
            ("coefficients.f", self.coefficients.f.is_some()),
            ("coefficients.buoyancy", self.coefficients.buoyancy.is_some()),
        ];
        match clashes.iter().find(|(_, set)| *set) {
            Some((name, _)) => Err(invalid(format!("{name} is derived from [sources.exact] and must not be set"))),
            None => Ok(()),
        }
    }

    fn study_plan(&self, s: &StudySection, spec: &ProblemSpec, has_exact: bool) -> Result<StudyPlan, ConfigError> {
        if !has_exact {
            return Err(invalid("[study] needs a manufactured solution in [sources.exact]"));
        }
        let final_time = self
            .time
            .final_time()
            .ok_or_else(|| invalid("[study] needs [time] final_time"))?;
        match s.kind.as_str() {
            "temporal" => {
                let dts = s.dts.clone().ok_or_else(|| invalid("temporal [study] needs dts"))?;
                if dts.is_empty() || dts.iter().any(|&v| !(v > 0.0)) {
                    return Err(invalid("[study] dts must be positive"));
                }
                if s.degrees.is_some() {
                    return Err(invalid("temporal [study] takes dts, not degrees"));
                }
                Ok(StudyPlan::Temporal {
                    degree: spec.domain.degree,
                    dts,
                    final_time,
                })
            }
            "spatial" => {
                let degrees = s.degrees.clone().ok_or_else(|| invalid("spatial [study] needs degrees"))?;
                if degrees.is_empty() || degrees.contains(&0) {
                    return Err(invalid("[study] degrees must be positive"));
                }
                if s.dts.is_some() {
                    return Err(invalid("spatial [study] takes degrees, not dts"));
                }
                Ok(StudyPlan::Spatial {
                    degrees,
                    dt: spec.partition.step(1),
                    final_time,
                })
            }
            other => Err(invalid(format!("unknown study kind '{other}'"))),
        }
    }

    fn output_paths(&self, base: &Path) -> Result<OutputPaths, ConfigError> {
        let o = &self.output;
        let dir = o.directory.clone().unwrap_or_else(|| PathBuf::from("."));
        let directory = if dir.is_absolute() { dir } else { base.join(dir) };
        let verbosity = match o.verbosity.as_deref().unwrap_or("warn") {
            "off" => log::LevelFilter::Off,
            "error" => log::LevelFilter::Error,
            "warn" => log::LevelFilter::Warn,
            "info" => log::LevelFilter::Info,
            "debug" => log::LevelFilter::Debug,
            "trace" => log::LevelFilter::Trace,
            other => return Err(invalid(format!("unknown verbosity '{other}'"))),
        };
        Ok(OutputPaths {
            summary: directory.join(o.summary.as_deref().unwrap_or("summary.csv")),
            log: directory.join(o.log.as_deref().unwrap_or("run_log.csv")),
            study: directory.join(o.study.as_deref().unwrap_or("study.csv")),
            directory,
            verbosity,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[domain]
dim = 2
degree = 4

[time]
final_time = 1.0
steps = 4
"#;

    #[test]
    fn minimal_config_defaults() {
        let plan = RunConfig::from_toml(MINIMAL).unwrap().plan(Path::new("/tmp")).unwrap();
        assert_eq!(plan.spec.domain.lower, vec![-1.0, -1.0]);
        assert_eq!(plan.spec.boundary.dirichlet, FaceId::all(2));
        assert_eq!(plan.spec.partition.steps(), 4);
        assert_eq!(plan.output.summary, PathBuf::from("/tmp/./summary.csv"));
        assert!(plan.case.is_none());
    }

    #[test]
    fn unknown_keys_rejected() {
        for extra in ["[domain2]\nx = 1\n", "[solver]\ngmres_tolerance = 1e-8\n"] {
            let text = format!("{MINIMAL}{extra}");
            assert!(matches!(RunConfig::from_toml(&text), Err(ConfigError::Toml(_))), "{extra}");
        }
        let text = MINIMAL.replace("degree = 4", "degree = 4\ncolour = 1");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn bad_expression_names_field() {
        let text = format!("{MINIMAL}[coefficients]\nalpha = \"sin(\"\n");
        let err = RunConfig::from_toml(&text).unwrap().plan(Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("coefficients.alpha"), "{err}");
    }

    #[test]
    fn time_section_variants() {
        let t = |s: &str| -> Result<TimePartition, ConfigError> {
            toml::from_str::<TimeSection>(s).map_err(ConfigError::from)?.partition()
        };
        assert_eq!(t("final_time = 1.0\ndt = 0.25").unwrap().steps(), 4);
        assert_eq!(t("knots = [0.0, 0.5, 2.0]").unwrap().final_time(), 2.0);
        assert!(t("final_time = 1.0").is_err());
        assert!(t("final_time = 1.0\ndt = 0.25\nsteps = 4").is_err());
        assert!(t("final_time = 3.0\nknots = [0.0, 1.0]").is_err());
    }

    #[test]
    fn exact_section_derives_data_and_rejects_overrides() {
        let base = r#"
[domain]
dim = 2
degree = 6
[time]
final_time = 0.2
dt = 0.1
[sources.exact]
u = ["t*y", "-t*x"]
p = "x*y"
theta = "t*x"
psi = "y^2"
"#;
        let plan = RunConfig::from_toml(base).unwrap().plan(Path::new(".")).unwrap();
        assert!(plan.case.is_some());
        assert!(plan.spec.boundary.pressure.is_some());
        let clash = format!("{base}[initial]\ntheta = \"0\"\n");
        let err = RunConfig::from_toml(&clash).unwrap().plan(Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("initial.theta"), "{err}");
    }

    #[test]
    fn per_face_data() {
        let text = format!(
            "{MINIMAL}[boundary]\nneumann = [\"x+\"]\ntheta_flux = {{ default = \"0\", \"x+\" = \"2*y\" }}\n"
        );
        let plan = RunConfig::from_toml(&text).unwrap().plan(Path::new(".")).unwrap();
        let b = &plan.spec.boundary;
        assert_eq!(b.dirichlet.len(), 3);
        assert_eq!(b.theta_flux.faces.len(), 1);
        let bad = format!("{MINIMAL}[boundary]\nneumann = [\"z+\"]\n");
        assert!(RunConfig::from_toml(&bad).unwrap().plan(Path::new(".")).is_err());
    }

    #[test]
    fn buoyancy_sets_gamma() {
        let text = format!(
            "{MINIMAL}[coefficients]\nbuoyancy = {{ beta_t = 0.5, beta_c = 0.25, rho0 = 2.0, g = [0.0, -1.0] }}\n"
        );
        let plan = RunConfig::from_toml(&text).unwrap().plan(Path::new(".")).unwrap();
        assert!((plan.spec.coefficients.gamma - 2.0 * 0.5 * 2f64.sqrt()).abs() < 1e-15);
    }
}
