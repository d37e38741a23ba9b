//! Subcommands behind the `solve` binary.
//!
//! Exit statuses: 0 success, 2 configuration error, 3 numerical failure.

mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

pub use config::{ConfigError, FaceDataText, OutputPaths, RunConfig, RunPlan, StudyPlan};

use crate::mms::{
    snapshot_errors, spatial_study, temporal_study, write_spatial_csv, write_temporal_csv, ErrorRecord, MmsCase,
    MmsError, Study,
};
use crate::model::validate_coefficients;
use crate::space::{h1_norm, l2_norm};
use crate::stepper::{fmt_f64, run, write_run_log, RunResult, StepError, StepperConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Sample count used by `validate`.
pub const VALIDATION_SAMPLES: usize = 4096;

/// Time steps of the temporal study.
pub const TABLE1_DTS: [f64; 5] = [0.1, 0.05, 0.025, 0.0125, 0.00625];
/// Polynomial degrees of the spatial study.
pub const SPECTRAL_DEGREES: [usize; 11] = [5, 7, 9, 11, 13, 15, 17, 19, 21, 23, 25];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("writing {path}: {source}")]
    Output { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Numerical(#[from] MmsError),
    #[error("invalid SOLVER_THREADS value '{0}'")]
    Threads(String),
}

impl From<StepError> for CliError {
    fn from(e: StepError) -> Self {
        CliError::Numerical(MmsError::Step(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output { .. } | CliError::Threads(_) => EXIT_CONFIG,
            CliError::Numerical(MmsError::InvalidCase(_)) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

/// Thread cap from SOLVER_THREADS; `None` when unset.
pub fn solver_threads() -> Result<Option<usize>, CliError> {
    match std::env::var("SOLVER_THREADS") {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Threads(s)),
        },
    }
}

/// Formats with 4 significant digits for console tables.
pub fn sig4(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-3..6).contains(&mag) {
        format!("{v:.3e}")
    } else {
        format!("{v:.*}", (3 - mag).max(0) as usize)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    let out_err = |source| CliError::Output {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(out_err)?;
    }
    File::create(path).map(BufWriter::new).map_err(out_err)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
    let mut w = create(path)?;
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|source| CliError::Output {
            path: path.to_path_buf(),
            source,
        })
}

fn load(path: &Path) -> Result<RunPlan, CliError> {
    let cfg = RunConfig::from_path(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(cfg.plan(base)?)
}

/// Per-snapshot summary: norms of the state and, with a manufactured
/// solution, the errors against it.
pub fn write_summary(result: &RunResult, case: Option<&MmsCase>, mut out: impl Write) -> io::Result<()> {
    write!(out, "m,t_m,u_L2,p_H1,theta_H1,psi_H1,picard_converged")?;
    if case.is_some() {
        write!(out, ",errU_L2,errP_H1,errT_H1,errC_H1,E_total")?;
    }
    writeln!(out)?;
    for s in &result.snapshots {
        write!(
            out,
            "{},{},{},{},{},{},{}",
            s.step,
            fmt_f64(s.time),
            fmt_f64(l2_norm(&s.u)),
            fmt_f64(h1_norm(&s.p)),
            fmt_f64(h1_norm(&s.theta)),
            fmt_f64(h1_norm(&s.psi)),
            s.step == 0 || s.diagnostics.picard_converged
        )?;
        if let Some(case) = case {
            let e = snapshot_errors(s, &case.exact, s.time);
            write!(
                out,
                ",{},{},{},{},{}",
                fmt_f64(e.err_u_l2),
                fmt_f64(e.err_p_h1),
                fmt_f64(e.err_t_h1),
                fmt_f64(e.err_c_h1),
                fmt_f64(e.total)
            )?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Console rendering of a study: one row per run, 4 significant digits.
pub fn format_study(study: &Study, param: &str, with_rates: bool) -> String {
    let mut s = format!(
        "{:>10} {:>11} {:>11} {:>11} {:>11} {:>11}",
        param, "errU_L2", "errP_H1", "errT_H1", "errC_H1", "E_total"
    );
    if with_rates {
        s.push_str(&format!(" {:>8}", "rate"));
    }
    s.push('\n');
    for (row, r) in study.rows.iter().zip(study.rates()) {
        let e: &ErrorRecord = &row.record;
        let p = if param == "N" {
            format!("{}", e.param as usize)
        } else {
            sig4(e.param)
        };
        s.push_str(&format!(
            "{:>10} {:>11} {:>11} {:>11} {:>11} {:>11}",
            p,
            sig4(e.err_u_l2),
            sig4(e.err_p_h1),
            sig4(e.err_t_h1),
            sig4(e.err_c_h1),
            sig4(e.total)
        ));
        if with_rates {
            s.push_str(&format!(" {:>8}", r.map(sig4).unwrap_or_else(|| "-".into())));
        }
        if !row.picard_converged {
            s.push_str("  (Picard not converged)");
        }
        s.push('\n');
    }
    s
}

fn run_study(plan: &StudyPlan, case: &MmsCase, cfg: &StepperConfig, out: &Path) -> Result<(), CliError> {
    let threads = solver_threads()?;
    match plan {
        StudyPlan::Temporal { degree, dts, final_time } => {
            let study = temporal_study(case, *degree, dts, *final_time, cfg, threads)?;
            write_file(out, |w| write_temporal_csv(&study, w))?;
            print!("{}", format_study(&study, "dt", true));
        }
        StudyPlan::Spatial { degrees, dt, final_time } => {
            let study = spatial_study(case, degrees, *dt, *final_time, cfg, threads)?;
            write_file(out, |w| write_spatial_csv(&study, w))?;
            print!("{}", format_study(&study, "N", false));
        }
    }
    Ok(())
}

/// `solve run <cfg>`.
pub fn cmd_run(path: &Path) -> Result<(), CliError> {
    let plan = load(path)?;
    if std::env::var_os("RUST_LOG").is_none() {
        log::set_max_level(plan.output.verbosity);
    }
    if let (Some(study), Some(case)) = (&plan.study, &plan.case) {
        return run_study(study, case, &plan.stepper, &plan.output.study);
    }
    let result = run(&plan.spec, &plan.stepper)?;
    write_file(&plan.output.summary, |w| write_summary(&result, plan.case.as_ref(), w))?;
    write_file(&plan.output.log, |w| write_run_log(&result, w))?;
    let last = result.last();
    println!(
        "{} steps to t = {}; Picard converged at every step: {}",
        result.snapshots.len() - 1,
        sig4(last.time),
        result.all_picard_converged()
    );
    if let Some(case) = &plan.case {
        let e = snapshot_errors(last, &case.exact, last.time);
        println!("final error E = {}", sig4(e.total));
    }
    println!("wrote {} and {}", plan.output.summary.display(), plan.output.log.display());
    Ok(())
}

fn out_dir(dir: Option<&Path>) -> PathBuf {
    dir.map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

/// `solve table1 [--out dir]`: temporal study of the 3D case at N = 5.
pub fn cmd_table1(dir: Option<&Path>) -> Result<Study, CliError> {
    let threads = solver_threads()?;
    let study = temporal_study(
        &MmsCase::temporal_3d(),
        5,
        &TABLE1_DTS,
        1.0,
        &StepperConfig::default(),
        threads,
    )?;
    let path = out_dir(dir).join("table1.csv");
    write_file(&path, |w| write_temporal_csv(&study, w))?;
    print!("{}", format_study(&study, "dt", true));
    println!("wrote {}", path.display());
    Ok(study)
}

/// `solve spectral [--out dir]`: spatial study of the 2D case, δt = 0.1.
pub fn cmd_spectral(dir: Option<&Path>) -> Result<Study, CliError> {
    let threads = solver_threads()?;
    let study = spatial_study(
        &MmsCase::spatial_2d(),
        &SPECTRAL_DEGREES,
        0.1,
        1.0,
        &StepperConfig::default(),
        threads,
    )?;
    let path = out_dir(dir).join("spectral.csv");
    write_file(&path, |w| write_spatial_csv(&study, w))?;
    print!("{}", format_study(&study, "N", false));
    println!("wrote {}", path.display());
    Ok(study)
}

/// `solve validate <cfg>`: samples the coefficients and prints the report.
/// Warnings do not change the exit status.
pub fn cmd_validate(path: &Path) -> Result<(), CliError> {
    let plan = load(path)?;
    let report = validate_coefficients(&plan.spec.coefficients, &plan.sample_box, VALIDATION_SAMPLES)
        .map_err(ConfigError::from)?;
    println!("samples    {}", report.samples);
    println!("lambda_1   {}", sig4(report.lambda_min));
    println!("lambda_2   {}", sig4(report.lambda_max));
    println!("beta       {}", sig4(report.beta));
    println!("alpha_min  {}", sig4(report.alpha_min));
    for b in &report.per_coefficient {
        println!("{:<10} [{}, {}]", b.name, sig4(b.min), sig4(b.max));
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig4_formats() {
        assert_eq!(sig4(0.0867), "0.08670");
        assert_eq!(sig4(0.9655), "0.9655");
        assert_eq!(sig4(1.0), "1.000");
        assert_eq!(sig4(12345.6), "12346");
        assert_eq!(sig4(2.5e-7), "2.500e-7");
        assert_eq!(sig4(0.0), "0");
    }

    #[test]
    fn exit_codes() {
        let cfg = CliError::Config(ConfigError::Invalid("x".into()));
        assert_eq!(cfg.exit_code(), EXIT_CONFIG);
        let num = CliError::from(StepError::Solve {
            step: 1,
            time: 0.1,
            source: crate::assembly::AssemblyError::BadTimeStep(0.0),
        });
        assert_eq!(num.exit_code(), EXIT_NUMERICAL);
    }
}
