//! Legendre spectral solver for unsteady Darcy flow coupled with heat and
//! mass transfer (Soret and Dufour cross-diffusion), with a manufactured
//! solution toolkit and convergence studies.

pub mod assembly;
pub mod cli;

pub mod expr;
pub mod krylov;
pub mod mms;
pub mod model;
pub mod quad;
pub mod space;
pub mod stepper;

pub use assembly::{AssemblyError, Discretization, InnerSolvers};
pub use expr::{parse, Expr, Var};
pub use mms::{rate, ErrorRecord, MmsCase};
pub use model::{CoefficientSet, ProblemSpec, StateSnapshot};
pub use quad::{FaceId, Lgl1D, TensorGrid};
pub use space::NodalField;
pub use stepper::{run, RunResult, StepperConfig, TimePartition};
