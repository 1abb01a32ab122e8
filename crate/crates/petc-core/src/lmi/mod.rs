//! Matrix-inequality assembly, verification of candidate assignments, and a
//! small projection-based feasibility solver.

mod builders;
mod instance;
mod solver;

use thiserror::Error;

pub use builders::{
    build_gain_synthesis, build_linear_output_certificate, build_linear_state_certificate,
    build_output_certificate, build_output_coupling, build_state_certificate, refine_scalars,
    PD_FLOOR, SCALAR_FLOOR,
};
pub use instance::{
    Assignment, Domain, LmiBuilder, LmiInstance, VarKind, VarSpec, VerifyReport, VerifyStatus,
    DEFAULT_VERIFY_EPS_REL,
};
pub use solver::{solve_feasibility, FeasibilityResult, SolveOptions, SolveStatus};

#[derive(Debug, Error)]
pub enum LmiError {
    #[error("assignment is missing variable {0}")]
    MissingVariable(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("variable map for {0} is not linear (nonzero image of zero)")]
    NotLinear(String),
    #[error("plant has no output matrix C")]
    MissingOutput,
    #[error(transparent)]
    Mat(#[from] crate::symmat::MatError),
}
