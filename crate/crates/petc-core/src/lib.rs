//! Design and verification toolkit for periodic event-triggered control
//! (PETC) of disturbed nonlinear systems.
//!
//! The crate computes admissible sampling periods and triggering functions
//! from closed-form inter-sample timing functions and LMI conditions, then
//! simulates the resulting impulsive closed loops (state feedback and
//! observer-based output feedback) and certifies the decay/jump inequalities
//! and triggering-frequency statistics empirically.
//!
//! Module map:
//! - [`timing`]: clock ODE, closed-form decay windows, parameter selection
//! - [`symmat`]: dense symmetric-matrix kernel (Jacobi eigensolver, cone
//!   projections, block assembly)
//! - [`iqc`]: incremental multiplier matrices and the quadratic constraint
//! - [`systems`]: plant/controller/observer models and closed-loop matrices
//! - [`lmi`]: affine matrix-inequality instances, verification, feasibility
//! - [`sim`]: impulsive closed-loop simulation, event triggering, Lyapunov
//!   monitoring and Monte-Carlo frequency statistics
//! - [`builtin`]: bundled demo systems used by the command-line front end

// `!(x > 0.0)` guards reject NaN along with nonpositive values; dense kernels
// index both triangles of symmetric storage.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod builtin;
pub mod iqc;
pub mod lmi;
pub mod sim;
pub mod symmat;
pub mod systems;
pub mod timing;
