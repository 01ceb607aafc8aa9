//! Optimal ammunition allocation for the continuous Bomber Problem.
//!
//! - [`model`]: survival kernel, spend-it-all boundary, regions, and the exact
//!   allocation `K` and survival probability `P` where they are known.
//! - [`solver`]: grid solution of the defining integral equation everywhere.
//! - [`verify`]: residuals, boundary detection and property scans tying the two
//!   together.
//! - [`montecarlo`]: mission simulation under arbitrary allocation policies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod interp;
pub mod model;
pub mod montecarlo;
pub mod optimize;
pub mod quadrature;
pub mod solver;
pub mod verify;

pub use error::{BomberError, Result};
pub use interp::Interpolation;
pub use model::{
    boundary_f, boundary_f_inverse, classify_region, closed_form_k, closed_form_p, g1, q2,
    q_integrand, survival_kernel, unimodal_argmax, ModelParams, Region, State,
};
pub use montecarlo::{estimate_survival, simulate_mission, Policy, SimConfig, SimResult};
pub use quadrature::QuadratureConfig;
pub use solver::{solve_integral_equation, GridSpec, Scheme, SolutionGrid};
pub use verify::{
    boundary_detect, check_interior_derivative_positive, check_monotone_k_in_x, check_u_zero_limit,
    residual_check, run_verification, VerificationReport, VerifyOptions,
};
