//! Finite-difference simulator for a four-species normal / tumor / immune /
//! drug reaction-diffusion-advection model on a uniform 2-D grid.
//!
//! Time integration treats transport with Crank-Nicolson and reactions with
//! Backward Euler; see [`stepper`].

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod krylov;
pub mod model;
pub mod scenario;
pub mod stencil;
pub mod stepper;
pub mod verification;

pub use error::{Error, Result};
pub use grid::{build_initial_state, ghost_value, integrate, Field, GridSpec, Species, StateSnapshot};
pub use model::{
    dose_rate, reaction_jacobian, reactions, smooth_gate, DosingSchedule, Envelope, ModelReactions,
    ParameterSet, ReactionSource, Scheme,
};
pub use scenario::{run_scenario, ScenarioConfig};
pub use stencil::{apply_laplacian, apply_upwind_advection, cn_system_apply, courant_number, AdvectionVector};
pub use stepper::{cnbe_step, run, solve_cn_linear, StepReport, StepperConfig};
