//! Simulation and verification of explicit lower bounds on the time decay of
//! nonlinear Schrödinger flows over expanding balls.
//!
//! The crate is organized around the pipeline it runs:
//!
//! - [`grid`]: lattices, domain masks, regions and the discrete norms;
//! - [`nonlin`]: the nonlinearity catalog, energies and the gauge diagnostic;
//! - [`prop`]: free, split-step and implicit-midpoint time evolution;
//! - [`bounds`]: cone speeds, decay floors, the tent-cutoff localized-mass
//!   inequality, the bounded-domain floor and windowed spectral masses;
//! - [`harness`]: config-driven experiments with CSV/JSON reports;
//! - [`oracle`]: independent quadrature and direct-sum references backing the
//!   test constants;
//! - [`io`]: the flat binary field-file format.

// negated comparisons like `!(x > 0.0)` are NaN-rejecting on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod grid;
pub mod harness;
pub mod io;
pub mod nonlin;
pub mod oracle;
pub mod prop;
pub mod spectral;

pub use bounds::{
    bounded_domain_floor, cone_norm, decay_floor, light_cone_speed, light_cone_speed_from_energy,
    spectral_window_mass, tent_mass_residual, verify_decay_bound, windowed_l2, BoundParams,
    BoundReport, ConeSpeed, LpExp, TentCutoff, Verdict,
};
pub use error::{Error, Result};
pub use grid::{
    ball_volume, grad_l2_norm, l2_norm, lp_norm, BoundaryKind, Field, Grid, RealField, Region,
    RegionKind,
};
pub use harness::{run_experiment, sweep, ExperimentConfig, RunOutcome, RunReport};
pub use nonlin::{HartreeKernel, NonlinearitySpec};
pub use prop::{
    evolve, exact_free_step, gaussian_exact, midpoint_step, strang_step, Scheme, StepperConfig,
    TrajectoryRecord,
};
