//! Simulation and minimum-energy state estimation for discrete-time
//! fractional-order dynamical networks.
//!
//! The pipeline is: describe a network as a [`FodnModel`], expand it to the
//! infinite-lag form with [`expand_model`], truncate the memory to `v` lags
//! with [`build_v_approximation`], and run the recursive filter [`me_run`] on
//! the resulting lifted system. [`analysis`] evaluates the stability
//! assumptions and the resulting error bounds.

pub mod analysis;
pub mod error;
pub mod estimator;
pub mod fractional;
pub mod io;
pub mod linalg;
pub mod model;
pub mod schedule;
pub mod simulator;

pub use analysis::{
    analyze, check_assumptions, controllability_gramian, covariance_bounds, iss_constants, observability_gramian,
    state_transition, AnalysisReport, AssumptionReport, CovarianceBounds, GuaranteeBundle,
};
pub use error::{Error, ErrorKind, Result};
pub use estimator::{batch_wls_oracle, me_run, me_step, BatchSolution, EstimatorConfig, EstimatorState};
pub use fractional::{gl_coefficients, gl_difference, CoefficientCache, GlCoefficients};
pub use model::{
    build_v_approximation, expand_model, residual_r, Dims, ExpandedModel, FodnModel, FractionalTerm, LiftLayout,
    NoiseBounds, VApprox,
};
pub use schedule::Schedule;
pub use simulator::{gen_bounded_noise, simulate_exact, simulate_vapprox, synth_eeg_scenario, LiftedTrajectory, Trajectory};
