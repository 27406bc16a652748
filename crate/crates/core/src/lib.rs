//! Simulation and verification of measurement-based feedback stabilization
//! of a photon-number state in a cavity.
//!
//! The closed loop is a discrete-time Markov chain on the unit sphere of a
//! truncated Fock space: each step performs a two-outcome quantum
//! non-demolition measurement and then a displacement chosen to minimize a
//! strict Lyapunov function.

pub mod cli;
pub mod config;
pub mod controller;
pub mod displacement;
pub mod ensemble;
pub mod error;
pub mod fock;
pub mod lyapunov;
pub mod markov;
pub mod rng;
pub mod verify;

pub use config::{DeltaSpec, InitialState, RunConfig};
pub use controller::{choose_alpha, landscape, ControlParams};
pub use displacement::{displacement_apply, displacement_oracle_entry, DisplacementTable};
pub use ensemble::{
    doob_audit, fock_concentration_audit, run_ensemble, EnsembleConfig, EnsembleResult, EnsembleStats,
};
pub use error::{Error, Result};
pub use fock::{
    apply_ladder, check_a1, coherent_state, collapse, fock_state, measurement_values, Ladder,
    Measurement, ModelParams, Outcome, StateVector,
};
pub use lyapunov::{
    expected_halfstep_value, f1_slope, f2_curvature, k2_closed_form, lyapunov_value, sigma_table,
    LyapunovBreakdown, LyapunovParams,
};
pub use markov::{expected_next_value, markov_step, simulate_trajectory, FeedbackSystem, StepRecord};
pub use rng::RngStream;
pub use verify::{run_suite, Check, SuiteOptions, VerifyReport};
