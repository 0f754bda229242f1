//! Finite-horizon LQR for linear systems coupled over a finite-rank graphon.
//!
//! The coupling `A = sum_l lambda_l f_l f_l^T` splits the infinite-dimensional
//! problem into one auxiliary and `d` eigendirection scalar problems, so the
//! optimal law needs `d + 1` scalar Riccati solves ([`lqr::synthesize_gains`]).
//! Finite step networks are simulated in [`sim`] and checked against the
//! direct `n x n` matrix Riccati solution.
//!
//! The `parallel` feature (on by default) lets [`Exec::Parallel`] fan
//! independent solves and simulations out over rayon.

pub mod error;
pub mod exec;
pub mod graphon;
pub mod lqr;
pub mod ode;
pub mod poly;
pub mod riccati;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
pub use exec::Exec;
pub use graphon::{l2_distance, EigenFunction, EigenPair, FiniteRankGraphon, Kernel, Quadrature, StepGraphon};
pub use lqr::{
    control_centralized, control_localized, project_state, ratio_prediction, reconstruct_p, synthesize_gains,
    truncated_controller, Controller, ControllerMode, DecoupledController, EigenstateMode, GainSchedule, LqrProblem,
    RiccatiMethod,
};
pub use ode::TimeGrid;
pub use poly::CoeffPoly;
pub use riccati::{
    algebraic_root, solve_matrix_riccati, solve_riccati_closed_form, solve_riccati_explicit, solve_riccati_numeric,
    GainCurve, ScalarRiccatiSpec,
};
pub use scenario::{preset_example_vii, Scenario};
pub use sim::{build_step_system, evaluate_cost, oracle_compare, simulate, truncation_study, StepSystem, Trajectory};
