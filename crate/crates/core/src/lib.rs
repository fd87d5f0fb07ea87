//! Pseudo-spectral Galerkin simulator and large-deviation workbench for the
//! stochastic generalized Ginzburg-Landau equation on a rectangle with
//! Dirichlet boundary conditions and multiplicative Poisson jump noise.
// Negated comparisons below are deliberate: they reject NaN with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod params;
pub mod spectral;

pub use error::{Error, Result};
pub use params::Parameters;
pub use spectral::{
    apply_a, apply_b, apply_f, compute_norms, InitialCondition, ModeEntry, NormReport,
    SpectralBasis, StateField,
};
pub mod harness;
pub mod integrator;
pub mod jump;
pub mod rate;
pub mod rng;
pub mod skeleton;
pub mod spde;
pub mod verify;

pub use jump::{
    compensator_drift, sample_controlled_prm, sample_prm, validate_model, Control, JumpEvent,
    JumpModel, JumpSample, Mark, NoiseScale,
};
pub use integrator::{EventRecord, SolverOptions, TimeGrid, Trajectory};
pub use skeleton::{galerkin_refine, skeleton_endpoint, solve_skeleton};
pub use spde::{
    solve_controlled_spde, solve_controlled_spde_with, solve_spde, solve_spde_with_sample,
    sup_distance_sq, NoiseInput,
};
pub use rate::{
    cost, ell, estimate_rate, estimate_rate_from, in_level_set, EndpointSpec, OptConfig, RateResult,
};
pub use harness::{
    convergence_sweep, convergence_sweep_resumable, energy_audit, fit_constants,
    random_level_set_control, tail_probability, AuditConfig, AuditDrift, AuditReport,
    FittedConstants, SweepCell, SweepReport, TailCell, TailReport,
};
pub use config::{parse_config, parse_config_str, LoadedConfig, RunConfig};
pub use output::Provenance;
pub use verify::{calibrate_constants, run_audit, verify, AuditCase, Check};
