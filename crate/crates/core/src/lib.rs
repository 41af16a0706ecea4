//! Conservative/dissipative midpoint-family time integration for nonlinear
//! mechanical systems.
//!
//! The stepping is built on discrete derivatives: algorithmic forces that
//! satisfy the directionality condition ⟨𝖿, Δq⟩ = ΔV + D̃_f exactly, and an
//! algorithmic velocity matched to a velocity-level dissipation function.
//! Together they give an exact per-step energy balance
//! ΔT + ΔV = W_ext − D̃_f − D̃_s, with conservation recovered at zero
//! dissipation and exact momentum conservation in the G-equivariant
//! variant.

pub mod dgrad;
pub mod diagnostics;
pub mod integrator;
pub mod linalg;
pub mod model;
pub mod systems;

pub use dgrad::{
    algorithmic_force, algorithmic_velocity, combined_force, conservation_fn, conservative_force,
    dissipation_fn_f, dissipation_fn_s, gonzalez_force, g_equivariant_force, velocity_beta,
    DegeneracyMode, DegeneracyPolicy, DissipationConfig, DgradError, ForceEval, ForceScheme,
    ForceVariant,
};
pub use diagnostics::{
    energy_balance_residual, momenta, quotient_i, quotient_ii, DiagnosticsError, MomentaSample,
    QuotientSeries,
};
pub use integrator::{
    integrate, residual, step, IntegratorError, JacobianMode, SolverConfig, StepReport, Trajectory,
};
pub use linalg::{LinalgError, Matrix, SymMatrix, Vector};
pub use model::{
    kinetic_energy, validate_system, LoadSchedule, ModelError, State, SymmetryData, SystemModel,
};
pub use systems::{
    make_example1, make_example2, make_spring_demo, Benchmark, LinearOscillator, Spring,
    SpringNetwork3D, SystemsError, TwoMassNonPolynomial, TwoMassPolynomial,
};
