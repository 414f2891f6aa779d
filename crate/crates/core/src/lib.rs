//! Simulation and data assimilation for the Lasry–Lions free-boundary
//! price formation model.
//!
//! The density of buyers (positive part) and vendors (negative part) is
//! evolved through the shifted-sum transformation to a heat equation. The
//! unknown density at the final measurement time is reconstructed from
//! price and transaction-rate observations by solving one regularised
//! boundary null-control problem per basis function and assembling the
//! duality identities.

pub mod adjoint;
pub mod assimilate;
pub mod control;
pub mod domainmap;
pub mod error;
pub mod experiments;
pub mod forward;
pub mod mesh;

pub use adjoint::{boundary_flux, solve_adjoint, solve_companion, AdjointTrajectory};
pub use assimilate::{
    duality_rhs, reconstruct_final_density, reconstruction_error, AssimilationConfig, AssimilationMode,
    BasisDiagnostics, ReconstructionResult, Region,
};
pub use control::{armijo_step, gradient, objective, solve_null_control, ControlSolution, OptimizerSettings};
pub use domainmap::{coefficients, map_to_reference, price_derivative, weighted_inner_product, MapCoefficients, Side};
pub use error::{Error, Result};
pub use experiments::{perturb_price, predict_price, stability_sweep, PerturbationMode, StabilityRow};
pub use forward::{
    back_transform, run_forward, stationary_price, step_heat, transaction_rate, transform, BoundaryMode, ForwardResult,
    PriceSeries, TransformSpec,
};
pub use mesh::{
    assemble_mass_matrix, build_uniform_grid, interpolate, solve_tridiagonal, zero_crossing, Grid, NodalField,
    TridiagonalSystem,
};
