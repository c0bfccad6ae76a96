//! Generalized replicator dynamics on the action space `[0, 1]` and the discounted mean-field
//! game whose myopic limit they are.
//!
//! The solvers are generic over the scalar type ([`Scalar`], implemented for `f32` and `f64`).
//! The aliases at the crate root fix the scalar to `f64`, with `F32` variants for the
//! single-precision build.

// `!(x > 0)` is the NaN-rejecting form used throughout parameter validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod grd;
pub mod grid;
pub mod mfg;
pub mod pairsum;
pub mod rates;
pub mod scalar;
pub mod utilities;

pub use error::{Error, Result};
pub use grd::{grd_solve, grd_solve_with, grd_step, grd_step_with, GrdStepper};
pub use grid::{initial_density, terminal_value, InitialKind, TerminalKind};
pub use mfg::{
    fp_forward, fp_forward_with, hjb_backward, hjb_backward_with, mfg_fixed_point,
    optimal_rate_matrix, stability_report, value_bound, FailureReason, SolveStatus,
};
pub use pairsum::{PairSumMode, PairSums};
pub use rates::{ExtendedReal, RateFamily};
pub use scalar::Scalar;
pub use utilities::{
    average_utility, energy_equilibrium_report, kernel_utility, make_energy_kernel,
    make_potential_kernel, utility_bound, CandidateKind, EquilibriumRegime, PotentialSign,
};

pub type TransitionRateSpec = rates::TransitionRateSpec<f64>;
pub type UtilityKernel = utilities::UtilityKernel<f64>;
pub type EnergyParams = utilities::EnergyParams<f64>;
pub type EquilibriumReport = utilities::EquilibriumReport<f64>;
pub type GridSpec = grid::GridSpec<f64>;
pub type DensityTrajectory = grid::DensityTrajectory<f64>;
pub type ValueTrajectory = grid::ValueTrajectory<f64>;
pub type FixedPointConfig = mfg::FixedPointConfig<f64>;
pub type MfgSolution = mfg::MfgSolution<f64>;
pub type StabilityReport = mfg::StabilityReport<f64>;
pub type SweepReport = analysis::SweepReport<f64>;
pub type SweepRow = analysis::SweepRow<f64>;
pub type Scenario = analysis::Scenario<f64>;

pub type TransitionRateSpecF32 = rates::TransitionRateSpec<f32>;
pub type UtilityKernelF32 = utilities::UtilityKernel<f32>;
pub type GridSpecF32 = grid::GridSpec<f32>;
pub type FixedPointConfigF32 = mfg::FixedPointConfig<f32>;
pub type MfgSolutionF32 = mfg::MfgSolution<f32>;
