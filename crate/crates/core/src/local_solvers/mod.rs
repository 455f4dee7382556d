//! Exact proximal solvers for the three component classes.
//!
//! Each solver minimizes its component's share of the augmented Lagrangian
//! for fixed duals, per-constraint penalties and the values held by the other
//! side of every consensus pair. All three are pure functions.

pub mod branch;
pub mod bus;
pub mod generator;

pub use branch::{
    interior_point, solve_branch, solve_branch_detailed, BarrierSettings, BarrierStats, BranchError, BranchPrimal,
    BranchProxInput,
};
pub use bus::{solve_bus, BusEndTerm, BusError, BusGenTerm, BusProxInput, BusSolution};
pub use generator::{solve_generator, GenProxInput};
