//! Cournot equilibria for single-bus electricity markets whose participants
//! are prosumers: each one sells a strategic quantity `x_s` while buying an
//! exogenous quantity `x_b` at the same clearing price.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is a pure
//! function of its inputs; file formats, the experiment runner and the CLI
//! live in the `prosumer-cournot-sim` companion crate.
//!
//! Prosumer indices are zero-based throughout.
#![no_std]

extern crate alloc;

pub mod analysis;
pub mod equilibrium;
mod error;
pub mod linalg;
pub mod market;
pub mod scenarios;

pub use analysis::{
    classify_two_prosumer, compare_modes, duality_delta, indifference_line_points,
    indifference_threshold, DualityDelta, IndifferenceClassification, LinePoint, ModeComparison,
    Side,
};
pub use equilibrium::{
    assemble_foc_system, best_response_dynamics, deviation_check, foc_residual,
    solve_closed_form_2, solve_n, solve_nonnegative, Converged, DynamicsConfig, EquilibriumResult,
    Flags, VerificationReport,
};
pub use error::Error;
pub use market::{
    best_response, clearing_price, marginal_cost, payoff, producer_cost, MarketInstance, Mode,
    ProsumerParams,
};
pub use scenarios::{
    builtin_design, sample_instance, substream, BlockSpec, DesignName, ExperimentDesign,
    InstanceSlot, ProsumerSpec, RangeSpec, Substream,
};

pub type Result<T, E = Error> = core::result::Result<T, E>;
