//! Three-tier spectrum market: a spectrum owner leases bandwidth to a service
//! provider, which sells access to power-controlled end users.
//!
//! Layers, bottom up: [`usergame`] (users' power Nash game), [`chain`]
//! (provider and owner reactions, full Stackelberg solve) and [`oracle`]
//! (brute-force re-derivation used for verification).

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod chain;
pub mod cli;
pub mod error;
pub mod market;
pub mod numeric;
pub mod oracle;
pub mod special;
pub mod usergame;

pub use chain::{
    coefficients, owner_best_tariff, provider_best_bandwidth, ratio_report, solve_equilibrium,
    Coefficients, HighSnrRoot, OwnerDecision, ProviderDecision, RatioReport, SolveMethod,
};
pub use error::{Error, Result};
pub use market::{
    validate, EquilibriumSolution, GridSpec, MarketParams, Method, Model, Regime, Scenario, Scheme,
    SweepSpec, SweepVar, ValidatedInstance,
};
pub use oracle::{deviation_check, grid_provider, grid_solve, DeviationReport};
pub use special::{lambert_w0, lambert_wm1, LambertResult};
