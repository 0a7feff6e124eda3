//! Valuation of proof-of-work mining hardware as a bundle of options.
//!
//! Each turn an ASIC may be switched on, paying for electricity in exchange
//! for a share of the block reward. That right is a European call on the
//! coin's exchange rate; the hardware is the mortality-weighted sum of those
//! calls. The crate prices single opportunities on a binomial lattice,
//! aggregates them into whole-unit values, builds coin-and-bond portfolios
//! that replicate them, and backtests those portfolios on market history.

pub mod asic;
pub mod calibration;
pub mod data_io;
pub mod error;
pub mod lattice;
pub mod model;
pub mod replication;

pub use asic::{asic_value, reception_delay_loss, AsicQuote, SweepResult};
pub use calibration::CalibrationContext;
pub use data_io::{MarketHistory, RunConfig};
pub use error::{Error, Result};
pub use lattice::{closed_form_value, induction_value, opportunity_value, OpportunityQuote};
pub use model::{
    AsicSpec, ElectricityPrice, HashRateModel, LatticeState, MarketModel, MortalityModel,
    OpportunityTerms, RandomWalkParams, RewardSchedule, ValidationMode, WalkViolation,
};
pub use replication::{BacktestReport, ImitatingWeights, ReplicationPlan};
