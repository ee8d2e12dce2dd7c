//! Exact solvers for two-stage stochastic planning and cumulative scheduling.

pub mod bench;
pub mod cumcp;
pub mod cuts;
pub mod drivers;
pub mod instance;
pub mod lp;
pub mod milp;
pub mod timeindexed;
