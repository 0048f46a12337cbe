//! Data-driven identification of a two-pool thermal process: a plant
//! simulator, subspace state-space and NLARX estimators, and the
//! horizon-prediction criteria used to compare them.

pub mod data;
pub mod simulator;
pub mod linid;
pub mod matrix_io;
pub mod nlarx;
pub mod eval;
pub mod hyperopt;
