pub mod annuity;
pub mod convergence;
pub mod error;
pub mod model;
pub mod montecarlo;
pub mod numerics;
pub mod pension;
pub mod scaled;
pub mod wdt;

pub use error::{Error, Result};
pub use model::{crra_utility, ModelParams};
