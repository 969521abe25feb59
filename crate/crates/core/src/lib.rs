//! Welfare evaluation for prediction-based allocation programs, and
//! comparison of prediction improvements against other policy levers
//! (capacity, benefit size, misallocation harm, data coverage).

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compare;
pub mod config;
pub mod error;
pub mod levers;
pub mod policy;
pub mod population;
pub mod predicate;
pub mod report;
pub mod rng;
pub mod synth;
pub mod utility;

pub use error::{Error, ErrorClass, Result};
pub use population::{Direction, Mask, Population};
pub use utility::UtilitySpec;

/// Engine version embedded in result documents and cache keys.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
