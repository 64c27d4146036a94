//! Mixed-state tomography by iterative eigenstate extraction with neural quantum states.

pub mod costs;
pub mod error;
pub mod figures;
pub mod json;
pub mod measurement;
pub mod nqs;
pub mod oracle;
pub mod quantum;
pub mod reconstructor;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
