pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod inference;
pub mod numcore;
pub mod objective;
pub mod oracle;
pub mod rng;
pub mod trainer;
pub mod validation;

pub use error::{Error, Result};
