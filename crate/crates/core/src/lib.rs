pub mod analysis;
pub mod bench;
pub mod compare;
pub mod error;
pub mod layers;
pub mod model;
pub mod signal;
pub mod stream;

pub use error::{Error, Result};
