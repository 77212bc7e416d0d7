pub mod catalog;
pub mod dynamics;
pub mod error;
pub mod locfn;
pub mod numerics;
pub mod quantum;
pub mod sojourn;

pub use error::{CoreError, Result};
