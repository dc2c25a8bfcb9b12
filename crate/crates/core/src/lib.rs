pub mod cli;
pub mod error;
pub mod levi;
pub mod linalg;
pub mod model;
pub mod polystability;
pub mod yang_mills;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, Tolerances};
