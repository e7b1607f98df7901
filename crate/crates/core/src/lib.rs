pub mod analysis;
pub mod environments;
pub mod error;
pub mod learners;
pub mod losses;
pub mod numerics;
pub mod online_il;
pub mod policies;

pub use error::{Error, Result};
