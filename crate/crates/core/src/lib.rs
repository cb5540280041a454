pub mod attitude;
pub mod bundle;
pub mod cli;
pub mod dlt;
pub mod error;
pub mod field;
pub mod geometry;
pub mod io;
pub mod lm;
pub mod pipeline;
pub mod rig;
pub mod virtual_points;

pub use error::{CalibError, Result};
