pub mod checks;
pub mod cli;
pub mod control;
pub mod error;
pub mod inertia;
pub mod kindyn;
pub mod liegroup;
pub mod model;
pub mod sim;

pub use error::{Error, Result};
