pub mod average;
pub mod branch;
pub mod cli;
pub mod error;
pub mod expr;
pub mod io;
pub mod ode;
pub mod poincare;
pub mod linear;
pub mod system;

pub use error::{Error, Result};
