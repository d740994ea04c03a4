pub mod error;
pub mod experiment;
pub mod gp;
pub mod io;
pub mod kernelalg;
pub mod opalgebra;
pub mod smith;
pub mod systems;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use opalgebra::{OperatorMatrix, OperatorPoly, RatFun, Rational};
