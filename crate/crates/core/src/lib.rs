pub mod dynamics;
pub mod benchmark;
pub mod delay;
pub mod error;
pub mod lqr;
pub mod ocp;
pub mod qp;
pub mod rti;
pub mod sim;
pub mod study;

pub use dynamics::{QuadrotorParams, Quaternion, RotorInput, State};
pub use error::{Error, Result};
