//! Data-driven robust model predictive control for irrigation scheduling.

pub mod control;
pub mod dynamics;
pub mod error;
pub mod robust;
pub mod sim;
pub mod solver;
pub mod svc;
pub mod uncertainty;
pub mod verify;
pub mod weather;

pub use error::{Error, Result};
