pub mod ansatz;
pub mod dqpt;
pub mod error;
pub mod evolution;
pub mod imps;
pub mod models;
pub mod numerics;
pub mod observables;
pub mod oracle;

pub use error::{Error, Result};
