//! Batch runner for quench simulations: configuration, pipelines, CSV and
//! JSON artifacts, re-analysis and parameter sweeps.

pub mod analyze;
pub mod config;
pub mod run;
pub mod sweep;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NUMERICAL: i32 = 3;
}
