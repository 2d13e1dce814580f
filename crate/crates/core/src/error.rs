use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("capacity exceeded: {what} is {got}, limit {limit}")]
    Capacity { what: &'static str, got: usize, limit: usize },

    #[error("{routine} failed to converge on a {rows}x{cols} matrix")]
    Convergence { routine: &'static str, rows: usize, cols: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("dominant eigenvalue is degenerate in modulus (|e1| = {e1:.6e}, |e2| = {e2:.6e}); MPS is not injective")]
    Degenerate { e1: f64, e2: f64 },

    #[error("numerical breakdown: {0}")]
    Breakdown(String),

    #[error("every singular value is below the threshold {threshold:e}")]
    EmptyState { threshold: f64 },

    #[error("fidelity spectrum underflow at t = {time}")]
    SpectrumUnderflow { time: f64 },

    #[error("evolution failed at t = {time}: {source}")]
    Evolution {
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("history [{have_start}, {have_end}] does not cover the window [{need_start}, {need_end}]")]
    WindowOutOfBounds { need_start: f64, need_end: f64, have_start: f64, have_end: f64 },

    #[error("unknown {kind} '{name}'")]
    UnknownName { kind: &'static str, name: String },

    #[error("degenerate model: {0}")]
    DegenerateModel(String),
}
