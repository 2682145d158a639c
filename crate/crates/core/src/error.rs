use thiserror::Error;

/// Errors raised by the classification pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix entry {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },

    #[error("A{which} is not Hurwitz (trace = {trace}, det = {det})")]
    NotHurwitz { which: u8, trace: f64, det: f64 },

    #[error("trace of A{which} vanishes")]
    TraceZero { which: u8 },

    #[error("{what} argument {value} outside its domain")]
    Domain { what: &'static str, value: f64 },

    #[error("precondition failed in {op}: {reason}")]
    Precondition { op: &'static str, reason: String },

    #[error("degenerate basis: {quantity} = {value}")]
    DegenerateBasis { quantity: &'static str, value: f64 },

    #[error("wrong case for {op}: expected {expected}, found {found}")]
    WrongCase {
        op: &'static str,
        expected: &'static str,
        found: String,
    },

    #[error("A2 is singular")]
    SingularA2,

    #[error("no quadratic Lyapunov witness found within budget of {budget} candidates")]
    WitnessNotFound { budget: usize },

    #[error("parallel set needs a positive discriminant, got {big_delta}")]
    DeltaNonPositive { big_delta: f64 },

    #[error("flow of A{mode} did not reach the target line within t = {time_bound}")]
    NoCrossing { mode: u8, time_bound: f64 },

    #[error("invalid input: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, Error>;
