use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A model parameter violates its domain (`a_s > 0`, `b_s >= 0`, ...).
    InvalidParameter {
        field: &'static str,
        value: f64,
    },
    TooFewProsumers(usize),
    WrongProsumerCount {
        expected: usize,
        found: usize,
    },
    IndexOutOfRange {
        index: usize,
        len: usize,
    },
    LengthMismatch {
        expected: usize,
        found: usize,
    },
    InvalidGrid(&'static str),
    InvalidConfig(&'static str),
    /// The FOC matrix could not be factorized.
    NotPositiveDefinite {
        pivot: usize,
    },
    NotConverged {
        iterations: usize,
        last_update: f64,
    },
    UnknownDesign,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter { field, value } => {
                write!(f, "invalid value {value} for `{field}`")
            }
            Error::TooFewProsumers(n) => write!(f, "a market needs at least 2 prosumers, got {n}"),
            Error::WrongProsumerCount { expected, found } => {
                write!(f, "expected {expected} prosumers, got {found}")
            }
            Error::IndexOutOfRange { index, len } => {
                write!(f, "prosumer index {index} out of range for {len} prosumers")
            }
            Error::LengthMismatch { expected, found } => {
                write!(f, "vector length {found} does not match expected {expected}")
            }
            Error::InvalidGrid(why) => write!(f, "invalid deviation grid: {why}"),
            Error::InvalidConfig(why) => write!(f, "invalid configuration: {why}"),
            Error::NotPositiveDefinite { pivot } => {
                write!(f, "matrix is not positive definite (pivot {pivot})")
            }
            Error::NotConverged {
                iterations,
                last_update,
            } => write!(
                f,
                "best-response dynamics did not converge after {iterations} iterations \
                 (last update {last_update:e})"
            ),
            Error::UnknownDesign => f.write_str("unknown experiment design"),
        }
    }
}

impl core::error::Error for Error {}
