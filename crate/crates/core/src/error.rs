use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Log-polar coordinates requested at the fixation point itself.
    DegeneratePoint,
    InvalidParameter(String),
    InvalidImage(String),
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },
    NonFiniteLogit,
    IndexOutOfRange { index: usize, len: usize },
    EmptySubset,
    MissingLabel(String),
    EmptyMask,
    /// The mask must contain both set and unset cells.
    DegenerateMask,
    EmptyInput,
    OutOfFrame,
    /// The retinotopic frame needs a log-polar grid.
    MissingGrid,
    /// Failure reported by (or while talking to) an external classifier.
    Oracle(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DegeneratePoint => f.write_str("eccentricity is zero at the fixation point"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::InvalidImage(msg) => write!(f, "invalid image: {msg}"),
            Error::ShapeMismatch { expected, found } => write!(
                f,
                "shape mismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::NonFiniteLogit => f.write_str("non-finite logit"),
            Error::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range for {len} labels")
            }
            Error::EmptySubset => f.write_str("label subset is empty"),
            Error::MissingLabel(label) => write!(f, "no training example for label {label:?}"),
            Error::EmptyMask => f.write_str("ground-truth mask has no set cell"),
            Error::DegenerateMask => {
                f.write_str("ground-truth mask needs at least one set and one unset cell")
            }
            Error::EmptyInput => f.write_str("empty input"),
            Error::OutOfFrame => f.write_str("shape does not fit inside the frame"),
            Error::MissingGrid => f.write_str("retinotopic frame requires a log-polar grid"),
            Error::Oracle(msg) => write!(f, "oracle error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
