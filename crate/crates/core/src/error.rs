use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A tensor or layer received data of the wrong shape.
    ShapeMismatch {
        expected: alloc::vec::Vec<usize>,
        actual: alloc::vec::Vec<usize>,
    },
    /// NaN or infinity where finite values are required.
    NonFinite(&'static str),
    /// An argument violated its documented domain.
    InvalidArgument(String),
    /// Network description that cannot be built.
    InvalidSpec(String),
    /// Training produced a non-finite loss.
    Diverged { epoch: usize },
    /// Operation applied to samples of the wrong head kind.
    WrongKind {
        expected: &'static str,
        actual: &'static str,
    },
    /// Input contained no data.
    Empty(&'static str),
    /// Too many droppable units for exhaustive mask enumeration.
    TooManyDroppableUnits { units: usize, limit: usize },
    /// Car left the vicinity of the track, or the state is not finite.
    OffTrack { distance: f64 },
    /// Collection policy crashed more often than allowed.
    CrashBudgetExceeded { crashes: usize, budget: usize },
    /// Binary classification data had a single label.
    SingleClass { positives: usize, negatives: usize },
    /// Angle outside the steering range.
    AngleOutOfRange(f64),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { expected, actual } => {
                write!(f, "shape mismatch: expected {expected:?}, got {actual:?}")
            }
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::InvalidSpec(msg) => write!(f, "invalid network spec: {msg}"),
            Error::Diverged { epoch } => write!(f, "training diverged at epoch {epoch}"),
            Error::WrongKind { expected, actual } => {
                write!(f, "expected {expected} samples, got {actual}")
            }
            Error::Empty(what) => write!(f, "{what} is empty"),
            Error::TooManyDroppableUnits { units, limit } => write!(
                f,
                "{units} droppable units exceed the enumeration limit of {limit}"
            ),
            Error::OffTrack { distance } => {
                write!(f, "car is {distance:.2} m from the track centerline")
            }
            Error::CrashBudgetExceeded { crashes, budget } => {
                write!(f, "policy crashed {crashes} times (budget {budget})")
            }
            Error::SingleClass {
                positives,
                negatives,
            } => write!(
                f,
                "need both classes, got {positives} positives and {negatives} negatives"
            ),
            Error::AngleOutOfRange(a) => write!(f, "angle {a} outside [-25, 25] degrees"),
        }
    }
}

impl core::error::Error for Error {}
