use std::fmt;

/// Errors shared by all stages of the pipeline, from problem parsing to
/// closed-loop simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// The Riccati fixed-point iteration did not converge within its cap;
    /// usually means the pair (A, B) is not stabilizable.
    NoConvergence { iterations: usize },
    /// R + B'PB could not be factorized; guards corrupted input since it
    /// cannot occur for R positive definite.
    SingularGainSystem,
    /// The admissible-set iteration hit its cap without all propagated
    /// constraints becoming redundant.
    NotFinitelyDetermined { cap: usize },
    /// Inconsistent matrix or bound dimensions.
    DimensionMismatch(String),
    /// A problem file failed validation; the string carries a row/column
    /// diagnostic where applicable.
    BadProblemFile(String),
    /// The QP has no feasible point for the given parameter.
    Infeasible,
    /// An iteration guard tripped (QP or LP cycling protection).
    MaxIterations,
    /// The LP objective is unbounded above on the given polytope.
    Unbounded,
    /// The polytope in an LP query is empty.
    Empty,
    /// The requested active set has rank-deficient constraint gradients;
    /// callers repair by selecting an independent subset.
    DegenerateActiveSet,
    /// A + BK* is numerically singular, so the quadric's backward state
    /// map does not exist; callers fall back to the optimal polytope.
    SingularClosedLoop,
    /// An intermediate polytope in a projection exceeded the row cap.
    ProjectionTooLarge { rows: usize },
    /// The closed loop reached a state for which the QP is infeasible.
    InfeasibleState { step: usize },
    /// Rejection sampling found too few feasible states.
    SamplingExhausted { draws: usize, accepted: usize },
    /// A report was requested without an optimal-mode baseline run.
    MissingBaseline,
    /// A law packet failed structural validation.
    MalformedPacket(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NoConvergence { iterations } => {
                write!(f, "Riccati iteration did not converge within {iterations} steps")
            }
            Error::SingularGainSystem => write!(f, "R + B'PB is numerically singular"),
            Error::NotFinitelyDetermined { cap } => {
                write!(f, "admissible set not finitely determined within {cap} iterations")
            }
            Error::DimensionMismatch(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::BadProblemFile(msg) => write!(f, "bad problem file: {msg}"),
            Error::Infeasible => write!(f, "QP infeasible for this state"),
            Error::MaxIterations => write!(f, "iteration cap exceeded"),
            Error::Unbounded => write!(f, "LP unbounded"),
            Error::Empty => write!(f, "polytope is empty"),
            Error::DegenerateActiveSet => write!(f, "active-set gradients are rank deficient"),
            Error::SingularClosedLoop => write!(f, "closed-loop matrix A + BK is singular"),
            Error::ProjectionTooLarge { rows } => {
                write!(f, "projection exceeded the row cap ({rows} rows)")
            }
            Error::InfeasibleState { step } => {
                write!(f, "trajectory reached an infeasible state at step {step}")
            }
            Error::SamplingExhausted { draws, accepted } => write!(
                f,
                "rejection sampling accepted only {accepted} of {draws} draws"
            ),
            Error::MissingBaseline => write!(f, "no optimal-mode baseline run supplied"),
            Error::MalformedPacket(msg) => write!(f, "malformed packet: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
