use alloc::string::String;
use core::fmt;

/// Errors raised by the bounding library.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// A domain with no variables or a zero cardinality.
    InvalidDomain(String),
    /// Self-loops, duplicate edges or out-of-range endpoints.
    InvalidGraph(String),
    /// Tables whose shapes do not match the graph and domain.
    ShapeMismatch(String),
    /// An assigned value outside its variable's range.
    ValueOutOfRange {
        variable: usize,
        value: usize,
    },
    /// An assignment over the wrong number of variables.
    DimensionMismatch {
        expected: usize,
        found: usize,
    },
    /// A full assignment was required.
    PartialAssignment,
    /// Observed and hidden assignments do not partition the variables.
    InvalidQuery(String),
    /// An empty or out-of-range allowed-value set.
    InvalidUniverse(String),
    LabelAxisMissing,
    LabelAxisUnexpected,
    LabelOutOfRange {
        label: usize,
        cardinality: usize,
    },
    /// The operation requires a connected tree.
    NotATree,
    /// The operation requires a connected graph.
    Disconnected,
    /// The operation requires the path graph 0-1-..-(n-1).
    NotAChain,
    /// The conditional is undefined: every feasible distribution gives the
    /// observed assignment zero probability.
    Unconditioned,
    /// The assignment space is larger than the configured cap.
    CapExceeded {
        atoms: u128,
        cap: usize,
    },
    /// A linear program has no feasible point.
    Infeasible,
    /// A linear program has an unbounded objective.
    Unbounded,
    /// The simplex iteration broke down numerically.
    NumericalFailure,
    /// Locally consistent marginals that no joint distribution realizes.
    Unrealizable,
    /// Marginals failing validation.
    InvalidMarginals(String),
    /// A pseudo-marginal vector with zero partition function.
    ZeroPartition,
    EmptyData,
    NoLabeledRows,
    InvalidSmoothing,
    /// A soft feature value outside [0, 1].
    InvalidScore {
        index: usize,
        value: f64,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidDomain(msg) => write!(f, "invalid domain: {msg}"),
            Error::InvalidGraph(msg) => write!(f, "invalid graph: {msg}"),
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::ValueOutOfRange { variable, value } => {
                write!(f, "value {value} out of range for variable {variable}")
            }
            Error::DimensionMismatch { expected, found } => {
                write!(f, "expected {expected} variables, found {found}")
            }
            Error::PartialAssignment => f.write_str("a full assignment is required"),
            Error::InvalidQuery(msg) => write!(f, "invalid query: {msg}"),
            Error::InvalidUniverse(msg) => write!(f, "invalid universe: {msg}"),
            Error::LabelAxisMissing => f.write_str("marginals carry no label axis"),
            Error::LabelAxisUnexpected => f.write_str("marginals carry a label axis"),
            Error::LabelOutOfRange { label, cardinality } => {
                write!(f, "label {label} out of range (cardinality {cardinality})")
            }
            Error::NotATree => f.write_str("graph is not a connected tree"),
            Error::Disconnected => f.write_str("graph is not connected"),
            Error::NotAChain => f.write_str("graph is not the chain 0-1-..-(n-1)"),
            Error::Unconditioned => {
                f.write_str("unconditioned: observed assignment has zero probability under every feasible distribution")
            }
            Error::CapExceeded { atoms, cap } => {
                write!(f, "{atoms} assignments exceed the cap of {cap}")
            }
            Error::Infeasible => f.write_str("linear program is infeasible"),
            Error::Unbounded => f.write_str("linear program is unbounded"),
            Error::NumericalFailure => f.write_str("simplex iteration broke down numerically"),
            Error::Unrealizable => {
                f.write_str("marginals are locally consistent but no joint distribution realizes them")
            }
            Error::InvalidMarginals(msg) => write!(f, "invalid marginals: {msg}"),
            Error::ZeroPartition => f.write_str("pseudo-marginals have zero partition function"),
            Error::EmptyData => f.write_str("no data rows"),
            Error::NoLabeledRows => f.write_str("no labeled rows"),
            Error::InvalidSmoothing => f.write_str("smoothing must be a finite nonnegative number"),
            Error::InvalidScore { index, value } => {
                write!(f, "soft feature {index} = {value} is outside [0, 1]")
            }
        }
    }
}

impl core::error::Error for Error {}
