use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown element `{0}`")]
    UnknownElement(String),

    #[error("duplicate element `{0}`")]
    DuplicateElement(String),

    #[error("order relation has a cycle through `{0}` and `{1}`")]
    Cycle(String, String),

    #[error("`{b}` is not below `{a}`")]
    NotComparable { a: String, b: String },

    #[error("region {0} is empty")]
    EmptyRegion(usize),

    #[error("region `{0}` is declared twice")]
    DuplicateRegion(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("search space of {size} configurations exceeds the cap of {cap}")]
    SearchSpaceTooLarge { size: u128, cap: u128 },

    #[error("negative factor value {value} at `{element}`[{index}]")]
    NegativeFactor {
        element: String,
        index: usize,
        value: f64,
    },

    #[error("non-positive belief {value} at `{element}`[{index}] on a finite-energy state")]
    NonPositiveBelief {
        element: String,
        index: usize,
        value: f64,
    },

    #[error("every state of `{0}` is masked")]
    AllMassMasked(String),

    #[error("belief at `{element}` sums to {sum}, expected 1")]
    NotNormalized { element: String, sum: f64 },

    #[error("partition function is zero")]
    ZeroPartition,

    #[error("observed value has zero probability")]
    ZeroEvidence,

    #[error("evidence leaves no admissible state at `{0}`")]
    InconsistentEvidence(String),

    #[error("graph is not a forest")]
    NotTree,

    #[error("source and target presheaves live on different posets")]
    PosetMismatch,

    #[error("naturality square fails at {a} -> {b}, state {state}")]
    NaturalityFailed { a: String, b: String, state: usize },

    #[error("component at `{0}` is not surjective")]
    NotSurjective(String),

    #[error("transformations do not compose: {0}")]
    Mismatch(String),

    #[error("subobject condition fails: state {state} of `{a}` is admissible but maps to a masked state of `{b}`")]
    SubobjectViolation { a: String, b: String, state: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid option: {0}")]
    InvalidOption(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
