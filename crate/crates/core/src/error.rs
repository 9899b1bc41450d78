use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("item index {item} out of range for {m} items")]
    ItemOutOfRange { item: usize, m: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid Q-matrix: {0}")]
    InvalidQMatrix(String),

    #[error("candidate budget exceeded: {needed} candidates requested, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("{what} requires m <= {cap}, got m = {m}")]
    TooLarge { what: &'static str, m: usize, cap: usize },

    #[error("operation requires a saturated combo order")]
    NonSaturatedOrder,

    #[error("item combination {0} is not present in the combo order")]
    ComboNotFound(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("probabilities must sum to 1 (got sum = {sum})")]
    InvalidSimplex { sum: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("degenerate sample: moment denominator {denominator:e} for item {item} is numerically zero")]
    DegenerateSample { item: usize, denominator: f64 },

    #[error("split alignment failed: {0}")]
    Alignment(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("precondition violated: {0}")]
    Precondition(String),
}
