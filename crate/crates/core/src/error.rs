use thiserror::Error;

pub type Result<T> = std::result::Result<T, PricerError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PricerError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A sample or node produced a non-finite value.
    #[error("numeric overflow in {context}; {hint}")]
    Overflow { context: String, hint: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The requested price is outside the open essential range of the claim,
    /// so the investor's demand is infinite.
    #[error("no finite demand at price {price}: admissible range is ({lower}, {upper})")]
    NoFiniteDemand { price: f64, lower: f64, upper: f64 },

    #[error("root bracket expansion failed: last bracket [{lo}, {hi}] with values [{f_lo}, {f_hi}]")]
    BracketFailure { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("degenerate market: {0}")]
    Degenerate(String),

    #[error("simulation aborted: {flagged} of {paths} paths produced non-finite H")]
    FlaggedPaths { flagged: usize, paths: usize },

    #[error("matrix is singular: {0}")]
    Singular(String),
}

impl PricerError {
    pub(crate) fn overflow(context: impl Into<String>, hint: impl Into<String>) -> Self {
        PricerError::Overflow {
            context: context.into(),
            hint: hint.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        PricerError::InvalidInput(msg.into())
    }
}
