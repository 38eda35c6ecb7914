use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("`{name}` is reserved and cannot be used as a variable name")]
    ReservedName { name: String },
    #[error("invalid variable name `{0}`")]
    InvalidName(String),
    #[error("no value bound for variable `{0}`")]
    MissingBinding(String),
    #[error("domain error in `{node}`: {reason}")]
    Domain { node: String, reason: &'static str },
    #[error("not differentiable with respect to `{variable}` at this point")]
    NotDifferentiable { variable: String },
    #[error("variable `{variable}`: {reason}")]
    InvalidVariable { variable: String, reason: String },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("invalid correlation {a}:{b}: {reason}")]
    InvalidCorrelation { a: String, b: String, reason: &'static str },
    #[error("correlation matrix is not positive semi-definite")]
    NotPositiveSemidefinite,
    #[error("total transmitted variance is zero; contributions cannot be ranked")]
    ZeroTotal,
    #[error("infeasible design problem: {0}")]
    Infeasible(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{failed} of {n} Monte-Carlo samples could not be evaluated")]
    SampleFailures { failed: usize, n: usize },
    #[error("dimensional analysis: {0}")]
    Dimension(String),
}
