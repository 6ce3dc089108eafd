use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied argument violates the operation's contract.
    InvalidArgument(String),
    /// Input data (sampled fields, payloads) is malformed or non-finite.
    Data(String),
    /// A non-finite value appeared while differentiating a ray.
    Numerical { leaf: u32, ray: usize, what: &'static str },
    /// Loss exceeded the divergence bound during fine-tuning.
    Diverged { epoch: usize, loss: f64, limit: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::Numerical { leaf, ray, what } => {
                write!(f, "non-finite {what} at leaf {leaf} on ray {ray}")
            }
            Error::Diverged { epoch, loss, limit } => {
                write!(f, "fine-tuning diverged in epoch {epoch}: loss {loss} exceeds {limit}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
