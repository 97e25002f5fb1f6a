use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A caller-supplied argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A numerical routine failed where the math says it cannot.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! bail_arg {
    ($($arg:tt)*) => {
        return Err($crate::Error::Argument(alloc::format!($($arg)*)))
    };
}

pub(crate) use bail_arg;
