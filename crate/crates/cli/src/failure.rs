use std::fmt;

use peft_forge::Error;

/// A command failure, classified by exit status.
#[derive(Debug, PartialEq)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
    Other(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
            Failure::Numerical(_) => 4,
            Failure::Other(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical error: {m}"),
            Failure::Other(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for Failure {}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Config(_) | Error::Budget(_) => Failure::Usage(msg),
            Error::Input(_) | Error::Parse { .. } | Error::Io { .. } => Failure::Data(msg),
            Error::Numerical { .. } => Failure::Numerical(msg),
            Error::Shape { .. } | Error::Contract(_) | Error::State(_) => Failure::Other(msg),
        }
    }
}

pub(crate) fn io_failure(path: &std::path::Path, e: std::io::Error) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}
