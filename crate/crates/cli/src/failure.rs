use std::fmt;
use std::path::Path;

use phylocp_core::Error;

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments, configuration or input contents.
    Validation(String),
    /// Missing or unwritable files.
    Io(String),
    /// The inference engine could not finish.
    Engine(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Io(_) => 3,
            Failure::Engine(_) => 4,
        }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Failure::Io(format!("{}: {e}", path.display()))
    }

    pub fn context(self, what: impl fmt::Display) -> Self {
        match self {
            Failure::Validation(m) => Failure::Validation(format!("{what}: {m}")),
            Failure::Io(m) => Failure::Io(format!("{what}: {m}")),
            Failure::Engine(m) => Failure::Engine(format!("{what}: {m}")),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid input: {m}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
            Failure::Engine(m) => write!(f, "inference failed: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) => Failure::Io(e.to_string()),
            Error::Degenerate { .. } | Error::ToleranceStall { .. } => Failure::Engine(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;
