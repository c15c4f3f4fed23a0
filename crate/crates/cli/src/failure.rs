use std::fmt::Display;

use hrnn::Error;

pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const NUMERIC: u8 = 3;

/// An error plus the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(msg: impl Display) -> Self {
        Failure {
            code: USAGE,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn data(msg: impl Display) -> Self {
        Failure {
            code: DATA,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn numeric(msg: impl Display) -> Self {
        Failure {
            code: NUMERIC,
            error: anyhow::anyhow!("{msg}"),
        }
    }
}

fn code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::UnknownVariant(_) => USAGE,
        Error::NonFinite { .. } => NUMERIC,
        _ => DATA,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: code_for(&e),
            error: e.into(),
        }
    }
}

pub trait Context<T> {
    fn context(self, msg: impl Display + Send + Sync + 'static) -> Result<T, Failure>;
}

impl<T> Context<T> for Result<T, Error> {
    fn context(self, msg: impl Display + Send + Sync + 'static) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: code_for(&e),
            error: anyhow::Error::from(e).context(msg),
        })
    }
}
