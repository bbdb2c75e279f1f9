//! Exit-code taxonomy: 0 ok, 2 infeasible, 3 domain violation, 4 usage.

use std::fmt;

use kantoreg::Error;

/// An error that carries its own exit code.
#[derive(Debug)]
pub struct Exit {
    pub code: u8,
    pub message: String,
}

impl Exit {
    pub const INFEASIBLE: u8 = 2;
    pub const DOMAIN: u8 = 3;
    pub const USAGE: u8 = 4;

    pub fn infeasible(message: impl Into<String>) -> anyhow::Error {
        Exit { code: Self::INFEASIBLE, message: message.into() }.into()
    }

    pub fn usage(message: impl Into<String>) -> anyhow::Error {
        Exit { code: Self::USAGE, message: message.into() }.into()
    }
}

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

/// Maps an error chain to a process exit code. Unclassified failures exit with 1.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Exit>() {
            return e.code;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::KnotSpan { .. }
                | Error::OutOfDomain { .. }
                | Error::NotMonotone { .. }
                | Error::DomainMismatch(..) => Exit::DOMAIN,
                Error::Parse(_)
                | Error::Json(_)
                | Error::Dimension(_)
                | Error::InvalidParameter(_)
                | Error::InvalidGrid(_) => Exit::USAGE,
                _ => 1,
            };
        }
    }
    1
}
