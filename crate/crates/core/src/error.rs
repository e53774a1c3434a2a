use thiserror::Error;

/// Every failure names the module and operation that raised it together
/// with the offending value.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{module}::{op}: value {value} rejected: {reason}")]
    Domain {
        module: &'static str,
        op: &'static str,
        value: f64,
        reason: String,
    },

    #[error("{module}::{op}: invalid {what}: {reason}")]
    Invalid {
        module: &'static str,
        op: &'static str,
        what: String,
        reason: String,
    },

    #[error(
        "{module}::{op}: quadrature on [{lo}, {hi}] did not reach tolerance \
         (partial value {partial}, error estimate {abs_error:e})"
    )]
    Quadrature {
        module: &'static str,
        op: &'static str,
        lo: f64,
        hi: f64,
        partial: f64,
        abs_error: f64,
    },

    #[error("{module}::{op}: ODE solver failed at x = {at}: {reason}")]
    Solver {
        module: &'static str,
        op: &'static str,
        at: f64,
        reason: String,
    },

    #[error("{module}::{op}: degenerate solution basis at z = {at} (denominator {denominator:e})")]
    DegenerateBasis {
        module: &'static str,
        op: &'static str,
        at: f64,
        denominator: f64,
    },

    #[error("{module}::{op}: non-finite value {value} at {at}")]
    NonFinite {
        module: &'static str,
        op: &'static str,
        at: f64,
        value: f64,
    },

    #[error("{module}::{op}: {reason}")]
    Unsupported {
        module: &'static str,
        op: &'static str,
        reason: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by bad input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain { .. } | Error::Invalid { .. } | Error::Unsupported { .. }
        )
    }

    /// Re-labels low-level numerical failures with the operation that
    /// requested the computation. Validation errors keep their origin.
    pub fn within(self, module: &'static str, op: &'static str) -> Self {
        match self {
            Error::Quadrature {
                lo,
                hi,
                partial,
                abs_error,
                ..
            } => Error::Quadrature {
                module,
                op,
                lo,
                hi,
                partial,
                abs_error,
            },
            Error::Solver { at, reason, .. } => Error::Solver {
                module,
                op,
                at,
                reason,
            },
            other => other,
        }
    }

    pub(crate) fn domain(
        module: &'static str,
        op: &'static str,
        value: f64,
        reason: impl Into<String>,
    ) -> Self {
        Error::Domain {
            module,
            op,
            value,
            reason: reason.into(),
        }
    }

    pub(crate) fn invalid(
        module: &'static str,
        op: &'static str,
        what: impl Into<String>,
        reason: impl Into<String>,
    ) -> Self {
        Error::Invalid {
            module,
            op,
            what: what.into(),
            reason: reason.into(),
        }
    }
}
