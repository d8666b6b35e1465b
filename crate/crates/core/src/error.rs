use thiserror::Error;

use crate::model::RationalExponent;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("even root of negative base {base} (exponent {exponent})")]
    EvenRootOfNegative { base: f64, exponent: RationalExponent },

    #[error("zero raised to negative exponent {0}")]
    ZeroToNegativePower(RationalExponent),

    #[error("invalid exponent: {0}")]
    InvalidExponent(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time {t} lies outside the tabulated range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("power-domain failure at step {step}: {source}")]
    DomainAtStep { step: usize, source: Box<Error> },

    #[error("blow-up detected at step {step} (t = {t})")]
    BlowUp { step: usize, t: f64 },

    #[error("singular denominator {value:e} at t = {t}")]
    Singular { t: f64, value: f64 },

    #[error("all {n_paths} paths failed ({blown_up} blow-ups, {domain} domain failures)")]
    AllPathsFailed { n_paths: usize, blown_up: usize, domain: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl Error {
    /// True for failures of the numerics themselves (blow-ups, singular
    /// denominators) as opposed to invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::BlowUp { .. } | Error::Singular { .. } | Error::AllPathsFailed { .. })
    }

    pub(crate) fn at_step(self, step: usize) -> Error {
        match self {
            e @ (Error::BlowUp { .. } | Error::DomainAtStep { .. }) => e,
            other => Error::DomainAtStep { step, source: Box::new(other) },
        }
    }
}
