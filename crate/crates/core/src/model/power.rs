use std::fmt;
use std::str::FromStr;

use super::RationalExponent;
use crate::error::{Error, Result};

/// How `z^α` is extended to negative `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PowerMode {
    /// Ordinary real power: odd roots of negatives are real, even roots of
    /// negatives are a domain error, integer exponents are plain powers.
    #[default]
    OddRootReal,
    /// The signed power `Φ(z) = |z|^(α−1)·z`.
    SignedPower,
}

impl fmt::Display for PowerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PowerMode::OddRootReal => "oddroot",
            PowerMode::SignedPower => "signed",
        })
    }
}

impl FromStr for PowerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "oddroot" => Ok(PowerMode::OddRootReal),
            "signed" => Ok(PowerMode::SignedPower),
            other => Err(Error::InvalidParameter(format!("power mode `{other}` (expected oddroot|signed)"))),
        }
    }
}

fn root(x: f64, den: i64) -> f64 {
    match den {
        1 => x,
        2 => x.sqrt(),
        3 => x.cbrt(),
        _ => x.powf(1.0 / den as f64),
    }
}

// |x|^(p/q) for x >= 0, exact for the small denominators that occur in practice.
fn magnitude(x: f64, alpha: RationalExponent) -> f64 {
    let p = alpha.numerator();
    if p.unsigned_abs() <= 64 {
        root(x, alpha.denominator()).powi(p as i32)
    } else {
        x.powf(alpha.to_f64())
    }
}

/// Evaluates `z^alpha` under the given power semantics.
///
/// A zero exponent always yields 1, so `r^0` stays a constant factor in both
/// modes.
pub fn power(z: f64, alpha: RationalExponent, mode: PowerMode) -> Result<f64> {
    if alpha.is_zero() {
        return Ok(1.0);
    }
    if z == 0.0 {
        return if alpha.is_negative() { Err(Error::ZeroToNegativePower(alpha)) } else { Ok(0.0) };
    }
    if z.is_nan() {
        return Ok(f64::NAN);
    }
    let mag = magnitude(z.abs(), alpha);
    if z > 0.0 {
        return Ok(mag);
    }
    match mode {
        PowerMode::OddRootReal => {
            if !alpha.has_odd_denominator() {
                return Err(Error::EvenRootOfNegative { base: z, exponent: alpha });
            }
            Ok(if alpha.numerator() % 2 == 0 { mag } else { -mag })
        }
        PowerMode::SignedPower => Ok(-mag),
    }
}
