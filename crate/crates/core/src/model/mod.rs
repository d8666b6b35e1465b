//! Parameterization of the coupled rate/force system
//!
//! ```text
//! dr = c(t) p^m dt
//! dp = [a(t) p^l + b(t) r^n] dt + σ(t) r^k dW
//! ```
//!
//! together with the power semantics, the initial-condition mapping
//! `(A, B) → (p₀, z₀)` and a conservative well-posedness check.

mod coefficient;
mod exponent;
mod power;

use std::fmt;

use num_complex::Complex64;

pub use coefficient::{CoefficientFn, Tabulated};
pub use exponent::RationalExponent;
pub use power::{power, PowerMode};

use crate::error::{Error, Result};

/// Full model parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub a: CoefficientFn,
    pub b: CoefficientFn,
    pub c: CoefficientFn,
    pub sigma: CoefficientFn,
    pub m: RationalExponent,
    pub n: RationalExponent,
    pub k: RationalExponent,
    pub l: RationalExponent,
    pub power_mode: PowerMode,
}

impl ModelSpec {
    /// Linear configuration `m = n = l = 1, k = 0` with `a ≡ b ≡ 0`.
    pub fn new(c: CoefficientFn, sigma: CoefficientFn) -> Self {
        ModelSpec {
            a: CoefficientFn::Constant(0.0),
            b: CoefficientFn::Constant(0.0),
            c,
            sigma,
            m: RationalExponent::ONE,
            n: RationalExponent::ONE,
            k: RationalExponent::ZERO,
            l: RationalExponent::ONE,
            power_mode: PowerMode::OddRootReal,
        }
    }

    pub fn with_a(mut self, a: CoefficientFn) -> Self {
        self.a = a;
        self
    }

    pub fn with_b(mut self, b: CoefficientFn) -> Self {
        self.b = b;
        self
    }

    pub fn with_exponents(
        mut self,
        m: RationalExponent,
        n: RationalExponent,
        k: RationalExponent,
        l: RationalExponent,
    ) -> Self {
        self.m = m;
        self.n = n;
        self.k = k;
        self.l = l;
        self
    }

    pub fn with_m(mut self, m: RationalExponent) -> Self {
        self.m = m;
        self
    }

    pub fn with_power_mode(mut self, mode: PowerMode) -> Self {
        self.power_mode = mode;
        self
    }

    /// Checks `m ≠ 0`, `c(0) ≠ 0` and `σ(0) > 0`. Positivity of `σ` on a
    /// whole grid is checked by the simulators.
    pub fn validate(&self) -> Result<()> {
        if self.m.is_zero() {
            return Err(Error::InvalidParameter("exponent m must be nonzero".into()));
        }
        let c0 = self.c.eval(0.0)?;
        if c0 == 0.0 || !c0.is_finite() {
            return Err(Error::InvalidParameter(format!("c(0) must be finite and nonzero, got {c0}")));
        }
        let s0 = self.sigma.eval(0.0)?;
        if s0 <= 0.0 || !s0.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma(0) must be positive, got {s0}")));
        }
        Ok(())
    }
}

/// Initial rate level `A`, initial slope `B = c(0)·p₀^m`, and the derived
/// initial force `p₀` and transformed value `z₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialConditions {
    pub level: f64,
    pub slope: f64,
    pub p0: f64,
    pub z0: f64,
}

/// `p₀ = (B / c(0))^(1/m)` and `z₀ = p₀ / (σ(0) · A^k)`.
pub fn derive_initial_conditions(spec: &ModelSpec, level: f64, slope: f64) -> Result<InitialConditions> {
    spec.validate()?;
    if !spec.k.is_zero() && level <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "initial level A must be positive when k = {} (got {level})",
            spec.k
        )));
    }
    let c0 = spec.c.eval(0.0)?;
    let p0 = power(slope / c0, spec.m.recip()?, spec.power_mode)?;
    let sigma0 = spec.sigma.eval(0.0)?;
    let z0 = p0 / (sigma0 * power(level, spec.k, spec.power_mode)?);
    Ok(InitialConditions { level, slope, p0, z0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExponentName {
    M,
    N,
    L,
    K,
}

impl fmt::Display for ExponentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExponentName::M => "m",
            ExponentName::N => "n",
            ExponentName::L => "l",
            ExponentName::K => "k",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// Super-linear growth in the state (exponent above 1).
    LinearGrowth,
    /// Not Lipschitz at the origin (exponent in (0, 1), or negative).
    Lipschitz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub exponent: ExponentName,
    pub value: RationalExponent,
    pub condition: Condition,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.condition {
            Condition::LinearGrowth => "violates linear growth",
            Condition::Lipschitz => "violates the Lipschitz condition at 0",
        };
        write!(f, "exponent {}={} {what}", self.exponent, self.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Guaranteed,
    Unverified,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WellPosedness {
    pub verdict: Verdict,
    pub reasons: Vec<Violation>,
}

impl WellPosedness {
    pub fn is_guaranteed(&self) -> bool {
        self.verdict == Verdict::Guaranteed
    }
}

/// Syntactic existence/uniqueness check: exponents in `{0, 1}` keep drift and
/// diffusion globally Lipschitz with linear growth in the state. Anything
/// else is reported as unverified, which is a warning, not a proof of
/// blow-up.
pub fn check_well_posedness(spec: &ModelSpec) -> WellPosedness {
    let exponents =
        [(ExponentName::M, spec.m), (ExponentName::N, spec.n), (ExponentName::L, spec.l), (ExponentName::K, spec.k)];
    let reasons: Vec<Violation> = exponents
        .into_iter()
        .filter_map(|(exponent, value)| {
            let condition = if value > RationalExponent::ONE {
                Condition::LinearGrowth
            } else if value == RationalExponent::ONE || value.is_zero() {
                return None;
            } else {
                Condition::Lipschitz
            };
            Some(Violation { exponent, value, condition })
        })
        .collect();
    let verdict = if reasons.is_empty() { Verdict::Guaranteed } else { Verdict::Unverified };
    WellPosedness { verdict, reasons }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootKind {
    EqualReal,
    DistinctReal,
    ComplexConjugate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearClassification {
    pub kind: RootKind,
    pub discriminant: f64,
    pub roots: [Complex64; 2],
}

/// Roots of `λ² − aλ − cb = 0` for the linear configuration with constant
/// coefficients, classified by `D = 4cb + a²`.
pub fn classify_linear_case(a: f64, b: f64, c: f64) -> LinearClassification {
    let cb4 = 4.0 * c * b;
    let discriminant = cb4 + a * a;
    let scale = a * a + cb4.abs();
    let kind = if discriminant.abs() <= 1e-14 * scale {
        RootKind::EqualReal
    } else if discriminant > 0.0 {
        RootKind::DistinctReal
    } else {
        RootKind::ComplexConjugate
    };
    let half = a / 2.0;
    let roots = match kind {
        RootKind::EqualReal => [Complex64::new(half, 0.0); 2],
        RootKind::DistinctReal => {
            let s = discriminant.sqrt() / 2.0;
            [Complex64::new(half - s, 0.0), Complex64::new(half + s, 0.0)]
        }
        RootKind::ComplexConjugate => {
            let s = (-discriminant).sqrt() / 2.0;
            [Complex64::new(half, -s), Complex64::new(half, s)]
        }
    };
    LinearClassification { kind, discriminant, roots }
}
