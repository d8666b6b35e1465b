use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use crate::error::{Error, Result};

/// A rational exponent `numerator / denominator`, always stored in lowest
/// terms with a positive denominator.
///
/// Odd denominators give a real power for negative bases. Even denominators
/// are accepted (they appear as `1/m` for even `m`) but only admit
/// nonnegative bases under [`PowerMode::OddRootReal`].
///
/// [`PowerMode::OddRootReal`]: crate::PowerMode::OddRootReal
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RationalExponent {
    num: i64,
    den: i64,
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl RationalExponent {
    pub const ZERO: RationalExponent = RationalExponent { num: 0, den: 1 };
    pub const ONE: RationalExponent = RationalExponent { num: 1, den: 1 };

    pub fn new(numerator: i64, denominator: i64) -> Result<Self> {
        if denominator == 0 {
            return Err(Error::InvalidExponent(format!("{numerator}/0")));
        }
        let sign = denominator.signum();
        let (num, den) = (numerator * sign, denominator * sign);
        let g = gcd(num, den).max(1);
        Ok(RationalExponent { num: num / g, den: den / g })
    }

    pub const fn integer(value: i64) -> Self {
        RationalExponent { num: value, den: 1 }
    }

    pub fn numerator(&self) -> i64 {
        self.num
    }

    pub fn denominator(&self) -> i64 {
        self.den
    }

    pub fn is_integer(&self) -> bool {
        self.den == 1
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    pub fn is_negative(&self) -> bool {
        self.num < 0
    }

    pub fn has_odd_denominator(&self) -> bool {
        self.den % 2 == 1
    }

    /// Integer value, if the exponent is one.
    pub fn as_integer(&self) -> Option<i64> {
        self.is_integer().then_some(self.num)
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn recip(&self) -> Result<Self> {
        if self.num == 0 {
            return Err(Error::InvalidExponent("reciprocal of 0".into()));
        }
        RationalExponent::new(self.den, self.num)
    }
}

impl Default for RationalExponent {
    fn default() -> Self {
        RationalExponent::ONE
    }
}

impl From<i64> for RationalExponent {
    fn from(value: i64) -> Self {
        RationalExponent::integer(value)
    }
}

impl Add for RationalExponent {
    type Output = RationalExponent;
    fn add(self, rhs: Self) -> Self {
        RationalExponent::new(self.num * rhs.den + rhs.num * self.den, self.den * rhs.den)
            .expect("nonzero denominators")
    }
}

impl Sub for RationalExponent {
    type Output = RationalExponent;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Neg for RationalExponent {
    type Output = RationalExponent;
    fn neg(self) -> Self {
        RationalExponent { num: -self.num, den: self.den }
    }
}

impl Mul for RationalExponent {
    type Output = RationalExponent;
    fn mul(self, rhs: Self) -> Self {
        RationalExponent::new(self.num * rhs.num, self.den * rhs.den).expect("nonzero denominators")
    }
}

impl PartialOrd for RationalExponent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for RationalExponent {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.num as i128 * other.den as i128).cmp(&(other.num as i128 * self.den as i128))
    }
}

impl fmt::Display for RationalExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for RationalExponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidExponent(format!("cannot parse `{s}` as p/q"));
        let s = s.trim();
        match s.split_once('/') {
            Some((p, q)) => {
                let p = p.trim().parse::<i64>().map_err(|_| bad())?;
                let q = q.trim().parse::<i64>().map_err(|_| bad())?;
                RationalExponent::new(p, q)
            }
            None => s.parse::<i64>().map(RationalExponent::integer).map_err(|_| bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduces_and_normalizes_sign() {
        let e = RationalExponent::new(4, -6).unwrap();
        assert_eq!((e.numerator(), e.denominator()), (-2, 3));
        assert!(RationalExponent::new(1, 0).is_err());
    }

    #[test]
    fn arithmetic_stays_reduced() {
        let m = RationalExponent::new(1, 3).unwrap();
        let k = RationalExponent::integer(3);
        assert_eq!(m * k, RationalExponent::ONE);
        assert_eq!(m + m + m, RationalExponent::ONE);
        assert_eq!(RationalExponent::ONE - m, RationalExponent::new(2, 3).unwrap());
    }

    #[test]
    fn parse_and_display() {
        for s in ["2", "-1/3", "1/2", "0"] {
            let e: RationalExponent = s.parse().unwrap();
            assert_eq!(e.to_string(), s);
        }
        assert!("x/2".parse::<RationalExponent>().is_err());
        assert_eq!("6/4".parse::<RationalExponent>().unwrap().to_string(), "3/2");
    }
}
