use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Piecewise-linear coefficient given on a strictly increasing time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl Tabulated {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::InvalidParameter("tabulated coefficient needs at least two (time, value) pairs".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("tabulated times must be strictly increasing".into()));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("tabulated entries must be finite".into()));
        }
        Ok(Tabulated { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn range_error(&self, t: f64) -> Error {
        Error::OutOfRange { t, start: self.times[0], end: *self.times.last().unwrap() }
    }

    // Index i of the segment [t_i, t_{i+1}] containing t.
    fn segment(&self, t: f64) -> Result<usize> {
        let n = self.times.len();
        if !(self.times[0]..=self.times[n - 1]).contains(&t) {
            return Err(self.range_error(t));
        }
        let i = self.times.partition_point(|&x| x <= t);
        Ok(i.saturating_sub(1).min(n - 2))
    }

    fn interpolate(&self, t: f64) -> Result<f64> {
        let i = self.segment(t)?;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let w = (t - t0) / (t1 - t0);
        Ok(self.values[i] * (1.0 - w) + self.values[i + 1] * w)
    }

    fn slope(&self, i: usize) -> f64 {
        (self.values[i + 1] - self.values[i]) / (self.times[i + 1] - self.times[i])
    }

    // Slope of the interpolant; the mean of the two adjacent slopes at an
    // interior node.
    fn derivative(&self, t: f64) -> Result<f64> {
        let i = self.segment(t)?;
        if t == self.times[i] && i > 0 {
            return Ok(0.5 * (self.slope(i - 1) + self.slope(i)));
        }
        Ok(self.slope(i))
    }
}

/// A time-dependent scalar coefficient of the model (`a`, `b`, `c` or `σ`).
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientFn {
    Constant(f64),
    /// `scale · e^(−rate·t)`
    ScaledExp {
        scale: f64,
        rate: f64,
    },
    /// `scale · cos(freq·t)`
    ScaledCos {
        scale: f64,
        freq: f64,
    },
    /// `cos(t) / (1 + t)`
    DampedCos,
    Tabulated(Tabulated),
}

impl CoefficientFn {
    pub fn eval(&self, t: f64) -> Result<f64> {
        Ok(match self {
            CoefficientFn::Constant(v) => *v,
            CoefficientFn::ScaledExp { scale, rate } => scale * (-rate * t).exp(),
            CoefficientFn::ScaledCos { scale, freq } => scale * (freq * t).cos(),
            CoefficientFn::DampedCos => t.cos() / (1.0 + t),
            CoefficientFn::Tabulated(tab) => tab.interpolate(t)?,
        })
    }

    /// Time derivative. Exact for the analytic variants, the interpolant's
    /// slope for tabulated data.
    pub fn derivative(&self, t: f64) -> Result<f64> {
        Ok(match self {
            CoefficientFn::Constant(_) => 0.0,
            CoefficientFn::ScaledExp { scale, rate } => -rate * scale * (-rate * t).exp(),
            CoefficientFn::ScaledCos { scale, freq } => -freq * scale * (freq * t).sin(),
            CoefficientFn::DampedCos => {
                let d = 1.0 + t;
                -(t.sin() * d + t.cos()) / (d * d)
            }
            CoefficientFn::Tabulated(tab) => tab.derivative(t)?,
        })
    }

    pub fn sample(&self, times: &[f64]) -> Result<Vec<f64>> {
        times.iter().map(|&t| self.eval(t)).collect()
    }

    pub fn sample_derivative(&self, times: &[f64]) -> Result<Vec<f64>> {
        times.iter().map(|&t| self.derivative(t)).collect()
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self {
            CoefficientFn::Constant(v) => Some(*v),
            CoefficientFn::ScaledExp { scale, rate } if *rate == 0.0 => Some(*scale),
            CoefficientFn::ScaledCos { scale, freq } if *freq == 0.0 => Some(*scale),
            _ => None,
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        match self {
            CoefficientFn::Tabulated(tab) => tab.values.iter().all(|&v| v == 0.0),
            CoefficientFn::DampedCos => false,
            CoefficientFn::Constant(v)
            | CoefficientFn::ScaledExp { scale: v, .. }
            | CoefficientFn::ScaledCos { scale: v, .. } => *v == 0.0,
        }
    }

    /// Maximum over `[0, t]` by scanning `steps + 1` equally spaced points
    /// (plus the tabulated nodes, where the interpolant attains its extrema).
    pub fn max_on(&self, t: f64, steps: usize) -> Result<f64> {
        let steps = steps.max(1);
        let mut best = f64::NEG_INFINITY;
        for i in 0..=steps {
            best = best.max(self.eval(t * i as f64 / steps as f64)?);
        }
        if let CoefficientFn::Tabulated(tab) = self {
            for (&x, &v) in tab.times.iter().zip(&tab.values) {
                if (0.0..=t).contains(&x) {
                    best = best.max(v);
                }
            }
        }
        Ok(best)
    }
}

impl From<f64> for CoefficientFn {
    fn from(v: f64) -> Self {
        CoefficientFn::Constant(v)
    }
}

impl fmt::Display for CoefficientFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientFn::Constant(v) => write!(f, "const({v})"),
            CoefficientFn::ScaledExp { scale, rate } => write!(f, "scaled_exp({scale}, {rate})"),
            CoefficientFn::ScaledCos { scale, freq } => write!(f, "scaled_cos({scale}, {freq})"),
            CoefficientFn::DampedCos => f.write_str("damped_cos"),
            CoefficientFn::Tabulated(tab) => {
                f.write_str("tabulated(")?;
                for (i, (t, v)) in tab.times.iter().zip(&tab.values).enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{t}:{v}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl FromStr for CoefficientFn {
    type Err = Error;

    /// Parses `const(v)`, a bare number, `scaled_exp(v, λ)`, `scaled_cos(v, ω)`,
    /// `damped_cos` or `tabulated(t0:v0, t1:v1, ...)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |msg: &str| Error::InvalidParameter(format!("coefficient `{s}`: {msg}"));
        let num = |x: &str| x.trim().parse::<f64>().map_err(|_| bad("expected a number"));
        if let Ok(v) = s.parse::<f64>() {
            return Ok(CoefficientFn::Constant(v));
        }
        if s == "damped_cos" || s == "damped_cos()" {
            return Ok(CoefficientFn::DampedCos);
        }
        let (name, rest) = s.split_once('(').ok_or_else(|| bad("unknown form"))?;
        let args = rest.strip_suffix(')').ok_or_else(|| bad("missing `)`"))?;
        let list: Vec<&str> = args.split(',').collect();
        let two = || -> Result<(f64, f64)> {
            match list.as_slice() {
                [x, y] => Ok((num(x)?, num(y)?)),
                _ => Err(bad("expected two arguments")),
            }
        };
        match name.trim() {
            "const" => match list.as_slice() {
                [x] => Ok(CoefficientFn::Constant(num(x)?)),
                _ => Err(bad("expected one argument")),
            },
            "scaled_exp" => two().map(|(scale, rate)| CoefficientFn::ScaledExp { scale, rate }),
            "scaled_cos" => two().map(|(scale, freq)| CoefficientFn::ScaledCos { scale, freq }),
            "tabulated" => {
                let mut times = Vec::with_capacity(list.len());
                let mut values = Vec::with_capacity(list.len());
                for pair in list {
                    let (t, v) = pair.split_once(':').ok_or_else(|| bad("expected t:v pairs"))?;
                    times.push(num(t)?);
                    values.push(num(v)?);
                }
                Tabulated::new(times, values).map(CoefficientFn::Tabulated)
            }
            _ => Err(bad("unknown form")),
        }
    }
}
