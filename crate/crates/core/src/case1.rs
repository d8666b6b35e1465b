//! Closed forms for the configuration `k = 0, l = 1, b ≡ 0`, where the rate is
//!
//! ```text
//! R_t = A + ∫₀ᵗ c(u) σ(u)^m u_u^m du,   u_t = z_t + W_t − t/2,
//! ```
//!
//! and `z` solves a linear ODE with random coefficients. With `a ≡ 0` and
//! constant `σ` this reduces to `R_t = A + ∫₀ᵗ c(u)(σW_u + c₁)^m du`,
//! `c₁ = (B/c(0))^{1/m}`, whose mean and variance are available in closed
//! form.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernels::{product_kernel, wiener_moment, KernelMode, WienerPath};
use crate::model::{power, CoefficientFn, ModelSpec, PowerMode, RationalExponent};
use crate::numerics::{
    binomial, cumtrapz, cumulative_double_trapz_sym, factorial, hypergeom_3f1_terminating, ln_gamma,
};

/// Panels used for quadrature of double integrals on `[0, t]`.
pub const VARIANCE_PANELS: usize = 2000;

/// Panels used for single integrals of coefficients without a closed form.
const FINE_PANELS: usize = 1 << 14;

/// Parameters of the `k = 0, l = 1, b ≡ 0` configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Case1Config {
    pub c: CoefficientFn,
    pub a: CoefficientFn,
    pub sigma: CoefficientFn,
    pub m: u32,
    /// Initial level `A`.
    pub level: f64,
    /// Initial slope `B`.
    pub slope: f64,
    pub power_mode: PowerMode,
}

impl Case1Config {
    pub fn new(c: CoefficientFn, sigma: f64, m: u32, level: f64, slope: f64) -> Self {
        Case1Config {
            c,
            a: CoefficientFn::Constant(0.0),
            sigma: CoefficientFn::Constant(sigma),
            m,
            level,
            slope,
            power_mode: PowerMode::OddRootReal,
        }
    }

    pub fn with_a(mut self, a: CoefficientFn) -> Self {
        self.a = a;
        self
    }

    pub fn with_sigma(mut self, sigma: CoefficientFn) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_power_mode(mut self, mode: PowerMode) -> Self {
        self.power_mode = mode;
        self
    }

    /// Extracts the configuration from a full model, checking `k = 0`,
    /// `l = 1`, `b ≡ 0` and a positive integer `m`.
    pub fn from_spec(spec: &ModelSpec, level: f64, slope: f64) -> Result<Self> {
        if !spec.k.is_zero() || spec.l != RationalExponent::ONE || !spec.b.is_identically_zero() {
            return Err(Error::Unsupported("closed forms need k = 0, l = 1 and b ≡ 0".into()));
        }
        let m = match spec.m.as_integer() {
            Some(m) if m > 0 => m as u32,
            _ => return Err(Error::Unsupported(format!("closed forms need a positive integer m, got {}", spec.m))),
        };
        Ok(Case1Config {
            c: spec.c.clone(),
            a: spec.a.clone(),
            sigma: spec.sigma.clone(),
            m,
            level,
            slope,
            power_mode: spec.power_mode,
        })
    }

    pub fn to_spec(&self) -> ModelSpec {
        let one = RationalExponent::ONE;
        ModelSpec::new(self.c.clone(), self.sigma.clone())
            .with_a(self.a.clone())
            .with_exponents(RationalExponent::integer(self.m as i64), one, RationalExponent::ZERO, one)
            .with_power_mode(self.power_mode)
    }

    fn m_exp(&self) -> RationalExponent {
        RationalExponent::integer(self.m as i64)
    }

    /// `c₁^{j/m} = (B/c(0))^{j/m}` with the exponent reduced first.
    fn c1_power(&self, j: i64) -> Result<f64> {
        let c0 = self.c.eval(0.0)?;
        power(self.slope / c0, RationalExponent::new(j, self.m as i64)?, self.power_mode)
    }

    /// `c₁ = (B/c(0))^{1/m}`.
    pub fn c1(&self) -> Result<f64> {
        self.c1_power(1)
    }

    // Constant σ for the moment formulas, which also need a ≡ 0 and ordinary
    // powers of the Gaussian integrand.
    fn moment_sigma(&self) -> Result<f64> {
        if self.m == 0 {
            return Err(Error::InvalidParameter("m must be positive".into()));
        }
        if !self.a.is_identically_zero() {
            return Err(Error::Unsupported("moment formulas need a ≡ 0".into()));
        }
        let sigma = self
            .sigma
            .constant_value()
            .ok_or_else(|| Error::Unsupported("moment formulas need a constant sigma".into()))?;
        if self.power_mode == PowerMode::SignedPower && self.m.is_multiple_of(2) {
            return Err(Error::Unsupported("moment formulas assume ordinary powers for even m".into()));
        }
        Ok(sigma)
    }
}

/// Which formula produced a moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentMethod {
    ExactEven,
    ExactOdd,
    BinomialSum,
    /// First-order expansion of the integrand; not guaranteed nonnegative.
    TaylorApprox,
    Hypergeom,
    LowerBoundOnly,
}

/// Mean and variance curves on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub mean_method: MomentMethod,
    pub variance_method: MomentMethod,
    pub kernel: KernelMode,
}

/// Pathwise rate for general `a(t)`, `σ(t)`: with `g = a − σ'/σ` and
/// `G = ∫g`,
///
/// ```text
/// z_t = e^{G_t} (z₀ + ∫₀ᵗ e^{−G_s}(1/2 + g_s(W_s − s/2)) ds),
/// R_t = A + ∫₀ᵗ c σ^m (z + W − s/2)^m ds,
/// ```
///
/// every integral by cumulative trapezoid on the Wiener path's grid.
pub fn case1_exact_path(cfg: &Case1Config, wiener: &WienerPath) -> Result<Vec<f64>> {
    let times = wiener.times();
    let w = wiener.values();
    let sigma = cfg.sigma.sample(times)?;
    if let Some(s) = sigma.iter().find(|&&s| !(s > 0.0)) {
        return Err(Error::InvalidParameter(format!("sigma must stay positive, got {s}")));
    }
    let z0 = cfg.c1()? / sigma[0];
    let u: Vec<f64> = if cfg.a.is_identically_zero() && cfg.sigma.constant_value().is_some() {
        w.iter().map(|wi| z0 + wi).collect()
    } else {
        let a = cfg.a.sample(times)?;
        let ds = cfg.sigma.sample_derivative(times)?;
        let g: Vec<f64> = (0..times.len()).map(|i| a[i] - ds[i] / sigma[i]).collect();
        let big_g = cumtrapz(times, &g)?;
        let inner: Vec<f64> =
            (0..times.len()).map(|i| (-big_g[i]).exp() * (0.5 + g[i] * (w[i] - times[i] / 2.0))).collect();
        let inner = cumtrapz(times, &inner)?;
        (0..times.len()).map(|i| big_g[i].exp() * (z0 + inner[i]) + w[i] - times[i] / 2.0).collect()
    };
    let m = cfg.m_exp();
    let c = cfg.c.sample(times)?;
    let integrand = (0..times.len())
        .map(|i| Ok(c[i] * power(sigma[i], m, cfg.power_mode)? * power(u[i], m, cfg.power_mode)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(cumtrapz(times, &integrand)?.into_iter().map(|x| cfg.level + x).collect())
}

fn fine_trapz(c: &CoefficientFn, j: u32, t: f64) -> Result<f64> {
    let h = t / FINE_PANELS as f64;
    let mut sum = 0.0;
    for i in 0..=FINE_PANELS {
        let u = h * i as f64;
        let w = if i == 0 || i == FINE_PANELS { 0.5 } else { 1.0 };
        sum += w * c.eval(u)? * u.powi(j as i32);
    }
    Ok(sum * h)
}

// ∫₀ᵗ u^j e^{−λu} du
fn exp_moment(j: u32, rate: f64, t: f64) -> f64 {
    let x = rate * t;
    if x.abs() < 1.0 {
        // Σ_k (−λ)^k t^{j+k+1} / (k! (j+k+1))
        let mut term = t.powi(j as i32 + 1);
        let mut sum = 0.0;
        for k in 0..60 {
            let add = term / (j + k + 1) as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs() {
                break;
            }
            term *= -x / (k + 1) as f64;
        }
        sum
    } else {
        let mut partial = 0.0;
        let mut term = 1.0;
        for i in 0..=j {
            partial += term;
            term *= x / (i + 1) as f64;
        }
        factorial(j as u64) / rate.powi(j as i32 + 1) * (1.0 - (-x).exp() * partial)
    }
}

// ∫₀ᵗ u^j cos(ωu) du
fn cos_moment(j: u32, freq: f64, t: f64) -> f64 {
    let x = freq * t;
    if x.abs() <= 2.0 {
        // Σ_k (−1)^k ω^{2k} t^{j+2k+1} / ((2k)! (j+2k+1))
        let mut term = t.powi(j as i32 + 1);
        let mut sum = 0.0;
        for k in 0..40u32 {
            let add = term / (j + 2 * k + 1) as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs().max(1e-300) {
                break;
            }
            term *= -x * x / ((2 * k + 1) * (2 * k + 2)) as f64;
        }
        sum
    } else {
        // I_j = t^j e^{iωt}/(iω) − (j/(iω)) I_{j−1}
        let iw = Complex64::new(0.0, freq);
        let e = Complex64::new(0.0, x).exp();
        let mut acc = (e - 1.0) / iw;
        for k in 1..=j {
            acc = (e * t.powi(k as i32) - acc * k as f64) / iw;
        }
        acc.re
    }
}

/// `∫₀ᵗ c(u) u^j du`, in closed form for the constant, exponential and
/// cosine coefficients and by a fine trapezoid otherwise.
pub fn weighted_power_integral(c: &CoefficientFn, j: u32, t: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok(match c {
        CoefficientFn::Constant(v) => v * t.powi(j as i32 + 1) / (j + 1) as f64,
        CoefficientFn::ScaledExp { scale, rate } if *rate == 0.0 => scale * t.powi(j as i32 + 1) / (j + 1) as f64,
        CoefficientFn::ScaledExp { scale, rate } => scale * exp_moment(j, *rate, t),
        CoefficientFn::ScaledCos { scale, freq } => scale * cos_moment(j, *freq, t),
        _ => fine_trapz(c, j, t)?,
    })
}

/// `L(m; c) = m!/(2^{m/2}(m/2)!) ∫₀ᵗ c(u) u^{m/2} du`, i.e. `∫₀ᵗ c(u) E[W_u^m] du`.
pub fn l_integral(m: u32, c: &CoefficientFn, t: f64) -> Result<f64> {
    if m % 2 == 1 {
        return Err(Error::InvalidParameter(format!("L(m; c) needs an even m, got {m}")));
    }
    Ok(wiener_moment(m, 1.0) * weighted_power_integral(c, m / 2, t)?)
}

/// Closed-form `E[R_t]` (needs `a ≡ 0` and constant `σ`).
pub fn case1_mean(cfg: &Case1Config, t: f64) -> Result<f64> {
    Ok(case1_mean_tagged(cfg, t)?.0)
}

fn case1_mean_tagged(cfg: &Case1Config, t: f64) -> Result<(f64, MomentMethod)> {
    let sigma = cfg.moment_sigma()?;
    let m = cfg.m;
    if cfg.slope == 0.0 {
        return Ok(if m.is_multiple_of(2) {
            (cfg.level + sigma.powi(m as i32) * l_integral(m, &cfg.c, t)?, MomentMethod::ExactEven)
        } else {
            (cfg.level, MomentMethod::ExactOdd)
        });
    }
    // σ^m (c₁/σ)^{m−2j} = σ^{2j} c₁^{m−2j}
    let mut sum = 0.0;
    for j in 0..=m / 2 {
        let coef =
            binomial(m as u64, (m - 2 * j) as u64) * cfg.c1_power((m - 2 * j) as i64)? * sigma.powi(2 * j as i32);
        sum += coef * wiener_moment(2 * j, 1.0) * weighted_power_integral(&cfg.c, j, t)?;
    }
    Ok((cfg.level + sum, MomentMethod::BinomialSum))
}

fn check_time(t: f64) -> Result<()> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("time must be nonnegative, got {t}")));
    }
    Ok(())
}

// ∫₀^{tᵢ}∫₀^{tᵢ} c(s)c(u)K(s,u) on a grid refined so that the last interval
// has at least VARIANCE_PANELS panels, sampled back on `times`.
fn double_integral_curve(c: &CoefficientFn, times: &[f64], kernel: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
    check_uniform(times)?;
    let steps = times.len() - 1;
    let refine = VARIANCE_PANELS.div_ceil(steps).max(1);
    let end = times[steps];
    let fine: Vec<f64> = (0..=steps * refine).map(|i| end * i as f64 / (steps * refine) as f64).collect();
    let cv = c.sample(&fine)?;
    let cum = cumulative_double_trapz_sym(&fine, |i, j| cv[i] * cv[j] * kernel(fine[i], fine[j]))?;
    Ok(cum.into_iter().step_by(refine).collect())
}

fn check_uniform(times: &[f64]) -> Result<()> {
    if times.len() < 2 || times[0] != 0.0 {
        return Err(Error::InvalidParameter("moment curves need a grid starting at 0 with ≥ 2 nodes".into()));
    }
    let h = times[1] - times[0];
    if times.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0)) || !(h > 0.0) {
        return Err(Error::InvalidParameter("moment curves need a uniform increasing grid".into()));
    }
    Ok(())
}

fn single_grid(t: f64) -> Vec<f64> {
    (0..=VARIANCE_PANELS).map(|i| t * i as f64 / VARIANCE_PANELS as f64).collect()
}

/// `Var[R_t]` by double quadrature with [`VARIANCE_PANELS`] panels.
///
/// For `B = 0` this is exact up to quadrature: with the corrected kernel it
/// is `σ^{2m} ∫∫ c(s)c(u) Cov(W_s^m, W_u^m)`, with [`KernelMode::Literal`]
/// the unscaled kernel is used in `σ^{2m}[∫∫ c c E_m − L²]`. For `B ≠ 0` the
/// integrand is linearized around `W = 0`, giving
/// `m² c₁^{2m−2} σ² ∫∫ c(s)c(u) min(s,u)` (tagged [`MomentMethod::TaylorApprox`]);
/// the literal mode evaluates the printed second-moment-like expression.
pub fn case1_variance(cfg: &Case1Config, t: f64, mode: KernelMode) -> Result<f64> {
    check_time(t)?;
    if t == 0.0 {
        cfg.moment_sigma()?;
        return Ok(0.0);
    }
    Ok(*case1_variance_curve(cfg, &single_grid(t), mode)?.0.last().unwrap())
}

/// [`case1_variance`] at every node of a uniform grid starting at 0.
pub fn case1_variance_curve(cfg: &Case1Config, times: &[f64], mode: KernelMode) -> Result<(Vec<f64>, MomentMethod)> {
    let sigma = cfg.moment_sigma()?;
    let m = cfg.m;
    if cfg.slope == 0.0 {
        let method = if m.is_multiple_of(2) { MomentMethod::ExactEven } else { MomentMethod::ExactOdd };
        let scale = sigma.powi(2 * m as i32);
        let curve = match mode {
            KernelMode::Corrected => double_integral_curve(&cfg.c, times, |s, u| {
                product_kernel(m, s, u, mode) - wiener_moment(m, s) * wiener_moment(m, u)
            })?
            .into_iter()
            .map(|v| scale * v)
            .collect(),
            KernelMode::Literal => {
                let dbl = double_integral_curve(&cfg.c, times, |s, u| product_kernel(m, s, u, mode))?;
                times
                    .iter()
                    .zip(dbl)
                    .map(|(&t, d)| {
                        let l = if m.is_multiple_of(2) { l_integral(m, &cfg.c, t)? } else { 0.0 };
                        Ok(scale * (d - l * l))
                    })
                    .collect::<Result<Vec<f64>>>()?
            }
        };
        return Ok((curve, method));
    }
    let mi = m as i32;
    let c1m = cfg.c1_power(m as i64)?;
    let c1_2m_2 = cfg.c1_power(2 * m as i64 - 2)?;
    let dbl = double_integral_curve(&cfg.c, times, f64::min)?;
    let curve = match mode {
        KernelMode::Corrected => dbl.into_iter().map(|d| (mi * mi) as f64 * c1_2m_2 * sigma * sigma * d).collect(),
        KernelMode::Literal => {
            let a = cfg.level;
            let c1_m_1 = cfg.c1_power(m as i64 - 1)?;
            times
                .iter()
                .zip(dbl)
                .map(|(&t, d)| {
                    let ic = weighted_power_integral(&cfg.c, 0, t)?;
                    Ok(a * a
                        + 2.0 * a * mi as f64 * c1_m_1 * sigma * ic
                        + (mi * mi) as f64 * sigma * sigma * c1_2m_2 * ic * ic
                        + c1m * c1m * d)
                })
                .collect::<Result<Vec<f64>>>()?
        }
    };
    Ok((curve, MomentMethod::TaylorApprox))
}

/// Mean and variance curves on a uniform grid starting at 0.
pub fn case1_moments(cfg: &Case1Config, times: &[f64], mode: KernelMode) -> Result<MomentReport> {
    let mut mean = Vec::with_capacity(times.len());
    let mut mean_method = MomentMethod::ExactOdd;
    for &t in times {
        let (v, method) = case1_mean_tagged(cfg, t)?;
        mean.push(v);
        mean_method = method;
    }
    let (variance, variance_method) = case1_variance_curve(cfg, times, mode)?;
    Ok(MomentReport { times: times.to_vec(), mean, variance, mean_method, variance_method, kernel: mode })
}

/// Mean for constant `c` in hypergeometric form:
/// `A + B t c^{1−m} ₃F₁([1, −m/2, 1/2 − m/2]; [2]; 2c²σ²t B^{−2/m})`.
///
/// For `c ≠ 1` this differs from [`case1_mean`]; both are exposed so the
/// discrepancy can be inspected.
pub fn case1_mean_hypergeom(m: u32, c: f64, sigma: f64, level: f64, slope: f64, t: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be positive".into()));
    }
    if slope == 0.0 {
        return Err(Error::InvalidParameter("the hypergeometric form needs B ≠ 0".into()));
    }
    let mf = m as f64;
    let b_pow = power(slope, RationalExponent::new(-2, m as i64)?, PowerMode::OddRootReal)?;
    let x = 2.0 * c * c * sigma * sigma * t * b_pow;
    let f = hypergeom_3f1_terminating([1.0, -mf / 2.0, 0.5 - mf / 2.0], 2.0, x)?;
    Ok(level + slope * t * c.powi(1 - m as i32) * f)
}

/// The Gamma-kernel lower-bound expression for even `m` and `c > 0`:
///
/// ```text
/// σ^{2m} m! ( m! 2^m Γ(m + 1/2) t² / (√π Γ(m+1)²) − t^{m/2+1} max c / ((m/2+1)! 2^{m/2}) )
/// ```
///
/// Returned as a diagnostic; it is not a valid bound in general (for
/// `m = 2, c ≡ 1, σ = t = 1` it gives 2.5 while the variance is 1/3).
pub fn variance_lower_bound(m: u32, c: &CoefficientFn, sigma: f64, t: f64) -> Result<f64> {
    if m == 0 || m % 2 == 1 {
        return Err(Error::InvalidParameter(format!("the bound needs an even positive m, got {m}")));
    }
    check_time(t)?;
    let scan = 2000;
    for i in 0..=scan {
        let u = t * i as f64 / scan as f64;
        let v = c.eval(u)?;
        if !(v > 0.0) {
            return Err(Error::InvalidParameter(format!("the bound needs c > 0, got c({u}) = {v}")));
        }
    }
    let cmax = c.max_on(t, scan)?;
    let mf = m as f64;
    let fact = factorial(m as u64);
    let gamma_ratio = (ln_gamma(mf + 0.5) - 2.0 * ln_gamma(mf + 1.0)).exp();
    let first = fact * 2f64.powi(m as i32) * gamma_ratio * t * t / PI.sqrt();
    let second = t.powf(mf / 2.0 + 1.0) * cmax / (factorial((m / 2 + 1) as u64) * 2f64.powf(mf / 2.0));
    Ok(sigma.powi(2 * m as i32) * fact * (first - second))
}
