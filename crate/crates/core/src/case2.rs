//! The configuration `k = n = 0, l = 2`, constant `σ`, with the
//! path-dependent slope coefficient `b(t) = −σ/2 − a(t)(W_t − t/2)²σ²`.
//!
//! The transformed state then obeys the Bernoulli equation
//! `dz = σ a z (2u − z) dt`, `u = z + W − t/2`, solved pathwise by
//!
//! ```text
//! z_t = e^{H_t} / (K − σ ∫₀ᵗ e^{H_v} a(v) dv),   H_t = σ ∫₀ᵗ a(v)(2W_v − v) dv,
//! ```
//!
//! with `K = σ (c(0)/B)^{1/m}`, and `R_t = A + ∫₀ᵗ (z + W − u/2)^m σ^m c du`.
//! Linearizing `z` as a functional of the path around `W ≡ 0` gives cheap
//! approximate paths and, for `m = 2`, approximate moments.

use crate::error::{Error, Result};
use crate::kernels::{product_kernel, KernelMode, WienerPath};
use crate::model::{power, CoefficientFn, PowerMode, RationalExponent};
use crate::numerics::{cumtrapz, cumulative_double_trapz_sym};
use crate::sim::{Grid, PathPair, SecondKind};

/// Denominators closer to zero than this make the pathwise solution singular.
pub const SINGULAR_TOL: f64 = 1e-10;

const BLOW_UP: f64 = 1e12;
const MEAN_PANELS: usize = 20_000;
const VARIANCE_PANELS: usize = 2000;

/// Parameters of the path-dependent configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Case2Config {
    pub a: CoefficientFn,
    pub sigma: f64,
    pub c: CoefficientFn,
    pub m: RationalExponent,
    /// Initial level `A`.
    pub level: f64,
    /// Initial slope `B`.
    pub slope: f64,
    pub power_mode: PowerMode,
}

impl Case2Config {
    pub fn new(a: CoefficientFn, sigma: f64, c: CoefficientFn, m: RationalExponent, level: f64, slope: f64) -> Self {
        Case2Config { a, sigma, c, m, level, slope, power_mode: PowerMode::OddRootReal }
    }

    pub fn with_power_mode(mut self, mode: PowerMode) -> Self {
        self.power_mode = mode;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.m.is_zero() || self.m.is_negative() {
            return Err(Error::InvalidParameter(format!("m must be positive, got {}", self.m)));
        }
        if self.slope == 0.0 {
            return Err(Error::InvalidParameter("B must be nonzero".into()));
        }
        Ok(())
    }

    /// `q = (c(0)/B)^{1/m}`.
    pub fn q(&self) -> Result<f64> {
        self.validate()?;
        let c0 = self.c.eval(0.0)?;
        power(c0 / self.slope, self.m.recip()?, self.power_mode)
    }

    /// `K = σ (c(0)/B)^{1/m}`, the reciprocal of `z₀`.
    pub fn big_k(&self) -> Result<f64> {
        Ok(self.sigma * self.q()?)
    }

    /// `p₀ = (B/c(0))^{1/m}`.
    pub fn p0(&self) -> Result<f64> {
        self.validate()?;
        let c0 = self.c.eval(0.0)?;
        power(self.slope / c0, self.m.recip()?, self.power_mode)
    }
}

fn guard(x: f64, step: usize, t: f64) -> Result<f64> {
    if x.is_finite() && x.abs() <= BLOW_UP {
        Ok(x)
    } else {
        Err(Error::BlowUp { step, t })
    }
}

/// Euler–Maruyama on the primal system, evaluating `b` from the same Wiener
/// values that drive the noise.
pub fn simulate_case2_primal(cfg: &Case2Config, grid: &Grid, wiener: &WienerPath) -> Result<PathPair> {
    let times = grid.times();
    if wiener.len() != times.len() {
        return Err(Error::InvalidParameter("Wiener path does not match the grid".into()));
    }
    let (a, c) = (cfg.a.sample(&times)?, cfg.c.sample(&times)?);
    let s = cfg.sigma;
    let dt = grid.dt();
    let w = wiener.values();
    let mut r = vec![cfg.level];
    let mut p = vec![cfg.p0()?];
    let (mut ri, mut pi) = (r[0], p[0]);
    for i in 0..grid.steps() {
        let drift_w = w[i] - times[i] / 2.0;
        let b = -s / 2.0 - a[i] * drift_w * drift_w * s * s;
        let dr = c[i] * power(pi, cfg.m, cfg.power_mode).map_err(|e| e.at_step(i))? * dt;
        ri = guard(ri + dr, i + 1, times[i + 1])?;
        pi = guard(pi + (a[i] * pi * pi + b) * dt + s * (w[i + 1] - w[i]), i + 1, times[i + 1])?;
        r.push(ri);
        p.push(pi);
    }
    Ok(PathPair { times, rate: r, second: p, kind: SecondKind::Force })
}

/// Pathwise Bernoulli solution `z` by nested cumulative trapezoids.
pub fn bernoulli_z(cfg: &Case2Config, wiener: &WienerPath) -> Result<Vec<f64>> {
    let times = wiener.times();
    let w = wiener.values();
    let a = cfg.a.sample(times)?;
    let k = cfg.big_k()?;
    let s = cfg.sigma;
    let h_integrand: Vec<f64> = (0..times.len()).map(|i| a[i] * (2.0 * w[i] - times[i])).collect();
    let eh: Vec<f64> = cumtrapz(times, &h_integrand)?.into_iter().map(|h| (s * h).exp()).collect();
    let ea: Vec<f64> = eh.iter().zip(&a).map(|(e, a)| e * a).collect();
    let acc = cumtrapz(times, &ea)?;
    (0..times.len())
        .map(|i| {
            let d = k - s * acc[i];
            if d.abs() < SINGULAR_TOL {
                Err(Error::Singular { t: times[i], value: d })
            } else {
                Ok(eh[i] / d)
            }
        })
        .collect()
}

fn rate_from_bracket(cfg: &Case2Config, times: &[f64], bracket: &[f64]) -> Result<Vec<f64>> {
    let c = cfg.c.sample(times)?;
    let sm = power(cfg.sigma, cfg.m, cfg.power_mode)?;
    let integrand = (0..times.len())
        .map(|i| Ok(power(bracket[i], cfg.m, cfg.power_mode).map_err(|e| e.at_step(i))? * sm * c[i]))
        .collect::<Result<Vec<f64>>>()?;
    Ok(cumtrapz(times, &integrand)?.into_iter().map(|x| cfg.level + x).collect())
}

/// `R_t = A + ∫₀ᵗ (z_u + W_u − u/2)^m σ^m c(u) du` with `z` from
/// [`bernoulli_z`].
pub fn case2_exact_path(cfg: &Case2Config, wiener: &WienerPath) -> Result<Vec<f64>> {
    let z = bernoulli_z(cfg, wiener)?;
    let times = wiener.times();
    let w = wiener.values();
    let bracket: Vec<f64> = (0..times.len()).map(|i| z[i] + w[i] - times[i] / 2.0).collect();
    rate_from_bracket(cfg, times, &bracket)
}

/// `F(W₀)` and its path derivative `DF(W₀)` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedF {
    pub times: Vec<f64>,
    pub f0: Vec<f64>,
    pub df0: Vec<f64>,
}

/// With `E(u) = e^{−σ∫₀ᵘ a(v) v dv}`, `J(u) = ∫₀ᵘ E a`, `q = (c(0)/B)^{1/m}`:
/// `F(W₀) = E / (σ(q − J))` and `DF(W₀) = a(0) E q / (J − q)²`.
pub fn linearize_f(cfg: &Case2Config, times: &[f64]) -> Result<LinearizedF> {
    let q = cfg.q()?;
    let s = cfg.sigma;
    let a = cfg.a.sample(times)?;
    let av: Vec<f64> = a.iter().zip(times).map(|(a, v)| a * v).collect();
    let e: Vec<f64> = cumtrapz(times, &av)?.into_iter().map(|x| (-s * x).exp()).collect();
    let ea: Vec<f64> = e.iter().zip(&a).map(|(e, a)| e * a).collect();
    let j = cumtrapz(times, &ea)?;
    let a0 = a[0];
    let mut f0 = Vec::with_capacity(times.len());
    let mut df0 = Vec::with_capacity(times.len());
    for i in 0..times.len() {
        let d = q - j[i];
        if (s * d).abs() < SINGULAR_TOL {
            return Err(Error::Singular { t: times[i], value: s * d });
        }
        f0.push(e[i] / (s * d));
        df0.push(a0 * e[i] * q / (d * d));
    }
    Ok(LinearizedF { times: times.to_vec(), f0, df0 })
}

/// `R_t ≈ A + ∫₀ᵗ (F(W₀) + (DF(W₀) + 1) W_u − u/2)^m σ^m c(u) du`.
pub fn case2_linearized_path(cfg: &Case2Config, lin: &LinearizedF, wiener: &WienerPath) -> Result<Vec<f64>> {
    let times = wiener.times();
    if lin.times.len() != times.len() {
        return Err(Error::InvalidParameter("linearization and Wiener path use different grids".into()));
    }
    let w = wiener.values();
    let bracket: Vec<f64> = (0..times.len()).map(|i| lin.f0[i] + (lin.df0[i] + 1.0) * w[i] - times[i] / 2.0).collect();
    rate_from_bracket(cfg, times, &bracket)
}

fn uniform(end: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| end * i as f64 / steps as f64).collect()
}

fn require_m2(cfg: &Case2Config) -> Result<()> {
    if cfg.m != RationalExponent::integer(2) {
        return Err(Error::Unsupported(format!("approximate moments are derived for m = 2 only, got {}", cfg.m)));
    }
    Ok(())
}

// α = F₀ − u/2 and β = DF₀ + 1 on the linearization grid
fn alpha_beta(lin: &LinearizedF) -> (Vec<f64>, Vec<f64>) {
    let alpha = lin.f0.iter().zip(&lin.times).map(|(f, u)| f - u / 2.0).collect();
    let beta = lin.df0.iter().map(|d| d + 1.0).collect();
    (alpha, beta)
}

fn mean_integrand(cfg: &Case2Config, lin: &LinearizedF) -> Result<Vec<f64>> {
    let c = cfg.c.sample(&lin.times)?;
    let (alpha, beta) = alpha_beta(lin);
    let s2 = cfg.sigma * cfg.sigma;
    Ok((0..lin.times.len()).map(|i| (alpha[i] * alpha[i] + beta[i] * beta[i] * lin.times[i]) * s2 * c[i]).collect())
}

// Cumulative mean and variance on `times` (uniform, from 0).
fn variance_curve(cfg: &Case2Config, times: &[f64], mode: KernelMode) -> Result<Vec<f64>> {
    let lin = linearize_f(cfg, times)?;
    let c = cfg.c.sample(times)?;
    let (al, be) = alpha_beta(&lin);
    let s = cfg.sigma;
    let mean_part = cumtrapz(times, &mean_integrand(cfg, &lin)?)?;
    let kernel = |i: usize, j: usize| -> f64 {
        let (u, v) = (times[i], times[j]);
        let (a2u, a2v, b2u, b2v) = (al[i] * al[i], al[j] * al[j], be[i] * be[i], be[j] * be[j]);
        let cross = 4.0 * al[i] * al[j] * be[i] * be[j];
        let body = match mode {
            KernelMode::Corrected => {
                a2u * a2v
                    + a2u * b2v * v
                    + b2u * a2v * u
                    + cross * product_kernel(1, u, v, mode)
                    + b2u * b2v * product_kernel(2, u, v, mode)
            }
            KernelMode::Literal => {
                a2u * a2v
                    + a2u * b2u * v
                    + a2v * b2v * u
                    + cross * product_kernel(1, u, v, mode)
                    + b2u * b2v * product_kernel(2, u, v, mode)
            }
        };
        c[i] * c[j] * body
    };
    let dbl = cumulative_double_trapz_sym(times, kernel)?;
    let prefactor = match mode {
        KernelMode::Corrected => s.powi(4),
        KernelMode::Literal => s * s,
    };
    Ok(dbl.iter().zip(&mean_part).map(|(d, m)| prefactor * d - m * m).collect())
}

/// Approximate `(E[R_t], Var[R_t])` for `m = 2` from the linearized path.
///
/// With `α = F(W₀) − u/2` and `β = DF(W₀) + 1` the linearized integrand is
/// `σ² c (α + β W)²`, so the mean is `A + ∫ σ² c (α² + β² u)` and the
/// variance is `σ⁴ ∫∫ c c E[(α+βW_u)²(α+βW_s)²]` minus the squared mean
/// integral. [`KernelMode::Literal`] evaluates the published variant of
/// this double integral instead (prefactor `σ²`, unscaled kernels).
pub fn case2_approx_moments_m2(cfg: &Case2Config, t: f64, mode: KernelMode) -> Result<(f64, f64)> {
    require_m2(cfg)?;
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("time must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        cfg.q()?;
        return Ok((cfg.level, 0.0));
    }
    let fine = uniform(t, MEAN_PANELS);
    let lin = linearize_f(cfg, &fine)?;
    let mean = cfg.level + *cumtrapz(&fine, &mean_integrand(cfg, &lin)?)?.last().unwrap();
    let var = *variance_curve(cfg, &uniform(t, VARIANCE_PANELS), mode)?.last().unwrap();
    Ok((mean, var))
}

/// [`case2_approx_moments_m2`] at every node of a uniform grid from 0.
pub fn case2_approx_moment_curves(cfg: &Case2Config, times: &[f64], mode: KernelMode) -> Result<(Vec<f64>, Vec<f64>)> {
    require_m2(cfg)?;
    let steps = times.len().saturating_sub(1);
    if steps == 0 || times[0] != 0.0 {
        return Err(Error::InvalidParameter("moment curves need a grid starting at 0 with ≥ 2 nodes".into()));
    }
    let end = times[steps];
    let refine = MEAN_PANELS.div_ceil(steps);
    let fine = uniform(end, steps * refine);
    let lin = linearize_f(cfg, &fine)?;
    let mean =
        cumtrapz(&fine, &mean_integrand(cfg, &lin)?)?.into_iter().step_by(refine).map(|x| cfg.level + x).collect();
    let refine = VARIANCE_PANELS.div_ceil(steps);
    let var = variance_curve(cfg, &uniform(end, steps * refine), mode)?.into_iter().step_by(refine).collect();
    Ok((mean, var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{generate_wiener, path_seed};
    use crate::numerics::double_trapz_fn;

    fn fig6a() -> Case2Config {
        Case2Config::new(
            (-1.0).into(),
            0.05,
            CoefficientFn::ScaledExp { scale: -1.0, rate: 1.0 },
            RationalExponent::integer(2),
            0.02,
            -0.025,
        )
    }

    #[test]
    fn zero_slope_is_rejected() {
        let cfg = Case2Config { slope: 0.0, ..fig6a() };
        assert!(cfg.big_k().is_err());
        let grid = Grid::new(1.0, 10).unwrap();
        let w = generate_wiener(&grid.times(), 1).unwrap();
        assert!(simulate_case2_primal(&cfg, &grid, &w).is_err());
    }

    #[test]
    fn a_zero_collapses_to_affine_force() {
        let cfg = Case2Config { a: 0.0.into(), ..fig6a() };
        let grid = Grid::new(2.0, 2000).unwrap();
        let w = generate_wiener(&grid.times(), 3).unwrap();
        let pair = simulate_case2_primal(&cfg, &grid, &w).unwrap();
        let p0 = cfg.p0().unwrap();
        for (i, p) in pair.second.iter().enumerate() {
            let t = pair.times[i];
            assert!((p - (p0 + 0.05 * (w.values()[i] - t / 2.0))).abs() < 1e-12);
        }
        let z = bernoulli_z(&cfg, &w).unwrap();
        let k = cfg.big_k().unwrap();
        assert!(z.iter().all(|&zi| (zi - 1.0 / k).abs() < 1e-15));
    }

    #[test]
    fn z0_round_trips() {
        let cfg = fig6a();
        let w = WienerPath::zero(&uniform(1.0, 10)).unwrap();
        let z = bernoulli_z(&cfg, &w).unwrap();
        assert!((z[0] - cfg.p0().unwrap() / cfg.sigma).abs() < 1e-12);
    }

    #[test]
    fn singular_denominator_is_reported() {
        // c(0)/B = 1e−30 makes K vanish at t = 0
        let cfg = Case2Config::new(1.0.into(), 1.0, 1e-32.into(), RationalExponent::integer(1), 0.02, 0.01);
        let times = uniform(1.0, 10);
        let w = WienerPath::zero(&times).unwrap();
        assert!(matches!(bernoulli_z(&cfg, &w), Err(Error::Singular { .. })));
        assert!(matches!(linearize_f(&cfg, &times), Err(Error::Singular { .. })));
    }

    #[test]
    fn linearization_at_zero() {
        let cfg = Case2Config { a: 0.0.into(), ..fig6a() };
        let lin = linearize_f(&cfg, &uniform(5.0, 50)).unwrap();
        let k = cfg.big_k().unwrap();
        assert!(lin.f0.iter().all(|&f| (f - 1.0 / k).abs() < 1e-15));
        assert!(lin.df0.iter().all(|&d| d == 0.0));
        let cfg = fig6a();
        let lin = linearize_f(&cfg, &uniform(5.0, 50)).unwrap();
        assert!((lin.f0[0] - 1.0 / cfg.big_k().unwrap()).abs() < 1e-15);
        assert!((lin.df0[0] - -cfg.p0().unwrap()).abs() < 1e-15);
    }

    #[test]
    fn f0_is_the_zero_noise_solution() {
        let cfg = fig6a();
        let times = uniform(5.0, 5000);
        let lin = linearize_f(&cfg, &times).unwrap();
        let z = bernoulli_z(&cfg, &WienerPath::zero(&times).unwrap()).unwrap();
        for (f, z) in lin.f0.iter().zip(&z) {
            assert!((f - z).abs() <= 1e-3 * (1.0 + z.abs()));
        }
    }

    #[test]
    fn degenerate_linearization_is_exact() {
        let cfg = Case2Config { a: 0.0.into(), ..fig6a() };
        let times = uniform(3.0, 600);
        let w = generate_wiener(&times, path_seed(2, 2)).unwrap();
        let lin = linearize_f(&cfg, &times).unwrap();
        let exact = case2_exact_path(&cfg, &w).unwrap();
        let approx = case2_linearized_path(&cfg, &lin, &w).unwrap();
        for (x, y) in exact.iter().zip(&approx) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
        assert_eq!(exact[0], cfg.level);
    }

    #[test]
    fn polynomial_mean_for_a_zero() {
        let cbar: f64 = 0.1;
        let cfg = Case2Config { a: 0.0.into(), c: (-cbar).into(), ..fig6a() };
        let f = 1.0 / cfg.big_k().unwrap();
        let t: f64 = 5.0;
        // ∫₀ᵗ (f − u/2)² + u du
        let poly = f * f * t - f * t * t / 2.0 + t.powi(3) / 12.0 + t * t / 2.0;
        let want = cfg.level - cbar * cfg.sigma * cfg.sigma * poly;
        let (mean, var) = case2_approx_moments_m2(&cfg, t, KernelMode::Corrected).unwrap();
        assert!((mean - want).abs() < 1e-10, "{mean} vs {want}");
        assert!(var > 0.0);
        assert_eq!(case2_approx_moments_m2(&cfg, 0.0, KernelMode::Corrected).unwrap(), (cfg.level, 0.0));
        let other = Case2Config { m: RationalExponent::integer(1), ..cfg };
        assert!(matches!(case2_approx_moments_m2(&other, 1.0, KernelMode::Corrected), Err(Error::Unsupported(_))));
    }

    #[test]
    fn corrected_variance_for_a_zero() {
        // a ≡ 0: R − A = σ² ∫ c (f + W − u/2)², whose variance is
        // σ⁴ ∫∫ c c [4 α_u α_s min + 2 min²]
        let cfg = Case2Config { a: 0.0.into(), c: (-1.0).into(), ..fig6a() };
        let t = 1.0;
        let f = 1.0 / cfg.big_k().unwrap();
        let times = uniform(t, 2000);
        let direct = double_trapz_fn(&times, |i, j| {
            let (u, s) = (times[i], times[j]);
            let m = u.min(s);
            4.0 * (f - u / 2.0) * (f - s / 2.0) * m + 2.0 * m * m
        })
        .unwrap()
            * cfg.sigma.powi(4);
        let (_, var) = case2_approx_moments_m2(&cfg, t, KernelMode::Corrected).unwrap();
        assert!((var - direct).abs() <= 1e-9 * direct, "{var} vs {direct}");
    }

    #[test]
    fn variance_integrand_is_symmetric() {
        let cfg = fig6a();
        let times = uniform(2.0, 200);
        let lin = linearize_f(&cfg, &times).unwrap();
        let (al, be) = alpha_beta(&lin);
        let c = cfg.c.sample(&times).unwrap();
        let f = |i: usize, j: usize| {
            let (u, s) = (times[i], times[j]);
            c[i] * c[j]
                * (al[i] * al[i] * al[j] * al[j]
                    + al[i] * al[i] * be[j] * be[j] * s
                    + be[i] * be[i] * al[j] * al[j] * u
                    + 4.0 * al[i] * al[j] * be[i] * be[j] * u.min(s)
                    + be[i] * be[i] * be[j] * be[j] * (u * s + 2.0 * u.min(s).powi(2)))
        };
        let a = double_trapz_fn(&times, f).unwrap();
        let b = double_trapz_fn(&times, |i, j| f(j, i)).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn curves_agree_with_pointwise_moments() {
        let cfg = fig6a();
        let times = uniform(2.0, 20);
        let (mean, var) = case2_approx_moment_curves(&cfg, &times, KernelMode::Corrected).unwrap();
        let (m, v) = case2_approx_moments_m2(&cfg, 2.0, KernelMode::Corrected).unwrap();
        assert!((mean[20] - m).abs() < 1e-12);
        assert!((var[20] - v).abs() < 1e-9 * v.abs());
    }

    #[test]
    fn half_exponent_needs_signed_power_when_bracket_goes_negative() {
        let cfg = Case2Config::new(
            1.0.into(),
            0.01,
            CoefficientFn::ScaledExp { scale: -1.0, rate: 1.0 },
            RationalExponent::new(1, 2).unwrap(),
            0.02,
            -0.025,
        )
        .with_power_mode(PowerMode::SignedPower);
        let times = uniform(5.0, 500);
        let w = generate_wiener(&times, 1).unwrap();
        assert!(case2_exact_path(&cfg, &w).is_ok());
    }
}
