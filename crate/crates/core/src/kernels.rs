//! Seeded Wiener paths and closed-form Gaussian moment machinery.
//!
//! `wiener_moment` gives `E[W_t^k]`; `gaussian_product_moment` gives
//! `E[Z₁^{s1} Z₂^{s2}]` for a zero-mean bivariate normal; and
//! `wiener_product_moment` specializes it to `E[W_s^m W_u^m]`, the kernel of
//! every variance formula in this crate.
//!
//! The odd-odd product moment is normalized by `2^{(s1+s2)/2}`. The
//! [`KernelMode::Literal`] variant keeps the uncorrected `2^{(s1+s2−2)/2}`
//! normalization (which doubles `E[Z₁Z₂]`) and the unscaled correlation
//! kernel, so the discrepancy can be shown side by side.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::factorial;

// SplitMix64 finalizer; a bijection on u64.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-path seed: `mix(master + mix(index + φ))` with `mix` the SplitMix64
/// finalizer and `φ = 0x9e3779b97f4a7c15`. Every step is a bijection, so the
/// map is injective in `index` for a fixed master seed.
pub fn path_seed(master: u64, index: u64) -> u64 {
    mix(master.wrapping_add(mix(index.wrapping_add(0x9e37_79b9_7f4a_7c15))))
}

/// A discretized Brownian trajectory with `W(t₀) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    times: Vec<f64>,
    values: Vec<f64>,
}

fn check_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidParameter("empty time grid".into()));
    }
    if times[0] != 0.0 {
        return Err(Error::InvalidParameter(format!("time grid must start at 0, got {}", times[0])));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("time grid must be strictly increasing".into()));
    }
    Ok(())
}

impl WienerPath {
    pub fn from_values(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_grid(&times)?;
        if values.len() != times.len() || values[0] != 0.0 {
            return Err(Error::InvalidParameter("Wiener values must match the grid and start at 0".into()));
        }
        Ok(WienerPath { times, values })
    }

    /// The identically zero path.
    pub fn zero(times: &[f64]) -> Result<Self> {
        check_grid(times)?;
        Ok(WienerPath { times: times.to_vec(), values: vec![0.0; times.len()] })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// The reflected path `−W`.
    pub fn negated(&self) -> Self {
        WienerPath { times: self.times.clone(), values: self.values.iter().map(|v| -v).collect() }
    }

    /// Every `stride`-th node; the last node must be kept.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 || !(self.len() - 1).is_multiple_of(stride) {
            return Err(Error::InvalidParameter(format!("stride {stride} does not divide {} steps", self.len() - 1)));
        }
        Ok(WienerPath {
            times: self.times.iter().step_by(stride).copied().collect(),
            values: self.values.iter().step_by(stride).copied().collect(),
        })
    }
}

/// Draws a Wiener path on `times` (strictly increasing, starting at 0) with
/// independent `N(0, Δt)` increments from a ChaCha8 stream keyed by `seed`.
pub fn generate_wiener(times: &[f64], seed: u64) -> Result<WienerPath> {
    check_grid(times)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(times.len());
    let mut w = 0.0;
    values.push(w);
    for pair in times.windows(2) {
        let z: f64 = rng.sample(StandardNormal);
        w += (pair[1] - pair[0]).sqrt() * z;
        values.push(w);
    }
    Ok(WienerPath { times: times.to_vec(), values })
}

/// `E[W_t^k]`: zero for odd `k`, `k!/(2^{k/2}(k/2)!)·t^{k/2}` for even `k`.
pub fn wiener_moment(k: u32, t: f64) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let half = k / 2;
    factorial(k as u64) / (2f64.powi(half as i32) * factorial(half as u64)) * t.powi(half as i32)
}

/// Normalization of the product-moment kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum KernelMode {
    /// Normalization that agrees with direct quadrature and Monte Carlo.
    #[default]
    Corrected,
    /// The uncorrected published normalization, kept for comparison only.
    Literal,
}

impl fmt::Display for KernelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelMode::Corrected => "corrected",
            KernelMode::Literal => "paper",
        })
    }
}

impl FromStr for KernelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "corrected" => Ok(KernelMode::Corrected),
            "paper" | "literal" => Ok(KernelMode::Literal),
            other => Err(Error::InvalidParameter(format!("kernel mode `{other}` (expected corrected|paper)"))),
        }
    }
}

// (s1! s2!) Σ_j (2ρ)^{2j+o} / ((2j+o)! ((s1−o)/2−j)! ((s2−o)/2−j)!)
// with o = s1 mod 2; both exponents share parity.
fn isserlis_sum(s1: u32, s2: u32, rho: f64) -> f64 {
    let odd = s1 % 2;
    let h1 = (s1 - odd) / 2;
    let h2 = (s2 - odd) / 2;
    let two_rho = 2.0 * rho;
    (0..=h1.min(h2))
        .map(|j| {
            let p = 2 * j + odd;
            two_rho.powi(p as i32) / (factorial(p as u64) * factorial((h1 - j) as u64) * factorial((h2 - j) as u64))
        })
        .sum::<f64>()
        * factorial(s1 as u64)
        * factorial(s2 as u64)
}

/// `E[Z₁^{s1} Z₂^{s2}]` for a zero-mean bivariate normal with standard
/// deviations `sd1`, `sd2` and correlation `rho`.
pub fn gaussian_product_moment(s1: u32, s2: u32, sd1: f64, sd2: f64, rho: f64) -> f64 {
    gaussian_product_moment_with(s1, s2, sd1, sd2, rho, KernelMode::Corrected)
}

/// As [`gaussian_product_moment`], with the odd-odd normalization chosen by
/// `mode`. Even-even moments are identical in both modes.
pub fn gaussian_product_moment_with(s1: u32, s2: u32, sd1: f64, sd2: f64, rho: f64, mode: KernelMode) -> f64 {
    if (s1 + s2) % 2 == 1 {
        return 0.0;
    }
    let half = (s1 + s2) / 2;
    let norm_exp = match (mode, s1 % 2) {
        (KernelMode::Literal, 1) => half - 1,
        _ => half,
    };
    sd1.powi(s1 as i32) * sd2.powi(s2 as i32) * isserlis_sum(s1, s2, rho) / 2f64.powi(norm_exp as i32)
}

/// `E[W_s^m · W_u^m]` for `s, u > 0`.
pub fn wiener_product_moment(m: u32, s: f64, u: f64) -> Result<f64> {
    if !(s > 0.0 && u > 0.0) {
        return Err(Error::InvalidParameter(format!("times must be positive, got s={s}, u={u}")));
    }
    Ok(product_kernel(m, s, u, KernelMode::Corrected))
}

/// Correlation of `W_s` and `W_u`, `min(s,u)/√(su)`, extended by continuity:
/// 0 when exactly one time is 0, 1 when both are.
pub fn wiener_correlation(s: f64, u: f64) -> f64 {
    match (s == 0.0, u == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => s.min(u) / (s * u).sqrt(),
    }
}

/// Kernel used inside variance double integrals, defined for `s, u ≥ 0`.
///
/// `Corrected` returns `E[W_s^m W_u^m]` (zero on the axes, since `W₀ = 0`).
/// `Literal` returns the unscaled correlation kernel
/// `(m!)²/2^m Σ_j (2ρ)^{2j(+1)} / ((2j(+1))! ((m(−1))/2−j)!²)` with no
/// `(su)^{m/2}` factor.
pub fn product_kernel(m: u32, s: f64, u: f64, mode: KernelMode) -> f64 {
    let rho = wiener_correlation(s, u);
    match mode {
        KernelMode::Corrected => {
            if s == 0.0 || u == 0.0 {
                return if m == 0 { 1.0 } else { 0.0 };
            }
            (s * u).powf(m as f64 / 2.0) * isserlis_sum(m, m, rho) / 2f64.powi(m as i32)
        }
        KernelMode::Literal => isserlis_sum(m, m, rho) / 2f64.powi(m as i32),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gauss_hermite_2d_moment;
    use proptest::prelude::*;

    fn uniform(end: f64, steps: usize) -> Vec<f64> {
        (0..=steps).map(|i| end * i as f64 / steps as f64).collect()
    }

    #[test]
    fn path_starts_at_zero_and_is_deterministic() {
        let t = uniform(1.0, 100);
        let a = generate_wiener(&t, 42).unwrap();
        let b = generate_wiener(&t, 42).unwrap();
        assert_eq!(a.values()[0], 0.0);
        assert_eq!(a, b);
        assert_ne!(a, generate_wiener(&t, 43).unwrap());
    }

    #[test]
    fn bad_grids_are_rejected() {
        assert!(generate_wiener(&[], 1).is_err());
        assert!(generate_wiener(&[0.0, 0.5, 0.5], 1).is_err());
        assert!(generate_wiener(&[0.1, 0.5], 1).is_err());
    }

    #[test]
    fn subsample_keeps_values() {
        let w = generate_wiener(&uniform(1.0, 8), 3).unwrap();
        let s = w.subsample(4).unwrap();
        assert_eq!(s.values(), &[w.values()[0], w.values()[4], w.values()[8]]);
        assert!(w.subsample(3).is_err());
    }

    #[test]
    fn path_seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..10_000u64 {
            assert!(seen.insert(path_seed(7, i)));
        }
    }

    #[test]
    fn terminal_law_of_wiener_paths() {
        let t = uniform(1.0, 50);
        let n = 10_000;
        let finals: Vec<f64> =
            (0..n).map(|i| *generate_wiener(&t, path_seed(11, i)).unwrap().values().last().unwrap()).collect();
        let mean = finals.iter().sum::<f64>() / n as f64;
        let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn wiener_moment_examples() {
        assert_eq!(wiener_moment(3, 7.0), 0.0);
        assert_eq!(wiener_moment(2, 2.0), 2.0);
        assert_eq!(wiener_moment(4, 2.0), 12.0);
        assert_eq!(wiener_moment(0, 5.0), 1.0);
    }

    #[test]
    fn product_moment_examples() {
        for rho in [-0.7, 0.0, 0.3] {
            assert_eq!(gaussian_product_moment(2, 1, 1.3, 0.4, rho), 0.0);
            assert!((gaussian_product_moment(2, 2, 1.0, 1.0, rho) - (1.0 + 2.0 * rho * rho)).abs() < 1e-15);
            assert!((gaussian_product_moment(1, 1, 1.0, 1.0, rho) - rho).abs() < 1e-15);
            assert!((gaussian_product_moment(3, 1, 1.0, 1.0, rho) - 3.0 * rho).abs() < 1e-14);
            let lit = gaussian_product_moment_with(1, 1, 1.0, 1.0, rho, KernelMode::Literal);
            assert!((lit - 2.0 * rho).abs() < 1e-15);
        }
    }

    #[test]
    fn wiener_product_moment_examples() {
        assert!((wiener_product_moment(1, 0.3, 1.7).unwrap() - 0.3).abs() < 1e-15);
        assert!((wiener_product_moment(2, 1.5, 1.5).unwrap() - 3.0 * 1.5f64.powi(2)).abs() < 1e-14);
        assert!((wiener_product_moment(2, 1.0, 2.0).unwrap() - 4.0).abs() < 1e-14);
        assert!(wiener_product_moment(2, 0.0, 2.0).is_err());
    }

    #[test]
    fn literal_kernel_drops_the_variance_scale() {
        // m = 1: literal kernel is the bare correlation
        let (s, u) = (0.5, 2.0);
        assert!((product_kernel(1, s, u, KernelMode::Literal) - 0.5).abs() < 1e-15);
        assert!((product_kernel(1, s, u, KernelMode::Corrected) - 0.5).abs() < 1e-15);
        let (s, u) = (0.5, 0.5);
        assert!((product_kernel(1, s, u, KernelMode::Literal) - 1.0).abs() < 1e-15);
        assert_eq!(product_kernel(2, 0.0, 1.0, KernelMode::Corrected), 0.0);
    }

    #[test]
    fn kernel_mode_round_trip() {
        for m in [KernelMode::Corrected, KernelMode::Literal] {
            assert_eq!(m.to_string().parse::<KernelMode>().unwrap(), m);
        }
    }

    proptest! {
        #[test]
        fn product_moment_symmetry_and_cauchy_schwarz(m in 1u32..7, s in 0.01f64..5.0, u in 0.01f64..5.0) {
            let su = wiener_product_moment(m, s, u).unwrap();
            let us = wiener_product_moment(m, u, s).unwrap();
            prop_assert!((su - us).abs() <= 1e-12 * su.abs().max(1e-300));
            let bound = wiener_moment(2 * m, s) * wiener_moment(2 * m, u);
            prop_assert!(su * su <= bound * (1.0 + 1e-12));
        }

        #[test]
        fn diagonal_is_a_single_moment(m in 1u32..9, s in 0.01f64..5.0) {
            let d = wiener_product_moment(m, s, s).unwrap();
            let want = wiener_moment(2 * m, s);
            prop_assert!((d - want).abs() <= 1e-12 * want);
        }

        #[test]
        fn product_moment_agrees_with_quadrature(
            s1 in 0u32..9, s2 in 0u32..9,
            rho in prop::sample::select(vec![-0.9f64, -0.5, 0.0, 0.5, 0.9]),
            sd1 in 0.3f64..2.0, sd2 in 0.3f64..2.0,
        ) {
            let exact = gaussian_product_moment(s1, s2, sd1, sd2, rho);
            let quad = gauss_hermite_2d_moment(s1, s2, sd1, sd2, rho, 64).unwrap();
            let scale = (wiener_moment(2 * s1, sd1 * sd1) * wiener_moment(2 * s2, sd2 * sd2)).sqrt();
            prop_assert!((exact - quad).abs() <= 1e-10 * exact.abs().max(scale));
        }
    }
}
