//! Shared numerical kernels: trapezoid quadrature (single, cumulative and
//! tensor-product double), terminating generalized hypergeometric series,
//! Gamma helpers and a Gauss–Hermite rule used as an independent oracle for
//! Gaussian moments.
//!
//! Everything uses the composite trapezoid rule: Wiener paths and the
//! `min(s, u)` kernel are not smooth, so higher-order rules gain nothing and
//! a single rule keeps path and moment grids aligned.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Nodes and composite-trapezoid weights of a uniform grid on `[0, end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadGrid {
    pub fn uniform(end: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(end.is_finite() && end >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "quadrature grid needs steps >= 1 and a finite end >= 0 (got {steps}, {end})"
            )));
        }
        let h = end / steps as f64;
        let nodes: Vec<f64> = (0..=steps).map(|i| if i == steps { end } else { i as f64 * h }).collect();
        let mut weights = vec![h; steps + 1];
        weights[0] = h / 2.0;
        weights[steps] = h / 2.0;
        Ok(QuadGrid { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

fn check_nodes(times: &[f64], values: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::InvalidParameter("quadrature needs at least 2 nodes".into()));
    }
    if times.len() != values.len() {
        return Err(Error::InvalidParameter(format!("{} nodes but {} values", times.len(), values.len())));
    }
    Ok(())
}

/// Trapezoid integral over the whole grid.
pub fn trapz(times: &[f64], values: &[f64]) -> Result<f64> {
    check_nodes(times, values)?;
    Ok(times.windows(2).zip(values.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum())
}

/// Cumulative trapezoid integral; the first entry is 0.
pub fn cumtrapz(times: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    check_nodes(times, values)?;
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for (t, v) in times.windows(2).zip(values.windows(2)) {
        acc += 0.5 * (t[1] - t[0]) * (v[0] + v[1]);
        out.push(acc);
    }
    Ok(out)
}

fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let h = 0.5 * (times[i + 1] - times[i]);
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

/// Tensor-product trapezoid integral of `kernel[i][j] = f(tᵢ, tⱼ)`.
pub fn double_trapz(times: &[f64], kernel: &[Vec<f64>]) -> Result<f64> {
    if kernel.len() != times.len() || kernel.iter().any(|row| row.len() != times.len()) {
        return Err(Error::InvalidParameter("double_trapz needs a square kernel matching the grid".into()));
    }
    double_trapz_fn(times, |i, j| kernel[i][j])
}

/// [`double_trapz`] without materializing the kernel.
pub fn double_trapz_fn(times: &[f64], f: impl Fn(usize, usize) -> f64) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::InvalidParameter("quadrature needs at least 2 nodes".into()));
    }
    let w = trapezoid_weights(times);
    let mut total = 0.0;
    for (i, wi) in w.iter().enumerate() {
        let row: f64 = w.iter().enumerate().map(|(j, wj)| wj * f(i, j)).sum();
        total += wi * row;
    }
    Ok(total)
}

/// `Q[i] = ∫₀^{tᵢ}∫₀^{tᵢ} f` by the tensor trapezoid rule on the nodes
/// `t₀..=tᵢ`, for a symmetric kernel `f(i, j) = f(j, i)`. Costs one kernel
/// evaluation per lower-triangle entry.
pub fn cumulative_double_trapz_sym(times: &[f64], f: impl Fn(usize, usize) -> f64) -> Result<Vec<f64>> {
    if times.len() < 2 {
        return Err(Error::InvalidParameter("quadrature needs at least 2 nodes".into()));
    }
    let n = times.len();
    let mut out = Vec::with_capacity(n);
    out.push(0.0);
    // inner = Σ_{j,k<i} ŵ_j ŵ_k f_jk where ŵ are the weights of [0, t_i] with
    // the right endpoint's half-weight left out; row[j] = Σ_{k<i} ŵ_k f_jk is
    // not stored: each step only needs the new column.
    let mut inner = 0.0;
    let mut hat = Vec::with_capacity(n); // ŵ_j for j < i (full interior weights)
    for i in 1..n {
        // weight of node i-1 becomes its full interior value at step i
        let left = if i >= 2 { 0.5 * (times[i - 1] - times[i - 2]) } else { 0.0 };
        let right = 0.5 * (times[i] - times[i - 1]);
        let w_prev = left + right;
        // add row/column i-1 to `inner`
        let col: f64 = hat.iter().enumerate().map(|(j, wj): (usize, &f64)| wj * f(j, i - 1)).sum();
        inner += 2.0 * w_prev * col + w_prev * w_prev * f(i - 1, i - 1);
        hat.push(w_prev);
        // close the square with the half-weight endpoint i
        let end_w = right;
        let edge: f64 = hat.iter().enumerate().map(|(j, wj)| wj * f(j, i)).sum();
        out.push(inner + 2.0 * end_w * edge + end_w * end_w * f(i, i));
    }
    Ok(out)
}

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

pub fn ln_factorial(n: u64) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// `n!` as a float, exact for `n ≤ 22`.
pub fn factorial(n: u64) -> f64 {
    if n <= 22 {
        (1..=n).fold(1.0, |acc, k| acc * k as f64)
    } else {
        ln_factorial(n).exp()
    }
}

pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    if n <= 22 {
        factorial(n) / (factorial(k) * factorial(n - k))
    } else {
        (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)).exp().round()
    }
}

/// `(k − 1)!!`-type Gaussian moment `E[Z^k] = k! / (2^{k/2} (k/2)!)` for even
/// `k`, zero for odd `k`.
pub fn standard_normal_moment(k: u32) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    (1..k).step_by(2).fold(1.0, |acc, j| acc * j as f64)
}

fn nonpositive_integer(x: f64) -> Option<u64> {
    (x <= 0.0 && x == x.round() && x.abs() < 1e15).then(|| (-x) as u64)
}

/// Terminating `₃F₁([p1, p2, p3]; [q1]; x)`. At least one upper parameter
/// must be a nonpositive integer; the sum stops at that index.
pub fn hypergeom_3f1_terminating(upper: [f64; 3], lower: f64, x: f64) -> Result<f64> {
    let last = upper
        .iter()
        .filter_map(|&p| nonpositive_integer(p))
        .min()
        .ok_or_else(|| Error::Unsupported(format!("3F1 with upper parameters {upper:?} does not terminate")))?;
    if let Some(pole) = nonpositive_integer(lower) {
        if pole < last {
            return Err(Error::Unsupported(format!(
                "3F1 lower parameter {lower} hits a pole before the series terminates"
            )));
        }
    }
    if x == 0.0 || last == 0 {
        return Ok(1.0);
    }
    // Terms in log space with sign tracking.
    let ln_x = x.abs().ln();
    let mut ln_mag = 0.0;
    let mut negative = false;
    let mut sum = 1.0;
    for j in 0..last {
        let jf = j as f64;
        for p in upper {
            let f = p + jf;
            ln_mag += f.abs().ln();
            negative ^= f < 0.0;
        }
        let g = lower + jf;
        ln_mag -= g.abs().ln();
        negative ^= g < 0.0;
        ln_mag -= (jf + 1.0).ln();
        ln_mag += ln_x;
        negative ^= x < 0.0;
        let term = ln_mag.exp();
        sum += if negative { -term } else { term };
    }
    Ok(sum)
}

/// Gauss–Hermite rule for the weight `e^{−x²}`: `(nodes, weights)`, with
/// nodes in increasing order and weights summing to `√π`.
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidParameter("Gauss–Hermite rule needs at least one node".into()));
    }
    const PI_M4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for iter in 0..200 {
            // normalized Hermite recurrence
            let mut p1 = PI_M4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let step = p1 / pp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) || iter == 199 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    x.reverse();
    w.reverse();
    Ok((x, w))
}

/// `E[Z₁^{s1} Z₂^{s2}]` for a zero-mean bivariate normal by tensorized
/// Gauss–Hermite quadrature after decorrelating
/// `Z₂ = ρ(sd2/sd1) Z₁ + √(1−ρ²) sd2 ξ`. `|ρ| = 1` reduces to one dimension.
pub fn gauss_hermite_2d_moment(s1: u32, s2: u32, sd1: f64, sd2: f64, rho: f64, nodes: usize) -> Result<f64> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!("correlation {rho} outside [-1, 1]")));
    }
    if sd1 <= 0.0 || sd2 <= 0.0 {
        return Err(Error::InvalidParameter("standard deviations must be positive".into()));
    }
    let (x, w) = gauss_hermite(nodes)?;
    let root2 = std::f64::consts::SQRT_2;
    if rho.abs() == 1.0 {
        let total: f64 = x
            .iter()
            .zip(&w)
            .map(|(xi, wi)| {
                let g = root2 * xi;
                wi * (sd1 * g).powi(s1 as i32) * (rho * sd2 * g).powi(s2 as i32)
            })
            .sum();
        return Ok(total / PI.sqrt());
    }
    let tail = (1.0 - rho * rho).sqrt();
    let mut total = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        let g1 = root2 * xi;
        let z1 = (sd1 * g1).powi(s1 as i32);
        let inner: f64 =
            x.iter().zip(&w).map(|(xj, wj)| wj * (sd2 * (rho * g1 + tail * root2 * xj)).powi(s2 as i32)).sum();
        total += wi * z1 * inner;
    }
    Ok(total / PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(end: f64, steps: usize) -> Vec<f64> {
        QuadGrid::uniform(end, steps).unwrap().nodes
    }

    #[test]
    fn quad_grid_weights_sum_to_length() {
        let g = QuadGrid::uniform(2.5, 7).unwrap();
        assert!((g.weights.iter().sum::<f64>() - 2.5).abs() < 1e-15);
        assert!(g.weights.iter().all(|&w| w > 0.0));
        assert_eq!(*g.nodes.last().unwrap(), 2.5);
        assert!(QuadGrid::uniform(1.0, 0).is_err());
    }

    #[test]
    fn cumtrapz_of_constant_and_linear() {
        let t = grid(1.0, 100);
        let ones = vec![1.0; t.len()];
        assert_eq!(*cumtrapz(&t, &ones).unwrap().last().unwrap(), 1.0);
        let lin = cumtrapz(&t, &t).unwrap();
        for (ti, ci) in t.iter().zip(&lin) {
            assert!((ci - ti * ti / 2.0).abs() <= 1e-16);
        }
        assert_eq!(lin[0], 0.0);
        assert!(cumtrapz(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn cumtrapz_is_second_order() {
        let err = |n: usize| {
            let t = grid(1.0, n);
            let v: Vec<f64> = t.iter().map(|x| x * x).collect();
            (cumtrapz(&t, &v).unwrap()[n] - 1.0 / 3.0).abs()
        };
        let ratio = err(50) / err(100);
        assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn double_trapz_examples() {
        let t = grid(1.0, 64);
        assert!((double_trapz_fn(&t, |_, _| 1.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((double_trapz_fn(&t, |i, j| t[i] * t[j]).unwrap() - 0.25).abs() < 1e-14);
        let min = double_trapz_fn(&t, |i, j| t[i].min(t[j])).unwrap();
        assert!((min - 1.0 / 3.0).abs() < 1.0 / (64.0 * 64.0));
        let square: Vec<Vec<f64>> = (0..t.len()).map(|_| vec![1.0; t.len()]).collect();
        assert!((double_trapz(&t, &square).unwrap() - 1.0).abs() < 1e-14);
        assert!(double_trapz(&t, &square[1..]).is_err());
    }

    #[test]
    fn double_trapz_convergence_orders() {
        let err = |n: usize, f: &dyn Fn(f64, f64) -> f64, exact: f64| {
            let t = grid(1.0, n);
            (double_trapz_fn(&t, |i, j| f(t[i], t[j])).unwrap() - exact).abs()
        };
        let smooth = |s: f64, u: f64| (s * u).exp();
        // ∫∫ e^{su} = Σ 1/(k·k!) over k ≥ 1
        let exact: f64 = (1..30).map(|k| 1.0 / (k as f64 * factorial(k))).sum();
        assert!(err(32, &smooth, exact) / err(64, &smooth, exact) >= 3.5);
        let kinked = |s: f64, u: f64| s.min(u);
        assert!(err(32, &kinked, 1.0 / 3.0) / err(64, &kinked, 1.0 / 3.0) >= 1.9);
    }

    #[test]
    fn cumulative_double_matches_direct() {
        let t = grid(2.0, 40);
        let k = |i: usize, j: usize| t[i].min(t[j]) + (t[i] * t[j]).cos();
        let cum = cumulative_double_trapz_sym(&t, k).unwrap();
        for i in [1usize, 2, 7, 40] {
            let direct = double_trapz_fn(&t[..=i], k).unwrap();
            assert!((cum[i] - direct).abs() < 1e-12, "i={i}: {} vs {direct}", cum[i]);
        }
        assert_eq!(cum[0], 0.0);
    }

    #[test]
    fn hypergeometric_examples() {
        assert_eq!(hypergeom_3f1_terminating([1.0, 0.0, -0.5], 2.0, 3.7).unwrap(), 1.0);
        let x = 0.37;
        let v = hypergeom_3f1_terminating([1.0, -1.0, -0.5], 2.0, x).unwrap();
        assert!((v - (1.0 + x / 4.0)).abs() < 1e-15);
        assert_eq!(hypergeom_3f1_terminating([1.0, -3.0, 2.5], 2.0, 0.0).unwrap(), 1.0);
        assert!(matches!(hypergeom_3f1_terminating([1.0, 0.5, 2.5], 2.0, 0.1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn hypergeometric_matches_direct_sum() {
        // ([1, -2, -3/2]; [2]; x) = 1 + 3x/2 + x²/4
        let x = -1.3;
        let v = hypergeom_3f1_terminating([1.0, -2.0, -1.5], 2.0, x).unwrap();
        assert!((v - (1.0 + 1.5 * x + x * x / 4.0)).abs() < 1e-14);
    }

    #[test]
    fn hermite_rule_integrates_gaussian_moments() {
        let (x, w) = gauss_hermite(64).unwrap();
        assert!((w.iter().sum::<f64>() - PI.sqrt()).abs() < 1e-13);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
        for k in 0..=20u32 {
            let v: f64 =
                x.iter().zip(&w).map(|(xi, wi)| wi * (2f64.sqrt() * xi).powi(k as i32)).sum::<f64>() / PI.sqrt();
            let want = standard_normal_moment(k);
            let scale = standard_normal_moment(2 * k).sqrt();
            assert!((v - want).abs() <= 1e-12 * scale, "k={k}: {v} vs {want}");
        }
    }

    #[test]
    fn hermite_2d_examples() {
        let v = gauss_hermite_2d_moment(1, 1, 1.0, 1.0, 0.5, 64).unwrap();
        assert!((v - 0.5).abs() < 1e-13);
        let v = gauss_hermite_2d_moment(2, 0, 3.0, 1.0, 0.3, 64).unwrap();
        assert!((v - 9.0).abs() < 1e-12);
        let v = gauss_hermite_2d_moment(2, 2, 1.0, 1.0, 0.5, 64).unwrap();
        assert!((v - 1.5).abs() < 1e-12);
        let v = gauss_hermite_2d_moment(1, 1, 2.0, 3.0, -1.0, 64).unwrap();
        assert!((v + 6.0).abs() < 1e-12);
        assert!(gauss_hermite_2d_moment(1, 1, 1.0, 1.0, 1.5, 64).is_err());
    }

    #[test]
    fn hermite_2d_reduces_to_wiener_moments() {
        for k in 0..=10u32 {
            for t in [0.5f64, 1.0, 2.0] {
                let v = gauss_hermite_2d_moment(k, 0, t.sqrt(), 1.0, 0.2, 64).unwrap();
                let want = standard_normal_moment(k) * t.powf(k as f64 / 2.0);
                assert!((v - want).abs() <= 1e-12 * want.max(1.0));
            }
        }
    }

    proptest! {
        #[test]
        fn quadratures_are_linear(alpha in -3.0f64..3.0, beta in -3.0f64..3.0, n in 2usize..40) {
            let t = grid(1.5, n);
            let f: Vec<f64> = t.iter().map(|x| x.sin()).collect();
            let g: Vec<f64> = t.iter().map(|x| x * x - 1.0).collect();
            let h: Vec<f64> = f.iter().zip(&g).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = trapz(&t, &h).unwrap();
            let rhs = alpha * trapz(&t, &f).unwrap() + beta * trapz(&t, &g).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
            let kd = |i: usize, j: usize| alpha * f[i] * f[j] + beta * g[i] * g[j];
            let lhs = double_trapz_fn(&t, kd).unwrap();
            let rhs = alpha * double_trapz_fn(&t, |i, j| f[i] * f[j]).unwrap()
                + beta * double_trapz_fn(&t, |i, j| g[i] * g[j]).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
