//! Euler–Maruyama simulation of the rate/force system and of its
//! noise-free transformed form, plus seeded parallel ensembles.
//!
//! Every coefficient is evaluated at the left end of each step. A path whose
//! state leaves `|x| ≤ 1e12` (or turns non-finite) is stopped and reported as
//! a blow-up; ensembles exclude such paths and count them.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{generate_wiener, path_seed, WienerPath};
use crate::model::{check_well_posedness, power, InitialConditions, ModelSpec, RationalExponent};

const BLOW_UP: f64 = 1e12;

/// Quantile levels reported by [`EnsembleStats`].
pub const QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Uniform time grid `tᵢ = i·T/N` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    horizon: f64,
    steps: usize,
}

impl Grid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::InvalidParameter("grid needs at least one step".into()));
        }
        Ok(Grid { horizon, steps })
    }

    /// Grid with `N = round(T/dt)` steps.
    pub fn from_dt(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        Grid::new(horizon, ((horizon / dt).round() as usize).max(1))
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            self.horizon * i as f64 / self.steps as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.time(i)).collect()
    }

    /// The grid with `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Grid::new(self.horizon, self.steps * factor)
    }
}

/// What the second component of a [`PathPair`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SecondKind {
    /// The force `p`.
    Force,
    /// The transformed state `z`.
    Transformed,
}

/// Rate trajectory together with the force or transformed trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPair {
    pub times: Vec<f64>,
    pub rate: Vec<f64>,
    pub second: Vec<f64>,
    pub kind: SecondKind,
}

fn check_wiener(grid: &Grid, wiener: &WienerPath) -> Result<()> {
    if wiener.len() != grid.steps() + 1 {
        return Err(Error::InvalidParameter(format!(
            "Wiener path has {} nodes, grid has {}",
            wiener.len(),
            grid.steps() + 1
        )));
    }
    if (wiener.times()[grid.steps()] - grid.horizon()).abs() > 1e-9 * grid.horizon() {
        return Err(Error::InvalidParameter("Wiener path and grid span different horizons".into()));
    }
    Ok(())
}

fn guard(x: f64, step: usize, t: f64) -> Result<f64> {
    if x.is_finite() && x.abs() <= BLOW_UP {
        Ok(x)
    } else {
        Err(Error::BlowUp { step, t })
    }
}

// Coefficients sampled once on the grid, `None` where identically zero.
struct Sampled {
    times: Vec<f64>,
    a: Option<Vec<f64>>,
    b: Option<Vec<f64>>,
    c: Vec<f64>,
    sigma: Vec<f64>,
}

impl Sampled {
    fn new(spec: &ModelSpec, grid: &Grid) -> Result<Self> {
        let times = grid.times();
        let opt = |f: &crate::model::CoefficientFn| -> Result<Option<Vec<f64>>> {
            if f.is_identically_zero() {
                Ok(None)
            } else {
                f.sample(&times).map(Some)
            }
        };
        Ok(Sampled {
            a: opt(&spec.a)?,
            b: opt(&spec.b)?,
            c: spec.c.sample(&times)?,
            sigma: spec.sigma.sample(&times)?,
            times,
        })
    }
}

/// Euler–Maruyama for the primal system, reusable across Wiener paths.
pub struct PrimalSimulator {
    spec: ModelSpec,
    ic: InitialConditions,
    grid: Grid,
    coef: Sampled,
}

impl PrimalSimulator {
    pub fn new(spec: &ModelSpec, ic: &InitialConditions, grid: &Grid) -> Result<Self> {
        spec.validate()?;
        Ok(PrimalSimulator { spec: spec.clone(), ic: *ic, grid: *grid, coef: Sampled::new(spec, grid)? })
    }

    pub fn run(&self, wiener: &WienerPath) -> Result<PathPair> {
        check_wiener(&self.grid, wiener)?;
        let s = &self.spec;
        let mode = s.power_mode;
        let dt = self.grid.dt();
        let w = wiener.values();
        let n = self.grid.steps();
        let mut r = Vec::with_capacity(n + 1);
        let mut p = Vec::with_capacity(n + 1);
        let (mut ri, mut pi) = (self.ic.level, self.ic.p0);
        r.push(ri);
        p.push(pi);
        for i in 0..n {
            let step = |e: Error| e.at_step(i);
            let mut drift = 0.0;
            if let Some(a) = &self.coef.a {
                drift += a[i] * power(pi, s.l, mode).map_err(step)?;
            }
            if let Some(b) = &self.coef.b {
                drift += b[i] * power(ri, s.n, mode).map_err(step)?;
            }
            let vol = self.coef.sigma[i] * power(ri, s.k, mode).map_err(step)?;
            let dr = self.coef.c[i] * power(pi, s.m, mode).map_err(step)? * dt;
            let t = self.coef.times[i + 1];
            ri = guard(ri + dr, i + 1, t)?;
            pi = guard(pi + drift * dt + vol * (w[i + 1] - w[i]), i + 1, t)?;
            r.push(ri);
            p.push(pi);
        }
        Ok(PathPair { times: self.coef.times.clone(), rate: r, second: p, kind: SecondKind::Force })
    }
}

/// Explicit Euler for the transformed system, reusable across Wiener paths.
pub struct TransformedSimulator {
    spec: ModelSpec,
    ic: InitialConditions,
    grid: Grid,
    coef: Sampled,
    sigma_log_slope: Vec<f64>,
    // exponents of the drift terms, in rational form
    km: RationalExponent,
    km_minus_one: RationalExponent,
    m_plus_one: RationalExponent,
    l_minus_one: RationalExponent,
    k_l_minus_one: RationalExponent,
    n_minus_k: RationalExponent,
}

impl TransformedSimulator {
    pub fn new(spec: &ModelSpec, ic: &InitialConditions, grid: &Grid) -> Result<Self> {
        spec.validate()?;
        let coef = Sampled::new(spec, grid)?;
        if let Some(i) = coef.sigma.iter().position(|&s| !(s > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "sigma must stay positive, got {} at t = {}",
                coef.sigma[i], coef.times[i]
            )));
        }
        let dsigma = spec.sigma.sample_derivative(&coef.times)?;
        let sigma_log_slope = dsigma.iter().zip(&coef.sigma).map(|(d, s)| d / s).collect();
        let one = RationalExponent::ONE;
        let km = spec.k * spec.m;
        Ok(TransformedSimulator {
            km,
            km_minus_one: km - one,
            m_plus_one: spec.m + one,
            l_minus_one: spec.l - one,
            k_l_minus_one: spec.k * (spec.l - one),
            n_minus_k: spec.n - spec.k,
            spec: spec.clone(),
            ic: *ic,
            grid: *grid,
            coef,
            sigma_log_slope,
        })
    }

    pub fn run(&self, wiener: &WienerPath) -> Result<PathPair> {
        check_wiener(&self.grid, wiener)?;
        let s = &self.spec;
        let mode = s.power_mode;
        let pw = |x: f64, e: RationalExponent| power(x, e, mode);
        let dt = self.grid.dt();
        let w = wiener.values();
        let n = self.grid.steps();
        let k = s.k.to_f64();
        let mut r = Vec::with_capacity(n + 1);
        let mut z = Vec::with_capacity(n + 1);
        let (mut ri, mut zi) = (self.ic.level, self.ic.z0);
        r.push(ri);
        z.push(zi);
        for i in 0..n {
            let step = |e: Error| e.at_step(i);
            let t = self.coef.times[i];
            let (c, sig) = (self.coef.c[i], self.coef.sigma[i]);
            let u = zi + w[i] - t / 2.0;
            let sig_m = pw(sig, s.m).map_err(step)?;
            let mut drift = 0.5 - self.sigma_log_slope[i] * u;
            if k != 0.0 {
                drift -=
                    k * c * sig_m * pw(u, self.m_plus_one).map_err(step)? * pw(ri, self.km_minus_one).map_err(step)?;
            }
            if let Some(a) = &self.coef.a {
                drift += a[i]
                    * pw(sig, self.l_minus_one).map_err(step)?
                    * pw(u, s.l).map_err(step)?
                    * pw(ri, self.k_l_minus_one).map_err(step)?;
            }
            if let Some(b) = &self.coef.b {
                drift += b[i] / sig * pw(ri, self.n_minus_k).map_err(step)?;
            }
            let dr = c * sig_m * pw(ri, self.km).map_err(step)? * pw(u, s.m).map_err(step)? * dt;
            let t1 = self.coef.times[i + 1];
            ri = guard(ri + dr, i + 1, t1)?;
            zi = guard(zi + drift * dt, i + 1, t1)?;
            r.push(ri);
            z.push(zi);
        }
        Ok(PathPair { times: self.coef.times.clone(), rate: r, second: z, kind: SecondKind::Transformed })
    }
}

/// One primal Euler–Maruyama path.
pub fn simulate_primal(spec: &ModelSpec, ic: &InitialConditions, grid: &Grid, wiener: &WienerPath) -> Result<PathPair> {
    PrimalSimulator::new(spec, ic, grid)?.run(wiener)
}

/// One path of the transformed system, driven by the same Wiener path only
/// through the algebraic substitution `u = z + W − t/2`.
pub fn simulate_transformed(
    spec: &ModelSpec,
    ic: &InitialConditions,
    grid: &Grid,
    wiener: &WienerPath,
) -> Result<PathPair> {
    TransformedSimulator::new(spec, ic, grid)?.run(wiener)
}

/// Inverts the transformation: `p = σ(t)·r^k·(z + W_t − t/2)`.
pub fn recover_p(z: f64, r: f64, t: f64, w: f64, spec: &ModelSpec) -> Result<f64> {
    let sig = spec.sigma.eval(t)?;
    if !(sig > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma({t}) = {sig} must be positive")));
    }
    Ok(sig * power(r, spec.k, spec.power_mode)? * (z + w - t / 2.0))
}

/// Force trajectory recovered from a transformed run.
pub fn recover_force(pair: &PathPair, wiener: &WienerPath, spec: &ModelSpec) -> Result<Vec<f64>> {
    if pair.kind != SecondKind::Transformed {
        return Err(Error::InvalidParameter("path pair already holds the force".into()));
    }
    (0..pair.times.len())
        .map(|i| recover_p(pair.second[i], pair.rate[i], pair.times[i], wiener.values()[i], spec))
        .collect()
}

/// Which discretization an ensemble integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    Primal,
    Transformed,
}

/// Ensemble settings. Path `i` is driven by `path_seed(master_seed, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub n_paths: usize,
    pub master_seed: u64,
    /// Statistics are reported on every `record_stride`-th grid node.
    pub record_stride: usize,
    /// Number of surviving paths kept verbatim (lowest indices first).
    pub retain_paths: usize,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl EnsembleConfig {
    pub fn new(n_paths: usize, master_seed: u64) -> Self {
        EnsembleConfig { n_paths, master_seed, record_stride: 1, retain_paths: 0, threads: None }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn with_retained(mut self, n: usize) -> Self {
        self.retain_paths = n;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }
}

/// Per-time ensemble statistics over the surviving paths.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    /// Unbiased sample variance (0 for a single path).
    pub variance: Vec<f64>,
    /// One row per entry of [`QUANTILE_LEVELS`].
    pub quantiles: Vec<Vec<f64>>,
    pub n_paths: usize,
    pub n_used: usize,
    /// Paths stopped by a blow-up or a singular denominator.
    pub blown_up: usize,
    pub domain_failures: usize,
    pub master_seed: u64,
    /// Set when the well-posedness conditions are not guaranteed.
    pub well_posedness_warning: bool,
}

impl EnsembleStats {
    pub fn excluded(&self) -> usize {
        self.blown_up + self.domain_failures
    }

    /// Standard error of the mean at recorded node `i`.
    pub fn std_error(&self, i: usize) -> f64 {
        (self.variance[i] / self.n_used as f64).sqrt()
    }
}

/// Sign-crossing summary of the surviving paths at full grid resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeRateStats {
    pub ever_negative_fraction: f64,
    pub mean_time_below_zero_fraction: f64,
    /// Quantiles (at [`QUANTILE_LEVELS`]) of the first grid time with `r < 0`
    /// over the paths that cross; empty if none does.
    pub first_passage_quantiles: Vec<f64>,
}

/// Per-path negative-rate summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativeSummary {
    pub ever_negative: bool,
    pub time_below_fraction: f64,
    pub first_passage: Option<f64>,
}

impl NegativeSummary {
    pub fn of_path(times: &[f64], rate: &[f64]) -> Self {
        let below = rate.iter().filter(|&&r| r < 0.0).count();
        let first = rate.iter().position(|&r| r < 0.0).map(|i| times[i]);
        NegativeSummary {
            ever_negative: first.is_some(),
            time_below_fraction: below as f64 / rate.len() as f64,
            first_passage: first,
        }
    }
}

/// Aggregates per-path summaries.
pub fn negative_rate_stats(summaries: &[NegativeSummary]) -> NegativeRateStats {
    let n = summaries.len().max(1) as f64;
    let ever = summaries.iter().filter(|s| s.ever_negative).count() as f64 / n;
    let below = summaries.iter().map(|s| s.time_below_fraction).sum::<f64>() / n;
    let mut first: Vec<f64> = summaries.iter().filter_map(|s| s.first_passage).collect();
    first.sort_by(f64::total_cmp);
    let quantiles = if first.is_empty() {
        Vec::new()
    } else {
        QUANTILE_LEVELS.iter().map(|&q| quantile_sorted(&first, q)).collect()
    };
    NegativeRateStats {
        ever_negative_fraction: ever,
        mean_time_below_zero_fraction: below,
        first_passage_quantiles: quantiles,
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Result of an ensemble run.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub stats: EnsembleStats,
    pub negative: NegativeRateStats,
    /// Retained rate paths on the recorded nodes.
    pub paths: Vec<Vec<f64>>,
}

struct PathRecord {
    recorded: Vec<f64>,
    negative: NegativeSummary,
}

fn per_time_stats(times: Vec<f64>, rows: &[&Vec<f64>]) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let n = rows.len();
    let mut mean = Vec::with_capacity(times.len());
    let mut var = Vec::with_capacity(times.len());
    let mut quantiles = vec![Vec::with_capacity(times.len()); QUANTILE_LEVELS.len()];
    let mut column = vec![0.0; n];
    for j in 0..times.len() {
        for (slot, row) in column.iter_mut().zip(rows) {
            *slot = row[j];
        }
        let mu = column.iter().sum::<f64>() / n as f64;
        let ss: f64 = column.iter().map(|x| (x - mu) * (x - mu)).sum();
        mean.push(mu);
        var.push(if n > 1 { ss / (n - 1) as f64 } else { 0.0 });
        column.sort_by(f64::total_cmp);
        for (row, &q) in quantiles.iter_mut().zip(&QUANTILE_LEVELS) {
            row.push(quantile_sorted(&column, q));
        }
    }
    (times, mean, quantiles, var)
}

/// Runs `path_fn` on seeded Wiener paths and aggregates the returned rate
/// trajectories (one value per grid node).
///
/// Results are collected in path-index order and reduced sequentially, so
/// the statistics do not depend on the number of threads.
pub fn run_ensemble_with<F>(grid: &Grid, cfg: &EnsembleConfig, well_posed: bool, path_fn: F) -> Result<Ensemble>
where
    F: Fn(&WienerPath) -> Result<Vec<f64>> + Sync,
{
    if cfg.n_paths == 0 {
        return Err(Error::InvalidParameter("n_paths must be at least 1".into()));
    }
    let stride = cfg.record_stride;
    if stride == 0 || !grid.steps().is_multiple_of(stride) {
        return Err(Error::InvalidParameter(format!(
            "record stride {stride} must divide the {} grid steps",
            grid.steps()
        )));
    }
    let times = grid.times();
    let one = |i: usize| -> Result<PathRecord> {
        let wiener = generate_wiener(&times, path_seed(cfg.master_seed, i as u64))?;
        let rate = path_fn(&wiener)?;
        if rate.len() != times.len() {
            return Err(Error::InvalidParameter("path function returned a trajectory of the wrong length".into()));
        }
        Ok(PathRecord {
            negative: NegativeSummary::of_path(&times, &rate),
            recorded: rate.into_iter().step_by(stride).collect(),
        })
    };
    let collect = || (0..cfg.n_paths).into_par_iter().map(one).collect::<Vec<_>>();
    let outcomes = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(collect),
        None => collect(),
    };

    let (mut blown_up, mut domain) = (0, 0);
    let mut kept = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        match outcome {
            Ok(rec) => kept.push(rec),
            Err(Error::BlowUp { .. } | Error::Singular { .. }) => blown_up += 1,
            Err(Error::DomainAtStep { .. }) => domain += 1,
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(Error::AllPathsFailed { n_paths: cfg.n_paths, blown_up, domain });
    }
    let rows: Vec<&Vec<f64>> = kept.iter().map(|r| &r.recorded).collect();
    let rec_times: Vec<f64> = times.iter().step_by(stride).copied().collect();
    let (times, mean, quantiles, variance) = per_time_stats(rec_times, &rows);
    let summaries: Vec<NegativeSummary> = kept.iter().map(|r| r.negative).collect();
    let paths = kept.iter().take(cfg.retain_paths).map(|r| r.recorded.clone()).collect();
    Ok(Ensemble {
        stats: EnsembleStats {
            times,
            mean,
            variance,
            quantiles,
            n_paths: cfg.n_paths,
            n_used: kept.len(),
            blown_up,
            domain_failures: domain,
            master_seed: cfg.master_seed,
            well_posedness_warning: !well_posed,
        },
        negative: negative_rate_stats(&summaries),
        paths,
    })
}

/// Seeded ensemble of the model's rate process under `scheme`.
pub fn run_ensemble(
    spec: &ModelSpec,
    ic: &InitialConditions,
    grid: &Grid,
    cfg: &EnsembleConfig,
    scheme: Scheme,
) -> Result<Ensemble> {
    let well_posed = check_well_posedness(spec).is_guaranteed();
    match scheme {
        Scheme::Primal => {
            let sim = PrimalSimulator::new(spec, ic, grid)?;
            run_ensemble_with(grid, cfg, well_posed, |w| sim.run(w).map(|p| p.rate))
        }
        Scheme::Transformed => {
            let sim = TransformedSimulator::new(spec, ic, grid)?;
            run_ensemble_with(grid, cfg, well_posed, |w| sim.run(w).map(|p| p.rate))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_initial_conditions, CoefficientFn, PowerMode};

    fn int(v: i64) -> RationalExponent {
        RationalExponent::integer(v)
    }

    fn fig2a() -> ModelSpec {
        ModelSpec::new(CoefficientFn::ScaledExp { scale: -1.0, rate: 1.0 }, 0.05.into()).with_m(int(2))
    }

    #[test]
    fn grid_basics() {
        let g = Grid::from_dt(5.0, 1e-3).unwrap();
        assert_eq!(g.steps(), 5000);
        assert_eq!(g.time(5000), 5.0);
        assert!(Grid::from_dt(5.0, 0.0).is_err());
        assert!(Grid::new(0.0, 10).is_err());
    }

    #[test]
    fn noise_free_limit_is_linear() {
        let spec = ModelSpec::new(1.0.into(), 1e-12.into());
        let ic = derive_initial_conditions(&spec, 0.02, 0.01).unwrap();
        let grid = Grid::new(2.0, 2000).unwrap();
        let w = generate_wiener(&grid.times(), 1).unwrap();
        let pair = simulate_primal(&spec, &ic, &grid, &w).unwrap();
        assert!((pair.rate.last().unwrap() - (0.02 + 0.01 * 2.0)).abs() < 1e-6);
        assert_eq!(pair.second[0], ic.p0);
    }

    #[test]
    fn initialization_domain_propagates() {
        let good = ModelSpec::new(CoefficientFn::ScaledExp { scale: -1.0, rate: 1.0 }, 0.05.into()).with_m(int(2));
        assert!(derive_initial_conditions(&good, 0.02, -0.025).is_ok());
        let bad = ModelSpec::new(CoefficientFn::ScaledExp { scale: 1.0, rate: 1.0 }, 0.05.into()).with_m(int(2));
        assert!(matches!(derive_initial_conditions(&bad, 0.02, -0.025), Err(Error::EvenRootOfNegative { .. })));
    }

    #[test]
    fn recover_p_examples() {
        let spec = fig2a();
        let ic = derive_initial_conditions(&spec, 0.02, 0.0).unwrap();
        assert_eq!(recover_p(ic.z0, 0.02, 0.0, 0.0, &spec).unwrap(), ic.p0);
        let (t, w) = (1.3, -0.4);
        assert!((recover_p(0.7, 0.02, t, w, &spec).unwrap() - 0.05 * (0.7 + w - t / 2.0)).abs() < 1e-15);
        assert_eq!(recover_p(t / 2.0 - w, 0.02, t, w, &spec).unwrap(), 0.0);
    }

    #[test]
    fn transformed_fixed_point_when_drift_vanishes() {
        // k = 0, σ constant, a ≡ 0: the z-drift is 1/2 + b/σ, zero for b = −σ/2
        let spec = ModelSpec::new(1.0.into(), 0.05.into()).with_b((-0.025).into()).with_exponents(
            int(2),
            int(0),
            int(0),
            int(2),
        );
        let ic = derive_initial_conditions(&spec, 0.02, 0.0).unwrap();
        let grid = Grid::new(1.0, 100).unwrap();
        let w = generate_wiener(&grid.times(), 5).unwrap();
        let pair = simulate_transformed(&spec, &ic, &grid, &w).unwrap();
        assert!(pair.second.iter().all(|&z| z.abs() < 1e-15));
    }

    #[test]
    fn transformed_matches_primal_with_varying_sigma() {
        let spec = ModelSpec::new(
            CoefficientFn::ScaledExp { scale: -1.0, rate: 1.0 },
            CoefficientFn::ScaledExp { scale: 0.1, rate: 0.5 },
        )
        .with_a((-0.5).into())
        .with_m(int(2));
        let ic = derive_initial_conditions(&spec, 0.02, -0.01).unwrap();
        let fine = Grid::new(2.0, 4000).unwrap();
        let mut gaps = Vec::new();
        for steps in [200, 400, 800] {
            let mut total = 0.0;
            for seed in 0..8 {
                let w = generate_wiener(&fine.times(), path_seed(9, seed)).unwrap();
                let grid = Grid::new(2.0, steps).unwrap();
                let ws = w.subsample(4000 / steps).unwrap();
                let a = simulate_primal(&spec, &ic, &grid, &ws).unwrap();
                let b = simulate_transformed(&spec, &ic, &grid, &ws).unwrap();
                let p = recover_force(&b, &ws, &spec).unwrap();
                let gap = a.second.iter().zip(&p).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                total += gap;
            }
            gaps.push(total);
        }
        assert!(gaps[0] > 0.0);
        assert!(gaps[0] / gaps[1] >= 1.5 && gaps[1] / gaps[2] >= 1.5, "{gaps:?}");
    }

    #[test]
    fn blow_up_is_detected() {
        let spec =
            ModelSpec::new(1.0.into(), 0.01.into()).with_a(5.0.into()).with_exponents(int(1), int(1), int(0), int(3));
        let ic = derive_initial_conditions(&spec, 0.02, 1.0).unwrap();
        let grid = Grid::new(5.0, 5000).unwrap();
        let w = generate_wiener(&grid.times(), 1).unwrap();
        assert!(matches!(simulate_primal(&spec, &ic, &grid, &w), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn single_path_ensemble() {
        let spec = fig2a();
        let ic = derive_initial_conditions(&spec, 0.02, 0.0).unwrap();
        let grid = Grid::new(1.0, 100).unwrap();
        let cfg = EnsembleConfig::new(1, 3).with_retained(1);
        let ens = run_ensemble(&spec, &ic, &grid, &cfg, Scheme::Primal).unwrap();
        assert_eq!(ens.stats.mean, ens.paths[0]);
        assert!(ens.stats.variance.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ensemble_is_thread_count_invariant() {
        let spec = fig2a();
        let ic = derive_initial_conditions(&spec, 0.02, 0.0).unwrap();
        let grid = Grid::new(1.0, 200).unwrap();
        let a = run_ensemble(&spec, &ic, &grid, &EnsembleConfig::new(64, 7).with_threads(1), Scheme::Primal).unwrap();
        let b = run_ensemble(&spec, &ic, &grid, &EnsembleConfig::new(64, 7).with_threads(3), Scheme::Primal).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quantiles_are_monotone() {
        let spec = fig2a();
        let ic = derive_initial_conditions(&spec, 0.02, 0.0).unwrap();
        let grid = Grid::new(1.0, 100).unwrap();
        let ens = run_ensemble(&spec, &ic, &grid, &EnsembleConfig::new(50, 1).with_stride(10), Scheme::Primal).unwrap();
        assert_eq!(ens.stats.times.len(), 11);
        for j in 0..11 {
            for q in 1..QUANTILE_LEVELS.len() {
                assert!(ens.stats.quantiles[q][j] >= ens.stats.quantiles[q - 1][j]);
            }
            assert!(ens.stats.variance[j] >= 0.0);
        }
    }

    #[test]
    fn blown_up_paths_are_excluded_not_mixed_in() {
        let grid = Grid::new(1.0, 10).unwrap();
        let cfg = EnsembleConfig::new(10, 0);
        let ens = run_ensemble_with(&grid, &cfg, true, |w| {
            if w.values()[1] > 0.0 {
                Err(Error::BlowUp { step: 1, t: 0.1 })
            } else {
                Ok(vec![1.0; 11])
            }
        })
        .unwrap();
        assert_eq!(ens.stats.n_used + ens.stats.blown_up, 10);
        assert!(ens.stats.blown_up > 0);
        assert!(ens.stats.mean.iter().all(|&m| m == 1.0));
        let all = run_ensemble_with(&grid, &cfg, true, |_| Err(Error::BlowUp { step: 1, t: 0.1 }));
        assert!(matches!(all, Err(Error::AllPathsFailed { blown_up: 10, .. })));
    }

    #[test]
    fn negative_stats_of_positive_paths() {
        let times = [0.0, 0.5, 1.0];
        let s = NegativeSummary::of_path(&times, &[0.02, 0.02, 0.02]);
        let stats = negative_rate_stats(&[s]);
        assert_eq!(stats.ever_negative_fraction, 0.0);
        assert!(stats.first_passage_quantiles.is_empty());
        let s = NegativeSummary::of_path(&times, &[0.02, -0.01, 0.01]);
        assert_eq!(s.first_passage, Some(0.5));
    }

    #[test]
    fn oscillatory_linear_mean() {
        // a = 0, b = −1, c = 1: D = −4, mean solves r'' = −r
        let spec = ModelSpec::new(1.0.into(), 0.01.into()).with_b((-1.0).into());
        let ic = derive_initial_conditions(&spec, 0.02, 0.01).unwrap();
        let horizon = 4.0 * std::f64::consts::PI / 2.0;
        let grid = Grid::new(horizon, 2000).unwrap();
        let ens =
            run_ensemble(&spec, &ic, &grid, &EnsembleConfig::new(200, 2).with_stride(10), Scheme::Primal).unwrap();
        let d: Vec<f64> = ens.stats.mean.windows(2).map(|w| w[1] - w[0]).collect();
        let changes = d.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
        assert!(changes >= 2, "{changes}");
    }

    #[test]
    fn signed_mode_runs_where_odd_root_fails() {
        let spec = ModelSpec::new(CoefficientFn::ScaledExp { scale: -1.0, rate: 1.0 }, 0.05.into()).with_m(int(2));
        assert!(derive_initial_conditions(&spec, 0.03, 0.03).is_err());
        let spec = spec.with_power_mode(PowerMode::SignedPower);
        let ic = derive_initial_conditions(&spec, 0.03, 0.03).unwrap();
        let grid = Grid::new(1.0, 100).unwrap();
        let w = generate_wiener(&grid.times(), 1).unwrap();
        assert!(simulate_primal(&spec, &ic, &grid, &w).is_ok());
    }
}
