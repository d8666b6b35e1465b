//! Named parameter sets, a flat `key = value` config format, and the runner
//! that turns a scenario into an ensemble plus matching closed-form curves.
//!
//! ```text
//! # comments start with '#'
//! name = fig2a
//! analytics = case1
//! c = scaled_exp(-1, 1)
//! sigma = 0.05
//! m = 2
//! A = 0.02
//! B = 0
//! ```
//!
//! Keys not given keep the defaults of [`Scenario::default`].

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::case1::{case1_moments, Case1Config};
use crate::case2::{
    case2_approx_moment_curves, case2_exact_path, case2_linearized_path, linearize_f, simulate_case2_primal,
    Case2Config,
};
use crate::error::{Error, Result};
use crate::kernels::KernelMode;
use crate::model::{
    check_well_posedness, derive_initial_conditions, CoefficientFn, ModelSpec, PowerMode, RationalExponent,
};
use crate::sim::{run_ensemble, run_ensemble_with, EnsembleConfig, EnsembleStats, Grid, NegativeRateStats, Scheme};

/// Rows of the output table are capped near this count by striding.
pub const MAX_ROWS: usize = 500;

/// Which closed forms accompany a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Analytics {
    /// `k = 0, l = 1, b ≡ 0`: exact mean and variance when `a ≡ 0`, `σ` constant.
    Case1,
    /// `k = n = 0, l = 2` with the path-dependent `b`: linearized moments for `m = 2`.
    Case2,
    /// Simulation only.
    Generic,
}

impl fmt::Display for Analytics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Analytics::Case1 => "case1",
            Analytics::Case2 => "case2",
            Analytics::Generic => "generic",
        })
    }
}

impl FromStr for Analytics {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "case1" => Ok(Analytics::Case1),
            "case2" => Ok(Analytics::Case2),
            "generic" => Ok(Analytics::Generic),
            _ => Err(Error::InvalidParameter(format!("analytics `{s}` (expected case1|case2|generic)"))),
        }
    }
}

/// How the realizations of a [`Analytics::Case2`] scenario are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case2Paths {
    /// Euler–Maruyama on the primal system.
    Primal,
    /// The pathwise Bernoulli solution.
    Exact,
    /// The path-linearized approximation.
    Linearized,
}

impl fmt::Display for Case2Paths {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case2Paths::Primal => "primal",
            Case2Paths::Exact => "exact",
            Case2Paths::Linearized => "linearized",
        })
    }
}

impl FromStr for Case2Paths {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "primal" => Ok(Case2Paths::Primal),
            "exact" => Ok(Case2Paths::Exact),
            "linearized" => Ok(Case2Paths::Linearized),
            _ => Err(Error::InvalidParameter(format!("case2 paths `{s}` (expected primal|exact|linearized)"))),
        }
    }
}

/// A complete, reproducible run description.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub analytics: Analytics,
    /// Model parameters; `b` is ignored for [`Analytics::Case2`].
    pub spec: ModelSpec,
    /// Initial level `A`.
    pub level: f64,
    /// Initial slope `B`.
    pub slope: f64,
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    /// Realizations written to the output table and plot.
    pub plot_paths: usize,
    pub seed: u64,
    pub kernel: KernelMode,
    pub case2_paths: Case2Paths,
    /// Extra values of `B` to run (empty: just `slope`).
    pub sweep_slopes: Vec<f64>,
    /// Extra values of `m` to run (empty: just `spec.m`).
    pub sweep_m: Vec<RationalExponent>,
    pub notes: String,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "custom".into(),
            analytics: Analytics::Generic,
            spec: ModelSpec::new(CoefficientFn::Constant(1.0), CoefficientFn::Constant(0.05)),
            level: 0.02,
            slope: 0.0,
            horizon: 5.0,
            dt: 1e-3,
            n_paths: 25,
            plot_paths: 25,
            seed: 0,
            kernel: KernelMode::Corrected,
            case2_paths: Case2Paths::Primal,
            sweep_slopes: Vec::new(),
            sweep_m: Vec::new(),
            notes: String::new(),
        }
    }
}

fn int(v: i64) -> RationalExponent {
    RationalExponent::integer(v)
}

fn neg_exp() -> CoefficientFn {
    CoefficientFn::ScaledExp { scale: -1.0, rate: 1.0 }
}

fn case1(name: &str, c: CoefficientFn, sigma: f64, m: i64, level: f64, slope: f64, notes: &str) -> Scenario {
    Scenario {
        name: name.into(),
        analytics: Analytics::Case1,
        spec: ModelSpec::new(c, sigma.into()).with_m(int(m)),
        level,
        slope,
        notes: notes.into(),
        ..Scenario::default()
    }
}

fn case2(name: &str, c: CoefficientFn, a: f64, sigma: f64, m: RationalExponent, notes: &str) -> Scenario {
    Scenario {
        name: name.into(),
        analytics: Analytics::Case2,
        spec: ModelSpec::new(c, sigma.into()).with_a(a.into()).with_exponents(m, int(0), int(0), int(2)),
        level: 0.02,
        slope: -0.025,
        case2_paths: Case2Paths::Linearized,
        notes: notes.into(),
        ..Scenario::default()
    }
}

/// The preset catalog, one entry per published panel.
pub fn list_scenarios() -> Vec<Scenario> {
    let damped = CoefficientFn::DampedCos;
    let cos = CoefficientFn::ScaledCos { scale: 1.0, freq: 1.0 };
    let signed = |s: Scenario| Scenario { spec: s.spec.with_power_mode(PowerMode::SignedPower), ..s };
    let sweep =
        |s: Scenario| Scenario { sweep_slopes: vec![0.01, 0.03, 0.05, 0.07], sweep_m: vec![int(2), int(6)], ..s };
    let b_ignored = "b is fixed by the Bernoulli structure, so a constant b has no effect here";
    vec![
        case1("fig1a", damped.clone(), 0.05, 2, 0.02, 0.0, "c = cos t/(1+t)"),
        case1("fig1b", cos, 0.05, 2, 0.02, 0.0, "c = cos t; the mean turns negative for larger horizons"),
        case1("fig2a", neg_exp(), 0.05, 2, 0.02, 0.0, "c = −e^{−t}, σ = 0.05"),
        case1("fig2b", neg_exp(), 0.1, 2, 0.02, 0.0, "c = −e^{−t}, σ = 0.1"),
        case1("fig3a", neg_exp(), 0.2, 2, 0.03, 0.0, "m = 2"),
        case1("fig3b", neg_exp(), 0.2, 4, 0.03, 0.0, "m = 4"),
        case1("fig3c", neg_exp(), 0.2, 6, 0.03, 0.0, "m = 6"),
        signed(case1(
            "fig4a",
            neg_exp(),
            0.05,
            2,
            0.02,
            0.03,
            "B = 0.03 with c(0) < 0 has no real p₀ for m = 2; runs with signed powers, closed forms skipped",
        )),
        case1("fig4b", neg_exp(), 0.05, 2, 0.02, -0.03, "B = −0.03"),
        case1("fig4c", neg_exp(), 0.05, 2, 0.02, 0.0, "B = 0"),
        sweep(case1("fig5a", damped, 0.05, 2, 0.02, 0.01, "sweep over B and m; compare the mean curves")),
        signed(sweep(case1(
            "fig5b",
            neg_exp(),
            0.05,
            2,
            0.02,
            0.01,
            "sweep over B and m; B > 0 with c(0) < 0 needs signed powers, closed forms skipped for even m",
        ))),
        case2("fig6a", neg_exp(), -1.0, 0.05, int(2), "σ = 0.05; realizations from the linearized path"),
        case2("fig6b", neg_exp(), -1.0, 0.1, int(2), "σ = 0.1; realizations from the linearized path"),
        case2("fig7a", (-0.1).into(), -1.0, 0.05, int(2), "c ≡ −0.1, σ = 0.05; realizations from the linearized path"),
        case2("fig7b", (-0.1).into(), -1.0, 0.1, int(2), "c ≡ −0.1, σ = 0.1; realizations from the linearized path"),
        case2("fig8a", neg_exp(), 1.0, 0.01, int(1), b_ignored),
        case2("fig8b", neg_exp(), 1.0, 0.01, int(2), b_ignored),
        signed(case2(
            "fig8c",
            neg_exp(),
            1.0,
            0.01,
            RationalExponent::new(1, 2).expect("nonzero denominator"),
            "m = 1/2; the bracket can turn negative, so signed powers are used",
        )),
    ]
}

/// Looks up a preset by name.
pub fn find_scenario(name: &str) -> Result<Scenario> {
    list_scenarios().into_iter().find(|s| s.name == name).ok_or_else(|| Error::UnknownScenario(name.into()))
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl Scenario {
    /// One scenario per `(B, m)` combination of the sweep lists, or just
    /// `self` without a sweep.
    pub fn expand_sweep(&self) -> Vec<Scenario> {
        if self.sweep_slopes.is_empty() && self.sweep_m.is_empty() {
            return vec![self.clone()];
        }
        let slopes = if self.sweep_slopes.is_empty() { vec![self.slope] } else { self.sweep_slopes.clone() };
        let ms = if self.sweep_m.is_empty() { vec![self.spec.m] } else { self.sweep_m.clone() };
        let mut out = Vec::new();
        for &m in &ms {
            for &b in &slopes {
                let mut s = self.clone();
                s.name = format!("{}_B{}_m{}", self.name, b, m.to_string().replace('/', "-"));
                s.slope = b;
                s.spec.m = m;
                s.sweep_slopes.clear();
                s.sweep_m.clear();
                out.push(s);
            }
        }
        out
    }

    /// Serializes to the flat config format; [`Scenario::parse`] inverts it.
    pub fn to_config(&self) -> String {
        let s = &self.spec;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("name", self.name.clone());
        kv("analytics", self.analytics.to_string());
        kv("a", s.a.to_string());
        kv("b", s.b.to_string());
        kv("c", s.c.to_string());
        kv("sigma", s.sigma.to_string());
        kv("m", s.m.to_string());
        kv("n", s.n.to_string());
        kv("k", s.k.to_string());
        kv("l", s.l.to_string());
        kv("power", s.power_mode.to_string());
        kv("A", self.level.to_string());
        kv("B", self.slope.to_string());
        kv("horizon", self.horizon.to_string());
        kv("dt", self.dt.to_string());
        kv("paths", self.n_paths.to_string());
        kv("plot_paths", self.plot_paths.to_string());
        kv("seed", self.seed.to_string());
        kv("kernel", self.kernel.to_string());
        kv("case2_paths", self.case2_paths.to_string());
        kv("sweep_B", join(&self.sweep_slopes));
        kv("sweep_m", join(&self.sweep_m));
        kv("notes", self.notes.clone());
        out
    }

    /// Parses the flat config format on top of [`Scenario::default`].
    pub fn parse(text: &str) -> Result<Scenario> {
        let mut sc = Scenario::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: line_no, msg: "expected `key = value`".into() })?;
            let (key, value) = (key.trim(), value.trim());
            let wrap = |e: Error| Error::Parse { line: line_no, msg: e.to_string() };
            let num = |v: &str| -> Result<f64> {
                v.parse::<f64>().map_err(|_| Error::Parse { line: line_no, msg: format!("`{v}` is not a number") })
            };
            let whole = |v: &str| -> Result<u64> {
                v.parse::<u64>().map_err(|_| Error::Parse { line: line_no, msg: format!("`{v}` is not a count") })
            };
            let list = || value.split(',').map(str::trim).filter(|x| !x.is_empty()).collect::<Vec<_>>();
            match key {
                "name" => sc.name = value.to_string(),
                "analytics" => sc.analytics = value.parse().map_err(wrap)?,
                "a" => sc.spec.a = value.parse().map_err(wrap)?,
                "b" => sc.spec.b = value.parse().map_err(wrap)?,
                "c" => sc.spec.c = value.parse().map_err(wrap)?,
                "sigma" => sc.spec.sigma = value.parse().map_err(wrap)?,
                "m" => sc.spec.m = value.parse().map_err(wrap)?,
                "n" => sc.spec.n = value.parse().map_err(wrap)?,
                "k" => sc.spec.k = value.parse().map_err(wrap)?,
                "l" => sc.spec.l = value.parse().map_err(wrap)?,
                "power" => sc.spec.power_mode = value.parse().map_err(wrap)?,
                "A" => sc.level = num(value)?,
                "B" => sc.slope = num(value)?,
                "horizon" => sc.horizon = num(value)?,
                "dt" => sc.dt = num(value)?,
                "paths" => sc.n_paths = whole(value)? as usize,
                "plot_paths" => sc.plot_paths = whole(value)? as usize,
                "seed" => sc.seed = whole(value)?,
                "kernel" => sc.kernel = value.parse().map_err(wrap)?,
                "case2_paths" => sc.case2_paths = value.parse().map_err(wrap)?,
                "sweep_B" => sc.sweep_slopes = list().into_iter().map(num).collect::<Result<_>>()?,
                "sweep_m" => sc.sweep_m = list().into_iter().map(|v| v.parse().map_err(wrap)).collect::<Result<_>>()?,
                "notes" => sc.notes = value.to_string(),
                other => return Err(Error::Parse { line: line_no, msg: format!("unknown key `{other}`") }),
            }
        }
        Ok(sc)
    }

    fn case2_config(&self) -> Result<Case2Config> {
        let sigma = self
            .spec
            .sigma
            .constant_value()
            .ok_or_else(|| Error::InvalidParameter("this configuration needs a constant sigma".into()))?;
        Ok(Case2Config::new(self.spec.a.clone(), sigma, self.spec.c.clone(), self.spec.m, self.level, self.slope)
            .with_power_mode(self.spec.power_mode))
    }
}

/// Per-run changes applied on top of a scenario.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub n_paths: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
    pub kernel: Option<KernelMode>,
    pub power: Option<PowerMode>,
    pub plot_paths: Option<usize>,
    /// Worker threads; results do not depend on it.
    pub threads: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, sc: &Scenario) -> Scenario {
        let mut s = sc.clone();
        if let Some(v) = self.n_paths {
            s.n_paths = v;
        }
        if let Some(v) = self.dt {
            s.dt = v;
        }
        if let Some(v) = self.horizon {
            s.horizon = v;
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.kernel {
            s.kernel = v;
        }
        if let Some(v) = self.power {
            s.spec.power_mode = v;
        }
        if let Some(v) = self.plot_paths {
            s.plot_paths = v;
        }
        s
    }
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifact {
    /// The effective scenario, overrides applied.
    pub scenario: Scenario,
    pub stats: EnsembleStats,
    pub negative: NegativeRateStats,
    /// Retained realizations on `stats.times`.
    pub paths: Vec<Vec<f64>>,
    pub mean_cf: Option<Vec<f64>>,
    pub var_cf: Option<Vec<f64>>,
    pub well_posedness: String,
    /// Why analytics were skipped, if they were.
    pub notices: Vec<String>,
}

fn record_stride(steps: usize) -> usize {
    let mut s = steps.div_ceil(MAX_ROWS).max(1);
    while !steps.is_multiple_of(s) {
        s += 1;
    }
    s
}

/// Runs the ensemble for a scenario and overlays the closed-form curves that
/// its configuration admits.
pub fn run_scenario(base: &Scenario, overrides: &Overrides) -> Result<RunArtifact> {
    let sc = overrides.apply(base);
    if sc.n_paths == 0 {
        return Err(Error::InvalidParameter("paths must be at least 1".into()));
    }
    let grid = Grid::from_dt(sc.horizon, sc.dt)?;
    let mut cfg = EnsembleConfig::new(sc.n_paths, sc.seed)
        .with_stride(record_stride(grid.steps()))
        .with_retained(sc.plot_paths.min(sc.n_paths));
    cfg.threads = overrides.threads;
    let mut notices = Vec::new();
    let (ensemble, well_posedness) = match sc.analytics {
        Analytics::Case2 => {
            let c2 = sc.case2_config()?;
            let times = grid.times();
            let ens = match sc.case2_paths {
                Case2Paths::Primal => {
                    run_ensemble_with(&grid, &cfg, false, |w| simulate_case2_primal(&c2, &grid, w).map(|p| p.rate))?
                }
                Case2Paths::Exact => run_ensemble_with(&grid, &cfg, false, |w| case2_exact_path(&c2, w))?,
                Case2Paths::Linearized => {
                    let lin = linearize_f(&c2, &times)?;
                    run_ensemble_with(&grid, &cfg, false, |w| case2_linearized_path(&c2, &lin, w))?
                }
            };
            (ens, "not guaranteed: b depends on the Wiener path".to_string())
        }
        _ => {
            let ic = derive_initial_conditions(&sc.spec, sc.level, sc.slope)?;
            let wp = check_well_posedness(&sc.spec);
            let verdict = if wp.is_guaranteed() {
                "guaranteed".to_string()
            } else {
                format!("not guaranteed: {}", join(&wp.reasons))
            };
            (run_ensemble(&sc.spec, &ic, &grid, &cfg, Scheme::Primal)?, verdict)
        }
    };
    let times = &ensemble.stats.times;
    let (mean_cf, var_cf) = match sc.analytics {
        Analytics::Case1 => match Case1Config::from_spec(&sc.spec, sc.level, sc.slope)
            .and_then(|c| case1_moments(&c, times, sc.kernel))
        {
            Ok(rep) => (Some(rep.mean), Some(rep.variance)),
            Err(e) => {
                notices.push(format!("closed-form moments skipped: {e}"));
                (None, None)
            }
        },
        Analytics::Case2 => match sc.case2_config().and_then(|c| case2_approx_moment_curves(&c, times, sc.kernel)) {
            Ok((m, v)) => (Some(m), Some(v)),
            Err(e) => {
                notices.push(format!("approximate moments skipped: {e}"));
                (None, None)
            }
        },
        Analytics::Generic => (None, None),
    };
    if ensemble.stats.excluded() > 0 {
        notices.push(format!(
            "{} of {} paths excluded ({} blow-ups or singular, {} domain failures)",
            ensemble.stats.excluded(),
            sc.n_paths,
            ensemble.stats.blown_up,
            ensemble.stats.domain_failures
        ));
    }
    Ok(RunArtifact {
        scenario: sc,
        stats: ensemble.stats,
        negative: ensemble.negative,
        paths: ensemble.paths,
        mean_cf,
        var_cf,
        well_posedness,
        notices,
    })
}
