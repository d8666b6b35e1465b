use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use negrates::case1::{case1_moments, Case1Config};
use negrates::case2::{case2_approx_moment_curves, case2_exact_path, case2_linearized_path, linearize_f, Case2Config};
use negrates::kernels::{
    gaussian_product_moment_with, generate_wiener, path_seed, product_kernel, wiener_moment, wiener_product_moment,
    KernelMode,
};
use negrates::output::{emit_plot, summary, write_csv, write_metadata};
use negrates::scenario::{find_scenario, list_scenarios, run_scenario, Overrides, Scenario};
use negrates::sim::Grid;
use negrates::{CoefficientFn, Error, PowerMode, RationalExponent};

#[derive(Parser)]
#[command(name = "negrates", version, about = "Second-order short-rate simulator and moment calculator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List or run preset and file-based scenarios
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// Gaussian and Wiener moment calculators
    #[command(subcommand)]
    Moments(MomentsCmd),
    /// Closed-form moments with b ≡ 0, k = 0, l = 1
    #[command(subcommand)]
    Case1(Case1Cmd),
    /// Paths and approximate moments with k = n = 0, l = 2
    #[command(subcommand)]
    Case2(Case2Cmd),
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// Print the preset catalog
    List,
    /// Simulate a scenario and write its tables
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Preset name
    #[arg(required_unless_present = "config", conflicts_with = "config")]
    name: Option<String>,
    /// Scenario file in `key = value` format
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: OverrideArgs,
    /// Write <name>.csv, <name>.meta (and <name>.svg) here instead of printing the CSV
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also emit an SVG plot (requires --out)
    #[arg(long, requires = "out")]
    svg: bool,
}

#[derive(Args)]
struct OverrideArgs {
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// corrected | paper
    #[arg(long)]
    kernel: Option<KernelMode>,
    /// oddroot | signed
    #[arg(long)]
    power: Option<PowerMode>,
    /// Worker threads (results do not depend on it)
    #[arg(long)]
    threads: Option<usize>,
}

impl OverrideArgs {
    fn to_overrides(&self) -> Overrides {
        Overrides {
            n_paths: self.paths,
            dt: self.dt,
            horizon: self.horizon,
            seed: self.seed,
            kernel: self.kernel,
            power: self.power,
            plot_paths: None,
            threads: self.threads,
        }
    }
}

#[derive(Subcommand)]
enum MomentsCmd {
    /// E[W_t^k]
    Wiener {
        #[arg(long)]
        k: u32,
        #[arg(long)]
        t: f64,
    },
    /// E[W_s^m W_u^m] and the covariance kernel
    Product {
        #[arg(long)]
        m: u32,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        u: f64,
        #[arg(long, default_value = "corrected")]
        kernel: KernelMode,
    },
    /// E[X^s1 Y^s2] for a centred bivariate normal
    Gauss {
        #[arg(long)]
        s1: u32,
        #[arg(long)]
        s2: u32,
        #[arg(long, default_value_t = 1.0)]
        sd1: f64,
        #[arg(long, default_value_t = 1.0)]
        sd2: f64,
        #[arg(long, allow_negative_numbers = true)]
        rho: f64,
        #[arg(long, default_value = "corrected")]
        kernel: KernelMode,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Base preset (default fig2a for case1, fig6a for case2); the flags below override it
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Coefficient function, e.g. "scaled_exp(-1, 1)"
    #[arg(long, allow_hyphen_values = true)]
    c: Option<CoefficientFn>,
    #[arg(long, allow_hyphen_values = true)]
    a: Option<CoefficientFn>,
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<CoefficientFn>,
    #[arg(long)]
    m: Option<RationalExponent>,
    /// Initial level A
    #[arg(long = "level", allow_negative_numbers = true)]
    level: Option<f64>,
    /// Initial slope B
    #[arg(long = "slope", allow_negative_numbers = true)]
    slope: Option<f64>,
    #[arg(long)]
    power: Option<PowerMode>,
    /// Evaluation times, comma separated
    #[arg(long, value_delimiter = ',', default_value = "1,2.5,5")]
    t: Vec<f64>,
    #[arg(long, default_value = "corrected")]
    kernel: KernelMode,
}

impl ModelArgs {
    fn scenario(&self, fallback: &str) -> anyhow::Result<Scenario> {
        let mut sc = match load_scenario(self.scenario.as_deref(), self.config.as_deref())? {
            Some(sc) => sc,
            None => find_scenario(fallback)?,
        };
        if let Some(c) = &self.c {
            sc.spec.c = c.clone();
        }
        if let Some(a) = &self.a {
            sc.spec.a = a.clone();
        }
        if let Some(s) = &self.sigma {
            sc.spec.sigma = s.clone();
        }
        if let Some(m) = self.m {
            sc.spec.m = m;
        }
        if let Some(v) = self.level {
            sc.level = v;
        }
        if let Some(v) = self.slope {
            sc.slope = v;
        }
        if let Some(p) = self.power {
            sc.spec.power_mode = p;
        }
        Ok(sc)
    }

    fn case2_config(&self) -> anyhow::Result<Case2Config> {
        let sc = self.scenario("fig6a")?;
        let sigma =
            sc.spec.sigma.constant_value().ok_or_else(|| Error::InvalidParameter("sigma must be constant".into()))?;
        Ok(Case2Config::new(sc.spec.a, sigma, sc.spec.c, sc.spec.m, sc.level, sc.slope)
            .with_power_mode(sc.spec.power_mode))
    }

    /// The requested times, sorted, behind a leading 0 that the curves start from.
    fn grid(&self) -> anyhow::Result<Vec<f64>> {
        let mut ts = self.t.clone();
        if let Some(bad) = ts.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::InvalidParameter(format!("evaluation time {bad} must be positive")).into());
        }
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts.insert(0, 0.0);
        Ok(ts)
    }
}

#[derive(Subcommand)]
enum Case1Cmd {
    /// Closed-form mean at each --t
    Mean(ModelArgs),
    /// Closed-form variance at each --t
    Var(ModelArgs),
}

#[derive(Args)]
struct PathArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 5.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Path index within the seeded ensemble
    #[arg(long, default_value_t = 0)]
    index: u64,
}

#[derive(Subcommand)]
enum Case2Cmd {
    /// One pathwise exact realization
    Exact(PathArgs),
    /// One path-linearized realization
    Linearized(PathArgs),
    /// Approximate mean and variance (m = 2) at each --t
    Moments(ModelArgs),
}

fn load_scenario(name: Option<&str>, config: Option<&Path>) -> anyhow::Result<Option<Scenario>> {
    match (name, config) {
        (Some(n), _) => Ok(Some(find_scenario(n)?)),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(Some(Scenario::parse(&text)?))
        }
        (None, None) => Ok(None),
    }
}

fn run_cmd(args: &RunArgs) -> anyhow::Result<()> {
    let base = load_scenario(args.name.as_deref(), args.config.as_deref())?.expect("clap requires a name or config");
    let members = base.expand_sweep();
    if members.len() > 1 && args.out.is_none() {
        return Err(
            Error::InvalidParameter(format!("{} expands to {} runs; pass --out", base.name, members.len())).into()
        );
    }
    let overrides = args.overrides.to_overrides();
    for sc in &members {
        let art = run_scenario(sc, &overrides)?;
        match &args.out {
            Some(dir) => {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                let stem = dir.join(&art.scenario.name);
                fs::write(stem.with_extension("csv"), write_csv(&art))?;
                fs::write(stem.with_extension("meta"), write_metadata(&art))?;
                if args.svg {
                    fs::write(stem.with_extension("svg"), emit_plot(&art)?)?;
                }
                print!("{}", summary(&art));
            }
            None => {
                print!("{}", write_csv(&art));
                eprint!("{}", summary(&art));
            }
        }
    }
    Ok(())
}

fn moments_cmd(cmd: &MomentsCmd) -> anyhow::Result<()> {
    match *cmd {
        MomentsCmd::Wiener { k, t } => println!("{:.16e}", wiener_moment(k, t)),
        MomentsCmd::Product { m, s, u, kernel } => {
            println!("moment {:.16e}", wiener_product_moment(m, s, u)?);
            println!("kernel {:.16e}", product_kernel(m, s, u, kernel));
        }
        MomentsCmd::Gauss { s1, s2, sd1, sd2, rho, kernel } => {
            if !(-1.0..=1.0).contains(&rho) {
                return Err(Error::InvalidParameter(format!("rho = {rho} outside [-1, 1]")).into());
            }
            println!("{:.16e}", gaussian_product_moment_with(s1, s2, sd1, sd2, rho, kernel));
        }
    }
    Ok(())
}

fn case1_cmd(cmd: &Case1Cmd) -> anyhow::Result<()> {
    let (args, want_var) = match cmd {
        Case1Cmd::Mean(a) => (a, false),
        Case1Cmd::Var(a) => (a, true),
    };
    let sc = args.scenario("fig2a")?;
    let cfg = Case1Config::from_spec(&sc.spec, sc.level, sc.slope)?;
    println!("t,value,method");
    for &t in &args.grid()?[1..] {
        let rep = case1_moments(&cfg, &[0.0, t], args.kernel)?;
        let (v, method) =
            if want_var { (rep.variance[1], rep.variance_method) } else { (rep.mean[1], rep.mean_method) };
        println!("{t},{v:.16e},{method:?}");
    }
    Ok(())
}

fn case2_cmd(cmd: &Case2Cmd) -> anyhow::Result<()> {
    match cmd {
        Case2Cmd::Moments(args) => {
            let cfg = args.case2_config()?;
            let times = args.grid()?;
            let (mean, var) = case2_approx_moment_curves(&cfg, &times, args.kernel)?;
            println!("t,mean,var");
            for ((t, m), v) in times.iter().zip(&mean).zip(&var).skip(1) {
                println!("{t},{m:.16e},{v:.16e}");
            }
        }
        Case2Cmd::Exact(p) | Case2Cmd::Linearized(p) => {
            let cfg = p.model.case2_config()?;
            let grid = Grid::from_dt(p.horizon, p.dt)?;
            let times = grid.times();
            let wiener = generate_wiener(&times, path_seed(p.seed, p.index))?;
            let rate = if matches!(cmd, Case2Cmd::Exact(_)) {
                case2_exact_path(&cfg, &wiener)?
            } else {
                case2_linearized_path(&cfg, &linearize_f(&cfg, &times)?, &wiener)?
            };
            println!("t,r");
            for (t, r) in times.iter().zip(&rate) {
                println!("{t:.16e},{r:.16e}");
            }
        }
    }
    Ok(())
}

fn list_cmd() {
    for sc in list_scenarios() {
        println!("{:<6} {:<8} {}", sc.name, sc.analytics, sc.notes);
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_numerical() => 3,
        Some(_) => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Scenario(ScenarioCmd::List) => {
            list_cmd();
            Ok(())
        }
        Command::Scenario(ScenarioCmd::Run(args)) => run_cmd(args),
        Command::Moments(cmd) => moments_cmd(cmd),
        Command::Case1(cmd) => case1_cmd(cmd),
        Command::Case2(cmd) => case2_cmd(cmd),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
