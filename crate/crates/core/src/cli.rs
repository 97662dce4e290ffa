//! Command-line front end: `gen | solve | firstbest | icprobe | simulate | sweep`.
//!
//! Exit codes: 0 success, 1 threshold failure, 2 input error, 3 solver
//! non-convergence. Outputs go to `--out-dir`, defaulting to `$EGMARKET_OUT_DIR`
//! and then the working directory.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::equilibrium::{solve_equilibrium, DualSolverOptions, StartPoint};
use crate::error::{Error, Result};
use crate::first_best::{ratio_of, solve_first_best};
use crate::io::{csv_header, read_instance, write_csv_file, write_instance, write_json, FirstBestSection, SolutionFile};
use crate::market::{sample_instance, MarketInstance, SampleSpec, ValueFamily};
use crate::mechanism::{ic_probe, IcReport, MisreportGrid};
use crate::online::{offline_w_star, regret_report, run_sweep, simulate, SweepConfig};
use crate::tolerance::Tolerances;

pub const OUT_DIR_ENV: &str = "EGMARKET_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "egmarket", version, about = "Budget- and RoS-constrained market equilibria")]
pub struct Cli {
    /// Directory for output files.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub tol: TolArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct TolArgs {
    #[arg(long, global = true)]
    pub tol_feas: Option<f64>,
    #[arg(long, global = true)]
    pub tol_kkt: Option<f64>,
    /// Tie threshold relative to `v_bar`.
    #[arg(long, global = true)]
    pub tol_tie: Option<f64>,
}

impl TolArgs {
    pub fn resolve(&self) -> Tolerances {
        let mut t = Tolerances::default();
        if let Some(v) = self.tol_feas {
            t.feas = v;
        }
        if let Some(v) = self.tol_kkt {
            t.kkt = v;
        }
        if let Some(v) = self.tol_tie {
            t.tie_rel = v;
        }
        t
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write an instance file.
    Gen(GenArgs),
    /// Solve for the equilibrium and check its optimality conditions.
    Solve(SolveArgs),
    /// Compare mechanism revenue with the first-best revenue.
    Firstbest(InstanceArgs),
    /// Re-solve under misreports and report utility gains.
    Icprobe(IcArgs),
    /// Run the online algorithm and measure regret.
    Simulate(SimArgs),
    /// Regret scaling over stream lengths and seeds.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Example2,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Family {
    Uniform,
    Lognormal,
}

#[derive(Debug, Args, Clone)]
pub struct GenArgs {
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    #[arg(long)]
    pub preset: Option<Preset>,
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    #[command(flatten)]
    pub sample: SampleArgs,
    #[arg(long, default_value = "instance.json")]
    pub out: String,
}

#[derive(Debug, Args, Clone)]
pub struct SampleArgs {
    #[arg(long, value_enum, default_value = "uniform")]
    pub family: Family,
    #[arg(long, default_value_t = 0.0)]
    pub lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub hi: f64,
    #[arg(long, default_value_t = 0.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 10.0)]
    pub v_bar: f64,
    #[arg(long, default_value_t = 0.05)]
    pub rho_lo: f64,
    #[arg(long, default_value_t = 0.2)]
    pub rho_hi: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau_hi: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SampleArgs {
    pub fn spec(&self) -> SampleSpec {
        let family = match self.family {
            Family::Uniform => ValueFamily::Uniform { lo: self.lo, hi: self.hi },
            Family::Lognormal => ValueFamily::TruncatedLogNormal {
                mu: self.mu,
                sigma: self.sigma,
                v_bar: self.v_bar,
            },
        };
        SampleSpec {
            family,
            rho: (self.rho_lo, self.rho_hi),
            tau: (self.tau_lo, self.tau_hi),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Start {
    Upper,
    Lower,
}

#[derive(Debug, Args, Clone)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, value_enum, default_value = "upper")]
    pub start: Start,
    #[arg(long, default_value = "solution.json")]
    pub out: String,
}

#[derive(Debug, Args, Clone)]
pub struct InstanceArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, default_value = "solution.json")]
    pub out: String,
}

#[derive(Debug, Args, Clone)]
pub struct IcArgs {
    /// Probe a single instance file.
    #[arg(long, conflicts_with = "batch")]
    pub instance: Option<PathBuf>,
    /// Probe this many generated instances instead.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Buyer to probe (default: all).
    #[arg(long)]
    pub buyer: Option<usize>,
    /// Grid points per axis.
    #[arg(long, default_value_t = 5)]
    pub grid: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "icprobe.csv")]
    pub out: String,
}

#[derive(Debug, Args, Clone)]
pub struct SimArgs {
    /// Stream file; generated from the sampling flags when absent.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    #[arg(long, default_value_t = 10_000)]
    pub m: usize,
    #[command(flatten)]
    pub sample: SampleArgs,
    #[arg(long, default_value = "trace.csv")]
    pub trace_out: String,
    #[arg(long, default_value = "regret.json")]
    pub regret_out: String,
}

#[derive(Debug, Args, Clone)]
pub struct SweepArgs {
    /// Stream lengths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1024usize, 4096, 16384, 65536])]
    pub ms: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    #[arg(long, default_value_t = 0.05)]
    pub rho_lo: f64,
    #[arg(long, default_value_t = 0.2)]
    pub rho_hi: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau_hi: f64,
    #[arg(long, default_value = "sweep")]
    pub prefix: String,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NoConvergence { .. } | Error::NumericalBreakdown(_) | Error::TieResolutionInfeasible { .. } => 3,
        _ => 2,
    }
}

/// Runs a parsed command; `Ok` carries 0 or the threshold-failure code 1.
pub fn run(cli: &Cli) -> Result<i32> {
    let tol = cli.tol.resolve();
    fs::create_dir_all(&cli.out_dir)?;
    let out = |name: &str| cli.out_dir.join(name);
    match &cli.command {
        Command::Gen(a) => cmd_gen(a, &out(&a.out)),
        Command::Solve(a) => cmd_solve(a, tol, &out(&a.out)),
        Command::Firstbest(a) => cmd_firstbest(a, tol, &out(&a.out)),
        Command::Icprobe(a) => cmd_icprobe(a, tol, &out(&a.out)),
        Command::Simulate(a) => cmd_simulate(a, tol, &out(&a.trace_out), &out(&a.regret_out)),
        Command::Sweep(a) => cmd_sweep(a, tol, &cli.out_dir),
    }
}

fn solver_options(tol: Tolerances) -> DualSolverOptions {
    DualSolverOptions::default().with_tolerances(tol)
}

pub fn cmd_gen(a: &GenArgs, path: &Path) -> Result<i32> {
    let inst = match a.preset {
        Some(Preset::Example2) => MarketInstance::tight_example(a.eps)?,
        None => sample_instance(a.n, a.m, &a.sample.spec(), a.sample.seed)?,
    };
    write_instance(path, &inst)?;
    let budget: f64 = inst.lambda().iter().sum::<f64>() / inst.n() as f64;
    println!(
        "n={} m={} v_bar={} mean_budget={budget:.6} -> {}",
        inst.n(),
        inst.m(),
        inst.v_bar(),
        path.display()
    );
    Ok(0)
}

pub fn cmd_solve(a: &SolveArgs, tol: Tolerances, path: &Path) -> Result<i32> {
    let inst = read_instance(&a.instance)?;
    let start = match a.start {
        Start::Upper => StartPoint::UpperCorner,
        Start::Lower => StartPoint::LowerCorner,
    };
    let sol = solve_equilibrium(&inst, &solver_options(tol).with_start(start))?;
    let file = SolutionFile::new(&inst, &sol, tol);
    write_json(path, &file)?;
    let w: Vec<String> = file.w.iter().map(|w| format!("{w:.6}")).collect();
    println!(
        "w=({}) revenue={:.6} kkt_max_residual={:.3e}",
        w.join(", "),
        file.revenue,
        file.kkt_max_residual
    );
    Ok(if file.kkt_max_residual > tol.kkt { 1 } else { 0 })
}

pub fn cmd_firstbest(a: &InstanceArgs, tol: Tolerances, path: &Path) -> Result<i32> {
    let inst = read_instance(&a.instance)?;
    let sol = solve_equilibrium(&inst, &solver_options(tol))?;
    let fb = solve_first_best(&inst)?;
    let ratio = ratio_of(sol.revenue(), fb.revenue);
    let mut file = SolutionFile::new(&inst, &sol, tol);
    file.first_best = Some(FirstBestSection { solution: fb, ratio });
    write_json(path, &file)?;
    println!(
        "rev_star={:.6} rev_fb={:.6} ratio={:.4}",
        ratio.rev_star, ratio.rev_fb, ratio.ratio
    );
    Ok(if ratio.half_approx { 0 } else { 1 })
}

pub fn cmd_icprobe(a: &IcArgs, tol: Tolerances, path: &Path) -> Result<i32> {
    let grid = MisreportGrid::under_reports(a.grid);
    let opts = solver_options(tol);
    let instances: Vec<MarketInstance> = match (&a.instance, a.batch) {
        (Some(p), _) => vec![read_instance(p)?],
        (None, Some(k)) => (0..k as u64)
            .map(|s| {
                let spec = SampleSpec::uniform(0.0, 1.0).with_tau(1.0, 2.0);
                sample_instance(2 + (s % 4) as usize, 5 + (s % 26) as usize, &spec, a.seed + s)
            })
            .collect::<Result<_>>()?,
        (None, None) => return Err(Error::BadParams("pass --instance or --batch".into())),
    };
    let mut report = IcReport { truthful_utility: Vec::new(), rows: Vec::new() };
    for inst in &instances {
        let buyers: Vec<usize> = match a.buyer {
            Some(i) => vec![i],
            None => (0..inst.n()).collect(),
        };
        for i in buyers {
            report.merge(ic_probe(inst, i, &grid, &opts)?);
        }
    }
    let header = csv_header(&tol, &[("grid", a.grid.to_string()), ("instances", instances.len().to_string())]);
    write_csv_file(path, &header, |buf| report.write_csv(buf))?;
    let gain = report.max_gain();
    let verdict = if gain <= 1e-6 { "<=" } else { ">" };
    println!("max_gain={gain:.3e} {verdict} 1e-6 over {} misreports", report.rows.len());
    Ok(if gain <= 1e-6 { 0 } else { 1 })
}

pub fn cmd_simulate(a: &SimArgs, tol: Tolerances, trace_path: &Path, regret_path: &Path) -> Result<i32> {
    let inst = match &a.instance {
        Some(p) => read_instance(p)?,
        None => sample_instance(a.n, a.m, &a.sample.spec(), a.sample.seed)?,
    };
    let trace = simulate(&inst)?;
    let w_star = offline_w_star(&inst)?;
    let rep = regret_report(&trace, &w_star)?;
    let header = csv_header(&tol, &[("n", inst.n().to_string()), ("m", inst.m().to_string())]);
    write_csv_file(trace_path, &header, |buf| trace.write_csv(buf))?;
    write_json(regret_path, &rep.downsampled())?;
    println!(
        "r_obj={:.6} mean_strategy_gap={:.3e} max_utility_regret={:.6} revenue_gap={:.6}",
        rep.r_obj_final(),
        rep.mean_strategy_gap(),
        rep.max_abs_utility_regret(),
        rep.revenue_gap
    );
    Ok(0)
}

pub fn cmd_sweep(a: &SweepArgs, tol: Tolerances, dir: &Path) -> Result<i32> {
    let cfg = SweepConfig {
        ms: a.ms.clone(),
        n: a.n,
        seeds: a.seeds,
        spec: SampleSpec::uniform(0.0, 1.0)
            .with_rho(a.rho_lo, a.rho_hi)
            .with_tau(a.tau_lo, a.tau_hi),
    };
    let res = run_sweep(&cfg)?;
    let header = csv_header(&tol, &[("n", a.n.to_string()), ("seeds", a.seeds.to_string())]);
    write_csv_file(&dir.join(format!("{}_points.csv", a.prefix)), &header, |b| res.write_points_csv(b))?;
    write_csv_file(&dir.join(format!("{}_medians.csv", a.prefix)), &header, |b| res.write_medians_csv(b))?;
    write_json(&dir.join(format!("{}.json", a.prefix)), &res)?;
    println!("{:>8} {:>14} {:>14} {:>14} {:>14}", "m", "R/log m", "strategy_gap", "utility", "revenue");
    for r in &res.medians {
        println!(
            "{:>8} {:>14.6} {:>14.3e} {:>14.4} {:>14.4}",
            r.m, r.r_obj_over_log_m, r.strategy_gap, r.utility_regret, r.revenue_gap
        );
    }
    let ok_aux = res.aux_ratio_non_increasing();
    let ok_gap = (-0.6..=-0.4).contains(&res.slope_strategy_gap);
    let ok_util = res.slope_utility_regret <= 0.6;
    let ok_rev = res.slope_revenue_gap <= 0.6;
    println!(
        "slopes: strategy_gap={:.3} utility={:.3} revenue={:.3}; R/log m non-increasing={ok_aux}",
        res.slope_strategy_gap, res.slope_utility_regret, res.slope_revenue_gap
    );
    Ok(if ok_aux && ok_gap && ok_util && ok_rev { 0 } else { 1 })
}
