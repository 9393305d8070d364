//! The `bucketopt` command-line tool.
//!
//! Exit codes: 0 success, 2 usage or bad input, 3 infeasible program,
//! 4 simulated delay outside tolerance, 5 internal failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::delay::{dual_value, optimal_bucket_size, delay_metric};
use crate::experiments::{adaptive_vs_fixed, five_receiver_instance, integer_k_grid, tradeoff_curves, write_sweep_csv, write_tradeoff_csv};
use crate::export::fmt_sig;
use crate::gp::SolverConfig;
use crate::model::{load_instance_file, ModelError, NetworkInstance, Sensitivity, Solution};
use crate::programs::{solve_multi_ap, solve_single_ap, Objective, ProgramError, StopRule};
use crate::sim::{compare_analytic, run_session, write_flow_trace_csv, CodingConfig, SessionConfig, SimError, SimReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_GAP: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "bucketopt", version, about = "Bucket-size and scheduling optimization for RLNC broadcast")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Instance file (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for CSV / JSON files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Simulation replications.
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    /// Solver relative-gap tolerance; for `validate`, the allowed relative delay gap.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub objective: Option<ObjectiveArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Minrate,
    Product,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Minrate => Objective::MinRate,
            ObjectiveArg::Product => Objective::RateProduct,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverSource {
    GpSolve,
    SpSolve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentName {
    AdaptiveVsFixed,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Delay-optimal bucket size of a single receiver.
    SingleOpt {
        #[arg(long)]
        eps: f64,
        /// Feedback delay in slots.
        #[arg(long)]
        d: f64,
        #[arg(long, default_value = "2", value_parser = parse_sensitivity)]
        p: Sensitivity,
        /// Packet size.
        #[arg(long, default_value_t = 1.0)]
        l: f64,
        #[arg(long, default_value_t = 100.0)]
        k_max: f64,
    },
    /// d(1) / d(inf) trade-off curves over integer bucket sizes.
    Tradeoff {
        #[arg(long, default_value_t = 0.4)]
        eps: f64,
        #[arg(long, default_value_t = 1.0)]
        l: f64,
        /// Comma-separated feedback delays, one curve each.
        #[arg(long, value_delimiter = ',', default_value = "2,5,10")]
        d: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        k_max: usize,
        /// Sensitivity of the extra `dp` column.
        #[arg(long, default_value = "2", value_parser = parse_sensitivity)]
        p: Sensitivity,
    },
    /// Solve the single-transmitter program.
    GpSolve,
    /// Solve the multi-transmitter program by successive condensation.
    SpSolve {
        #[arg(long, default_value_t = 50)]
        max_outer: usize,
    },
    /// Simulate a solution (read from --solution, or optimized on the fly).
    Simulate {
        #[arg(long)]
        solution: Option<PathBuf>,
        #[arg(long, default_value_t = 30_000)]
        packets: usize,
        /// Treat every received packet as innovative.
        #[arg(long)]
        ideal: bool,
    },
    /// Optimize, simulate, and compare simulated against analytic delays.
    Validate {
        #[arg(long, value_enum)]
        source: Option<SolverSource>,
        #[arg(long, default_value_t = 30_000)]
        packets: usize,
    },
    /// Parameter sweeps (adaptive vs fixed bucket sizes).
    Experiment {
        #[arg(value_enum)]
        name: ExperimentName,
        #[arg(long, default_value_t = 1.0)]
        p1_min: f64,
        #[arg(long, default_value_t = 4.0)]
        p1_max: f64,
        #[arg(long, default_value_t = 0.2)]
        p1_step: f64,
        #[arg(long, value_delimiter = ',', default_value = "25,100")]
        fixed_k: Vec<f64>,
    },
}

fn parse_sensitivity(s: &str) -> Result<Sensitivity, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" => Ok(Sensitivity::Infinite),
        t => {
            let v: f64 = t.parse().map_err(|_| format!("expected a number >= 1 or \"inf\", got {s:?}"))?;
            if v >= 1.0 && v.is_finite() {
                Ok(Sensitivity::Finite(v))
            } else {
                Err(format!("p must be >= 1, got {v}"))
            }
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Infeasible(String),
    Gap(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Gap(_) => EXIT_GAP,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Infeasible(m) | CliError::Gap(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Serialize(_) => CliError::Internal(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ProgramError> for CliError {
    fn from(e: ProgramError) -> Self {
        match e {
            ProgramError::Infeasible { .. } => CliError::Infeasible(e.to_string()),
            ProgramError::Invalid(_) | ProgramError::NotSingleAp(_) => CliError::Usage(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) => CliError::Usage(e.to_string()),
            SimError::Coding(_) => CliError::Internal(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

fn out_file(common: &Common, name: &str) -> Result<Option<File>, CliError> {
    match &common.out {
        None => Ok(None),
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Ok(Some(File::create(dir.join(name))?))
        }
    }
}

fn instance(common: &Common) -> Result<NetworkInstance, CliError> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config is required".into()))?;
    load(path)
}

fn load(path: &Path) -> Result<NetworkInstance, CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!("config file {} not found", path.display())));
    }
    Ok(load_instance_file(path)?)
}

fn solver_config(common: &Common) -> Result<SolverConfig, CliError> {
    let mut cfg = SolverConfig::default();
    if let Some(t) = common.tol {
        if !(t > 0.0) {
            return Err(CliError::Usage("--tol must be positive".into()));
        }
        cfg.rel_gap_tol = t;
    }
    Ok(cfg)
}

fn write_solution(common: &Common, sol: &Solution) -> CliResult {
    if let Some(mut f) = out_file(common, "solution.json")? {
        let text = serde_json::to_string_pretty(sol).map_err(|e| CliError::Internal(e.to_string()))?;
        writeln!(f, "{text}")?;
    }
    Ok(())
}

fn print_solution(out: &mut dyn Write, inst: &NetworkInstance, sol: &Solution) -> io::Result<()> {
    writeln!(out, "objective\t{}", fmt_sig(sol.objective))?;
    writeln!(out, "min_rate\t{}", fmt_sig(sol.min_data_rate(inst)))?;
    writeln!(out, "receiver\tK\tr\tR\tschedule")?;
    for j in 0..inst.num_receivers() {
        let sched: Vec<String> = (0..inst.num_transmitters()).map(|i| fmt_sig(sol.scheduling[i][j])).collect();
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            inst.receivers[j].label,
            fmt_sig(sol.bucket_sizes[j]),
            fmt_sig(sol.rates[j]),
            fmt_sig(sol.data_rate(inst, j)),
            sched.join(",")
        )?;
    }
    Ok(())
}

/// Single-transmitter instances use the GP directly; others use condensation.
fn optimize(
    inst: &NetworkInstance,
    source: SolverSource,
    objective: Objective,
    cfg: &SolverConfig,
    stop: &StopRule,
) -> Result<Solution, CliError> {
    match source {
        SolverSource::GpSolve => Ok(solve_single_ap(inst, objective, cfg)?.0),
        SolverSource::SpSolve => Ok(solve_multi_ap(inst, objective, cfg, stop)?.0),
    }
}

fn default_source(inst: &NetworkInstance) -> SolverSource {
    if inst.transmitters == 1 {
        SolverSource::GpSolve
    } else {
        SolverSource::SpSolve
    }
}

fn print_report(out: &mut dyn Write, report: &SimReport) -> io::Result<()> {
    writeln!(out, "flow\tK\tbuckets\tbucket_time\tanalytic\tp\tempirical\tci\tanalytic_d\tgap")?;
    for f in &report.flows {
        for r in &f.metrics {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                f.label,
                f.k_rounded,
                f.buckets,
                fmt_sig(f.mean_bucket_time),
                fmt_sig(f.analytic_bucket_time),
                r.p,
                fmt_sig(r.empirical),
                fmt_sig(r.ci_half_width),
                fmt_sig(r.analytic_rounded),
                fmt_sig(r.rel_gap)
            )?;
        }
    }
    writeln!(out, "telescoping\t{}", report.telescoping_ok())
}

fn simulate_and_report(
    common: &Common,
    inst: &NetworkInstance,
    sol: &Solution,
    packets: usize,
    ideal: bool,
    out: &mut dyn Write,
) -> Result<SimReport, CliError> {
    let cfg = SessionConfig {
        instance: inst.clone(),
        solution: sol.clone(),
        packets_per_flow: packets,
        replications: common.reps.unwrap_or(10),
    };
    let coding = CodingConfig {
        seed: common.seed,
        ideal_decoding: ideal,
        ..CodingConfig::default()
    };
    let trace = run_session(&cfg, &coding)?;
    let report = compare_analytic(&trace, inst, sol)?;
    print_report(out, &report)?;
    if let Some(f) = out_file(common, "sim_summary.csv")? {
        report.write_summary_csv(f)?;
    }
    for j in 0..inst.num_receivers() {
        if let Some(f) = out_file(common, &format!("trace_flow{}.csv", j + 1))? {
            write_flow_trace_csv(f, &trace, j)?;
        }
    }
    Ok(report)
}

fn sweep_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0) || !(min >= 1.0) || max < min {
        return Err(CliError::Usage("p1 grid needs 1 <= min <= max and step > 0".into()));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| min + step * i as f64).collect())
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> CliResult {
    let common = &cli.common;
    match &cli.command {
        Command::SingleOpt { eps, d, p, l, k_max } => {
            let k = optimal_bucket_size(*eps, *d, *p, *k_max).map_err(|e| CliError::Usage(e.to_string()))?;
            let dp = delay_metric(k, 1.0 - eps, *d, *l, *p).map_err(|e| CliError::Usage(e.to_string()))?;
            writeln!(out, "K*\t{}", fmt_sig(k))?;
            writeln!(out, "d(p)\t{}", fmt_sig(dp))?;
            let dual = match p.value() > 1.0 {
                true => dual_value(*eps, *d, *l, *p, *k_max).ok(),
                false => None,
            };
            match dual {
                Some(v) => writeln!(out, "dual\t{}\t{}", fmt_sig(v.value), if v.clamped { "clamped" } else { "tight" })?,
                None => writeln!(out, "dual\tNaN\tundefined")?,
            }
            if let Some(f) = out_file(common, "single_opt.csv")? {
                let row = vec![fmt_sig(*eps), fmt_sig(*d), p.to_string(), fmt_sig(k), fmt_sig(dp), fmt_sig(dual.map_or(f64::NAN, |v| v.value))];
                crate::export::write_rows(f, &["eps", "D", "p", "K", "dp", "dual"], &[row])?;
            }
        }
        Command::Tradeoff { eps, l, d, k_max, p } => {
            if *k_max < 1 || d.iter().any(|x| !(*x >= 0.0)) {
                return Err(CliError::Usage("need k_max >= 1 and D >= 0".into()));
            }
            let curves = tradeoff_curves(*eps, *l, d, *p, &integer_k_grid(*k_max)).map_err(|e| CliError::Usage(e.to_string()))?;
            match out_file(common, "tradeoff.csv")? {
                Some(f) => {
                    write_tradeoff_csv(f, &curves)?;
                    for c in &curves {
                        writeln!(out, "D={}\tpoints={}\td1_asymptote={}", fmt_sig(c.feedback_delay), c.points.len(), fmt_sig(c.d1_asymptote))?;
                    }
                }
                None => write_tradeoff_csv(&mut *out, &curves)?,
            }
        }
        Command::GpSolve => {
            let inst = instance(common)?;
            let objective = common.objective.map_or(Objective::MinRate, Objective::from);
            let (sol, outcome) = solve_single_ap(&inst, objective, &solver_config(common)?)?;
            print_solution(out, &inst, &sol)?;
            write_solution(common, &sol)?;
            if let Some(f) = out_file(common, "gp_trace.csv")? {
                outcome.write_trace_csv(f)?;
            }
        }
        Command::SpSolve { max_outer } => {
            let inst = instance(common)?;
            let objective = common.objective.map_or(Objective::RateProduct, Objective::from);
            let stop = StopRule {
                max_outer: *max_outer,
                ..StopRule::default()
            };
            let (sol, state) = solve_multi_ap(&inst, objective, &solver_config(common)?, &stop)?;
            writeln!(out, "outer_iterations\t{}\tconverged\t{}", state.t, state.converged)?;
            print_solution(out, &inst, &sol)?;
            write_solution(common, &sol)?;
            if let Some(f) = out_file(common, "convergence.csv")? {
                state.write_trace_csv(f)?;
            }
        }
        Command::Simulate { solution, packets, ideal } => {
            let inst = instance(common)?;
            let sol = match solution {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
                }
                None => {
                    let source = default_source(&inst);
                    let objective = common.objective.map(Objective::from).unwrap_or(match source {
                        SolverSource::GpSolve => Objective::MinRate,
                        SolverSource::SpSolve => Objective::RateProduct,
                    });
                    optimize(&inst, source, objective, &solver_config(common)?, &StopRule::default())?
                }
            };
            simulate_and_report(common, &inst, &sol, *packets, *ideal, out)?;
        }
        Command::Validate { source, packets } => {
            let inst = instance(common)?;
            let gap_tol = common.tol.unwrap_or(0.02);
            let source = source.unwrap_or_else(|| default_source(&inst));
            let objective = common.objective.map(Objective::from).unwrap_or(match source {
                SolverSource::GpSolve => Objective::MinRate,
                SolverSource::SpSolve => Objective::RateProduct,
            });
            let sol = optimize(&inst, source, objective, &SolverConfig::default(), &StopRule::default())?;
            let report = simulate_and_report(common, &inst, &sol, *packets, false, out)?;
            for f in &report.flows {
                if let Some(r) = f.own_metric(inst.receivers[f.flow].p) {
                    writeln!(
                        out,
                        "delay_bound\t{}\t{}\t{}\t{}",
                        f.label,
                        fmt_sig(r.empirical),
                        fmt_sig(f.delay_bound),
                        fmt_sig(r.analytic_rounded)
                    )?;
                }
            }
            let gap = report.max_abs_gap();
            if !report.telescoping_ok() {
                return Err(CliError::Internal("telescoping identity failed".into()));
            }
            if gap > gap_tol {
                return Err(CliError::Gap(format!("largest relative delay gap {} exceeds {}", fmt_sig(gap), fmt_sig(gap_tol))));
            }
            writeln!(out, "max_gap\t{}\tok", fmt_sig(gap))?;
        }
        Command::Experiment {
            name: ExperimentName::AdaptiveVsFixed,
            p1_min,
            p1_max,
            p1_step,
            fixed_k,
        } => {
            let base = match &common.config {
                Some(path) => load(path)?,
                None => five_receiver_instance(1.0),
            };
            let grid = sweep_grid(*p1_min, *p1_max, *p1_step)?;
            let rows = adaptive_vs_fixed(&base, &grid, fixed_k, &solver_config(common)?)?;
            match out_file(common, "adaptive_vs_fixed.csv")? {
                Some(f) => {
                    write_sweep_csv(f, &rows)?;
                    writeln!(out, "rows\t{}", rows.len())?;
                }
                None => write_sweep_csv(&mut *out, &rows)?,
            }
        }
    }
    Ok(())
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, &mut lock) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("bucketopt: {}", e.message());
            e.exit_code()
        }
    }
}
