//! `qpf` command-line front end.
//!
//! Exit status: 0 when the power flow converged (or the analysis finished),
//! 1 on bad input or a failed solve, 2 when the iteration limit was reached.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::analysis::{
    b_prime, circuit_size_table, circuit_table_csv, compare_convergence, condition_number, synthetic_system,
    SolverSpec,
};
use crate::fdlf::{run_power_flow, ClassicalSolver, LinearSolver, PowerFlowError, PowerFlowResult, PowerFlowTrace};
use crate::hhl::{HhlConfig, HhlSolver, Readout, SignPolicy};
use crate::netmodel::{load_case, PowerNetwork};
use crate::noise::{device_cnot_error, NoiseModel};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_NOT_CONVERGED: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "qpf", version, about = "Fast decoupled power flow with classical and simulated HHL solvers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the power flow on a case file.
    Run(RunArgs),
    /// Diagnostics over one or more case files.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Classical,
    HhlIdeal,
    HhlSampled,
    HhlNoisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReadoutArg {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignsArg {
    Reference,
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// HHL settings shared by `run` and `analyze`.
#[derive(Debug, Clone, Args)]
pub struct HhlArgs {
    #[arg(long, default_value_t = 1024)]
    pub shots: u64,
    /// Minimum eigenvalue register size (sign qubit included).
    #[arg(long = "nl", default_value_t = 3)]
    pub n_l: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SignsArg::Reference)]
    pub signs: SignsArg,
    #[arg(long = "rotation-c", default_value_t = 1.0)]
    pub rotation_c: f64,
}

impl HhlArgs {
    fn config(&self) -> HhlConfig {
        HhlConfig {
            n_l: self.n_l,
            shots: self.shots,
            rotation_c: self.rotation_c,
            signs: match self.signs {
                SignsArg::Reference => SignPolicy::Reference,
                SignsArg::Positive => SignPolicy::Positive,
            },
            seed: self.seed,
            ..HhlConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    pub case: PathBuf,
    #[arg(long, value_enum, default_value_t = SolverKind::Classical)]
    pub solver: SolverKind,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long = "max-iter", default_value_t = 200)]
    pub max_iter: usize,
    /// Defaults to exact for hhl-ideal and sampled otherwise.
    #[arg(long, value_enum)]
    pub readout: Option<ReadoutArg>,
    /// CNOT error rate for hhl-noisy (default 0.01).
    #[arg(long = "p-cnot", conflicts_with_all = ["device", "noise"])]
    pub p_cnot: Option<f64>,
    /// Single-qubit error rate (default p_cnot / 10).
    #[arg(long = "p-1q")]
    pub p_1q: Option<f64>,
    /// Take the CNOT error rate from a known device, e.g. ibmq_quito.
    #[arg(long, conflicts_with = "noise")]
    pub device: Option<String>,
    /// JSON noise model file: {"p_cnot": .., "p_1q": .., "seed": ..}.
    #[arg(long)]
    pub noise: Option<PathBuf>,
    #[command(flatten)]
    pub hhl: HhlArgs,
    /// Directory for trace.csv and solution.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Condition number of each case's B' matrix.
    Condition {
        #[arg(required = true)]
        cases: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Width, depth and CNOT estimates of the HHL circuit for each case.
    Circuit {
        cases: Vec<PathBuf>,
        /// Add a synthetic N x N system (repeatable).
        #[arg(long)]
        synthetic: Vec<usize>,
        #[arg(long = "nl", default_value_t = 3)]
        n_l: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Iteration-by-iteration error of several solvers against the classical fixed point.
    Compare {
        case: PathBuf,
        /// Comma-separated: classical, hhl-ideal, hhl-sampled, hhl-noisy[:p_cnot[:p_1q]].
        #[arg(long, value_delimiter = ',', default_value = "classical,hhl-ideal")]
        solvers: Vec<String>,
        /// Comma-separated seeds for stochastic solvers.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[arg(long = "max-iter", default_value_t = 200)]
        max_iter: usize,
        #[command(flatten)]
        hhl: HhlArgs,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { EXIT_OK });
        }
    };
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<u8, String> {
    match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Analyze(cmd) => cmd_analyze(cmd),
    }
}

fn load(path: &Path) -> Result<PowerNetwork, String> {
    load_case(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

fn emit(out: Option<&Path>, contents: &str) -> Result<(), String> {
    match out {
        Some(path) => write_file(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn noise_model(args: &RunArgs) -> Result<NoiseModel, String> {
    let seed = args.hhl.seed;
    let model = if let Some(path) = &args.noise {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        NoiseModel::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?
    } else {
        let p_cnot = match &args.device {
            Some(name) => device_cnot_error(name).ok_or_else(|| format!("unknown device '{name}'"))?,
            None => args.p_cnot.unwrap_or(1e-2),
        };
        NoiseModel::new(p_cnot, args.p_1q.unwrap_or(p_cnot / 10.0), seed).map_err(|e| e.to_string())?
    };
    Ok(model)
}

/// `None` for the classical solver.
fn build_hhl_solver(args: &RunArgs) -> Result<Option<(HhlSolver, Option<NoiseModel>)>, String> {
    if args.solver == SolverKind::Classical {
        return Ok(None);
    }
    let default_readout = if args.solver == SolverKind::HhlIdeal { Readout::Exact } else { Readout::Sampled };
    let readout = match args.readout {
        None => default_readout,
        Some(ReadoutArg::Exact) => Readout::Exact,
        Some(ReadoutArg::Sampled) => Readout::Sampled,
    };
    let config = HhlConfig { readout, ..args.hhl.config() };
    config.validate().map_err(|e| e.to_string())?;
    let noise = match args.solver {
        SolverKind::HhlNoisy => Some(noise_model(args)?),
        _ => None,
    };
    if noise.is_some() && readout == Readout::Exact {
        return Err("hhl-noisy needs sampled readout".into());
    }
    let label = match args.solver {
        SolverKind::HhlIdeal => "hhl-ideal",
        SolverKind::HhlSampled => "hhl-sampled",
        _ => "hhl-noisy",
    };
    Ok(Some((HhlSolver::with_label(config, noise, label), noise)))
}

/// Iterations in the layout of a classical FDLF table: one row per
/// iteration, |V| in p.u. and angles in degrees, 8 decimals.
pub fn format_trace_table(trace: &PowerFlowTrace) -> String {
    let buses: Vec<usize> = (0..trace.bus_ids.len()).filter(|&i| i != trace.slack).collect();
    let mut out = format!("{:>5}", "iter");
    for &b in &buses {
        let id = trace.bus_ids[b];
        write!(out, " {:>12} {:>14}", format!("V{id}"), format!("theta{id}")).unwrap();
    }
    out.push('\n');
    for rec in &trace.iterations {
        write!(out, "{:>5}", rec.iteration).unwrap();
        for &b in &buses {
            write!(out, " {:>12.8} {:>14.8}", rec.vm[b], rec.theta[b].to_degrees()).unwrap();
        }
        out.push('\n');
    }
    out
}

fn solution_json(args: &RunArgs, result: &PowerFlowResult, noise: Option<&NoiseModel>, hhl: Option<Value>) -> Value {
    let trace = &result.trace;
    json!({
        "case": args.case.display().to_string(),
        "solver": trace.solver,
        "converged": trace.converged,
        "iterations": trace.len(),
        "tol": trace.tol,
        "max_iter": args.max_iter,
        "bus_ids": trace.bus_ids,
        "vm": result.state.vm,
        "theta_deg": result.state.theta_deg(),
        "final_dp_norm": trace.iterations.last().map_or(trace.initial_dp_norm, |r| r.dp_norm),
        "final_dq_norm": trace.iterations.last().map_or(trace.initial_dq_norm, |r| r.dq_norm),
        "noise": noise,
        "last_solve": hhl,
    })
}

pub fn cmd_run(args: &RunArgs) -> Result<u8, String> {
    let net = load(&args.case)?;
    let (mut hhl_solver, noise) = match build_hhl_solver(args)? {
        Some((s, n)) => (Some(s), n),
        None => (None, None),
    };
    let mut classical = ClassicalSolver;
    let solver: &mut dyn LinearSolver = match hhl_solver.as_mut() {
        Some(s) => s,
        None => &mut classical,
    };
    let (result, code) = match run_power_flow(&net, solver, args.tol, args.max_iter) {
        Ok(r) => (r, EXIT_OK),
        Err(PowerFlowError::NotConverged { state, trace, .. }) => {
            (PowerFlowResult { state, trace: *trace }, EXIT_NOT_CONVERGED)
        }
        Err(e) => return Err(e.to_string()),
    };
    let hhl = hhl_solver.as_ref().and_then(HhlSolver::last_solution).map(|s| s.to_json());

    print!("{}", format_trace_table(&result.trace));
    println!(
        "{} after {} iterations (solver {})",
        if code == EXIT_OK { "converged" } else { "not converged" },
        result.trace.len(),
        result.trace.solver
    );
    write_file(&args.out.join("trace.csv"), &result.trace.to_csv())?;
    write_file(&args.out.join("solution.json"), &pretty(&solution_json(args, &result, noise.as_ref(), hhl)))?;
    Ok(code)
}

pub fn cmd_analyze(cmd: &AnalyzeCommand) -> Result<u8, String> {
    match cmd {
        AnalyzeCommand::Condition { cases, format, out } => {
            let mut reports = Vec::new();
            for path in cases {
                let b = b_prime(&load(path)?).map_err(|e| e.to_string())?;
                reports.push(condition_number(&path.display().to_string(), &b).map_err(|e| e.to_string())?);
            }
            let text = match format {
                Format::Json => pretty(&json!(reports)),
                Format::Csv => {
                    let mut s = String::from("case,kappa,lambda_max,lambda_min\n");
                    for r in &reports {
                        writeln!(s, "{},{},{},{}", r.label, r.kappa, r.lambda_max, r.lambda_min).unwrap();
                    }
                    s
                }
            };
            emit(out.as_deref(), &text)?;
        }
        AnalyzeCommand::Circuit { cases, synthetic, n_l, format, out } => {
            let mut systems = Vec::new();
            for path in cases {
                let b = b_prime(&load(path)?).map_err(|e| e.to_string())?;
                systems.push((path.display().to_string(), b));
            }
            for &n in synthetic {
                if n == 0 {
                    return Err("synthetic system size must be positive".into());
                }
                systems.push((format!("synthetic-{n}"), synthetic_system(n)));
            }
            let config = HhlConfig { n_l: *n_l, ..HhlConfig::default() };
            let rows = circuit_size_table(&systems, &config).map_err(|e| e.to_string())?;
            let text = match format {
                Format::Json => pretty(&json!(rows)),
                Format::Csv => circuit_table_csv(&rows),
            };
            emit(out.as_deref(), &text)?;
        }
        AnalyzeCommand::Compare { case, solvers, seeds, tol, max_iter, hhl, format, out } => {
            let net = load(case)?;
            let specs = solvers
                .iter()
                .map(|s| s.parse::<SolverSpec>().map_err(|e| e.to_string()))
                .collect::<Result<Vec<_>, _>>()?;
            let cmp = compare_convergence(&net, &specs, *tol, *max_iter, seeds, &hhl.config())
                .map_err(|e| e.to_string())?;
            let text = match format {
                Format::Csv => cmp.to_csv(),
                Format::Json => {
                    let runs: Vec<Value> = cmp
                        .runs
                        .iter()
                        .map(|r| {
                            json!({
                                "label": r.label,
                                "solver": r.spec.label(),
                                "seed": r.seed,
                                "converged": r.converged,
                                "iterations": r.iterations(),
                                "errors": r.errors,
                            })
                        })
                        .collect();
                    pretty(&json!({ "tol": cmp.tol, "max_iter": cmp.max_iter, "runs": runs }))
                }
            };
            emit(out.as_deref(), &text)?;
        }
    }
    Ok(EXIT_OK)
}
