//! Condition numbers, circuit-size tables and solver convergence comparisons.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fdlf::{run_power_flow, run_power_flow_lenient, ClassicalSolver, LinearSolver, PowerFlowError, PowerFlowTrace, PfState};
use crate::hhl::{build_hhl_circuit, HhlConfig, HhlError, HhlSolver};
use crate::linalg::{self, LinalgError};
use crate::netmodel::{build_b_matrices, build_ybus, NetworkError, PowerNetwork};
use crate::noise::NoiseModel;
use crate::qsim::circuit_metrics;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Hhl(#[from] HhlError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error("matrix is singular (smallest |eigenvalue| {0:e})")]
    Singular(f64),
    #[error("unknown solver '{0}' (expected classical, hhl-ideal, hhl-sampled or hhl-noisy[:p])")]
    UnknownSolver(String),
    #[error("no seeds given")]
    NoSeeds,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub label: String,
    pub kappa: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
}

/// `|lambda|max / |lambda|min` of a symmetric matrix.
pub fn condition_number(label: &str, b: &DMatrix<f64>) -> Result<ConditionReport, AnalysisError> {
    let (values, _) = linalg::symmetric_eigen(b)?;
    let abs = values.iter().map(|l| l.abs());
    let lambda_min = abs.clone().fold(f64::INFINITY, f64::min);
    let lambda_max = abs.fold(0.0, f64::max);
    if lambda_min < linalg::PIVOT_EPS {
        return Err(AnalysisError::Singular(lambda_min));
    }
    Ok(ConditionReport { label: label.to_string(), kappa: lambda_max / lambda_min, lambda_max, lambda_min })
}

/// B' of a network.
pub fn b_prime(net: &PowerNetwork) -> Result<DMatrix<f64>, AnalysisError> {
    let y = build_ybus(net)?;
    Ok(build_b_matrices(net, &y).b_prime)
}

/// Symmetric `n x n` test matrix with eigenvalues cycling through -1..-4,
/// rotated by a fixed Householder reflection so that it is dense.
pub fn synthetic_system(n: usize) -> DMatrix<f64> {
    let v = DMatrix::from_fn(n, 1, |i, _| 1.0 + i as f64);
    let h = DMatrix::identity(n, n) - &v * v.transpose() * (2.0 / v.norm_squared());
    let d = DMatrix::from_fn(n, n, |i, j| if i == j { -((i % 4) as f64 + 1.0) } else { 0.0 });
    &h * d * h.transpose()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CircuitSizeRow {
    pub case: String,
    pub matrix_size: String,
    pub width: usize,
    pub depth_estimate: u64,
    pub cnot_estimate: u64,
    pub total_gates: u64,
}

/// One row per labelled B' matrix, with an all-ones right-hand side.
pub fn circuit_size_table(
    systems: &[(String, DMatrix<f64>)],
    config: &HhlConfig,
) -> Result<Vec<CircuitSizeRow>, AnalysisError> {
    systems
        .iter()
        .map(|(case, b)| {
            let hc = build_hhl_circuit(b, &vec![1.0; b.nrows()], config)?;
            let m = circuit_metrics(&hc.circuit);
            Ok(CircuitSizeRow {
                case: case.clone(),
                matrix_size: format!("{}x{}", b.nrows(), b.ncols()),
                width: m.width,
                depth_estimate: m.depth,
                cnot_estimate: m.cnot_count,
                total_gates: m.total_gates,
            })
        })
        .collect()
}

pub fn circuit_table_csv(rows: &[CircuitSizeRow]) -> String {
    let mut out = String::from("case,matrix_size,width,depth_estimate,cnot_estimate,total_gates\n");
    for r in rows {
        writeln!(out, "{},{},{},{},{},{}", r.case, r.matrix_size, r.width, r.depth_estimate, r.cnot_estimate, r.total_gates)
            .unwrap();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SolverSpec {
    Classical,
    HhlIdeal,
    HhlSampled,
    /// `p_1q` defaults to a tenth of `p_cnot`.
    HhlNoisy { p_cnot: f64, p_1q: Option<f64> },
}

impl SolverSpec {
    pub fn label(&self) -> String {
        match self {
            Self::Classical => "classical".into(),
            Self::HhlIdeal => "hhl-ideal".into(),
            Self::HhlSampled => "hhl-sampled".into(),
            Self::HhlNoisy { p_cnot, p_1q: None } => format!("hhl-noisy:{p_cnot}"),
            Self::HhlNoisy { p_cnot, p_1q: Some(p1) } => format!("hhl-noisy:{p_cnot}:{p1}"),
        }
    }

    /// Whether repeated runs with different seeds can differ.
    pub fn is_stochastic(&self) -> bool {
        matches!(self, Self::HhlSampled | Self::HhlNoisy { .. })
    }

    pub fn build(&self, base: &HhlConfig, seed: u64) -> Result<Box<dyn LinearSolver + Send>, AnalysisError> {
        let config = HhlConfig { seed, ..base.clone() };
        Ok(match *self {
            Self::Classical => Box::new(ClassicalSolver),
            Self::HhlIdeal => Box::new(HhlSolver::ideal(config)),
            Self::HhlSampled => Box::new(HhlSolver::sampled(config)),
            Self::HhlNoisy { p_cnot, p_1q } => {
                let model = NoiseModel::new(p_cnot, p_1q.unwrap_or(p_cnot / 10.0), seed)
                    .map_err(|e| HhlError::InvalidConfig(e.to_string()))?;
                Box::new(HhlSolver::noisy(config, model))
            }
        })
    }
}

impl FromStr for SolverSpec {
    type Err = AnalysisError;

    /// `classical`, `hhl-ideal`, `hhl-sampled`, `hhl-noisy` (p_cnot = 0.01),
    /// `hhl-noisy:<p_cnot>` or `hhl-noisy:<p_cnot>:<p_1q>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AnalysisError::UnknownSolver(s.to_string());
        let mut parts = s.trim().split(':');
        let spec = match parts.next().unwrap_or("") {
            "classical" => Self::Classical,
            "hhl-ideal" => Self::HhlIdeal,
            "hhl-sampled" => Self::HhlSampled,
            "hhl-noisy" => {
                let p_cnot = parts.next().map(str::parse).transpose().map_err(|_| bad())?.unwrap_or(1e-2);
                let p_1q = parts.next().map(str::parse).transpose().map_err(|_| bad())?;
                Self::HhlNoisy { p_cnot, p_1q }
            }
            _ => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRun {
    pub label: String,
    pub spec: SolverSpec,
    /// Present for stochastic solvers only.
    pub seed: Option<u64>,
    pub converged: bool,
    pub trace: PowerFlowTrace,
    /// Per iteration: largest deviation of any |V| (p.u.) or angle (rad)
    /// from the classical fixed point.
    pub errors: Vec<f64>,
}

impl ComparisonRun {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceComparison {
    pub tol: f64,
    pub max_iter: usize,
    pub reference: PfState,
    pub runs: Vec<ComparisonRun>,
}

impl ConvergenceComparison {
    /// Runs produced by the solver with `label` (as given by [`SolverSpec::label`]).
    pub fn runs_for<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a ComparisonRun> + 'a {
        self.runs.iter().filter(move |r| r.spec.label() == label)
    }

    pub fn median_iterations(&self, label: &str) -> Option<f64> {
        median(&self.runs_for(label).map(|r| r.iterations() as f64).collect::<Vec<_>>())
    }

    /// One column per run; cells past the end of a run stay empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter");
        for r in &self.runs {
            write!(out, ",{}", r.label).unwrap();
        }
        out.push('\n');
        let rows = self.runs.iter().map(|r| r.errors.len()).max().unwrap_or(0);
        for i in 0..rows {
            write!(out, "{}", i + 1).unwrap();
            for r in &self.runs {
                match r.errors.get(i) {
                    Some(e) => write!(out, ",{e:.6e}").unwrap(),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}

fn deviation(state_vm: &[f64], state_theta: &[f64], reference: &PfState) -> f64 {
    let dv = state_vm.iter().zip(&reference.vm).map(|(a, b)| (a - b).abs());
    let dt = state_theta.iter().zip(&reference.theta).map(|(a, b)| (a - b).abs());
    dv.chain(dt).fold(0.0, f64::max)
}

/// Runs every solver on `net` and measures each iterate against the
/// classical fixed point. Deterministic solvers run once, stochastic ones
/// once per seed. Runs execute in parallel; output keeps spec then seed order.
pub fn compare_convergence(
    net: &PowerNetwork,
    specs: &[SolverSpec],
    tol: f64,
    max_iter: usize,
    seeds: &[u64],
    hhl: &HhlConfig,
) -> Result<ConvergenceComparison, AnalysisError> {
    if seeds.is_empty() {
        return Err(AnalysisError::NoSeeds);
    }
    let reference = run_power_flow(net, &mut ClassicalSolver, tol, max_iter)?.state;
    let jobs: Vec<(SolverSpec, Option<u64>)> = specs
        .iter()
        .flat_map(|&spec| {
            if spec.is_stochastic() {
                seeds.iter().map(|&s| (spec, Some(s))).collect::<Vec<_>>()
            } else {
                vec![(spec, None)]
            }
        })
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(spec, seed)| {
            let mut solver = spec.build(hhl, seed.unwrap_or(seeds[0]))?;
            let result = run_power_flow_lenient(net, solver.as_mut(), tol, max_iter)?;
            let errors = result.trace.iterations.iter().map(|rec| deviation(&rec.vm, &rec.theta, &reference)).collect();
            Ok(ComparisonRun {
                label: match seed {
                    Some(s) => format!("{}#seed{s}", spec.label()),
                    None => spec.label(),
                },
                spec,
                seed,
                converged: result.trace.converged,
                trace: result.trace,
                errors,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    Ok(ConvergenceComparison { tol, max_iter, reference, runs })
}
