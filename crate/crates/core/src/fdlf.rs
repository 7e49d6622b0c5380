//! Fast decoupled load flow with a pluggable linear solver.
//!
//! Each iteration solves `B' dtheta = dP` and `B'' dV = dQ` from the
//! mismatches at the start of the iteration, subtracts the corrections and
//! recomputes the mismatches once. A half-step whose mismatch norm is already
//! below tolerance is skipped; the loop stops when both norms are below it.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::hhl::HhlError;
use crate::linalg::{gauss_solve, norm2, LinalgError};
use crate::netmodel::{build_b_matrices, build_ybus, AdmittanceMatrix, BusKind, DecoupledMatrices, NetworkError, PowerNetwork};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Hhl(#[from] HhlError),
}

#[derive(Debug, Error)]
pub enum PowerFlowError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("linear solve failed in iteration {iteration}: {source}")]
    Solver {
        iteration: usize,
        #[source]
        source: SolverError,
    },
    #[error("bus {bus} has zero voltage magnitude")]
    ZeroVoltage { bus: i64 },
    #[error("state has {got} buses, network has {expected}")]
    StateSize { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no convergence within {max_iter} iterations")]
    NotConverged { max_iter: usize, state: PfState, trace: Box<PowerFlowTrace> },
}

/// A linear solver usable for both half-steps of an iteration.
pub trait LinearSolver {
    fn label(&self) -> String;
    fn solve(&mut self, matrix: &DMatrix<f64>, rhs: &[f64]) -> Result<Vec<f64>, SolverError>;
}

/// Direct solve by Gaussian elimination with partial pivoting.
pub fn classical_solve(matrix: &DMatrix<f64>, rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
    Ok(gauss_solve(matrix, rhs)?)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ClassicalSolver;

impl LinearSolver for ClassicalSolver {
    fn label(&self) -> String {
        "classical".to_string()
    }

    fn solve(&mut self, matrix: &DMatrix<f64>, rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
        classical_solve(matrix, rhs)
    }
}

/// Bus voltages; angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PfState {
    pub vm: Vec<f64>,
    pub theta: Vec<f64>,
}

impl PfState {
    /// Slack at its case values, every PQ bus at 1.0 p.u. and zero angle.
    pub fn flat_start(net: &PowerNetwork) -> Self {
        let (vm, theta) = net
            .buses()
            .iter()
            .map(|b| match b.kind {
                BusKind::Slack => (b.vm_init, b.theta_init_deg.to_radians()),
                BusKind::Pq => (1.0, 0.0),
            })
            .unzip();
        Self { vm, theta }
    }

    pub fn theta_deg(&self) -> Vec<f64> {
        self.theta.iter().map(|t| t.to_degrees()).collect()
    }

    fn phasors(&self) -> DVector<Complex64> {
        DVector::from_iterator(
            self.vm.len(),
            self.vm.iter().zip(&self.theta).map(|(&m, &t)| Complex64::from_polar(m, t)),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MismatchVector {
    /// Active-power mismatch over the angle buses (p.u.).
    pub dp: Vec<f64>,
    /// Reactive-power mismatch over the PQ buses (p.u.).
    pub dq: Vec<f64>,
}

impl MismatchVector {
    pub fn dp_norm(&self) -> f64 {
        norm2(&self.dp)
    }

    pub fn dq_norm(&self) -> f64 {
        norm2(&self.dq)
    }
}

/// dS = (S_bus - V o conj(Y V)) / |V|, split into dP and dQ.
pub fn compute_mismatch(
    net: &PowerNetwork,
    y: &AdmittanceMatrix,
    state: &PfState,
) -> Result<MismatchVector, PowerFlowError> {
    let n = net.bus_count();
    if state.vm.len() != n || state.theta.len() != n || y.dim() != n {
        return Err(PowerFlowError::StateSize { expected: n, got: state.vm.len() });
    }
    if let Some(i) = state.vm.iter().position(|&m| m == 0.0) {
        return Err(PowerFlowError::ZeroVoltage { bus: net.buses()[i].id });
    }
    let v = state.phasors();
    let current = &y.y * &v;
    let scheduled = net.scheduled_power_pu();
    let ds: Vec<Complex64> = (0..n).map(|i| (scheduled[i] - v[i] * current[i].conj()) / state.vm[i]).collect();
    Ok(MismatchVector {
        dp: net.angle_buses().iter().map(|&i| ds[i].re).collect(),
        dq: net.magnitude_buses().iter().map(|&i| ds[i].im).collect(),
    })
}

/// theta <- theta - dtheta on angle buses, vm <- vm - dvm on PQ buses.
pub fn apply_update(state: &PfState, mats: &DecoupledMatrices, dtheta: &[f64], dvm: &[f64]) -> PfState {
    let mut next = state.clone();
    for (&bus, d) in mats.p_buses.iter().zip(dtheta) {
        next.theta[bus] -= d;
    }
    for (&bus, d) in mats.q_buses.iter().zip(dvm) {
        next.vm[bus] -= d;
    }
    next
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub vm: Vec<f64>,
    pub theta: Vec<f64>,
    pub dp_norm: f64,
    pub dq_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerFlowTrace {
    pub solver: String,
    pub tol: f64,
    /// Bus labels, in network order.
    pub bus_ids: Vec<i64>,
    pub slack: usize,
    pub initial_dp_norm: f64,
    pub initial_dq_norm: f64,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
}

impl PowerFlowTrace {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    /// CSV with one row per iteration: voltages and angles (degrees) of every
    /// non-slack bus, then both mismatch norms.
    pub fn to_csv(&self) -> String {
        let buses: Vec<usize> = (0..self.bus_ids.len()).filter(|&i| i != self.slack).collect();
        let mut out = String::from("iter");
        for &b in &buses {
            let id = self.bus_ids[b];
            write!(out, ",V{id},theta{id}_deg").unwrap();
        }
        out.push_str(",dP_norm,dQ_norm\n");
        for rec in &self.iterations {
            write!(out, "{}", rec.iteration).unwrap();
            for &b in &buses {
                write!(out, ",{},{}", sig12(rec.vm[b]), sig12(rec.theta[b].to_degrees())).unwrap();
            }
            writeln!(out, ",{},{}", sig12(rec.dp_norm), sig12(rec.dq_norm)).unwrap();
        }
        out
    }
}

/// 12 significant digits.
pub fn sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..12).contains(&mag) {
        format!("{x:.11e}")
    } else {
        format!("{x:.prec$}", prec = (11 - mag).max(0) as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowResult {
    pub state: PfState,
    pub trace: PowerFlowTrace,
}

impl PowerFlowResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Runs the decoupled iteration from a flat start.
pub fn run_power_flow(
    net: &PowerNetwork,
    solver: &mut dyn LinearSolver,
    tol: f64,
    max_iter: usize,
) -> Result<PowerFlowResult, PowerFlowError> {
    if !(tol > 0.0) {
        return Err(PowerFlowError::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(PowerFlowError::InvalidParameter("max_iter must be at least 1".into()));
    }
    let y = build_ybus(net)?;
    let mats = build_b_matrices(net, &y);
    let mut state = PfState::flat_start(net);
    let mut mis = compute_mismatch(net, &y, &state)?;
    let mut trace = PowerFlowTrace {
        solver: solver.label(),
        tol,
        bus_ids: net.buses().iter().map(|b| b.id).collect(),
        slack: net.slack_index(),
        initial_dp_norm: mis.dp_norm(),
        initial_dq_norm: mis.dq_norm(),
        iterations: Vec::new(),
        converged: false,
    };
    let converged = |m: &MismatchVector| m.dp_norm() < tol && m.dq_norm() < tol;

    for iteration in 1..=max_iter {
        if converged(&mis) {
            break;
        }
        let wrap = |source| PowerFlowError::Solver { iteration, source };
        let dtheta = if mis.dp_norm() >= tol {
            solver.solve(&mats.b_prime, &mis.dp).map_err(wrap)?
        } else {
            vec![0.0; mis.dp.len()]
        };
        let dvm = if mis.dq_norm() >= tol {
            solver.solve(&mats.b_dprime, &mis.dq).map_err(wrap)?
        } else {
            vec![0.0; mis.dq.len()]
        };
        state = apply_update(&state, &mats, &dtheta, &dvm);
        mis = compute_mismatch(net, &y, &state)?;
        trace.iterations.push(IterationRecord {
            iteration,
            vm: state.vm.clone(),
            theta: state.theta.clone(),
            dp_norm: mis.dp_norm(),
            dq_norm: mis.dq_norm(),
        });
    }

    if converged(&mis) {
        trace.converged = true;
        Ok(PowerFlowResult { state, trace })
    } else {
        Err(PowerFlowError::NotConverged { max_iter, state, trace: Box::new(trace) })
    }
}

/// Same as [`run_power_flow`] but returns non-converged runs as values.
pub fn run_power_flow_lenient(
    net: &PowerNetwork,
    solver: &mut dyn LinearSolver,
    tol: f64,
    max_iter: usize,
) -> Result<PowerFlowResult, PowerFlowError> {
    match run_power_flow(net, solver, tol, max_iter) {
        Err(PowerFlowError::NotConverged { state, trace, .. }) => Ok(PowerFlowResult { state, trace: *trace }),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{parse_case, CASE3_JSON};

    fn case3() -> (PowerNetwork, AdmittanceMatrix, DecoupledMatrices) {
        let net = parse_case(CASE3_JSON).unwrap();
        let y = build_ybus(&net).unwrap();
        let d = build_b_matrices(&net, &y);
        (net, y, d)
    }

    /// Independent evaluation of the mismatch with explicit complex loops.
    fn mismatch_oracle(net: &PowerNetwork, y: &AdmittanceMatrix, vm: &[f64], th: &[f64]) -> Vec<Complex64> {
        let n = vm.len();
        (0..n)
            .map(|i| {
                let vi = Complex64::from_polar(vm[i], th[i]);
                let mut inj = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    inj += y.y[(i, k)] * Complex64::from_polar(vm[k], th[k]);
                }
                let s = Complex64::new(net.buses()[i].p_mw, net.buses()[i].q_mvar) / net.base_mva();
                (s - vi * inj.conj()) / vm[i]
            })
            .collect()
    }

    #[test]
    fn flat_start_mismatch() {
        let (net, y, _) = case3();
        let state = PfState::flat_start(&net);
        assert_eq!(state.vm, vec![1.03, 1.0, 1.0]);
        let mis = compute_mismatch(&net, &y, &state).unwrap();
        let oracle = mismatch_oracle(&net, &y, &state.vm, &state.theta);
        for (k, bus) in [1usize, 2].into_iter().enumerate() {
            assert!((mis.dp[k] - oracle[bus].re).abs() < 1e-14);
            assert!((mis.dq[k] - oracle[bus].im).abs() < 1e-14);
        }
        assert!((mis.dp[0] - 0.10).abs() < 1e-12 && (mis.dp[1] + 0.15).abs() < 1e-12);
        assert!((mis.dq[0] - 0.03).abs() < 1e-12 && (mis.dq[1] + 0.02).abs() < 1e-12);
        assert!((mis.dp_norm() - 0.1803).abs() < 1e-4);
    }

    #[test]
    fn balanced_network_has_no_mismatch() {
        let text = CASE3_JSON.replace("1.03", "1.0").replace("10.0", "0.0").replace("-15.0", "0.0").replace("-5.0", "0.0");
        let net = parse_case(&text).unwrap();
        let y = build_ybus(&net).unwrap();
        let mis = compute_mismatch(&net, &y, &PfState::flat_start(&net)).unwrap();
        assert!(mis.dp.iter().chain(&mis.dq).all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn zero_voltage_is_an_error() {
        let (net, y, _) = case3();
        let mut state = PfState::flat_start(&net);
        state.vm[2] = 0.0;
        assert!(matches!(compute_mismatch(&net, &y, &state), Err(PowerFlowError::ZeroVoltage { bus: 3 })));
    }

    #[test]
    fn classical_solve_examples() {
        let (_, _, d) = case3();
        let x = classical_solve(&d.b_prime, &[0.10, -0.15]).unwrap();
        assert!((x[0] + 0.0375).abs() < 1e-15 && (x[1] - 0.0875).abs() < 1e-15);
        let eye = DMatrix::identity(3, 3);
        assert_eq!(classical_solve(&eye, &[1.0, -2.0, 3.5]).unwrap(), vec![1.0, -2.0, 3.5]);
        let err = classical_solve(&DMatrix::zeros(2, 2), &[1.0, 1.0]).unwrap_err();
        assert!(err.to_string().contains("singular"));
    }

    #[test]
    fn first_update_matches_table_row() {
        let (net, _, d) = case3();
        let s0 = PfState::flat_start(&net);
        let s1 = apply_update(&s0, &d, &[-0.0375, 0.0875], &[-0.0175, 0.0075]);
        let deg = s1.theta_deg();
        assert!((deg[1] - 2.14859173).abs() < 1e-8);
        assert!((deg[2] + 5.01338071).abs() < 1e-8);
        assert!((s1.vm[1] - 1.0175).abs() < 1e-15 && (s1.vm[2] - 0.9925).abs() < 1e-15);
        assert_eq!(s1.vm[0], 1.03);
        assert_eq!(apply_update(&s0, &d, &[0.0, 0.0], &[0.0, 0.0]), s0);
    }

    #[test]
    fn classical_run_converges_in_five() {
        let (net, y, _) = case3();
        let res = run_power_flow(&net, &mut ClassicalSolver, 1e-5, 200).unwrap();
        assert_eq!(res.iterations(), 5);
        assert!(res.trace.converged);
        let last = res.trace.iterations.last().unwrap();
        assert!(last.dp_norm < 1e-5 && last.dq_norm < 1e-5);
        let mis = compute_mismatch(&net, &y, &res.state).unwrap();
        assert!(mis.dp_norm() < 1e-5 && mis.dq_norm() < 1e-5);
    }

    #[test]
    fn forced_cutoff_signals_non_convergence() {
        let (net, _, _) = case3();
        match run_power_flow(&net, &mut ClassicalSolver, 1e-5, 1) {
            Err(PowerFlowError::NotConverged { trace, max_iter: 1, .. }) => {
                assert_eq!(trace.len(), 1);
                assert!(!trace.converged);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
        let lenient = run_power_flow_lenient(&net, &mut ClassicalSolver, 1e-5, 1).unwrap();
        assert!(!lenient.trace.converged);
    }

    #[test]
    fn rejects_bad_parameters() {
        let (net, _, _) = case3();
        assert!(matches!(run_power_flow(&net, &mut ClassicalSolver, 0.0, 10), Err(PowerFlowError::InvalidParameter(_))));
        assert!(matches!(run_power_flow(&net, &mut ClassicalSolver, 1e-5, 0), Err(PowerFlowError::InvalidParameter(_))));
    }

    #[test]
    fn trace_csv_layout() {
        let (net, _, _) = case3();
        let res = run_power_flow(&net, &mut ClassicalSolver, 1e-5, 200).unwrap();
        let csv = res.trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "iter,V2,theta2_deg,V3,theta3_deg,dP_norm,dQ_norm");
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first[0], "1");
        assert_eq!(first[1], "1.01750000000");
        assert!(first[2].starts_with("2.1485917"));
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn sig12_formatting() {
        assert_eq!(sig12(1.0175), "1.01750000000");
        assert_eq!(sig12(-5.013380707), "-5.01338070700");
        assert_eq!(sig12(0.0), "0");
        assert_eq!(sig12(3.2e-7), "3.20000000000e-7");
    }
}
