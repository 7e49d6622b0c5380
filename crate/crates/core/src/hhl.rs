//! HHL linear-system solver on the statevector simulator.
//!
//! Register layout, least significant qubit first: the data register `nb`
//! holding the normalized right-hand side, the eigenvalue register `nl`
//! (two's-complement signed), and the single auxiliary qubit `na`.
//!
//! With evolution time `t` the unitary `e^{iBt}` has eigenphase
//! `lambda * t / 2pi` turns, so an eigenvalue is read from `nl` as the signed
//! integer `lambda * t * 2^nl / 2pi`. The default `t = 2pi / 2^nl` maps integer
//! eigenvalues straight onto their two's-complement codes (-1 -> 111,
//! -2 -> 110 for three qubits).
//!
//! The inversion rotation puts amplitude `C / lambda` on `na = 1`, keeping
//! the sign of the eigenvalue. After uncomputing the phase estimation, the
//! post-selected data register therefore holds `C * B^-1 b / |b|` with signs.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::fdlf::{LinearSolver, SolverError};
use crate::linalg::{self, LinalgError};
use crate::noise::{run_noisy, NoiseModel};
use crate::qsim::{
    build_inverse_qft, circuit_metrics, derive_seed, inverse_gates, sample, CircuitMetrics, Gate, QuantumCircuit,
    Register, ShotHistogram, SimError, StateVector,
};

/// Eigenvalues closer than this to a register code count as exact.
pub const REPRESENTABLE_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HhlError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("right-hand side is all zeros")]
    ZeroRhs,
    #[error("right-hand side has {got} entries, register holds at most {capacity}")]
    RhsTooLong { got: usize, capacity: usize },
    #[error("matrix is {matrix}x{matrix} but right-hand side has {rhs} entries")]
    Dimension { matrix: usize, rhs: usize },
    #[error("matrix has a zero eigenvalue")]
    SingularMatrix,
    #[error("rotation constant {c} exceeds smallest representable eigenvalue magnitude {lambda} (arcsin domain)")]
    RotationDomain { c: f64, lambda: f64 },
    #[error("post-selection failed: no amplitude on na=1, nl=0")]
    PostSelectionFailed,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    /// Read signed post-selected amplitudes from the final statevector.
    Exact,
    /// Estimate magnitudes from measurement counts.
    Sampled,
}

/// Where sampled readout gets component signs from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignPolicy {
    /// Signs of the noiseless statevector of the same circuit.
    Reference,
    /// Magnitudes only.
    Positive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HhlConfig {
    /// Minimum eigenvalue register size, sign qubit included.
    pub n_l: usize,
    pub shots: u64,
    pub readout: Readout,
    pub rotation_c: f64,
    /// Defaults to 2pi / 2^n_l for the register size actually built.
    pub evolution_time: Option<f64>,
    pub signs: SignPolicy,
    pub seed: u64,
}

impl Default for HhlConfig {
    fn default() -> Self {
        Self {
            n_l: 3,
            shots: 1024,
            readout: Readout::Exact,
            rotation_c: 1.0,
            evolution_time: None,
            signs: SignPolicy::Reference,
            seed: 0,
        }
    }
}

impl HhlConfig {
    pub fn sampled(shots: u64, seed: u64) -> Self {
        Self { readout: Readout::Sampled, shots, seed, ..Self::default() }
    }

    /// Eigenvalue register size for a data register of `nb` qubits.
    ///
    /// `n_l` is a lower bound: the register grows to `nb + 2` qubits (one
    /// estimation bit beyond the data size plus the sign bit) so that wider
    /// systems keep their phase resolution.
    pub fn eigen_bits(&self, nb: usize) -> usize {
        self.n_l.max(nb + 2)
    }

    /// Configured evolution time, or 2pi / 2^n_l for an `n_l`-qubit register.
    pub fn evolution_time(&self, n_l: usize) -> f64 {
        self.evolution_time.unwrap_or(2.0 * PI / (1u64 << n_l) as f64)
    }

    pub fn validate(&self) -> Result<(), HhlError> {
        if self.n_l < 2 || self.n_l > 16 {
            return Err(HhlError::InvalidConfig(format!("n_l must be in 2..=16, got {}", self.n_l)));
        }
        if self.readout == Readout::Sampled && self.shots == 0 {
            return Err(HhlError::InvalidConfig("sampled readout needs at least one shot".into()));
        }
        if !(self.rotation_c > 0.0) {
            return Err(HhlError::InvalidConfig(format!("rotation constant must be positive, got {}", self.rotation_c)));
        }
        if let Some(t) = self.evolution_time {
            if !(t > 0.0) || !t.is_finite() {
                return Err(HhlError::InvalidConfig(format!("evolution time must be positive, got {t}")));
            }
        }
        Ok(())
    }
}

/// Eigenvalue encoded by two's-complement `code` of an `n_l`-qubit register.
pub fn code_eigenvalue(code: usize, n_l: usize, t: f64) -> f64 {
    let size = 1i64 << n_l;
    let signed = if code as i64 >= size / 2 { code as i64 - size } else { code as i64 };
    signed as f64 * 2.0 * PI / (t * size as f64)
}

/// `[[0, A], [A^T, 0]]`, or `A` itself when it is already symmetric.
pub fn hermitian_embed(a: &DMatrix<f64>) -> DMatrix<f64> {
    if linalg::is_symmetric(a) {
        return a.clone();
    }
    let (m, n) = a.shape();
    let mut out = DMatrix::zeros(m + n, m + n);
    out.view_mut((0, m), (m, n)).copy_from(a);
    out.view_mut((m, 0), (n, m)).copy_from(&a.transpose());
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenCheck {
    pub eigenvalue: f64,
    /// Eigenvalue in register units.
    pub scaled: f64,
    /// Nearest code in the signed register range.
    pub code: i64,
    pub exact: bool,
    /// Distance from `scaled` to `code`.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepresentabilityReport {
    pub n_l: usize,
    pub evolution_time: f64,
    pub eigenvalues: Vec<EigenCheck>,
    pub all_exact: bool,
    pub max_error: f64,
}

pub fn check_representability(b: &DMatrix<f64>, n_l: usize, t: f64) -> Result<RepresentabilityReport, HhlError> {
    let (values, _) = linalg::symmetric_eigen(b)?;
    let size = (1i64 << n_l) as f64;
    let (lo, hi) = (-(1i64 << (n_l - 1)), (1i64 << (n_l - 1)) - 1);
    let eigenvalues: Vec<EigenCheck> = values
        .iter()
        .map(|&lambda| {
            let scaled = lambda * t * size / (2.0 * PI);
            let code = (scaled.round() as i64).clamp(lo, hi);
            let error = (scaled - code as f64).abs();
            EigenCheck { eigenvalue: lambda, scaled, code, exact: error < REPRESENTABLE_EPS, error }
        })
        .collect();
    let max_error = eigenvalues.iter().map(|e| e.error).fold(0.0, f64::max);
    Ok(RepresentabilityReport {
        n_l,
        evolution_time: t,
        all_exact: eigenvalues.iter().all(|e| e.exact),
        eigenvalues,
        max_error,
    })
}

/// `e^{i b t power}` via the eigendecomposition of `b`.
pub fn exact_unitary(b: &DMatrix<f64>, t: f64, power: u64) -> Result<DMatrix<Complex64>, HhlError> {
    let (values, vectors) = linalg::symmetric_eigen(b)?;
    let n = values.len();
    let v = vectors.map(|x| Complex64::new(x, 0.0));
    let phases = DVector::from_iterator(n, values.iter().map(|&l| Complex64::from_polar(1.0, l * t * power as f64)));
    Ok(&v * DMatrix::from_diagonal(&phases) * v.transpose())
}

/// Gates mapping |0..0> on `qubits` to sum_i (b_i / |b|) |i>, using a tree of
/// uniformly controlled RY rotations. Signs are carried by the last level.
pub fn prepare_state_b(b_vec: &[f64], qubits: &[usize]) -> Result<Vec<Gate>, HhlError> {
    let capacity = 1usize << qubits.len();
    if b_vec.len() > capacity {
        return Err(HhlError::RhsTooLong { got: b_vec.len(), capacity });
    }
    let norm = linalg::norm2(b_vec);
    if norm == 0.0 {
        return Err(HhlError::ZeroRhs);
    }
    let mut amps = vec![0.0; capacity];
    for (a, b) in amps.iter_mut().zip(b_vec) {
        *a = b / norm;
    }
    let block_norm = |start: usize, len: usize| amps[start..start + len].iter().map(|a| a * a).sum::<f64>().sqrt();

    let m = qubits.len();
    let mut gates = Vec::with_capacity(m);
    for level in (0..m).rev() {
        let half = 1usize << level;
        let angles: Vec<f64> = (0..capacity >> (level + 1))
            .map(|ctrl| {
                let start = ctrl << (level + 1);
                if level == 0 {
                    2.0 * amps[start + 1].atan2(amps[start])
                } else {
                    2.0 * block_norm(start + half, half).atan2(block_norm(start, half))
                }
            })
            .collect();
        gates.push(Gate::MultiplexedRy { target: qubits[level], controls: qubits[level + 1..].to_vec(), angles });
    }
    Ok(gates)
}

/// Pads an N x N system to the next power of two (at least 2) with -1 on the
/// added diagonal and zeros in the added right-hand side entries.
pub fn pad_system(b: &DMatrix<f64>, rhs: &[f64]) -> (DMatrix<f64>, Vec<f64>) {
    let n = b.nrows();
    let padded = n.next_power_of_two().max(2);
    let mut out = DMatrix::zeros(padded, padded);
    out.view_mut((0, 0), (n, n)).copy_from(b);
    for i in n..padded {
        out[(i, i)] = -1.0;
    }
    let mut r = rhs.to_vec();
    r.resize(padded, 0.0);
    (out, r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HhlCircuit {
    pub circuit: QuantumCircuit,
    pub nb: Register,
    pub nl: Register,
    pub na: Register,
    pub b_norm: f64,
    pub n_original: usize,
    pub n_padded: usize,
}

impl HhlCircuit {
    /// Basis index of data value `i` with `nl = 0` and `na = 1`.
    pub fn postselected_index(&self, i: usize) -> usize {
        (i << self.nb.start) | (1 << self.na.start)
    }
}

pub fn build_hhl_circuit(b: &DMatrix<f64>, b_vec: &[f64], config: &HhlConfig) -> Result<HhlCircuit, HhlError> {
    config.validate()?;
    linalg::ensure_symmetric(b)?;
    if b.nrows() != b_vec.len() {
        return Err(HhlError::Dimension { matrix: b.nrows(), rhs: b_vec.len() });
    }
    let b_norm = linalg::norm2(b_vec);
    if b_norm == 0.0 {
        return Err(HhlError::ZeroRhs);
    }
    let (matrix, rhs) = pad_system(b, b_vec);
    let n_padded = matrix.nrows();

    let nb_size = n_padded.trailing_zeros() as usize;
    let n_l = config.eigen_bits(nb_size);
    let t = config.evolution_time(n_l);

    let (values, _) = linalg::symmetric_eigen(&matrix)?;
    let min_abs = values.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
    if min_abs < linalg::PIVOT_EPS {
        return Err(HhlError::SingularMatrix);
    }
    // The rotation divides by register eigenvalues, so the bound applies to
    // the smallest nonzero code each true eigenvalue rounds to.
    let half = 1i64 << (n_l - 1);
    let unit = 2.0 * PI / (t * (1u64 << n_l) as f64);
    let min_code = values
        .iter()
        .map(|&l| {
            let code = ((l / unit).round() as i64).clamp(-half, half - 1);
            code.abs().max(1) as f64 * unit
        })
        .fold(f64::INFINITY, f64::min);
    if config.rotation_c > min_code * (1.0 + 1e-12) {
        return Err(HhlError::RotationDomain { c: config.rotation_c, lambda: min_code });
    }

    let mut circuit = QuantumCircuit::with_registers(&[("nb", nb_size), ("nl", n_l), ("na", 1)]);
    let nb = circuit.register("nb").expect("declared").clone();
    let nl = circuit.register("nl").expect("declared").clone();
    let na = circuit.register("na").expect("declared").clone();
    let (nb_q, nl_q) = (nb.qubits(), nl.qubits());

    let mut qpe: Vec<Gate> = nl_q.iter().map(|&q| Gate::H { target: q }).collect();
    for (k, &control) in nl_q.iter().enumerate() {
        qpe.push(Gate::ControlledUnitary {
            controls: vec![control],
            targets: nb_q.clone(),
            matrix: exact_unitary(&matrix, t, 1 << k)?,
            power: 1,
        });
    }
    qpe.extend(build_inverse_qft(&nl_q));

    let c = config.rotation_c;
    let angles = (0..1usize << n_l)
        .map(|code| {
            if code == 0 {
                0.0
            } else {
                2.0 * (c / code_eigenvalue(code, n_l, t)).clamp(-1.0, 1.0).asin()
            }
        })
        .collect();

    circuit.extend(prepare_state_b(&rhs, &nb_q)?)?;
    circuit.extend(qpe.iter().cloned())?;
    circuit.push(Gate::MultiplexedRy { target: na.start, controls: nl_q, angles })?;
    circuit.extend(inverse_gates(&qpe))?;

    Ok(HhlCircuit { circuit, nb, nl, na, b_norm, n_original: b.nrows(), n_padded })
}

#[derive(Debug, Clone, Copy)]
pub enum Outcome<'a> {
    State(&'a StateVector),
    Histogram(&'a ShotHistogram),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HhlSolution {
    pub x: Vec<f64>,
    pub success_probability: f64,
    pub metrics: CircuitMetrics,
    pub readout: Readout,
    pub shots: Option<u64>,
    pub seed: Option<u64>,
}

impl HhlSolution {
    pub fn to_json(&self) -> Value {
        json!({
            "x": self.x,
            "success_probability": self.success_probability,
            "width": self.metrics.width,
            "depth_estimate": self.metrics.depth,
            "cnot_estimate": self.metrics.cnot_count,
            "readout": self.readout,
            "shots": self.shots,
            "seed": self.seed,
        })
    }
}

/// Reads the solution out of a final state or a histogram.
///
/// `reference` supplies component signs for histogram readout under
/// [`SignPolicy::Reference`].
pub fn extract_solution(
    outcome: Outcome<'_>,
    hc: &HhlCircuit,
    config: &HhlConfig,
    reference: Option<&StateVector>,
) -> Result<HhlSolution, HhlError> {
    let c = config.rotation_c;
    let metrics = circuit_metrics(&hc.circuit);
    match outcome {
        Outcome::State(state) => {
            let amps: Vec<Complex64> = (0..hc.n_padded).map(|i| state.amplitude(hc.postselected_index(i))).collect();
            let success: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
            if success <= f64::MIN_POSITIVE {
                return Err(HhlError::PostSelectionFailed);
            }
            Ok(HhlSolution {
                x: amps[..hc.n_original].iter().map(|a| hc.b_norm * a.re / c).collect(),
                success_probability: success,
                metrics,
                readout: Readout::Exact,
                shots: None,
                seed: None,
            })
        }
        Outcome::Histogram(hist) => {
            let counts: Vec<u64> = (0..hc.n_padded).map(|i| hist.count(hc.postselected_index(i))).collect();
            let kept: u64 = counts.iter().sum();
            if kept == 0 {
                return Err(HhlError::PostSelectionFailed);
            }
            let sign = |i: usize| match (config.signs, reference) {
                (SignPolicy::Reference, Some(r)) if r.amplitude(hc.postselected_index(i)).re < 0.0 => -1.0,
                _ => 1.0,
            };
            let shots = hist.shots as f64;
            Ok(HhlSolution {
                x: (0..hc.n_original)
                    .map(|i| sign(i) * hc.b_norm * (counts[i] as f64 / shots).sqrt() / c)
                    .collect(),
                success_probability: kept as f64 / shots,
                metrics,
                readout: Readout::Sampled,
                shots: Some(hist.shots),
                seed: Some(hist.seed),
            })
        }
    }
}

/// Builds, runs and reads out the HHL circuit for `b x = rhs`.
///
/// Non-symmetric matrices are solved through their Hermitian embedding.
pub fn hhl_solve(
    b: &DMatrix<f64>,
    rhs: &[f64],
    config: &HhlConfig,
    noise: Option<&NoiseModel>,
) -> Result<HhlSolution, HhlError> {
    if b.nrows() != rhs.len() {
        return Err(HhlError::Dimension { matrix: b.nrows(), rhs: rhs.len() });
    }
    if !linalg::is_symmetric(b) {
        let embedded = hermitian_embed(b);
        let mut padded_rhs = rhs.to_vec();
        padded_rhs.resize(embedded.nrows(), 0.0);
        let mut sol = hhl_solve(&embedded, &padded_rhs, config, noise)?;
        sol.x = sol.x.split_off(b.nrows());
        return Ok(sol);
    }
    let hc = build_hhl_circuit(b, rhs, config)?;
    let state = hc.circuit.run_from_zero();
    match config.readout {
        Readout::Exact => extract_solution(Outcome::State(&state), &hc, config, None),
        Readout::Sampled => {
            let hist = match noise {
                None => sample(&state, config.shots, config.seed)?,
                Some(model) => run_noisy(&hc.circuit, model, config.shots, config.seed)?.histogram,
            };
            extract_solution(Outcome::Histogram(&hist), &hc, config, Some(&state))
        }
    }
}

/// [`LinearSolver`] backed by [`hhl_solve`]. Every call uses a fresh seed
/// derived from the configured base seed and the call index.
#[derive(Debug, Clone)]
pub struct HhlSolver {
    config: HhlConfig,
    noise: Option<NoiseModel>,
    label: String,
    calls: u64,
    last: Option<HhlSolution>,
}

impl HhlSolver {
    /// Noiseless circuit, signed amplitudes read from the statevector.
    pub fn ideal(config: HhlConfig) -> Self {
        Self::with_label(HhlConfig { readout: Readout::Exact, ..config }, None, "hhl-ideal")
    }

    /// Noiseless circuit, magnitudes estimated from shots.
    pub fn sampled(config: HhlConfig) -> Self {
        Self::with_label(HhlConfig { readout: Readout::Sampled, ..config }, None, "hhl-sampled")
    }

    pub fn noisy(config: HhlConfig, model: NoiseModel) -> Self {
        Self::with_label(HhlConfig { readout: Readout::Sampled, ..config }, Some(model), "hhl-noisy")
    }

    pub fn with_label(config: HhlConfig, noise: Option<NoiseModel>, label: &str) -> Self {
        Self { config, noise, label: label.to_string(), calls: 0, last: None }
    }

    pub fn config(&self) -> &HhlConfig {
        &self.config
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn last_solution(&self) -> Option<&HhlSolution> {
        self.last.as_ref()
    }
}

impl LinearSolver for HhlSolver {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn solve(&mut self, matrix: &DMatrix<f64>, rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
        let config = HhlConfig { seed: derive_seed(self.config.seed, self.calls), ..self.config.clone() };
        self.calls += 1;
        let sol = hhl_solve(matrix, rhs, &config, self.noise.as_ref())?;
        let x = sol.x.clone();
        self.last = Some(sol);
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b3() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[-1.5, 0.5, 0.5, -1.5])
    }

    #[test]
    fn embed_non_symmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let h = hermitian_embed(&a);
        assert_eq!(h.shape(), (4, 4));
        assert_eq!(h, h.transpose());
        assert_eq!(h.view((0, 0), (2, 2)).abs().max(), 0.0);
        assert_eq!(h.view((2, 2), (2, 2)).abs().max(), 0.0);
        assert_eq!(hermitian_embed(&b3()), b3());
    }

    #[test]
    fn embed_block_identity() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, 4.0]);
        let x = [0.3, -1.1, 2.0];
        let h = hermitian_embed(&a);
        let mut stacked = vec![0.0, 0.0];
        stacked.extend(x);
        let lhs = linalg::mat_vec(&h, &stacked);
        let ax = linalg::mat_vec(&a, &x);
        assert_eq!(&lhs[..2], &ax[..]);
        assert_eq!(&lhs[2..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn representability_of_case_spectra() {
        let t = 2.0 * PI / 8.0;
        let r = check_representability(&b3(), 3, t).unwrap();
        assert!(r.all_exact);
        let codes: Vec<i64> = r.eigenvalues.iter().map(|e| e.code).collect();
        assert_eq!(codes, vec![-2, -1]);
        let odd = DMatrix::from_row_slice(1, 1, &[-2.5]);
        let r = check_representability(&odd, 3, t).unwrap();
        assert!(!r.all_exact);
        assert!((r.max_error - 0.5).abs() < 1e-12);
        // out of the signed range [-4, 3]
        let big = DMatrix::from_row_slice(1, 1, &[5.0]);
        let r = check_representability(&big, 3, t).unwrap();
        assert_eq!(r.eigenvalues[0].code, 3);
        assert!(!r.all_exact);
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(check_representability(&asym, 3, t).is_err());
    }

    #[test]
    fn unitary_of_diagonal() {
        let d = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let u = exact_unitary(&d, 2.0 * PI / 8.0, 1).unwrap();
        assert!((u[(0, 0)] - Complex64::from_polar(1.0, -PI / 4.0)).norm() < 1e-15);
        assert!((u[(1, 1)] - Complex64::from_polar(1.0, -PI / 2.0)).norm() < 1e-15);
        assert!(u[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn unitary_eigenphases_are_register_codes() {
        let u = exact_unitary(&b3(), 2.0 * PI / 8.0, 1).unwrap();
        assert!(crate::qsim::unitary_deviation(&u) < 1e-12);
        let (_, vecs) = linalg::symmetric_eigen(&b3()).unwrap();
        let mut turns = Vec::new();
        for k in 0..2 {
            let v = vecs.column(k).map(|x| Complex64::new(x, 0.0));
            let phase = (v.adjoint() * &u * &v)[(0, 0)].arg();
            turns.push((phase / (2.0 * PI)).rem_euclid(1.0));
        }
        // eigenvalue -2 -> 6/8 (110), -1 -> 7/8 (111)
        assert!((turns[0] - 6.0 / 8.0).abs() < 1e-12);
        assert!((turns[1] - 7.0 / 8.0).abs() < 1e-12);
    }

    fn prepared(b: &[f64], m: usize) -> StateVector {
        let qubits: Vec<usize> = (0..m).collect();
        let mut c = QuantumCircuit::new(m);
        c.extend(prepare_state_b(b, &qubits).unwrap()).unwrap();
        c.run_from_zero()
    }

    #[test]
    fn state_preparation_examples() {
        let s = prepared(&[1.0, 0.0], 1);
        assert!((s.amplitude(0).re - 1.0).abs() < 1e-15);
        let s = prepared(&[0.10, -0.15], 1);
        let norm = (0.10f64 * 0.10 + 0.15 * 0.15).sqrt();
        assert!((s.amplitude(0).re - 0.10 / norm).abs() < 1e-12);
        assert!((s.amplitude(1).re + 0.15 / norm).abs() < 1e-12);
        assert!((s.amplitude(0).re - 0.5547).abs() < 1e-4 && (s.amplitude(1).re + 0.8321).abs() < 1e-4);
        let s = prepared(&[1.0, 1.0, 1.0, 1.0], 2);
        assert!(s.amplitudes().iter().all(|a| (a.re - 0.5).abs() < 1e-12 && a.im.abs() < 1e-15));
        assert!(matches!(prepare_state_b(&[0.0, 0.0], &[0]), Err(HhlError::ZeroRhs)));
        assert!(matches!(prepare_state_b(&[1.0, 1.0, 1.0], &[0]), Err(HhlError::RhsTooLong { .. })));
    }

    #[test]
    fn state_preparation_with_signs_and_zeros() {
        let b = [0.3, -0.2, 0.0, 0.0, -0.7, 0.1, 0.05, -0.4];
        let s = prepared(&b, 3);
        let norm = linalg::norm2(&b);
        for (i, v) in b.iter().enumerate() {
            assert!((s.amplitude(i).re - v / norm).abs() < 1e-12, "index {i}");
        }
        // padded 3-vector
        let s = prepared(&[1.0, -2.0, 2.0], 2);
        assert!((s.amplitude(1).re + 2.0 / 3.0).abs() < 1e-12 && s.amplitude(3).norm() < 1e-12);
    }

    #[test]
    fn circuit_widths() {
        let cfg = HhlConfig::default();
        let hc = build_hhl_circuit(&b3(), &[0.1, -0.15], &cfg).unwrap();
        assert_eq!(hc.circuit.n_qubits(), 5);
        assert_eq!((hc.nb.len, hc.nl.len, hc.na.start), (1, 3, 4));
        assert_eq!(hc.postselected_index(1), 0b10001);
        let eye8 = -DMatrix::<f64>::identity(8, 8);
        let hc = build_hhl_circuit(&eye8, &[1.0; 8], &cfg).unwrap();
        assert_eq!((hc.nl.len, hc.circuit.n_qubits()), (5, 9));
        let eye3 = -DMatrix::<f64>::identity(3, 3);
        let hc = build_hhl_circuit(&eye3, &[1.0; 3], &cfg).unwrap();
        assert_eq!((hc.n_padded, hc.circuit.n_qubits()), (4, 7));
    }

    #[test]
    fn exact_readout_matches_direct_solve() {
        let sol = hhl_solve(&b3(), &[0.10, -0.15], &HhlConfig::default(), None).unwrap();
        assert!((sol.x[0] + 0.0375).abs() < 1e-10 && (sol.x[1] - 0.0875).abs() < 1e-10, "{:?}", sol.x);
        assert_eq!(sol.metrics.width, 5);
        assert!(sol.success_probability > 0.0);
    }

    #[test]
    fn rotation_domain_violation() {
        let cfg = HhlConfig { rotation_c: 1.5, ..HhlConfig::default() };
        assert!(matches!(build_hhl_circuit(&b3(), &[1.0, 0.0], &cfg), Err(HhlError::RotationDomain { .. })));
    }

    #[test]
    fn histogram_readout_follows_square_root_rule() {
        let hc = build_hhl_circuit(&b3(), &[0.10, -0.15], &HhlConfig::default()).unwrap();
        let mut counts = std::collections::BTreeMap::new();
        counts.insert(0b10000, 45);
        counts.insert(0b10001, 229);
        counts.insert(0b00000, 726);
        let hist = ShotHistogram { n_qubits: 5, shots: 1000, seed: 0, counts };
        let cfg = HhlConfig { signs: SignPolicy::Positive, ..HhlConfig::default() };
        let b_norm = 0.1803;
        let hc = HhlCircuit { b_norm, ..hc };
        let sol = extract_solution(Outcome::Histogram(&hist), &hc, &cfg, None).unwrap();
        assert!((sol.x[0] - 0.03824).abs() < 1e-5 && (sol.x[1] - 0.08628).abs() < 1e-5, "{:?}", sol.x);
        assert!((sol.success_probability - 0.274).abs() < 1e-12);
        let empty = ShotHistogram { n_qubits: 5, shots: 10, seed: 0, counts: [(0usize, 10u64)].into() };
        assert!(matches!(
            extract_solution(Outcome::Histogram(&empty), &hc, &cfg, None),
            Err(HhlError::PostSelectionFailed)
        ));
    }

    #[test]
    fn non_symmetric_goes_through_embedding() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 2.0]);
        let rhs = [1.0, 2.0];
        // singular values of a are irrational: only check it runs and returns two entries
        let cfg = HhlConfig { n_l: 6, rotation_c: 0.5, ..HhlConfig::default() };
        match hhl_solve(&a, &rhs, &cfg, None) {
            Ok(sol) => assert_eq!(sol.x.len(), 2),
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn embedded_system_with_representable_singular_values() {
        // a = diag(2, 1) rotated on one side only: singular values 2 and 1
        let (c, s) = (0.6, 0.8);
        let q = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let a = &q * DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert!(!linalg::is_symmetric(&a));
        let rhs = [0.4, -0.9];
        let sol = hhl_solve(&a, &rhs, &HhlConfig::default(), None).unwrap();
        let direct = linalg::gauss_solve(&a, &rhs).unwrap();
        for (x, d) in sol.x.iter().zip(&direct) {
            assert!((x - d).abs() < 1e-9, "{:?} vs {direct:?}", sol.x);
        }
    }

    #[test]
    fn solver_derives_seeds_per_call() {
        let mut solver = HhlSolver::sampled(HhlConfig::sampled(256, 7));
        let a = solver.solve(&b3(), &[0.1, -0.15]).unwrap();
        let b = solver.solve(&b3(), &[0.1, -0.15]).unwrap();
        assert_eq!(solver.calls(), 2);
        assert_ne!(a, b);
        let mut again = HhlSolver::sampled(HhlConfig::sampled(256, 7));
        assert_eq!(again.solve(&b3(), &[0.1, -0.15]).unwrap(), a);
        assert_eq!(solver.label(), "hhl-sampled");
    }
}
