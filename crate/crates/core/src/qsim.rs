//! Dense statevector simulator.
//!
//! Qubit 0 is the least significant bit of a basis-state index. Bitstrings are
//! rendered most-significant qubit first, so on a 5-qubit register the string
//! `"10001"` has qubits 4 and 0 set.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

pub const NORM_EPS: f64 = 1e-10;
pub const UNITARY_EPS: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("qubit {qubit} out of range for a {n_qubits}-qubit register")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },
    #[error("qubit {0} used more than once by a gate")]
    RepeatedQubit(usize),
    #[error("gate payload is not unitary (deviation {deviation:e})")]
    NonUnitary { deviation: f64 },
    #[error("gate matrix is {got}x{got}, expected {expected}x{expected}")]
    MatrixShape { expected: usize, got: usize },
    #[error("multiplexed rotation needs {expected} angles, got {got}")]
    AngleTable { expected: usize, got: usize },
    #[error("state has {got} qubits, circuit expects {expected}")]
    RegisterMismatch { expected: usize, got: usize },
    #[error("amplitude vector length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("state is not normalized (norm^2 = {0})")]
    NotNormalized(f64),
    #[error("shot count must be at least 1")]
    NoShots,
}

/// A gate acting on named qubit indices.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    H { target: usize },
    X { target: usize },
    Y { target: usize },
    Z { target: usize },
    Ry { target: usize, angle: f64 },
    Rz { target: usize, angle: f64 },
    /// diag(1, e^{i angle})
    Phase { target: usize, angle: f64 },
    Cnot { control: usize, target: usize },
    /// diag(1, 1, 1, e^{i angle}); symmetric in its two qubits.
    ControlledPhase { control: usize, target: usize, angle: f64 },
    Swap { a: usize, b: usize },
    /// Uniformly controlled RY: the rotation angle is `angles[c]` where `c` is
    /// the integer read from `controls` (controls[0] least significant).
    MultiplexedRy { target: usize, controls: Vec<usize>, angles: Vec<f64> },
    /// `matrix^power` on `targets` (targets[0] least significant), applied
    /// when every control is set.
    ControlledUnitary { controls: Vec<usize>, targets: Vec<usize>, matrix: DMatrix<Complex64>, power: u32 },
}

impl Gate {
    pub fn name(&self) -> &'static str {
        match self {
            Gate::H { .. } => "h",
            Gate::X { .. } => "x",
            Gate::Y { .. } => "y",
            Gate::Z { .. } => "z",
            Gate::Ry { .. } => "ry",
            Gate::Rz { .. } => "rz",
            Gate::Phase { .. } => "p",
            Gate::Cnot { .. } => "cx",
            Gate::ControlledPhase { .. } => "cp",
            Gate::Swap { .. } => "swap",
            Gate::MultiplexedRy { .. } => "mux_ry",
            Gate::ControlledUnitary { .. } => "cu",
        }
    }

    /// Every qubit the gate touches, controls first.
    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Gate::H { target }
            | Gate::X { target }
            | Gate::Y { target }
            | Gate::Z { target }
            | Gate::Ry { target, .. }
            | Gate::Rz { target, .. }
            | Gate::Phase { target, .. } => vec![*target],
            Gate::Cnot { control, target } | Gate::ControlledPhase { control, target, .. } => {
                vec![*control, *target]
            }
            Gate::Swap { a, b } => vec![*a, *b],
            Gate::MultiplexedRy { target, controls, .. } => {
                let mut q = controls.clone();
                q.push(*target);
                q
            }
            Gate::ControlledUnitary { controls, targets, .. } => {
                controls.iter().chain(targets.iter()).copied().collect()
            }
        }
    }

    pub fn is_single_qubit(&self) -> bool {
        self.qubits().len() == 1
    }

    /// The adjoint gate.
    pub fn inverse(&self) -> Gate {
        match self {
            Gate::H { .. } | Gate::X { .. } | Gate::Y { .. } | Gate::Z { .. } | Gate::Cnot { .. } | Gate::Swap { .. } => {
                self.clone()
            }
            Gate::Ry { target, angle } => Gate::Ry { target: *target, angle: -angle },
            Gate::Rz { target, angle } => Gate::Rz { target: *target, angle: -angle },
            Gate::Phase { target, angle } => Gate::Phase { target: *target, angle: -angle },
            Gate::ControlledPhase { control, target, angle } => {
                Gate::ControlledPhase { control: *control, target: *target, angle: -angle }
            }
            Gate::MultiplexedRy { target, controls, angles } => Gate::MultiplexedRy {
                target: *target,
                controls: controls.clone(),
                angles: angles.iter().map(|a| -a).collect(),
            },
            Gate::ControlledUnitary { controls, targets, matrix, power } => Gate::ControlledUnitary {
                controls: controls.clone(),
                targets: targets.clone(),
                matrix: matrix.adjoint(),
                power: *power,
            },
        }
    }

    pub fn validate(&self, n_qubits: usize) -> Result<(), SimError> {
        let qubits = self.qubits();
        for (i, &q) in qubits.iter().enumerate() {
            if q >= n_qubits {
                return Err(SimError::QubitOutOfRange { qubit: q, n_qubits });
            }
            if qubits[..i].contains(&q) {
                return Err(SimError::RepeatedQubit(q));
            }
        }
        match self {
            Gate::MultiplexedRy { controls, angles, .. } => {
                let expected = 1usize << controls.len();
                if angles.len() != expected {
                    return Err(SimError::AngleTable { expected, got: angles.len() });
                }
            }
            Gate::ControlledUnitary { targets, matrix, .. } => {
                let expected = 1usize << targets.len();
                if matrix.nrows() != expected || matrix.ncols() != expected {
                    return Err(SimError::MatrixShape { expected, got: matrix.nrows() });
                }
                let deviation = unitary_deviation(matrix);
                if deviation > UNITARY_EPS {
                    return Err(SimError::NonUnitary { deviation });
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn to_json(&self) -> Value {
        let mut v = json!({ "gate": self.name(), "qubits": self.qubits() });
        let obj = v.as_object_mut().expect("object literal");
        match self {
            Gate::Ry { angle, .. } | Gate::Rz { angle, .. } | Gate::Phase { angle, .. } | Gate::ControlledPhase { angle, .. } => {
                obj.insert("angle".into(), json!(angle));
            }
            Gate::MultiplexedRy { controls, angles, .. } => {
                obj.insert("controls".into(), json!(controls));
                obj.insert("angles".into(), json!(angles));
            }
            Gate::ControlledUnitary { controls, targets, matrix, power } => {
                let rows: Vec<Vec<[f64; 2]>> = (0..matrix.nrows())
                    .map(|i| (0..matrix.ncols()).map(|j| [matrix[(i, j)].re, matrix[(i, j)].im]).collect())
                    .collect();
                obj.insert("controls".into(), json!(controls));
                obj.insert("targets".into(), json!(targets));
                obj.insert("matrix".into(), json!(rows));
                obj.insert("power".into(), json!(power));
            }
            _ => {}
        }
        v
    }
}

/// max |U U^† - I|
pub fn unitary_deviation(m: &DMatrix<Complex64>) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let prod = m * m.adjoint();
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { ONE } else { ZERO };
            worst = worst.max((prod[(i, j)] - target).norm());
        }
    }
    worst
}

fn matrix_power(m: &DMatrix<Complex64>, power: u32) -> DMatrix<Complex64> {
    let mut result = DMatrix::identity(m.nrows(), m.ncols());
    let mut base = m.clone();
    let mut p = power;
    while p > 0 {
        if p & 1 == 1 {
            result = &result * &base;
        }
        p >>= 1;
        if p > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Renders a basis index as a bitstring, highest qubit first.
pub fn bitstring(index: usize, n_qubits: usize) -> String {
    (0..n_qubits).rev().map(|q| if index >> q & 1 == 1 { '1' } else { '0' }).collect()
}

pub fn parse_bitstring(bits: &str) -> Option<usize> {
    usize::from_str_radix(bits, 2).ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// |0...0>
    pub fn zero(n_qubits: usize) -> Self {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[index] = ONE;
        Self { n_qubits, amps }
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self, SimError> {
        let len = amps.len();
        if !len.is_power_of_two() {
            return Err(SimError::NotPowerOfTwo(len));
        }
        let state = Self { n_qubits: len.trailing_zeros() as usize, amps };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_EPS {
            return Err(SimError::NotNormalized(norm));
        }
        Ok(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitude(&self, index: usize) -> Complex64 {
        self.amps[index]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Applies `gate` in place.
    pub fn apply(&mut self, gate: &Gate) -> Result<(), SimError> {
        gate.validate(self.n_qubits)?;
        self.apply_unchecked(gate);
        Ok(())
    }

    pub(crate) fn apply_unchecked(&mut self, gate: &Gate) {
        match gate {
            Gate::H { target } => {
                let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
                self.apply_1q(*target, [[h, h], [h, -h]]);
            }
            Gate::X { target } => self.apply_1q(*target, [[ZERO, ONE], [ONE, ZERO]]),
            Gate::Y { target } => {
                let i = Complex64::new(0.0, 1.0);
                self.apply_1q(*target, [[ZERO, -i], [i, ZERO]]);
            }
            Gate::Z { target } => self.apply_1q(*target, [[ONE, ZERO], [ZERO, -ONE]]),
            Gate::Ry { target, angle } => self.apply_1q(*target, ry_matrix(*angle)),
            Gate::Rz { target, angle } => {
                let m = [
                    [Complex64::from_polar(1.0, -angle / 2.0), ZERO],
                    [ZERO, Complex64::from_polar(1.0, angle / 2.0)],
                ];
                self.apply_1q(*target, m);
            }
            Gate::Phase { target, angle } => {
                let phase = Complex64::from_polar(1.0, *angle);
                let mask = 1 << target;
                self.amps.iter_mut().enumerate().filter(|(i, _)| i & mask != 0).for_each(|(_, a)| *a *= phase);
            }
            Gate::Cnot { control, target } => {
                let (cmask, tmask) = (1usize << control, 1usize << target);
                for i in 0..self.amps.len() {
                    if i & cmask != 0 && i & tmask == 0 {
                        self.amps.swap(i, i | tmask);
                    }
                }
            }
            Gate::ControlledPhase { control, target, angle } => {
                let mask = (1usize << control) | (1usize << target);
                let phase = Complex64::from_polar(1.0, *angle);
                self.amps.iter_mut().enumerate().filter(|(i, _)| i & mask == mask).for_each(|(_, a)| *a *= phase);
            }
            Gate::Swap { a, b } => {
                let (amask, bmask) = (1usize << a, 1usize << b);
                for i in 0..self.amps.len() {
                    if i & amask != 0 && i & bmask == 0 {
                        self.amps.swap(i, (i & !amask) | bmask);
                    }
                }
            }
            Gate::MultiplexedRy { target, controls, angles } => {
                let tmask = 1usize << target;
                let mats: Vec<_> = angles.iter().map(|&a| ry_matrix(a)).collect();
                for i in 0..self.amps.len() {
                    if i & tmask != 0 {
                        continue;
                    }
                    let sel = controls.iter().enumerate().fold(0usize, |acc, (bit, &q)| acc | ((i >> q & 1) << bit));
                    let m = &mats[sel];
                    let (a0, a1) = (self.amps[i], self.amps[i | tmask]);
                    self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                    self.amps[i | tmask] = m[1][0] * a0 + m[1][1] * a1;
                }
            }
            Gate::ControlledUnitary { controls, targets, matrix, power } => {
                let u = if *power == 1 { matrix.clone() } else { matrix_power(matrix, *power) };
                self.apply_block(controls, targets, &u);
            }
        }
    }

    fn apply_1q(&mut self, target: usize, m: [[Complex64; 2]; 2]) {
        let tmask = 1usize << target;
        for i in 0..self.amps.len() {
            if i & tmask == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | tmask]);
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i | tmask] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    fn apply_block(&mut self, controls: &[usize], targets: &[usize], u: &DMatrix<Complex64>) {
        let cmask = controls.iter().fold(0usize, |m, &q| m | 1 << q);
        let tmask = targets.iter().fold(0usize, |m, &q| m | 1 << q);
        let dim = 1usize << targets.len();
        let offsets: Vec<usize> = (0..dim)
            .map(|k| targets.iter().enumerate().fold(0usize, |acc, (bit, &q)| acc | ((k >> bit & 1) << q)))
            .collect();
        let mut gathered = vec![ZERO; dim];
        for base in 0..self.amps.len() {
            if base & tmask != 0 || base & cmask != cmask {
                continue;
            }
            for (k, off) in offsets.iter().enumerate() {
                gathered[k] = self.amps[base | off];
            }
            for (r, off) in offsets.iter().enumerate() {
                self.amps[base | off] = (0..dim).map(|c| u[(r, c)] * gathered[c]).sum();
            }
        }
    }
}

fn ry_matrix(angle: f64) -> [[Complex64; 2]; 2] {
    let (s, c) = (angle / 2.0).sin_cos();
    [[Complex64::new(c, 0.0), Complex64::new(-s, 0.0)], [Complex64::new(s, 0.0), Complex64::new(c, 0.0)]]
}

/// A contiguous named slice of qubits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Register {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

impl Register {
    pub fn qubits(&self) -> Vec<usize> {
        (self.start..self.start + self.len).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumCircuit {
    n_qubits: usize,
    gates: Vec<Gate>,
    registers: Vec<Register>,
}

impl QuantumCircuit {
    pub fn new(n_qubits: usize) -> Self {
        Self { n_qubits, gates: Vec::new(), registers: Vec::new() }
    }

    /// Builds a circuit from consecutive registers, first register at qubit 0.
    pub fn with_registers(sizes: &[(&str, usize)]) -> Self {
        let mut start = 0;
        let registers = sizes
            .iter()
            .map(|&(name, len)| {
                let r = Register { name: name.to_string(), start, len };
                start += len;
                r
            })
            .collect();
        Self { n_qubits: start, gates: Vec::new(), registers }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn register(&self, name: &str) -> Option<&Register> {
        self.registers.iter().find(|r| r.name == name)
    }

    pub fn push(&mut self, gate: Gate) -> Result<(), SimError> {
        gate.validate(self.n_qubits)?;
        self.gates.push(gate);
        Ok(())
    }

    pub fn extend(&mut self, gates: impl IntoIterator<Item = Gate>) -> Result<(), SimError> {
        gates.into_iter().try_for_each(|g| self.push(g))
    }

    /// Runs every gate in order on a copy of `initial`.
    pub fn run(&self, initial: &StateVector) -> Result<StateVector, SimError> {
        if initial.n_qubits() != self.n_qubits {
            return Err(SimError::RegisterMismatch { expected: self.n_qubits, got: initial.n_qubits() });
        }
        let mut state = initial.clone();
        for gate in &self.gates {
            // gates were validated on push
            state.apply_unchecked(gate);
        }
        Ok(state)
    }

    pub fn run_from_zero(&self) -> StateVector {
        self.run(&StateVector::zero(self.n_qubits)).expect("register sizes agree")
    }

    /// Full-register unitary, column `k` being the image of basis state `k`.
    pub fn unitary(&self) -> DMatrix<Complex64> {
        let dim = 1usize << self.n_qubits;
        let mut u = DMatrix::from_element(dim, dim, ZERO);
        for k in 0..dim {
            let out = self.run(&StateVector::basis(self.n_qubits, k)).expect("register sizes agree");
            for (r, a) in out.amplitudes().iter().enumerate() {
                u[(r, k)] = *a;
            }
        }
        u
    }

    /// Equivalent circuit over {single-qubit gates, CNOT}. Controlled-unitary
    /// blocks are kept whole.
    pub fn decomposed(&self) -> QuantumCircuit {
        QuantumCircuit {
            n_qubits: self.n_qubits,
            gates: self.gates.iter().flat_map(decompose).collect(),
            registers: self.registers.clone(),
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "n_qubits": self.n_qubits,
            "registers": self.registers,
            "gates": self.gates.iter().map(Gate::to_json).collect::<Vec<_>>(),
        })
    }
}

/// Adjoint of a gate sequence.
pub fn inverse_gates(gates: &[Gate]) -> Vec<Gate> {
    gates.iter().rev().map(Gate::inverse).collect()
}

/// Forward QFT on `qubits` (qubits[0] least significant):
/// |k> -> 2^{-n/2} sum_j e^{2 pi i jk / 2^n} |j>.
pub fn build_qft(qubits: &[usize]) -> Vec<Gate> {
    let n = qubits.len();
    let mut gates = Vec::new();
    for i in (0..n).rev() {
        gates.push(Gate::H { target: qubits[i] });
        for j in (0..i).rev() {
            gates.push(Gate::ControlledPhase {
                control: qubits[j],
                target: qubits[i],
                angle: PI / (1u64 << (i - j)) as f64,
            });
        }
    }
    for i in 0..n / 2 {
        gates.push(Gate::Swap { a: qubits[i], b: qubits[n - 1 - i] });
    }
    gates
}

pub fn build_inverse_qft(qubits: &[usize]) -> Vec<Gate> {
    inverse_gates(&build_qft(qubits))
}

/// Gray-code decomposition of a uniformly controlled RY into alternating RY
/// and CNOT gates (2^k of each for k controls).
fn decompose_multiplexed_ry(target: usize, controls: &[usize], angles: &[f64]) -> Vec<Gate> {
    let k = controls.len();
    if k == 0 {
        return vec![Gate::Ry { target, angle: angles[0] }];
    }
    let count = 1usize << k;
    let gray = |i: usize| i ^ (i >> 1);
    let mut gates = Vec::with_capacity(2 * count);
    for i in 0..count {
        let g = gray(i);
        let theta = angles
            .iter()
            .enumerate()
            .map(|(j, a)| if (j & g).count_ones() % 2 == 0 { *a } else { -*a })
            .sum::<f64>()
            / count as f64;
        gates.push(Gate::Ry { target, angle: theta });
        let flipped = if i + 1 < count { (i + 1).trailing_zeros() as usize } else { k - 1 };
        gates.push(Gate::Cnot { control: controls[flipped], target });
    }
    gates
}

/// Exact rewrite of one gate into elementary gates.
pub fn decompose(gate: &Gate) -> Vec<Gate> {
    match gate {
        Gate::ControlledPhase { control, target, angle } => vec![
            Gate::Phase { target: *control, angle: angle / 2.0 },
            Gate::Cnot { control: *control, target: *target },
            Gate::Phase { target: *target, angle: -angle / 2.0 },
            Gate::Cnot { control: *control, target: *target },
            Gate::Phase { target: *target, angle: angle / 2.0 },
        ],
        Gate::Swap { a, b } => vec![
            Gate::Cnot { control: *a, target: *b },
            Gate::Cnot { control: *b, target: *a },
            Gate::Cnot { control: *a, target: *b },
        ],
        Gate::MultiplexedRy { target, controls, angles } => decompose_multiplexed_ry(*target, controls, angles),
        other => vec![other.clone()],
    }
}

/// Estimated CNOT count of a controlled-unitary block spanning `k` qubits
/// (controls plus targets), from the quantum Shannon decomposition bound.
pub fn block_cnot_estimate(k: usize) -> u64 {
    3 * (1u64 << (2 * k)) / 4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CircuitMetrics {
    pub width: usize,
    pub depth: u64,
    pub cnot_count: u64,
    pub total_gates: u64,
    /// True when any figure includes a controlled-unitary estimate.
    pub estimated: bool,
}

/// Width, depth and gate counts over the decomposed gate stream.
///
/// A controlled-unitary block on `k` qubits is charged
/// [`block_cnot_estimate`] CNOTs interleaved with single-qubit layers, i.e.
/// `2c + 1` gates and layers for `c` CNOTs.
pub fn circuit_metrics(circuit: &QuantumCircuit) -> CircuitMetrics {
    let mut level = vec![0u64; circuit.n_qubits()];
    let (mut cnots, mut total, mut estimated) = (0u64, 0u64, false);
    for gate in circuit.gates().iter().flat_map(decompose) {
        let qubits = gate.qubits();
        let cost = match &gate {
            Gate::ControlledUnitary { .. } => {
                let c = block_cnot_estimate(qubits.len());
                cnots += c;
                estimated = true;
                2 * c + 1
            }
            Gate::Cnot { .. } => {
                cnots += 1;
                1
            }
            _ => 1,
        };
        total += cost;
        let start = qubits.iter().map(|&q| level[q]).max().unwrap_or(0);
        for &q in &qubits {
            level[q] = start + cost;
        }
    }
    CircuitMetrics {
        width: circuit.n_qubits(),
        depth: level.into_iter().max().unwrap_or(0),
        cnot_count: cnots,
        total_gates: total,
        estimated,
    }
}

/// Measurement outcome counts keyed by basis index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotHistogram {
    pub n_qubits: usize,
    pub shots: u64,
    pub seed: u64,
    pub counts: BTreeMap<usize, u64>,
}

impl ShotHistogram {
    pub fn count(&self, index: usize) -> u64 {
        self.counts.get(&index).copied().unwrap_or(0)
    }

    pub fn count_bits(&self, bits: &str) -> u64 {
        parse_bitstring(bits).map_or(0, |i| self.count(i))
    }

    pub fn frequency(&self, index: usize) -> f64 {
        self.count(index) as f64 / self.shots as f64
    }

    pub fn to_json(&self) -> Value {
        let counts: BTreeMap<String, u64> =
            self.counts.iter().map(|(&k, &v)| (bitstring(k, self.n_qubits), v)).collect();
        json!({ "counts": counts, "shots": self.shots, "seed": self.seed })
    }
}

/// Cumulative distribution over basis states, sampled by inversion.
pub(crate) struct Cdf(Vec<f64>);

impl Cdf {
    pub(crate) fn new(state: &StateVector) -> Self {
        let mut acc = 0.0;
        Cdf(state.amplitudes().iter().map(|a| {
            acc += a.norm_sqr();
            acc
        }).collect())
    }

    pub(crate) fn draw(&self, u: f64) -> usize {
        let total = *self.0.last().expect("non-empty state");
        let x = u * total;
        let idx = self.0.partition_point(|&c| c <= x);
        // Guard against round-off past the end and zero-probability tails.
        let mut idx = idx.min(self.0.len() - 1);
        while idx > 0 && self.0[idx] == self.0[idx - 1] {
            idx -= 1;
        }
        idx
    }
}

/// Mixes a base seed with a stream index (splitmix64 finalizer), for
/// per-call and per-trajectory seeds.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mix = |mut x: u64| {
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^ (x >> 31)
    };
    mix(base ^ mix(stream))
}

/// The measurement stream used by every sampler for a given seed.
pub(crate) fn measurement_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws `shots` terminal measurements of all qubits.
pub fn sample(state: &StateVector, shots: u64, seed: u64) -> Result<ShotHistogram, SimError> {
    if shots == 0 {
        return Err(SimError::NoShots);
    }
    let cdf = Cdf::new(state);
    let mut rng = measurement_rng(seed);
    let mut counts = BTreeMap::new();
    for _ in 0..shots {
        *counts.entry(cdf.draw(rng.random::<f64>())).or_insert(0) += 1;
    }
    Ok(ShotHistogram { n_qubits: state.n_qubits(), shots, seed, counts })
}
