//! Depolarizing gate noise simulated by Pauli trajectories.
//!
//! Each shot replays the elementary gate stream of a circuit. After every gate
//! a uniformly random non-identity Pauli is inserted on the gate's qubits with
//! the configured probability. Controlled-unitary blocks are charged one
//! two-qubit error opportunity per estimated CNOT, on a random pair of the
//! block's qubits.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hhl::{HhlConfig, HhlSolver};
use crate::qsim::{block_cnot_estimate, derive_seed, measurement_rng, Cdf, Gate, QuantumCircuit, ShotHistogram, SimError, StateVector};

/// Average CNOT error rates of a few IBM Quantum devices (calibration
/// snapshot of 23 Feb 2022).
pub const DEVICE_CNOT_ERRORS: [(&str, f64); 5] = [
    ("ibmq_lima", 9.996e-3),
    ("ibmq_belem", 1.363e-2),
    ("ibmq_quito", 1.135e-2),
    ("ibmq_bogota", 1.206e-2),
    ("ibm_perth", 1.006e-2),
];

pub fn device_cnot_error(name: &str) -> Option<f64> {
    DEVICE_CNOT_ERRORS.iter().find(|(n, _)| *n == name).map(|&(_, p)| p)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("{name} = {value} is not a probability")]
    InvalidProbability { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub p_cnot: f64,
    pub p_1q: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(p_cnot: f64, p_1q: f64, seed: u64) -> Result<Self, NoiseError> {
        let model = Self { p_cnot, p_1q, seed };
        model.validate()?;
        Ok(model)
    }

    /// Single-qubit error rate defaults to a tenth of the CNOT rate.
    pub fn from_cnot_error(p_cnot: f64, seed: u64) -> Result<Self, NoiseError> {
        Self::new(p_cnot, p_cnot / 10.0, seed)
    }

    pub fn noiseless(seed: u64) -> Self {
        Self { p_cnot: 0.0, p_1q: 0.0, seed }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        for (name, value) in [("p_cnot", self.p_cnot), ("p_1q", self.p_1q)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(NoiseError::InvalidProbability { name, value });
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let model: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        model.validate().map_err(|e| e.to_string())?;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyRun {
    pub histogram: ShotHistogram,
    /// Number of Pauli errors inserted in each trajectory.
    pub errors_per_trajectory: Vec<u32>,
}

impl NoisyRun {
    pub fn mean_errors(&self) -> f64 {
        self.errors_per_trajectory.iter().map(|&e| e as f64).sum::<f64>() / self.errors_per_trajectory.len() as f64
    }
}

/// An error opportunity attached to one elementary gate.
enum Slot {
    One { qubit: usize },
    Two { a: usize, b: usize },
    Block { qubits: Vec<usize>, opportunities: u64 },
}

fn pauli(code: usize, qubit: usize) -> Option<Gate> {
    match code {
        1 => Some(Gate::X { target: qubit }),
        2 => Some(Gate::Y { target: qubit }),
        3 => Some(Gate::Z { target: qubit }),
        _ => None,
    }
}

fn random_two_qubit_pauli(rng: &mut ChaCha8Rng, a: usize, b: usize, out: &mut Vec<Gate>) {
    let code = rng.random_range(1..16usize);
    out.extend(pauli(code % 4, a));
    out.extend(pauli(code / 4, b));
}

fn error_rng(seed: u64, model_seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, model_seed));
    rng.set_stream(1);
    rng
}

/// Runs `shots` noisy trajectories of `circuit` from |0...0>.
///
/// Measurements use the same random stream as [`crate::qsim::sample`], so a
/// zero-noise model reproduces the ideal histogram exactly for the same seed.
pub fn run_noisy(circuit: &QuantumCircuit, model: &NoiseModel, shots: u64, seed: u64) -> Result<NoisyRun, SimError> {
    if shots == 0 {
        return Err(SimError::NoShots);
    }
    let ideal = circuit.run_from_zero();
    let ideal_cdf = Cdf::new(&ideal);
    let elementary = circuit.decomposed();
    let gates = elementary.gates();
    let slots: Vec<Slot> = gates
        .iter()
        .map(|g| match g {
            Gate::ControlledUnitary { .. } => {
                let qubits = g.qubits();
                Slot::Block { opportunities: block_cnot_estimate(qubits.len()), qubits }
            }
            _ => match g.qubits()[..] {
                [q] => Slot::One { qubit: q },
                [a, b] => Slot::Two { a, b },
                _ => unreachable!("decomposition yields at most two-qubit gates outside blocks"),
            },
        })
        .collect();

    let mut meas = measurement_rng(seed);
    let mut errs = error_rng(seed, model.seed);
    let mut prefix: Option<Vec<StateVector>> = None;
    let mut counts = BTreeMap::new();
    let mut errors_per_trajectory = Vec::with_capacity(shots as usize);
    let mut inserted: Vec<(usize, Vec<Gate>)> = Vec::new();

    for _ in 0..shots {
        inserted.clear();
        let mut n_errors = 0u32;
        for (idx, slot) in slots.iter().enumerate() {
            let mut paulis = Vec::new();
            match slot {
                Slot::One { qubit } => {
                    if model.p_1q > 0.0 && errs.random::<f64>() < model.p_1q {
                        paulis.extend(pauli(errs.random_range(1..4usize), *qubit));
                        n_errors += 1;
                    }
                }
                Slot::Two { a, b } => {
                    if model.p_cnot > 0.0 && errs.random::<f64>() < model.p_cnot {
                        random_two_qubit_pauli(&mut errs, *a, *b, &mut paulis);
                        n_errors += 1;
                    }
                }
                Slot::Block { qubits, opportunities } => {
                    if model.p_cnot > 0.0 {
                        for _ in 0..*opportunities {
                            if errs.random::<f64>() < model.p_cnot {
                                let i = errs.random_range(0..qubits.len());
                                let mut j = errs.random_range(0..qubits.len() - 1);
                                if j >= i {
                                    j += 1;
                                }
                                random_two_qubit_pauli(&mut errs, qubits[i], qubits[j], &mut paulis);
                                n_errors += 1;
                            }
                        }
                    }
                }
            }
            if !paulis.is_empty() {
                inserted.push((idx, paulis));
            }
        }
        errors_per_trajectory.push(n_errors);

        let u = meas.random::<f64>();
        let outcome = if n_errors == 0 {
            ideal_cdf.draw(u)
        } else {
            let cache = prefix.get_or_insert_with(|| {
                let mut state = StateVector::zero(elementary.n_qubits());
                gates
                    .iter()
                    .map(|g| {
                        state.apply_unchecked(g);
                        state.clone()
                    })
                    .collect()
            });
            let first = inserted[0].0;
            let mut state = cache[first].clone();
            let mut pending = inserted.iter().peekable();
            for (idx, gate) in gates.iter().enumerate().skip(first) {
                if idx > first {
                    state.apply_unchecked(gate);
                }
                while let Some((_, ps)) = pending.next_if(|(i, _)| *i == idx) {
                    ps.iter().for_each(|p| state.apply_unchecked(p));
                }
            }
            Cdf::new(&state).draw(u)
        };
        *counts.entry(outcome).or_insert(0) += 1;
    }

    Ok(NoisyRun {
        histogram: ShotHistogram { n_qubits: circuit.n_qubits(), shots, seed, counts },
        errors_per_trajectory,
    })
}

/// Linear solver that executes the HHL circuit under `model` and reads the
/// solution from the sampled histogram.
pub fn noisy_hhl_solver(model: NoiseModel, config: HhlConfig) -> HhlSolver {
    HhlSolver::noisy(config, model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::sample;

    fn bell() -> QuantumCircuit {
        let mut c = QuantumCircuit::new(2);
        c.extend([Gate::H { target: 0 }, Gate::Cnot { control: 0, target: 1 }]).unwrap();
        c
    }

    #[test]
    fn zero_noise_is_bit_identical_to_ideal_sampling() {
        let circ = bell();
        let run = run_noisy(&circ, &NoiseModel::noiseless(9), 1024, 77).unwrap();
        let ideal = sample(&circ.run_from_zero(), 1024, 77).unwrap();
        assert_eq!(run.histogram, ideal);
        assert!(run.errors_per_trajectory.iter().all(|&e| e == 0));
    }

    #[test]
    fn certain_cnot_error_hits_every_trajectory() {
        let mut circ = QuantumCircuit::new(2);
        circ.push(Gate::Cnot { control: 0, target: 1 }).unwrap();
        let run = run_noisy(&circ, &NoiseModel::new(1.0, 0.0, 0).unwrap(), 500, 3).unwrap();
        assert!(run.errors_per_trajectory.iter().all(|&e| e == 1));
        // only ZI, IZ and ZZ leave |00> in place: 3 of 15
        let stay = run.histogram.frequency(0);
        assert!((stay - 0.2).abs() < 4.0 * (0.16f64 / 500.0).sqrt(), "{stay}");
    }

    #[test]
    fn deterministic_given_seed() {
        let circ = bell();
        let model = NoiseModel::new(0.2, 0.05, 11).unwrap();
        assert_eq!(run_noisy(&circ, &model, 300, 5).unwrap(), run_noisy(&circ, &model, 300, 5).unwrap());
    }

    #[test]
    fn x_error_after_single_qubit_gate_flips_outcome() {
        // Only a 1q gate; p_1q = 1 inserts X, Y or Z after it.
        let mut circ = QuantumCircuit::new(1);
        circ.push(Gate::X { target: 0 }).unwrap();
        let run = run_noisy(&circ, &NoiseModel::new(0.0, 1.0, 1).unwrap(), 3000, 2).unwrap();
        let flipped = run.histogram.frequency(0);
        // X and Y flip back to |0>, Z does not: 2/3 expected.
        assert!((flipped - 2.0 / 3.0).abs() < 4.0 * (2.0 / 9.0 / 3000.0_f64).sqrt(), "{flipped}");
    }

    #[test]
    fn rejects_bad_probabilities_and_parses_json() {
        assert!(NoiseModel::new(1.5, 0.0, 0).is_err());
        assert!(NoiseModel::new(0.1, -0.1, 0).is_err());
        let m = NoiseModel::from_json(r#"{"p_cnot": 0.01, "p_1q": 0.001, "seed": 4}"#).unwrap();
        assert_eq!(m, NoiseModel { p_cnot: 0.01, p_1q: 0.001, seed: 4 });
        assert!(NoiseModel::from_json(r#"{"p_cnot": 2.0, "p_1q": 0.0}"#).is_err());
        let d = NoiseModel::from_cnot_error(device_cnot_error("ibmq_lima").unwrap(), 0).unwrap();
        assert!((d.p_1q - 9.996e-4).abs() < 1e-15);
    }
}
