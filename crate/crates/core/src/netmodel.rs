//! Power-system case model: JSON case parsing, the bus admittance matrix and
//! the constant decoupled matrices B' and B''.
//!
//! Only slack and PQ buses are supported, with series branches that carry no
//! shunt admittance, taps or phase shift. Unknown fields in a case file are
//! rejected rather than silently ignored.

use std::collections::{HashMap, HashSet, VecDeque};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_BASE_MVA: f64 = 100.0;

/// The 3-bus test system shipped with the crate.
pub const CASE3_JSON: &str = include_str!("../cases/case3.json");
/// The 5-bus test system shipped with the crate.
pub const CASE5_JSON: &str = include_str!("../cases/case5.json");

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("malformed case file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot read case file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("base_mva must be positive, got {0}")]
    NonPositiveBase(f64),
    #[error("duplicate bus id {0}")]
    DuplicateBus(i64),
    #[error("missing slack bus")]
    MissingSlack,
    #[error("more than one slack bus ({0} and {1})")]
    MultipleSlack(i64, i64),
    #[error("bus {bus}: initial voltage magnitude must be positive, got {vm}")]
    NonPositiveVoltage { bus: i64, vm: f64 },
    #[error("branch {index} references unknown bus {bus}")]
    UnknownBus { index: usize, bus: i64 },
    #[error("branch {index} connects bus {bus} to itself")]
    SelfLoop { index: usize, bus: i64 },
    #[error("branch {index} has negative resistance {r}")]
    NegativeResistance { index: usize, r: f64 },
    #[error("branch {from}-{to} has zero impedance (r = x = 0)")]
    ZeroImpedance { from: i64, to: i64 },
    #[error("network is not connected: bus {0} is unreachable from the slack")]
    Disconnected(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusRecord {
    pub id: i64,
    pub kind: BusKind,
    /// Net injection in MW (generation positive).
    pub p_mw: f64,
    /// Net injection in MVAr (generation positive).
    pub q_mvar: f64,
    #[serde(rename = "vm")]
    pub vm_init: f64,
    #[serde(rename = "theta_deg")]
    pub theta_init_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchRecord {
    #[serde(rename = "from")]
    pub from_bus: i64,
    #[serde(rename = "to")]
    pub to_bus: i64,
    pub r_pu: f64,
    pub x_pu: f64,
}

impl BranchRecord {
    pub fn admittance(&self) -> Complex64 {
        Complex64::new(1.0, 0.0) / Complex64::new(self.r_pu, self.x_pu)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseFile {
    #[serde(default = "default_base")]
    base_mva: f64,
    buses: Vec<BusRecord>,
    branches: Vec<BranchRecord>,
}

fn default_base() -> f64 {
    DEFAULT_BASE_MVA
}

/// A validated network. Fields are read-only once constructed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerNetwork {
    base_mva: f64,
    buses: Vec<BusRecord>,
    branches: Vec<BranchRecord>,
    #[serde(skip)]
    index: HashMap<i64, usize>,
}

impl PowerNetwork {
    pub fn new(
        base_mva: f64,
        buses: Vec<BusRecord>,
        branches: Vec<BranchRecord>,
    ) -> Result<Self, NetworkError> {
        if !(base_mva > 0.0) || !base_mva.is_finite() {
            return Err(NetworkError::NonPositiveBase(base_mva));
        }
        let mut index = HashMap::with_capacity(buses.len());
        let mut slack: Option<i64> = None;
        for (pos, bus) in buses.iter().enumerate() {
            if index.insert(bus.id, pos).is_some() {
                return Err(NetworkError::DuplicateBus(bus.id));
            }
            if !(bus.vm_init > 0.0) {
                return Err(NetworkError::NonPositiveVoltage { bus: bus.id, vm: bus.vm_init });
            }
            if bus.kind == BusKind::Slack {
                if let Some(first) = slack {
                    return Err(NetworkError::MultipleSlack(first, bus.id));
                }
                slack = Some(bus.id);
            }
        }
        let slack = slack.ok_or(NetworkError::MissingSlack)?;

        let mut adjacency = vec![Vec::new(); buses.len()];
        for (k, br) in branches.iter().enumerate() {
            let from = *index
                .get(&br.from_bus)
                .ok_or(NetworkError::UnknownBus { index: k, bus: br.from_bus })?;
            let to = *index
                .get(&br.to_bus)
                .ok_or(NetworkError::UnknownBus { index: k, bus: br.to_bus })?;
            if from == to {
                return Err(NetworkError::SelfLoop { index: k, bus: br.from_bus });
            }
            if br.r_pu < 0.0 {
                return Err(NetworkError::NegativeResistance { index: k, r: br.r_pu });
            }
            if br.r_pu == 0.0 && br.x_pu == 0.0 {
                return Err(NetworkError::ZeroImpedance { from: br.from_bus, to: br.to_bus });
            }
            adjacency[from].push(to);
            adjacency[to].push(from);
        }

        let mut seen = HashSet::new();
        let mut queue = VecDeque::from([index[&slack]]);
        seen.insert(index[&slack]);
        while let Some(node) = queue.pop_front() {
            for &next in &adjacency[node] {
                if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        if let Some(bus) = buses.iter().enumerate().find(|(pos, _)| !seen.contains(pos)) {
            return Err(NetworkError::Disconnected(bus.1.id));
        }

        Ok(Self { base_mva, buses, branches, index })
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn buses(&self) -> &[BusRecord] {
        &self.buses
    }

    pub fn branches(&self) -> &[BranchRecord] {
        &self.branches
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    /// Position of a bus label in [`Self::buses`].
    pub fn bus_index(&self, id: i64) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn slack_index(&self) -> usize {
        self.buses.iter().position(|b| b.kind == BusKind::Slack).expect("validated network has a slack bus")
    }

    /// Indices of the buses whose angle is unknown (every non-slack bus).
    pub fn angle_buses(&self) -> Vec<usize> {
        (0..self.buses.len()).filter(|&i| self.buses[i].kind != BusKind::Slack).collect()
    }

    /// Indices of the buses whose magnitude is unknown (PQ buses).
    pub fn magnitude_buses(&self) -> Vec<usize> {
        (0..self.buses.len()).filter(|&i| self.buses[i].kind == BusKind::Pq).collect()
    }

    /// Scheduled complex injections in per unit.
    pub fn scheduled_power_pu(&self) -> Vec<Complex64> {
        self.buses
            .iter()
            .map(|b| Complex64::new(b.p_mw, b.q_mvar) / self.base_mva)
            .collect()
    }

    /// Copy of this network with one branch's series impedance multiplied by `factor`.
    pub fn with_scaled_branch(&self, branch: usize, factor: f64) -> Result<Self, NetworkError> {
        let mut branches = self.branches.clone();
        if let Some(br) = branches.get_mut(branch) {
            br.r_pu *= factor;
            br.x_pu *= factor;
        }
        Self::new(self.base_mva, self.buses.clone(), branches)
    }
}

/// Parses a case from its JSON text.
pub fn parse_case(text: &str) -> Result<PowerNetwork, NetworkError> {
    let file: CaseFile = serde_json::from_str(text)?;
    PowerNetwork::new(file.base_mva, file.buses, file.branches)
}

pub fn load_case(path: impl AsRef<Path>) -> Result<PowerNetwork, NetworkError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| NetworkError::Io { path: path.display().to_string(), source })?;
    parse_case(&text)
}

/// Dense complex bus admittance matrix in per unit, indexed by bus position.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    pub y: DMatrix<Complex64>,
}

impl AdmittanceMatrix {
    pub fn dim(&self) -> usize {
        self.y.nrows()
    }
}

pub fn build_ybus(net: &PowerNetwork) -> Result<AdmittanceMatrix, NetworkError> {
    let n = net.bus_count();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for br in net.branches() {
        if br.r_pu == 0.0 && br.x_pu == 0.0 {
            return Err(NetworkError::ZeroImpedance { from: br.from_bus, to: br.to_bus });
        }
        let (f, t) = (
            net.bus_index(br.from_bus).expect("validated branch"),
            net.bus_index(br.to_bus).expect("validated branch"),
        );
        let ys = br.admittance();
        y[(f, f)] += ys;
        y[(t, t)] += ys;
        y[(f, t)] -= ys;
        y[(t, f)] -= ys;
    }
    Ok(AdmittanceMatrix { y })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoupledMatrices {
    /// Im(Ybus) over the angle buses.
    pub b_prime: DMatrix<f64>,
    /// Im(Ybus) over the PQ buses.
    pub b_dprime: DMatrix<f64>,
    /// Bus positions for the rows of `b_prime`.
    pub p_buses: Vec<usize>,
    /// Bus positions for the rows of `b_dprime`.
    pub q_buses: Vec<usize>,
}

pub fn build_b_matrices(net: &PowerNetwork, y: &AdmittanceMatrix) -> DecoupledMatrices {
    let p_buses = net.angle_buses();
    let q_buses = net.magnitude_buses();
    let restrict = |rows: &[usize]| {
        DMatrix::from_fn(rows.len(), rows.len(), |i, j| y.y[(rows[i], rows[j])].im)
    };
    DecoupledMatrices { b_prime: restrict(&p_buses), b_dprime: restrict(&q_buses), p_buses, q_buses }
}
