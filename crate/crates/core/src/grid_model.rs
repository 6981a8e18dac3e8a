//! Static power-system model: buses, lines, generators and relay settings.
//!
//! Case files are flat JSON documents:
//!
//! ```json
//! {
//!   "name": "desk3",
//!   "base_frequency_hz": 60.0,
//!   "base_mva": 100.0,
//!   "relay": { "uf_hz": 59.5, "of_hz": 60.5 },
//!   "buses": [ { "id": 1, "type": "slack", "p_load_base": 0.8 }, ... ],
//!   "lines": [ { "from": 1, "to": 2, "susceptance": 10.0 }, ... ],
//!   "generators": [ { "bus": 1, "H": 5.0, "R": 0.05, "T": 0.5, "K_D": 1.0, "has_governor": true } ]
//! }
//! ```
//!
//! All powers are per unit on `base_mva`; angular frequency is per unit with
//! 1.0 at `base_frequency_hz`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("malformed case: {0}")]
    Malformed(String),
    #[error("inconsistent case: {0}")]
    Inconsistent(String),
    #[error("i/o error on case file: {0}")]
    Io(#[from] std::io::Error),
}

/// 1-based bus number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BusId(pub usize);

impl BusId {
    /// Zero-based position of the bus inside a [`NetworkModel`].
    pub fn index(self) -> usize {
        self.0 - 1
    }

    pub fn from_index(index: usize) -> Self {
        BusId(index + 1)
    }
}

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusType {
    #[serde(rename = "PV")]
    Pv,
    #[serde(rename = "PQ")]
    Pq,
    #[serde(rename = "slack")]
    Slack,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// Inertia constant, seconds.
    #[serde(rename = "H")]
    pub inertia: f64,
    /// Droop, p.u.
    #[serde(rename = "R")]
    pub droop: f64,
    /// Governor time constant, seconds.
    #[serde(rename = "T")]
    pub governor_time_constant: f64,
    /// Damping, p.u.
    #[serde(rename = "K_D")]
    pub damping: f64,
    #[serde(default = "default_true")]
    pub has_governor: bool,
}

fn default_true() -> bool {
    true
}

impl GeneratorParams {
    fn validate(&self, bus: BusId) -> Result<(), CaseError> {
        let finite = [self.inertia, self.droop, self.governor_time_constant, self.damping]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(CaseError::Inconsistent(format!(
                "generator at bus {bus} has non-finite parameters"
            )));
        }
        if self.inertia <= 0.0 {
            return Err(CaseError::Inconsistent(format!(
                "generator at bus {bus} has non-positive inertia"
            )));
        }
        if self.droop <= 0.0 {
            return Err(CaseError::Inconsistent(format!(
                "generator at bus {bus} has non-positive droop"
            )));
        }
        if self.governor_time_constant <= 0.0 {
            return Err(CaseError::Inconsistent(format!(
                "generator at bus {bus} has non-positive governor time constant"
            )));
        }
        if self.damping < 0.0 {
            return Err(CaseError::Inconsistent(format!(
                "generator at bus {bus} has negative damping"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelayConfig {
    #[serde(rename = "uf_hz")]
    pub uf_threshold: f64,
    #[serde(rename = "of_hz")]
    pub of_threshold: f64,
}

impl RelayConfig {
    pub fn new(uf_threshold: f64, of_threshold: f64) -> Self {
        Self {
            uf_threshold,
            of_threshold,
        }
    }
}

impl Default for RelayConfig {
    fn default() -> Self {
        Self::new(59.5, 60.5)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusType,
    /// Base (nominal) load, p.u.
    pub p_load_base: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: BusId,
    pub params: GeneratorParams,
}

/// Immutable, validated network description.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub name: String,
    buses: Vec<Bus>,
    generators: Vec<Generator>,
    gen_at_bus: Vec<Option<usize>>,
    susceptance: DMatrix<f64>,
    slack: BusId,
    pub base_frequency: f64,
    pub base_mva: f64,
    /// Nominal angular frequency, p.u.
    pub nominal_omega: f64,
    pub relay: RelayConfig,
}

// ---- on-disk schema ----

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseFile {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    name: String,
    base_frequency_hz: f64,
    #[serde(default = "default_base_mva")]
    base_mva: f64,
    relay: RelayConfig,
    buses: Vec<BusRecord>,
    lines: Vec<LineRecord>,
    generators: Vec<GeneratorRecord>,
}

fn default_base_mva() -> f64 {
    100.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusRecord {
    id: usize,
    #[serde(rename = "type")]
    kind: BusType,
    #[serde(default)]
    p_load_base: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineRecord {
    from: usize,
    to: usize,
    susceptance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratorRecord {
    bus: usize,
    #[serde(flatten)]
    params: GeneratorParams,
}

pub fn load_case(path: impl AsRef<Path>) -> Result<NetworkModel, CaseError> {
    let text = std::fs::read_to_string(path)?;
    parse_case(&text)
}

pub fn parse_case(text: &str) -> Result<NetworkModel, CaseError> {
    let file: CaseFile =
        serde_json::from_str(text).map_err(|e| CaseError::Malformed(e.to_string()))?;
    NetworkModel::from_case(file)
}

impl NetworkModel {
    fn from_case(file: CaseFile) -> Result<Self, CaseError> {
        let n = file.buses.len();
        if n == 0 {
            return Err(CaseError::Inconsistent("case has no buses".into()));
        }
        if !(file.base_frequency_hz.is_finite() && file.base_frequency_hz > 0.0) {
            return Err(CaseError::Inconsistent(
                "base frequency must be positive".into(),
            ));
        }
        if !(file.base_mva.is_finite() && file.base_mva > 0.0) {
            return Err(CaseError::Inconsistent("base MVA must be positive".into()));
        }
        let relay = file.relay;
        if !(relay.uf_threshold < file.base_frequency_hz
            && file.base_frequency_hz < relay.of_threshold)
        {
            return Err(CaseError::Inconsistent(format!(
                "relay thresholds {}..{} Hz do not bracket {} Hz",
                relay.uf_threshold, relay.of_threshold, file.base_frequency_hz
            )));
        }

        let mut slot: Vec<Option<Bus>> = vec![None; n];
        for rec in &file.buses {
            if rec.id == 0 || rec.id > n {
                return Err(CaseError::Inconsistent(format!(
                    "bus id {} outside 1..={n}",
                    rec.id
                )));
            }
            if !rec.p_load_base.is_finite() {
                return Err(CaseError::Inconsistent(format!(
                    "bus {} has a non-finite load",
                    rec.id
                )));
            }
            if slot[rec.id - 1].is_some() {
                return Err(CaseError::Inconsistent(format!("duplicate bus id {}", rec.id)));
            }
            slot[rec.id - 1] = Some(Bus {
                id: BusId(rec.id),
                kind: rec.kind,
                p_load_base: rec.p_load_base,
            });
        }
        let buses: Vec<Bus> = slot.into_iter().map(|b| b.expect("all ids filled")).collect();

        let slacks: Vec<BusId> = buses
            .iter()
            .filter(|b| b.kind == BusType::Slack)
            .map(|b| b.id)
            .collect();
        if slacks.len() != 1 {
            return Err(CaseError::Inconsistent(format!(
                "expected exactly one slack bus, found {}",
                slacks.len()
            )));
        }

        let mut susceptance = DMatrix::zeros(n, n);
        for line in &file.lines {
            for end in [line.from, line.to] {
                if end == 0 || end > n {
                    return Err(CaseError::Inconsistent(format!(
                        "line references unknown bus {end}"
                    )));
                }
            }
            if line.from == line.to {
                return Err(CaseError::Inconsistent(format!(
                    "line {0}-{0} is a self loop",
                    line.from
                )));
            }
            if !(line.susceptance.is_finite() && line.susceptance >= 0.0) {
                return Err(CaseError::Inconsistent(format!(
                    "line {}-{} has invalid susceptance",
                    line.from, line.to
                )));
            }
            let (a, b) = (line.from - 1, line.to - 1);
            susceptance[(a, b)] += line.susceptance;
            susceptance[(b, a)] += line.susceptance;
        }

        let mut gen_at_bus = vec![None; n];
        let mut gens: Vec<Generator> = Vec::with_capacity(file.generators.len());
        let mut records = file.generators.clone();
        records.sort_by_key(|g| g.bus);
        for rec in records {
            if rec.bus == 0 || rec.bus > n {
                return Err(CaseError::Inconsistent(format!(
                    "generator references unknown bus {}",
                    rec.bus
                )));
            }
            let id = BusId(rec.bus);
            if buses[id.index()].kind == BusType::Pq {
                return Err(CaseError::Inconsistent(format!(
                    "generator attached to PQ bus {id}"
                )));
            }
            if gen_at_bus[id.index()].is_some() {
                return Err(CaseError::Inconsistent(format!(
                    "more than one generator at bus {id}"
                )));
            }
            rec.params.validate(id)?;
            gen_at_bus[id.index()] = Some(gens.len());
            gens.push(Generator {
                bus: id,
                params: rec.params,
            });
        }
        for bus in &buses {
            if bus.kind != BusType::Pq && gen_at_bus[bus.id.index()].is_none() {
                return Err(CaseError::Inconsistent(format!(
                    "bus {} is {:?} but has no generator",
                    bus.id, bus.kind
                )));
            }
        }

        Ok(Self {
            name: file.name,
            buses,
            generators: gens,
            gen_at_bus,
            susceptance,
            slack: slacks[0],
            base_frequency: file.base_frequency_hz,
            base_mva: file.base_mva,
            nominal_omega: 1.0,
            relay,
        })
    }

    /// Canonical JSON: buses by id, lines as the upper triangle of the
    /// susceptance matrix, generators by bus.
    pub fn to_case_json(&self) -> String {
        let n = self.n_buses();
        let mut lines = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                let s = self.susceptance[(a, b)];
                if s != 0.0 {
                    lines.push(LineRecord {
                        from: a + 1,
                        to: b + 1,
                        susceptance: s,
                    });
                }
            }
        }
        let file = CaseFile {
            name: self.name.clone(),
            base_frequency_hz: self.base_frequency,
            base_mva: self.base_mva,
            relay: self.relay,
            buses: self
                .buses
                .iter()
                .map(|b| BusRecord {
                    id: b.id.0,
                    kind: b.kind,
                    p_load_base: b.p_load_base,
                })
                .collect(),
            lines,
            generators: self
                .generators
                .iter()
                .map(|g| GeneratorRecord {
                    bus: g.bus.0,
                    params: g.params,
                })
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&file).expect("case serializes");
        out.push('\n');
        out
    }

    pub fn save_case(&self, path: impl AsRef<Path>) -> Result<(), CaseError> {
        std::fs::write(path, self.to_case_json())?;
        Ok(())
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn bus_ids(&self) -> impl Iterator<Item = BusId> + '_ {
        self.buses.iter().map(|b| b.id)
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn generator_at(&self, bus: BusId) -> Option<usize> {
        self.gen_at_bus.get(bus.index()).copied().flatten()
    }

    pub fn slack(&self) -> BusId {
        self.slack
    }

    pub fn slack_generator(&self) -> usize {
        self.gen_at_bus[self.slack.index()].expect("validated: slack has a generator")
    }

    /// Buses whose type is PV or slack.
    pub fn pv_buses(&self) -> Vec<BusId> {
        self.buses
            .iter()
            .filter(|b| b.kind != BusType::Pq)
            .map(|b| b.id)
            .collect()
    }

    pub fn pq_buses(&self) -> Vec<BusId> {
        self.buses
            .iter()
            .filter(|b| b.kind == BusType::Pq)
            .map(|b| b.id)
            .collect()
    }

    pub fn base_loads(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.p_load_base).collect()
    }

    pub fn susceptance(&self) -> &DMatrix<f64> {
        &self.susceptance
    }

    /// Converts a per-unit angular frequency to Hz.
    pub fn omega_to_hz(&self, omega: f64) -> f64 {
        omega * self.base_frequency
    }

    pub fn hz_to_omega(&self, hz: f64) -> f64 {
        hz / self.base_frequency
    }

    /// Returns a copy with different relay thresholds.
    pub fn with_relay(&self, relay: RelayConfig) -> Self {
        let mut out = self.clone();
        out.relay = relay;
        out
    }

    /// Returns a copy with base loads replaced (used by scenario overrides).
    pub fn with_base_loads(&self, loads: &[f64]) -> Self {
        assert_eq!(loads.len(), self.n_buses());
        let mut out = self.clone();
        for (bus, &l) in out.buses.iter_mut().zip(loads) {
            bus.p_load_base = l;
        }
        out
    }

    /// Buses ordered by decreasing base load (ties by id), zero-load buses excluded.
    pub fn buses_by_load(&self) -> Vec<BusId> {
        let mut ids: Vec<&Bus> = self.buses.iter().filter(|b| b.p_load_base > 0.0).collect();
        ids.sort_by(|a, b| {
            b.p_load_base
                .partial_cmp(&a.p_load_base)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.id.cmp(&b.id))
        });
        ids.into_iter().map(|b| b.id).collect()
    }

    pub fn describe(&self) -> BTreeMap<&'static str, usize> {
        BTreeMap::from([
            ("buses", self.n_buses()),
            ("generators", self.n_generators()),
            ("pq_buses", self.pq_buses().len()),
        ])
    }
}

/// Off-diagonal susceptance matrix S with zero diagonal, so that the flow out
/// of bus b1 is `sum_b2 S[b1][b2] * (delta_b1 - delta_b2)`.
pub fn susceptance_matrix(network: &NetworkModel) -> DMatrix<f64> {
    network.susceptance.clone()
}

/// Laplacian assembly: diagonal holds the sum of incident susceptances and
/// off-diagonals are `-S`. Flow injections are `L * delta`.
pub fn laplacian(network: &NetworkModel) -> DMatrix<f64> {
    let s = &network.susceptance;
    let n = s.nrows();
    let mut l = -s.clone();
    for i in 0..n {
        l[(i, i)] = s.row(i).sum();
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const THREE_BUS: &str = r#"{
        "name": "t3",
        "base_frequency_hz": 60.0,
        "relay": {"uf_hz": 59.5, "of_hz": 60.5},
        "buses": [
            {"id": 1, "type": "slack", "p_load_base": 0.5},
            {"id": 2, "type": "PV", "p_load_base": 0.5},
            {"id": 3, "type": "PQ", "p_load_base": 1.0}
        ],
        "lines": [
            {"from": 1, "to": 2, "susceptance": 10.0},
            {"from": 1, "to": 3, "susceptance": 8.0},
            {"from": 2, "to": 3, "susceptance": 12.0}
        ],
        "generators": [
            {"bus": 1, "H": 5.0, "R": 0.05, "T": 0.5, "K_D": 1.0, "has_governor": true},
            {"bus": 2, "H": 4.0, "R": 0.05, "T": 0.4, "K_D": 1.0, "has_governor": true}
        ]
    }"#;

    #[test]
    fn three_bus_case_loads() {
        let net = parse_case(THREE_BUS).unwrap();
        assert_eq!(net.n_buses(), 3);
        assert_eq!(net.pv_buses().len(), 2);
        assert_eq!(net.slack(), BusId(1));
        assert_eq!(net.generator_at(BusId(2)), Some(1));
        assert_eq!(net.generator_at(BusId(3)), None);
    }

    #[test]
    fn two_slack_buses_rejected() {
        let text = THREE_BUS.replace(r#""type": "PV""#, r#""type": "slack""#);
        assert!(matches!(parse_case(&text), Err(CaseError::Inconsistent(_))));
    }

    #[test]
    fn zero_inertia_rejected() {
        let text = THREE_BUS.replace(r#""H": 4.0"#, r#""H": 0.0"#);
        assert!(matches!(parse_case(&text), Err(CaseError::Inconsistent(_))));
    }

    #[test]
    fn schema_violation_is_malformed() {
        let text = THREE_BUS.replace(r#""susceptance": 8.0"#, r#""susceptance": "x""#);
        assert!(matches!(parse_case(&text), Err(CaseError::Malformed(_))));
        assert!(matches!(parse_case("{}"), Err(CaseError::Malformed(_))));
    }

    #[test]
    fn pv_without_generator_rejected() {
        let text = THREE_BUS.replace(
            r#"{"bus": 2, "H": 4.0, "R": 0.05, "T": 0.4, "K_D": 1.0, "has_governor": true}"#,
            "",
        );
        let text = text.replace("true},\n            \n", "true}\n");
        assert!(parse_case(&text).is_err());
    }

    #[test]
    fn single_line_flow_identity() {
        let text = r#"{
            "base_frequency_hz": 60.0,
            "relay": {"uf_hz": 59.5, "of_hz": 60.5},
            "buses": [{"id": 1, "type": "slack"}, {"id": 2, "type": "PQ", "p_load_base": 0.2}],
            "lines": [{"from": 1, "to": 2, "susceptance": 7.5}],
            "generators": [{"bus": 1, "H": 5.0, "R": 0.05, "T": 0.5, "K_D": 0.0}]
        }"#;
        let net = parse_case(text).unwrap();
        let s = susceptance_matrix(&net);
        assert_eq!(s[(0, 1)], 7.5);
        assert_eq!(s[(1, 0)], 7.5);
        assert_eq!(s[(0, 0)], 0.0);
        let l = laplacian(&net);
        let delta = nalgebra::DVector::from_vec(vec![0.3, 0.1]);
        let flow = &l * &delta;
        assert!((flow[0] - 7.5 * (0.3 - 0.1)).abs() < 1e-15);
        assert!((flow[0] + flow[1]).abs() < 1e-15);
    }

    #[test]
    fn disconnected_bus_has_zero_row() {
        let text: String = THREE_BUS
            .lines()
            .filter(|l| !l.contains(r#""to": 3"#))
            .map(|l| l.replace("10.0},", "10.0}") + "\n")
            .collect();
        let net = parse_case(&text).unwrap();
        let s = susceptance_matrix(&net);
        assert!(s.row(2).iter().all(|&v| v == 0.0));
        assert!(laplacian(&net).row(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_annihilates_ones() {
        let net = parse_case(THREE_BUS).unwrap();
        let l = laplacian(&net);
        let ones = nalgebra::DVector::from_element(3, 1.0);
        assert!((&l * ones).amax() < 1e-12);
        assert_eq!(l, l.transpose());
    }

    #[test]
    fn canonical_round_trip_is_bit_exact() {
        let net = parse_case(THREE_BUS).unwrap();
        let first = net.to_case_json();
        let again = parse_case(&first).unwrap();
        assert_eq!(again, net);
        assert_eq!(again.to_case_json(), first);
    }

    #[test]
    fn buses_by_load_orders_descending() {
        let net = parse_case(THREE_BUS).unwrap();
        assert_eq!(net.buses_by_load(), vec![BusId(3), BusId(1), BusId(2)]);
    }
}
