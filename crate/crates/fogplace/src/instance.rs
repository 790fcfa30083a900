//! A solvable placement problem: topology, device catalog, application,
//! derived phase parameters, and placement limits, bundled together.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::power::ProfileCatalog;
use crate::topology::{NodeKind, Topology};
use crate::traffic::{AppProfile, PhaseParams};

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("cannot read instance file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed instance JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("no placement candidates: {0}")]
    NoCandidates(&'static str),
    #[error("patient map references unknown clinic {0:?}")]
    UnknownClinic(String),
    #[error("omega_max must be at least 1")]
    BadOmega,
    #[error("clinic {0:?} has no base-station link")]
    IsolatedClinic(String),
}

/// Where processing servers may be placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlacementMode {
    /// Fog-optimized: candidates are the flagged access-network nodes.
    Foa,
    /// Conventional: candidates are the cloud switches.
    Ca,
}

/// How many servers one hosting node may run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "cap")]
pub enum PhiMode {
    /// Exactly one server per chosen node, no Ethernet switch needed.
    Fixed,
    /// Up to `cap` servers per node (None = as many as demand requires),
    /// each chosen node paying for a dedicated Ethernet switch.
    Variable(Option<u32>),
}

impl PhiMode {
    /// True when chosen nodes carry an Ethernet switch for their servers.
    pub fn uses_ethernet_switch(self) -> bool {
        matches!(self, PhiMode::Variable(_))
    }
}

/// One fully specified placement problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Instance {
    pub topology: Topology,
    pub catalog: ProfileCatalog,
    pub app: AppProfile,
    pub phases: PhaseParams,
    pub mode: PlacementMode,
    pub phi_mode: PhiMode,
    /// Patients one server can handle per period.
    pub omega_max: u32,
    /// Result bits one server may archive per period.
    pub storage_cap_bits: f64,
    /// Patients per clinic id (already scaled for the scenario point).
    pub patients: BTreeMap<String, u32>,
}

impl Instance {
    /// Validates cross-references after construction.
    pub fn check(&self) -> Result<(), InstanceError> {
        if self.omega_max == 0 {
            return Err(InstanceError::BadOmega);
        }
        if self.candidates().is_empty() {
            return Err(InstanceError::NoCandidates(match self.mode {
                PlacementMode::Foa => "no node has fog_candidate set",
                PlacementMode::Ca => "topology has no CloudSwitch",
            }));
        }
        for (clinic, &count) in &self.patients {
            let node = self
                .topology
                .node(clinic)
                .ok_or_else(|| InstanceError::UnknownClinic(clinic.clone()))?;
            if node.kind != NodeKind::Clinic {
                return Err(InstanceError::UnknownClinic(clinic.clone()));
            }
            if count > 0 && self.adjacent_base_stations(clinic).is_empty() {
                return Err(InstanceError::IsolatedClinic(clinic.clone()));
            }
        }
        Ok(())
    }

    /// Loads a self-contained instance JSON file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, InstanceError> {
        let inst: Instance = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        inst.check()?;
        Ok(inst)
    }

    /// Serializes to self-contained JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    /// Server-hosting candidates for the mode, sorted ascending.
    pub fn candidates(&self) -> Vec<String> {
        match self.mode {
            PlacementMode::Foa => self.topology.fog_candidates(),
            PlacementMode::Ca => {
                let mut ids: Vec<String> = self
                    .topology
                    .nodes_of_kind(NodeKind::CloudSwitch)
                    .map(|n| n.id.clone())
                    .collect();
                ids.sort();
                ids
            }
        }
    }

    /// Total patients across clinics.
    pub fn total_patients(&self) -> u32 {
        self.patients.values().sum()
    }

    /// Patients at one clinic (0 for unknown ids).
    pub fn patients_at(&self, clinic: &str) -> u32 {
        self.patients.get(clinic).copied().unwrap_or(0)
    }

    /// Clinics with at least one patient, sorted ascending.
    pub fn active_clinics(&self) -> Vec<String> {
        self.patients
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Minimum number of servers that can cover all patients.
    pub fn servers_needed(&self) -> u32 {
        self.total_patients().div_ceil(self.omega_max)
    }

    /// Upper bound on servers at one node.
    pub fn phi_cap(&self) -> u32 {
        let need = self.servers_needed().max(1);
        match self.phi_mode {
            PhiMode::Fixed => 1,
            PhiMode::Variable(cap) => cap.unwrap_or(need).min(need.max(1)).max(1),
        }
    }

    /// Base stations adjacent to a clinic, sorted ascending.
    pub fn adjacent_base_stations(&self, clinic: &str) -> Vec<String> {
        self.topology
            .neighbors(clinic)
            .iter()
            .filter(|n| {
                self.topology.node(n).map(|x| x.kind) == Some(NodeKind::BaseStation)
            })
            .cloned()
            .collect()
    }

    /// Patients one server can take, limited by compute capacity and by
    /// the archive volume its storage quota covers.
    pub fn per_server_patients(&self) -> u32 {
        let by_volume = (self.storage_cap_bits / self.app.result_bits).floor();
        let by_volume = if by_volume >= u32::MAX as f64 {
            u32::MAX
        } else {
            by_volume as u32
        };
        self.omega_max.min(by_volume)
    }

    /// Tight big-M for inbound phase traffic at a node: no node can carry
    /// more than the whole population's phase rate, nor more than its
    /// incoming capacity.
    pub fn big_m(&self, node: &str, per_patient_bps: f64) -> f64 {
        let population = self.total_patients() as f64 * per_patient_bps;
        let incoming: f64 = self
            .topology
            .neighbors(node)
            .iter()
            .filter_map(|j| self.topology.capacity(j, node))
            .sum();
        population.min(incoming)
    }

    /// Tight big-M for outbound phase traffic at a node.
    pub fn big_m_out(&self, node: &str, per_patient_bps: f64) -> f64 {
        let population = self.total_patients() as f64 * per_patient_bps;
        let outgoing: f64 = self
            .topology
            .neighbors(node)
            .iter()
            .filter_map(|j| self.topology.capacity(node, j))
            .sum();
        population.min(outgoing)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::traffic::derive_phases;

    fn toy() -> Instance {
        let topo = Topology::from_json(TOY_TOPOLOGY).unwrap();
        let app = AppProfile::ecg();
        let phases = derive_phases(&app, PlacementMode::Foa, 12, 12, 336.0).unwrap();
        let patients = topo
            .clinics()
            .map(|c| (c.id.clone(), c.patients_ecg))
            .collect();
        Instance {
            topology: topo,
            catalog: ProfileCatalog::reference(),
            app,
            phases,
            mode: PlacementMode::Foa,
            phi_mode: PhiMode::Fixed,
            omega_max: 12,
            storage_cap_bits: 4.0e12,
            patients,
        }
    }

    pub(crate) const TOY_TOPOLOGY: &str = r#"{
        "nodes": [
            {"id": "cl1", "kind": "Clinic", "patients_ecg": 5, "patients_fall": 2},
            {"id": "cl2", "kind": "Clinic", "patients_ecg": 7, "patients_fall": 3},
            {"id": "bs1", "kind": "BaseStation"},
            {"id": "bs2", "kind": "BaseStation"},
            {"id": "onu1", "kind": "Onu", "fog_candidate": true},
            {"id": "onu2", "kind": "Onu", "fog_candidate": true},
            {"id": "olt", "kind": "Olt", "fog_candidate": true},
            {"id": "cas", "kind": "CenterAggSwitch"},
            {"id": "ar", "kind": "AggRouter"},
            {"id": "cr", "kind": "CoreRouter"},
            {"id": "clr", "kind": "CloudRouter"},
            {"id": "cls", "kind": "CloudSwitch"},
            {"id": "cs", "kind": "ContentServer"},
            {"id": "cst", "kind": "CloudStorage"}
        ],
        "links": [
            {"a": "cl1", "b": "bs1", "capacity_bps": 120960.0},
            {"a": "bs1", "b": "cl1", "capacity_bps": 120960.0},
            {"a": "cl1", "b": "bs2", "capacity_bps": 120960.0},
            {"a": "bs2", "b": "cl1", "capacity_bps": 120960.0},
            {"a": "cl2", "b": "bs2", "capacity_bps": 120960.0},
            {"a": "bs2", "b": "cl2", "capacity_bps": 120960.0},
            {"a": "bs1", "b": "onu1", "capacity_bps": 3.0e6},
            {"a": "onu1", "b": "bs1", "capacity_bps": 3.0e6},
            {"a": "bs2", "b": "onu2", "capacity_bps": 3.0e6},
            {"a": "onu2", "b": "bs2", "capacity_bps": 3.0e6},
            {"a": "onu1", "b": "olt", "capacity_bps": 117187.5},
            {"a": "olt", "b": "onu1", "capacity_bps": 234375.0},
            {"a": "onu2", "b": "olt", "capacity_bps": 117187.5},
            {"a": "olt", "b": "onu2", "capacity_bps": 234375.0},
            {"a": "olt", "b": "cas", "capacity_bps": 3.0e7},
            {"a": "cas", "b": "olt", "capacity_bps": 3.0e7},
            {"a": "cas", "b": "ar", "capacity_bps": 1.2e8},
            {"a": "ar", "b": "cas", "capacity_bps": 1.2e8},
            {"a": "ar", "b": "cr", "capacity_bps": 3.0e8},
            {"a": "cr", "b": "ar", "capacity_bps": 3.0e8},
            {"a": "cr", "b": "clr", "capacity_bps": 3.0e8},
            {"a": "clr", "b": "cr", "capacity_bps": 3.0e8},
            {"a": "clr", "b": "cls", "capacity_bps": 9.6e8},
            {"a": "cls", "b": "clr", "capacity_bps": 9.6e8},
            {"a": "cls", "b": "cs", "capacity_bps": 5.4e6},
            {"a": "cs", "b": "cls", "capacity_bps": 5.4e6},
            {"a": "cs", "b": "cst", "capacity_bps": 5.4e6},
            {"a": "cst", "b": "cs", "capacity_bps": 5.4e6}
        ]
    }"#;

    #[test]
    fn candidates_by_mode() {
        let mut inst = toy();
        assert_eq!(inst.candidates(), ["olt", "onu1", "onu2"]);
        inst.mode = PlacementMode::Ca;
        assert_eq!(inst.candidates(), ["cls"]);
    }

    #[test]
    fn totals_and_caps() {
        let inst = toy();
        assert_eq!(inst.total_patients(), 12);
        assert_eq!(inst.servers_needed(), 1);
        assert_eq!(inst.phi_cap(), 1);
        let mut multi = toy();
        multi.omega_max = 5;
        multi.phi_mode = PhiMode::Variable(None);
        assert_eq!(multi.servers_needed(), 3);
        assert_eq!(multi.phi_cap(), 3);
        multi.phi_mode = PhiMode::Variable(Some(2));
        assert_eq!(multi.phi_cap(), 2);
    }

    #[test]
    fn big_m_is_capacity_clamped() {
        let inst = toy();
        // onu1's incoming links: bs1 3e6 + olt 234375 = 3234375; the
        // population bound 12 * 1344 is smaller.
        let m = inst.big_m("onu1", inst.phases.delta_a_bps);
        assert_eq!(m, 12.0 * 1344.0);
        // Storage phase at the content server is capacity-limited.
        let m = inst.big_m("cs", 1.0e9);
        assert_eq!(m, 5.4e6 * 2.0);
        // Outbound: the OLT can push at most both ONU downlinks plus the
        // metro uplink.
        let m = inst.big_m_out("olt", 1.0e9);
        assert_eq!(m, 234_375.0 * 2.0 + 3.0e7);
    }

    #[test]
    fn check_catches_bad_references() {
        let mut inst = toy();
        inst.patients.insert("ghost".into(), 3);
        assert!(matches!(
            inst.check(),
            Err(InstanceError::UnknownClinic(..))
        ));
        let mut inst = toy();
        inst.omega_max = 0;
        assert!(matches!(inst.check(), Err(InstanceError::BadOmega)));
    }

    #[test]
    fn json_roundtrip() {
        let inst = toy();
        let text = inst.to_json();
        let back: Instance = serde_json::from_str(&text).unwrap();
        back.check().unwrap();
        assert_eq!(back.total_patients(), 12);
        assert_eq!(back.candidates(), inst.candidates());
        assert_eq!(back.phases, inst.phases);
    }
}
