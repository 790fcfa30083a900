//! A candidate answer: where the servers sit and how every patient's
//! three phases are routed.
//!
//! Flows are stored as routed groups (a patient count plus an explicit
//! node sequence) rather than per-edge rate maps: the access network is a
//! tree, so a group's route is the whole story, and both the evaluator
//! and the validator can recompute per-node loads and per-edge rates from
//! it without ambiguity.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{Topology, TopologyError};

#[derive(Debug, Error)]
pub enum SolutionError {
    #[error("cannot read solution file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed solution JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Route(#[from] TopologyError),
}

/// Raw-record upload for a patient group: clinic -> base station -> host.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UploadFlow {
    pub clinic: String,
    pub bs: String,
    pub host: String,
    pub patients: u32,
    /// Node sequence `[clinic, bs, ..., host]`.
    pub route: Vec<String>,
}

/// Analyzed-result feedback for a patient group: host -> base station ->
/// clinic.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeedbackFlow {
    pub host: String,
    pub bs: String,
    pub clinic: String,
    pub patients: u32,
    /// Node sequence `[host, ..., bs, clinic]`.
    pub route: Vec<String>,
}

/// Archive trickle for all results produced at a host.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StorageFlow {
    pub host: String,
    pub patients: u32,
    /// Node sequence `[host, ..., storage]`.
    pub route: Vec<String>,
}

/// Complete placement plus routing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlacementSolution {
    /// Servers per hosting node; only nodes actually hosting appear.
    pub servers: BTreeMap<String, u32>,
    pub upload: Vec<UploadFlow>,
    pub feedback: Vec<FeedbackFlow>,
    pub storage: Vec<StorageFlow>,
}

impl PlacementSolution {
    /// The do-nothing solution (zero traffic, zero servers).
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SolutionError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serializes")
    }

    /// Patients assigned per (clinic, host): the placement decision.
    pub fn assignments(&self) -> BTreeMap<(String, String), u32> {
        let mut map = BTreeMap::new();
        for f in &self.upload {
            *map.entry((f.clinic.clone(), f.host.clone())).or_insert(0) += f.patients;
        }
        map
    }

    /// Patients uploading via each (clinic, base station) radio pair.
    pub fn upload_radio(&self) -> BTreeMap<(String, String), u32> {
        let mut map = BTreeMap::new();
        for f in &self.upload {
            *map.entry((f.clinic.clone(), f.bs.clone())).or_insert(0) += f.patients;
        }
        map
    }

    /// Patients receiving feedback via each (base station, clinic) pair.
    pub fn feedback_radio(&self) -> BTreeMap<(String, String), u32> {
        let mut map = BTreeMap::new();
        for f in &self.feedback {
            *map.entry((f.bs.clone(), f.clinic.clone())).or_insert(0) += f.patients;
        }
        map
    }

    /// Patients processed per host.
    pub fn hosted_patients(&self) -> BTreeMap<String, u32> {
        let mut map = BTreeMap::new();
        for f in &self.upload {
            *map.entry(f.host.clone()).or_insert(0) += f.patients;
        }
        map
    }

    /// Sorts flows and merges identical routes so equal solutions compare
    /// equal byte-for-byte.
    pub fn normalize(&mut self) {
        self.servers.retain(|_, v| *v > 0);
        self.upload.retain(|f| f.patients > 0);
        self.feedback.retain(|f| f.patients > 0);
        self.storage.retain(|f| f.patients > 0);
        self.upload.sort();
        self.feedback.sort();
        self.storage.sort();
        self.upload.dedup_by(|b, a| {
            let same = a.clinic == b.clinic && a.bs == b.bs && a.host == b.host && a.route == b.route;
            if same {
                a.patients += b.patients;
            }
            same
        });
        self.feedback.dedup_by(|b, a| {
            let same = a.host == b.host && a.bs == b.bs && a.clinic == b.clinic && a.route == b.route;
            if same {
                a.patients += b.patients;
            }
            same
        });
        self.storage.dedup_by(|b, a| {
            let same = a.host == b.host && a.route == b.route;
            if same {
                a.patients += b.patients;
            }
            same
        });
    }

    /// Server counts over a fixed candidate order, for lexicographic
    /// tie-breaking between equal-energy solutions.
    pub fn placement_vector(&self, candidates: &[String]) -> Vec<u32> {
        candidates
            .iter()
            .map(|c| self.servers.get(c).copied().unwrap_or(0))
            .collect()
    }
}

/// Builds an upload flow along the min-hop route `bs -> host`, with the
/// radio hop prepended.
pub fn routed_upload(
    topo: &Topology,
    clinic: &str,
    bs: &str,
    host: &str,
    patients: u32,
) -> Result<UploadFlow, TopologyError> {
    let mut route = vec![clinic.to_string()];
    route.extend(topo.min_hop_path(bs, host)?);
    Ok(UploadFlow {
        clinic: clinic.to_string(),
        bs: bs.to_string(),
        host: host.to_string(),
        patients,
        route,
    })
}

/// Builds a feedback flow along the min-hop route `host -> bs`, with the
/// radio hop appended.
pub fn routed_feedback(
    topo: &Topology,
    host: &str,
    bs: &str,
    clinic: &str,
    patients: u32,
) -> Result<FeedbackFlow, TopologyError> {
    let mut route = topo.min_hop_path(host, bs)?;
    route.push(clinic.to_string());
    Ok(FeedbackFlow {
        host: host.to_string(),
        bs: bs.to_string(),
        clinic: clinic.to_string(),
        patients,
        route,
    })
}

/// Builds the archive flow from a host to the storage node.
pub fn routed_storage(
    topo: &Topology,
    host: &str,
    patients: u32,
) -> Result<StorageFlow, TopologyError> {
    let route = topo.min_hop_path(host, topo.storage_node())?;
    Ok(StorageFlow {
        host: host.to_string(),
        patients,
        route,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn topo() -> Topology {
        Topology::from_json(crate::instance::tests::TOY_TOPOLOGY).unwrap()
    }

    #[test]
    fn routed_builders_take_min_hop() {
        let t = topo();
        let up = routed_upload(&t, "cl2", "bs2", "olt", 7).unwrap();
        assert_eq!(up.route, ["cl2", "bs2", "onu2", "olt"]);
        let fb = routed_feedback(&t, "olt", "bs1", "cl1", 5).unwrap();
        assert_eq!(fb.route, ["olt", "onu1", "bs1", "cl1"]);
        let st = routed_storage(&t, "olt", 12).unwrap();
        assert_eq!(st.route.first().map(String::as_str), Some("olt"));
        assert_eq!(st.route.last().map(String::as_str), Some("cst"));
        assert_eq!(st.route.len(), 8);
    }

    #[test]
    fn aggregation_helpers() {
        let t = topo();
        let mut sol = PlacementSolution::empty();
        sol.servers.insert("olt".into(), 1);
        sol.upload.push(routed_upload(&t, "cl1", "bs1", "olt", 3).unwrap());
        sol.upload.push(routed_upload(&t, "cl1", "bs2", "olt", 2).unwrap());
        sol.upload.push(routed_upload(&t, "cl2", "bs2", "olt", 7).unwrap());
        assert_eq!(sol.assignments()[&("cl1".into(), "olt".into())], 5);
        assert_eq!(sol.upload_radio()[&("cl1".into(), "bs2".into())], 2);
        assert_eq!(sol.hosted_patients()["olt"], 12);
    }

    #[test]
    fn normalize_merges_and_sorts() {
        let t = topo();
        let mut sol = PlacementSolution::empty();
        sol.upload.push(routed_upload(&t, "cl2", "bs2", "olt", 4).unwrap());
        sol.upload.push(routed_upload(&t, "cl1", "bs1", "olt", 3).unwrap());
        sol.upload.push(routed_upload(&t, "cl2", "bs2", "olt", 3).unwrap());
        sol.servers.insert("onu1".into(), 0);
        sol.normalize();
        assert_eq!(sol.upload.len(), 2);
        assert_eq!(sol.upload[0].clinic, "cl1");
        assert_eq!(sol.upload[1].patients, 7);
        assert!(sol.servers.is_empty());
    }

    #[test]
    fn placement_vector_orders_by_candidates() {
        let mut sol = PlacementSolution::empty();
        sol.servers.insert("olt".into(), 2);
        sol.servers.insert("onu2".into(), 1);
        let cands = ["olt".to_string(), "onu1".into(), "onu2".into()];
        assert_eq!(sol.placement_vector(&cands), [2, 0, 1]);
    }

    #[test]
    fn json_roundtrip() {
        let t = topo();
        let mut sol = PlacementSolution::empty();
        sol.servers.insert("olt".into(), 1);
        sol.upload.push(routed_upload(&t, "cl1", "bs1", "olt", 5).unwrap());
        sol.feedback.push(routed_feedback(&t, "olt", "bs2", "cl1", 5).unwrap());
        sol.storage.push(routed_storage(&t, "olt", 5).unwrap());
        let back: PlacementSolution = serde_json::from_str(&sol.to_json()).unwrap();
        assert_eq!(back, sol);
    }
}
