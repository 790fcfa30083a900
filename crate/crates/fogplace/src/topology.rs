//! Network topology: typed nodes, directed capacitated links, wiring
//! invariants, and deterministic min-hop paths.
//!
//! A topology file is JSON:
//!
//! ```json
//! {
//!   "nodes": [
//!     {"id": "cl01", "kind": "Clinic", "patients_ecg": 20, "patients_fall": 4},
//!     {"id": "onu01", "kind": "Onu", "fog_candidate": true}
//!   ],
//!   "links": [
//!     {"a": "cl01", "b": "bs01", "capacity_bps": 120960.0}
//!   ]
//! }
//! ```
//!
//! Links are directed; every link must have a reverse row (capacities may
//! differ, e.g. asymmetric GPON up/down shares). The loader enforces the
//! wiring legality table in [`NodeKind::may_link`], degree rules for the
//! access tree (a base station feeds exactly one ONU, an ONU exactly one
//! OLT), a single cloud storage node, and connectivity.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Role a node plays in the network. The role decides which power profile
/// applies by default and which neighbors are legal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Clinic,
    BaseStation,
    Onu,
    Olt,
    CenterAggSwitch,
    AggRouter,
    CoreRouter,
    CloudRouter,
    CloudSwitch,
    ContentServer,
    CloudStorage,
    EthernetSwitch,
}

impl NodeKind {
    /// All kinds, in catalog order.
    pub const ALL: [NodeKind; 12] = [
        NodeKind::Clinic,
        NodeKind::BaseStation,
        NodeKind::Onu,
        NodeKind::Olt,
        NodeKind::CenterAggSwitch,
        NodeKind::AggRouter,
        NodeKind::CoreRouter,
        NodeKind::CloudRouter,
        NodeKind::CloudSwitch,
        NodeKind::ContentServer,
        NodeKind::CloudStorage,
        NodeKind::EthernetSwitch,
    ];

    /// Stable name used in profile catalogs and error messages.
    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Clinic => "Clinic",
            NodeKind::BaseStation => "BaseStation",
            NodeKind::Onu => "Onu",
            NodeKind::Olt => "Olt",
            NodeKind::CenterAggSwitch => "CenterAggSwitch",
            NodeKind::AggRouter => "AggRouter",
            NodeKind::CoreRouter => "CoreRouter",
            NodeKind::CloudRouter => "CloudRouter",
            NodeKind::CloudSwitch => "CloudSwitch",
            NodeKind::ContentServer => "ContentServer",
            NodeKind::CloudStorage => "CloudStorage",
            NodeKind::EthernetSwitch => "EthernetSwitch",
        }
    }

    /// Wiring legality: which kinds may share a (bidirectional) link.
    ///
    /// The table follows the reference architecture: radio access
    /// (clinic-BS), GPON tree (BS-ONU-OLT), metro aggregation
    /// (OLT-switch-router), core, and the cloud tail ending at the storage
    /// array. Ethernet switches may be spliced next to any server-hosting
    /// location.
    pub fn may_link(self, other: NodeKind) -> bool {
        use NodeKind::*;
        let pair = if self <= other { (self, other) } else { (other, self) };
        matches!(
            pair,
            (Clinic, BaseStation)
                | (BaseStation, Onu)
                | (Onu, Olt)
                | (Olt, CenterAggSwitch)
                | (CenterAggSwitch, AggRouter)
                | (AggRouter, CoreRouter)
                | (CoreRouter, CloudRouter)
                | (CloudRouter, CloudSwitch)
                | (CloudSwitch, ContentServer)
                | (ContentServer, CloudStorage)
                | (Onu, EthernetSwitch)
                | (Olt, EthernetSwitch)
                | (CenterAggSwitch, EthernetSwitch)
                | (CloudSwitch, EthernetSwitch)
        )
    }
}

/// One network element.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    /// Profile catalog entry overriding the kind's default, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    /// Patients reporting ECG records from this node (clinics only).
    #[serde(default, skip_serializing_if = "is_zero")]
    pub patients_ecg: u32,
    /// Patients covered by fall-detection video from this node.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub patients_fall: u32,
    /// Whether a processing server may be attached here in fog mode.
    #[serde(default, skip_serializing_if = "is_false")]
    pub fog_candidate: bool,
}

impl Node {
    /// A non-clinic node with no profile override.
    pub fn plain(id: &str, kind: NodeKind) -> Self {
        Self {
            id: id.to_string(),
            kind,
            profile: None,
            patients_ecg: 0,
            patients_fall: 0,
            fog_candidate: false,
        }
    }

    /// A clinic with its reporting populations.
    pub fn clinic(id: &str, patients_ecg: u32, patients_fall: u32) -> Self {
        Self {
            patients_ecg,
            patients_fall,
            ..Self::plain(id, NodeKind::Clinic)
        }
    }
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

fn is_false(v: &bool) -> bool {
    !*v
}

/// One directed capacitated link.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Link {
    pub a: String,
    pub b: String,
    pub capacity_bps: f64,
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("cannot read topology file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed topology JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("duplicate node id {0:?}")]
    DuplicateNode(String),
    #[error("link references unknown node {0:?}")]
    UnknownEndpoint(String),
    #[error("link from {0:?} to itself")]
    SelfLoop(String),
    #[error("duplicate link {0:?} -> {1:?}")]
    DuplicateLink(String, String),
    #[error("link {0:?} -> {1:?} has no reverse row")]
    MissingReverse(String, String),
    #[error("link {0:?} -> {1:?} has non-positive capacity")]
    BadCapacity(String, String),
    #[error("illegal wiring: {0} {1:?} may not link {2} {3:?}")]
    IllegalAdjacency(&'static str, String, &'static str, String),
    #[error("base station {0:?} must attach to exactly one Onu (found {1})")]
    BaseStationDegree(String, usize),
    #[error("onu {0:?} must attach to exactly one Olt (found {1})")]
    OnuDegree(String, usize),
    #[error("expected exactly one CloudStorage node, found {0}")]
    StorageCount(usize),
    #[error("topology is not connected: {0:?} unreachable from {1:?}")]
    Disconnected(String, String),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("no path from {0:?} to {1:?}")]
    NoPath(String, String),
    #[error("patients assigned to non-clinic node {0:?}")]
    PatientsOnNonClinic(String),
}

/// Validated network graph with deterministic adjacency order.
///
/// Serializes as `{"nodes": [...], "links": [...]}`; deserializing
/// re-runs full validation and index construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawTopology", into = "RawTopology")]
pub struct Topology {
    nodes: Vec<Node>,
    links: Vec<Link>,
    index: BTreeMap<String, usize>,
    /// Neighbor ids per node id, sorted ascending.
    adjacency: BTreeMap<String, Vec<String>>,
    capacity: BTreeMap<(String, String), f64>,
}

/// Wire form of a topology: exactly the JSON schema.
#[derive(Clone, Serialize, Deserialize)]
struct RawTopology {
    nodes: Vec<Node>,
    links: Vec<Link>,
}

impl TryFrom<RawTopology> for Topology {
    type Error = TopologyError;

    fn try_from(raw: RawTopology) -> Result<Self, TopologyError> {
        Topology::new(raw.nodes, raw.links)
    }
}

impl From<Topology> for RawTopology {
    fn from(t: Topology) -> RawTopology {
        RawTopology {
            nodes: t.nodes,
            links: t.links,
        }
    }
}

impl Topology {
    /// Builds and validates a topology from parts.
    pub fn new(nodes: Vec<Node>, links: Vec<Link>) -> Result<Self, TopologyError> {
        let mut index = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(TopologyError::DuplicateNode(n.id.clone()));
            }
            if n.kind != NodeKind::Clinic && (n.patients_ecg > 0 || n.patients_fall > 0) {
                return Err(TopologyError::PatientsOnNonClinic(n.id.clone()));
            }
        }

        let mut capacity = BTreeMap::new();
        let mut adjacency: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for l in &links {
            let ia = *index
                .get(&l.a)
                .ok_or_else(|| TopologyError::UnknownEndpoint(l.a.clone()))?;
            let ib = *index
                .get(&l.b)
                .ok_or_else(|| TopologyError::UnknownEndpoint(l.b.clone()))?;
            if l.a == l.b {
                return Err(TopologyError::SelfLoop(l.a.clone()));
            }
            if !(l.capacity_bps > 0.0) {
                return Err(TopologyError::BadCapacity(l.a.clone(), l.b.clone()));
            }
            let (ka, kb) = (nodes[ia].kind, nodes[ib].kind);
            if !ka.may_link(kb) {
                return Err(TopologyError::IllegalAdjacency(
                    ka.name(),
                    l.a.clone(),
                    kb.name(),
                    l.b.clone(),
                ));
            }
            if capacity
                .insert((l.a.clone(), l.b.clone()), l.capacity_bps)
                .is_some()
            {
                return Err(TopologyError::DuplicateLink(l.a.clone(), l.b.clone()));
            }
        }
        for (a, b) in capacity.keys() {
            if !capacity.contains_key(&(b.clone(), a.clone())) {
                return Err(TopologyError::MissingReverse(a.clone(), b.clone()));
            }
            adjacency.entry(a.clone()).or_default().push(b.clone());
        }
        for neigh in adjacency.values_mut() {
            neigh.sort();
            neigh.dedup();
        }

        let topo = Topology {
            nodes,
            links,
            index,
            adjacency,
            capacity,
        };
        topo.check_degrees()?;
        topo.check_connected()?;
        Ok(topo)
    }

    fn check_degrees(&self) -> Result<(), TopologyError> {
        for n in &self.nodes {
            let count_kind = |k: NodeKind| {
                self.neighbors(&n.id)
                    .iter()
                    .filter(|m| self.node(m).map(|x| x.kind) == Some(k))
                    .count()
            };
            match n.kind {
                NodeKind::BaseStation => {
                    let onus = count_kind(NodeKind::Onu);
                    if onus != 1 {
                        return Err(TopologyError::BaseStationDegree(n.id.clone(), onus));
                    }
                }
                NodeKind::Onu => {
                    let olts = count_kind(NodeKind::Olt);
                    if olts != 1 {
                        return Err(TopologyError::OnuDegree(n.id.clone(), olts));
                    }
                }
                _ => {}
            }
        }
        let storages = self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::CloudStorage)
            .count();
        if storages != 1 {
            return Err(TopologyError::StorageCount(storages));
        }
        Ok(())
    }

    fn check_connected(&self) -> Result<(), TopologyError> {
        let start = match self.nodes.first() {
            Some(n) => &n.id,
            None => return Err(TopologyError::StorageCount(0)),
        };
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([start.clone()]);
        seen.insert(start.clone());
        while let Some(cur) = queue.pop_front() {
            for next in self.neighbors(&cur) {
                if seen.insert(next.clone()) {
                    queue.push_back(next.clone());
                }
            }
        }
        for n in &self.nodes {
            if !seen.contains(&n.id) {
                return Err(TopologyError::Disconnected(n.id.clone(), start.clone()));
            }
        }
        Ok(())
    }

    /// Loads and validates a topology JSON file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TopologyError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Parses and validates topology JSON.
    pub fn from_json(text: &str) -> Result<Self, TopologyError> {
        let raw: RawTopology = serde_json::from_str(text)?;
        Self::new(raw.nodes, raw.links)
    }

    /// Serializes back to the schema accepted by [`Topology::from_json`].
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Neighbor ids of `id`, sorted ascending. Empty for unknown nodes.
    pub fn neighbors(&self, id: &str) -> &[String] {
        self.adjacency.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Directed capacity of the link `a -> b`, if it exists.
    pub fn capacity(&self, a: &str, b: &str) -> Option<f64> {
        self.capacity.get(&(a.to_string(), b.to_string())).copied()
    }

    /// All nodes of one kind, in file order.
    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(move |n| n.kind == kind)
    }

    /// Clinic nodes, file order.
    pub fn clinics(&self) -> impl Iterator<Item = &Node> {
        self.nodes_of_kind(NodeKind::Clinic)
    }

    /// Fog-candidate node ids, sorted ascending.
    pub fn fog_candidates(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .nodes
            .iter()
            .filter(|n| n.fog_candidate)
            .map(|n| n.id.clone())
            .collect();
        ids.sort();
        ids
    }

    /// The unique cloud storage node id.
    pub fn storage_node(&self) -> &str {
        self.nodes
            .iter()
            .find(|n| n.kind == NodeKind::CloudStorage)
            .map(|n| n.id.as_str())
            .expect("validated topology has one CloudStorage")
    }

    /// Hop count of the min-hop path from `a` to `b`.
    pub fn hop_distance(&self, a: &str, b: &str) -> Result<usize, TopologyError> {
        Ok(self.min_hop_path(a, b)?.len() - 1)
    }

    /// Minimum-hop path from `a` to `b` inclusive.
    ///
    /// Clinics terminate traffic; they may start or end a path but never
    /// relay, so paths do not tunnel between base stations through a
    /// clinic's two radio links. Among equal-length paths, returns the
    /// lexicographically smallest node-id sequence, so routing is
    /// reproducible across runs and platforms.
    pub fn min_hop_path(&self, a: &str, b: &str) -> Result<Vec<String>, TopologyError> {
        for id in [a, b] {
            if !self.contains(id) {
                return Err(TopologyError::UnknownNode(id.to_string()));
            }
        }
        if a == b {
            return Ok(vec![a.to_string()]);
        }
        let is_terminal =
            |id: &str| self.node(id).map(|n| n.kind) == Some(NodeKind::Clinic);
        // Distances to b; then walk from a always picking the smallest id
        // that stays on a shortest path. The greedy walk is exactly the
        // lexicographic minimum because every candidate step preserves
        // reachability in the remaining distance.
        let mut dist: BTreeMap<&str, usize> = BTreeMap::new();
        dist.insert(b, 0);
        let mut queue = VecDeque::from([b]);
        while let Some(cur) = queue.pop_front() {
            if cur != b && is_terminal(cur) {
                continue; // labeled, but may not spread labels
            }
            let d = dist[cur];
            for next in self.neighbors(cur) {
                if !dist.contains_key(next.as_str()) {
                    dist.insert(next, d + 1);
                    queue.push_back(next);
                }
            }
        }
        let mut remaining = match dist.get(a) {
            Some(&d) => d,
            None => return Err(TopologyError::NoPath(a.to_string(), b.to_string())),
        };
        let mut path = vec![a.to_string()];
        let mut cur = a.to_string();
        while remaining > 0 {
            let step = self
                .neighbors(&cur)
                .iter()
                .find(|n| {
                    dist.get(n.as_str()) == Some(&(remaining - 1))
                        && (remaining == 1 || !is_terminal(n))
                })
                .expect("shortest path step exists")
                .clone();
            path.push(step.clone());
            cur = step;
            remaining -= 1;
        }
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: &str, kind: NodeKind) -> Node {
        Node {
            id: id.into(),
            kind,
            profile: None,
            patients_ecg: 0,
            patients_fall: 0,
            fog_candidate: false,
        }
    }

    fn link(a: &str, b: &str, cap: f64) -> Vec<Link> {
        vec![
            Link {
                a: a.into(),
                b: b.into(),
                capacity_bps: cap,
            },
            Link {
                a: b.into(),
                b: a.into(),
                capacity_bps: cap,
            },
        ]
    }

    /// Two ONUs under one OLT, two BSs, one clinic per BS, cloud tail.
    fn small() -> Topology {
        let mut nodes = vec![
            node("cl1", NodeKind::Clinic),
            node("cl2", NodeKind::Clinic),
            node("bs1", NodeKind::BaseStation),
            node("bs2", NodeKind::BaseStation),
            node("onu1", NodeKind::Onu),
            node("onu2", NodeKind::Onu),
            node("olt", NodeKind::Olt),
            node("cas", NodeKind::CenterAggSwitch),
            node("ar", NodeKind::AggRouter),
            node("cr", NodeKind::CoreRouter),
            node("clr", NodeKind::CloudRouter),
            node("cls", NodeKind::CloudSwitch),
            node("cs", NodeKind::ContentServer),
            node("cst", NodeKind::CloudStorage),
        ];
        nodes[0].patients_ecg = 5;
        nodes[1].patients_ecg = 7;
        let mut links = Vec::new();
        links.extend(link("cl1", "bs1", 120960.0));
        links.extend(link("cl1", "bs2", 120960.0));
        links.extend(link("cl2", "bs2", 120960.0));
        links.extend(link("bs1", "onu1", 3.0e6));
        links.extend(link("bs2", "onu2", 3.0e6));
        links.extend(link("onu1", "olt", 117187.5));
        links.extend(link("onu2", "olt", 117187.5));
        links.extend(link("olt", "cas", 3.0e7));
        links.extend(link("cas", "ar", 1.2e8));
        links.extend(link("ar", "cr", 3.0e8));
        links.extend(link("cr", "clr", 3.0e8));
        links.extend(link("clr", "cls", 9.6e8));
        links.extend(link("cls", "cs", 5.4e6));
        links.extend(link("cs", "cst", 5.4e6));
        Topology::new(nodes, links).unwrap()
    }

    #[test]
    fn loads_and_indexes() {
        let t = small();
        assert_eq!(t.nodes().len(), 14);
        assert_eq!(t.node("olt").unwrap().kind, NodeKind::Olt);
        assert_eq!(t.storage_node(), "cst");
        assert_eq!(t.capacity("onu1", "olt"), Some(117187.5));
        assert_eq!(t.capacity("olt", "onu1"), Some(117187.5));
        assert_eq!(t.neighbors("cl1"), ["bs1", "bs2"]);
    }

    #[test]
    fn rejects_missing_reverse() {
        let nodes = vec![node("cl1", NodeKind::Clinic), node("bs1", NodeKind::BaseStation)];
        let links = vec![Link {
            a: "cl1".into(),
            b: "bs1".into(),
            capacity_bps: 1.0,
        }];
        assert!(matches!(
            Topology::new(nodes, links),
            Err(TopologyError::MissingReverse(..))
        ));
    }

    #[test]
    fn rejects_illegal_adjacency() {
        let nodes = vec![node("cl1", NodeKind::Clinic), node("olt", NodeKind::Olt)];
        let links = link("cl1", "olt", 1.0);
        assert!(matches!(
            Topology::new(nodes, links),
            Err(TopologyError::IllegalAdjacency(..))
        ));
    }

    #[test]
    fn rejects_bs_with_two_onus() {
        let mut nodes = vec![
            node("bs1", NodeKind::BaseStation),
            node("onu1", NodeKind::Onu),
            node("onu2", NodeKind::Onu),
            node("olt", NodeKind::Olt),
            node("cst", NodeKind::CloudStorage),
        ];
        nodes[4].kind = NodeKind::CloudStorage;
        let mut links = Vec::new();
        links.extend(link("bs1", "onu1", 1.0));
        links.extend(link("bs1", "onu2", 1.0));
        links.extend(link("onu1", "olt", 1.0));
        links.extend(link("onu2", "olt", 1.0));
        let err = Topology::new(nodes, links).unwrap_err();
        assert!(matches!(err, TopologyError::BaseStationDegree(..)));
    }

    #[test]
    fn rejects_duplicate_node_and_link() {
        let nodes = vec![node("a", NodeKind::Onu), node("a", NodeKind::Onu)];
        assert!(matches!(
            Topology::new(nodes, vec![]),
            Err(TopologyError::DuplicateNode(..))
        ));

        let nodes = vec![node("onu1", NodeKind::Onu), node("olt", NodeKind::Olt)];
        let mut links = link("onu1", "olt", 1.0);
        links.push(links[0].clone());
        assert!(matches!(
            Topology::new(nodes, links),
            Err(TopologyError::DuplicateLink(..))
        ));
    }

    #[test]
    fn rejects_disconnected() {
        let nodes = vec![
            node("onu1", NodeKind::Onu),
            node("olt", NodeKind::Olt),
            node("onu2", NodeKind::Onu),
            node("olt2", NodeKind::Olt),
            node("cst", NodeKind::CloudStorage),
        ];
        let mut links = link("onu1", "olt", 1.0);
        links.extend(link("onu2", "olt2", 1.0));
        let err = Topology::new(nodes, links).unwrap_err();
        assert!(matches!(
            err,
            TopologyError::Disconnected(..) | TopologyError::StorageCount(..)
        ));
    }

    #[test]
    fn min_hop_prefers_lexicographic_tie() {
        // cl1 reaches olt via bs1/onu1 or bs2/onu2, both 3 hops; the
        // smaller id sequence must win.
        let t = small();
        let path = t.min_hop_path("cl1", "olt").unwrap();
        assert_eq!(path, ["cl1", "bs1", "onu1", "olt"]);
        // Storage path is unique.
        let path = t.min_hop_path("olt", "cst").unwrap();
        assert_eq!(
            path,
            ["olt", "cas", "ar", "cr", "clr", "cls", "cs", "cst"]
        );
    }

    #[test]
    fn min_hop_errors() {
        let t = small();
        assert!(matches!(
            t.min_hop_path("cl1", "nope"),
            Err(TopologyError::UnknownNode(..))
        ));
        assert_eq!(t.min_hop_path("cl1", "cl1").unwrap(), ["cl1"]);
    }

    #[test]
    fn json_roundtrip() {
        let t = small();
        let text = t.to_json();
        let back = Topology::from_json(&text).unwrap();
        assert_eq!(back.nodes().len(), t.nodes().len());
        assert_eq!(back.links().len(), t.links().len());
        assert_eq!(
            back.min_hop_path("cl1", "cst").unwrap(),
            t.min_hop_path("cl1", "cst").unwrap()
        );
    }

    #[test]
    fn rejects_patients_on_non_clinic() {
        let mut nodes = vec![node("onu1", NodeKind::Onu), node("olt", NodeKind::Olt)];
        nodes[0].patients_ecg = 3;
        let links = link("onu1", "olt", 1.0);
        assert!(matches!(
            Topology::new(nodes, links),
            Err(TopologyError::PatientsOnNonClinic(..))
        ));
    }
}
