//! Energy accounting: the evaluator (what does this solution cost in
//! joules?) and an independent constraint validator (is it even legal?).
//!
//! The evaluator recomputes every activation flag and device load from
//! the solution's routed flows; nothing is trusted from the solver. Per
//! device and phase it charges `(attributed idle when active) + (load *
//! slope)`, times the phase duration, times the site PUE, times the
//! device redundancy. Special cases:
//!
//! * Base stations bill scheduled resource blocks (`prb_watt`), not bits.
//! * The storage array's load term is retained bits over its volume.
//! * Servers charge idle for all three phase windows plus full power for
//!   the processing time `m * patients + c * servers` at their host.
//! * When server counts per node are variable, each hosting node adds a
//!   dedicated Ethernet switch carrying exactly the host's own traffic.
//!
//! The validator shares no load-collection code with the evaluator: it
//! re-walks routes edge by edge and checks coverage, placement gating,
//! capacities, resource-block budgets, flow conservation residuals and
//! the storage activation identity from scratch.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::Instance;
use crate::power::PowerError;
use crate::solution::PlacementSolution;
use crate::topology::NodeKind;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("route references unknown node {0:?}")]
    UnknownNode(String),
    #[error(transparent)]
    Power(#[from] PowerError),
    #[error("node {0:?} carries load but has no device profile")]
    UnpoweredLoad(String),
}

/// Joules per network segment for one reporting cycle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// Base stations, ONUs, OLTs.
    pub access_j: f64,
    /// Aggregation switches and routers.
    pub metro_j: f64,
    /// Core routers.
    pub core_j: f64,
    /// Cloud routers, switches, content servers, storage arrays.
    pub cloud_j: f64,
    /// Dedicated Ethernet switches attaching servers to their hosts.
    pub fog_switch_j: f64,
    /// Processing servers.
    pub servers_j: f64,
}

impl EnergyBreakdown {
    /// Everything that moves bits: access + metro + core + cloud + the
    /// server-attachment switches.
    pub fn network_j(&self) -> f64 {
        self.access_j + self.metro_j + self.core_j + self.cloud_j + self.fog_switch_j
    }

    /// Grand total.
    pub fn total_j(&self) -> f64 {
        self.network_j() + self.servers_j
    }
}

impl fmt::Display for EnergyBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "access {:.1} J, metro {:.1} J, core {:.1} J, cloud {:.1} J, \
             switches {:.1} J, servers {:.1} J, total {:.1} J",
            self.access_j,
            self.metro_j,
            self.core_j,
            self.cloud_j,
            self.fog_switch_j,
            self.servers_j,
            self.total_j()
        )
    }
}

/// Per-node, per-phase load and activation state.
#[derive(Debug, Clone, Copy, Default)]
struct NodeLoads {
    /// Incoming upload-phase rate, bit/s.
    upload_in_bps: f64,
    /// Outgoing feedback-phase rate, bit/s.
    feedback_out_bps: f64,
    /// Incoming plus locally sourced storage-phase rate, bit/s.
    storage_bps: f64,
    active_upload: bool,
    active_feedback: bool,
    sources_storage: bool,
    receives_storage: bool,
}

impl NodeLoads {
    fn active_storage(&self) -> bool {
        self.sources_storage || self.receives_storage
    }
}

/// Evaluates the energy of a routed solution.
///
/// Returns an error only for structurally unusable solutions (unknown
/// nodes, missing profiles); legality questions belong to [`validate`].
pub fn evaluate(
    inst: &Instance,
    sol: &PlacementSolution,
) -> Result<EnergyBreakdown, EnergyError> {
    let phases = &inst.phases;
    let mut loads: BTreeMap<&str, NodeLoads> = BTreeMap::new();
    let mut radio_blocks: BTreeMap<&str, (u64, u64)> = BTreeMap::new();

    for f in &sol.upload {
        let bps = f.patients as f64 * phases.delta_a_bps;
        // Every node after the sourcing clinic receives the group.
        for hop in f.route.iter().skip(1) {
            let entry = loads.entry(hop).or_default();
            entry.upload_in_bps += bps;
            entry.active_upload = true;
        }
        radio_blocks.entry(&f.bs).or_default().0 +=
            f.patients as u64 * phases.ra_prbs as u64;
    }
    for f in &sol.feedback {
        let bps = f.patients as f64 * phases.delta_b_bps;
        // Every node before the receiving clinic retransmits the group.
        for hop in &f.route[..f.route.len().saturating_sub(1)] {
            let entry = loads.entry(hop).or_default();
            entry.feedback_out_bps += bps;
            entry.active_feedback = true;
        }
        radio_blocks.entry(&f.bs).or_default().1 +=
            f.patients as u64 * phases.rb_prbs as u64;
    }
    for f in &sol.storage {
        let bps = f.patients as f64 * phases.delta_c_bps;
        for (i, hop) in f.route.iter().enumerate() {
            let entry = loads.entry(hop).or_default();
            entry.storage_bps += bps;
            if i == 0 {
                entry.sources_storage = true;
            } else {
                entry.receives_storage = true;
            }
        }
    }

    let cat = &inst.catalog;
    let pue = &cat.pue;
    let (tau_a, tau_b, tau_c) = (phases.tau_a_s, phases.tau_b_s, phases.tau_c_s);
    let mut out = EnergyBreakdown::default();

    for (id, load) in &loads {
        let node = inst
            .topology
            .node(id)
            .ok_or_else(|| EnergyError::UnknownNode(id.to_string()))?;
        if node.kind == NodeKind::Clinic {
            continue; // patient handsets are out of scope
        }
        let prof = cat
            .device_for(node)
            .ok_or_else(|| EnergyError::UnpoweredLoad(id.to_string()))?;
        let red = prof.redundancy as f64;
        let idle = prof.attributed_idle_w();
        let gate = |on: bool| if on { 1.0 } else { 0.0 };

        let joules = match node.kind {
            NodeKind::BaseStation => {
                let (ba, bb) = radio_blocks.get(id).copied().unwrap_or((0, 0));
                (idle * gate(load.active_upload) + cat.radio.prb_watt * ba as f64) * tau_a
                    + (idle * gate(load.active_feedback) + cat.radio.prb_watt * bb as f64)
                        * tau_b
            }
            NodeKind::CloudStorage => {
                // Retained bits against the array's volume.
                let stored_bits = load.storage_bps * tau_c;
                let slope = (prof.max_power_w - prof.idle_power_w) / prof.capacity_bps;
                (idle * gate(load.active_upload) + load.upload_in_bps * slope) * tau_a
                    + (idle * gate(load.active_feedback) + load.feedback_out_bps * slope)
                        * tau_b
                    + (idle * gate(load.active_storage()) + stored_bits * slope) * tau_c
            }
            _ => {
                let epb = prof.energy_per_bit();
                (idle * gate(load.active_upload) + load.upload_in_bps * epb) * tau_a
                    + (idle * gate(load.active_feedback) + load.feedback_out_bps * epb)
                        * tau_b
                    + (idle * gate(load.active_storage()) + load.storage_bps * epb) * tau_c
            }
        };

        let (segment, site_pue) = segment_of(node.kind, pue.network, pue.datacenter);
        let joules = joules * site_pue * red;
        match segment {
            Segment::Access => out.access_j += joules,
            Segment::Metro => out.metro_j += joules,
            Segment::Core => out.core_j += joules,
            Segment::Cloud => out.cloud_j += joules,
        }
    }

    // Processing servers and, in variable-count deployments, the switch
    // that fans a host's traffic out to its servers.
    let server_prof = cat.server(&inst.app.name)?;
    let hosted = sol.hosted_patients();
    let window = tau_a + tau_b + tau_c;
    for (host, &count) in &sol.servers {
        if count == 0 {
            continue;
        }
        let patients = hosted.get(host).copied().unwrap_or(0);
        let tau_p = inst.app.processing_time(patients, count);
        out.servers_j += (server_prof.idle_power_w * count as f64 * window
            + server_prof.max_power_w * tau_p)
            * pue.datacenter;

        // A cloud-rack host hangs its servers off the cloud switch itself,
        // which is already billed above; only fog hosts add a dedicated
        // attachment switch.
        let host_kind = inst.topology.node(host).map(|n| n.kind);
        if inst.phi_mode.uses_ethernet_switch() && host_kind != Some(NodeKind::CloudSwitch) {
            let es = cat.device("EthernetSwitch")?;
            let idle = es.attributed_idle_w();
            let epb = es.energy_per_bit();
            let pat = patients as f64;
            out.fog_switch_j += ((idle + pat * phases.delta_a_bps * epb) * tau_a
                + (idle + pat * phases.delta_b_bps * epb) * tau_b
                + (idle + pat * phases.delta_c_bps * epb) * tau_c)
                * pue.network
                * es.redundancy as f64;
        }
    }

    Ok(out)
}

enum Segment {
    Access,
    Metro,
    Core,
    Cloud,
}

/// Facility overhead multiplier for a node kind's site.
pub(crate) fn site_pue(kind: NodeKind, pue: &crate::power::Pue) -> f64 {
    segment_of(kind, pue.network, pue.datacenter).1
}

fn segment_of(kind: NodeKind, network_pue: f64, dc_pue: f64) -> (Segment, f64) {
    match kind {
        NodeKind::Clinic
        | NodeKind::BaseStation
        | NodeKind::Onu
        | NodeKind::Olt
        | NodeKind::EthernetSwitch => (Segment::Access, network_pue),
        NodeKind::CenterAggSwitch | NodeKind::AggRouter => (Segment::Metro, network_pue),
        NodeKind::CoreRouter => (Segment::Core, network_pue),
        NodeKind::CloudRouter
        | NodeKind::CloudSwitch
        | NodeKind::ContentServer
        | NodeKind::CloudStorage => (Segment::Cloud, dc_pue),
    }
}

/// One broken rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub detail: String,
}

/// Outcome of [`validate`]: empty means legal.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, rule: &str, detail: String) {
        self.violations.push(Violation {
            rule: rule.to_string(),
            detail,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "valid");
        }
        writeln!(f, "{} violation(s):", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  [{}] {}", v.rule, v.detail)?;
        }
        Ok(())
    }
}

/// Checks a solution against every model constraint, independently of the
/// evaluator. Returns all violations found, not just the first.
pub fn validate(inst: &Instance, sol: &PlacementSolution) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let topo = &inst.topology;
    let phases = &inst.phases;
    let candidates = inst.candidates();

    // Route shape: endpoints match, hops are links, no repeats.
    let check_route = |route: &[String], what: &str, rep: &mut ValidationReport| {
        if route.len() < 2 {
            rep.push("route_shape", format!("{what}: route too short"));
            return;
        }
        let mut seen = std::collections::BTreeSet::new();
        for id in route {
            if !topo.contains(id) {
                rep.push("route_shape", format!("{what}: unknown node {id:?}"));
                return;
            }
            if !seen.insert(id) {
                rep.push("route_simple", format!("{what}: repeated node {id:?}"));
                return;
            }
        }
        for pair in route.windows(2) {
            if topo.capacity(&pair[0], &pair[1]).is_none() {
                rep.push(
                    "route_edges",
                    format!("{what}: no link {:?} -> {:?}", pair[0], pair[1]),
                );
            }
        }
        for id in &route[1..route.len() - 1] {
            if topo.node(id).map(|n| n.kind) == Some(NodeKind::Clinic) {
                rep.push(
                    "clinic_transit",
                    format!("{what}: relays through clinic {id:?}"),
                );
            }
        }
    };

    for f in &sol.upload {
        let what = format!("upload {}->{}->{}", f.clinic, f.bs, f.host);
        check_route(&f.route, &what, &mut rep);
        if f.route.first() != Some(&f.clinic)
            || f.route.get(1) != Some(&f.bs)
            || f.route.last() != Some(&f.host)
        {
            rep.push("route_endpoints", format!("{what}: route disagrees with fields"));
        }
        if f.patients == 0 {
            rep.push("empty_flow", format!("{what}: zero patients"));
        }
    }
    for f in &sol.feedback {
        let what = format!("feedback {}->{}->{}", f.host, f.bs, f.clinic);
        check_route(&f.route, &what, &mut rep);
        let n = f.route.len();
        if f.route.first() != Some(&f.host)
            || n < 2
            || f.route.get(n - 2) != Some(&f.bs)
            || f.route.last() != Some(&f.clinic)
        {
            rep.push("route_endpoints", format!("{what}: route disagrees with fields"));
        }
        if f.patients == 0 {
            rep.push("empty_flow", format!("{what}: zero patients"));
        }
    }
    let storage_node = topo.storage_node().to_string();
    for f in &sol.storage {
        let what = format!("storage {}", f.host);
        check_route(&f.route, &what, &mut rep);
        if f.route.first() != Some(&f.host) || f.route.last() != Some(&storage_node) {
            rep.push("route_endpoints", format!("{what}: route disagrees with fields"));
        }
        if f.patients == 0 {
            rep.push("empty_flow", format!("{what}: zero patients"));
        }
    }

    // Placement gating and server capacity.
    let assignments = sol.assignments();
    let hosted = sol.hosted_patients();
    for (host, &count) in &sol.servers {
        if count == 0 {
            rep.push("server_count", format!("{host}: zero servers listed"));
            continue;
        }
        if !candidates.contains(host) {
            rep.push("placement_gate", format!("{host}: not a candidate node"));
        }
        if count > inst.phi_cap() {
            rep.push(
                "server_count_cap",
                format!("{host}: {count} servers exceed cap {}", inst.phi_cap()),
            );
        }
        let pats = hosted.get(host).copied().unwrap_or(0) as u64;
        if pats > count as u64 * inst.omega_max as u64 {
            rep.push(
                "server_capacity",
                format!(
                    "{host}: {pats} patients exceed {} servers x {}",
                    count, inst.omega_max
                ),
            );
        }
        let stored_bits = pats as f64 * inst.app.result_bits;
        if stored_bits > inst.storage_cap_bits * count as f64 * (1.0 + 1e-12) {
            rep.push(
                "storage_volume",
                format!("{host}: {stored_bits} result bits exceed archive cap"),
            );
        }
    }
    for ((clinic, host), &count) in &assignments {
        if count > 0 && sol.servers.get(host).copied().unwrap_or(0) == 0 {
            rep.push(
                "placement_gate",
                format!("{count} patients of {clinic} assigned to serverless {host}"),
            );
        }
    }

    // Coverage: every patient uploads once, gets feedback once.
    let mut upload_cover: BTreeMap<&str, u64> = BTreeMap::new();
    for f in &sol.upload {
        *upload_cover.entry(&f.clinic).or_default() += f.patients as u64;
    }
    let mut feedback_cover: BTreeMap<&str, u64> = BTreeMap::new();
    for f in &sol.feedback {
        *feedback_cover.entry(&f.clinic).or_default() += f.patients as u64;
    }
    for (clinic, &pats) in &inst.patients {
        let up = upload_cover.remove(clinic.as_str()).unwrap_or(0);
        if up != pats as u64 {
            rep.push(
                "coverage_upload",
                format!("{clinic}: {up} of {pats} patients upload"),
            );
        }
        let fb = feedback_cover.remove(clinic.as_str()).unwrap_or(0);
        if fb != pats as u64 {
            rep.push(
                "coverage_feedback",
                format!("{clinic}: {fb} of {pats} patients receive feedback"),
            );
        }
    }
    for (clinic, _) in upload_cover {
        rep.push("coverage_upload", format!("{clinic}: not a listed clinic"));
    }
    for (clinic, _) in feedback_cover {
        rep.push("coverage_feedback", format!("{clinic}: not a listed clinic"));
    }

    // Feedback and storage must originate where the patient was assigned.
    let mut feedback_from: BTreeMap<(String, String), u64> = BTreeMap::new();
    for f in &sol.feedback {
        *feedback_from
            .entry((f.clinic.clone(), f.host.clone()))
            .or_default() += f.patients as u64;
    }
    for ((clinic, host), &count) in &assignments {
        let fb = feedback_from
            .remove(&(clinic.clone(), host.clone()))
            .unwrap_or(0);
        if fb != count as u64 {
            rep.push(
                "feedback_assignment",
                format!("{clinic}<-{host}: feedback {fb} != assigned {count}"),
            );
        }
    }
    for ((clinic, host), _) in feedback_from {
        rep.push(
            "feedback_assignment",
            format!("{clinic}<-{host}: feedback without assignment"),
        );
    }
    let mut stored: BTreeMap<&str, u64> = BTreeMap::new();
    for f in &sol.storage {
        *stored.entry(&f.host).or_default() += f.patients as u64;
    }
    for (host, &count) in &hosted {
        if stored.remove(host.as_str()).unwrap_or(0) != count as u64 {
            rep.push(
                "storage_assignment",
                format!("{host}: archived patients != hosted patients"),
            );
        }
    }
    for (host, _) in stored {
        rep.push("storage_assignment", format!("{host}: archive without host"));
    }

    // Link capacities per phase.
    let mut edge_rate: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for f in &sol.upload {
        for pair in f.route.windows(2) {
            *edge_rate.entry((&pair[0], &pair[1])).or_default() +=
                f.patients as f64 * phases.delta_a_bps;
        }
    }
    check_edge_caps(topo, &edge_rate, "upload", &mut rep);
    edge_rate = BTreeMap::new();
    for f in &sol.feedback {
        for pair in f.route.windows(2) {
            *edge_rate.entry((&pair[0], &pair[1])).or_default() +=
                f.patients as f64 * phases.delta_b_bps;
        }
    }
    check_edge_caps(topo, &edge_rate, "feedback", &mut rep);
    edge_rate = BTreeMap::new();
    for f in &sol.storage {
        for pair in f.route.windows(2) {
            *edge_rate.entry((&pair[0], &pair[1])).or_default() +=
                f.patients as f64 * phases.delta_c_bps;
        }
    }
    check_edge_caps(topo, &edge_rate, "storage", &mut rep);

    // Radio resource-block budgets.
    let budget = inst.catalog.radio.prb_budget as u64;
    let mut blocks: BTreeMap<&str, u64> = BTreeMap::new();
    for f in &sol.upload {
        *blocks.entry(&f.bs).or_default() += f.patients as u64 * phases.ra_prbs as u64;
    }
    for (bs, used) in blocks {
        if used > budget {
            rep.push(
                "prb_budget",
                format!("{bs}: upload needs {used} of {budget} resource blocks"),
            );
        }
    }
    let mut blocks: BTreeMap<&str, u64> = BTreeMap::new();
    for f in &sol.feedback {
        *blocks.entry(&f.bs).or_default() += f.patients as u64 * phases.rb_prbs as u64;
    }
    for (bs, used) in blocks {
        if used > budget {
            rep.push(
                "prb_budget",
                format!("{bs}: feedback needs {used} of {budget} resource blocks"),
            );
        }
    }

    // Flow conservation residuals, per commodity.
    conservation(&sol.upload.iter().map(|f| (f.route.as_slice(), f.patients)).collect::<Vec<_>>(), "upload", &mut rep);
    conservation(&sol.feedback.iter().map(|f| (f.route.as_slice(), f.patients)).collect::<Vec<_>>(), "feedback", &mut rep);
    conservation(&sol.storage.iter().map(|f| (f.route.as_slice(), f.patients)).collect::<Vec<_>>(), "storage", &mut rep);

    // Storage activation identity: senders + receivers = 2*active - nu
    // with nu boolean (a node may source, relay, or terminate).
    let mut theta: BTreeMap<&str, bool> = BTreeMap::new();
    let mut vartheta: BTreeMap<&str, bool> = BTreeMap::new();
    for f in &sol.storage {
        for (i, hop) in f.route.iter().enumerate() {
            if i + 1 < f.route.len() {
                theta.insert(hop, true);
            }
            if i > 0 {
                vartheta.insert(hop, true);
            }
        }
    }
    let mut nodes: std::collections::BTreeSet<&str> = theta.keys().copied().collect();
    nodes.extend(vartheta.keys().copied());
    for id in nodes {
        let t = *theta.get(id).unwrap_or(&false) as i32;
        let v = *vartheta.get(id).unwrap_or(&false) as i32;
        let zeta = ((t + v) > 0) as i32;
        let nu = 2 * zeta - t - v;
        if !(0..=1).contains(&nu) {
            rep.push(
                "storage_xor",
                format!("{id}: theta {t} + vartheta {v} breaks 2*zeta - nu identity"),
            );
        }
    }

    rep
}

fn check_edge_caps(
    topo: &crate::topology::Topology,
    edge_rate: &BTreeMap<(&str, &str), f64>,
    phase: &str,
    rep: &mut ValidationReport,
) {
    for ((a, b), &rate) in edge_rate {
        match topo.capacity(a, b) {
            Some(cap) => {
                if rate > cap * (1.0 + 1e-12) + 1e-9 {
                    rep.push(
                        "link_capacity",
                        format!("{phase} {a}->{b}: {rate} b/s exceeds {cap} b/s"),
                    );
                }
            }
            None => rep.push(
                "link_capacity",
                format!("{phase} {a}->{b}: flow on a missing link"),
            ),
        }
    }
}

/// Verifies that per-commodity edge flows balance exactly: the source
/// emits the demand, the sink absorbs it, everyone else relays.
fn conservation(groups: &[(&[String], u32)], phase: &str, rep: &mut ValidationReport) {
    for (route, patients) in groups {
        if route.len() < 2 {
            continue; // already reported as route_shape
        }
        let mut balance: BTreeMap<&str, i64> = BTreeMap::new();
        for pair in route.windows(2) {
            *balance.entry(pair[0].as_str()).or_default() -= *patients as i64;
            *balance.entry(pair[1].as_str()).or_default() += *patients as i64;
        }
        let src = route.first().unwrap().as_str();
        let dst = route.last().unwrap().as_str();
        for (node, residual) in balance {
            let expected = if node == src {
                -(*patients as i64)
            } else if node == dst {
                *patients as i64
            } else {
                0
            };
            if residual != expected {
                rep.push(
                    "conservation",
                    format!("{phase} {src}->{dst}: residual {residual} at {node}"),
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{PhiMode, PlacementMode};
    use crate::power::ProfileCatalog;
    use crate::solution::{routed_feedback, routed_storage, routed_upload};
    use crate::topology::Topology;
    use crate::traffic::{derive_phases, AppProfile};

    /// 12 ECG patients, both clinics served via their first base station,
    /// one server at the OLT.
    fn fixture() -> (Instance, PlacementSolution) {
        let topo = Topology::from_json(crate::instance::tests::TOY_TOPOLOGY).unwrap();
        let app = AppProfile::ecg();
        let phases = derive_phases(&app, PlacementMode::Foa, 669, 669, 336.0).unwrap();
        let patients = topo
            .clinics()
            .map(|c| (c.id.clone(), c.patients_ecg))
            .collect();
        let inst = Instance {
            topology: topo,
            catalog: ProfileCatalog::reference(),
            app,
            phases,
            mode: PlacementMode::Foa,
            phi_mode: PhiMode::Fixed,
            omega_max: 669,
            storage_cap_bits: 4.0e12,
            patients,
        };
        let t = &inst.topology;
        let mut sol = PlacementSolution::empty();
        sol.servers.insert("olt".into(), 1);
        sol.upload.push(routed_upload(t, "cl1", "bs1", "olt", 5).unwrap());
        sol.upload.push(routed_upload(t, "cl2", "bs2", "olt", 7).unwrap());
        sol.feedback.push(routed_feedback(t, "olt", "bs1", "cl1", 5).unwrap());
        sol.feedback.push(routed_feedback(t, "olt", "bs2", "cl2", 7).unwrap());
        sol.storage.push(routed_storage(t, "olt", 12).unwrap());
        sol.normalize();
        (inst, sol)
    }

    /// Literal re-derivation of every term, written against the formulas
    /// rather than the evaluator's structure.
    #[test]
    fn evaluator_matches_hand_arithmetic() {
        let (inst, sol) = fixture();
        let got = evaluate(&inst, &sol).unwrap();
        let p = &inst.phases;

        let (ta, tb, tc) = (p.tau_a_s, p.tau_b_s, p.tau_c_s);
        let (da, db, dc) = (p.delta_a_bps, p.delta_b_bps, p.delta_c_bps);
        let prb_w = 0.002275;

        // Access. Two BSs: upload blocks 5*4 and 7*4, feedback 5*1 and 7*1.
        let bs = |up_pat: f64, fb_pat: f64| {
            (333.0 * 0.0042 + prb_w * up_pat * 4.0) * ta
                + (333.0 * 0.0042 + prb_w * fb_pat * 1.0) * tb
        };
        // Two ONUs: each relays its clinic's upload up and feedback down;
        // onu1 carries no storage, the OLT sources storage directly.
        let onu_slope = 0.8 / 3.75e9;
        let onu = |pat: f64| {
            (7.2 * 0.003 + pat * da * onu_slope) * ta
                + (7.2 * 0.003 + pat * db * onu_slope) * tb
        };
        // OLT: receives all uploads, sends all feedback, sources storage.
        let olt_slope = 2.0 / 1.28e11;
        let olt = (18.0 * 0.003 + 12.0 * da * olt_slope) * ta
            + (18.0 * 0.003 + 12.0 * db * olt_slope) * tb
            + (18.0 * 0.003 + 12.0 * dc * olt_slope) * tc;
        let access = (bs(5.0, 5.0) + bs(7.0, 7.0) + onu(5.0) + onu(7.0) + olt) * 1.5;
        assert!(
            (got.access_j - access).abs() < 1e-9,
            "access: got {} want {access}",
            got.access_j
        );

        // Metro: storage only, both devices active for tau_c.
        let metro = ((1589.4 * 0.003 + 12.0 * dc * (176.6 / 2.56e11)) * tc
            + (4095.0 * 0.003 + 12.0 * dc * (455.0 / 5.6e11)) * tc)
            * 1.5;
        assert!((got.metro_j - metro).abs() < 1e-9);

        // Core: one router, storage only.
        let core = (11070.0 * 0.003 + 12.0 * dc * (1230.0 / 4.48e12)) * tc * 1.5;
        assert!((got.core_j - core).abs() < 1e-9);

        // Cloud: router, duplicated switch, content server, duplicated
        // storage array (load term over retained bits).
        let stored_bits = 12.0 * dc * tc;
        let cloud = ((4095.0 * 0.003 + 12.0 * dc * (455.0 / 5.6e11)) * tc
            + 2.0 * (1818.0 * 0.003 + 12.0 * dc * (202.0 / 3.2e11)) * tc
            + (324.82 * 0.003 + 12.0 * dc * (55.98 / 1.8e9)) * tc
            + 2.0 * (4410.0 * 0.003 + stored_bits * (490.0 / 6.048e14)) * tc)
            * 2.5;
        assert!(
            (got.cloud_j - cloud).abs() < 1e-9,
            "cloud: got {} want {cloud}",
            got.cloud_j
        );

        // Servers: idle across all three windows plus full power for the
        // load-dependent processing time.
        let tau_p = 0.002 * 12.0 + 4.6872;
        let servers = (78.0 * (ta + tb + tc) + 180.0 * tau_p) * 2.5;
        assert!((got.servers_j - servers).abs() < 1e-9);

        // Fixed server counts: no Ethernet switch.
        assert_eq!(got.fog_switch_j, 0.0);

        let total = access + metro + core + cloud + servers;
        assert!((got.total_j() - total).abs() < 1e-9);
    }

    /// The published worked example for a base station's upload term:
    /// 80 blocks at 0.5 W/block for 188.1 s costs about 7,787 J before PUE.
    #[test]
    fn base_station_worked_example() {
        let (mut inst, _) = fixture();
        inst.catalog.radio.prb_watt = 0.5;
        let t = &inst.topology;
        let mut sol = PlacementSolution::empty();
        sol.servers.insert("olt".into(), 1);
        // 20 patients x 4 blocks = 80 blocks on bs1.
        inst.patients.insert("cl1".into(), 20);
        inst.patients.insert("cl2".into(), 0);
        sol.upload.push(routed_upload(t, "cl1", "bs1", "olt", 20).unwrap());
        sol.feedback.push(routed_feedback(t, "olt", "bs1", "cl1", 20).unwrap());
        sol.storage.push(routed_storage(t, "olt", 20).unwrap());
        let got = evaluate(&inst, &sol).unwrap();
        let bs_upload = (333.0 * 0.0042 + 0.5 * 80.0) * inst.phases.tau_a_s;
        assert!((bs_upload - 7787.0).abs() < 1.0, "got {bs_upload}");
        // The access segment contains that term (with PUE), among others.
        assert!(got.access_j * (1.0 / 1.5) > bs_upload);
    }

    /// One server at the OLT serving 669 patients: the processing side of
    /// the base case.
    #[test]
    fn server_energy_base_case() {
        let (inst, _) = fixture();
        let p = &inst.phases;
        let window = p.tau_a_s + p.tau_b_s + p.tau_c_s;
        let tau_p = inst.app.processing_time(669, 1);
        let eps = (78.0 * window + 180.0 * tau_p) * 2.5;
        assert!((tau_p - 6.0252).abs() < 1e-12);
        // Hand value: 2.5 * (78 * 189.5878 + 180 * 6.0252) = 39,681 J.
        assert!((eps - 39_680.97).abs() < 0.5, "got {eps}");
    }

    #[test]
    fn zero_traffic_zero_energy() {
        let (inst, _) = fixture();
        let sol = PlacementSolution::empty();
        let got = evaluate(&inst, &sol).unwrap();
        assert_eq!(got.total_j(), 0.0);
    }

    #[test]
    fn ethernet_switch_charged_only_when_variable() {
        let (mut inst, sol) = fixture();
        let fixed = evaluate(&inst, &sol).unwrap();
        assert_eq!(fixed.fog_switch_j, 0.0);
        inst.phi_mode = PhiMode::Variable(None);
        let variable = evaluate(&inst, &sol).unwrap();
        assert!(variable.fog_switch_j > 0.0);
        // Idle of a dedicated 0.57 W switch over all three windows, plus
        // tiny load terms, times the network PUE.
        let p = &inst.phases;
        let es_slope = (3.52 - 0.57) / 1.6e10;
        let want = ((0.57 + 12.0 * p.delta_a_bps * es_slope) * p.tau_a_s
            + (0.57 + 12.0 * p.delta_b_bps * es_slope) * p.tau_b_s
            + (0.57 + 12.0 * p.delta_c_bps * es_slope) * p.tau_c_s)
            * 1.5;
        assert!((variable.fog_switch_j - want).abs() < 1e-9);
        // Everything else is unchanged.
        assert!((variable.total_j() - fixed.total_j() - want).abs() < 1e-9);
    }

    #[test]
    fn validator_accepts_fixture() {
        let (inst, sol) = fixture();
        let rep = validate(&inst, &sol);
        assert!(rep.is_ok(), "{rep}");
    }

    #[test]
    fn validator_catches_mutations() {
        let (inst, good) = fixture();

        // Missing feedback.
        let mut sol = good.clone();
        sol.feedback.pop();
        assert!(has_rule(&validate(&inst, &sol), "coverage_feedback"));

        // Patients assigned to a node with no server.
        let mut sol = good.clone();
        sol.servers.clear();
        sol.servers.insert("onu1".into(), 1);
        let rep = validate(&inst, &sol);
        assert!(has_rule(&rep, "placement_gate"));

        // Over capacity server.
        let mut inst2 = inst.clone();
        inst2.omega_max = 10;
        inst2.phases = derive_phases(&inst2.app, PlacementMode::Foa, 10, 12, 336.0).unwrap();
        let rep = validate(&inst2, &good);
        assert!(has_rule(&rep, "server_capacity"));

        // Broken route edge.
        let mut sol = good.clone();
        sol.upload[0].route = vec!["cl1".into(), "bs1".into(), "olt".into()];
        assert!(has_rule(&validate(&inst, &sol), "route_edges"));

        // Route endpoint mismatch.
        let mut sol = good.clone();
        sol.storage[0].host = "onu1".into();
        assert!(has_rule(&validate(&inst, &sol), "route_endpoints"));

        // Link capacity: blow up the patient count on one group.
        let mut sol = good.clone();
        let mut inst3 = inst.clone();
        inst3.patients.insert("cl1".into(), 2000);
        sol.upload[0].patients = 2000;
        // (coverage for feedback will also fire; we only assert the cap)
        assert!(has_rule(&validate(&inst3, &sol), "link_capacity"));

        // Resource-block budget: 100 patients x 4 blocks > 360.
        let mut inst4 = inst.clone();
        inst4.patients.insert("cl1".into(), 100);
        inst4.patients.insert("cl2".into(), 0);
        let t = &inst4.topology;
        let mut sol = PlacementSolution::empty();
        sol.servers.insert("olt".into(), 1);
        sol.upload.push(routed_upload(t, "cl1", "bs1", "olt", 100).unwrap());
        sol.feedback.push(routed_feedback(t, "olt", "bs1", "cl1", 100).unwrap());
        sol.storage.push(routed_storage(t, "olt", 100).unwrap());
        assert!(has_rule(&validate(&inst4, &sol), "prb_budget"));

        // Fixed mode forbids multi-server nodes.
        let mut sol = good.clone();
        sol.servers.insert("olt".into(), 2);
        assert!(has_rule(&validate(&inst, &sol), "server_count_cap"));

        // Tunneling between towers through a clinic's two radio links.
        let mut sol = good.clone();
        let f = &mut sol.upload[0];
        assert_eq!(f.clinic, "cl1");
        f.bs = "bs2".into();
        f.route = vec![
            "cl1".into(),
            "bs2".into(),
            "cl1".into(),
            "bs1".into(),
            "onu1".into(),
            "olt".into(),
        ];
        // (also breaks route_simple; the dedicated rule needs a repeat-free
        // route, so use the other clinic as the via)
        f.route[2] = "cl2".into();
        assert!(has_rule(&validate(&inst, &sol), "clinic_transit"));
    }

    fn has_rule(rep: &ValidationReport, rule: &str) -> bool {
        rep.violations.iter().any(|v| v.rule == rule)
    }
}
