//! Greedy construction of low-energy placements.
//!
//! The optimizer in [`crate::exact`] proves optimality but only scales to
//! small instances; this module builds good placements fast. Strategy:
//!
//! 1. Start with the minimum number of hosting sites that can hold the
//!    required servers and grow the site count while the evaluated energy
//!    keeps improving; stop at the first non-improvement.
//! 2. For each site count, try every combination of candidate sites (up
//!    to a fixed enumeration budget, after which two informed guesses are
//!    tried instead: the gravity-heaviest sites, and the same with the
//!    most-central site forced in).
//! 3. For a fixed site set, assign patients to base stations clinic by
//!    clinic — fewest patients first, consolidating onto towers that are
//!    already transmitting — then route each tower group to the nearest
//!    site with server, link and archive headroom, splitting groups when
//!    a site fills up. Feedback is assigned in a second radio pass that
//!    may pick different towers, since upload and feedback budgets are
//!    independent.
//!
//! The construction refuses to return anything that does not pass the
//! full validator; refusal surfaces as [`HeuristicError::Infeasible`].

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::energy::evaluate;
use crate::instance::{Instance, PhiMode};
use crate::solution::{routed_feedback, routed_storage, routed_upload, PlacementSolution};
use crate::topology::NodeKind;

#[derive(Debug, Error)]
pub enum HeuristicError {
    #[error("no feasible placement found: {0}")]
    Infeasible(String),
}

/// Combination budget per site count before falling back to guesses.
const COMBO_BUDGET: u128 = 10_000;

/// Builds the best placement the greedy procedure can find.
pub fn solve(inst: &Instance) -> Result<PlacementSolution, HeuristicError> {
    let candidates = inst.candidates();
    if candidates.is_empty() {
        return Err(HeuristicError::Infeasible("no candidate sites".into()));
    }
    let per_server = inst.per_server_patients();
    if per_server == 0 {
        return Err(HeuristicError::Infeasible(
            "a single server cannot hold even one patient's archive".into(),
        ));
    }
    let total = inst.total_patients();
    if total == 0 {
        return Ok(PlacementSolution::empty());
    }
    let sites_floor = total
        .div_ceil(per_server)
        .div_ceil(inst.phi_cap())
        .max(1) as usize;

    let mut best: Option<(PlacementSolution, f64)> = None;
    for k in sites_floor..=candidates.len() {
        let round = best_for_site_count(inst, &candidates, k, per_server);
        match (&best, round) {
            (_, None) => {
                // Infeasible at this size; only grow if nothing found yet.
                if best.is_some() {
                    break;
                }
            }
            (None, Some(found)) => best = Some(found),
            (Some((_, have)), Some((sol, cost))) => {
                if cost + 1e-9 < *have {
                    best = Some((sol, cost));
                } else {
                    break; // adding sites stopped paying off
                }
            }
        }
    }
    best.map(|(sol, _)| sol)
        .ok_or_else(|| HeuristicError::Infeasible("no site set admits a routing".into()))
}

fn best_for_site_count(
    inst: &Instance,
    candidates: &[String],
    k: usize,
    per_server: u32,
) -> Option<(PlacementSolution, f64)> {
    let mut best: Option<(PlacementSolution, f64)> = None;
    let consider = |hosts: &[String], best: &mut Option<(PlacementSolution, f64)>| {
        if let Some(sol) = attempt(inst, hosts, per_server) {
            let cost = match evaluate(inst, &sol) {
                Ok(e) => e.total_j(),
                Err(_) => return,
            };
            if best.as_ref().map_or(true, |(_, c)| cost + 1e-12 < *c) {
                *best = Some((sol, cost));
            }
        }
    };

    if combinations_within_budget(candidates.len(), k) {
        let mut indices: Vec<usize> = (0..k).collect();
        loop {
            let hosts: Vec<String> =
                indices.iter().map(|&i| candidates[i].clone()).collect();
            consider(&hosts, &mut best);
            if !advance(&mut indices, candidates.len()) {
                break;
            }
        }
    } else {
        // Too many combinations: try the k gravity-heaviest sites, and the
        // same with the most-central site (closest to all clinics) forced.
        let scored = gravity_order(inst, candidates);
        let top: Vec<String> = scored.iter().take(k).cloned().collect();
        consider(&top, &mut best);
        if let Some(central) = central_site(inst, candidates) {
            let mut forced = vec![central.clone()];
            forced.extend(scored.iter().filter(|s| **s != central).take(k - 1).cloned());
            if forced.len() == k {
                forced.sort();
                consider(&forced, &mut best);
            }
        }
    }
    best
}

fn combinations_within_budget(n: usize, k: usize) -> bool {
    let k = k.min(n - k);
    let mut count: u128 = 1;
    for i in 0..k {
        count = count.saturating_mul((n - i) as u128) / (i as u128 + 1);
        if count > COMBO_BUDGET {
            return false;
        }
    }
    true
}

/// Lexicographic next k-combination of 0..n.
fn advance(indices: &mut [usize], n: usize) -> bool {
    let k = indices.len();
    for i in (0..k).rev() {
        if indices[i] < n - k + i {
            indices[i] += 1;
            for j in i + 1..k {
                indices[j] = indices[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Candidates by descending pull: patients weighted by inverse distance.
fn gravity_order(inst: &Instance, candidates: &[String]) -> Vec<String> {
    let mut scored: Vec<(f64, &String)> = candidates
        .iter()
        .map(|cand| {
            let score: f64 = inst
                .patients
                .iter()
                .filter(|(_, &p)| p > 0)
                .map(|(clinic, &p)| {
                    let hops = inst
                        .topology
                        .hop_distance(clinic, cand)
                        .unwrap_or(usize::MAX / 2);
                    p as f64 / (1.0 + hops as f64)
                })
                .sum();
            (score, cand)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.into_iter().map(|(_, c)| c.clone()).collect()
}

/// The candidate with the smallest total hop count to all active clinics.
fn central_site(inst: &Instance, candidates: &[String]) -> Option<String> {
    candidates
        .iter()
        .map(|cand| {
            let hops: usize = inst
                .patients
                .iter()
                .filter(|(_, &p)| p > 0)
                .map(|(clinic, _)| {
                    inst.topology
                        .hop_distance(clinic, cand)
                        .unwrap_or(usize::MAX / 4)
                })
                .sum();
            (hops, cand.clone())
        })
        .min()
        .map(|(_, c)| c)
}

/// Residual directed link capacities for one phase.
struct Residuals(BTreeMap<(String, String), f64>);

impl Residuals {
    fn new(inst: &Instance) -> Self {
        Self(
            inst.topology
                .links()
                .iter()
                .map(|l| ((l.a.clone(), l.b.clone()), l.capacity_bps))
                .collect(),
        )
    }

    /// How many patients fit along `route` at `per_patient_bps` each.
    fn patients_fitting(&self, route: &[String], per_patient_bps: f64) -> u32 {
        let mut fit = f64::INFINITY;
        for pair in route.windows(2) {
            let residual = self
                .0
                .get(&(pair[0].clone(), pair[1].clone()))
                .copied()
                .unwrap_or(0.0);
            fit = fit.min(residual / per_patient_bps);
        }
        if fit.is_finite() {
            (fit + 1e-9).floor().max(0.0) as u32
        } else {
            u32::MAX
        }
    }

    fn consume(&mut self, route: &[String], bps: f64) {
        for pair in route.windows(2) {
            if let Some(r) = self.0.get_mut(&(pair[0].clone(), pair[1].clone())) {
                *r -= bps;
            }
        }
    }
}

/// Builds a full routed solution on the given hosting sites, or gives up.
fn attempt(inst: &Instance, hosts: &[String], per_server: u32) -> Option<PlacementSolution> {
    let topo = &inst.topology;
    let phases = &inst.phases;
    let budget = inst.catalog.radio.prb_budget as u64;

    // Static tower facts.
    let clinic_count: BTreeMap<String, usize> = topo
        .nodes_of_kind(NodeKind::BaseStation)
        .map(|bs| {
            let n = topo
                .neighbors(&bs.id)
                .iter()
                .filter(|x| topo.node(x).map(|n| n.kind) == Some(NodeKind::Clinic))
                .count();
            (bs.id.clone(), n)
        })
        .collect();

    // ---- upload radio assignment ----------------------------------------
    // Static per-tower patient cap: resource blocks, plus the tower's
    // uplink into the optical network capped at the narrowest hop up to
    // the aggregation point — the group almost always continues past the
    // tower's optical terminal; when that terminal itself hosts, this is
    // slightly conservative, which a greedy can afford.
    let tower_cap: BTreeMap<String, u64> = topo
        .nodes_of_kind(NodeKind::BaseStation)
        .map(|bs| {
            let by_blocks = budget / phases.ra_prbs as u64;
            let uplink: f64 = topo
                .neighbors(&bs.id)
                .iter()
                .filter(|x| topo.node(x).map(|n| n.kind) == Some(NodeKind::Onu))
                .filter_map(|onu| {
                    let first_hop = topo.capacity(&bs.id, onu)?;
                    let onward: f64 = topo
                        .neighbors(onu)
                        .iter()
                        .filter(|x| topo.node(x).map(|n| n.kind) == Some(NodeKind::Olt))
                        .filter_map(|olt| topo.capacity(onu, olt))
                        .sum();
                    Some(if onward > 0.0 { first_hop.min(onward) } else { first_hop })
                })
                .sum();
            let by_uplink = (uplink / phases.delta_a_bps + 1e-9).floor() as u64;
            (bs.id.clone(), by_blocks.min(by_uplink))
        })
        .collect();
    // Per clinic-tower radio link cap, in patients.
    let edge_cap = |clinic: &str, bs: &str| -> u64 {
        let radio_cap = topo.capacity(clinic, bs).unwrap_or(0.0);
        (radio_cap / phases.delta_a_bps + 1e-9).floor() as u64
    };

    let mut clinics: Vec<(&String, u32)> = inst
        .patients
        .iter()
        .filter(|(_, &p)| p > 0)
        .map(|(c, &p)| (c, p))
        .collect();
    clinics.sort_by_key(|(c, p)| (*p, (*c).clone()));

    // Patients funneled through each tower, and per (clinic, tower).
    let mut tower_load: BTreeMap<String, u64> = BTreeMap::new();
    let mut alloc: BTreeMap<(String, String), u64> = BTreeMap::new();

    // Greedy seed: consolidate onto already-transmitting towers so fewer
    // towers burn idle power.
    for (clinic, patients) in &clinics {
        let mut remaining = *patients as u64;
        let mut towers = inst.adjacent_base_stations(clinic);
        towers.sort_by_key(|bs| {
            let active = tower_load.get(bs).copied().unwrap_or(0) > 0;
            (
                !active, // already-transmitting towers first
                clinic_count.get(bs).copied().unwrap_or(usize::MAX),
                bs.clone(),
            )
        });
        for bs in towers {
            if remaining == 0 {
                break;
            }
            let load = tower_load.get(&bs).copied().unwrap_or(0);
            let spare = tower_cap.get(&bs).copied().unwrap_or(0).saturating_sub(load);
            let used = alloc
                .get(&((*clinic).clone(), bs.clone()))
                .copied()
                .unwrap_or(0);
            let take = remaining.min(spare).min(edge_cap(clinic, &bs).saturating_sub(used));
            if take == 0 {
                continue;
            }
            *tower_load.entry(bs.clone()).or_default() += take;
            *alloc.entry(((*clinic).clone(), bs.clone())).or_default() += take;
            remaining -= take;
        }
        // The greedy order can strand a clinic even though a feasible
        // tower assignment exists; rebalance with augmenting paths over
        // the clinic-tower graph (this is a plain bipartite flow).
        while remaining > 0 {
            let moved = augment_upload(
                inst,
                clinic,
                remaining,
                &tower_cap,
                &edge_cap,
                &mut tower_load,
                &mut alloc,
            );
            if moved == 0 {
                return None; // radio layer cannot carry this clinic
            }
            remaining -= moved;
        }
    }

    let mut upload_blocks: BTreeMap<String, u64> = BTreeMap::new();
    let mut tower_groups: Vec<(String, String, u32)> = Vec::new(); // clinic, bs, patients
    for ((clinic, bs), &pats) in &alloc {
        if pats == 0 {
            continue;
        }
        *upload_blocks.entry(bs.clone()).or_default() += pats * phases.ra_prbs as u64;
        tower_groups.push((clinic.clone(), bs.clone(), pats as u32));
    }

    // ---- route tower groups to hosting sites ----------------------------
    let mut upload_res = Residuals::new(inst);
    let mut hosted: BTreeMap<String, u32> = BTreeMap::new();
    let phi_cap = inst.phi_cap();
    let site_cap = per_server as u64 * phi_cap as u64;
    let mut flows: Vec<(String, String, String, u32)> = Vec::new(); // clinic, bs, host, pat

    // A site must also push every patient's analyzed data out again later:
    // to the archive (all patients), and back over some radio tower
    // (feedback). For a server on an optical terminal both leave through
    // its uplink, except feedback to clinics reachable via the terminal's
    // own towers. Filling a site past those egress budgets only makes the
    // later passes fail, so intake is bounded up front. These are guides,
    // not the check — the storage and feedback passes still verify exactly.
    let pristine = Residuals::new(inst);
    let mut storage_left: BTreeMap<String, u64> = BTreeMap::new();
    let mut remote_fb_left: BTreeMap<String, u64> = BTreeMap::new();
    for host in hosts {
        let by_storage = routed_storage(topo, host, 0)
            .map(|f| pristine.patients_fitting(&f.route, phases.delta_c_bps) as u64)
            .unwrap_or(0);
        storage_left.insert(host.clone(), by_storage);
        let fb = if topo.node(host).map(|n| n.kind) == Some(NodeKind::Onu) {
            let uplink: f64 = topo
                .neighbors(host)
                .iter()
                .filter(|x| topo.node(x).map(|n| n.kind) == Some(NodeKind::Olt))
                .filter_map(|olt| topo.capacity(host, olt))
                .sum();
            (uplink / phases.delta_b_bps + 1e-9).floor() as u64
        } else {
            u64::MAX // higher tiers fan out over parallel downlinks
        };
        remote_fb_left.insert(host.clone(), fb);
    }
    // Clinics whose feedback can leave an optical-terminal host through
    // its own towers, bypassing the uplink.
    let local_clinic = |host: &str, clinic: &str| -> bool {
        topo.neighbors(host).iter().any(|t| {
            topo.node(t).map(|n| n.kind) == Some(NodeKind::BaseStation)
                && topo.neighbors(t).iter().any(|c| c == clinic)
        })
    };

    tower_groups.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| (&a.0, &a.1).cmp(&(&b.0, &b.1))));
    for (clinic, bs, patients) in tower_groups {
        let mut remaining = patients;
        let mut ordered: Vec<&String> = hosts.iter().collect();
        ordered.sort_by_key(|h| (topo.hop_distance(&bs, h).unwrap_or(usize::MAX), (*h).clone()));
        for host in ordered {
            if remaining == 0 {
                break;
            }
            let route = match topo.min_hop_path(&bs, host) {
                Ok(r) => r,
                Err(_) => continue,
            };
            let headroom =
                site_cap.saturating_sub(hosted.get(host).copied().unwrap_or(0) as u64);
            let by_links = upload_res.patients_fitting(&route, phases.delta_a_bps);
            let local = local_clinic(host, &clinic);
            let mut take = (remaining as u64)
                .min(headroom)
                .min(by_links as u64)
                .min(storage_left.get(host).copied().unwrap_or(0));
            if !local {
                take = take.min(remote_fb_left.get(host).copied().unwrap_or(0));
            }
            if take == 0 {
                continue;
            }
            let take = take as u32;
            upload_res.consume(&route, take as f64 * phases.delta_a_bps);
            *hosted.entry(host.clone()).or_default() += take;
            *storage_left.get_mut(host).unwrap() -= take as u64;
            if !local {
                *remote_fb_left.get_mut(host).unwrap() -= take as u64;
            }
            flows.push((clinic.clone(), bs.clone(), host.clone(), take));
            remaining -= take;
        }
        if remaining > 0 {
            return None; // no site can absorb this group
        }
    }

    // Server counts per site.
    let mut servers: BTreeMap<String, u32> = BTreeMap::new();
    for (host, &pats) in &hosted {
        if pats == 0 {
            continue;
        }
        let count = match inst.phi_mode {
            PhiMode::Fixed => 1,
            PhiMode::Variable(_) => pats.div_ceil(per_server).max(1),
        };
        if count > phi_cap {
            return None;
        }
        servers.insert(host.clone(), count);
    }

    // ---- feedback radio assignment ---------------------------------------
    let mut sol = PlacementSolution::empty();
    sol.servers = servers;
    for (clinic, bs, host, pats) in &flows {
        sol.upload
            .push(routed_upload(topo, clinic, bs, host, *pats).ok()?);
    }

    let mut feedback_res = Residuals::new(inst);
    let mut feedback_blocks: BTreeMap<String, u64> = BTreeMap::new();
    let assignments = sol.assignments();
    for ((clinic, host), patients) in &assignments {
        let mut remaining = *patients;
        let mut towers = inst.adjacent_base_stations(clinic);
        towers.sort_by_key(|bs| {
            let active_fb = feedback_blocks.get(bs).copied().unwrap_or(0) > 0;
            let raw = upload_blocks.get(bs).copied().unwrap_or(0) > 0;
            (
                // Towers nearest the host first: a terminal-hosted server
                // then answers its own towers directly instead of burning
                // its uplink on feedback that loops back down.
                topo.hop_distance(host, bs).unwrap_or(usize::MAX),
                !active_fb, // consolidate feedback towers
                raw,        // prefer towers not already uploading
                clinic_count.get(bs).copied().unwrap_or(usize::MAX),
                bs.clone(),
            )
        });
        for bs in towers {
            if remaining == 0 {
                break;
            }
            let by_blocks = (budget
                - feedback_blocks.get(&bs).copied().unwrap_or(0).min(budget))
                / phases.rb_prbs as u64;
            let mut route = match topo.min_hop_path(host, &bs) {
                Ok(r) => r,
                Err(_) => continue,
            };
            route.push(clinic.clone());
            let by_links = feedback_res.patients_fitting(&route, phases.delta_b_bps);
            let take = (remaining as u64).min(by_blocks).min(by_links as u64) as u32;
            if take == 0 {
                continue;
            }
            feedback_res.consume(&route, take as f64 * phases.delta_b_bps);
            *feedback_blocks.entry(bs.clone()).or_default() +=
                take as u64 * phases.rb_prbs as u64;
            sol.feedback
                .push(routed_feedback(topo, host, &bs, clinic, take).ok()?);
            remaining -= take;
        }
        if remaining > 0 {
            return None; // feedback cannot reach this clinic
        }
    }

    // ---- archive streams --------------------------------------------------
    let mut storage_res = Residuals::new(inst);
    for (host, &pats) in &hosted {
        if pats == 0 {
            continue;
        }
        let flow = routed_storage(topo, host, pats).ok()?;
        if storage_res.patients_fitting(&flow.route, phases.delta_c_bps) < pats {
            return None;
        }
        storage_res.consume(&flow.route, pats as f64 * phases.delta_c_bps);
        sol.storage.push(flow);
    }

    sol.normalize();
    if !crate::energy::validate(inst, &sol).is_ok() {
        return None;
    }
    Some(sol)
}

/// One augmenting pass for the upload radio packer.
///
/// Finds a shortest alternating path from `start` (which still has `want`
/// unplaced patients) to any tower with spare capacity, shifting other
/// clinics' allocations out of the way, and applies it at the bottleneck
/// batch size. Returns how many of `start`'s patients were placed; zero
/// means no augmenting path exists, which proves the radio layer cannot
/// carry the clinic no matter how the greedy seeded.
fn augment_upload<F>(
    inst: &Instance,
    start: &str,
    want: u64,
    tower_cap: &BTreeMap<String, u64>,
    edge_cap: &F,
    tower_load: &mut BTreeMap<String, u64>,
    alloc: &mut BTreeMap<(String, String), u64>,
) -> u64
where
    F: Fn(&str, &str) -> u64,
{
    let spare = |t: &str, load: &BTreeMap<String, u64>| -> u64 {
        tower_cap
            .get(t)
            .copied()
            .unwrap_or(0)
            .saturating_sub(load.get(t).copied().unwrap_or(0))
    };
    let residual = |c: &str, t: &str, alloc: &BTreeMap<(String, String), u64>| -> u64 {
        edge_cap(c, t).saturating_sub(
            alloc
                .get(&(c.to_string(), t.to_string()))
                .copied()
                .unwrap_or(0),
        )
    };

    // BFS tree: a tower's parent is the clinic that reached it (gains
    // patients on that edge); a clinic's parent is the tower whose
    // allocation it would yield.
    let mut tower_parent: BTreeMap<String, String> = BTreeMap::new();
    let mut clinic_parent: BTreeMap<String, String> = BTreeMap::new();
    let mut queue: VecDeque<String> = VecDeque::new();
    let mut terminal: Option<String> = None;

    for t in inst.adjacent_base_stations(start) {
        if tower_parent.contains_key(&t) || residual(start, &t, alloc) == 0 {
            continue;
        }
        tower_parent.insert(t.clone(), start.to_string());
        if spare(&t, tower_load) > 0 {
            terminal = Some(t);
            break;
        }
        queue.push_back(t);
    }
    'bfs: while terminal.is_none() {
        let Some(t) = queue.pop_front() else {
            break;
        };
        let donors: Vec<String> = alloc
            .iter()
            .filter(|((c, at), &v)| at == &t && v > 0 && c != start)
            .map(|((c, _), _)| c.clone())
            .filter(|c| !clinic_parent.contains_key(c))
            .collect();
        for c in donors {
            clinic_parent.insert(c.clone(), t.clone());
            for t2 in inst.adjacent_base_stations(&c) {
                if tower_parent.contains_key(&t2) || residual(&c, &t2, alloc) == 0 {
                    continue;
                }
                tower_parent.insert(t2.clone(), c.clone());
                if spare(&t2, tower_load) > 0 {
                    terminal = Some(t2);
                    break 'bfs;
                }
                queue.push_back(t2);
            }
        }
    }
    let Some(mut t) = terminal else {
        return 0;
    };

    // Walk the tree back to `start`, collecting edges and the bottleneck.
    let mut gains: Vec<(String, String)> = Vec::new(); // (clinic, tower) += b
    let mut yields: Vec<(String, String)> = Vec::new(); // (clinic, tower) -= b
    let mut batch = want.min(spare(&t, tower_load));
    loop {
        let c = tower_parent[&t].clone();
        batch = batch.min(residual(&c, &t, alloc));
        gains.push((c.clone(), t.clone()));
        if c == start {
            break;
        }
        let yielded = clinic_parent[&c].clone();
        batch = batch.min(
            alloc
                .get(&(c.clone(), yielded.clone()))
                .copied()
                .unwrap_or(0),
        );
        yields.push((c, yielded.clone()));
        t = yielded;
    }
    if batch == 0 {
        return 0;
    }
    for (c, t) in &gains {
        *alloc.entry((c.clone(), t.clone())).or_default() += batch;
    }
    for (c, t) in &yields {
        *alloc.entry((c.clone(), t.clone())).or_default() -= batch;
    }
    // Interior towers of the path lose exactly what they gain; only the
    // terminal tower's total load grows.
    *tower_load.entry(gains[0].1.clone()).or_default() += batch;
    batch
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{PhiMode, PlacementMode};
    use crate::power::ProfileCatalog;
    use crate::topology::Topology;
    use crate::traffic::{derive_phases, AppProfile};

    fn toy(mode: PlacementMode) -> Instance {
        let topo = Topology::from_json(crate::instance::tests::TOY_TOPOLOGY).unwrap();
        let app = AppProfile::ecg();
        let phases = derive_phases(&app, mode, 669, 669, 336.0).unwrap();
        let patients = topo
            .clinics()
            .map(|c| (c.id.clone(), c.patients_ecg))
            .collect();
        Instance {
            topology: topo,
            catalog: ProfileCatalog::reference(),
            app,
            phases,
            mode,
            phi_mode: PhiMode::Fixed,
            omega_max: 669,
            storage_cap_bits: 4.0e12,
            patients,
        }
    }

    #[test]
    fn picks_the_junction_site() {
        let inst = toy(PlacementMode::Foa);
        let sol = solve(&inst).unwrap();
        assert!(crate::energy::validate(&inst, &sol).is_ok());
        // Hosting at the ONU behind the shared tower keeps the junction and
        // the second tower dark through the radio phases; with feedback
        // answered via the host's own tower the greedy prices that site the
        // way the exact solver does and lands on the same single-site
        // optimum (see the exact solver's toy test).
        assert_eq!(sol.servers.keys().collect::<Vec<_>>(), ["onu2"]);
        assert_eq!(sol.servers["onu2"], 1);
        assert_eq!(sol.hosted_patients()["onu2"], 12);
    }

    #[test]
    fn cloud_mode_uses_the_cloud_switch() {
        let inst = toy(PlacementMode::Ca);
        let sol = solve(&inst).unwrap();
        assert!(crate::energy::validate(&inst, &sol).is_ok());
        assert_eq!(sol.servers.keys().collect::<Vec<_>>(), ["cls"]);
    }

    #[test]
    fn splits_across_sites_when_capacity_binds() {
        let mut inst = toy(PlacementMode::Foa);
        inst.omega_max = 6;
        inst.phases =
            derive_phases(&inst.app, inst.mode, 6, 12, 336.0).unwrap();
        let sol = solve(&inst).unwrap();
        assert!(crate::energy::validate(&inst, &sol).is_ok(), "{}", crate::energy::validate(&inst, &sol));
        assert_eq!(sol.servers.len(), 2);
        assert_eq!(sol.hosted_patients().values().sum::<u32>(), 12);
    }

    #[test]
    fn reports_infeasible_when_sites_run_out() {
        let mut inst = toy(PlacementMode::Foa);
        inst.omega_max = 3; // needs 4 servers, only 3 sites, fixed counts
        inst.phases =
            derive_phases(&inst.app, inst.mode, 3, 12, 336.0).unwrap();
        assert!(matches!(solve(&inst), Err(HeuristicError::Infeasible(_))));
        // Allowing several servers per site restores feasibility.
        inst.phi_mode = PhiMode::Variable(None);
        let sol = solve(&inst).unwrap();
        assert!(crate::energy::validate(&inst, &sol).is_ok());
    }

    #[test]
    fn random_instances_solve_or_refuse_cleanly() {
        for seed in 0..40 {
            let inst = crate::synth::generate(&crate::synth::SynthConfig {
                seed,
                ..Default::default()
            });
            match solve(&inst) {
                Ok(sol) => {
                    let rep = crate::energy::validate(&inst, &sol);
                    assert!(rep.is_ok(), "seed {seed}: {rep}");
                }
                Err(HeuristicError::Infeasible(_)) => {}
            }
        }
    }
}
