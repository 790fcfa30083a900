//! The integer-programming model and its mapping back to solutions.
//!
//! All wired infrastructure in the supported datasets forms a tree above
//! the radio layer, so a commodity's wired route is determined by its
//! endpoints. That lets the model drop per-edge flow variables entirely:
//! patient counts on (clinic, tower, site) triples — `va` for upload,
//! `vb` for feedback — pin every load, link use and activation through
//! precomputed path coefficients, keeping the whole model integral. The
//! builder refuses non-tree wired graphs rather than silently producing
//! an unsound relaxation.
//!
//! Activation flags (per-phase idle gating, and the storage send/receive
//! flags tied by the send+receive = 2*active - both identity) enter the
//! objective with their natural idle costs. The costed flags join the
//! branch set after the structural variables — branching a flag puts each
//! assignment's honest flag completion in exactly one child, so the
//! relaxation's habit of under-counting idle never hides a better
//! incumbent. The zero-cost bookkeeping flags stay unbranched: the
//! objective cannot see them, and the energy evaluator reprices every
//! extracted solution anyway.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::energy::site_pue;
use crate::instance::{Instance, PhiMode};
use crate::solution::{routed_feedback, routed_storage, routed_upload, PlacementSolution};
use crate::topology::NodeKind;

/// Index into [`MilpModel::vars`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Integer,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
    pub obj: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

/// A minimization problem over bounded (integer) variables.
#[derive(Debug, Clone, Default)]
pub struct MilpModel {
    pub name: String,
    pub vars: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    index: BTreeMap<String, VarId>,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("wired infrastructure is not a tree; routing would be ambiguous")]
    NotATree,
    #[error("missing device profile: {0}")]
    Power(#[from] crate::power::PowerError),
    #[error("no route between {0:?} and {1:?}")]
    NoRoute(String, String),
    #[error("duplicate variable {0:?}")]
    DuplicateVar(String),
    #[error("numerical trouble in the relaxation: {0}")]
    Numerics(String),
}

impl MilpModel {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            ..Self::default()
        }
    }

    pub fn add_var(
        &mut self,
        name: String,
        kind: VarKind,
        lb: f64,
        ub: f64,
        obj: f64,
    ) -> Result<VarId, ModelError> {
        if self.index.contains_key(&name) {
            return Err(ModelError::DuplicateVar(name));
        }
        let id = VarId(self.vars.len());
        self.index.insert(name.clone(), id);
        self.vars.push(Variable {
            name,
            kind,
            lb,
            ub,
            obj,
        });
        Ok(id)
    }

    pub fn add_obj(&mut self, var: VarId, coeff: f64) {
        self.vars[var.0].obj += coeff;
    }

    /// Adds a constraint, merging duplicate variable mentions.
    pub fn add_con(&mut self, name: String, terms: Vec<(VarId, f64)>, cmp: Cmp, rhs: f64) {
        let mut merged: BTreeMap<VarId, f64> = BTreeMap::new();
        for (v, c) in terms {
            *merged.entry(v).or_default() += c;
        }
        let terms: Vec<(VarId, f64)> =
            merged.into_iter().filter(|(_, c)| *c != 0.0).collect();
        self.constraints.push(Constraint {
            name,
            terms,
            cmp,
            rhs,
        });
    }

    pub fn var(&self, name: &str) -> Option<VarId> {
        self.index.get(name).copied()
    }

    pub fn integer_vars(&self) -> Vec<VarId> {
        (0..self.vars.len())
            .map(VarId)
            .filter(|v| self.vars[v.0].kind == VarKind::Integer)
            .collect()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.vars
            .iter()
            .zip(values)
            .map(|(v, x)| v.obj * x)
            .sum()
    }

    /// Largest constraint violation and bound violation at `values`.
    pub fn infeasibility(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &x) in self.vars.iter().zip(values) {
            worst = worst.max(v.lb - x).max(x - v.ub);
        }
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|(v, k)| k * values[v.0]).sum();
            let gap = match c.cmp {
                Cmp::Le => lhs - c.rhs,
                Cmp::Ge => c.rhs - lhs,
                Cmp::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(gap);
        }
        worst
    }
}

/// Structured view of the placement variables inside a built model.
#[derive(Debug, Clone)]
pub struct ModelMap {
    /// Site open flags, per candidate.
    pub y: Vec<(String, VarId)>,
    /// Server counts, per candidate.
    pub phi: Vec<(String, VarId)>,
    /// (clinic, site) patient assignment counts.
    pub w: Vec<(String, String, VarId)>,
    /// (clinic, tower) upload radio counts.
    pub pa: Vec<(String, String, VarId)>,
    /// (clinic, tower) feedback radio counts.
    pub pb: Vec<(String, String, VarId)>,
    /// (clinic, tower, site) upload via-counts.
    pub va: Vec<(String, String, String, VarId)>,
    /// (site, tower, clinic) feedback via-counts.
    pub vb: Vec<(String, String, String, VarId)>,
    /// Branch set in order: structure first, finer detail later.
    pub branch_order: Vec<VarId>,
}

impl ModelMap {
    /// Rebuilds the routed solution encoded by integral structural values.
    pub fn extract_solution(&self, inst: &Instance, values: &[f64]) -> PlacementSolution {
        let topo = &inst.topology;
        let at = |v: VarId| values[v.0].round();
        let mut sol = PlacementSolution::empty();
        for (site, v) in &self.phi {
            let count = at(*v) as u32;
            if count > 0 {
                sol.servers.insert(site.clone(), count);
            }
        }
        for (clinic, tower, site, v) in &self.va {
            let n = at(*v) as u32;
            if n > 0 {
                sol.upload.push(
                    routed_upload(topo, clinic, tower, site, n)
                        .expect("model paths exist in the topology"),
                );
            }
        }
        for (site, tower, clinic, v) in &self.vb {
            let n = at(*v) as u32;
            if n > 0 {
                sol.feedback.push(
                    routed_feedback(topo, site, tower, clinic, n)
                        .expect("model paths exist in the topology"),
                );
            }
        }
        let mut hosted: BTreeMap<&str, u32> = BTreeMap::new();
        for (site, v) in self.w.iter().map(|(_, d, v)| (d, v)) {
            *hosted.entry(site.as_str()).or_default() += at(*v) as u32;
        }
        for (site, pats) in hosted {
            if pats > 0 {
                sol.storage.push(
                    routed_storage(topo, site, pats).expect("storage route exists"),
                );
            }
        }
        sol.normalize();
        sol
    }

    /// Variable values realizing a routed solution, flags included. The
    /// inverse of [`Self::extract_solution`]; used for warm starts and for
    /// checking that the model prices solutions exactly like the
    /// evaluator.
    pub fn assignment_from_solution(
        &self,
        milp: &MilpModel,
        inst: &Instance,
        sol: &PlacementSolution,
    ) -> Vec<f64> {
        let mut values = vec![0.0; milp.vars.len()];
        let set = |name: String, v: f64, values: &mut Vec<f64>| {
            if let Some(id) = milp.var(&name) {
                values[id.0] = v;
            }
        };

        for (site, &count) in &sol.servers {
            set(format!("y_{site}"), 1.0, &mut values);
            set(format!("phi_{site}"), count as f64, &mut values);
        }
        let mut agg: BTreeMap<String, f64> = BTreeMap::new();
        for f in &sol.upload {
            *agg.entry(format!("va_{}_{}_{}", f.clinic, f.bs, f.host))
                .or_default() += f.patients as f64;
            *agg.entry(format!("pa_{}_{}", f.clinic, f.bs)).or_default() +=
                f.patients as f64;
            *agg.entry(format!("w_{}_{}", f.clinic, f.host)).or_default() +=
                f.patients as f64;
        }
        for f in &sol.feedback {
            *agg.entry(format!("vb_{}_{}_{}", f.host, f.bs, f.clinic))
                .or_default() += f.patients as f64;
            *agg.entry(format!("pb_{}_{}", f.clinic, f.bs)).or_default() +=
                f.patients as f64;
        }
        for (name, v) in agg {
            set(name, v, &mut values);
        }

        // Activation flags from the routes.
        let _ = inst;
        for f in &sol.upload {
            set(format!("za_{}", f.bs), 1.0, &mut values);
            for hop in f.route.iter().skip(2) {
                set(format!("za_{hop}"), 1.0, &mut values);
            }
        }
        for f in &sol.feedback {
            set(format!("zb_{}", f.bs), 1.0, &mut values);
            for hop in &f.route[..f.route.len() - 2] {
                set(format!("zb_{hop}"), 1.0, &mut values);
            }
        }
        for f in &sol.storage {
            let n = f.route.len();
            for (i, hop) in f.route.iter().enumerate() {
                if i + 1 < n {
                    set(format!("th_{hop}"), 1.0, &mut values);
                }
                if i > 0 {
                    set(format!("vh_{hop}"), 1.0, &mut values);
                }
                set(format!("zc_{hop}"), 1.0, &mut values);
            }
        }
        // nu = 2*zc - th - vh at every storage-touched node.
        for id in 0..milp.vars.len() {
            let Some(node) = milp.vars[id].name.strip_prefix("nu_") else {
                continue;
            };
            let g = |p: &str| {
                milp.var(&format!("{p}_{node}"))
                    .map(|v| values[v.0])
                    .unwrap_or(0.0)
            };
            let val = 2.0 * g("zc") - g("th") - g("vh");
            values[id] = val;
        }
        values
    }
}

/// Builds the model for an instance.
pub fn build_model(inst: &Instance) -> Result<(MilpModel, ModelMap), ModelError> {
    let topo = &inst.topology;
    let phases = &inst.phases;
    let cat = &inst.catalog;
    let pue = &cat.pue;

    ensure_wired_tree(inst)?;

    let storage = topo.storage_node().to_string();
    let cands = inst.candidates();
    let clinics: Vec<(String, u32)> = inst
        .patients
        .iter()
        .filter(|(_, &p)| p > 0)
        .map(|(c, &p)| (c.clone(), p))
        .collect();
    let total: u32 = clinics.iter().map(|(_, p)| p).sum();
    let per_server = inst.per_server_patients();
    let phi_cap = inst.phi_cap();
    let site_cap = per_server.saturating_mul(phi_cap);
    let budget = cat.radio.prb_budget as f64;
    let (tau_a, tau_b, tau_c) = (phases.tau_a_s, phases.tau_b_s, phases.tau_c_s);
    let (da, db, dc) = (phases.delta_a_bps, phases.delta_b_bps, phases.delta_c_bps);

    let mut m = MilpModel::new("server-placement");
    let mut map = ModelMap {
        y: Vec::new(),
        phi: Vec::new(),
        w: Vec::new(),
        pa: Vec::new(),
        pb: Vec::new(),
        va: Vec::new(),
        vb: Vec::new(),
        branch_order: Vec::new(),
    };

    // Per-node billing facts for wired gear.
    struct NodeBill {
        pue: f64,
        red: f64,
        idle: f64,
        /// Watts per (bit/second) of load; for the archive this is watts
        /// per stored bit with the retention window already folded in.
        load: f64,
    }
    let mut bill: BTreeMap<String, NodeBill> = BTreeMap::new();
    for node in topo.nodes() {
        if node.kind == NodeKind::Clinic {
            continue;
        }
        let prof = match cat.device_for(node) {
            Some(p) => p,
            None => continue,
        };
        let load = if node.kind == NodeKind::CloudStorage {
            (prof.max_power_w - prof.idle_power_w) / prof.capacity_bps * tau_c
        } else {
            prof.energy_per_bit()
        };
        bill.insert(
            node.id.clone(),
            NodeBill {
                pue: site_pue(node.kind, pue),
                red: prof.redundancy as f64,
                idle: prof.attributed_idle_w(),
                load,
            },
        );
    }
    let kind_of = |id: &str| topo.node(id).map(|n| n.kind);

    // ---- structural variables --------------------------------------------
    let server_prof = cat.server(&inst.app.name)?;
    let window = tau_a + tau_b + tau_c;
    let es = cat.device("EthernetSwitch")?;
    let es_idle_j = es.attributed_idle_w() * window * pue.network * es.redundancy as f64;
    let es_load = es.energy_per_bit()
        * (da * tau_a + db * tau_b + dc * tau_c)
        * pue.network
        * es.redundancy as f64;
    let adds_switch = |site: &str| {
        inst.phi_mode.uses_ethernet_switch() && kind_of(site) != Some(NodeKind::CloudSwitch)
    };

    for d in &cands {
        let y_obj = if adds_switch(d) { es_idle_j } else { 0.0 };
        let y = m.add_var(format!("y_{d}"), VarKind::Integer, 0.0, 1.0, y_obj)?;
        map.y.push((d.clone(), y));
    }
    for d in &cands {
        let phi_obj = (server_prof.idle_power_w * window
            + server_prof.max_power_w * inst.app.per_server_s)
            * pue.datacenter;
        let phi = m.add_var(
            format!("phi_{d}"),
            VarKind::Integer,
            0.0,
            phi_cap as f64,
            phi_obj,
        )?;
        map.phi.push((d.clone(), phi));
    }
    for (s, pats) in &clinics {
        for d in &cands {
            // Storage path loads, processing volume and switch loads all
            // scale with the patients this site hosts for this clinic.
            let path = topo
                .min_hop_path(d, &storage)
                .map_err(|_| ModelError::NoRoute(d.clone(), storage.clone()))?;
            let mut obj = server_prof.max_power_w * inst.app.per_patient_s * pue.datacenter;
            for hop in &path {
                let b = &bill[hop.as_str()];
                obj += b.pue * b.red * b.load * dc * tau_c;
            }
            if adds_switch(d) {
                obj += es_load;
            }
            let ub = (*pats).min(site_cap) as f64;
            let w = m.add_var(format!("w_{s}_{d}"), VarKind::Integer, 0.0, ub, obj)?;
            map.w.push((s.clone(), d.clone(), w));
        }
    }

    let bs_prof = cat.device("BaseStation")?;
    let prb_watt = cat.radio.prb_watt;
    for (s, pats) in &clinics {
        for j in inst.adjacent_base_stations(s) {
            let radio_up = topo.capacity(s, &j).unwrap_or(0.0);
            let ub = (*pats as f64)
                .min((radio_up / da + 1e-9).floor())
                .min((budget / phases.ra_prbs as f64).floor());
            let obj = prb_watt * phases.ra_prbs as f64 * tau_a * pue.network;
            let pa = m.add_var(format!("pa_{s}_{j}"), VarKind::Integer, 0.0, ub, obj)?;
            map.pa.push((s.clone(), j.clone(), pa));

            let radio_down = topo.capacity(&j, s).unwrap_or(0.0);
            let ubb = (*pats as f64)
                .min((radio_down / db + 1e-9).floor())
                .min((budget / phases.rb_prbs as f64).floor());
            let obj = prb_watt * phases.rb_prbs as f64 * tau_b * pue.network;
            let pb = m.add_var(format!("pb_{s}_{j}"), VarKind::Integer, 0.0, ubb, obj)?;
            map.pb.push((s.clone(), j.clone(), pb));
        }
    }

    // Via-counts and their path-coefficient objective terms.
    for (s, pats) in &clinics {
        for j in inst.adjacent_base_stations(s) {
            for d in &cands {
                let path = topo
                    .min_hop_path(&j, d)
                    .map_err(|_| ModelError::NoRoute(j.clone(), d.clone()))?;
                let mut obj = 0.0;
                for hop in &path[1..] {
                    let b = &bill[hop.as_str()];
                    obj += b.pue * b.red * b.load * da * tau_a;
                }
                let ub = (*pats).min(site_cap) as f64;
                let va =
                    m.add_var(format!("va_{s}_{j}_{d}"), VarKind::Integer, 0.0, ub, obj)?;
                map.va.push((s.clone(), j.clone(), d.clone(), va));

                let mut obj = 0.0;
                for hop in &path[1..] {
                    let b = &bill[hop.as_str()];
                    obj += b.pue * b.red * b.load * db * tau_b;
                }
                let vb =
                    m.add_var(format!("vb_{d}_{j}_{s}"), VarKind::Integer, 0.0, ub, obj)?;
                map.vb.push((d.clone(), j.clone(), s.clone(), vb));
            }
        }
    }

    // ---- load expressions per wired node and edge -------------------------
    // upload-in, feedback-out, storage-out, storage-in (bit/s coefficients)
    let mut p_in: BTreeMap<String, Vec<(VarId, f64)>> = BTreeMap::new();
    let mut f_out: BTreeMap<String, Vec<(VarId, f64)>> = BTreeMap::new();
    let mut s_out: BTreeMap<String, Vec<(VarId, f64)>> = BTreeMap::new();
    let mut s_in: BTreeMap<String, Vec<(VarId, f64)>> = BTreeMap::new();
    let mut edge_a: BTreeMap<(String, String), Vec<(VarId, f64)>> = BTreeMap::new();
    let mut edge_b: BTreeMap<(String, String), Vec<(VarId, f64)>> = BTreeMap::new();
    let mut edge_c: BTreeMap<(String, String), Vec<(VarId, f64)>> = BTreeMap::new();

    for (_, j, d, va) in &map.va {
        let path = topo.min_hop_path(j, d).expect("checked above");
        for hop in &path[1..] {
            p_in.entry(hop.clone()).or_default().push((*va, da));
        }
        for pair in path.windows(2) {
            edge_a
                .entry((pair[0].clone(), pair[1].clone()))
                .or_default()
                .push((*va, da));
        }
    }
    for (d, j, _, vb) in &map.vb {
        let path: Vec<String> = {
            let mut p = topo.min_hop_path(j, d).expect("checked above");
            p.reverse();
            p
        };
        for hop in &path[..path.len() - 1] {
            f_out.entry(hop.clone()).or_default().push((*vb, db));
        }
        for pair in path.windows(2) {
            edge_b
                .entry((pair[0].clone(), pair[1].clone()))
                .or_default()
                .push((*vb, db));
        }
    }
    for (_, d, w) in &map.w {
        let path = topo.min_hop_path(d, &storage).expect("checked above");
        let n = path.len();
        for (i, hop) in path.iter().enumerate() {
            if i + 1 < n {
                s_out.entry(hop.clone()).or_default().push((*w, dc));
            }
            if i > 0 {
                s_in.entry(hop.clone()).or_default().push((*w, dc));
            }
        }
        for pair in path.windows(2) {
            edge_c
                .entry((pair[0].clone(), pair[1].clone()))
                .or_default()
                .push((*w, dc));
        }
    }

    // ---- constraints -------------------------------------------------------
    for (s, pats) in &clinics {
        let terms: Vec<(VarId, f64)> = map
            .w
            .iter()
            .filter(|(ws, _, _)| ws == s)
            .map(|(_, _, v)| (*v, 1.0))
            .collect();
        m.add_con(format!("cover_{s}"), terms, Cmp::Eq, *pats as f64);
    }
    for (s, pats) in &clinics {
        for d in &cands {
            let w = m.var(&format!("w_{s}_{d}")).unwrap();
            let mut up: Vec<(VarId, f64)> = vec![(w, -1.0)];
            let mut fb: Vec<(VarId, f64)> = vec![(w, -1.0)];
            for (vs, _, vd, v) in &map.va {
                if vs == s && vd == d {
                    up.push((*v, 1.0));
                }
            }
            for (vd, _, vs, v) in &map.vb {
                if vs == s && vd == d {
                    fb.push((*v, 1.0));
                }
            }
            m.add_con(format!("upvia_{s}_{d}"), up, Cmp::Eq, 0.0);
            m.add_con(format!("fbvia_{s}_{d}"), fb, Cmp::Eq, 0.0);

            let y = m.var(&format!("y_{d}")).unwrap();
            let gate_ub = (*pats).min(site_cap) as f64;
            m.add_con(
                format!("gate_{s}_{d}"),
                vec![(w, 1.0), (y, -gate_ub)],
                Cmp::Le,
                0.0,
            );
        }
    }
    for (s, j, v) in &map.pa {
        let mut terms: Vec<(VarId, f64)> = vec![(*v, -1.0)];
        for (vs, vj, _, va) in &map.va {
            if vs == s && vj == j {
                terms.push((*va, 1.0));
            }
        }
        m.add_con(format!("defpa_{s}_{j}"), terms, Cmp::Eq, 0.0);
    }
    for (s, j, v) in &map.pb {
        let mut terms: Vec<(VarId, f64)> = vec![(*v, -1.0)];
        for (_, vj, vs, vb) in &map.vb {
            if vs == s && vj == j {
                terms.push((*vb, 1.0));
            }
        }
        m.add_con(format!("defpb_{s}_{j}"), terms, Cmp::Eq, 0.0);
    }
    for (d, phi) in &map.phi {
        let y = m.var(&format!("y_{d}")).unwrap();
        let w_terms: Vec<(VarId, f64)> = map
            .w
            .iter()
            .filter(|(_, wd, _)| wd == d)
            .map(|(_, _, v)| (*v, 1.0))
            .collect();
        let mut cap_terms = w_terms.clone();
        cap_terms.push((*phi, -(inst.omega_max as f64)));
        m.add_con(format!("srvcap_{d}"), cap_terms, Cmp::Le, 0.0);
        let mut vol_terms: Vec<(VarId, f64)> = w_terms
            .iter()
            .map(|(v, _)| (*v, inst.app.result_bits))
            .collect();
        vol_terms.push((*phi, -inst.storage_cap_bits));
        m.add_con(format!("volume_{d}"), vol_terms, Cmp::Le, 0.0);
        match inst.phi_mode {
            PhiMode::Fixed => {
                m.add_con(
                    format!("phifix_{d}"),
                    vec![(*phi, 1.0), (y, -1.0)],
                    Cmp::Eq,
                    0.0,
                );
            }
            PhiMode::Variable(_) => {
                m.add_con(
                    format!("phicap_{d}"),
                    vec![(*phi, 1.0), (y, -(phi_cap as f64))],
                    Cmp::Le,
                    0.0,
                );
                m.add_con(
                    format!("phimin_{d}"),
                    vec![(*phi, 1.0), (y, -1.0)],
                    Cmp::Ge,
                    0.0,
                );
            }
        }
    }

    // Radio scheduling budgets, per tower and phase.
    let mut towers: Vec<String> = map.pa.iter().map(|(_, j, _)| j.clone()).collect();
    towers.sort();
    towers.dedup();
    for j in &towers {
        let terms: Vec<(VarId, f64)> = map
            .pa
            .iter()
            .filter(|(_, pj, _)| pj == j)
            .map(|(_, _, v)| (*v, phases.ra_prbs as f64))
            .collect();
        m.add_con(format!("prba_{j}"), terms, Cmp::Le, budget);
        let terms: Vec<(VarId, f64)> = map
            .pb
            .iter()
            .filter(|(_, pj, _)| pj == j)
            .map(|(_, _, v)| (*v, phases.rb_prbs as f64))
            .collect();
        m.add_con(format!("prbb_{j}"), terms, Cmp::Le, budget);
    }

    // Wired link capacities per phase.
    for (tag, edges) in [("a", &edge_a), ("b", &edge_b), ("c", &edge_c)] {
        for ((from, to), terms) in edges {
            let cap = topo
                .capacity(from, to)
                .expect("paths only use existing links");
            m.add_con(
                format!("link{tag}_{from}_{to}"),
                terms.clone(),
                Cmp::Le,
                cap,
            );
        }
    }

    // Activation flags with their idle energy and gating. Every flag that
    // carries cost joins the branch set so bounds become exact at leaves.
    let mut flags: Vec<VarId> = Vec::new();
    for (node, terms) in &p_in {
        let b = &bill[node.as_str()];
        let za = m.add_var(
            format!("za_{node}"),
            VarKind::Integer,
            0.0,
            1.0,
            b.pue * b.red * b.idle * tau_a,
        )?;
        flags.push(za);
        let mut gate = terms.clone();
        let big = inst.big_m(node, da);
        gate.push((za, -big));
        m.add_con(format!("acta_{node}"), gate, Cmp::Le, 0.0);
    }
    for (node, terms) in &f_out {
        let b = &bill[node.as_str()];
        let zb = m.add_var(
            format!("zb_{node}"),
            VarKind::Integer,
            0.0,
            1.0,
            b.pue * b.red * b.idle * tau_b,
        )?;
        flags.push(zb);
        let mut gate = terms.clone();
        let big = inst.big_m_out(node, db);
        gate.push((zb, -big));
        m.add_con(format!("actb_{node}"), gate, Cmp::Le, 0.0);
    }
    // Tower activations gate on patient counts rather than bit rates.
    for j in &towers {
        let b_idle = bs_prof.attributed_idle_w();
        let za = m.add_var(
            format!("za_{j}"),
            VarKind::Integer,
            0.0,
            1.0,
            pue.network * b_idle * tau_a,
        )?;
        flags.push(za);
        let mut gate: Vec<(VarId, f64)> = map
            .pa
            .iter()
            .filter(|(_, pj, _)| pj == j)
            .map(|(_, _, v)| (*v, 1.0))
            .collect();
        gate.push((za, -(total as f64)));
        m.add_con(format!("acta_{j}"), gate, Cmp::Le, 0.0);
        let zb = m.add_var(
            format!("zb_{j}"),
            VarKind::Integer,
            0.0,
            1.0,
            pue.network * b_idle * tau_b,
        )?;
        flags.push(zb);
        let mut gate: Vec<(VarId, f64)> = map
            .pb
            .iter()
            .filter(|(_, pj, _)| pj == j)
            .map(|(_, _, v)| (*v, 1.0))
            .collect();
        gate.push((zb, -(total as f64)));
        m.add_con(format!("actb_{j}"), gate, Cmp::Le, 0.0);
    }
    // Storage flags and the send+receive = 2*active - both identity.
    let mut storage_nodes: Vec<String> = s_out.keys().cloned().collect();
    storage_nodes.extend(s_in.keys().cloned());
    storage_nodes.sort();
    storage_nodes.dedup();
    for node in &storage_nodes {
        let b = &bill[node.as_str()];
        let zc = m.add_var(
            format!("zc_{node}"),
            VarKind::Integer,
            0.0,
            1.0,
            b.pue * b.red * b.idle * tau_c,
        )?;
        flags.push(zc);
        let nu = m.add_var(format!("nu_{node}"), VarKind::Integer, 0.0, 1.0, 0.0)?;
        let mut xor: Vec<(VarId, f64)> = vec![(zc, -2.0), (nu, 1.0)];
        if let Some(terms) = s_out.get(node) {
            let th = m.add_var(format!("th_{node}"), VarKind::Integer, 0.0, 1.0, 0.0)?;
            let mut gate = terms.clone();
            gate.push((th, -inst.big_m_out(node, dc)));
            m.add_con(format!("actth_{node}"), gate, Cmp::Le, 0.0);
            // theta must also rise with the flow it covers; downward force
            // comes from zc's cost through the identity.
            xor.push((th, 1.0));
        }
        if let Some(terms) = s_in.get(node) {
            let vh = m.add_var(format!("vh_{node}"), VarKind::Integer, 0.0, 1.0, 0.0)?;
            let mut gate = terms.clone();
            gate.push((vh, -inst.big_m(node, dc)));
            m.add_con(format!("actvh_{node}"), gate, Cmp::Le, 0.0);
            xor.push((vh, 1.0));
        }
        m.add_con(format!("xoract_{node}"), xor, Cmp::Eq, 0.0);
    }

    map.branch_order = map
        .y
        .iter()
        .map(|(_, v)| *v)
        .chain(map.phi.iter().map(|(_, v)| *v))
        .chain(map.w.iter().map(|(_, _, v)| *v))
        .chain(map.pa.iter().map(|(_, _, v)| *v))
        .chain(map.pb.iter().map(|(_, _, v)| *v))
        .chain(map.va.iter().map(|(_, _, _, v)| *v))
        .chain(map.vb.iter().map(|(_, _, _, v)| *v))
        .chain(flags)
        .collect();

    Ok((m, map))
}

/// The wired (non-clinic) subgraph must be a tree for path-encoded routing
/// to be exact.
fn ensure_wired_tree(inst: &Instance) -> Result<(), ModelError> {
    let topo = &inst.topology;
    let wired: Vec<&str> = topo
        .nodes()
        .iter()
        .filter(|n| n.kind != NodeKind::Clinic)
        .map(|n| n.id.as_str())
        .collect();
    let is_wired = |id: &str| topo.node(id).map(|n| n.kind) != Some(NodeKind::Clinic);
    let undirected: usize = topo
        .links()
        .iter()
        .filter(|l| l.a < l.b && is_wired(&l.a) && is_wired(&l.b))
        .count();
    if undirected != wired.len().saturating_sub(1) {
        return Err(ModelError::NotATree);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::evaluate;
    use crate::instance::PlacementMode;

    #[test]
    fn model_prices_solutions_like_the_evaluator() {
        for mode in [PlacementMode::Foa, PlacementMode::Ca] {
            let inst = crate::exact::tests::toy(mode);
            let (milp, map) = build_model(&inst).unwrap();
            let sol = crate::heuristic::solve(&inst).unwrap();
            let values = map.assignment_from_solution(&milp, &inst, &sol);
            let want = evaluate(&inst, &sol).unwrap().total_j();
            let got = milp.objective_value(&values);
            assert!(
                (got - want).abs() < 1e-6,
                "{mode:?}: model {got} vs evaluator {want}"
            );
            assert!(
                milp.infeasibility(&values) < 1e-6,
                "{mode:?}: solution violates the model by {}",
                milp.infeasibility(&values)
            );
        }
    }

    #[test]
    fn model_round_trips_through_extraction() {
        let inst = crate::exact::tests::toy(PlacementMode::Foa);
        let (milp, map) = build_model(&inst).unwrap();
        let sol = crate::heuristic::solve(&inst).unwrap();
        let values = map.assignment_from_solution(&milp, &inst, &sol);
        let back = map.extract_solution(&inst, &values);
        assert_eq!(sol.to_json(), back.to_json());
    }

    #[test]
    fn synthetic_instances_price_consistently() {
        let mut checked = 0;
        for seed in 0..60 {
            let inst = crate::synth::generate(&crate::synth::SynthConfig {
                seed,
                ..Default::default()
            });
            let Ok(sol) = crate::heuristic::solve(&inst) else {
                continue;
            };
            let (milp, map) = build_model(&inst).unwrap();
            let values = map.assignment_from_solution(&milp, &inst, &sol);
            let want = evaluate(&inst, &sol).unwrap().total_j();
            let got = milp.objective_value(&values);
            assert!(
                (got - want).abs() < 1e-6 * want.max(1.0),
                "seed {seed}: model {got} vs evaluator {want}"
            );
            assert!(
                milp.infeasibility(&values) < 1e-6,
                "seed {seed}: infeasibility {}",
                milp.infeasibility(&values)
            );
            checked += 1;
        }
        assert!(checked > 30, "only {checked} seeds produced solutions");
    }
}
