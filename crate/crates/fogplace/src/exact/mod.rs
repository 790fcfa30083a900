//! Exact optimization: an integer-programming model of the placement
//! problem, a branch-and-bound solver over LP relaxations, LP text
//! export/import, and an exhaustive enumeration oracle.
//!
//! [`solve`] is the structured entry point: it builds the model, warms the
//! search with the greedy construction when one exists, branches on the
//! structural integers (site choices, server counts, patient assignments
//! and radio/site via-counts) and then the costed activation flags, and
//! prices every integral leaf with the energy evaluator — the relaxation
//! only supplies lower bounds, so LP arithmetic can never decide an
//! incumbent. [`solve_generic`] solves any
//! loaded model as a plain integer program (branching every integer
//! variable, objective taken from the LP), which is what the text
//! round-trip uses.

pub mod lp_text;
pub mod model;
pub mod oracle;

mod bb;

use thiserror::Error;

use crate::energy::evaluate;
use crate::instance::Instance;
use crate::solution::PlacementSolution;

pub use bb::{BbConfig, BbError};
pub use model::{build_model, Cmp, MilpModel, ModelError, ModelMap, VarId, VarKind};

/// Outcome of an exact solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: PlacementSolution,
    /// Evaluator energy of `solution`, in joules.
    pub objective_j: f64,
    /// Branch-and-bound nodes processed.
    pub nodes: u64,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("search exhausted its node budget before proving optimality")]
    NodeLimit,
    #[error("no feasible placement exists")]
    Infeasible,
    #[error(transparent)]
    Energy(#[from] crate::energy::EnergyError),
}

/// Solves an instance to proven optimality.
pub fn solve(inst: &Instance) -> Result<SolveReport, SolveError> {
    solve_with(inst, &BbConfig::default())
}

/// [`solve`] with explicit search limits.
pub fn solve_with(inst: &Instance, cfg: &BbConfig) -> Result<SolveReport, SolveError> {
    if inst.total_patients() == 0 {
        return Ok(SolveReport {
            solution: PlacementSolution::empty(),
            objective_j: 0.0,
            nodes: 0,
        });
    }
    let (milp, map) = build_model(inst)?;

    // Warm start: any valid greedy answer is an incumbent and a bound.
    let warm = crate::heuristic::solve(inst).ok().and_then(|sol| {
        let cost = evaluate(inst, &sol).ok()?.total_j();
        crate::energy::validate(inst, &sol).is_ok().then_some((cost, sol))
    });

    let outcome = bb::branch_and_bound(&milp, &map.branch_order, cfg, warm, |values| {
        let sol = map.extract_solution(inst, values);
        let rep = crate::energy::validate(inst, &sol);
        assert!(
            rep.is_ok(),
            "model admitted a solution the validator rejects: {rep}"
        );
        let cost = evaluate(inst, &sol).ok()?.total_j();
        Some((cost, sol))
    })
    .map_err(|e| match e {
        BbError::Lp(msg) => SolveError::Model(ModelError::Numerics(msg)),
    })?;

    if !outcome.proven {
        return Err(SolveError::NodeLimit);
    }
    let (objective_j, solution) = outcome.best.ok_or(SolveError::Infeasible)?;
    Ok(SolveReport {
        solution,
        objective_j,
        nodes: outcome.nodes,
    })
}

/// Solves a bare model as an integer program. Returns the LP objective at
/// the best integral point and the variable values, in model order.
pub fn solve_generic(
    milp: &MilpModel,
    cfg: &BbConfig,
) -> Result<(f64, Vec<f64>, u64), SolveError> {
    let branch: Vec<VarId> = milp.integer_vars();
    let outcome = bb::branch_and_bound(milp, &branch, cfg, None, |values| {
        let obj = milp.objective_value(values);
        Some((obj, values.to_vec()))
    })
    .map_err(|e| match e {
        BbError::Lp(msg) => SolveError::Model(ModelError::Numerics(msg)),
    })?;
    if !outcome.proven {
        return Err(SolveError::NodeLimit);
    }
    let (obj, values) = outcome.best.ok_or(SolveError::Infeasible)?;
    Ok((obj, values, outcome.nodes))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::instance::{PhiMode, PlacementMode};
    use crate::power::ProfileCatalog;
    use crate::topology::Topology;
    use crate::traffic::{derive_phases, AppProfile};

    pub(crate) fn toy(mode: PlacementMode) -> Instance {
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
    fn solves_toy_to_optimality() {
        let inst = toy(PlacementMode::Foa);
        let rep = solve(&inst).unwrap();
        assert!(crate::energy::validate(&inst, &rep.solution).is_ok());
        // Hosting at the ONU behind the shared tower lets both clinics ride
        // one base station, so the other tower and the junction stay dark
        // through the radio phases. That beats the greedy two-tower split.
        assert_eq!(rep.solution.servers.keys().collect::<Vec<_>>(), ["onu2"]);
        let eval = evaluate(&inst, &rep.solution).unwrap().total_j();
        assert!((rep.objective_j - eval).abs() < 1e-9);
        let greedy = crate::heuristic::solve(&inst).unwrap();
        let greedy_j = evaluate(&inst, &greedy).unwrap().total_j();
        assert!(rep.objective_j <= greedy_j + 1e-9);
    }

    #[test]
    fn solver_matches_oracle_on_toy() {
        for mode in [PlacementMode::Foa, PlacementMode::Ca] {
            let inst = toy(mode);
            let exact = solve(&inst).unwrap();
            let oracle = oracle::solve(&inst).unwrap();
            assert!(
                (exact.objective_j - oracle.objective_j).abs() < 1e-6,
                "{mode:?}: exact {} vs oracle {}",
                exact.objective_j,
                oracle.objective_j
            );
        }
    }
}
