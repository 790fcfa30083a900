//! Depth-first branch and bound over LP relaxations.
//!
//! The search is generic over the incumbent payload: the caller prices
//! every integral point through the `leaf` callback and may return a cost
//! that differs from the LP objective (the structured solver prices
//! leaves with the energy evaluator). Bounds stay sound as long as the
//! LP objective never exceeds the caller's cost for the honest completion
//! of any integer point in the box, which the model guarantees by putting
//! every costed flag in the branch set: branching a flag splits the box
//! so each point's honest completion lands in exactly one child.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use thiserror::Error;

use super::model::{Cmp, MilpModel, VarId};

/// Search limits and tolerances.
#[derive(Debug, Clone)]
pub struct BbConfig {
    /// Abort (unproven) after this many explored nodes.
    pub node_limit: u64,
    /// Prune boxes whose bound is within this of the incumbent, in
    /// objective units.
    pub tol: f64,
    /// How far from the nearest integer an LP value may sit and still
    /// count as integral.
    pub int_tol: f64,
}

impl Default for BbConfig {
    fn default() -> Self {
        Self {
            node_limit: 500_000,
            tol: 1e-6,
            int_tol: 1e-6,
        }
    }
}

#[derive(Debug, Error)]
pub enum BbError {
    #[error("LP relaxation failed: {0}")]
    Lp(String),
}

/// What the search found.
#[derive(Debug, Clone)]
pub struct BbOutcome<P> {
    /// Best incumbent and the caller's cost for it.
    pub best: Option<(f64, P)>,
    /// Nodes explored.
    pub nodes: u64,
    /// False when the node budget ran out first; `best` is then only a
    /// bound, not an answer.
    pub proven: bool,
}

/// Minimizes `model` over integral values of the `branch` variables.
///
/// `warm` seeds the incumbent. `leaf` prices a point where every branch
/// variable is integral; returning `None` discards the point.
pub fn branch_and_bound<P>(
    model: &MilpModel,
    branch: &[VarId],
    cfg: &BbConfig,
    warm: Option<(f64, P)>,
    mut leaf: impl FnMut(&[f64]) -> Option<(f64, P)>,
) -> Result<BbOutcome<P>, BbError> {
    let base: Vec<(f64, f64)> = model.vars.iter().map(|v| (v.lb, v.ub)).collect();
    let mut best = warm;
    let mut nodes: u64 = 0;
    let mut proven = true;
    let mut stack = vec![base];

    while let Some(bounds) = stack.pop() {
        if nodes >= cfg.node_limit {
            proven = false;
            break;
        }
        nodes += 1;
        if bounds.iter().any(|(lb, ub)| lb > ub) {
            continue;
        }
        let Some((bound, values)) = solve_lp(model, &bounds)? else {
            continue;
        };
        if let Some((incumbent, _)) = &best {
            if bound >= incumbent - cfg.tol {
                continue;
            }
        }
        let fractional = branch.iter().copied().find(|v| {
            let x = values[v.0];
            (x - x.round()).abs() > cfg.int_tol
        });
        let Some(v) = fractional else {
            if let Some((cost, payload)) = leaf(&values) {
                if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                    best = Some((cost, payload));
                }
            }
            continue;
        };
        let x = values[v.0];
        let mut lo = bounds.clone();
        lo[v.0].1 = x.floor();
        let mut hi = bounds;
        hi[v.0].0 = x.ceil();
        // Explore the child nearer the LP value first (last pushed).
        if x - x.floor() <= 0.5 {
            stack.push(hi);
            stack.push(lo);
        } else {
            stack.push(lo);
            stack.push(hi);
        }
    }

    Ok(BbOutcome {
        best,
        nodes,
        proven,
    })
}

/// Solves the relaxation under per-node bounds. `None` means infeasible.
fn solve_lp(
    model: &MilpModel,
    bounds: &[(f64, f64)],
) -> Result<Option<(f64, Vec<f64>)>, BbError> {
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<microlp::Variable> = model
        .vars
        .iter()
        .zip(bounds)
        .map(|(v, &(lb, ub))| p.add_var(v.obj, (lb, ub)))
        .collect();
    for c in &model.constraints {
        if c.terms.is_empty() {
            let ok = match c.cmp {
                Cmp::Le => 0.0 <= c.rhs,
                Cmp::Ge => 0.0 >= c.rhs,
                Cmp::Eq => c.rhs == 0.0,
            };
            if ok {
                continue;
            }
            return Ok(None);
        }
        let terms: Vec<(microlp::Variable, f64)> =
            c.terms.iter().map(|(v, k)| (vars[v.0], *k)).collect();
        let op = match c.cmp {
            Cmp::Le => ComparisonOp::Le,
            Cmp::Ge => ComparisonOp::Ge,
            Cmp::Eq => ComparisonOp::Eq,
        };
        p.add_constraint(&terms[..], op, c.rhs);
    }
    match p.solve() {
        Ok(s) => {
            let values: Vec<f64> = vars.iter().map(|v| s[*v]).collect();
            Ok(Some((s.objective(), values)))
        }
        Err(microlp::Error::Infeasible) => Ok(None),
        Err(e) => Err(BbError::Lp(e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::model::VarKind;

    fn knapsack() -> MilpModel {
        // max 10a + 13b + 7c s.t. 3a + 4b + 2c <= 6, binary — optimum
        // packs b and c (value 20, weight 6); minimize the negation.
        let mut m = MilpModel::new("knapsack");
        let a = m
            .add_var("a".into(), VarKind::Integer, 0.0, 1.0, -10.0)
            .unwrap();
        let b = m
            .add_var("b".into(), VarKind::Integer, 0.0, 1.0, -13.0)
            .unwrap();
        let c = m
            .add_var("c".into(), VarKind::Integer, 0.0, 1.0, -7.0)
            .unwrap();
        m.add_con(
            "cap".into(),
            vec![(a, 3.0), (b, 4.0), (c, 2.0)],
            Cmp::Le,
            6.0,
        );
        m
    }

    #[test]
    fn solves_a_small_knapsack() {
        let m = knapsack();
        let branch = m.integer_vars();
        let out = branch_and_bound(&m, &branch, &BbConfig::default(), None, |v| {
            Some((m.objective_value(v), v.to_vec()))
        })
        .unwrap();
        assert!(out.proven);
        let (obj, values) = out.best.unwrap();
        // Items b and c fill the budget exactly (4 + 2 = 6) for value 20.
        assert!((obj + 20.0).abs() < 1e-9, "objective {obj}");
        assert_eq!(
            values.iter().map(|x| x.round() as i64).collect::<Vec<_>>(),
            [0, 1, 1]
        );
    }

    #[test]
    fn warm_start_survives_when_nothing_beats_it() {
        let mut m = MilpModel::new("gap");
        let x = m
            .add_var("x".into(), VarKind::Integer, 0.0, 5.0, 1.0)
            .unwrap();
        m.add_con("floor".into(), vec![(x, 1.0)], Cmp::Ge, 2.0);
        let branch = m.integer_vars();
        // Claim a phantom incumbent below the true optimum of 2.
        let out = branch_and_bound(&m, &branch, &BbConfig::default(), Some((1.5, vec![])), |v| {
            Some((m.objective_value(v), v.to_vec()))
        })
        .unwrap();
        assert!(out.proven);
        let (obj, payload) = out.best.unwrap();
        assert_eq!(obj, 1.5);
        assert!(payload.is_empty());
    }

    #[test]
    fn infeasible_models_come_back_empty() {
        let mut m = MilpModel::new("void");
        let x = m
            .add_var("x".into(), VarKind::Integer, 0.0, 1.0, 1.0)
            .unwrap();
        m.add_con("hi".into(), vec![(x, 1.0)], Cmp::Ge, 2.0);
        let branch = m.integer_vars();
        let out =
            branch_and_bound(&m, &branch, &BbConfig::default(), None::<(f64, ())>, |_| {
                panic!("no integral point exists")
            })
            .unwrap();
        assert!(out.proven);
        assert!(out.best.is_none());
    }

    #[test]
    fn node_budget_marks_the_outcome_unproven() {
        let m = knapsack();
        let branch = m.integer_vars();
        let cfg = BbConfig {
            node_limit: 1,
            ..BbConfig::default()
        };
        let out = branch_and_bound(&m, &branch, &cfg, None, |v| {
            Some((m.objective_value(v), v.to_vec()))
        })
        .unwrap();
        assert!(!out.proven);
    }
}
