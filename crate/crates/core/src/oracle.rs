//! Exhaustive reference solver.
//!
//! Evaluates every complete assignment constraint by constraint. It shares no
//! code with the table operators, so agreement with the distributed engine is
//! a genuine cross-check.

use thiserror::Error;

use crate::model::{Assignment, Dcop, ModelError, Utility, VarId};

/// Largest search space the oracle will enumerate.
pub const MAX_ASSIGNMENTS: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("search space of {0} assignments exceeds the oracle limit")]
    TooLarge(u64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleResult {
    Optimal {
        utility: i64,
        /// Lexicographically smallest optimal assignment (variables in
        /// declaration order).
        assignment: Assignment,
        optima: u64,
    },
    Infeasible,
}

impl OracleResult {
    pub fn utility(&self) -> Option<i64> {
        match self {
            OracleResult::Optimal { utility, .. } => Some(*utility),
            OracleResult::Infeasible => None,
        }
    }
}

pub fn brute_force(problem: &Dcop) -> Result<OracleResult, OracleError> {
    let size = problem.search_space();
    if size > MAX_ASSIGNMENTS {
        return Err(OracleError::TooLarge(size));
    }
    let n = problem.variables.len();
    // per-constraint dense lookup: utility of every scope tuple
    let mut lookups: Vec<(Vec<usize>, Vec<u64>, Vec<Utility>)> = Vec::new();
    for c in problem.constraint_ids() {
        let scope: Vec<usize> = problem.constraint(c).scope.iter().map(|v| v.0).collect();
        let sizes: Vec<u64> = scope.iter().map(|&v| problem.variables[v].domain.size()).collect();
        let total: u64 = sizes.iter().product();
        let mut cells = Vec::with_capacity(total as usize);
        let mut tuple: Vec<i64> = scope.iter().map(|&v| problem.variables[v].domain.lb).collect();
        for _ in 0..total {
            cells.push(problem.evaluate_constraint(c, &tuple)?);
            for k in (0..tuple.len()).rev() {
                if tuple[k] < problem.variables[scope[k]].domain.ub {
                    tuple[k] += 1;
                    break;
                }
                tuple[k] = problem.variables[scope[k]].domain.lb;
            }
        }
        lookups.push((scope, sizes, cells));
    }

    let mut values: Vec<i64> = problem.variables.iter().map(|v| v.domain.lb).collect();
    let mut best: Option<(i64, Vec<i64>, u64)> = None;
    let mut remaining = size;
    while remaining > 0 {
        remaining -= 1;
        let mut total = Utility::ZERO;
        for (scope, sizes, cells) in &lookups {
            let mut idx = 0u64;
            for (k, &v) in scope.iter().enumerate() {
                idx = idx * sizes[k] + (values[v] - problem.variables[v].domain.lb) as u64;
            }
            total = total.try_add(cells[idx as usize]).map_err(ModelError::from)?;
            if total == problem.mode.infeasible() {
                break;
            }
        }
        if let Utility::Finite(u) = total {
            match &mut best {
                Some((b, _, count)) if *b == u => *count += 1,
                Some((b, _, _)) if !problem.mode.improves(u, *b) => {}
                _ => best = Some((u, values.clone(), 1)),
            }
        }
        // odometer, last variable fastest: lexicographic enumeration
        for k in (0..n).rev() {
            if values[k] < problem.variables[k].domain.ub {
                values[k] += 1;
                break;
            }
            values[k] = problem.variables[k].domain.lb;
        }
    }
    Ok(match best {
        Some((utility, vals, optima)) => OracleResult::Optimal {
            utility,
            assignment: vals.into_iter().enumerate().map(|(i, v)| (VarId(i), v)).collect(),
            optima,
        },
        None => OracleResult::Infeasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{DcopBuilder, Mode};

    #[test]
    fn triangle_optimum() {
        let p = fixtures::triangle();
        let OracleResult::Optimal {
            utility,
            assignment,
            optima,
        } = brute_force(&p).unwrap()
        else {
            panic!("triangle is feasible");
        };
        assert_eq!(utility, 45);
        assert_eq!(optima, 1);
        let got: Vec<i64> = assignment.iter().map(|(_, v)| v).collect();
        assert_eq!(got, vec![1, 0, 0]);
        assert_eq!(p.total_utility(&assignment), Ok(Utility::Finite(45)));
    }

    #[test]
    fn all_zero_instance_counts_every_assignment() {
        let mut b = DcopBuilder::new(Mode::Maximize);
        b.agent("a").unwrap();
        b.agent("b").unwrap();
        b.variable("x", "a", -1, 1).unwrap();
        b.variable("y", "b", 2, 5).unwrap();
        b.intensional("zero", &["x", "y"], crate::expr::parse("0").unwrap())
            .unwrap();
        let p = b.build();
        let OracleResult::Optimal {
            utility,
            assignment,
            optima,
        } = brute_force(&p).unwrap()
        else {
            panic!();
        };
        assert_eq!((utility, optima), (0, 12));
        assert_eq!(assignment.iter().map(|(_, v)| v).collect::<Vec<_>>(), vec![-1, 2]);
    }

    #[test]
    fn hard_two_node_line() {
        let p = fixtures::two_node_line(2, fixtures::NO_LOSS);
        let OracleResult::Optimal {
            utility,
            assignment,
            optima,
        } = brute_force(&p).unwrap()
        else {
            panic!();
        };
        assert_eq!((utility, optima), (0, 1));
        assert_eq!(assignment.iter().map(|(_, v)| v).collect::<Vec<_>>(), vec![0, 0]);
    }

    #[test]
    fn infeasible_and_too_large() {
        let p = fixtures::two_node_line(2, "INF");
        assert_eq!(brute_force(&p), Ok(OracleResult::Infeasible));
        let p = fixtures::two_node_line(5000, fixtures::LOSS);
        assert!(matches!(brute_force(&p), Err(OracleError::TooLarge(_))));
    }
}
