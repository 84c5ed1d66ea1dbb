//! Sparse utility tables and the JOIN / PROJECTION operators.
//!
//! A table stores only feasible rows: a tuple that is absent is infeasible
//! (`-inf` when maximizing, `+inf` when minimizing). Joining therefore keeps a
//! tuple only when both sides have it, and projecting keeps a reduced tuple
//! only when at least one extension survives.
//!
//! Every operator also has a `*_counted` form that adds the number of rows it
//! touched to a work counter; that count drives the simulated runtime.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::model::{Assignment, ConstraintBody, ConstraintId, Dcop, Domain, Mode, ModelError, Utility, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScopeVar {
    pub var: VarId,
    pub domain: Domain,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("cannot combine a maximization table with a minimization table")]
    ModeMismatch,
    #[error("variable #{} is not in the table scope", .0.0)]
    VariableNotInScope(VarId),
    #[error("no feasible row extends the fixed values")]
    NoFeasibleExtension,
    #[error("row {tuple:?} does not fit the scope")]
    BadRow { tuple: Vec<i64> },
    #[error("new scope order is not a permutation of the current scope")]
    ScopeMismatch,
    #[error("utility overflow while joining")]
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtilityTable {
    mode: Mode,
    scope: Vec<ScopeVar>,
    rows: BTreeMap<Vec<i64>, i64>,
}

impl UtilityTable {
    /// The neutral table: empty scope, one row of value zero.
    pub fn unit(mode: Mode) -> Self {
        let mut rows = BTreeMap::new();
        rows.insert(Vec::new(), 0);
        UtilityTable {
            mode,
            scope: Vec::new(),
            rows,
        }
    }

    pub fn new(mode: Mode, scope: Vec<ScopeVar>) -> Self {
        UtilityTable {
            mode,
            scope,
            rows: BTreeMap::new(),
        }
    }

    pub fn from_rows(
        mode: Mode,
        scope: Vec<ScopeVar>,
        rows: impl IntoIterator<Item = (Vec<i64>, i64)>,
    ) -> Result<Self, TableError> {
        let mut t = UtilityTable::new(mode, scope);
        for (tuple, u) in rows {
            t.insert(tuple, u)?;
        }
        Ok(t)
    }

    /// Adds or replaces a row.
    pub fn insert(&mut self, tuple: Vec<i64>, utility: i64) -> Result<(), TableError> {
        let fits = tuple.len() == self.scope.len() && tuple.iter().zip(&self.scope).all(|(v, s)| s.domain.contains(*v));
        if !fits {
            return Err(TableError::BadRow { tuple });
        }
        self.rows.insert(tuple, utility);
        Ok(())
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn scope(&self) -> &[ScopeVar] {
        &self.scope
    }

    pub fn scope_vars(&self) -> Vec<VarId> {
        self.scope.iter().map(|s| s.var).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, tuple: &[i64]) -> Option<i64> {
        self.rows.get(tuple).copied()
    }

    /// The value of a tuple, with the mode's sentinel for absent rows.
    pub fn utility(&self, tuple: &[i64]) -> Utility {
        self.get(tuple).map(Utility::Finite).unwrap_or(self.mode.infeasible())
    }

    /// Rows in ascending lexicographic tuple order.
    pub fn rows(&self) -> impl Iterator<Item = (&[i64], i64)> {
        self.rows.iter().map(|(t, u)| (t.as_slice(), *u))
    }

    /// Number of cells of the equivalent dense matrix.
    pub fn dense_cells(&self) -> u64 {
        self.scope
            .iter()
            .fold(1u64, |acc, s| acc.saturating_mul(s.domain.size()))
    }

    fn position(&self, var: VarId) -> Option<usize> {
        self.scope.iter().position(|s| s.var == var)
    }

    /// The same table with its scope listed in `order`.
    pub fn reordered(&self, order: &[VarId]) -> Result<UtilityTable, TableError> {
        if order.len() != self.scope.len() {
            return Err(TableError::ScopeMismatch);
        }
        let perm = order
            .iter()
            .map(|v| self.position(*v).ok_or(TableError::ScopeMismatch))
            .collect::<Result<Vec<_>, _>>()?;
        let scope = perm.iter().map(|&i| self.scope[i]).collect();
        let rows = self
            .rows
            .iter()
            .map(|(t, u)| (perm.iter().map(|&i| t[i]).collect(), *u))
            .collect();
        Ok(UtilityTable {
            mode: self.mode,
            scope,
            rows,
        })
    }
}

/// Sparse JOIN: scope is the union of both scopes in ascending variable
/// order, values add, and a tuple exists only where both inputs have one.
pub fn join(u: &UtilityTable, v: &UtilityTable) -> Result<UtilityTable, TableError> {
    join_counted(u, v, &mut 0)
}

pub fn join_counted(u: &UtilityTable, v: &UtilityTable, work: &mut u64) -> Result<UtilityTable, TableError> {
    if u.mode != v.mode {
        return Err(TableError::ModeMismatch);
    }
    let mut scope: Vec<ScopeVar> = u.scope.clone();
    for s in &v.scope {
        if u.position(s.var).is_none() {
            scope.push(*s);
        }
    }
    scope.sort_by_key(|s| s.var);

    // where each output column comes from: (from u?, index)
    let source: Vec<(bool, usize)> = scope
        .iter()
        .map(|s| match u.position(s.var) {
            Some(i) => (true, i),
            None => (false, v.position(s.var).unwrap()),
        })
        .collect();
    let shared: Vec<(usize, usize)> = v
        .scope
        .iter()
        .enumerate()
        .filter_map(|(j, s)| u.position(s.var).map(|i| (i, j)))
        .collect();

    let mut index: HashMap<Vec<i64>, Vec<(&[i64], i64)>> = HashMap::new();
    for (t, val) in v.rows() {
        let key = shared.iter().map(|&(_, j)| t[j]).collect();
        index.entry(key).or_default().push((t, val));
    }

    let mut out = UtilityTable::new(u.mode, scope);
    let mut key = Vec::with_capacity(shared.len());
    for (tu, uval) in u.rows() {
        key.clear();
        key.extend(shared.iter().map(|&(i, _)| tu[i]));
        let Some(matches) = index.get(&key) else { continue };
        for (tv, vval) in matches {
            let tuple = source
                .iter()
                .map(|&(from_u, i)| if from_u { tu[i] } else { tv[i] })
                .collect();
            let sum = uval.checked_add(*vval).ok_or(TableError::Overflow)?;
            out.rows.insert(tuple, sum);
        }
    }
    *work += (u.len() + v.len() + out.len()) as u64;
    Ok(out)
}

/// PROJECTION: optimizes `eliminate` away. A reduced tuple keeps the best
/// value among its surviving extensions.
pub fn project(u: &UtilityTable, eliminate: &[VarId]) -> Result<UtilityTable, TableError> {
    project_counted(u, eliminate, &mut 0)
}

pub fn project_counted(u: &UtilityTable, eliminate: &[VarId], work: &mut u64) -> Result<UtilityTable, TableError> {
    for v in eliminate {
        if u.position(*v).is_none() {
            return Err(TableError::VariableNotInScope(*v));
        }
    }
    let keep: Vec<usize> = (0..u.scope.len())
        .filter(|&i| !eliminate.contains(&u.scope[i].var))
        .collect();
    let scope = keep.iter().map(|&i| u.scope[i]).collect();
    let mut rows: BTreeMap<Vec<i64>, i64> = BTreeMap::new();
    for (t, val) in u.rows() {
        let key: Vec<i64> = keep.iter().map(|&i| t[i]).collect();
        rows.entry(key)
            .and_modify(|best| {
                if u.mode.improves(val, *best) {
                    *best = val;
                }
            })
            .or_insert(val);
    }
    *work += u.len() as u64;
    Ok(UtilityTable {
        mode: u.mode,
        scope,
        rows,
    })
}

/// Best row extending `fixed`. Ties go to the lexicographically smallest
/// tuple in the table's scope order. Returns the values of the variables
/// not in `fixed`, and the row's utility.
pub fn argbest(u: &UtilityTable, fixed: &Assignment) -> Result<(Assignment, Utility), TableError> {
    argbest_counted(u, fixed, &mut 0)
}

pub fn argbest_counted(
    u: &UtilityTable,
    fixed: &Assignment,
    work: &mut u64,
) -> Result<(Assignment, Utility), TableError> {
    let mut pinned = Vec::new();
    for (var, value) in fixed.iter() {
        let i = u.position(var).ok_or(TableError::VariableNotInScope(var))?;
        pinned.push((i, value));
    }
    *work += u.len() as u64;
    let mut best: Option<(&[i64], i64)> = None;
    // rows iterate in lexicographic order, so the first optimum wins ties
    for (t, val) in u.rows() {
        if !pinned.iter().all(|&(i, v)| t[i] == v) {
            continue;
        }
        if best.is_none_or(|(_, b)| u.mode.improves(val, b)) {
            best = Some((t, val));
        }
    }
    let (tuple, val) = best.ok_or(TableError::NoFeasibleExtension)?;
    let free = u
        .scope
        .iter()
        .zip(tuple)
        .filter(|(s, _)| fixed.get(s.var).is_none())
        .map(|(s, v)| (s.var, *v))
        .collect();
    Ok((free, Utility::Finite(val)))
}

/// Turns a constraint into a sparse table over its declared scope order,
/// dropping every infeasible tuple.
pub fn materialize(problem: &Dcop, c: ConstraintId) -> Result<UtilityTable, ModelError> {
    let con = problem.constraint(c);
    let scope: Vec<ScopeVar> = con
        .scope
        .iter()
        .map(|v| ScopeVar {
            var: *v,
            domain: problem.var(*v).domain,
        })
        .collect();
    let mut table = UtilityTable::new(problem.mode, scope);
    let mut keep = |tuple: Vec<i64>, u: Utility| -> Result<(), ModelError> {
        match u {
            Utility::Finite(x) => {
                table.rows.insert(tuple, x);
                Ok(())
            }
            s if s == problem.mode.infeasible() => Ok(()),
            _ => Err(ModelError::ForbiddenSentinel(con.name.clone())),
        }
    };
    match &con.body {
        ConstraintBody::Extensional(rows) => {
            for (tuple, u) in rows.iter() {
                keep(tuple.to_vec(), u)?;
            }
        }
        ConstraintBody::Intensional(_) => {
            let domains: Vec<Domain> = con.scope.iter().map(|v| problem.var(*v).domain).collect();
            for tuple in Tuples::new(&domains) {
                let u = problem.evaluate_constraint(c, &tuple)?;
                keep(tuple, u)?;
            }
        }
    }
    Ok(table)
}

/// Every tuple of a domain product, in lexicographic order.
pub struct Tuples {
    domains: Vec<Domain>,
    next: Option<Vec<i64>>,
}

impl Tuples {
    pub fn new(domains: &[Domain]) -> Self {
        let next = if domains.iter().any(|d| d.size() == 0) {
            None
        } else {
            Some(domains.iter().map(|d| d.lb).collect())
        };
        Tuples {
            domains: domains.to_vec(),
            next,
        }
    }
}

impl Iterator for Tuples {
    type Item = Vec<i64>;

    fn next(&mut self) -> Option<Vec<i64>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        for i in (0..succ.len()).rev() {
            if succ[i] < self.domains[i].ub {
                succ[i] += 1;
                self.next = Some(succ);
                return Some(current);
            }
            succ[i] = self.domains[i].lb;
        }
        Some(current)
    }
}
