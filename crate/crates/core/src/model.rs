//! The DCOP instance: agents, interval-domain variables, constraints, the
//! optimization mode, and the agent-level constraint graph.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::expr::{EvalError, Expr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(pub usize);

/// Variables are identified by declaration index; "ascending variable id"
/// everywhere in the crate means ascending declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConstraintId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Maximize,
    Minimize,
}

impl Mode {
    /// The absorbing value of an infeasible tuple in this mode.
    pub fn infeasible(self) -> Utility {
        match self {
            Mode::Maximize => Utility::NegInf,
            Mode::Minimize => Utility::PosInf,
        }
    }

    /// The sentinel that must never appear in this mode.
    pub fn forbidden(self) -> Utility {
        match self {
            Mode::Maximize => Utility::PosInf,
            Mode::Minimize => Utility::NegInf,
        }
    }

    /// True when `a` is strictly better than `b`.
    pub fn improves(self, a: i64, b: i64) -> bool {
        match self {
            Mode::Maximize => a > b,
            Mode::Minimize => a < b,
        }
    }

    pub fn flip(self) -> Mode {
        match self {
            Mode::Maximize => Mode::Minimize,
            Mode::Minimize => Mode::Maximize,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Mode::Maximize => "max",
            Mode::Minimize => "min",
        }
    }
}

/// A utility (or cost) value: a 64-bit integer or one of the two
/// infinities. The derived order is `NegInf < Finite(_) < PosInf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Utility {
    NegInf,
    Finite(i64),
    PosInf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum UtilityError {
    #[error("sum of opposite infinities")]
    OppositeInfinities,
    #[error("utility overflow")]
    Overflow,
}

impl Utility {
    pub const ZERO: Utility = Utility::Finite(0);

    /// Absorbing addition. Opposite infinities cannot meet in a well-formed
    /// instance and are reported as an error.
    pub fn try_add(self, other: Utility) -> Result<Utility, UtilityError> {
        use Utility::*;
        match (self, other) {
            (Finite(a), Finite(b)) => a.checked_add(b).map(Finite).ok_or(UtilityError::Overflow),
            (NegInf, PosInf) | (PosInf, NegInf) => Err(UtilityError::OppositeInfinities),
            (NegInf, _) | (_, NegInf) => Ok(NegInf),
            (PosInf, _) | (_, PosInf) => Ok(PosInf),
        }
    }

    pub fn finite(self) -> Option<i64> {
        match self {
            Utility::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Utility::Finite(_))
    }

    pub fn negate(self) -> Utility {
        match self {
            Utility::Finite(v) => Utility::Finite(-v),
            Utility::NegInf => Utility::PosInf,
            Utility::PosInf => Utility::NegInf,
        }
    }
}

impl fmt::Display for Utility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Utility::Finite(v) => write!(f, "{v}"),
            Utility::NegInf => f.write_str("-inf"),
            Utility::PosInf => f.write_str("+inf"),
        }
    }
}

/// Inclusive integer interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Domain {
    pub lb: i64,
    pub ub: i64,
}

impl Domain {
    pub fn new(lb: i64, ub: i64) -> Self {
        Domain { lb, ub }
    }

    pub fn size(&self) -> u64 {
        if self.ub < self.lb {
            0
        } else {
            (self.ub as i128 - self.lb as i128 + 1) as u64
        }
    }

    pub fn contains(&self, v: i64) -> bool {
        self.lb <= v && v <= self.ub
    }

    pub fn values(&self) -> std::ops::RangeInclusive<i64> {
        self.lb..=self.ub
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub owner: AgentId,
    pub domain: Domain,
}

/// Listed rows of an extensional constraint, in declaration order.
/// Unlisted tuples are infeasible.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExtensionalRows {
    rows: Vec<(Vec<i64>, Utility)>,
    index: HashMap<Vec<i64>, usize>,
}

impl ExtensionalRows {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a row; a repeated tuple overwrites the earlier utility and
    /// returns `false`.
    pub fn push(&mut self, tuple: Vec<i64>, utility: Utility) -> bool {
        if let Some(&i) = self.index.get(&tuple) {
            self.rows[i].1 = utility;
            return false;
        }
        self.index.insert(tuple.clone(), self.rows.len());
        self.rows.push((tuple, utility));
        true
    }

    pub fn get(&self, tuple: &[i64]) -> Option<Utility> {
        self.index.get(tuple).map(|&i| self.rows[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[i64], Utility)> {
        self.rows.iter().map(|(t, u)| (t.as_slice(), *u))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl FromIterator<(Vec<i64>, Utility)> for ExtensionalRows {
    fn from_iter<I: IntoIterator<Item = (Vec<i64>, Utility)>>(iter: I) -> Self {
        let mut rows = ExtensionalRows::new();
        for (t, u) in iter {
            rows.push(t, u);
        }
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstraintBody {
    Extensional(ExtensionalRows),
    Intensional(Expr),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub name: String,
    /// Tuple order of the constraint's rows.
    pub scope: Vec<VarId>,
    pub body: ConstraintBody,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("assignment leaves variable `{0}` unassigned")]
    IncompleteAssignment(String),
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("constraint `{constraint}`: {source}")]
    Evaluation {
        constraint: String,
        #[source]
        source: EvalError,
    },
    #[error("constraint `{0}` produced the sentinel forbidden in this mode")]
    ForbiddenSentinel(String),
    #[error("{0}")]
    Arithmetic(#[from] UtilityError),
}

/// Ordered map from variable to value.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Assignment(BTreeMap<VarId, i64>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, var: VarId, value: i64) -> Option<i64> {
        self.0.insert(var, value)
    }

    pub fn get(&self, var: VarId) -> Option<i64> {
        self.0.get(&var).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, i64)> + '_ {
        self.0.iter().map(|(k, v)| (*k, *v))
    }

    pub fn extend(&mut self, other: &Assignment) {
        self.0.extend(other.0.iter().map(|(k, v)| (*k, *v)));
    }

    /// Keeps only the listed variables.
    pub fn restricted_to(&self, vars: &[VarId]) -> Assignment {
        Assignment(vars.iter().filter_map(|v| self.get(*v).map(|x| (*v, x))).collect())
    }
}

impl FromIterator<(VarId, i64)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (VarId, i64)>>(iter: I) -> Self {
        Assignment(iter.into_iter().collect())
    }
}

/// A violation of the instance invariants, reported by [`Dcop::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Defect {
    NoAgents,
    DuplicateAgent(String),
    DuplicateVariable(String),
    DuplicateConstraint(String),
    UnknownOwner {
        variable: String,
    },
    EmptyDomain {
        variable: String,
    },
    AgentWithoutVariables(String),
    EmptyScope {
        constraint: String,
    },
    UnboundScopeVariable {
        constraint: String,
    },
    RepeatedScopeVariable {
        constraint: String,
        variable: String,
    },
    RowArity {
        constraint: String,
        expected: usize,
        found: usize,
    },
    RowOutOfDomain {
        constraint: String,
        variable: String,
        value: i64,
    },
    ForbiddenSentinel {
        constraint: String,
    },
    ExpressionOutsideScope {
        constraint: String,
        identifier: String,
    },
    Disconnected,
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Defect::NoAgents => write!(f, "no agents declared"),
            Defect::DuplicateAgent(a) => write!(f, "duplicate id: agent `{a}`"),
            Defect::DuplicateVariable(v) => write!(f, "duplicate id: variable `{v}`"),
            Defect::DuplicateConstraint(c) => write!(f, "duplicate id: constraint `{c}`"),
            Defect::UnknownOwner { variable } => write!(f, "unknown owner of variable `{variable}`"),
            Defect::EmptyDomain { variable } => write!(f, "empty domain for variable `{variable}`"),
            Defect::AgentWithoutVariables(a) => write!(f, "agent `{a}` owns no variables"),
            Defect::EmptyScope { constraint } => write!(f, "constraint `{constraint}` has an empty scope"),
            Defect::UnboundScopeVariable { constraint } => {
                write!(f, "unbound scope variable in constraint `{constraint}`")
            }
            Defect::RepeatedScopeVariable { constraint, variable } => {
                write!(f, "constraint `{constraint}` lists `{variable}` twice in its scope")
            }
            Defect::RowArity {
                constraint,
                expected,
                found,
            } => write!(
                f,
                "constraint `{constraint}` has a row of arity {found}, expected {expected}"
            ),
            Defect::RowOutOfDomain {
                constraint,
                variable,
                value,
            } => write!(
                f,
                "constraint `{constraint}` has value {value} outside the domain of `{variable}`"
            ),
            Defect::ForbiddenSentinel { constraint } => write!(
                f,
                "constraint `{constraint}` uses the infinity forbidden by the optimization mode"
            ),
            Defect::ExpressionOutsideScope { constraint, identifier } => write!(
                f,
                "constraint `{constraint}` references `{identifier}` outside its scope"
            ),
            Defect::Disconnected => write!(f, "constraint graph is disconnected"),
        }
    }
}

/// The agent-level constraint graph: agents are adjacent when some
/// constraint's scope includes variables owned by both.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintGraph {
    adjacency: Vec<BTreeSet<AgentId>>,
}

impl ConstraintGraph {
    pub fn neighbors(&self, a: AgentId) -> &BTreeSet<AgentId> {
        &self.adjacency[a.0]
    }

    pub fn agent_count(&self) -> usize {
        self.adjacency.len()
    }

    /// Each undirected edge once, as `(low, high)`.
    pub fn edges(&self) -> Vec<(AgentId, AgentId)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, ns)| ns.iter().filter(move |b| b.0 > a).map(move |b| (AgentId(a), *b)))
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.adjacency.len();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(a) = stack.pop() {
            for b in &self.adjacency[a] {
                if !seen[b.0] {
                    seen[b.0] = true;
                    stack.push(b.0);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dcop {
    pub mode: Mode,
    pub agents: Vec<String>,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
}

impl Dcop {
    pub fn agent_id(&self, name: &str) -> Option<AgentId> {
        self.agents.iter().position(|a| a == name).map(AgentId)
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn constraint_id(&self, name: &str) -> Option<ConstraintId> {
        self.constraints.iter().position(|c| c.name == name).map(ConstraintId)
    }

    pub fn agent_name(&self, a: AgentId) -> &str {
        &self.agents[a.0]
    }

    pub fn var(&self, v: VarId) -> &Variable {
        &self.variables[v.0]
    }

    pub fn constraint(&self, c: ConstraintId) -> &Constraint {
        &self.constraints[c.0]
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = AgentId> {
        (0..self.agents.len()).map(AgentId)
    }

    pub fn var_ids(&self) -> impl Iterator<Item = VarId> {
        (0..self.variables.len()).map(VarId)
    }

    pub fn constraint_ids(&self) -> impl Iterator<Item = ConstraintId> {
        (0..self.constraints.len()).map(ConstraintId)
    }

    /// Variables owned by `a`, ascending.
    pub fn owned_vars(&self, a: AgentId) -> Vec<VarId> {
        self.var_ids().filter(|v| self.var(*v).owner == a).collect()
    }

    /// Distinct owners of a constraint's scope.
    pub fn scope_owners(&self, c: ConstraintId) -> BTreeSet<AgentId> {
        self.constraint(c).scope.iter().map(|v| self.var(*v).owner).collect()
    }

    pub fn constraint_graph(&self) -> ConstraintGraph {
        let mut adjacency = vec![BTreeSet::new(); self.agents.len()];
        for c in self.constraint_ids() {
            let owners: Vec<AgentId> = self
                .scope_owners(c)
                .into_iter()
                .filter(|a| a.0 < self.agents.len())
                .collect();
            for &a in &owners {
                for &b in &owners {
                    if a != b {
                        adjacency[a.0].insert(b);
                    }
                }
            }
        }
        ConstraintGraph { adjacency }
    }

    pub fn neighbors(&self, a: AgentId) -> Result<BTreeSet<AgentId>, ModelError> {
        if a.0 >= self.agents.len() {
            return Err(ModelError::UnknownAgent(format!("#{}", a.0)));
        }
        Ok(self.constraint_graph().adjacency.swap_remove(a.0))
    }

    /// Utility of constraint `c` at `tuple` (values in scope order).
    pub fn evaluate_constraint(&self, c: ConstraintId, tuple: &[i64]) -> Result<Utility, ModelError> {
        let con = self.constraint(c);
        let u = match &con.body {
            ConstraintBody::Extensional(rows) => rows.get(tuple).unwrap_or(self.mode.infeasible()),
            ConstraintBody::Intensional(expr) => {
                let lookup = |name: &str| {
                    con.scope
                        .iter()
                        .position(|v| self.var(*v).name == name)
                        .map(|i| tuple[i])
                };
                expr.evaluate(&lookup).map_err(|source| ModelError::Evaluation {
                    constraint: con.name.clone(),
                    source,
                })?
            }
        };
        if u == self.mode.forbidden() {
            return Err(ModelError::ForbiddenSentinel(con.name.clone()));
        }
        Ok(u)
    }

    /// Sum of every constraint at the projection of a complete assignment.
    pub fn total_utility(&self, x: &Assignment) -> Result<Utility, ModelError> {
        for v in self.var_ids() {
            if x.get(v).is_none() {
                return Err(ModelError::IncompleteAssignment(self.var(v).name.clone()));
            }
        }
        let mut total = Utility::ZERO;
        let mut tuple = Vec::new();
        for c in self.constraint_ids() {
            tuple.clear();
            tuple.extend(self.constraint(c).scope.iter().map(|v| x.get(*v).unwrap()));
            total = total.try_add(self.evaluate_constraint(c, &tuple)?)?;
        }
        Ok(total)
    }

    /// All invariant violations; an empty list means every engine accepts
    /// the instance.
    pub fn validate(&self) -> Vec<Defect> {
        let mut defects = Vec::new();
        if self.agents.is_empty() {
            defects.push(Defect::NoAgents);
        }
        let mut seen = BTreeSet::new();
        for a in &self.agents {
            if !seen.insert(a.as_str()) {
                defects.push(Defect::DuplicateAgent(a.clone()));
            }
        }
        let mut seen = BTreeSet::new();
        for v in &self.variables {
            if !seen.insert(v.name.as_str()) {
                defects.push(Defect::DuplicateVariable(v.name.clone()));
            }
            if v.owner.0 >= self.agents.len() {
                defects.push(Defect::UnknownOwner {
                    variable: v.name.clone(),
                });
            }
            if v.domain.lb > v.domain.ub {
                defects.push(Defect::EmptyDomain {
                    variable: v.name.clone(),
                });
            }
        }
        for a in self.agent_ids() {
            if !self.variables.iter().any(|v| v.owner == a) {
                defects.push(Defect::AgentWithoutVariables(self.agent_name(a).to_string()));
            }
        }
        let mut seen = BTreeSet::new();
        for con in &self.constraints {
            if !seen.insert(con.name.as_str()) {
                defects.push(Defect::DuplicateConstraint(con.name.clone()));
            }
            defects.extend(self.constraint_defects(con));
        }
        let structurally_sound = defects.is_empty();
        if structurally_sound && !self.constraint_graph().is_connected() {
            defects.push(Defect::Disconnected);
        }
        defects
    }

    fn constraint_defects(&self, con: &Constraint) -> Vec<Defect> {
        let mut out = Vec::new();
        let name = || con.name.clone();
        if con.scope.is_empty() {
            out.push(Defect::EmptyScope { constraint: name() });
        }
        if con.scope.iter().any(|v| v.0 >= self.variables.len()) {
            out.push(Defect::UnboundScopeVariable { constraint: name() });
            return out;
        }
        let mut seen = BTreeSet::new();
        for v in &con.scope {
            if !seen.insert(*v) {
                out.push(Defect::RepeatedScopeVariable {
                    constraint: name(),
                    variable: self.var(*v).name.clone(),
                });
            }
        }
        match &con.body {
            ConstraintBody::Extensional(rows) => {
                for (tuple, u) in rows.iter() {
                    if tuple.len() != con.scope.len() {
                        out.push(Defect::RowArity {
                            constraint: name(),
                            expected: con.scope.len(),
                            found: tuple.len(),
                        });
                        continue;
                    }
                    for (v, value) in con.scope.iter().zip(tuple) {
                        let var = self.var(*v);
                        if !var.domain.contains(*value) {
                            out.push(Defect::RowOutOfDomain {
                                constraint: name(),
                                variable: var.name.clone(),
                                value: *value,
                            });
                        }
                    }
                    if u == self.mode.forbidden() {
                        out.push(Defect::ForbiddenSentinel { constraint: name() });
                    }
                }
            }
            ConstraintBody::Intensional(expr) => {
                for ident in expr.free_variables() {
                    if !con.scope.iter().any(|v| self.var(*v).name == ident) {
                        out.push(Defect::ExpressionOutsideScope {
                            constraint: name(),
                            identifier: ident,
                        });
                    }
                }
            }
        }
        out
    }

    /// The same problem with every utility negated and the mode flipped.
    pub fn dual(&self) -> Dcop {
        let constraints = self
            .constraints
            .iter()
            .map(|c| Constraint {
                name: c.name.clone(),
                scope: c.scope.clone(),
                body: match &c.body {
                    ConstraintBody::Extensional(rows) => {
                        ConstraintBody::Extensional(rows.iter().map(|(t, u)| (t.to_vec(), u.negate())).collect())
                    }
                    ConstraintBody::Intensional(e) => ConstraintBody::Intensional(Expr::Neg(Box::new(e.clone()))),
                },
            })
            .collect();
        Dcop {
            mode: self.mode.flip(),
            agents: self.agents.clone(),
            variables: self.variables.clone(),
            constraints,
        }
    }

    /// Number of complete assignments, saturating at `u64::MAX`.
    pub fn search_space(&self) -> u64 {
        self.variables
            .iter()
            .fold(1u64, |acc, v| acc.saturating_mul(v.domain.size()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuildError {
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
}

/// Name-based construction of a [`Dcop`].
#[derive(Debug, Clone)]
pub struct DcopBuilder {
    dcop: Dcop,
}

impl DcopBuilder {
    pub fn new(mode: Mode) -> Self {
        DcopBuilder {
            dcop: Dcop {
                mode,
                agents: Vec::new(),
                variables: Vec::new(),
                constraints: Vec::new(),
            },
        }
    }

    pub fn agent(&mut self, name: &str) -> Result<AgentId, BuildError> {
        if self.dcop.agent_id(name).is_some() {
            return Err(BuildError::DuplicateId(name.into()));
        }
        self.dcop.agents.push(name.into());
        Ok(AgentId(self.dcop.agents.len() - 1))
    }

    pub fn variable(&mut self, name: &str, owner: &str, lb: i64, ub: i64) -> Result<VarId, BuildError> {
        if self.dcop.var_id(name).is_some() {
            return Err(BuildError::DuplicateId(name.into()));
        }
        let owner = self
            .dcop
            .agent_id(owner)
            .ok_or_else(|| BuildError::UnknownAgent(owner.into()))?;
        self.dcop.variables.push(Variable {
            name: name.into(),
            owner,
            domain: Domain::new(lb, ub),
        });
        Ok(VarId(self.dcop.variables.len() - 1))
    }

    pub fn constraint(&mut self, name: &str, scope: &[&str], body: ConstraintBody) -> Result<ConstraintId, BuildError> {
        if self.dcop.constraint_id(name).is_some() {
            return Err(BuildError::DuplicateId(name.into()));
        }
        let scope = scope
            .iter()
            .map(|v| {
                self.dcop
                    .var_id(v)
                    .ok_or_else(|| BuildError::UnknownVariable((*v).into()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.dcop.constraints.push(Constraint {
            name: name.into(),
            scope,
            body,
        });
        Ok(ConstraintId(self.dcop.constraints.len() - 1))
    }

    pub fn extensional(
        &mut self,
        name: &str,
        scope: &[&str],
        rows: impl IntoIterator<Item = (Vec<i64>, Utility)>,
    ) -> Result<ConstraintId, BuildError> {
        self.constraint(name, scope, ConstraintBody::Extensional(rows.into_iter().collect()))
    }

    pub fn intensional(&mut self, name: &str, scope: &[&str], expr: Expr) -> Result<ConstraintId, BuildError> {
        self.constraint(name, scope, ConstraintBody::Intensional(expr))
    }

    pub fn build(self) -> Dcop {
        self.dcop
    }
}

impl PartialOrd for Assignment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Assignment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.iter().cmp(other.0.iter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::triangle as example1;

    fn assign(p: &Dcop, values: &[(&str, i64)]) -> Assignment {
        values.iter().map(|(n, v)| (p.var_id(n).unwrap(), *v)).collect()
    }

    #[test]
    fn example_instance_is_valid() {
        assert_eq!(example1().validate(), vec![]);
    }

    #[test]
    fn unknown_owner_is_reported() {
        let mut p = example1();
        p.variables[1].owner = AgentId(9);
        assert!(p.validate().contains(&Defect::UnknownOwner { variable: "x2".into() }));
    }

    #[test]
    fn unbound_scope_variable_is_reported() {
        let mut p = example1();
        p.constraints[0].scope[1] = VarId(42);
        let defects = p.validate();
        assert!(defects.contains(&Defect::UnboundScopeVariable {
            constraint: "x1_cons_x2".into()
        }));
        assert_eq!(
            defects[0].to_string(),
            "unbound scope variable in constraint `x1_cons_x2`"
        );
    }

    #[test]
    fn disconnected_is_reported() {
        let mut b = DcopBuilder::new(Mode::Maximize);
        b.agent("a").unwrap();
        b.agent("b").unwrap();
        b.variable("x", "a", 0, 1).unwrap();
        b.variable("y", "b", 0, 1).unwrap();
        b.extensional("cx", &["x"], [(vec![0], Utility::ZERO)]).unwrap();
        assert_eq!(b.build().validate(), vec![Defect::Disconnected]);
    }

    #[test]
    fn forbidden_sentinel_is_reported() {
        let mut p = example1();
        if let ConstraintBody::Extensional(rows) = &mut p.constraints[0].body {
            rows.push(vec![0, 0], Utility::PosInf);
        }
        assert_eq!(
            p.validate(),
            vec![Defect::ForbiddenSentinel {
                constraint: "x1_cons_x2".into()
            }]
        );
    }

    #[test]
    fn total_utility_of_example_assignments() {
        let p = example1();
        let x = assign(&p, &[("x1", 1), ("x2", 0), ("x3", 0)]);
        assert_eq!(p.total_utility(&x), Ok(Utility::Finite(45)));
        let x = assign(&p, &[("x1", 0), ("x2", 0), ("x3", 0)]);
        assert_eq!(p.total_utility(&x), Ok(Utility::Finite(15)));
        let x = assign(&p, &[("x1", 0), ("x2", 0)]);
        assert_eq!(p.total_utility(&x), Err(ModelError::IncompleteAssignment("x3".into())));
    }

    #[test]
    fn infeasible_row_absorbs() {
        let mut p = example1();
        if let ConstraintBody::Extensional(rows) = &mut p.constraints[2].body {
            rows.push(vec![0, 0], Utility::NegInf);
        }
        let x = assign(&p, &[("x1", 1), ("x2", 0), ("x3", 0)]);
        assert_eq!(p.total_utility(&x), Ok(Utility::NegInf));
    }

    #[test]
    fn neighbors_of_triangle_and_singleton() {
        let p = example1();
        let a1 = p.agent_id("a1").unwrap();
        let want: BTreeSet<_> = ["a2", "a3"].iter().map(|n| p.agent_id(n).unwrap()).collect();
        assert_eq!(p.neighbors(a1).unwrap(), want);
        assert!(p.neighbors(AgentId(3)).is_err());

        let mut b = DcopBuilder::new(Mode::Maximize);
        b.agent("solo").unwrap();
        b.variable("x", "solo", 0, 3).unwrap();
        let single = b.build();
        assert!(single.neighbors(AgentId(0)).unwrap().is_empty());
    }

    #[test]
    fn star_center_sees_all_leaves() {
        let mut b = DcopBuilder::new(Mode::Maximize);
        b.agent("hub").unwrap();
        b.variable("h", "hub", 0, 1).unwrap();
        for i in 0..4 {
            let (a, x) = (format!("leaf{i}"), format!("l{i}"));
            b.agent(&a).unwrap();
            b.variable(&x, &a, 0, 1).unwrap();
            b.extensional(&format!("c{i}"), &["h", &x], [(vec![0, 0], Utility::ZERO)])
                .unwrap();
        }
        let p = b.build();
        assert_eq!(p.neighbors(AgentId(0)).unwrap().len(), 4);
        assert_eq!(p.neighbors(AgentId(1)).unwrap().len(), 1);
    }

    #[test]
    fn graph_is_triangle_and_ignores_single_owner_scopes() {
        let p = example1();
        let g = p.constraint_graph();
        assert_eq!(
            g.edges(),
            vec![
                (AgentId(0), AgentId(1)),
                (AgentId(0), AgentId(2)),
                (AgentId(1), AgentId(2))
            ]
        );

        let mut b = DcopBuilder::new(Mode::Maximize);
        b.agent("a").unwrap();
        b.variable("x", "a", 0, 1).unwrap();
        b.variable("y", "a", 0, 1).unwrap();
        b.extensional("c", &["x", "y"], [(vec![0, 0], Utility::ZERO)]).unwrap();
        assert!(b.build().constraint_graph().edges().is_empty());
    }

    #[test]
    fn builder_rejects_duplicates_and_unknowns() {
        let mut b = DcopBuilder::new(Mode::Maximize);
        b.agent("a").unwrap();
        assert_eq!(b.agent("a"), Err(BuildError::DuplicateId("a".into())));
        assert_eq!(b.variable("x", "zz", 0, 1), Err(BuildError::UnknownAgent("zz".into())));
        b.variable("x", "a", 0, 1).unwrap();
        assert_eq!(
            b.extensional("c", &["x", "nope"], []),
            Err(BuildError::UnknownVariable("nope".into()))
        );
    }

    #[test]
    fn utility_addition_rules() {
        use Utility::*;
        assert_eq!(NegInf.try_add(Finite(3)), Ok(NegInf));
        assert_eq!(Finite(3).try_add(PosInf), Ok(PosInf));
        assert_eq!(NegInf.try_add(PosInf), Err(UtilityError::OppositeInfinities));
        assert_eq!(Finite(i64::MAX).try_add(Finite(1)), Err(UtilityError::Overflow));
        assert!(NegInf < Finite(i64::MIN) && Finite(i64::MAX) < PosInf);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_utility(mode: Mode) -> impl Strategy<Value = Utility> {
            let inf = mode.infeasible();
            prop_oneof![4 => (-100i64..100).prop_map(Utility::Finite), 1 => Just(inf)]
        }

        proptest! {
            #[test]
            fn sum_is_order_independent(
                max in any::<bool>(),
                values in prop::collection::vec(arb_utility(Mode::Maximize), 0..12),
                seed in any::<u64>(),
            ) {
                let mode = if max { Mode::Maximize } else { Mode::Minimize };
                let values: Vec<Utility> = if max { values } else { values.into_iter().map(Utility::negate).collect() };
                let sum = |vs: &[Utility]| vs.iter().try_fold(Utility::ZERO, |acc, u| acc.try_add(*u)).unwrap();
                let mut shuffled = values.clone();
                let n = shuffled.len();
                for i in 0..n {
                    let j = (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) % n as u64) as usize;
                    shuffled.swap(i, j);
                }
                let total = sum(&values);
                prop_assert_eq!(total, sum(&shuffled));
                prop_assert_ne!(total, mode.forbidden());
            }
        }
    }
}
